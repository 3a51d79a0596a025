//! End-to-end operations behind the command line: simulate, discover,
//! predict and report. Every command writes its outputs plus a manifest
//! echoing the effective configuration into an output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{auto_drop_columns, correlation_screen, CandidateCatalog, LibraryBuilder};
use crate::config::{DiscoverConfig, PredictConfig, ReportConfig, RunConfig, RunManifest, SimulateConfig};
use crate::dde::simulate;
use crate::error::{Error, Result};
use crate::gibbs::{regression_rows, run_chain, ChainRecord};
use crate::model::SparseDelayModel;
use crate::posterior::{parameter_error, summarize, DiscoveryReport};
use crate::predictor::{phase_portrait, predict, predict_with_uncertainty};
use crate::signal::{add_noise, prepare, NoiseSpec};
use crate::trajectory::{NoiseRecord, TrajectoryData, TrajectoryManifest};

/// Clean and noisy trajectories of a configured system.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub model: SparseDelayModel,
    pub clean: TrajectoryData,
    pub noisy: TrajectoryData,
}

pub fn simulate_data(config: &SimulateConfig, seed: u64) -> Result<SimulatedData> {
    let model = config.model()?;
    let clean = simulate(&model, &config.history, config.t_end, config.dt)?;
    let noisy = add_noise(
        &clean,
        &NoiseSpec {
            fraction: config.noise,
            seed,
        },
    )?;
    Ok(SimulatedData { model, clean, noisy })
}

/// Outcome of a discovery run.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub report: DiscoveryReport,
    /// One chain per equation.
    pub chains: Vec<ChainRecord>,
    /// Catalog after dropped candidates were removed.
    pub catalog: CandidateCatalog,
}

/// Applies the drop list and the correlation gate. Returns the catalog to
/// sample with and the names removed.
pub fn screen_catalog(
    prepared: &TrajectoryData,
    config: &DiscoverConfig,
) -> Result<(CandidateCatalog, Vec<String>)> {
    let mut catalog = CandidateCatalog::parse(&config.catalog)?;
    catalog.validate_for(prepared.m())?;
    let mut dropped = Vec::new();
    if !config.drop.is_empty() {
        let idx = config
            .drop
            .iter()
            .map(|name| {
                let term = crate::term::parse_term(name)?;
                catalog
                    .index_of(&term.to_string())
                    .ok_or_else(|| Error::Config(format!("discover.drop: `{name}` is not in the catalog")))
            })
            .collect::<Result<Vec<_>>>()?;
        dropped.extend(idx.iter().map(|&i| catalog.names()[i].clone()));
        catalog = catalog.without(&idx)?;
    }

    // screened once, at the shortest delay of the window
    let builder = LibraryBuilder::new(prepared, &catalog, 0)?;
    let rows = regression_rows(prepared.len(), &config.sampler());
    let lib = builder.library(config.window.start, rows)?;
    let pairs = correlation_screen(&lib, config.correlation_threshold);
    if !pairs.is_empty() {
        if !config.auto_drop {
            return Err(Error::CorrelatedCandidates(pairs));
        }
        let idx = auto_drop_columns(&pairs);
        for p in &pairs {
            warn!(
                "correlated candidates `{}` and `{}` (r = {:.4})",
                p.first_name, p.second_name, p.correlation
            );
        }
        for &i in &idx {
            warn!("auto_drop removes `{}`", catalog.names()[i]);
        }
        dropped.extend(idx.iter().map(|&i| catalog.names()[i].clone()));
        catalog = catalog.without(&idx)?;
    }
    Ok((catalog, dropped))
}

/// Smooths and differentiates `data`, screens the catalog and runs one
/// chain per state equation.
pub fn discover(data: &TrajectoryData, config: &DiscoverConfig, seed: u64) -> Result<Discovery> {
    config.validate()?;
    let prepared = prepare(data, config.smooth.then_some(&config.filter))?;
    let (catalog, dropped) = screen_catalog(&prepared, config)?;
    let sampler = config.sampler();
    let mut chains = Vec::with_capacity(prepared.m());
    let mut summaries = Vec::with_capacity(prepared.m());
    for channel in 0..prepared.m() {
        let builder = LibraryBuilder::new(&prepared, &catalog, channel)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(channel as u64);
        let chain = run_chain(&builder, channel, &sampler, &mut rng)?;
        info!(
            "equation {}: tau index {} (fixed at iteration {:?})",
            channel + 1,
            chain.iterations.last().map_or(0, |r| r.tau),
            chain.tau_fix_iteration
        );
        summaries.push(summarize(&chain, config.pip_threshold, data.dt)?);
        chains.push(chain);
    }
    let mut report = DiscoveryReport::new(summaries, &catalog, data.dt)?;
    report.dropped = dropped;
    Ok(Discovery {
        report,
        chains,
        catalog,
    })
}

/// Loads a model from a model JSON, a data manifest with `truth`, or a
/// discovery report.
pub fn load_model(path: &Path) -> Result<SparseDelayModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let model = if let Some(truth) = value.get("truth") {
        if truth.is_null() {
            return Err(Error::Config(format!("{}: manifest has no truth model", path.display())));
        }
        serde_json::from_value(truth.clone())?
    } else if let Some(model) = value.get("model") {
        serde_json::from_value(model.clone())?
    } else {
        serde_json::from_value(value)?
    };
    Ok(model)
}

/// Collects written files for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w).map_err(|e| Error::io(name, e))
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        self.write_with(name, |w| w.write_all(body.as_bytes()).map_err(|e| Error::io(name, e)))
    }

    fn trajectory(&mut self, name: &str, data: &TrajectoryData) -> Result<()> {
        self.write_with(name, |w| data.write_csv_to(w).map_err(|e| Error::io(name, e)))
    }

    fn finish(mut self, command: &str, config: &RunConfig) -> Result<RunManifest> {
        self.files.sort();
        let manifest = RunManifest {
            command: command.to_string(),
            seed: config.seed,
            effective_config: config.clone(),
            outputs: self.files.clone(),
        };
        self.json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}

fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("config has no [{name}] section")))
}

/// Writes `data.csv` (noisy), `clean.csv`, `data.json` and the manifest.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let sim = section(&config.simulate, "simulate")?;
    let data = simulate_data(sim, config.seed)?;
    let mut outputs = Outputs::new(out)?;
    outputs.trajectory("data.csv", &data.noisy)?;
    outputs.trajectory("clean.csv", &data.clean)?;
    let mut meta = TrajectoryManifest::describe(&data.noisy);
    meta.noise = Some(NoiseRecord {
        fraction: sim.noise,
        seed: config.seed,
    });
    meta.truth = Some(data.model);
    meta.history = Some(sim.history.clone());
    outputs.json("data.json", &meta)?;
    outputs.finish("simulate", config)
}

/// Writes `report.json`, `summary.txt`, optionally the chains, and the manifest.
pub fn cmd_discover(config: &RunConfig, out: &Path, trace: bool) -> Result<RunManifest> {
    let dc = section(&config.discover, "discover")?;
    let data = TrajectoryData::read_csv(&dc.data, dc.dt)?;
    let found = discover(&data, dc, config.seed)?;
    let mut outputs = Outputs::new(out)?;
    outputs.json("report.json", &found.report)?;
    outputs.text("summary.txt", &found.report.table())?;
    if trace || dc.trace {
        outputs.json("chains.json", &found.chains)?;
        for chain in &found.chains {
            let name = format!("trace_x{}.csv", chain.channel + 1);
            outputs.write_with(&name, |w| chain.write_trace_csv(w).map_err(Error::from))?;
        }
    }
    println!("{}", found.report.rendered);
    outputs.finish("discover", config)
}

/// Writes `prediction.csv`, `band.csv` (with chains), `phase_x<j>.csv` and the manifest.
pub fn cmd_predict(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let pc: &PredictConfig = section(&config.predict, "predict")?;
    let text = std::fs::read_to_string(&pc.report).map_err(|e| Error::io(&pc.report, e))?;
    let report: DiscoveryReport = serde_json::from_str(&text)?;
    let dt = pc.dt.unwrap_or(report.dt);
    let mut outputs = Outputs::new(out)?;

    let mean = predict(&report.model, &pc.history, pc.t_end, dt)?;
    outputs.trajectory("prediction.csv", &mean)?;
    let truth = match &pc.truth {
        Some(path) => Some(simulate(&load_model(path)?, &pc.history, pc.t_end, dt)?),
        None => None,
    };
    if let Some(t) = &truth {
        outputs.trajectory("truth.csv", t)?;
    }
    if let Some(path) = &pc.chains {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let chains: Vec<ChainRecord> = serde_json::from_str(&text)?;
        let names = chains
            .first()
            .map(|c| c.names.clone())
            .ok_or_else(|| Error::Config("chain file is empty".into()))?;
        let catalog = CandidateCatalog::parse(&names)?;
        let band = predict_with_uncertainty(&chains, &catalog, &pc.history, pc.t_end, dt, pc.n_draws, config.seed)?;
        outputs.write_with("band.csv", |w| band.write_csv(w, truth.as_ref()).map_err(Error::from))?;
        outputs.text(
            "band.json",
            &format!(
                "{{\n  \"draws\": {},\n  \"diverged\": {}\n}}\n",
                band.draws, band.diverged
            ),
        )?;
    }
    if pc.phase_portrait {
        for j in 0..mean.m() {
            let p = phase_portrait(&mean, j, report.model.delay)?;
            outputs.write_with(&format!("phase_x{}.csv", j + 1), |w| p.write_csv(w).map_err(Error::from))?;
        }
    }
    outputs.finish("predict", config)
}

/// One row of the parameter-error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub label: String,
    pub e_theta: f64,
    pub delay: f64,
    pub true_delay: f64,
    pub terms: usize,
    pub true_terms: usize,
}

pub fn error_table(report: &ReportConfig) -> Result<Vec<ErrorRow>> {
    report
        .runs
        .iter()
        .map(|run| {
            let model = load_model(&run.report)?;
            let truth = load_model(&run.truth)?;
            Ok(ErrorRow {
                label: run.label.clone(),
                e_theta: parameter_error(&model, &truth),
                delay: model.delay,
                true_delay: truth.delay,
                terms: model.term_count(),
                true_terms: truth.term_count(),
            })
        })
        .collect()
}

/// Writes `errors.csv`, `errors.json` and the manifest.
pub fn cmd_report(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let rc = section(&config.report, "report")?;
    let rows = error_table(rc)?;
    let mut outputs = Outputs::new(out)?;
    outputs.write_with("errors.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in &rows {
            csv.serialize(row)?;
        }
        csv.flush().map_err(|e| Error::io("errors.csv", e))
    })?;
    outputs.json("errors.json", &rows)?;
    for row in &rows {
        println!("{:<24} e_theta = {:.3e}  delay = {} (true {})", row.label, row.e_theta, row.delay, row.true_delay);
    }
    outputs.finish("report", config)
}
