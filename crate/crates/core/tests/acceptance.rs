//! Benchmark acceptance run. Prints one line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::Path;
use std::time::Instant;

use delaydisc::config::{DiscoverConfig, EquationSpec, ReportConfig, ReportRun, RunConfig, RunManifest, SimulateConfig};
use delaydisc::dde::simulate;
use delaydisc::model::SparseDelayModel;
use delaydisc::pipeline::{cmd_discover, cmd_predict, cmd_report, cmd_simulate, discover, simulate_data};
use delaydisc::posterior::{parameter_error, DiscoveryReport};
use delaydisc::predictor::{phase_portrait, predict, PhasePortrait};
use delaydisc::term::parse_term;

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn canonical(name: &str) -> String {
    parse_term(name).unwrap().to_string()
}

fn retained(report: &DiscoveryReport, eq: usize) -> Vec<String> {
    let mut v: Vec<String> = report.model.equations[eq].iter().map(|t| t.term.to_string()).collect();
    v.sort();
    v
}

fn same_terms(report: &DiscoveryReport, eq: usize, want: &[&str]) -> bool {
    let mut w: Vec<String> = want.iter().map(|s| canonical(s)).collect();
    w.sort();
    retained(report, eq) == w
}

fn coefficient(report: &DiscoveryReport, eq: usize, name: &str) -> f64 {
    let c = canonical(name);
    report.model.equations[eq]
        .iter()
        .find(|t| t.term.to_string() == c)
        .map_or(0.0, |t| t.coefficient)
}

fn pip(report: &DiscoveryReport, eq: usize, name: &str) -> f64 {
    let s = &report.equations[eq];
    let c = canonical(name);
    s.names.iter().position(|n| *n == c).map_or(0.0, |k| s.pip[k])
}

// ---------------------------------------------------------------------------
// Benchmark systems

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn equation(terms: &[&str], coefficients: &[f64]) -> EquationSpec {
    EquationSpec {
        terms: strings(terms),
        coefficients: coefficients.to_vec(),
    }
}

struct System {
    simulate: SimulateConfig,
    discover: DiscoverConfig,
}

impl System {
    fn new(simulate: SimulateConfig, catalog: &[&str], cutoff: f64) -> Self {
        let mut discover = DiscoverConfig::new("unused", strings(catalog), 20, 1000);
        discover.filter.cutoff = cutoff;
        discover.correlation_threshold = 0.999;
        discover.row_stride = 5;
        Self { simulate, discover }
    }

    fn run(&self, seed: u64) -> (DiscoveryReport, SparseDelayModel) {
        let data = simulate_data(&self.simulate, seed).unwrap();
        let found = discover(&data.noisy, &self.discover, seed).unwrap();
        (found.report, data.model)
    }
}

fn exponential(noise: f64) -> System {
    System::new(
        SimulateConfig {
            equations: vec![equation(&["exp(-x1_tau)", "x1"], &[10.0, -1.0])],
            delay: 1.0,
            history: vec![1.0],
            dt: 0.01,
            t_end: 20.0,
            noise,
        },
        &[
            "x1", "x1_tau", "x1^2", "x1_tau^2", "x1*x1_tau", "exp(-x1)", "exp(-x1_tau)", "exp(x1)", "exp(x1_tau)",
            "sin(x1)", "sin(x1_tau)", "cos(x1)", "cos(x1_tau)",
        ],
        0.2,
    )
}

fn sprott(noise: f64) -> System {
    System::new(
        SimulateConfig {
            equations: vec![equation(&["sin(x1_tau)"], &[1.0])],
            delay: 3.0,
            history: vec![0.1],
            dt: 0.05,
            t_end: 100.0,
            noise,
        },
        &[
            "x1", "x1_tau", "x1^2", "x1_tau^2", "x1*x1_tau", "exp(-x1)", "exp(-x1_tau)", "sin(x1)", "sin(x1_tau)",
            "cos(x1)", "cos(x1_tau)", "1/x1", "1/x1_tau", "1/x1^2", "1/x1_tau^2",
        ],
        0.1,
    )
}

fn mackey_glass(delay: f64, noise: f64) -> System {
    let mut s = System::new(
        SimulateConfig {
            equations: vec![equation(&["x1", "hill(x1_tau, 10)"], &[-0.1, 0.2])],
            delay,
            history: vec![0.1],
            dt: 0.2,
            t_end: 1000.0,
            noise,
        },
        &[
            "x1", "x1_tau", "x1^2", "x1_tau^2", "sin(x1)", "sin(x1_tau)", "cos(x1)", "cos(x1_tau)", "hill(x1, 10)",
            "hill(x1_tau, 10)", "hill(x1, 4)", "hill(x1_tau, 4)", "1/x1", "1/x1_tau", "1/x1^2", "1/x1_tau^2",
        ],
        0.1,
    );
    // x^2 and cos(x) are collinear on the attractor
    s.discover.auto_drop = true;
    s
}

fn coupled_linear() -> System {
    let mut catalog = Vec::new();
    for v in ["x1", "x2"] {
        catalog.push(v.to_string());
        catalog.push(format!("{v}_tau"));
    }
    for f in ["{}^2", "{}*{}_tau", "exp(-{})", "exp({})", "sin({})", "cos({})"] {
        for v in ["x1", "x2"] {
            if f == "{}*{}_tau" {
                catalog.push(format!("{v}*{v}_tau"));
            } else {
                catalog.push(f.replace("{}", v));
                catalog.push(f.replace("{}", &format!("{v}_tau")));
            }
        }
    }
    let names: Vec<&str> = catalog.iter().map(String::as_str).collect();
    System::new(
        SimulateConfig {
            equations: vec![
                equation(&["x1_tau"], &[-1.0]),
                equation(&["x1", "x1_tau", "x2_tau"], &[1.0, -1.0, -1.0]),
            ],
            delay: 1.0,
            history: vec![10.0, 6.0],
            dt: 0.01,
            t_end: 20.0,
            noise: 0.2,
        },
        &names,
        0.1,
    )
}

// ---------------------------------------------------------------------------
// Criteria

fn criterion_1() -> Outcome {
    let sys = exponential(0.15);
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in 1..=5 {
        let (r, _) = sys.run(seed);
        let a = coefficient(&r, 0, "exp(-x1_tau)");
        let b = coefficient(&r, 0, "x1");
        let ok = same_terms(&r, 0, &["exp(-x1_tau)", "x1"])
            && (a - 10.0).abs() <= 0.5
            && (b + 1.0).abs() <= 0.5
            && (r.model.delay - 1.0).abs() <= 0.03 + 1e-9;
        good += ok as usize;
        notes.push(format!("s{seed}[{a:.3},{b:.3},tau={:.2}]", r.model.delay));
    }
    Outcome {
        pass: good >= 4,
        detail: format!("{good}/5 seeds exact {}", notes.join(" ")),
    }
}

fn criterion_2() -> Outcome {
    let (r, _) = sprott(0.15).run(SEED);
    let c = coefficient(&r, 0, "sin(x1_tau)");
    let p = pip(&r, 0, "sin(x1_tau)");
    let other = r.equations[0]
        .names
        .iter()
        .zip(&r.equations[0].pip)
        .filter(|(n, _)| **n != canonical("sin(x1_tau)"))
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    Outcome {
        pass: same_terms(&r, 0, &["sin(x1_tau)"])
            && p > 0.9
            && (c - 1.0).abs() <= 0.08
            && (r.model.delay - 3.0).abs() <= 0.05 + 1e-9
            && other <= 0.5,
        detail: format!(
            "terms {:?}, pip {p:.3}, coef {c:.4}, delay {:.2}, max other pip {other:.3}",
            retained(&r, 0),
            r.model.delay
        ),
    }
}

fn criterion_3() -> Outcome {
    let (r10, _) = mackey_glass(40.0, 0.10).run(SEED);
    let (a, b) = (coefficient(&r10, 0, "x1"), coefficient(&r10, 0, "hill(x1_tau, 10)"));
    let tau10 = r10.equations[0].tau_index;
    let ok10 = same_terms(&r10, 0, &["x1", "hill(x1_tau, 10)"])
        && (a + 0.1).abs() <= 0.02
        && (b - 0.2).abs() <= 0.02
        && tau10 == 200;

    let (r15, _) = mackey_glass(40.0, 0.15).run(SEED);
    let core = [canonical("x1"), canonical("hill(x1_tau, 10)")];
    let terms15 = retained(&r15, 0);
    let extras: Vec<f64> = r15.model.equations[0]
        .iter()
        .filter(|t| !core.contains(&t.term.to_string()))
        .map(|t| t.coefficient)
        .collect();
    let (a15, b15) = (coefficient(&r15, 0, "x1"), coefficient(&r15, 0, "hill(x1_tau, 10)"));
    let ok15 = core.iter().all(|c| terms15.contains(c))
        && extras.len() <= 1
        && extras.iter().all(|c| c.abs() < 0.005)
        && (a15 + 0.1).abs() <= 0.02
        && (b15 - 0.2).abs() <= 0.02
        && r15.equations[0].tau_index == 200;
    Outcome {
        pass: ok10 && ok15,
        detail: format!(
            "10%: {:?} ({a:.4}, {b:.4}) index {tau10}; 15%: {terms15:?} ({a15:.4}, {b15:.4}) extras {extras:?} index {}",
            retained(&r10, 0),
            r15.equations[0].tau_index
        ),
    }
}

fn criterion_4() -> Outcome {
    let (r, _) = coupled_linear().run(SEED);
    let e1 = coefficient(&r, 0, "x1_tau");
    let e2 = [
        coefficient(&r, 1, "x1"),
        coefficient(&r, 1, "x1_tau"),
        coefficient(&r, 1, "x2_tau"),
    ];
    let ok = same_terms(&r, 0, &["x1_tau"])
        && (e1 + 1.0).abs() <= 0.2
        && same_terms(&r, 1, &["x1", "x1_tau", "x2_tau"])
        && e2.iter().zip([1.0, -1.0, -1.0]).all(|(c, t)| (c - t).abs() <= 0.3)
        && (r.model.delay - 1.0).abs() <= 0.05 + 1e-9;
    Outcome {
        pass: ok,
        detail: format!(
            "eq1 {:?} {e1:.3}; eq2 {:?} ({:.3}, {:.3}, {:.3}); delays {:?} mean {:.3}",
            retained(&r, 0),
            retained(&r, 1),
            e2[0],
            e2[1],
            e2[2],
            r.equation_delays,
            r.model.delay
        ),
    }
}

fn criterion_5() -> Outcome {
    let levels = [0.05, 0.10, 0.15, 0.20];
    let seeds = [1u64, 2, 3];
    let errors: Vec<f64> = levels
        .iter()
        .map(|&noise| {
            let sys = sprott(noise);
            seeds
                .iter()
                .map(|&s| {
                    let (r, truth) = sys.run(s);
                    parameter_error(&r.model, &truth)
                })
                .sum::<f64>()
                / seeds.len() as f64
        })
        .collect();
    let monotone = errors.windows(2).all(|w| w[1] >= w[0]);
    Outcome {
        pass: monotone && errors[3] <= 1e-2,
        detail: format!(
            "e_theta {} (monotone: {monotone})",
            levels
                .iter()
                .zip(&errors)
                .map(|(l, e)| format!("{:.0}%={e:.2e}", l * 100.0))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    }
}

/// Occupied cells of a `cells × cells` grid over `bounds`.
fn occupancy(p: &PhasePortrait, bounds: (f64, f64, f64, f64), cells: usize) -> Vec<bool> {
    let (x0, x1, y0, y1) = bounds;
    let mut grid = vec![false; cells * cells];
    for (&a, &b) in p.x.iter().zip(&p.x_delayed) {
        let i = (((a - x0) / (x1 - x0)) * cells as f64).floor().clamp(0.0, (cells - 1) as f64) as usize;
        let j = (((b - y0) / (y1 - y0)) * cells as f64).floor().clamp(0.0, (cells - 1) as f64) as usize;
        grid[i * cells + j] = true;
    }
    grid
}

fn tail(p: PhasePortrait, skip: usize) -> PhasePortrait {
    PhasePortrait {
        x: p.x[skip..].to_vec(),
        x_delayed: p.x_delayed[skip..].to_vec(),
    }
}

fn criterion_6() -> Outcome {
    let (r, truth) = mackey_glass(20.0, 0.10).run(SEED);
    let (t_end, dt) = (10_000.0, 0.2);
    // portraits after the first 1000 s of each long run
    let skip = (1000.0 / dt) as usize;
    let truth_run = simulate(&truth, &[0.1], t_end, dt).unwrap();
    let model_run = match predict(&r.model, &[0.1], t_end, dt) {
        Ok(run) => run,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("{} re-simulation failed: {e}", r.rendered),
            }
        }
    };
    let pt = tail(phase_portrait(&truth_run, 0, truth.delay).unwrap(), skip);
    let pm = tail(phase_portrait(&model_run, 0, r.model.delay).unwrap(), skip);
    let (bt, bm) = (pt.bounding_box(), pm.bounding_box());
    let width_x = bt.1 - bt.0;
    let width_y = bt.3 - bt.2;
    let box_err = [
        (bm.0 - bt.0).abs() / width_x,
        (bm.1 - bt.1).abs() / width_x,
        (bm.2 - bt.2).abs() / width_y,
        (bm.3 - bt.3).abs() / width_y,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let grid = (bt.0.min(bm.0), bt.1.max(bm.1), bt.2.min(bm.2), bt.3.max(bm.3));
    let gt = occupancy(&pt, grid, 50);
    let gm = occupancy(&pm, grid, 50);
    let inter = gt.iter().zip(&gm).filter(|(a, b)| **a && **b).count();
    let union = gt.iter().zip(&gm).filter(|(a, b)| **a || **b).count();
    let jaccard = inter as f64 / union as f64;
    Outcome {
        pass: box_err <= 0.10 && jaccard >= 0.6,
        detail: format!(
            "model {} (delay {:.1}); bounding box error {:.3}, Jaccard {jaccard:.3}",
            r.rendered.trim(),
            r.model.delay,
            box_err
        ),
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut checks = common::conjugacy_checks(20);
    let worst_quad = common::QUADRATURE_INSTANCES
        .iter()
        .map(|inst| common::quadrature_relative_error(inst, &common::QUADRATURE_HYPER).0)
        .fold(0.0, f64::max);
    checks.push(common::Check::at_most("quadrature rel err", worst_quad, 1e-3));
    checks.push(common::Check::at_most("Z enumeration gap", common::z_enumeration_gap(20_000, 4), 0.05));
    let inst = common::JointInstance::new();
    let tv = common::total_variation(&inst.chain(60_000, 9), &inst.exact());
    checks.push(common::Check::at_most("joint (Z, tau) TV", tv, 0.05));
    let secs = start.elapsed().as_secs_f64();
    checks.push(common::Check::at_most("runtime s", secs, 120.0));
    Outcome {
        pass: checks.iter().all(|c| c.pass),
        detail: checks.iter().map(common::Check::line).collect::<Vec<_>>().join("; "),
    }
}

fn criterion_8() -> Outcome {
    let checks = [
        common::Check::at_most("solver max err", common::solver_max_error(0.01, 5.0), 1e-6),
        common::Check::at_most("quartic FD rel err", common::finite_difference_quartic_error(2), 1e-9),
        common::Check::at_most("-3 dB offset", common::butterworth_cutoff_error(), 0.01),
    ];
    Outcome {
        pass: checks.iter().all(|c| c.pass),
        detail: checks.iter().map(common::Check::line).collect::<Vec<_>>().join("; "),
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let sys = exponential(0.15);
    let sim = RunConfig {
        seed: 7,
        simulate: Some(sys.simulate.clone()),
        ..Default::default()
    };
    cmd_simulate(&sim, &root.join("sim")).unwrap();
    let mut dc = sys.discover.clone();
    dc.data = root.join("sim/data.csv");
    dc.n_mc = 600;
    dc.trace = true;
    let disc = RunConfig {
        seed: 7,
        discover: Some(dc),
        ..Default::default()
    };
    cmd_discover(&disc, &root.join("disc"), false).unwrap();
    let pred: RunConfig = toml_config(&format!(
        "seed = 7\n[predict]\nreport = {:?}\nchains = {:?}\nhistory = [1.0]\nt_end = 10.0\ntruth = {:?}\nn_draws = 20\n",
        root.join("disc/report.json"),
        root.join("disc/chains.json"),
        root.join("sim/data.json"),
    ));
    cmd_predict(&pred, &root.join("pred")).unwrap();
    let rep = RunConfig {
        report: Some(ReportConfig {
            runs: vec![ReportRun {
                label: "exp".into(),
                report: root.join("disc/report.json"),
                truth: root.join("sim/data.json"),
            }],
        }),
        ..Default::default()
    };
    cmd_report(&rep, &root.join("rep")).unwrap();

    let mut mismatched = Vec::new();
    let mut files = 0;
    for (name, f) in [
        ("sim", cmd_simulate as fn(&RunConfig, &Path) -> delaydisc::Result<RunManifest>),
        ("disc", |c: &RunConfig, o: &Path| cmd_discover(c, o, false)),
        ("pred", cmd_predict),
        ("rep", cmd_report),
    ] {
        let again = root.join(format!("{name}-again"));
        let config = RunConfig::load(&root.join(name).join("manifest.json")).unwrap();
        f(&config, &again).unwrap();
        let (a, b) = (dir_bytes(&root.join(name)), dir_bytes(&again));
        files += a.len();
        if a != b {
            mismatched.push(name);
        }
    }
    Outcome {
        pass: mismatched.is_empty(),
        detail: format!("{files} files across 4 commands, mismatched: {mismatched:?}"),
    }
}

fn toml_config(text: &str) -> RunConfig {
    RunConfig::from_toml_str(text).unwrap()
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 exponential, 5 seeds", criterion_1),
        ("2 JC Sprott", criterion_2),
        ("3 Mackey-Glass tau=40", criterion_3),
        ("4 coupled linear", criterion_4),
        ("5 JC noise sweep e_theta", criterion_5),
        ("6 unseen poles, MG tau=20", criterion_6),
        ("7 conjugacy oracles", criterion_7),
        ("8 solver and preprocessing", criterion_8),
        ("9 manifest determinism", criterion_9),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let out = check();
        failed += !out.pass as usize;
        println!(
            "[{}] criterion {name} ({:.1} s): {}",
            if out.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {}/9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
