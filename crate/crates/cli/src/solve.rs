use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use arnold_core::action::{make_chi, select_eps, ActionEvaluator};
use arnold_core::hamiltonian::{oracle_families, DiagonalQuadratic, HamiltonianSpec};
use arnold_core::report::{format_f64, SCHEMA_VERSION};
use arnold_core::solver::{
    arnold_count, boundedness_probe, ClusterTolerance, CriticalFamily, SolveStats, SolverConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load, Overrides};
use crate::output::{write_json, write_text};
use crate::Failure;

pub const FAMILIES_FILE: &str = "families.json";
pub const CERTIFICATES_FILE: &str = "certificates.json";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Serialize)]
struct Seeds {
    solver: u64,
    sphere: u64,
    probe: Option<u64>,
}

#[derive(Serialize)]
struct Timings {
    eps_seconds: f64,
    solve_seconds: f64,
    probe_seconds: f64,
    total_seconds: f64,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    schema_version: u32,
    command: &'static str,
    label: String,
    hamiltonian: &'a HamiltonianSpec,
    window: [i32; 2],
    dim: usize,
    samples: usize,
    lambda0: f64,
    eps: f64,
    eps_source: &'static str,
    n: usize,
    count: usize,
    pass: bool,
    families: &'a [CriticalFamily],
    stats: &'a SolveStats,
    warnings: &'a [String],
    oracle_lambdas: Option<Vec<f64>>,
    certificates: &'a [Value],
    seeds: Seeds,
    solver: SolverConfig,
    cluster: ClusterTolerance,
    timings: Timings,
}

pub fn run(config_path: &Path, over: &Overrides) -> Result<u8, Failure> {
    let start = Instant::now();
    let loaded = load(config_path, over)?;
    let c = &loaded.config;
    let oracle_lambdas = match &loaded.spec {
        HamiltonianSpec::DiagonalQuadratic { a, .. } => {
            let q = DiagonalQuadratic::new(a.clone())?;
            Some(
                oracle_families(&q, c.lambda0)?
                    .iter()
                    .map(|f| f.lambda)
                    .collect::<Vec<_>>(),
            )
        }
        _ => None,
    };
    let model = loaded.model.as_ref();
    let budget = c.sphere_budget();
    let t = Instant::now();
    let selection = select_eps(model, loaded.window, c.lambda0, c.samples, &budget)?;
    let eps_seconds = t.elapsed().as_secs_f64();
    let (eps, eps_source) = match c.eps {
        Some(e) => (e, "config"),
        None => (selection.eps, "selected"),
    };
    let chi = make_chi(c.lambda0, eps)?;
    let solver = c.solver_config()?;
    let cluster = c.cluster_tolerance();
    let t = Instant::now();
    let mut report = arnold_count(model, &chi, loaded.window, c.samples, &solver, &cluster)?;
    let solve_seconds = t.elapsed().as_secs_f64();

    let mut certificates = vec![
        json!({"kind": "nonvanishing_infimum", "side": "lower", "certificate": selection.lower}),
        json!({"kind": "nonvanishing_infimum", "side": "upper", "certificate": selection.upper}),
    ];
    let mut probe_seconds = 0.0;
    let probe_budget = c.probe_budget();
    if let Some(pb) = &probe_budget {
        let t = Instant::now();
        let eval = ActionEvaluator::new(model, chi, loaded.window, c.samples)?;
        let probe = boundedness_probe(&eval, &solver.region, pb)?;
        probe_seconds = t.elapsed().as_secs_f64();
        if probe.non_exiting > 0 {
            report.warnings.push(format!(
                "{} of {} boundary samples did not leave the search region within t = {}",
                probe.non_exiting, probe.samples, pb.t_max
            ));
        }
        certificates.push(json!({"kind": "boundedness_probe", "report": probe}));
    }

    let label = c.label.clone().unwrap_or_else(|| model.label());
    let out = SolveReport {
        schema_version: SCHEMA_VERSION,
        command: "solve",
        label: label.clone(),
        hamiltonian: &loaded.spec,
        window: [loaded.window.k_min(), loaded.window.k_max()],
        dim: loaded.window.dim(),
        samples: c.samples,
        lambda0: c.lambda0,
        eps,
        eps_source,
        n: report.n,
        count: report.count,
        pass: report.pass,
        families: &report.families,
        stats: &report.stats,
        warnings: &report.warnings,
        oracle_lambdas,
        certificates: &certificates,
        seeds: Seeds {
            solver: solver.seed,
            sphere: budget.seed,
            probe: probe_budget.map(|p| p.seed),
        },
        solver,
        cluster,
        timings: Timings {
            eps_seconds,
            solve_seconds,
            probe_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&loaded.out, FAMILIES_FILE, &out)?;
    write_json(
        &loaded.out,
        CERTIFICATES_FILE,
        &json!({"schema_version": SCHEMA_VERSION, "command": "solve", "certificates": certificates}),
    )?;

    let mut s = String::new();
    let _ = writeln!(s, "hamiltonian: {label}");
    let _ = writeln!(
        s,
        "window: [{}, {}] in R^{}, samples {}",
        out.window[0], out.window[1], out.dim, c.samples
    );
    let _ = writeln!(
        s,
        "lambda0: {}  eps: {} ({eps_source})",
        format_f64(c.lambda0),
        format_f64(eps)
    );
    let _ = writeln!(
        s,
        "families: {} (need at least {})",
        report.count,
        report.n + 1
    );
    for (i, f) in report.families.iter().enumerate() {
        let _ = writeln!(
            s,
            "  #{i}: lambda {}  action {}  residual {}  conditioning {}",
            format_f64(f.lambda),
            format_f64(f.action),
            format_f64(f.residual),
            format_f64(f.conditioning)
        );
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let verdict = match (report.pass, report.warnings.is_empty()) {
        (true, true) => "PASS",
        (true, false) => "PASS with warnings",
        _ => "FAIL",
    };
    let _ = writeln!(s, "result: {verdict}");
    write_text(&loaded.out, SUMMARY_FILE, &s)?;
    print!("{s}");
    eprintln!("solve finished in {:.2} s", start.elapsed().as_secs_f64());

    Ok(match (report.pass, report.warnings.is_empty()) {
        (true, true) => 0,
        (true, false) => 1,
        _ => 2,
    })
}
