use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use arnold_core::action::{make_chi, select_eps, TwistedField};
use arnold_core::homotopy::{
    build_step3_field, c0_small_certificates, g_deformation_check, refine_minima, step1_path,
    step3_certificate, truncate_to_v, uniform_grid, verify_ia_homotopy, HomotopyCertificate,
    LinearPath, ProductField, RayBudget,
};
use arnold_core::report::{format_f64, SCHEMA_VERSION};
use serde_json::json;

use crate::config::{load, Loaded, Overrides};
use crate::output::{write_json, write_text};
use crate::{Failure, Step};

pub const HOMOTOPY_FILE: &str = "homotopy.json";

struct Setup<'a> {
    loaded: &'a Loaded,
    samples: usize,
    truncation: u32,
}

fn step_name(step: Step) -> &'static str {
    match step {
        Step::One => "1",
        Step::Two => "2",
        Step::Three => "3",
        Step::Four => "4",
        Step::C0Small => "c0small",
    }
}

fn run_step(st: &Setup<'_>, step: Step) -> Result<Vec<HomotopyCertificate>, Failure> {
    let c = &st.loaded.config;
    let model = st.loaded.model.as_ref();
    let w = st.loaded.window;
    let g = w.grow(0, 1);
    let budget = c.sphere_budget();
    let s_grid = uniform_grid(c.homotopy.s_points);
    let tau = c.homotopy.tau;
    let certs = match step {
        Step::One => {
            let inner = TwistedField::new(model, g, c.lambda0, st.samples)?;
            let path = step1_path(&inner, w)?;
            let mut cert = verify_ia_homotopy(&path, &s_grid, &budget, tau, "1")?;
            refine_minima(&path, &mut cert, c.homotopy.refine)?;
            vec![cert]
        }
        Step::Two => {
            let f = TwistedField::new(model, w, c.lambda0, st.samples)?;
            let v = truncate_to_v(&f, st.truncation, &budget)?;
            let path = LinearPath::new(&v, &f)?;
            let mut cert = verify_ia_homotopy(&path, &s_grid, &budget, tau, "2")?;
            refine_minima(&path, &mut cert, c.homotopy.refine)?;
            cert.notes.push(format!(
                "N = {}, positivity margin {}",
                st.truncation,
                format_f64(v.margin())
            ));
            vec![cert]
        }
        Step::Three => {
            let f = TwistedField::new(model, g, c.lambda0, st.samples)?;
            let v = truncate_to_v(&f, st.truncation, &budget)?;
            let s3 = build_step3_field(&v, w, c.seed)?;
            let mut cert = step3_certificate(&v, &s3, &budget, tau)?;
            cert.notes.push(format!("N = {}", st.truncation));
            vec![cert]
        }
        Step::Four => {
            let f = TwistedField::new(model, w, c.lambda0, st.samples)?;
            let v = truncate_to_v(&f, st.truncation, &budget)?;
            let product = ProductField::new(&v, w, c.lambda0)?;
            let eps = match c.eps {
                Some(e) => e,
                None => select_eps(model, w, c.lambda0, st.samples, &budget)?.eps,
            };
            let chi = make_chi(c.lambda0, eps)?;
            let lambdas: Vec<f64> = uniform_grid(c.homotopy.lambda_points)
                .iter()
                .map(|t| c.lambda0 + t)
                .collect();
            let rays = RayBudget {
                seed: c.seed,
                ..RayBudget::default()
            };
            let mut cert = g_deformation_check(&product, &chi, &s_grid, &lambdas, &rays, tau)?;
            cert.notes
                .push(format!("N = {}, eps = {}", st.truncation, format_f64(eps)));
            vec![cert]
        }
        Step::C0Small => c0_small_certificates(
            model,
            w,
            st.samples,
            &s_grid,
            &budget,
            tau,
            c.homotopy.refine,
        )?,
    };
    Ok(certs)
}

pub fn run(config_path: &Path, over: &Overrides, step: Option<Step>) -> Result<u8, Failure> {
    let start = Instant::now();
    let loaded = load(config_path, over)?;
    let c = &loaded.config;
    let w = loaded.window;
    let samples = c.samples.max(w.grow(0, 1).nonlinear_floor());
    let truncation = c.homotopy.truncation.unwrap_or(c.window - 1);
    if truncation + 1 > c.window {
        return Err(Failure::new(format!(
            "truncation N = {truncation} needs window K >= N + 1, got K = {}",
            c.window
        )));
    }
    let st = Setup {
        loaded: &loaded,
        samples,
        truncation,
    };
    let steps: Vec<Step> = match step {
        Some(s) => vec![s],
        None => vec![Step::One, Step::Two, Step::Three, Step::Four, Step::C0Small],
    };
    let mut certificates = Vec::new();
    let mut timings = serde_json::Map::new();
    for s in &steps {
        let t = Instant::now();
        certificates.extend(run_step(&st, *s)?);
        timings.insert(step_name(*s).to_string(), json!(t.elapsed().as_secs_f64()));
    }
    timings.insert("total".into(), json!(start.elapsed().as_secs_f64()));
    let pass = certificates.iter().all(|c| c.pass);
    let label = c.label.clone().unwrap_or_else(|| loaded.model.label());
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "homotopy",
        "label": label,
        "hamiltonian": loaded.spec,
        "window": [w.k_min(), w.k_max()],
        "dim": w.dim(),
        "samples": samples,
        "lambda0": c.lambda0,
        "truncation": truncation,
        "tau": c.homotopy.tau,
        "seed": c.seed,
        "steps": steps.iter().map(|s| step_name(*s)).collect::<Vec<_>>(),
        "certificates": certificates,
        "pass": pass,
        "timings": timings,
    });
    write_json(&loaded.out, HOMOTOPY_FILE, &report)?;

    let mut s = String::new();
    for cert in &certificates {
        let _ = writeln!(
            s,
            "step {}: {} margin {} ({})",
            cert.step,
            if cert.pass { "PASS" } else { "FAIL" },
            format_f64(cert.margin),
            cert.label
        );
        for note in &cert.notes {
            let _ = writeln!(s, "  {note}");
        }
        for wit in &cert.witnesses {
            let _ = writeln!(
                s,
                "  witness at s = {}: {}",
                format_f64(wit.s),
                format_f64(wit.value)
            );
        }
    }
    let _ = writeln!(s, "result: {}", if pass { "PASS" } else { "FAIL" });
    write_text(&loaded.out, "homotopy.txt", &s)?;
    print!("{s}");
    Ok(if pass { 0 } else { 2 })
}
