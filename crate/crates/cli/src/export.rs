use std::fs;
use std::path::{Path, PathBuf};

use arnold_core::report::format_f64;
use serde_json::Value;

use crate::homotopy::HOMOTOPY_FILE;
use crate::output::read_json;
use crate::solve::FAMILIES_FILE;
use crate::Failure;

pub const FAMILIES_CSV: &str = "families.csv";
pub const CERTIFICATES_CSV: &str = "certificates.csv";

#[derive(clap::Args, Clone, Debug)]
pub struct ExportArgs {
    /// Directory holding the reports; the CSV files are written there.
    #[arg(long, value_name = "DIR", default_value = "arnold-out")]
    pub out: PathBuf,
    /// Export this report instead of the ones found in the directory.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

fn num(v: &Value) -> String {
    v.as_f64().map(format_f64).unwrap_or_default()
}

fn writer(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<fs::File>, Failure> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(name))
        .map_err(|e| Failure::new(format!("cannot write {name}: {e}")))?;
    w.write_record(header)
        .map_err(|e| Failure::new(e.to_string()))?;
    Ok(w)
}

fn family_rows(report: &Value, w: &mut csv::Writer<fs::File>) -> Result<(), Failure> {
    let label = report["label"].as_str().unwrap_or_default();
    for (i, f) in report["families"]
        .as_array()
        .into_iter()
        .flatten()
        .enumerate()
    {
        w.write_record([
            label.to_string(),
            i.to_string(),
            num(&f["lambda"]),
            num(&f["action"]),
            num(&f["residual"]),
        ])
        .map_err(|e| Failure::new(e.to_string()))?;
    }
    Ok(())
}

fn certificate_rows(report: &Value, w: &mut csv::Writer<fs::File>) -> Result<(), Failure> {
    for c in report["certificates"].as_array().into_iter().flatten() {
        let s_grid = c["s_grid"].as_array().cloned().unwrap_or_default();
        let infima = c["infima"].as_array().cloned().unwrap_or_default();
        let pass = c["pass"].as_bool().unwrap_or(false);
        for (s, inf) in s_grid.iter().zip(&infima) {
            w.write_record([
                c["step"].as_str().unwrap_or_default().to_string(),
                c["label"].as_str().unwrap_or_default().to_string(),
                num(s),
                num(inf),
                pass.to_string(),
            ])
            .map_err(|e| Failure::new(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn run(a: &ExportArgs) -> Result<u8, Failure> {
    let reports: Vec<Value> = match &a.report {
        Some(p) => vec![read_json(p)?],
        None => [FAMILIES_FILE, HOMOTOPY_FILE]
            .iter()
            .map(|f| a.out.join(f))
            .filter(|p| p.exists())
            .map(|p| read_json(&p))
            .collect::<Result<_, _>>()?,
    };
    if reports.is_empty() {
        return Err(Failure::new(format!(
            "no reports found in {}",
            a.out.display()
        )));
    }
    let mut fam = writer(
        &a.out,
        FAMILIES_CSV,
        &["label", "family", "lambda", "action", "residual"],
    )?;
    let mut cert = writer(
        &a.out,
        CERTIFICATES_CSV,
        &["step", "label", "s", "infimum", "pass"],
    )?;
    for r in &reports {
        match r["command"].as_str() {
            Some("solve") => family_rows(r, &mut fam)?,
            Some("homotopy") => certificate_rows(r, &mut cert)?,
            other => {
                return Err(Failure::new(format!(
                    "cannot export a report of kind {other:?}"
                )))
            }
        }
    }
    fam.flush()?;
    cert.flush()?;
    println!(
        "wrote {} and {} in {}",
        FAMILIES_CSV,
        CERTIFICATES_CSV,
        a.out.display()
    );
    Ok(0)
}
