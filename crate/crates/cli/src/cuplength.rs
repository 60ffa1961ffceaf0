use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use arnold_core::cuplength::{
    cp_index_pair, morse_lower_bound_check, product_cuplength, sphere_fixture,
    suspension_bookkeeping, FixtureFile, IndexPairFixture,
};
use arnold_core::loop_space::ModeWindow;
use arnold_core::report::SCHEMA_VERSION;
use serde_json::json;

use crate::output::{read_json, write_json, write_text};
use crate::solve::FAMILIES_FILE;
use crate::Failure;

pub const CUPLENGTH_FILE: &str = "cuplength.json";

#[derive(clap::Args, Clone, Debug)]
pub struct CupArgs {
    /// `n` of the index pair fixture over `H*(CP^n)`.
    #[arg(long, value_name = "N")]
    pub fixture: usize,
    /// Directory holding `families.json`; the report is written there too.
    #[arg(long, value_name = "DIR", default_value = "arnold-out")]
    pub out: PathBuf,
    /// Smaller window of the suspension pair; defaults to the solve window.
    #[arg(long, value_name = "K")]
    pub window: Option<u32>,
    /// Larger window of the suspension pair; defaults to `K + 2`.
    #[arg(long, value_name = "K2")]
    pub window_to: Option<u32>,
    /// Ring and module tables to use instead of the built-in fixture.
    #[arg(long, value_name = "PATH")]
    pub fixture_file: Option<PathBuf>,
    /// Family count to gate instead of the one in the solve report.
    #[arg(long, value_name = "C")]
    pub inject_count: Option<usize>,
}

fn load_fixture(a: &CupArgs) -> Result<IndexPairFixture, Failure> {
    match &a.fixture_file {
        None => Ok(cp_index_pair(a.fixture)),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::new(format!("cannot read fixture {}: {e}", p.display())))?;
            Ok(FixtureFile::from_json(&text)?.build()?)
        }
    }
}

pub fn run(a: &CupArgs) -> Result<u8, Failure> {
    let report_path = a.out.join(FAMILIES_FILE);
    let solve = if report_path.exists() {
        Some(read_json(&report_path)?)
    } else {
        None
    };
    if solve.is_none() && a.inject_count.is_none() {
        return Err(Failure::new(format!(
            "no solve report at {}",
            report_path.display()
        )));
    }
    let n = a.fixture;
    let dim = 2 * n + 2;
    let mut report_window = None;
    let mut count = a.inject_count;
    if let Some(r) = &solve {
        let rn = r["n"]
            .as_u64()
            .ok_or_else(|| Failure::new("solve report has no n"))?;
        if rn != n as u64 {
            return Err(Failure::new(format!(
                "solve report is for n = {rn}, fixture asks for n = {n}"
            )));
        }
        if count.is_none() {
            count = Some(
                r["count"]
                    .as_u64()
                    .ok_or_else(|| Failure::new("solve report has no family count"))?
                    as usize,
            );
        }
        report_window = r["window"][1].as_u64().map(|k| k as u32);
    }
    let count = count.expect("count from the report or the command line");
    let k = a.window.or(report_window).unwrap_or(4);
    let k2 = a.window_to.unwrap_or(k + 2);
    let from = ModeWindow::symmetric(k, dim)?;
    let to = ModeWindow::symmetric(k2, dim)?;

    let fixture = load_fixture(a)?;
    let cup = fixture.cuplength();
    // the fixture does not depend on the window; both ends are recomputed
    let after = load_fixture(a)?.cuplength();
    let susp = suspension_bookkeeping(&cup, &after, &from, &to)?;
    let sphere = sphere_fixture(susp.suspension_dim as i32);
    let product = product_cuplength(&fixture, &sphere)?;
    let gate = morse_lower_bound_check(cup.cuplength, count);

    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "cuplength",
        "n": n,
        "fixture": cup,
        "expected_cuplength": fixture.expected_cuplength,
        "suspension": susp,
        "sphere_product": product,
        "count": count,
        "count_source": if a.inject_count.is_some() { "injected" } else { "solve report" },
        "gate": gate,
    });
    write_json(&a.out, CUPLENGTH_FILE, &out)?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "fixture {}: cup-length {} (expected {})",
        cup.label, cup.cuplength, fixture.expected_cuplength
    );
    if let Some(w) = &cup.witness {
        let _ = writeln!(
            s,
            "  witness: {} acted on by [{}]",
            w.alpha,
            w.betas.join(", ")
        );
    }
    let _ = writeln!(
        s,
        "suspension [{}, {}] -> [{}, {}]: {} real coordinates, cup-length {} -> {}",
        susp.from[0],
        susp.from[1],
        susp.to[0],
        susp.to[1],
        susp.suspension_dim,
        susp.cuplength_before,
        susp.cuplength_after
    );
    let _ = writeln!(
        s,
        "product with sphere{}: {} (product formula {}, holds: {})",
        susp.suspension_dim, product.product, product.formula_value, product.formula_holds
    );
    let _ = writeln!(
        s,
        "gate: {} families >= cup-length {}: {}",
        count,
        cup.cuplength,
        if gate.pass { "PASS" } else { "FAIL" }
    );
    write_text(&a.out, "cuplength.txt", &s)?;
    print!("{s}");
    Ok(if gate.pass { 0 } else { 2 })
}
