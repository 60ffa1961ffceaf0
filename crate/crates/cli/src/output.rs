use std::fs;
use std::path::Path;

use arnold_core::report;
use serde::Serialize;

use crate::Failure;

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), report::to_json(value)?)?;
    Ok(())
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<serde_json::Value, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::new(format!("{} is not valid JSON: {e}", path.display())))
}
