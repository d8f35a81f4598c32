use std::fs;
use std::io::Write;
use std::path::Path;

use crate::failure::CliError;

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))
}

/// CSV cell for a float: shortest round-trip form, empty when undefined.
pub fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

/// `# key=value` provenance header lines for CSV outputs.
pub fn header(schema: &str, config: &[(String, String)]) -> String {
    let mut s = format!("# schema={schema}\n");
    for (k, v) in config {
        s.push_str(&format!("# config.{k}={v}\n"));
    }
    s
}
