//! Pretty-prints the error table of a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dynmaxent::{Table, Variant};

use crate::run::{ERRORS_FILE, MANIFEST_FILE};
use crate::CliError;

/// Error table as stored on disk; `None` marks a method that refused.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

pub fn read(dir: &Path) -> Result<ErrorTable, CliError> {
    let path = dir.join(ERRORS_FILE);
    if !path.is_file() {
        return Err(CliError::MissingArtifacts(dir.display().to_string()));
    }
    let bad = |e: String| CliError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let cells = rec
            .iter()
            .skip(1)
            .map(|c| match c {
                "NA" => Ok(None),
                _ => c.parse().map(Some).map_err(|_| bad(format!("not a number: {c}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((rec[0].to_string(), cells));
    }
    if rows.is_empty() {
        return Err(bad("no rows".into()));
    }
    Ok(ErrorTable { columns, rows })
}

/// Three significant digits in scientific notation, e.g. `1.45e-2`.
pub fn sci(v: f64) -> String {
    format!("{v:.2e}")
}

fn published(dir: &Path) -> Option<Table> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let m: serde_json::Value = serde_json::from_str(&text).ok()?;
    let n = m.get("table")?.as_u64()?;
    Table::ALL.into_iter().find(|t| u64::from(t.number()) == n)
}

fn capitalised(name: &str) -> String {
    let mut c = name.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

pub fn render(dir: &Path) -> Result<String, CliError> {
    let t = read(dir)?;
    let width = t.columns.iter().map(|c| c.len()).max().unwrap_or(0).max(8) + 2;
    let mut out = String::new();
    let line = |out: &mut String, label: &str, cells: &mut dyn Iterator<Item = String>| {
        let _ = write!(out, "{label:<12}");
        for c in cells {
            let _ = write!(out, "{c:>width$}");
        }
        out.push('\n');
    };
    line(&mut out, "", &mut t.columns.iter().cloned());
    for (name, cells) in &t.rows {
        let mut it = cells.iter().map(|c| c.map_or_else(|| "n/a".to_string(), sci));
        line(&mut out, &capitalised(name), &mut it);
    }
    if let Some(table) = published(dir) {
        let _ = writeln!(out, "published (table {}):", table.number());
        for (variant, values) in table.reference().rows {
            let name = match variant {
                Variant::Original => "Original",
                Variant::Modified => "Modified",
            };
            line(&mut out, name, &mut values.iter().map(|&v| sci(v)));
        }
    }
    Ok(out)
}
