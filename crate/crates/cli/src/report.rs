//! Check records, CSV tables and the JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stable_cones::fractional_grid_solver::fmt17;

const ANCHORS: &str = include_str!("../data/anchors.toml");

/// Source statement for a check, keyed by the part of the name before the first `/`.
pub fn anchor_for(check_name: &str) -> Option<String> {
  let table: BTreeMap<String, String> = toml::from_str(ANCHORS).expect("anchor table parses");
  let key = check_name.split('/').next().unwrap_or(check_name);
  table.get(key).cloned()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
  pub check_name: String,
  pub paper_anchor: String,
  pub value: f64,
  pub tolerance: f64,
  pub pass: bool,
}

/// Output directory plus everything recorded so far.
pub struct Report {
  dir: PathBuf,
  pub checks: Vec<Check>,
  log: Vec<String>,
}

impl Report {
  pub fn new(dir: &Path) -> std::io::Result<Self> {
    fs::create_dir_all(dir)?;
    Ok(Self { dir: dir.to_path_buf(), checks: Vec::new(), log: Vec::new() })
  }

  pub fn dir(&self) -> &Path {
    &self.dir
  }

  pub fn check(&mut self, name: impl Into<String>, value: f64, tolerance: f64, pass: bool) {
    let name = name.into();
    let paper_anchor = anchor_for(&name).unwrap_or_else(|| panic!("no anchor for check `{name}`"));
    let pass = pass && !value.is_nan();
    self.note(format!("{} {name} value={value:e} tolerance={tolerance:e}", if pass { "PASS" } else { "FAIL" }));
    self.checks.push(Check { check_name: name, paper_anchor, value, tolerance, pass });
  }

  pub fn note(&mut self, line: impl Into<String>) {
    let line = line.into();
    eprintln!("{line}");
    self.log.push(line);
  }

  pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(self.dir.join(name))?);
    writeln!(f, "{}", header.join(","))?;
    for r in rows {
      let cells: Vec<String> = r.iter().map(|v| fmt17(*v)).collect();
      writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()
  }

  pub fn json<T: Serialize>(&self, name: &str, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    fs::write(self.dir.join(name), text + "\n")
  }

  pub fn all_pass(&self) -> bool {
    self.checks.iter().all(|c| c.pass)
  }

  /// Writes `summary.json`, and `run.log` with wall-clock stamps.
  pub fn finish(&self, started: u64) -> std::io::Result<()> {
    self.json("summary.json", &self.checks)?;
    let now = unix_seconds();
    let mut log = format!("started {started}\n");
    for l in &self.log {
      log.push_str(l);
      log.push('\n');
    }
    log.push_str(&format!("finished {now}\n"));
    fs::write(self.dir.join("run.log"), log)
  }
}

pub fn unix_seconds() -> u64 {
  std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
  use super::*;

  #[test]
  fn every_anchor_key_resolves() {
    let table: BTreeMap<String, String> = toml::from_str(ANCHORS).unwrap();
    assert!(table.len() >= 30);
    assert_eq!(anchor_for("invariance_ratio/alpha=1.5"), table.get("invariance_ratio").cloned());
    assert!(anchor_for("nonexistent").is_none());
  }
}
