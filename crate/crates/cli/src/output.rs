//! Artifact emission: CSV tables, the summary, and replay detection.
//!
//! Every CSV starts with the stanza line
//! `# levy-bel <version> seed=<seed> config_sha256=<hex>`, followed by a
//! header row. Numbers use the shortest representation that round-trips,
//! so every value in the summary can be recomputed from the CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

/// One CSV artifact, `<name>.csv` in the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Informational summary lines.
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Identifies a run in every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stanza {
    pub seed: u64,
    pub config_sha256: String,
}

impl Stanza {
    pub fn line(&self) -> String {
        format!("# levy-bel {} seed={} config_sha256={}", env!("CARGO_PKG_VERSION"), self.seed, self.config_sha256)
    }

    fn parse_hash(line: &str) -> Option<&str> {
        line.strip_prefix("# levy-bel ")?.split_whitespace().find_map(|w| w.strip_prefix("config_sha256="))
    }
}

pub fn render_csv(table: &Table, stanza: &Stanza) -> Result<Vec<u8>, CliError> {
    let mut out = format!("{}\n", stanza.line()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&table.header).map_err(io_error)?;
        for r in &table.rows {
            w.write_record(r).map_err(io_error)?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(out)
}

fn io_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes the tables and `<experiment>-summary.txt` into `dir`. A CSV that
/// already exists is compared with the new one first: a different config
/// hash is noted, and different bytes under the same hash fail the run.
pub fn write_artifacts(dir: &Path, experiment: &str, stanza: &Stanza, outcome: &mut Outcome) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for table in &outcome.tables {
        let path = dir.join(format!("{}.csv", table.name));
        let bytes = render_csv(table, stanza)?;
        if let Ok(previous) = std::fs::read(&path) {
            let first = previous.split(|&b| b == b'\n').next().unwrap_or_default();
            let old_hash = std::str::from_utf8(first).ok().and_then(Stanza::parse_hash);
            if old_hash == Some(stanza.config_sha256.as_str()) {
                outcome.checks.push(Check::new(
                    format!("replay_{}", table.name),
                    previous == bytes,
                    "output matches the previous run with the same config",
                ));
            } else {
                outcome.notes.push(format!(
                    "replay mismatch: {} was written by config_sha256={}",
                    path.display(),
                    old_hash.unwrap_or("unknown")
                ));
            }
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let path = dir.join(format!("{experiment}-summary.txt"));
    std::fs::write(&path, render_summary(experiment, stanza, outcome))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn render_summary(experiment: &str, stanza: &Stanza, outcome: &Outcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{experiment}");
    let _ = writeln!(s, "{}", stanza.line().trim_start_matches("# "));
    for n in &outcome.notes {
        let _ = writeln!(s, "{n}");
    }
    for c in &outcome.checks {
        let _ = writeln!(s, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = outcome.checks.iter().filter(|c| c.pass).count();
    let _ = writeln!(s, "result: {} ({passed}/{} checks)", if outcome.passed() { "PASS" } else { "FAIL" }, outcome.checks.len());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stanza(h: &str) -> Stanza {
        Stanza { seed: 7, config_sha256: h.into() }
    }

    fn outcome(v: &str) -> Outcome {
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec!["1".into(), v.into()]);
        Outcome { tables: vec![t], ..Default::default() }
    }

    #[test]
    fn stanza_round_trips() {
        let s = stanza("abc");
        assert_eq!(Stanza::parse_hash(&s.line()), Some("abc"));
        let csv = String::from_utf8(render_csv(&outcome("2").tables[0], &s).unwrap()).unwrap();
        assert_eq!(csv, format!("{}\na,b\n1,2\n", s.line()));
    }

    #[test]
    fn replays_are_compared() {
        let dir = tempfile::tempdir().unwrap();
        let mut first = outcome("2");
        write_artifacts(dir.path(), "demo", &stanza("h1"), &mut first).unwrap();
        assert!(first.checks.is_empty());

        let mut same = outcome("2");
        write_artifacts(dir.path(), "demo", &stanza("h1"), &mut same).unwrap();
        assert!(same.passed() && same.checks.len() == 1);

        let mut drifted = outcome("3");
        write_artifacts(dir.path(), "demo", &stanza("h1"), &mut drifted).unwrap();
        assert!(!drifted.passed());

        let mut other = outcome("3");
        write_artifacts(dir.path(), "demo", &stanza("h2"), &mut other).unwrap();
        assert!(other.passed());
        assert!(other.notes[0].starts_with("replay mismatch"));
    }
}
