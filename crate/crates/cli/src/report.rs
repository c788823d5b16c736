//! Gates, tables and the files written for every run.

use std::fs;
use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{Experiment, ExperimentConfig};

/// A pass/fail check reported in the summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Gate {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// One CSV file: `name.csv` with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Floats are written with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub experiment: Experiment,
    /// Plain facts for the summary (hazard class, verdict, ...).
    pub notes: Vec<(String, String)>,
    pub gates: Vec<Gate>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn new(experiment: Experiment) -> Self {
        Outcome {
            experiment,
            notes: Vec::new(),
            gates: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn gate(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.gates.push(Gate::new(name, pass, detail));
    }

    pub fn pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn find_gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary(&self, config: &ExperimentConfig) -> String {
        let mut s = format!(
            "experiment: {}\nconfig_sha256: {}\nroot_seed: {}\nn_paths: {}\nn_steps: {}\n",
            self.experiment,
            config.hash(),
            config.root_seed,
            config.n_paths,
            config.n_steps
        );
        for (k, v) in &self.notes {
            s.push_str(&format!("{k}: {v}\n"));
        }
        s.push_str("statistical gates are |z| <= 4 per cell (Bonferroni-style allowance over many cells)\n");
        for g in &self.gates {
            s.push_str(&format!(
                "{} {}: {}\n",
                if g.pass { "PASS" } else { "FAIL" },
                g.name,
                g.detail
            ));
        }
        s.push_str(&format!("overall: {}\n", if self.pass() { "PASS" } else { "FAIL" }));
        s
    }
}

/// Writes the CSV tables, `summary.txt` and `manifest.txt` into `dir`.
pub fn write_outputs(outcome: &Outcome, config: &ExperimentConfig, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for t in &outcome.tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(dir.join("summary.txt"), outcome.summary(config))?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut files: Vec<String> = outcome.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
    files.sort();
    let manifest = format!(
        "experiment: {}\nconfig_sha256: {}\nroot_seed: {}\nenlarge-sim: {}\nenlarge-core: {}\nfiles: {}\ngenerated_unix: {stamp}\n",
        outcome.experiment,
        config.hash(),
        config.root_seed,
        env!("CARGO_PKG_VERSION"),
        enlarge_core::VERSION,
        files.join(" "),
    );
    fs::write(dir.join("manifest.txt"), manifest)?;
    fs::write(dir.join("config.toml"), config.to_toml())
}
