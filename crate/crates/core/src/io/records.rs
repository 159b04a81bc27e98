//! Result records and flat plot tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything one experiment run produced. `aggregates` and `per_seed`
/// depend only on the configuration; `wall_time_s` does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub per_seed: Value,
    pub aggregates: Value,
    pub fits: Value,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl ResultRecord {
    pub fn new(experiment: &str, config_hash: &str) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            code_version: CODE_VERSION.into(),
            per_seed: Value::Null,
            aggregates: Value::Null,
            fits: Value::Null,
            warnings: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.json", self.experiment)), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// The parts that must reproduce exactly under the same config hash.
    pub fn deterministic_part(&self) -> (&str, &Value, &Value, &Value) {
        (&self.config_hash, &self.per_seed, &self.aggregates, &self.fits)
    }
}

/// Header plus rows, written as comma-separated text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        let row: Vec<String> = row.into_iter().collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", self.name)))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form; NaN and infinities are written as such.
/// Negative zero is written as `0.0`.
pub fn num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:?}")
}
