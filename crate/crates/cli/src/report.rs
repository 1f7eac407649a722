use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA: &str = "hamrank-report/1";

/// CSV summary columns, in order.
pub const CSV_COLUMNS: [&str; 8] = [
    "command",
    "status",
    "n",
    "k",
    "dim",
    "pairs_checked",
    "violations",
    "seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Failed,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Certified => 0,
            Status::Failed => 1,
            Status::Error => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub mode: String,
    pub pairs_checked: u64,
    pub violations: u64,
    /// First few violating pairs, in pair order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<(usize, usize)>,
}

impl Tally {
    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

/// One row of the bounds table: an achieved quantity against the number
/// the construction claims for it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundRow {
    pub quantity: String,
    pub achieved: String,
    pub claimed: String,
    pub relation: String,
    pub holds: bool,
}

impl BoundRow {
    pub fn le(quantity: &str, achieved: impl ToString, claimed: impl ToString, holds: bool) -> Self {
        Self::new(quantity, "<=", achieved, claimed, holds)
    }

    pub fn eq(quantity: &str, achieved: impl ToString, claimed: impl ToString) -> Self {
        let (a, c) = (achieved.to_string(), claimed.to_string());
        let holds = a == c;
        Self::new(quantity, "==", a, c, holds)
    }

    fn new(quantity: &str, relation: &str, achieved: impl ToString, claimed: impl ToString, holds: bool) -> Self {
        BoundRow {
            quantity: quantity.into(),
            achieved: achieved.to_string(),
            claimed: claimed.to_string(),
            relation: relation.into(),
            holds,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub status: Status,
    pub config: RunConfig,
    /// Metadata of what was built or loaded: sizes, dims, orders, gammas,
    /// seeds, retries.
    pub construction: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verification: Vec<(String, Tally)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Kept apart so the rest of the report is reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Report {
            schema: SCHEMA.into(),
            command: command.into(),
            status: Status::Error,
            config: config.clone(),
            construction: Map::new(),
            verification: Vec::new(),
            bounds: Vec::new(),
            error: None,
            timing: None,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("plain data serializes");
        self.construction.insert(key.into(), v);
    }

    pub fn tally(&mut self, name: &str, t: Tally) {
        self.verification.push((name.into(), t));
    }

    /// Certified iff every tally is clean and every bound holds.
    pub fn finish(&mut self) {
        let clean = self.verification.iter().all(|(_, t)| t.is_clean()) && self.bounds.iter().all(|b| b.holds);
        self.status = if self.error.is_some() {
            Status::Error
        } else if clean {
            Status::Certified
        } else {
            Status::Failed
        };
    }

    pub fn fail(&mut self, e: &CliError) {
        self.error = Some(e.to_string());
        self.status = Status::Error;
    }

    /// JSON without timing; identical for identical runs.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.timing = None;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn field(&self, key: &str) -> String {
        match self.construction.get(key) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(v) => v.to_string(),
        }
    }

    pub fn csv_record(&self) -> [String; 8] {
        let pairs: u64 = self.verification.iter().map(|(_, t)| t.pairs_checked).sum();
        let violations: u64 = self.verification.iter().map(|(_, t)| t.violations).sum();
        let status = serde_json::to_value(self.status).expect("enum serializes");
        [
            self.command.clone(),
            status.as_str().unwrap_or_default().to_string(),
            self.field("n"),
            self.field("k"),
            self.field("dim"),
            pairs.to_string(),
            violations.to_string(),
            self.config.seed.to_string(),
        ]
    }

    /// Writes the CSV summary, with header, as a single record.
    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(CSV_COLUMNS)?;
        w.write_record(self.csv_record())?;
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}
