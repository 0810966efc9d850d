use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde::Serialize;

use crate::args::{OutputArgs, OutputFormat};
use crate::error::CliError;

/// Floats in text output carry 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

pub fn opt_int(x: Option<u64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn flag(x: Option<bool>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub const REPLICA_COLUMNS: [&str; 13] = [
    "replica",
    "model",
    "b_or_a",
    "c",
    "n",
    "p",
    "root_cluster",
    "largest_cluster",
    "z0",
    "z_mut",
    "mutations",
    "statistic_value",
    "extinct",
];

/// One row of the replica schema; absent fields print empty.
#[derive(Debug, Clone, Default)]
pub struct ReplicaRow {
    pub replica: u64,
    pub model: &'static str,
    pub b_or_a: String,
    pub c: Option<f64>,
    pub n: Option<u64>,
    pub p: Option<f64>,
    pub root_cluster: Option<u64>,
    pub largest_cluster: Option<u64>,
    pub z0: String,
    pub z_mut: String,
    pub mutations: Option<u64>,
    pub statistic_value: Option<f64>,
    pub extinct: Option<bool>,
}

impl ReplicaRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.replica.to_string(),
            self.model.to_string(),
            self.b_or_a.clone(),
            opt_float(self.c),
            opt_int(self.n),
            opt_float(self.p),
            opt_int(self.root_cluster),
            opt_int(self.largest_cluster),
            self.z0.clone(),
            self.z_mut.clone(),
            opt_int(self.mutations),
            opt_float(self.statistic_value),
            flag(self.extinct),
        ]
    }
}

/// A header plus rows of preformatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn replicas(rows: &[ReplicaRow]) -> Self {
        let mut t = Self::new(&REPLICA_COLUMNS);
        t.rows = rows.iter().map(ReplicaRow::cells).collect();
        t
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes the CSV table or the JSON summary to the configured sink.
pub fn emit<S: Serialize>(out: &OutputArgs, table: &Table, summary: &S) -> Result<(), CliError> {
    let text = match out.output {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(summary).map_err(io::Error::from)?;
            s.push('\n');
            s
        }
    };
    match &out.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
            lock.flush()?;
        }
    }
    Ok(())
}
