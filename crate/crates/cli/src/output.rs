// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Run directories, manifests and the CSV formats shared between commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use cqsim_core::cq_master::EvolutionResult;
use cqsim_core::unraveling::ObservableTable;

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to repeat a run: the command line, the resolved config
/// and digests of every input and output file.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub scenario: Option<String>,
    pub config_hash: Option<String>,
    /// Canonical resolved config; also written to `config.toml`.
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub exit_code: i32,
}

pub struct RunDir {
    path: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            outputs: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize to JSON");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<(), CliError> {
        manifest.inputs = std::mem::take(&mut self.inputs);
        manifest.outputs = std::mem::take(&mut self.outputs);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let p = self.path.join("manifest.json");
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory CSV");
    for r in rows {
        w.write_record(&r).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

/// Time series of an evolution: one row per recorded step.
pub fn evolution_csv(r: &EvolutionResult) -> Vec<u8> {
    let mut header: Vec<String> = [
        "t",
        "trace",
        "min_p",
        "min_eig",
        "mean_h",
        "mean_pi",
        "var_h",
        "var_pi",
        "hermiticity",
        "boundary",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(r.observable_names.iter().cloned());
    let rows = r.records.iter().map(|d| {
        let mut row = vec![
            num(d.t),
            num(d.trace),
            num(d.min_p),
            d.min_eig.map_or_else(|| "NaN".to_string(), num),
            num(d.mean_h),
            num(d.mean_pi),
            num(d.var_h),
            num(d.var_pi),
            num(d.hermiticity),
            num(d.boundary_ratio),
        ];
        row.extend(d.observables.iter().map(|&x| num(x)));
        row
    });
    csv_bytes(header, rows)
}

/// Ensemble means with a `<name>_se` standard-error column per observable.
pub fn table_csv(t: &ObservableTable) -> Vec<u8> {
    let mut header = vec!["t".to_string()];
    for n in &t.names {
        header.push(n.clone());
        header.push(format!("{n}_se"));
    }
    let rows = t.times.iter().enumerate().map(|(ti, &time)| {
        let mut row = vec![num(time)];
        for o in 0..t.names.len() {
            row.push(num(t.mean[ti][o]));
            row.push(num(t.stderr[ti][o]));
        }
        row
    });
    csv_bytes(header, rows)
}

const DIAGNOSTIC_COLUMNS: &[&str] = &[
    "trace",
    "min_p",
    "min_eig",
    "var_h",
    "var_pi",
    "hermiticity",
    "boundary",
];

/// Reads an `evolve` or `unravel` CSV. Every column other than `t` and the
/// evolution diagnostics becomes an observable; a `<name>_se` column supplies
/// its standard error, otherwise the error is zero.
pub fn read_table(path: &Path) -> Result<ObservableTable, CliError> {
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let t_col = header
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| bad("no t column".into()))?;
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if i == t_col || h.ends_with("_se") || DIAGNOSTIC_COLUMNS.contains(&h.as_str()) {
            continue;
        }
        let se = header.iter().position(|x| *x == format!("{h}_se"));
        names.push(h.clone());
        cols.push((i, se));
    }
    if names.is_empty() {
        return Err(bad("no observable columns".into()));
    }
    let mut table = ObservableTable {
        names,
        times: Vec::new(),
        mean: Vec::new(),
        stderr: Vec::new(),
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let get = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .ok_or_else(|| bad(format!("row {}: missing column {i}", line + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", line + 2)))
        };
        table.times.push(get(t_col)?);
        let mut m = Vec::with_capacity(cols.len());
        let mut s = Vec::with_capacity(cols.len());
        for &(c, se) in &cols {
            m.push(get(c)?);
            s.push(match se {
                Some(k) => get(k)?,
                None => 0.0,
            });
        }
        table.mean.push(m);
        table.stderr.push(s);
    }
    Ok(table)
}
