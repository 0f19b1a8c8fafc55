//! Dataset directories: one CSV per domain plus `labels.json`.

use std::fs;
use std::path::{Path, PathBuf};

use pdae_core::genmodel::{Domain, PerturbationLabel};
use pdae_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const LABELS_FILE: &str = "labels.json";
pub const DATA_FORMAT_VERSION: u32 = 1;

/// Float formatting with 17 significant digits, which round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainEntry {
    pub id: usize,
    pub file: String,
    pub label: Vec<f64>,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsFile {
    pub format_version: u32,
    pub observed_dim: usize,
    /// Width of the stored ground-truth latents, 0 when absent.
    pub latent_dim: usize,
    pub domains: Vec<DomainEntry>,
}

pub fn domain_file(e: usize) -> String {
    format!("domain_{e}.csv")
}

fn schema(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{}: {msg}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| schema(path, e))
}

/// Writes a matrix with the given column names.
pub fn write_matrix_csv(path: &Path, header: &[String], m: &Matrix) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Writes every domain and the label index. Returns the created paths.
pub fn write_dataset(dir: &Path, domains: &[Domain], with_latents: bool) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let observed_dim = domains.first().map_or(0, |d| d.x.cols());
    let latent_dim = if with_latents {
        domains
            .first()
            .and_then(|d| d.z_pert.as_ref())
            .map_or(0, Matrix::cols)
    } else {
        0
    };
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (e, d) in domains.iter().enumerate() {
        let mut header = columns("x", observed_dim);
        let table = match (&d.z_pert, latent_dim) {
            (Some(z), k) if k > 0 => {
                header.extend(columns("z", k));
                d.x.hstack(z)?
            }
            _ => d.x.clone(),
        };
        let name = domain_file(e);
        let path = dir.join(&name);
        write_matrix_csv(&path, &header, &table)?;
        files.push(path);
        entries.push(DomainEntry {
            id: e,
            file: name,
            label: d.label.as_slice().to_vec(),
            rows: d.len(),
        });
    }
    let labels = LabelsFile {
        format_version: DATA_FORMAT_VERSION,
        observed_dim,
        latent_dim,
        domains: entries,
    };
    let path = dir.join(LABELS_FILE);
    write_json(&path, &labels)?;
    files.push(path);
    Ok(files)
}

/// Reads a CSV with a header row into column names and a matrix.
pub fn read_matrix_csv(path: &Path) -> CliResult<(Vec<String>, Matrix)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| schema(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(path, e))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| schema(path, format!("row {}, column `{}`: `{field}` is not a number", i + 1, header[j])))?;
            data.push(v);
        }
        rows += 1;
    }
    let m = Matrix::from_vec(rows, header.len(), data).map_err(|e| schema(path, e))?;
    Ok((header, m))
}

/// Loads every domain listed in `labels.json`.
pub fn read_dataset(dir: &Path) -> CliResult<Vec<Domain>> {
    let labels_path = dir.join(LABELS_FILE);
    if !labels_path.exists() {
        return Err(CliError::io(&labels_path, "missing label index"));
    }
    let labels: LabelsFile = read_json(&labels_path)?;
    if labels.format_version != DATA_FORMAT_VERSION {
        return Err(schema(
            &labels_path,
            format!("unsupported format_version {}", labels.format_version),
        ));
    }
    if labels.domains.is_empty() {
        return Err(schema(&labels_path, "`domains` is empty"));
    }
    let k = labels.domains[0].label.len();
    let mut out = Vec::with_capacity(labels.domains.len());
    for (e, entry) in labels.domains.iter().enumerate() {
        if entry.id != e {
            return Err(schema(&labels_path, format!("domains[{e}].id is {}, expected {e}", entry.id)));
        }
        if entry.label.len() != k {
            return Err(schema(
                &labels_path,
                format!("domains[{e}].label has length {}, expected {k}", entry.label.len()),
            ));
        }
        let path = dir.join(&entry.file);
        let (header, table) = read_matrix_csv(&path)?;
        let mut expected = columns("x", labels.observed_dim);
        expected.extend(columns("z", labels.latent_dim));
        if header != expected {
            return Err(schema(&path, format!("header {header:?}, expected {expected:?}")));
        }
        if table.rows() != entry.rows {
            return Err(schema(&path, format!("{} rows, labels.json says {}", table.rows(), entry.rows)));
        }
        let x = table.select_cols(0..labels.observed_dim);
        let z = (labels.latent_dim > 0)
            .then(|| table.select_cols(labels.observed_dim..labels.observed_dim + labels.latent_dim));
        out.push(Domain::new(PerturbationLabel::new(entry.label.clone())?, x, z)?);
    }
    Ok(out)
}
