//! On-disk run artifacts.
//!
//! A factorization run directory holds:
//!
//! | file            | content                                              |
//! |-----------------|------------------------------------------------------|
//! | `W.csv`         | basis, one row per reading: `unit,reading,C1..Ck`    |
//! | `H.csv`         | mixture, one row per cluster: `cluster,<witnesses>`  |
//! | `stats.json`    | [`FactorStats`]                                      |
//! | `X.txt`         | the weighted matrix as triplets                      |
//! | `labels.json`   | [`MatrixLabels`] sidecar for `X.txt`                 |
//! | `manifest.json` | [`RunManifest`] needed to replay the run             |
//!
//! Every file set is written through [`AtomicBatch`]: all contents are staged
//! in temporary files inside the target directory and renamed into place only
//! once every write has succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::collation::{ExclusionPolicy, ReadingKey};
use crate::error::{Error, Result};
use crate::factorize::{FactorConfig, FactorStats, Factorization};
use crate::matrix::{CollationMatrix, CsrMatrix, MatrixLabels, Weighting};

pub const BASIS_FILE: &str = "W.csv";
pub const MIXTURE_FILE: &str = "H.csv";
pub const STATS_FILE: &str = "stats.json";
pub const MATRIX_FILE: &str = "X.txt";
pub const LABELS_FILE: &str = "labels.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a factorization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub input: PathBuf,
    pub policy: ExclusionPolicy,
    pub weighting: Weighting,
    pub config: FactorConfig,
    pub out_dir: PathBuf,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn new(
        input: PathBuf,
        policy: ExclusionPolicy,
        weighting: Weighting,
        config: FactorConfig,
        out_dir: PathBuf,
    ) -> Self {
        let now = unix_now();
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            input,
            policy,
            weighting,
            config,
            out_dir,
            started_unix: now,
            finished_unix: now,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| artifact_error(path, e))
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A set of files committed together by write-then-rename.
#[derive(Debug, Default)]
pub struct AtomicBatch {
    files: Vec<(String, Vec<u8>)>,
}

impl AtomicBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, contents: Vec<u8>) -> &mut Self {
        self.files.push((name.into(), contents));
        self
    }

    pub fn add_json<T: Serialize>(
        &mut self,
        name: impl Into<String>,
        value: &T,
    ) -> Result<&mut Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(self.add(name, bytes))
    }

    /// Stages every file in `dir` (created if missing), then renames them all
    /// into place. A failure while staging leaves no new files behind.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        if let Some((bad, _)) = self
            .files
            .iter()
            .find(|(name, _)| name.is_empty() || name.contains(['/', '\\']))
        {
            return Err(Error::Config(format!(
                "artifact name `{bad}` must be a plain file name"
            )));
        }
        std::fs::create_dir_all(dir)?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, contents) in self.files {
            let mut tmp = NamedTempFile::new_in(dir)?;
            tmp.write_all(&contents)?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, target) in staged {
            tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
            written.push(target);
        }
        Ok(written)
    }
}

fn cluster_header(k: usize) -> impl Iterator<Item = String> {
    (1..=k).map(|c| format!("C{c}"))
}

/// `unit,reading,C1..Ck`.
pub fn basis_csv(w: &DMatrix<f64>, rows: &[ReadingKey]) -> Result<Vec<u8>> {
    if w.nrows() != rows.len() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, {} labels",
            w.nrows(),
            rows.len()
        )));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["unit".to_string(), "reading".to_string()];
    header.extend(cluster_header(w.ncols()));
    out.write_record(&header)?;
    for (i, key) in rows.iter().enumerate() {
        let mut record = vec![key.unit.clone(), key.reading.clone()];
        record.extend(w.row(i).iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    finish_csv(out)
}

/// `cluster,<witnesses>`, one row per cluster.
pub fn mixture_csv(h: &DMatrix<f64>, witnesses: &[String]) -> Result<Vec<u8>> {
    if h.ncols() != witnesses.len() {
        return Err(Error::Dimension(format!(
            "mixture has {} columns, {} labels",
            h.ncols(),
            witnesses.len()
        )));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["cluster".to_string()];
    header.extend(witnesses.iter().cloned());
    out.write_record(&header)?;
    for (c, name) in cluster_header(h.nrows()).enumerate() {
        let mut record = vec![name];
        record.extend(h.row(c).iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    finish_csv(out)
}

pub(crate) fn finish_csv(out: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    out.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Adds every run file except the manifest.
pub fn stage_run(batch: &mut AtomicBatch, x: &CollationMatrix, fit: &Factorization) -> Result<()> {
    batch.add(BASIS_FILE, basis_csv(&fit.w, x.row_labels())?);
    batch.add(MIXTURE_FILE, mixture_csv(&fit.h, x.col_labels())?);
    batch.add_json(STATS_FILE, &fit.stats)?;
    let mut triplets = Vec::new();
    x.data().write_triplets(&mut triplets)?;
    batch.add(MATRIX_FILE, triplets);
    batch.add_json(LABELS_FILE, &x.labels())?;
    Ok(())
}

pub fn write_run(
    dir: &Path,
    x: &CollationMatrix,
    fit: &Factorization,
    manifest: &RunManifest,
) -> Result<Vec<PathBuf>> {
    let mut batch = AtomicBatch::new();
    stage_run(&mut batch, x, fit)?;
    batch.add_json(MANIFEST_FILE, manifest)?;
    batch.commit(dir)
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub x: CollationMatrix,
    pub stats: FactorStats,
    pub manifest: Option<RunManifest>,
}

impl RunArtifacts {
    pub fn k(&self) -> usize {
        self.w.ncols()
    }
}

fn artifact_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Artifact {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| artifact_error(path, e))
}

/// Header, label columns and numeric columns of one CSV table.
type NumericTable = (Vec<String>, Vec<Vec<String>>, Vec<Vec<f64>>);

/// Numeric block of a CSV whose first `skip` columns are labels.
fn read_numeric_csv(path: &Path, skip: usize) -> Result<NumericTable> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| artifact_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < skip {
        return Err(artifact_error(path, "header is too short"));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| artifact_error(path, e))?;
        if record.len() != header.len() {
            return Err(artifact_error(
                path,
                format!("row {} has {} fields", i + 1, record.len()),
            ));
        }
        labels.push(record.iter().take(skip).map(str::to_string).collect());
        let row = record
            .iter()
            .skip(skip)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| artifact_error(path, format!("row {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        values.push(row);
    }
    Ok((header, labels, values))
}

fn to_dmatrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Reads a run directory, cross-checking the labels of every file.
pub fn load_run(dir: &Path) -> Result<RunArtifacts> {
    let labels_path = dir.join(LABELS_FILE);
    let labels: MatrixLabels = serde_json::from_str(&read_text(&labels_path)?)
        .map_err(|e| artifact_error(&labels_path, e))?;
    let matrix_path = dir.join(MATRIX_FILE);
    let data = {
        let file =
            std::fs::File::open(&matrix_path).map_err(|e| artifact_error(&matrix_path, e))?;
        CsrMatrix::read_triplets(std::io::BufReader::new(file))
            .map_err(|e| artifact_error(&matrix_path, e))?
    };
    let x =
        CollationMatrix::from_parts(data, labels).map_err(|e| artifact_error(&matrix_path, e))?;

    let w_path = dir.join(BASIS_FILE);
    let (w_header, w_labels, w_rows) = read_numeric_csv(&w_path, 2)?;
    let k = w_header.len() - 2;
    let expected: Vec<Vec<String>> = x
        .row_labels()
        .iter()
        .map(|key| vec![key.unit.clone(), key.reading.clone()])
        .collect();
    if w_labels != expected {
        return Err(artifact_error(
            &w_path,
            "reading labels disagree with labels.json",
        ));
    }
    let w = to_dmatrix(&w_rows, k);

    let h_path = dir.join(MIXTURE_FILE);
    let (h_header, _, h_rows) = read_numeric_csv(&h_path, 1)?;
    if h_header[1..] != *x.col_labels() {
        return Err(artifact_error(
            &h_path,
            "witness labels disagree with labels.json",
        ));
    }
    if h_rows.len() != k {
        return Err(artifact_error(
            &h_path,
            format!("{} clusters, W.csv has {k}", h_rows.len()),
        ));
    }
    let h = to_dmatrix(&h_rows, x.n());

    let stats_path = dir.join(STATS_FILE);
    let stats: FactorStats = serde_json::from_str(&read_text(&stats_path)?)
        .map_err(|e| artifact_error(&stats_path, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        Some(RunManifest::read(&manifest_path)?)
    } else {
        None
    };
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        w,
        h,
        x,
        stats,
        manifest,
    })
}
