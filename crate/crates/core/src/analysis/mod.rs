//! Reading a factorization as clusters: assignments, mixture proportions,
//! ranked profiles, divided-reading verdicts, and classification of
//! fragmentary witnesses against a fixed basis.
//!
//! Cluster indices are 0-based here; artifact files label them `C1..Ck`.

mod classify;
mod divided;

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::collation::ReadingKey;
use crate::error::{Error, Result};

pub use classify::{classify_secondary, ReadingVector};
pub use divided::{divided_reading_support, DividedVerdict, ReadingGroup, Verdict};

/// One witness's cluster coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureVector {
    pub witness: String,
    pub coefficients: Vec<f64>,
    /// Proportions summing to 1; absent when every coefficient is zero.
    pub normalized: Option<Vec<f64>>,
}

impl MixtureVector {
    pub fn new(witness: impl Into<String>, coefficients: Vec<f64>) -> Self {
        MixtureVector {
            witness: witness.into(),
            coefficients,
            normalized: None,
        }
    }

    /// From column `j` of the mixture matrix.
    pub fn from_column(h: &DMatrix<f64>, j: usize, witness: impl Into<String>) -> Self {
        Self::new(witness, h.column(j).iter().copied().collect())
    }

    pub fn is_classifiable(&self) -> bool {
        self.coefficients.iter().any(|&c| c > 0.0)
    }

    /// Dominant cluster, lowest index on ties; `None` when all zero.
    pub fn dominant(&self) -> Option<usize> {
        argmax(self.coefficients.iter().copied())
    }
}

/// Divides each coefficient by the row sum. All-zero input comes back
/// without proportions (unclassifiable).
pub fn normalize_mixture(v: &MixtureVector) -> MixtureVector {
    let total: f64 = v.coefficients.iter().sum();
    let normalized = (total > 0.0).then(|| v.coefficients.iter().map(|c| c / total).collect());
    MixtureVector {
        witness: v.witness.clone(),
        coefficients: v.coefficients.clone(),
        normalized,
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Cluster per witness column; `None` for an all-zero column.
    pub labels: Vec<Option<usize>>,
    pub sizes: Vec<usize>,
    pub unassigned: usize,
}

/// Labels each witness with the cluster of its largest coefficient.
pub fn assign_clusters(h: &DMatrix<f64>) -> Assignment {
    let k = h.nrows();
    let labels: Vec<Option<usize>> = (0..h.ncols())
        .map(|j| argmax(h.column(j).iter().copied()))
        .collect();
    let mut sizes = vec![0; k];
    let mut unassigned = 0;
    for label in &labels {
        match label {
            Some(c) => sizes[*c] += 1,
            None => unassigned += 1,
        }
    }
    Assignment {
        labels,
        sizes,
        unassigned,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedWitness {
    pub witness: String,
    pub coefficient: f64,
    /// Whether this cluster is the witness's dominant one.
    pub member: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReading {
    pub unit: String,
    pub reading: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingRanking {
    pub entries: Vec<RankedReading>,
    /// The basis column is identically zero.
    pub empty_cluster: bool,
}

/// Descending by coefficient, then ascending by label.
fn ranking_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn check_cluster(cluster: usize, k: usize) -> Result<()> {
    if cluster >= k {
        return Err(Error::Config(format!(
            "cluster {cluster} out of range for k = {k}"
        )));
    }
    Ok(())
}

/// All witnesses ranked by their coefficient for `cluster`, members and
/// non-members alike, truncated to `limit`.
pub fn top_witnesses(
    h: &DMatrix<f64>,
    witnesses: &[String],
    cluster: usize,
    limit: usize,
) -> Result<Vec<RankedWitness>> {
    check_cluster(cluster, h.nrows())?;
    if witnesses.len() != h.ncols() {
        return Err(Error::Dimension(format!(
            "{} witness labels for {} columns",
            witnesses.len(),
            h.ncols()
        )));
    }
    let assignment = assign_clusters(h);
    let mut order: Vec<usize> = (0..h.ncols()).collect();
    order.sort_by(|&a, &b| {
        ranking_order(
            (h[(cluster, a)], &witnesses[a]),
            (h[(cluster, b)], &witnesses[b]),
        )
    });
    Ok(order
        .into_iter()
        .take(limit)
        .map(|j| RankedWitness {
            witness: witnesses[j].clone(),
            coefficient: h[(cluster, j)],
            member: assignment.labels[j] == Some(cluster),
        })
        .collect())
}

/// Readings ranked by basis coefficient for `cluster`.
pub fn top_readings(
    w: &DMatrix<f64>,
    readings: &[ReadingKey],
    cluster: usize,
    limit: usize,
) -> Result<ReadingRanking> {
    check_cluster(cluster, w.ncols())?;
    if readings.len() != w.nrows() {
        return Err(Error::Dimension(format!(
            "{} reading labels for {} rows",
            readings.len(),
            w.nrows()
        )));
    }
    if w.column(cluster).iter().all(|&v| v == 0.0) {
        return Ok(ReadingRanking {
            entries: Vec::new(),
            empty_cluster: true,
        });
    }
    let labels: Vec<String> = readings.iter().map(ReadingKey::label).collect();
    let mut order: Vec<usize> = (0..w.nrows()).collect();
    order.sort_by(|&a, &b| {
        ranking_order((w[(a, cluster)], &labels[a]), (w[(b, cluster)], &labels[b]))
    });
    Ok(ReadingRanking {
        entries: order
            .into_iter()
            .take(limit)
            .map(|i| RankedReading {
                unit: readings[i].unit.clone(),
                reading: readings[i].reading.clone(),
                coefficient: w[(i, cluster)],
            })
            .collect(),
        empty_cluster: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    pub witnesses: Vec<RankedWitness>,
    pub readings: ReadingRanking,
}

pub fn cluster_profile(
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    readings: &[ReadingKey],
    witnesses: &[String],
    cluster: usize,
    limit: usize,
) -> Result<ClusterProfile> {
    Ok(ClusterProfile {
        cluster,
        size: assign_clusters(h).sizes.get(cluster).copied().unwrap_or(0),
        witnesses: top_witnesses(h, witnesses, cluster, limit)?,
        readings: top_readings(w, readings, cluster, limit)?,
    })
}
