use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CollationMatrix;

/// A named set of readings at one unit whose basis coefficients are pooled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingGroup {
    pub label: String,
    pub readings: Vec<String>,
}

impl ReadingGroup {
    pub fn new(
        label: impl Into<String>,
        readings: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        ReadingGroup {
            label: label.into(),
            readings: readings.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// The labelled group carries at least twice the support of every rival.
    Group(String),
    Split,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Group(label) => f.write_str(label),
            Verdict::Split => f.write_str("Split"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DividedVerdict {
    pub unit: String,
    pub groups: Vec<String>,
    /// Pooled basis coefficient per cluster, per group.
    pub scores: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
}

/// Index of the group whose score is at least twice every other score.
pub(crate) fn decisive(scores: &[f64]) -> Option<usize> {
    let (best, top) =
        scores
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, s)| if s > acc.1 { (i, s) } else { acc },
            );
    let dominates = scores
        .iter()
        .enumerate()
        .all(|(i, &s)| i == best || top >= 2.0 * s);
    (top > 0.0 && dominates).then_some(best)
}

/// Per-cluster support for one unit. Retained readings of the unit that no
/// group names become singleton groups labelled by their reading id.
pub fn divided_reading_support(
    w: &DMatrix<f64>,
    x: &CollationMatrix,
    unit: &str,
    grouping: &[ReadingGroup],
) -> Result<DividedVerdict> {
    if w.nrows() != x.m() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, matrix {}",
            w.nrows(),
            x.m()
        )));
    }
    let rows = x.rows_of_unit(unit);
    if rows.is_empty() {
        return Err(Error::UnknownUnit(unit.to_string()));
    }
    let row_of = |reading: &str| {
        rows.iter()
            .copied()
            .find(|&r| x.row_labels()[r].reading == reading)
    };
    let mut claimed = vec![false; rows.len()];
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for g in grouping {
        let mut members = Vec::new();
        for reading in &g.readings {
            let r = row_of(reading).ok_or_else(|| Error::UnknownReading {
                unit: unit.to_string(),
                reading: reading.clone(),
            })?;
            let slot = rows.iter().position(|&q| q == r).unwrap();
            if !claimed[slot] {
                claimed[slot] = true;
                members.push(r);
            }
        }
        groups.push((g.label.clone(), members));
    }
    for (slot, &r) in rows.iter().enumerate() {
        if !claimed[slot] {
            groups.push((x.row_labels()[r].reading.clone(), vec![r]));
        }
    }
    if groups.len() < 2 {
        return Err(Error::NotContested {
            unit: unit.to_string(),
            groups: groups.len(),
        });
    }
    let k = w.ncols();
    let scores: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            groups
                .iter()
                .map(|(_, members)| members.iter().map(|&r| w[(r, c)]).sum())
                .collect()
        })
        .collect();
    let verdicts = scores
        .iter()
        .map(|s| match decisive(s) {
            Some(g) => Verdict::Group(groups[g].0.clone()),
            None => Verdict::Split,
        })
        .collect();
    Ok(DividedVerdict {
        unit: unit.to_string(),
        groups: groups.into_iter().map(|(label, _)| label).collect(),
        scores,
        verdicts,
    })
}
