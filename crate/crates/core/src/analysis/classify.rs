use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MixtureVector;
use crate::collation::FilteredCollation;
use crate::error::{Error, Result};
use crate::matrix::CollationMatrix;
use crate::nnls;

/// One witness's weighted attestations over the rows of a factorized matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingVector {
    pub witness: String,
    /// `(row, value)`, sorted by row.
    pub entries: Vec<(usize, f64)>,
    /// Rows of every unit at which the witness is extant, sorted.
    pub extant_rows: Vec<usize>,
}

impl ReadingVector {
    /// Builds from attested rows, weighting each by the matrix's row weight
    /// and extending the extant set to every row of each attested unit.
    pub fn from_rows(
        witness: impl Into<String>,
        rows: &[usize],
        x: &CollationMatrix,
    ) -> Result<Self> {
        let mut attested: Vec<usize> = rows.to_vec();
        attested.sort_unstable();
        attested.dedup();
        if let Some(&bad) = attested.iter().find(|&&r| r >= x.m()) {
            return Err(Error::Dimension(format!(
                "row {bad} outside {} rows",
                x.m()
            )));
        }
        let units: BTreeSet<usize> = attested.iter().map(|&r| x.unit_of_row()[r]).collect();
        let extant_rows = (0..x.m())
            .filter(|r| units.contains(&x.unit_of_row()[*r]))
            .collect();
        Ok(ReadingVector {
            witness: witness.into(),
            entries: attested.iter().map(|&r| (r, x.row_weights()[r])).collect(),
            extant_rows,
        })
    }

    /// The named secondary witness of `f`, against the matrix built from `f`.
    pub fn for_secondary(
        f: &FilteredCollation,
        x: &CollationMatrix,
        witness: &str,
    ) -> Result<Self> {
        let sec = f
            .secondary_witness(witness)
            .ok_or_else(|| Error::UnknownWitness(witness.to_string()))?;
        Self::from_rows(witness, &sec.rows, x)
    }

    /// Column `j` of `x` as a reading vector (used for self-consistency checks
    /// on primary witnesses). Structural entries count as attestations even
    /// when their weight is zero.
    pub fn from_column(x: &CollationMatrix, j: usize) -> Self {
        let rows: Vec<usize> = (0..x.m())
            .filter(|&i| x.data().row(i).0.binary_search(&j).is_ok())
            .collect();
        let units: BTreeSet<usize> = rows.iter().map(|&i| x.unit_of_row()[i]).collect();
        ReadingVector {
            witness: x.col_labels()[j].clone(),
            entries: rows.iter().map(|&i| (i, x.data().get(i, j))).collect(),
            extant_rows: (0..x.m())
                .filter(|r| units.contains(&x.unit_of_row()[*r]))
                .collect(),
        }
    }

    /// Dense vector over exactly the given rows.
    pub fn dense(&self, rows: usize) -> DVector<f64> {
        let mut v = DVector::zeros(rows);
        for &(r, value) in &self.entries {
            v[r] = value;
        }
        v
    }
}

/// Non-negative least-squares mixture of `rv` against basis `w`, restricted to
/// the rows where the witness is extant. Coefficients are not normalized.
pub fn classify_secondary(w: &DMatrix<f64>, rv: &ReadingVector) -> Result<MixtureVector> {
    if rv.extant_rows.is_empty() {
        return Ok(MixtureVector::new(rv.witness.clone(), vec![0.0; w.ncols()]));
    }
    if let Some(&bad) = rv.extant_rows.last().filter(|&&r| r >= w.nrows()) {
        return Err(Error::Dimension(format!(
            "row {bad} outside a {}-row basis",
            w.nrows()
        )));
    }
    let a = w.select_rows(&rv.extant_rows);
    let full = rv.dense(w.nrows());
    let b = DVector::from_iterator(
        rv.extant_rows.len(),
        rv.extant_rows.iter().map(|&r| full[r]),
    );
    let sol = nnls::solve(&a, &b)?;
    Ok(MixtureVector::new(
        rv.witness.clone(),
        sol.x.iter().copied().collect(),
    ))
}
