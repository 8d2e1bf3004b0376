//! Sparse reading-by-witness matrix and row weighting.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::collation::{FilteredCollation, ReadingKey};
use crate::error::{Error, Result};

/// Compressed sparse row storage with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from coordinate triplets. Duplicate coordinates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, v) in &sorted {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!(
                    "entry ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Dimension(format!(
                    "entry ({r}, {c}) = {v} is not a finite non-negative value"
                )));
            }
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Result<Self> {
        let mut triplets = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let v = dense[(r, c)];
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dense.nrows(), dense.ncols(), &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|i| vals[i]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] = v;
        }
        out
    }

    /// `‖X‖²_F`.
    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Nonzero count per row.
    pub fn row_counts(&self) -> Vec<usize> {
        (0..self.nrows)
            .map(|r| self.indptr[r + 1] - self.indptr[r])
            .collect()
    }

    pub fn scale_rows(&self, weights: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for (span, w) in self.indptr.windows(2).zip(weights) {
            for v in &mut out.values[span[0]..span[1]] {
                *v *= w;
            }
        }
        out
    }

    /// Reorders columns: new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<CsrMatrix> {
        if perm.len() != self.ncols {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let t: Vec<_> = self
            .triplets()
            .map(|(r, c, v)| (r, inverse[c], v))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Writes `m n nnz` then one 0-indexed `row col value` line per entry.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{r} {c} {v:?}")?;
        }
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(input: R) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = input.lines().enumerate();
        let (nrows, ncols, nnz) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(bad(1, "missing `m n nnz` header".into()));
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<usize> = line
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| bad(i + 1, format!("bad header field `{t}`")))
                })
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                return Err(bad(i + 1, "header must be `m n nnz`".into()));
            }
            break (parts[0], parts[1], parts[2]);
        };
        let mut triplets = Vec::with_capacity(nnz);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(bad(i + 1, "expected `row col value`".into()));
            }
            let r = t[0]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad row `{}`", t[0])))?;
            let c = t[1]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad column `{}`", t[1])))?;
            let v = t[2]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad value `{}`", t[2])))?;
            triplets.push((r, c, v));
        }
        if triplets.len() != nnz {
            return Err(bad(
                0,
                format!("header says {nnz} entries, found {}", triplets.len()),
            ));
        }
        Self::from_triplets(nrows, ncols, &triplets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Uniform,
    Idf,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Weighting::Uniform),
            "idf" => Ok(Weighting::Idf),
            other => Err(format!(
                "unknown weighting `{other}` (expected uniform|idf)"
            )),
        }
    }
}

/// Labels and weights travelling alongside the triplet file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixLabels {
    pub rows: Vec<ReadingKey>,
    pub cols: Vec<String>,
    pub row_weights: Vec<f64>,
}

/// The collation matrix `X`: readings as rows, primary witnesses as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CollationMatrix {
    data: CsrMatrix,
    row_labels: Vec<ReadingKey>,
    col_labels: Vec<String>,
    row_weights: Vec<f64>,
    units: Vec<String>,
    unit_of_row: Vec<usize>,
}

impl CollationMatrix {
    pub fn from_parts(data: CsrMatrix, labels: MatrixLabels) -> Result<Self> {
        if labels.rows.len() != data.nrows()
            || labels.cols.len() != data.ncols()
            || labels.row_weights.len() != data.nrows()
        {
            return Err(Error::Dimension(format!(
                "labels ({} rows, {} cols, {} weights) do not fit a {}x{} matrix",
                labels.rows.len(),
                labels.cols.len(),
                labels.row_weights.len(),
                data.nrows(),
                data.ncols()
            )));
        }
        let mut units: Vec<String> = Vec::new();
        let mut unit_of_row = Vec::with_capacity(labels.rows.len());
        for key in &labels.rows {
            let u = match units.iter().position(|u| *u == key.unit) {
                Some(u) => u,
                None => {
                    units.push(key.unit.clone());
                    units.len() - 1
                }
            };
            unit_of_row.push(u);
        }
        Ok(CollationMatrix {
            data,
            row_labels: labels.rows,
            col_labels: labels.cols,
            row_weights: labels.row_weights,
            units,
            unit_of_row,
        })
    }

    /// Uniform-weight matrix with labels generated as `r{i}` / `w{j}`; handy
    /// for numerical work that has no collation behind it.
    pub fn from_csr(data: CsrMatrix) -> Self {
        let rows = (0..data.nrows())
            .map(|i| ReadingKey::new(format!("r{i}"), "1"))
            .collect();
        let cols = (0..data.ncols()).map(|j| format!("w{j}")).collect();
        let row_weights = vec![1.0; data.nrows()];
        Self::from_parts(
            data,
            MatrixLabels {
                rows,
                cols,
                row_weights,
            },
        )
        .expect("generated labels fit")
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::from_csr(CsrMatrix::from_dense(dense)?))
    }

    pub fn data(&self) -> &CsrMatrix {
        &self.data
    }

    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.data.nnz()
    }

    pub fn row_labels(&self) -> &[ReadingKey] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn unit_of_row(&self) -> &[usize] {
        &self.unit_of_row
    }

    /// Rows belonging to `unit`, in row order.
    pub fn rows_of_unit(&self, unit: &str) -> Vec<usize> {
        self.row_labels
            .iter()
            .enumerate()
            .filter(|(_, k)| k.unit == unit)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn labels(&self) -> MatrixLabels {
        MatrixLabels {
            rows: self.row_labels.clone(),
            cols: self.col_labels.clone(),
            row_weights: self.row_weights.clone(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.frobenius_sq()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.data.to_dense()
    }

    /// Same matrix with columns reordered; labels follow their columns.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<CollationMatrix> {
        let data = self.data.permute_columns(perm)?;
        let mut labels = self.labels();
        labels.cols = perm.iter().map(|&j| self.col_labels[j].clone()).collect();
        Self::from_parts(data, labels)
    }
}

/// Binary matrix over primary witnesses, rows in retained-reading order.
pub fn build_matrix(f: &FilteredCollation) -> Result<CollationMatrix> {
    if f.readings().is_empty() || f.primary().is_empty() {
        return Err(Error::EmptyMatrix(format!(
            "{} retained readings, {} primary witnesses",
            f.readings().len(),
            f.primary().len()
        )));
    }
    let triplets: Vec<_> = f
        .primary_cells()
        .iter()
        .map(|&(r, c)| (r, c, 1.0))
        .collect();
    let data = CsrMatrix::from_triplets(f.readings().len(), f.primary().len(), &triplets)?;
    CollationMatrix::from_parts(
        data,
        MatrixLabels {
            rows: f.readings().to_vec(),
            cols: f.primary().to_vec(),
            row_weights: vec![1.0; f.readings().len()],
        },
    )
}

/// Inverse document frequency `ln(n / n_t)` per row, with `n_t` the number of
/// witnesses attesting the reading.
pub fn idf_weights(x: &CollationMatrix) -> Result<Vec<f64>> {
    let n = x.n() as f64;
    x.data
        .row_counts()
        .into_iter()
        .enumerate()
        .map(|(row, count)| {
            if count == 0 {
                Err(Error::UnattestedRow { row })
            } else {
                Ok((n / count as f64).ln())
            }
        })
        .collect()
}

/// Multiplies row `i` by `weights[i]`. Weights compose with any previously
/// applied ones.
pub fn apply_weights(x: &CollationMatrix, weights: &[f64]) -> Result<CollationMatrix> {
    if weights.len() != x.m() {
        return Err(Error::Dimension(format!(
            "{} weights for {} rows",
            weights.len(),
            x.m()
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Dimension(format!(
            "row weight {bad} is not finite and non-negative"
        )));
    }
    let mut out = x.clone();
    out.data = x.data.scale_rows(weights);
    for (rw, w) in out.row_weights.iter_mut().zip(weights) {
        *rw *= w;
    }
    Ok(out)
}

pub fn weighted(x: &CollationMatrix, scheme: Weighting) -> Result<CollationMatrix> {
    match scheme {
        Weighting::Uniform => Ok(x.clone()),
        Weighting::Idf => apply_weights(x, &idf_weights(x)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collation::{apply_exclusions, parse_collation, tests::TOY, ExclusionPolicy};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn toy_filtered(policy: ExclusionPolicy) -> CollationMatrix {
        let c = parse_collation(TOY).unwrap();
        build_matrix(&apply_exclusions(&c, &policy).unwrap()).unwrap()
    }

    #[test]
    fn toy_matrix_matches_printed_figure() {
        let x = toy_filtered(ExclusionPolicy::keep_all());
        let expected = dmatrix![
            1.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.0, 1.0;
            1.0, 0.0, 1.0, 0.0;
            0.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 0.0, 1.0;
            1.0, 1.0, 1.0, 0.0;
            0.0, 0.0, 0.0, 1.0
        ];
        assert_eq!(x.to_dense(), expected);
        assert_eq!(x.frobenius_sq(), x.nnz() as f64);
    }

    #[test]
    fn single_cell() {
        let c = parse_collation("witness\tunit\treading\na\tu\tr\n").unwrap();
        let x = build_matrix(&apply_exclusions(&c, &ExclusionPolicy::keep_all()).unwrap()).unwrap();
        assert_eq!(x.to_dense(), dmatrix![1.0]);
    }

    #[test]
    fn empty_filtered_collation_errors() {
        let c = parse_collation("").unwrap();
        let f = apply_exclusions(&c, &ExclusionPolicy::default()).unwrap();
        assert!(matches!(build_matrix(&f), Err(Error::EmptyMatrix(_))));
    }

    #[test]
    fn idf_endpoints() {
        let x = CollationMatrix::from_dense(&dmatrix![
            1.0, 1.0, 1.0, 1.0;
            1.0, 0.0, 0.0, 0.0;
            1.0, 1.0, 0.0, 0.0
        ])
        .unwrap();
        let w = idf_weights(&x).unwrap();
        assert_eq!(w[0], 0.0);
        assert_eq!(w[1], 4f64.ln());
        assert_relative_eq!(w[2], std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn idf_rejects_empty_row() {
        let x = CollationMatrix::from_dense(&dmatrix![1.0, 0.0; 0.0, 0.0]).unwrap();
        assert!(matches!(
            idf_weights(&x),
            Err(Error::UnattestedRow { row: 1 })
        ));
    }

    #[test]
    fn toy_idf_rows() {
        let x = toy_filtered(ExclusionPolicy {
            min_extant_readings: 0,
            ..ExclusionPolicy::default()
        });
        let w = idf_weights(&x).unwrap();
        let l2 = 2f64.ln();
        assert_eq!(w, vec![l2, l2, l2, (4.0f64 / 3.0).ln()]);
        let y = apply_weights(&x, &w).unwrap();
        assert_eq!(y.row_weights(), w.as_slice());
        for (r, c, v) in y.data().triplets() {
            assert_eq!(v, w[r] * x.data().get(r, c));
        }
    }

    #[test]
    fn weights_edge_cases() {
        let x = toy_filtered(ExclusionPolicy::keep_all());
        assert_eq!(apply_weights(&x, &vec![1.0; x.m()]).unwrap(), x);
        let mut w = vec![1.0; x.m()];
        w[2] = 0.0;
        let y = apply_weights(&x, &w).unwrap();
        assert!((0..x.n()).all(|c| y.data().get(2, c) == 0.0));
        assert!(matches!(
            apply_weights(&x, &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn triplet_file_roundtrip() {
        let x = toy_filtered(ExclusionPolicy::keep_all());
        let mut buf = Vec::new();
        x.data().write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("7 4 12\n"));
        let back = CsrMatrix::read_triplets(buf.as_slice()).unwrap();
        assert_eq!(&back, x.data());
        assert!(CsrMatrix::read_triplets("2 2 1\n".as_bytes()).is_err());
    }
}
