use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::CollationMatrix;

fn check_dims(x: &CollationMatrix, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != x.m() || h.ncols() != x.n() || w.ncols() != h.nrows() {
        return Err(Error::Dimension(format!(
            "X is {}x{}, W is {}x{}, H is {}x{}",
            x.m(),
            x.n(),
            w.nrows(),
            w.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(())
}

/// `Σᵢⱼ (Xᵢⱼ − (WH)ᵢⱼ)²`, evaluated row by row against the sparse `X` so
/// every term is a direct square (no Gram-matrix cancellation).
pub fn objective(x: &CollationMatrix, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    check_dims(x, w, h)?;
    let k = w.ncols();
    let mut total = 0.0;
    let mut wrow = vec![0.0; k];
    for i in 0..x.m() {
        for (c, slot) in wrow.iter_mut().enumerate() {
            *slot = w[(i, c)];
        }
        let (cols, vals) = x.data().row(i);
        let mut next = 0;
        let mut row_sum = 0.0;
        for j in 0..x.n() {
            let hj = h.column(j);
            let p: f64 = wrow.iter().zip(hj.iter()).map(|(a, b)| a * b).sum();
            let xv = if next < cols.len() && cols[next] == j {
                next += 1;
                vals[next - 1]
            } else {
                0.0
            };
            let r = xv - p;
            row_sum += r * r;
        }
        total += row_sum;
    }
    Ok(total)
}

/// `1 − objective / ‖X‖²_F`.
pub fn explained_variance(x: &CollationMatrix, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    let energy = x.frobenius_sq();
    if energy <= 0.0 {
        return Err(Error::ZeroMatrix("explained variance needs ‖X‖ > 0".into()));
    }
    Ok(1.0 - objective(x, w, h)? / energy)
}

/// Hoyer's sparseness `(√d − ‖v‖₁/‖v‖₂) / (√d − 1)`: 0 for constant vectors,
/// 1 for one-hot vectors.
pub fn hoyer_sparseness(v: &[f64]) -> Result<f64> {
    let d = v.len();
    if d < 2 {
        return Err(Error::Sparseness(format!(
            "need at least 2 elements, got {d}"
        )));
    }
    let l1: f64 = v.iter().map(|a| a.abs()).sum();
    let l2 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if l2 == 0.0 {
        return Err(Error::Sparseness("zero vector".into()));
    }
    // Both endpoints are structural; return them exactly rather than through
    // a ratio of rounded norms.
    if v.iter().filter(|a| **a != 0.0).count() == 1 {
        return Ok(1.0);
    }
    if v.iter().all(|a| a.abs() == v[0].abs()) {
        return Ok(0.0);
    }
    let root = (d as f64).sqrt();
    Ok(((root - l1 / l2) / (root - 1.0)).clamp(0.0, 1.0))
}

/// Matrix sparseness over all entries as one flattened vector.
pub fn matrix_sparseness(m: &DMatrix<f64>) -> Result<f64> {
    hoyer_sparseness(m.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn objective_small_cases() {
        let x = CollationMatrix::from_dense(&dmatrix![2.0]).unwrap();
        assert_eq!(objective(&x, &dmatrix![1.0], &dmatrix![1.0]).unwrap(), 1.0);

        let dense = dmatrix![1.0, 0.0, 2.0; 0.0, 3.0, 1.0];
        let x = CollationMatrix::from_dense(&dense).unwrap();
        let zw = DMatrix::zeros(2, 2);
        let zh = DMatrix::zeros(2, 3);
        assert_eq!(objective(&x, &zw, &zh).unwrap(), x.frobenius_sq());
        assert_eq!(explained_variance(&x, &zw, &zh).unwrap(), 0.0);
        assert!(objective(&x, &zw, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn exact_product_has_zero_residual() {
        let w = dmatrix![1.0, 0.5; 0.0, 2.0; 3.0, 0.25];
        let h = dmatrix![0.5, 1.0, 0.0, 2.0; 1.5, 0.0, 0.75, 1.0];
        let x = CollationMatrix::from_dense(&(&w * &h)).unwrap();
        assert!(objective(&x, &w, &h).unwrap() < 1e-12);
        assert!((explained_variance(&x, &w, &h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn explained_variance_example() {
        // Ten binary nonzeros, residual 10 * (1 - 0.5)^2 = 2.5.
        let x = CollationMatrix::from_dense(&DMatrix::from_element(10, 1, 1.0)).unwrap();
        let w = DMatrix::from_element(10, 1, 1.0);
        let h = dmatrix![0.5];
        assert_eq!(objective(&x, &w, &h).unwrap(), 2.5);
        assert_eq!(explained_variance(&x, &w, &h).unwrap(), 0.75);

        let zero = CollationMatrix::from_dense(&DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            explained_variance(&zero, &DMatrix::zeros(2, 1), &DMatrix::zeros(1, 2)),
            Err(Error::ZeroMatrix(_))
        ));
    }

    #[test]
    fn hoyer_endpoints() {
        assert_eq!(hoyer_sparseness(&[0.0, 3.0, 0.0]).unwrap(), 1.0);
        assert_eq!(hoyer_sparseness(&[1.0; 4]).unwrap(), 0.0);
        assert_eq!(hoyer_sparseness(&[0.5; 16]).unwrap(), 0.0);
        assert_relative_eq!(
            hoyer_sparseness(&[1.0, 1.0, 0.0, 0.0]).unwrap(),
            2.0 - 2f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(hoyer_sparseness(&[1.0]).is_err());
        assert!(hoyer_sparseness(&[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn hoyer_in_unit_interval(v in prop::collection::vec(0.0f64..10.0, 2..40)) {
            prop_assume!(v.iter().any(|a| *a > 0.0));
            let s = hoyer_sparseness(&v).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn objective_matches_dense_reference(
            seed in prop::collection::vec(0.0f64..2.0, 6 * 5 + 6 * 2 + 2 * 5),
            mask in prop::collection::vec(any::<bool>(), 30),
        ) {
            let mut dense = DMatrix::from_column_slice(6, 5, &seed[..30]);
            for (v, keep) in dense.iter_mut().zip(&mask) {
                if !keep { *v = 0.0; }
            }
            let w = DMatrix::from_column_slice(6, 2, &seed[30..42]);
            let h = DMatrix::from_column_slice(2, 5, &seed[42..]);
            let x = CollationMatrix::from_dense(&dense).unwrap();
            let reference = (&dense - &w * &h).norm_squared();
            let got = objective(&x, &w, &h).unwrap();
            prop_assert!((got - reference).abs() <= 1e-10 * reference.max(1e-300));
        }
    }
}
