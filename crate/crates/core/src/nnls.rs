//! Lawson–Hanson active-set solver for `argmin_{x ≥ 0} ‖b − A·x‖₂`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `‖b − A·x‖₂`.
    pub residual_norm: f64,
    pub iterations: usize,
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive);
    let svd = sub.svd(true, true);
    let eps = f64::EPSILON * svd.singular_values.max() * a.nrows().max(passive.len()) as f64;
    svd.solve(b, eps).expect("U and Vᵀ were computed")
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "A is {m}x{n}, b has {} entries",
            b.len()
        )));
    }
    let max_iter = 3 * n.max(1);
    let tol = 10.0 * f64::EPSILON * a.abs().column_sum().max() * m.max(n) as f64;
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;

    let mut w = a.tr_mul(&(b - a * &x));
    loop {
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NnlsNoConvergence {
                    iterations: max_iter,
                });
            }
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let s_p = least_squares(a, b, &idx);
            if s_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (slot, &i) in idx.iter().enumerate() {
                    x[i] = s_p[slot];
                }
                break;
            }
            // Step back toward x until the first passive variable hits zero.
            let mut alpha = f64::INFINITY;
            for (slot, &i) in idx.iter().enumerate() {
                if s_p[slot] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - s_p[slot]));
                }
            }
            for (slot, &i) in idx.iter().enumerate() {
                x[i] += alpha * (s_p[slot] - x[i]);
            }
            for &i in &idx {
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = a.tr_mul(&(b - a * &x));
    }
    let residual_norm = (b - a * &x).norm();
    Ok(NnlsSolution {
        x,
        residual_norm,
        iterations,
    })
}
