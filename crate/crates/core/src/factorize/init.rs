//! Factor initialization: NNDSVD and scaled uniform random.

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::CollationMatrix;

const SVD_EPS: f64 = 1e-14;
const SVD_MAX_SWEEPS: usize = 10_000;

/// One singular value with its left and right singular vectors.
type SingularTriplet = (f64, DVector<f64>, DVector<f64>);

/// `(σ, u, v)` for the `k` largest singular values, descending.
pub(crate) fn leading_singular_triplets(
    x: &CollationMatrix,
    k: usize,
) -> Result<Vec<SingularTriplet>> {
    let dense = x.to_dense();
    let (rows, cols) = dense.shape();
    let svd = SVD::try_new(dense, true, true, SVD_EPS, SVD_MAX_SWEEPS).ok_or(
        Error::SvdNoConvergence {
            max_iterations: SVD_MAX_SWEEPS,
            rows,
            cols,
        },
    )?;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| {
            (
                svd.singular_values[i],
                u.column(i).into_owned(),
                vt.row(i).transpose(),
            )
        })
        .collect())
}

fn split(v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    (v.map(|a| a.max(0.0)), v.map(|a| (-a).max(0.0)))
}

/// NNDSVD: the leading singular pair gives the first component (signs taken
/// non-negative); every further pair contributes whichever of its
/// positive-part or negative-part outer products carries more mass. Zeros are
/// left as exact zeros.
pub fn nndsvd_init(x: &CollationMatrix, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = (x.m(), x.n());
    if k == 0 || k > m.min(n) {
        return Err(Error::Config(format!(
            "k = {k} must lie in 1..={}",
            m.min(n)
        )));
    }
    let triplets = leading_singular_triplets(x, k)?;
    let mut w = DMatrix::zeros(m, k);
    let mut h = DMatrix::zeros(k, n);
    for (j, (sigma, u, v)) in triplets.into_iter().enumerate() {
        if j == 0 {
            let s = sigma.sqrt();
            w.set_column(0, &(u.abs() * s));
            h.set_row(0, &(v.abs() * s).transpose());
            continue;
        }
        let (up, un) = split(&u);
        let (vp, vn) = split(&v);
        let (upn, vpn, unn, vnn) = (up.norm(), vp.norm(), un.norm(), vn.norm());
        let (pos_mass, neg_mass) = (upn * vpn, unn * vnn);
        let (uu, vv, unorm, vnorm, mass) = if pos_mass >= neg_mass {
            (up, vp, upn, vpn, pos_mass)
        } else {
            (un, vn, unn, vnn, neg_mass)
        };
        if mass <= 0.0 {
            continue;
        }
        let scale = (sigma * mass).sqrt();
        w.set_column(j, &(uu * (scale / unorm)));
        h.set_row(j, &(vv * (scale / vnorm)).transpose());
    }
    Ok((w, h))
}

/// Uniform entries in `[0, √(mean(X)/k))`.
pub fn random_init<R: Rng>(
    x: &CollationMatrix,
    k: usize,
    rng: &mut R,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let total: f64 = x.data().triplets().map(|(_, _, v)| v).sum();
    let mean = total / (x.m() * x.n()).max(1) as f64;
    let scale = (mean / k as f64).sqrt();
    let w = DMatrix::from_fn(x.m(), k, |_, _| scale * rng.random::<f64>());
    let h = DMatrix::from_fn(k, x.n(), |_, _| scale * rng.random::<f64>());
    (w, h)
}
