//! Projected-gradient solver for the non-negative least-squares subproblem
//!
//! ```text
//! minimize  ½‖A − B·Z‖²_F  over  0 ≤ Z ≤ upper
//! ```
//!
//! expressed through `gram = BᵀB` (k×k) and `cross = BᵀA` (k×p), so the same
//! kernel serves the mixture update (`B = W`, `A = X`) and the basis update
//! (`B = Hᵀ`, `A = Xᵀ`, `Z = Wᵀ`). Step sizes follow a backtracking /
//! forward-tracking search along the projection arc with a sufficient-decrease
//! test, so every accepted step lowers the objective.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SUFFICIENT_DECREASE: f64 = 0.01;
const STEP_FACTOR: f64 = 0.1;
const MAX_LINE_SEARCH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    pub max_steps: usize,
    /// Upper clamp on entries; `f64::INFINITY` for none.
    pub upper: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            max_steps: 1000,
            upper: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemOutcome {
    pub solution: DMatrix<f64>,
    /// `gram·solution − cross`, evaluated at the returned solution.
    pub gradient: DMatrix<f64>,
    /// Gradient steps actually taken; 0 means the starting point already met
    /// the tolerance.
    pub steps: usize,
}

/// Projected gradient component: what remains of the gradient after discarding
/// components that push against an active bound.
#[inline]
pub(crate) fn projected_component(z: f64, g: f64, upper: f64) -> f64 {
    if z <= 0.0 {
        g.min(0.0)
    } else if z >= upper {
        g.max(0.0)
    } else {
        g
    }
}

pub(crate) fn projected_norm_sq(z: &DMatrix<f64>, g: &DMatrix<f64>, upper: f64) -> f64 {
    z.iter()
        .zip(g.iter())
        .map(|(&z, &g)| projected_component(z, g, upper).powi(2))
        .sum()
}

/// Largest projected-gradient component magnitude (the KKT residual).
pub(crate) fn projected_max(z: &DMatrix<f64>, g: &DMatrix<f64>, upper: f64) -> f64 {
    z.iter()
        .zip(g.iter())
        .map(|(&z, &g)| projected_component(z, g, upper).abs())
        .fold(0.0, f64::max)
}

fn project(z: &mut DMatrix<f64>, upper: f64) {
    for v in z.iter_mut() {
        *v = v.clamp(0.0, upper);
    }
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solves the subproblem from `current` until the projected-gradient norm
/// drops below `tol` (absolute) or `opts.max_steps` steps have been taken.
pub fn nnls_update(
    gram: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    current: DMatrix<f64>,
    tol: f64,
    opts: &InnerOptions,
) -> Result<SubproblemOutcome> {
    let k = gram.nrows();
    if gram.ncols() != k || cross.nrows() != k || current.shape() != cross.shape() {
        return Err(Error::Dimension(format!(
            "gram {:?}, cross {:?}, current {:?}",
            gram.shape(),
            cross.shape(),
            current.shape()
        )));
    }
    let mut z = current;
    project(&mut z, opts.upper);
    let mut alpha = 1.0;
    let mut steps = 0;
    let mut grad = gram * &z - cross;
    for step in 0..opts.max_steps {
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite {
                iteration: step,
                context: "projected-gradient subproblem".into(),
            });
        }
        if projected_norm_sq(&z, &grad, opts.upper).sqrt() < tol {
            break;
        }
        z = line_search(gram, &grad, z, &mut alpha, opts.upper);
        steps += 1;
        grad = gram * &z - cross;
    }
    Ok(SubproblemOutcome {
        solution: z,
        gradient: grad,
        steps,
    })
}

fn line_search(
    gram: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    z: DMatrix<f64>,
    alpha: &mut f64,
    upper: f64,
) -> DMatrix<f64> {
    let mut shrinking = false;
    let mut best: Option<DMatrix<f64>> = None;
    for trial in 0..MAX_LINE_SEARCH {
        let mut candidate = &z - grad * *alpha;
        project(&mut candidate, upper);
        let d = &candidate - &z;
        let gd = dot(grad, &d);
        let dqd = dot(&(gram * &d), &d);
        let sufficient = (1.0 - SUFFICIENT_DECREASE) * gd + 0.5 * dqd < 0.0;
        if trial == 0 {
            shrinking = !sufficient;
        }
        if shrinking {
            if sufficient {
                return candidate;
            }
            *alpha *= STEP_FACTOR;
        } else {
            if !sufficient || best.as_ref() == Some(&candidate) {
                return best.unwrap_or(z);
            }
            *alpha /= STEP_FACTOR;
            best = Some(candidate);
        }
    }
    best.unwrap_or(z)
}

/// Dense convenience: `argmin_{Z ≥ 0} ½‖target − design·Z‖²`, starting from
/// zero.
pub fn nnls_dense(
    design: &DMatrix<f64>,
    target: &DMatrix<f64>,
    tol: f64,
    max_steps: usize,
) -> Result<SubproblemOutcome> {
    if design.nrows() != target.nrows() {
        return Err(Error::Dimension(format!(
            "design has {} rows, target {}",
            design.nrows(),
            target.nrows()
        )));
    }
    let gram = design.transpose() * design;
    let cross = design.transpose() * target;
    let start = DMatrix::zeros(design.ncols(), target.ncols());
    nnls_update(
        &gram,
        &cross,
        start,
        tol,
        &InnerOptions {
            max_steps,
            ..InnerOptions::default()
        },
    )
}
