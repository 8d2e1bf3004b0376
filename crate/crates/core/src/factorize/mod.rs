//! Non-negative factorization `X ≈ WH` by alternating non-negative least
//! squares.
//!
//! Each outer iteration solves the basis subproblem with the mixture fixed,
//! then the mixture subproblem with the new basis, both to a tolerance that
//! tightens as the run proceeds. Because each subproblem step is a sufficient
//! decrease step the objective trace never goes up.

mod init;
mod metrics;
mod subproblem;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CollationMatrix;

pub use init::{nndsvd_init, random_init};
pub use metrics::{explained_variance, hoyer_sparseness, matrix_sparseness, objective};
pub use subproblem::{nnls_dense, nnls_update, InnerOptions, SubproblemOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Nndsvd,
    Random,
}

impl std::str::FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nndsvd" => Ok(Init::Nndsvd),
            "random" => Ok(Init::Random),
            other => Err(format!("unknown init `{other}` (expected nndsvd|random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub init: Init,
    /// Independent runs; the lowest-objective one is kept. Run 0 uses `init`,
    /// later runs are random restarts.
    pub runs: usize,
    pub seed: u64,
    /// Upper clamp on factor entries, `None` for unbounded.
    pub entry_bound: Option<f64>,
    /// Step cap for each subproblem solve.
    pub max_inner: usize,
}

impl FactorConfig {
    pub fn new(k: usize) -> Self {
        FactorConfig {
            k,
            max_iter: 8000,
            tol: 1e-5,
            init: Init::Nndsvd,
            runs: 1,
            seed: 0,
            entry_bound: None,
            max_inner: 1000,
        }
    }

    pub fn validate(&self, x: &CollationMatrix) -> Result<()> {
        let cap = x.m().min(x.n());
        if self.k == 0 || self.k > cap {
            return Err(Error::Config(format!(
                "k = {} must lie in 1..={cap} for a {}x{} matrix",
                self.k,
                x.m(),
                x.n()
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "tol = {} must be positive",
                self.tol
            )));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if let Some(b) = self.entry_bound {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::Config(format!("entry bound {b} must be positive")));
            }
        }
        Ok(())
    }

    fn upper(&self) -> f64 {
        self.entry_bound.unwrap_or(f64::INFINITY)
    }

    /// KKT tolerance `tol · (1 + ‖X‖_F)`.
    pub fn kkt_tolerance(&self, x: &CollationMatrix) -> f64 {
        self.tol * (1.0 + x.frobenius_sq().sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStats {
    pub k: usize,
    pub n_iter: usize,
    pub dist: f64,
    pub evar: f64,
    pub w_sparseness: f64,
    pub h_sparseness: f64,
    pub converged: bool,
    /// Objective at the starting point, then after each outer iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// Basis, m×k.
    pub w: DMatrix<f64>,
    /// Mixture, k×n.
    pub h: DMatrix<f64>,
    pub stats: FactorStats,
}

/// Largest projected-gradient components `(basis, mixture)` of
/// `½‖X − WH‖²` at `(w, h)`.
pub fn kkt_residual(
    x: &CollationMatrix,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    upper: f64,
) -> Result<(f64, f64)> {
    if w.nrows() != x.m() || h.ncols() != x.n() || w.ncols() != h.nrows() {
        return Err(Error::Dimension("factor shapes do not match X".into()));
    }
    let wt = w.transpose();
    let grad_wt = (h * h.transpose()) * &wt - sparse_h_xt(x, h);
    let grad_h = (&wt * w) * h - sparse_wt_x(x, &wt);
    Ok((
        subproblem::projected_max(&wt, &grad_wt, upper),
        subproblem::projected_max(h, &grad_h, upper),
    ))
}

/// `H·Xᵀ` (k×m): column `i` sums `x_ij · h_j` over row `i`'s nonzeros.
fn sparse_h_xt(x: &CollationMatrix, h: &DMatrix<f64>) -> DMatrix<f64> {
    let k = h.nrows();
    let mut out = DMatrix::zeros(k, x.m());
    for i in 0..x.m() {
        let (cols, vals) = x.data().row(i);
        let mut acc = out.column_mut(i);
        for (&j, &v) in cols.iter().zip(vals) {
            acc.axpy(v, &h.column(j), 1.0);
        }
    }
    out
}

/// `Wᵀ·X` (k×n) from the transposed basis `wt` (k×m).
fn sparse_wt_x(x: &CollationMatrix, wt: &DMatrix<f64>) -> DMatrix<f64> {
    let k = wt.nrows();
    let mut out = DMatrix::zeros(k, x.n());
    for i in 0..x.m() {
        let (cols, vals) = x.data().row(i);
        let wi = wt.column(i);
        for (&j, &v) in cols.iter().zip(vals) {
            out.column_mut(j).axpy(v, &wi, 1.0);
        }
    }
    out
}

fn inner_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// One basis update `W ← argmin_{W ≥ 0} ‖X − WH‖²` from `w`, to projected
/// gradient tolerance `tol`.
pub fn update_basis(
    x: &CollationMatrix,
    h: &DMatrix<f64>,
    w: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let gram = h * h.transpose();
    let cross = sparse_h_xt(x, h);
    let out = nnls_update(&gram, &cross, w.transpose(), tol, &InnerOptions::default())?;
    Ok(out.solution.transpose())
}

/// One mixture update `H ← argmin_{H ≥ 0} ‖X − WH‖²` from `h`.
pub fn update_mixture(
    x: &CollationMatrix,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let wt = w.transpose();
    let gram = &wt * w;
    let cross = sparse_wt_x(x, &wt);
    Ok(nnls_update(&gram, &cross, h.clone(), tol, &InnerOptions::default())?.solution)
}

/// Factorizes `x` according to `cfg`, keeping the best of `cfg.runs` runs.
pub fn factorize(x: &CollationMatrix, cfg: &FactorConfig) -> Result<Factorization> {
    cfg.validate(x)?;
    if x.frobenius_sq() <= 0.0 {
        return Err(Error::ZeroMatrix(
            "cannot factorize an all-zero matrix".into(),
        ));
    }
    let runs: Vec<Result<Factorization>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let (w, h) = if run == 0 && cfg.init == Init::Nndsvd {
                nndsvd_init(x, cfg.k)?
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(run as u64);
                random_init(x, cfg.k, &mut rng)
            };
            factorize_from(x, w, h, cfg)
        })
        .collect();
    let mut best: Option<Factorization> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.stats.dist < b.stats.dist) {
            best = Some(run);
        }
    }
    Ok(best.expect("runs >= 1"))
}

/// Alternating updates from a caller-supplied starting point.
pub fn factorize_from(
    x: &CollationMatrix,
    w: DMatrix<f64>,
    h: DMatrix<f64>,
    cfg: &FactorConfig,
) -> Result<Factorization> {
    cfg.validate(x)?;
    if w.shape() != (x.m(), cfg.k) || h.shape() != (cfg.k, x.n()) {
        return Err(Error::Dimension(format!(
            "initial factors {:?} and {:?} do not fit {}x{} with k = {}",
            w.shape(),
            h.shape(),
            x.m(),
            x.n(),
            cfg.k
        )));
    }
    let upper = cfg.upper();
    let inner = InnerOptions {
        max_steps: cfg.max_inner,
        upper,
    };
    let energy = x.frobenius_sq();
    let tol_kkt = cfg.kkt_tolerance(x);

    let mut wt = w.transpose().map(|v| v.clamp(0.0, upper));
    let mut h = h.map(|v| v.clamp(0.0, upper));

    let mut hht = &h * h.transpose();
    let mut hxt = sparse_h_xt(x, &h);
    let mut grad_wt = &hht * &wt - &hxt;
    let mut wtw = &wt * wt.transpose();
    let wtx = sparse_wt_x(x, &wt);
    let mut grad_h = &wtw * &h - &wtx;

    let gram_objective =
        |hxt: &DMatrix<f64>, wt: &DMatrix<f64>, wtw: &DMatrix<f64>, hht: &DMatrix<f64>| {
            (energy - 2.0 * inner_product(wt, hxt) + inner_product(wtw, hht)).max(0.0)
        };

    let initial_grad = (grad_wt.norm_squared() + grad_h.norm_squared()).sqrt();
    // Rounding noise floor for gradient norms; a start that is already
    // stationary to machine precision must not chase a zero tolerance.
    let floor = 1e-12 * (1.0 + energy);
    let mut tol_w = (cfg.tol.max(1e-3) * initial_grad).max(floor);
    let mut tol_h = tol_w;
    let mut trace = vec![gram_objective(&hxt, &wt, &wtw, &hht)];
    let mut n_iter = 0;
    let mut converged = false;

    loop {
        if !initial_grad.is_finite() {
            return Err(Error::NonFinite {
                iteration: n_iter,
                context: "initial gradient".into(),
            });
        }
        let proj = (subproblem::projected_norm_sq(&wt, &grad_wt, upper)
            + subproblem::projected_norm_sq(&h, &grad_h, upper))
        .sqrt();
        let kkt = subproblem::projected_max(&wt, &grad_wt, upper)
            .max(subproblem::projected_max(&h, &grad_h, upper));
        if proj <= (cfg.tol * initial_grad).max(floor) && kkt <= tol_kkt {
            converged = true;
            break;
        }
        if n_iter >= cfg.max_iter {
            break;
        }

        let basis =
            nnls_update(&hht, &hxt, wt, tol_w, &inner).map_err(|e| at_iteration(e, n_iter))?;
        wt = basis.solution;
        if basis.steps == 0 {
            tol_w = (0.1 * tol_w).max(floor);
        }

        wtw = &wt * wt.transpose();
        let wtx = sparse_wt_x(x, &wt);
        let mixture =
            nnls_update(&wtw, &wtx, h, tol_h, &inner).map_err(|e| at_iteration(e, n_iter))?;
        h = mixture.solution;
        grad_h = mixture.gradient;
        if mixture.steps == 0 {
            tol_h = (0.1 * tol_h).max(floor);
        }

        n_iter += 1;
        hht = &h * h.transpose();
        hxt = sparse_h_xt(x, &h);
        grad_wt = &hht * &wt - &hxt;
        trace.push(gram_objective(&hxt, &wt, &wtw, &hht));
    }

    let w = wt.transpose();
    let dist = objective(x, &w, &h)?;
    let stats = FactorStats {
        k: cfg.k,
        n_iter,
        dist,
        evar: 1.0 - dist / energy,
        // An all-zero factor has no defined sparseness; report 0.
        w_sparseness: matrix_sparseness(&w).unwrap_or(0.0),
        h_sparseness: matrix_sparseness(&h).unwrap_or(0.0),
        converged,
        objective_trace: trace,
    };
    Ok(Factorization { w, h, stats })
}

fn at_iteration(e: Error, outer: usize) -> Error {
    match e {
        Error::NonFinite { iteration, context } => Error::NonFinite {
            iteration: outer,
            context: format!("{context} (inner step {iteration})"),
        },
        other => other,
    }
}
