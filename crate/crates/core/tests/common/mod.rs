//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use collnmf::analysis::assign_clusters;
use collnmf::collation::{apply_exclusions, CellState, ExclusionPolicy};
use collnmf::factorize::{factorize, FactorConfig, Factorization};
use collnmf::matrix::{build_matrix, weighted, CollationMatrix, CsrMatrix, Weighting};
use collnmf::synth::{generate, recovery_rate, SynthConfig, SyntheticCollation};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random 0/1 matrix with the given density.
pub fn random_binary(
    rows: usize,
    cols: usize,
    density: f64,
    rng: &mut impl Rng,
) -> CollationMatrix {
    let mut triplets = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.random_bool(density) {
                triplets.push((i, j, 1.0));
            }
        }
    }
    CollationMatrix::from_csr(CsrMatrix::from_triplets(rows, cols, &triplets).unwrap())
}

/// Policy that keeps every primary witness regardless of coverage.
pub fn synthetic_policy() -> ExclusionPolicy {
    ExclusionPolicy {
        min_extant_readings: 0,
        ..ExclusionPolicy::default()
    }
}

pub struct PlantedRun {
    pub synth: SyntheticCollation,
    pub x: CollationMatrix,
    pub fit: Factorization,
}

impl PlantedRun {
    /// Fraction of primary witnesses whose argmax cluster matches the plant.
    pub fn recovery(&self) -> f64 {
        let planted: Vec<usize> = self
            .synth
            .planted_for(self.x.col_labels())
            .into_iter()
            .map(|c| c.expect("primary witness is planted"))
            .collect();
        let assigned = assign_clusters(&self.fit.h).labels;
        recovery_rate(&planted, &assigned, self.synth_k()).unwrap()
    }

    fn synth_k(&self) -> usize {
        self.fit.h.nrows()
    }
}

pub fn planted_run(
    cfg: &SynthConfig,
    weighting: Weighting,
    policy: &ExclusionPolicy,
) -> PlantedRun {
    let synth = generate(cfg).unwrap();
    let filtered = apply_exclusions(&synth.collation, policy).unwrap();
    let x = weighted(&build_matrix(&filtered).unwrap(), weighting).unwrap();
    let fit = factorize(&x, &FactorConfig::new(cfg.clusters)).unwrap();
    PlantedRun { synth, x, fit }
}

/// Multiplicative updates for `‖X − WH‖²` from a seeded random start;
/// written independently of the library's solver.
pub fn lee_seung(
    x: &DMatrix<f64>,
    k: usize,
    iterations: usize,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = x.shape();
    let mut w = DMatrix::from_fn(m, k, |_, _| rng.random_range(0.1..1.0));
    let mut h = DMatrix::from_fn(k, n, |_, _| rng.random_range(0.1..1.0));
    let eps = 1e-300;
    for _ in 0..iterations {
        let num = w.transpose() * x;
        let den = w.transpose() * &w * &h;
        h.zip_zip_apply(&num, &den, |v, a, b| *v *= a / (b + eps));
        let num = x * h.transpose();
        let den = &w * &h * h.transpose();
        w.zip_zip_apply(&num, &den, |v, a, b| *v *= a / (b + eps));
    }
    (w, h)
}

pub fn sq_dist(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (x - w * h).norm_squared()
}

/// Fraction of attested exclusive-unit cells whose reading belongs to a
/// cluster other than the witness's own, read back out of the collation.
pub fn off_block_fraction(s: &SyntheticCollation) -> (usize, usize) {
    let c = &s.collation;
    let mut off = 0;
    let mut total = 0;
    for cell in c.cells() {
        if cell.state != CellState::Attested {
            continue;
        }
        let Some(cluster) = cell.reading.strip_prefix('r') else {
            continue;
        };
        let cluster: usize = cluster.parse().unwrap();
        let own = s.labels[cell.witness].1;
        total += 1;
        if cluster != own {
            off += 1;
        }
    }
    (off, total)
}
