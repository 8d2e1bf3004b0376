//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use collnmf::analysis::{classify_secondary, normalize_mixture, MixtureVector, ReadingVector};
use collnmf::collation::{apply_exclusions, parse_collation, ExclusionPolicy};
use collnmf::factorize::{factorize, hoyer_sparseness, kkt_residual, FactorConfig, Factorization};
use collnmf::matrix::{build_matrix, idf_weights, CollationMatrix, Weighting};
use collnmf::synth::SynthConfig;
use common::*;
use nalgebra::{dmatrix, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The 50 random binary fits shared by the monotonicity and stationarity
/// criteria.
struct RandomSuite {
    fits: Vec<(CollationMatrix, FactorConfig, Factorization)>,
    seconds: f64,
}

fn random_suite() -> RandomSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let start = Instant::now();
    let mut fits = Vec::new();
    while fits.len() < 50 {
        let m = rng.random_range(20..=200);
        let n = rng.random_range(10..=100);
        let density = rng.random_range(0.05..=0.40);
        let k = [2, 4, 8][fits.len() % 3];
        let x = random_binary(m, n, density, &mut rng);
        if x.frobenius_sq() == 0.0 {
            continue;
        }
        let cfg = FactorConfig::new(k);
        let fit = factorize(&x, &cfg).expect("factorization of a random binary matrix");
        fits.push((x, cfg, fit));
    }
    RandomSuite {
        fits,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn monotonicity(suite: &RandomSuite) -> Outcome {
    let mut worst = 0.0f64;
    let mut violations = 0;
    for (_, _, fit) in &suite.fits {
        let t = &fit.stats.objective_trace;
        for pair in t.windows(2) {
            let excess = (pair[1] - pair[0]) / t[0].max(f64::MIN_POSITIVE);
            worst = worst.max(excess);
            if pair[1] > pair[0] + 1e-9 * t[0] {
                violations += 1;
            }
        }
    }
    check(
        violations == 0 && suite.seconds < 60.0,
        format!(
            "{} runs, {violations} increases beyond 1e-9 relative (worst {worst:.2e}), {:.1} s",
            suite.fits.len(),
            suite.seconds
        ),
    )
}

fn stationarity(suite: &RandomSuite) -> Outcome {
    let mut converged = 0;
    let mut failures = 0;
    let mut worst_ratio = 0.0f64;
    for (x, cfg, fit) in &suite.fits {
        if !fit.stats.converged {
            continue;
        }
        converged += 1;
        let (gw, gh) = kkt_residual(x, &fit.w, &fit.h, f64::INFINITY).unwrap();
        let tol = cfg.kkt_tolerance(x);
        worst_ratio = worst_ratio.max(gw.max(gh) / tol);
        if gw > tol || gh > tol {
            failures += 1;
        }
    }
    check(
        converged > 0 && failures == 0,
        format!("{converged}/{} converged, {failures} above tol_kkt (worst residual/tol {worst_ratio:.3})", suite.fits.len()),
    )
}

fn exact_recovery() -> Outcome {
    let run = planted_run(
        &SynthConfig {
            clusters: 4,
            witnesses_per_cluster: 20,
            exclusive_units: 30,
            ..SynthConfig::default()
        },
        Weighting::Uniform,
        &synthetic_policy(),
    );
    let evar = run.fit.stats.evar;
    let recovery = run.recovery();
    check(
        evar >= 1.0 - 1e-6 && recovery == 1.0 && run.x.m() == 120 && run.x.n() == 80,
        format!(
            "{}x{} matrix, evar {evar:.9}, recovery {:.1}%",
            run.x.m(),
            run.x.n(),
            100.0 * recovery
        ),
    )
}

fn contaminated_recovery() -> Outcome {
    let mut rates = Vec::new();
    for seed in 0..10 {
        let run = planted_run(
            &SynthConfig {
                clusters: 4,
                witnesses_per_cluster: 20,
                exclusive_units: 30,
                contamination: 0.10,
                lacuna_rate: 0.05,
                seed,
                ..SynthConfig::default()
            },
            Weighting::Uniform,
            &synthetic_policy(),
        );
        rates.push(run.recovery());
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        mean >= 0.95,
        format!(
            "mean recovery {:.2}% over 10 seeds (lowest seed {:.2}%)",
            100.0 * mean,
            100.0 * min
        ),
    )
}

/// Grid minimum of `‖x − W h‖²` over `[0, 3]²` at spacing 1e-3, evaluated
/// through the Gram expansion.
fn grid_oracle(w: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let g = w.transpose() * w;
    let b = w.transpose() * x;
    let c = x.norm_squared();
    let steps = 3000;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        let h0 = i as f64 * 1e-3;
        let base = c - 2.0 * b[0] * h0 + g[(0, 0)] * h0 * h0;
        let lin = 2.0 * (g[(0, 1)] * h0 - b[1]);
        for j in 0..=steps {
            let h1 = j as f64 * 1e-3;
            let f = base + lin * h1 + g[(1, 1)] * h1 * h1;
            if f < best {
                best = f;
            }
        }
    }
    best
}

fn nnls_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut failures = 0;
    for _ in 0..100 {
        let w = DMatrix::from_fn(6, 2, |_, _| rng.random_range(0.0..1.0));
        let x = DVector::from_fn(6, |_, _| rng.random_range(0.0..1.0));
        let rv = ReadingVector {
            witness: "frag".into(),
            entries: x.iter().enumerate().map(|(i, v)| (i, *v)).collect(),
            extant_rows: (0..6).collect(),
        };
        let mv = classify_secondary(&w, &rv).unwrap();
        let h = DVector::from_vec(mv.coefficients);
        let ours = (&x - &w * &h).norm_squared();
        let gap = ours - grid_oracle(&w, &x);
        worst_gap = worst_gap.max(gap);
        if gap > 1e-4 {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!("100 instances, {failures} above oracle + 1e-4 (largest objective - oracle {worst_gap:.2e})"),
    )
}

fn figure_roundtrip() -> Outcome {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy.tsv"))
            .unwrap();
    let collation = parse_collation(&text).unwrap();
    let x =
        build_matrix(&apply_exclusions(&collation, &ExclusionPolicy::keep_all()).unwrap()).unwrap();
    let printed = dmatrix![
        1.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 1.0, 1.0;
        1.0, 0.0, 1.0, 0.0;
        0.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 0.0, 1.0;
        1.0, 1.0, 1.0, 0.0;
        0.0, 0.0, 0.0, 1.0
    ];
    let rows: Vec<String> = x.row_labels().iter().map(|k| k.label()).collect();
    let expected_rows = [
        "unit.1.reading.1",
        "unit.1.reading.2",
        "unit.2.reading.1",
        "unit.2.reading.2",
        "unit.2.reading.3",
        "unit.3.reading.1",
        "unit.3.reading.2",
    ];
    let reparsed = parse_collation(&collation.to_tsv()).unwrap() == collation;
    check(
        x.to_dense() == printed
            && rows == expected_rows
            && x.col_labels() == ["ms.1", "ms.2", "ms.3", "ms.4"]
            && reparsed,
        format!(
            "{}x{} matrix from {} cells, labels and TSV re-export match",
            x.m(),
            x.n(),
            collation.cells().len()
        ),
    )
}

fn mixture_normalization() -> Outcome {
    let v = MixtureVector::new(
        "01",
        vec![2.3008, 0.4431, 0.0, 0.0, 0.0, 0.0, 0.0971, 0.1185],
    );
    let p = normalize_mixture(&v).normalized.unwrap();
    let pct: Vec<f64> = p.iter().map(|x| 100.0 * x).collect();
    let expected = [77.7, 15.0, 0.0, 0.0, 0.0, 0.0, 3.3, 4.0];
    let within = pct.iter().zip(expected).all(|(a, b)| (a - b).abs() <= 0.5);
    let rounded = [
        pct[0].round(),
        pct[1].round(),
        pct[7].round(),
        pct[6].round(),
    ] == [78.0, 15.0, 4.0, 3.0];
    check(
        within && rounded,
        format!(
            "({})",
            pct.iter()
                .map(|x| format!("{x:.1}%"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn idf_endpoints() -> Outcome {
    let text = "witness\tunit\treading\n\
        A\tu1\tshared\nB\tu1\tshared\nC\tu1\tshared\nD\tu1\tshared\nE\tu1\tshared\n\
        A\tu2\tlone\nB\tu2\tother\nC\tu2\tother\nD\tu2\tother\nE\tu2\tother\n";
    let x = build_matrix(
        &apply_exclusions(
            &parse_collation(text).unwrap(),
            &ExclusionPolicy::keep_all(),
        )
        .unwrap(),
    )
    .unwrap();
    let w = idf_weights(&x).unwrap();
    let n = x.n() as f64;
    let all = w[0];
    let single = w[1];
    check(
        all == 0.0 && single == n.ln(),
        format!(
            "all-witness weight {all}, single-witness weight {single} vs ln {n} = {}",
            n.ln()
        ),
    )
}

fn hoyer_endpoints() -> Outcome {
    let mut exact = true;
    for d in 2..=64 {
        let mut one_hot = vec![0.0; d];
        one_hot[d / 2] = 3.5;
        exact &= hoyer_sparseness(&one_hot).unwrap() == 1.0;
        exact &= hoyer_sparseness(&vec![0.7; d]).unwrap() == 0.0;
    }
    let half = hoyer_sparseness(&[1.0, 1.0, 0.0, 0.0]).unwrap();
    let target = 2.0 - 2f64.sqrt();
    check(
        exact && (half - target).abs() <= 1e-12,
        format!("one-hot 1 and constant 0 exactly for d = 2..64; (1,1,0,0) -> {half:.15} (|err| {:.1e})", (half - target).abs()),
    )
}

fn scale() -> Outcome {
    let synth = collnmf::synth::generate(&SynthConfig {
        clusters: 8,
        witnesses_per_cluster: 65,
        exclusive_units: 100,
        contamination: 0.10,
        lacuna_rate: 0.05,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let policy = ExclusionPolicy {
        drop_singular_readings: false,
        min_extant_readings: 0,
        ..ExclusionPolicy::default()
    };
    let x = build_matrix(&apply_exclusions(&synth.collation, &policy).unwrap()).unwrap();
    let start = Instant::now();
    let fit = factorize(&x, &FactorConfig::new(8)).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let density = x.nnz() as f64 / (x.m() * x.n()) as f64;
    check(
        x.m() == 800 && x.n() == 520 && seconds < 60.0,
        format!(
            "{}x{} ({:.1}% dense), k=8 NNDSVD: {seconds:.2} s, {} iterations, converged {}",
            x.m(),
            x.n(),
            100.0 * density,
            fit.stats.n_iter,
            fit.stats.converged
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_collnmf");
    let run = |args: &[&str]| {
        let out = Command::new(bin)
            .args(args)
            .current_dir(dir.path())
            .output()
            .unwrap();
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        Ok(())
    };
    let steps: [&[&str]; 3] = [
        &[
            "synth",
            "--out-dir",
            "syn",
            "--contamination",
            "0.1",
            "--lacunae",
            "0.05",
            "--seed",
            "4",
        ],
        &[
            "factor",
            "--input",
            "syn/collation.tsv",
            "--k",
            "4",
            "--init",
            "random",
            "--runs",
            "3",
            "--seed",
            "99",
            "--min-extant",
            "0",
            "--out-dir",
            "first",
        ],
        &["replay", "first/manifest.json", "--out-dir", "second"],
    ];
    for step in steps {
        run(step).map_err(|e| format!("command failed: {e}"))?;
    }
    let mut differing = Vec::new();
    for name in ["W.csv", "H.csv", "stats.json"] {
        let a = std::fs::read(dir.path().join("first").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("second").join(name)).unwrap();
        if a != b {
            differing.push(name);
        }
    }
    check(
        differing.is_empty(),
        if differing.is_empty() {
            "replayed W.csv, H.csv, stats.json are byte-identical".into()
        } else {
            format!("differing: {differing:?}")
        },
    )
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let suite = random_suite();
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("monotonicity", Box::new(|| monotonicity(&suite))),
        ("stationarity", Box::new(|| stationarity(&suite))),
        ("exact recovery", Box::new(exact_recovery)),
        ("contaminated recovery", Box::new(contaminated_recovery)),
        ("NNLS grid oracle", Box::new(nnls_oracle)),
        ("toy collation roundtrip", Box::new(figure_roundtrip)),
        ("mixture normalization", Box::new(mixture_normalization)),
        ("IDF endpoints", Box::new(idf_endpoints)),
        ("Hoyer endpoints", Box::new(hoyer_endpoints)),
        ("scale 800x520 k=8", Box::new(scale)),
        ("manifest replay determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, criterion) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(criterion))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
