//! End-to-end tests of the `collnmf` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collnmf"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn collnmf")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "collnmf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_of(out: &Output) -> Value {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {line}"))
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn csv_rows(path: impl AsRef<Path>) -> Vec<Vec<String>> {
    let text = read(path);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// A workspace with a synthetic collation (4 clusters, 3 fragments) and a
/// k=4 run in `run/`.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok(
            &[
                "synth",
                "--out-dir",
                "syn",
                "--clusters",
                "4",
                "--witnesses-per-cluster",
                "8",
                "--exclusive",
                "30",
                "--shared",
                "3",
                "--contamination",
                "0.05",
                "--fragments",
                "3",
                "--fragment-extant",
                "0.4",
                "--seed",
                "7",
            ],
            dir.path(),
        );
        ok(
            &[
                "factor",
                "--input",
                "syn/collation.tsv",
                "--k",
                "4",
                "--min-extant",
                "25",
                "--out-dir",
                "run",
            ],
            dir.path(),
        );
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn cwd(&self) -> &Path {
        self.dir.path()
    }
}

#[test]
fn factor_writes_the_run_files() {
    let f = Fixture::new();
    for name in [
        "W.csv",
        "H.csv",
        "stats.json",
        "manifest.json",
        "labels.json",
        "X.txt",
    ] {
        assert!(f.path("run").join(name).exists(), "{name}");
    }
    let stats: Value = serde_json::from_str(&read(f.path("run/stats.json"))).unwrap();
    assert_eq!(stats["converged"], Value::Bool(true));
    let trace = stats["objective_trace"].as_array().unwrap();
    assert_eq!(trace.len(), stats["n_iter"].as_u64().unwrap() as usize + 1);

    let w = csv_rows(f.path("run/W.csv"));
    assert_eq!(w[0], ["unit", "reading", "C1", "C2", "C3", "C4"]);
    let h = csv_rows(f.path("run/H.csv"));
    assert_eq!(h.len(), 5);
    assert_eq!(h[0][0], "cluster");
    assert_eq!(h[0].len(), 32 + 1, "fragments are not primary witnesses");

    let manifest: Value = serde_json::from_str(&read(f.path("run/manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["k"], 4);
    assert_eq!(manifest["policy"]["min_extant_readings"], 25);
    assert!(manifest["started_unix"].as_u64().unwrap() > 0);
}

#[test]
fn k_range_writes_one_run_per_k() {
    let f = Fixture::new();
    ok(
        &[
            "factor",
            "--input",
            "syn/collation.tsv",
            "--k-range",
            "2:8",
            "--min-extant",
            "25",
            "--out-dir",
            "sweep",
        ],
        f.cwd(),
    );
    for k in 2..=8 {
        let stats: Value =
            serde_json::from_str(&read(f.path(&format!("sweep/k{k}/stats.json")))).unwrap();
        assert_eq!(stats["k"], k);
    }
    assert!(!f.path("sweep/k9").exists());
    let sweep = csv_rows(f.path("sweep/sweep.csv"));
    assert_eq!(sweep.len(), 8);
    assert_eq!(sweep[0][0], "k");
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(
        &[
            "factor",
            "--input",
            "nope.tsv",
            "--k",
            "2",
            "--out-dir",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(error_of(&missing)["error"]["kind"], "io");

    std::fs::write(
        dir.path().join("bad.tsv"),
        "witness\tunit\treading\tstate\nA\tu\t1\tsmudged\n",
    )
    .unwrap();
    let bad = run(
        &["factor", "--input", "bad.tsv", "--k", "2", "--out-dir", "o"],
        dir.path(),
    );
    let e = error_of(&bad);
    assert_eq!(e["error"]["kind"], "parse");
    assert!(e["error"]["message"].as_str().unwrap().contains("smudged"));

    let rate = run(
        &["synth", "--out-dir", "s", "--contamination", "1.5"],
        dir.path(),
    );
    assert_eq!(error_of(&rate)["error"]["kind"], "config");
    assert!(!dir.path().join("s").exists());

    let usage = run(&["factor", "--input", "x.tsv"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_of(&usage)["error"]["kind"], "usage");

    let no_run = run(&["profile", "--run-dir", "absent"], dir.path());
    assert_eq!(error_of(&no_run)["error"]["kind"], "artifact");
}

#[test]
fn failed_factor_leaves_no_artifacts() {
    let f = Fixture::new();
    let out = run(
        &[
            "factor",
            "--input",
            "syn/collation.tsv",
            "--k",
            "500",
            "--min-extant",
            "25",
            "--out-dir",
            "big",
        ],
        f.cwd(),
    );
    assert_eq!(error_of(&out)["error"]["kind"], "config");
    assert!(!f.path("big").exists());
}

#[test]
fn profile_tables() {
    let f = Fixture::new();
    ok(&["profile", "--run-dir", "run"], f.cwd());
    for c in 1..=4 {
        let witnesses = csv_rows(f.path(&format!("run/profile/cluster_{c}_witnesses.csv")));
        assert_eq!(witnesses.len(), 16, "header plus the default 15 rows");
        assert_eq!(
            witnesses[0],
            ["rank", "witness", "coefficient", "member", "cluster_size"]
        );
        let coefficients: Vec<f64> = witnesses[1..]
            .iter()
            .map(|r| r[2].parse().unwrap())
            .collect();
        assert!(coefficients.windows(2).all(|p| p[0] >= p[1]));
        let readings = csv_rows(f.path(&format!("run/profile/cluster_{c}_readings.csv")));
        assert_eq!(readings.len(), 16);
    }

    ok(
        &[
            "profile",
            "--run-dir",
            "run",
            "--witness",
            "c0w01",
            "--cluster",
            "3",
            "--limit",
            "0",
            "--out-dir",
            "p2",
        ],
        f.cwd(),
    );
    let mixtures = csv_rows(f.path("p2/mixtures.csv"));
    assert_eq!(mixtures.len(), 2);
    assert_eq!(mixtures[1][0], "c0w01");
    let total: f64 = mixtures[1][1..]
        .iter()
        .map(|v| v.parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(csv_rows(f.path("p2/cluster_3_witnesses.csv")).len(), 1);
    assert_eq!(csv_rows(f.path("p2/cluster_3_readings.csv")).len(), 1);
    assert!(!f.path("p2/cluster_1_witnesses.csv").exists());

    let unknown = run(
        &[
            "profile",
            "--run-dir",
            "run",
            "--witness",
            "zz",
            "--out-dir",
            "p3",
        ],
        f.cwd(),
    );
    assert_eq!(error_of(&unknown)["error"]["kind"], "query");
    let bad_cluster = run(
        &[
            "profile",
            "--run-dir",
            "run",
            "--cluster",
            "9",
            "--out-dir",
            "p4",
        ],
        f.cwd(),
    );
    assert_eq!(error_of(&bad_cluster)["error"]["kind"], "config");
}

/// Ground truth from the generator: witness → planted cluster.
fn planted(f: &Fixture) -> Vec<(String, usize)> {
    read(f.path("syn/labels.tsv"))
        .lines()
        .skip(1)
        .map(|l| {
            let (w, c) = l.split_once('\t').unwrap();
            (w.to_string(), c.parse().unwrap())
        })
        .collect()
}

#[test]
fn classify_fragments() {
    let f = Fixture::new();
    // A witness lacunose everywhere has no extant units at all.
    let mut text = read(f.path("syn/collation.tsv"));
    for u in 0..33 {
        text.push_str(&format!("ghost\tu{u:03}\t\tlacunose\n"));
    }
    std::fs::write(f.path("with_ghost.tsv"), text).unwrap();
    ok(
        &["classify", "--run-dir", "run", "--input", "with_ghost.tsv"],
        f.cwd(),
    );

    let rows = csv_rows(f.path("run/secondary.csv"));
    assert_eq!(
        rows[0][..4],
        ["witness", "extant_units", "status", "dominant"]
    );
    let ghost = rows.iter().find(|r| r[0] == "ghost").expect("ghost row");
    assert_eq!(ghost[2], "unclassifiable");
    assert_eq!(ghost[1], "0");

    // Map planted clusters to fitted clusters via the primary witnesses' H argmax.
    let h = csv_rows(f.path("run/H.csv"));
    let truth = planted(&f);
    let fitted_of = |witness: &str| -> String {
        let col = h[0].iter().position(|w| w == witness).unwrap();
        let best = (1..h.len())
            .max_by(|&a, &b| {
                h[a][col]
                    .parse::<f64>()
                    .unwrap()
                    .total_cmp(&h[b][col].parse().unwrap())
            })
            .unwrap();
        h[best][0].clone()
    };
    let fragments: Vec<&Vec<String>> = rows.iter().filter(|r| r[0].starts_with("frag")).collect();
    assert_eq!(fragments.len(), 3);
    for row in fragments {
        let own = truth.iter().find(|(w, _)| *w == row[0]).unwrap().1;
        let sibling = truth
            .iter()
            .find(|(w, c)| *c == own && w.starts_with('c'))
            .unwrap();
        assert_eq!(row[2], "ok");
        assert_eq!(row[3], fitted_of(&sibling.0), "{}", row[0]);
    }
}

#[test]
fn divided_queries() {
    let f = Fixture::new();
    std::fs::write(
        f.path("q.tsv"),
        "unit\tgroup\treadings\nu000\tC0\tr0\nu000\trest\tr1,r2,r3\nnowhere\tA\tr0\n",
    )
    .unwrap();
    ok(
        &[
            "divided",
            "--run-dir",
            "run",
            "--query",
            "q.tsv",
            "--unit",
            "u001",
            "--out",
            "d.csv",
        ],
        f.cwd(),
    );
    let rows = csv_rows(f.path("d.csv"));
    assert_eq!(rows[0], ["unit", "cluster", "verdict", "detail"]);
    let u000: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "u000").collect();
    assert_eq!(u000.len(), 4);
    assert!(u000
        .iter()
        .all(|r| ["C0", "rest", "Split"].contains(&r[2].as_str())));
    assert!(
        u000.iter().any(|r| r[2] == "C0"),
        "the planted cluster 0 reading wins somewhere"
    );
    let missing = rows.iter().find(|r| r[0] == "nowhere").unwrap();
    assert_eq!(missing[2], "error");
    assert_eq!(rows.iter().filter(|r| r[0] == "u001").count(), 4);

    std::fs::write(f.path("empty.tsv"), "").unwrap();
    ok(
        &[
            "divided",
            "--run-dir",
            "run",
            "--query",
            "empty.tsv",
            "--out",
            "e.csv",
        ],
        f.cwd(),
    );
    assert_eq!(
        csv_rows(f.path("e.csv")),
        vec![vec!["unit", "cluster", "verdict", "detail"]]
    );
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(
            &[
                "synth",
                "--out-dir",
                out,
                "--contamination",
                "0.2",
                "--lacunae",
                "0.1",
                "--seed",
                "3",
            ],
            dir.path(),
        );
    }
    for name in ["collation.tsv", "labels.tsv"] {
        assert_eq!(
            read(dir.path().join("a").join(name)),
            read(dir.path().join("b").join(name))
        );
    }
}

#[test]
fn replay_is_byte_identical() {
    let f = Fixture::new();
    ok(
        &["replay", "run/manifest.json", "--out-dir", "again"],
        f.cwd(),
    );
    for name in ["W.csv", "H.csv", "stats.json", "labels.json", "X.txt"] {
        assert_eq!(
            std::fs::read(f.path("run").join(name)).unwrap(),
            std::fs::read(f.path("again").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn matrix_export() {
    let f = Fixture::new();
    ok(
        &[
            "matrix",
            "--input",
            "syn/collation.tsv",
            "--weighting",
            "idf",
            "--min-extant",
            "25",
            "--out-dir",
            "mx",
        ],
        f.cwd(),
    );
    ok(
        &[
            "matrix",
            "--input",
            "syn/collation.tsv",
            "--min-extant",
            "25",
            "--out-dir",
            "mu",
        ],
        f.cwd(),
    );
    assert_eq!(read(f.path("mu/X.txt")), read(f.path("run/X.txt")));
    assert_ne!(read(f.path("mx/X.txt")), read(f.path("run/X.txt")));
    let labels: Value = serde_json::from_str(&read(f.path("mx/labels.json"))).unwrap();
    assert_eq!(labels["cols"].as_array().unwrap().len(), 32);
    // Shared readings carry every witness and therefore zero IDF weight.
    let weights = labels["row_weights"].as_array().unwrap();
    assert!(weights.iter().any(|w| w.as_f64() == Some(0.0)));
    let log: Value = serde_json::from_str(&read(f.path("mx/exclusions.json"))).unwrap();
    assert!(log.as_array().is_some());
}
