//! Command-line front end.
//!
//! Every subcommand either succeeds with exit code 0 or prints a single JSON
//! object `{"error":{"kind":…,"message":…}}` on standard error and exits
//! non-zero.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    classify_secondary, cluster_profile, divided_reading_support, normalize_mixture, MixtureVector,
    ReadingGroup, ReadingVector, Verdict,
};
use crate::artifacts::{self, finish_csv, load_run, AtomicBatch, RunArtifacts, RunManifest};
use crate::collation::{
    apply_exclusions, parse_collation, CellState, ExclusionPolicy, FilteredCollation,
};
use crate::error::{Error, Result};
use crate::factorize::{factorize, FactorConfig, Factorization, Init};
use crate::matrix::{build_matrix, weighted, CollationMatrix, Weighting};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "collnmf",
    version,
    about = "Non-negative matrix factorization of textual collations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize a collation and write W.csv, H.csv, stats.json and manifest.json.
    Factor(FactorArgs),
    /// Re-run the factorization recorded in a manifest.
    Replay(ReplayArgs),
    /// Write ranked witness and reading tables for each cluster.
    Profile(ProfileArgs),
    /// Classify secondary (fragmentary) witnesses against a run's basis.
    Classify(ClassifyArgs),
    /// Generate a planted-cluster collation with ground-truth labels.
    Synth(SynthArgs),
    /// Report per-cluster support for reading groups at contested units.
    Divided(DividedArgs),
    /// Export the filtered, weighted matrix as triplets plus a label sidecar.
    Matrix(MatrixArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Witnesses with fewer retained readings become secondary.
    #[arg(long, default_value_t = 300)]
    pub min_extant: usize,
    /// Keep readings attested by a single witness.
    #[arg(long)]
    pub keep_singular: bool,
    /// Comma-separated cell states to drop, or `none`.
    #[arg(long, default_value = "lacunose,uncertain,corrector,overlapped")]
    pub drop_states: String,
}

impl PolicyArgs {
    pub fn policy(&self) -> Result<ExclusionPolicy> {
        let mut drop_states = BTreeSet::new();
        let spec = self.drop_states.trim();
        if !spec.eq_ignore_ascii_case("none") {
            for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let state: CellState = token
                    .parse()
                    .map_err(|t| Error::Config(format!("unknown cell state `{t}`")))?;
                drop_states.insert(state);
            }
        }
        let policy = ExclusionPolicy {
            drop_states,
            drop_singular_readings: !self.keep_singular,
            min_extant_readings: self.min_extant,
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FactorArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "uniform")]
    pub weighting: Weighting,
    /// Number of clusters.
    #[arg(long, conflicts_with = "k_range", required_unless_present = "k_range")]
    pub k: Option<usize>,
    /// Inclusive sweep `A:B`; each k is written to `<out-dir>/k<k>/`.
    #[arg(long)]
    pub k_range: Option<String>,
    #[arg(long, default_value_t = 8000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value = "nndsvd")]
    pub init: Init,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Path to a manifest.json written by `factor`.
    pub manifest: PathBuf,
    /// Write to this directory instead of the manifest's.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Rows per table.
    #[arg(long, default_value_t = 15)]
    pub limit: usize,
    /// Only this cluster (1-based).
    #[arg(long)]
    pub cluster: Option<usize>,
    /// Witnesses for the mixture table (all primary witnesses if omitted).
    #[arg(long)]
    pub witness: Vec<String>,
    /// Defaults to `<run-dir>/profile`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Collation to take secondary cells from (defaults to the manifest's input).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Defaults to `<run-dir>/secondary.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 20)]
    pub witnesses_per_cluster: usize,
    /// Exclusive readings per cluster (one unit each).
    #[arg(long, default_value_t = 30)]
    pub exclusive: usize,
    /// Units whose single reading every witness shares.
    #[arg(long, default_value_t = 0)]
    pub shared: usize,
    #[arg(long, default_value_t = 0.0)]
    pub contamination: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lacunae: f64,
    /// Additional fragmentary witnesses.
    #[arg(long, default_value_t = 0)]
    pub fragments: usize,
    /// Probability that a fragment is extant at a unit.
    #[arg(long, default_value_t = 0.5)]
    pub fragment_extant: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DividedArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    /// TSV of `unit<TAB>group<TAB>reading,reading,…` lines.
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Units to score with every reading as its own group.
    #[arg(long)]
    pub unit: Vec<String>,
    /// Defaults to `<run-dir>/divided.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "uniform")]
    pub weighting: Weighting,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorEnvelope<'a> {
    error: ErrorBody<'a>,
}

/// The JSON line printed on standard error for a failed command.
pub fn error_json(kind: &str, message: impl Into<String>) -> String {
    serde_json::to_string(&ErrorEnvelope {
        error: ErrorBody {
            kind,
            message: message.into(),
        },
    })
    .unwrap_or_else(|_| format!("{{\"error\":{{\"kind\":\"{kind}\",\"message\":\"\"}}}}"))
}

/// Parses `std::env::args`, runs the command, and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            eprintln!("{}", error_json("usage", e.to_string().trim_end()));
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), e.to_string()));
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Factor(args) => cmd_factor(&args).map(|_| ()),
        Command::Replay(args) => cmd_replay(&args).map(|_| ()),
        Command::Profile(args) => cmd_profile(&args),
        Command::Classify(args) => cmd_classify(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Divided(args) => cmd_divided(&args),
        Command::Matrix(args) => cmd_matrix(&args),
    }
}

fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Reads, filters and weights a collation.
pub fn load_matrix(
    input: &Path,
    policy: &ExclusionPolicy,
    weighting: Weighting,
) -> Result<(FilteredCollation, CollationMatrix)> {
    let collation = parse_collation(&read_input(input)?)?;
    let filtered = apply_exclusions(&collation, policy)?;
    let x = weighted(&build_matrix(&filtered)?, weighting)?;
    Ok((filtered, x))
}

/// Parses an inclusive `A:B` range.
pub fn parse_k_range(spec: &str) -> Result<Vec<usize>> {
    let bad = || {
        Error::Config(format!(
            "k range `{spec}` must look like A:B with 1 <= A <= B"
        ))
    };
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Runs `factor`; returns the directories written.
pub fn cmd_factor(args: &FactorArgs) -> Result<Vec<PathBuf>> {
    let policy = args.policy.policy()?;
    let ks = match (&args.k_range, args.k) {
        (Some(range), _) => parse_k_range(range)?,
        (None, Some(k)) => vec![k],
        (None, None) => return Err(Error::Config("one of --k or --k-range is required".into())),
    };
    let base = FactorConfig {
        max_iter: args.max_iter,
        tol: args.tol,
        init: args.init,
        runs: args.runs,
        seed: args.seed,
        ..FactorConfig::new(ks[0])
    };
    let input = absolute(&args.input);
    let out_dir = absolute(&args.out_dir);
    let (_, x) = load_matrix(&input, &policy, args.weighting)?;
    let configs: Vec<FactorConfig> = ks
        .iter()
        .map(|&k| FactorConfig { k, ..base.clone() })
        .collect();
    for cfg in &configs {
        cfg.validate(&x)?;
    }
    let sweep = args.k_range.is_some();
    let started = artifacts::unix_now();
    let fits: Vec<Factorization> = configs
        .par_iter()
        .map(|cfg| factorize(&x, cfg))
        .collect::<Result<_>>()?;
    let mut dirs = Vec::new();
    for (cfg, fit) in configs.into_iter().zip(&fits) {
        let dir = if sweep {
            out_dir.join(format!("k{}", cfg.k))
        } else {
            out_dir.clone()
        };
        let mut manifest = RunManifest::new(
            input.clone(),
            policy.clone(),
            args.weighting,
            cfg,
            dir.clone(),
        );
        manifest.started_unix = started;
        manifest.finished_unix = artifacts::unix_now();
        artifacts::write_run(&dir, &x, fit, &manifest)?;
        dirs.push(dir);
    }
    if sweep {
        let mut batch = AtomicBatch::new();
        batch.add("sweep.csv", sweep_csv(&fits)?);
        batch.commit(&out_dir)?;
    }
    Ok(dirs)
}

fn sweep_csv(fits: &[Factorization]) -> Result<Vec<u8>> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record([
        "k",
        "n_iter",
        "dist",
        "evar",
        "w_sparseness",
        "h_sparseness",
        "converged",
    ])?;
    for fit in fits {
        let s = &fit.stats;
        out.write_record([
            s.k.to_string(),
            s.n_iter.to_string(),
            s.dist.to_string(),
            s.evar.to_string(),
            s.w_sparseness.to_string(),
            s.h_sparseness.to_string(),
            s.converged.to_string(),
        ])?;
    }
    finish_csv(out)
}

/// Runs `replay`; returns the directory written.
pub fn cmd_replay(args: &ReplayArgs) -> Result<PathBuf> {
    let recorded = RunManifest::read(&args.manifest)?;
    let dir = args
        .out_dir
        .as_deref()
        .map(absolute)
        .unwrap_or_else(|| recorded.out_dir.clone());
    let started = artifacts::unix_now();
    let (_, x) = load_matrix(&recorded.input, &recorded.policy, recorded.weighting)?;
    recorded.config.validate(&x)?;
    let fit = factorize(&x, &recorded.config)?;
    let manifest = RunManifest {
        out_dir: dir.clone(),
        started_unix: started,
        finished_unix: artifacts::unix_now(),
        ..recorded
    };
    artifacts::write_run(&dir, &x, &fit, &manifest)?;
    Ok(dir)
}

fn cluster_index(cluster: usize, k: usize) -> Result<usize> {
    if cluster == 0 || cluster > k {
        return Err(Error::Config(format!("cluster {cluster} outside 1..={k}")));
    }
    Ok(cluster - 1)
}

fn cmd_profile(args: &ProfileArgs) -> Result<()> {
    let run = load_run(&args.run_dir)?;
    let k = run.k();
    let clusters: Vec<usize> = match args.cluster {
        Some(c) => vec![cluster_index(c, k)?],
        None => (0..k).collect(),
    };
    let mut batch = AtomicBatch::new();
    let witnesses = run.x.col_labels();
    for &c in &clusters {
        let p = cluster_profile(&run.w, &run.h, run.x.row_labels(), witnesses, c, args.limit)?;
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["rank", "witness", "coefficient", "member", "cluster_size"])?;
        for (i, rw) in p.witnesses.iter().enumerate() {
            out.write_record([
                (i + 1).to_string(),
                rw.witness.clone(),
                rw.coefficient.to_string(),
                rw.member.to_string(),
                p.size.to_string(),
            ])?;
        }
        batch.add(format!("cluster_{}_witnesses.csv", c + 1), finish_csv(out)?);

        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["rank", "unit", "reading", "coefficient"])?;
        for (i, rr) in p.readings.entries.iter().enumerate() {
            out.write_record([
                (i + 1).to_string(),
                rr.unit.clone(),
                rr.reading.clone(),
                rr.coefficient.to_string(),
            ])?;
        }
        batch.add(format!("cluster_{}_readings.csv", c + 1), finish_csv(out)?);
    }

    let selected: Vec<usize> = if args.witness.is_empty() {
        (0..witnesses.len()).collect()
    } else {
        args.witness
            .iter()
            .map(|id| {
                witnesses
                    .iter()
                    .position(|w| w == id)
                    .ok_or_else(|| Error::UnknownWitness(id.clone()))
            })
            .collect::<Result<_>>()?
    };
    let mut header = vec!["witness".to_string()];
    header.extend((1..=k).map(|c| format!("C{c}")));
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(&header)?;
    for j in selected {
        let mv = normalize_mixture(&MixtureVector::from_column(&run.h, j, witnesses[j].clone()));
        let mut record = vec![mv.witness.clone()];
        match &mv.normalized {
            Some(p) => record.extend(p.iter().map(|v| v.to_string())),
            None => record.extend(std::iter::repeat_n(String::new(), k)),
        }
        out.write_record(&record)?;
    }
    batch.add("mixtures.csv", finish_csv(out)?);
    let dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| run.dir.join("profile"));
    batch.commit(&dir)?;
    Ok(())
}

fn recorded_manifest(run: &RunArtifacts) -> Result<&RunManifest> {
    run.manifest.as_ref().ok_or_else(|| Error::Artifact {
        path: run.dir.join(artifacts::MANIFEST_FILE).display().to_string(),
        message: "missing manifest".into(),
    })
}

fn cmd_classify(args: &ClassifyArgs) -> Result<()> {
    let run = load_run(&args.run_dir)?;
    let manifest = recorded_manifest(&run)?;
    let input = args.input.clone().unwrap_or_else(|| manifest.input.clone());
    let collation = parse_collation(&read_input(&input)?)?;
    let filtered = apply_exclusions(&collation, &manifest.policy)?;
    if filtered.readings() != run.x.row_labels() || filtered.primary() != run.x.col_labels() {
        return Err(Error::Artifact {
            path: input.display().to_string(),
            message: "collation does not reproduce the run's matrix labels".into(),
        });
    }
    let mixtures: Vec<(MixtureVector, usize)> = filtered
        .secondary()
        .par_iter()
        .map(|sec| {
            let rv = ReadingVector::from_rows(sec.witness.clone(), &sec.rows, &run.x)?;
            let units: BTreeSet<usize> = rv
                .extant_rows
                .iter()
                .map(|&r| run.x.unit_of_row()[r])
                .collect();
            Ok((classify_secondary(&run.w, &rv)?, units.len()))
        })
        .collect::<Result<_>>()?;
    let k = run.k();
    let mut header = vec![
        "witness".to_string(),
        "extant_units".to_string(),
        "status".to_string(),
        "dominant".to_string(),
    ];
    header.extend((1..=k).map(|c| format!("C{c}")));
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(&header)?;
    for (mv, units) in &mixtures {
        let (status, dominant) = match mv.dominant() {
            Some(c) if mv.is_classifiable() => ("ok", format!("C{}", c + 1)),
            _ => ("unclassifiable", String::new()),
        };
        let mut record = vec![
            mv.witness.clone(),
            units.to_string(),
            status.to_string(),
            dominant,
        ];
        record.extend(mv.coefficients.iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    let target = args
        .out
        .clone()
        .unwrap_or_else(|| run.dir.join("secondary.csv"));
    commit_single(&target, finish_csv(out)?)
}

fn commit_single(target: &Path, contents: Vec<u8>) -> Result<()> {
    let name = target
        .file_name()
        .ok_or_else(|| Error::Config(format!("`{}` is not a file path", target.display())))?
        .to_string_lossy()
        .into_owned();
    let dir = target
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut batch = AtomicBatch::new();
    batch.add(name, contents);
    batch.commit(dir)?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        clusters: args.clusters,
        witnesses_per_cluster: args.witnesses_per_cluster,
        exclusive_units: args.exclusive,
        shared_units: args.shared,
        contamination: args.contamination,
        lacuna_rate: args.lacunae,
        fragments: args.fragments,
        fragment_extant: args.fragment_extant,
        seed: args.seed,
    };
    let synth = generate(&cfg)?;
    let mut batch = AtomicBatch::new();
    batch.add("collation.tsv", synth.collation.to_tsv().into_bytes());
    batch.add("labels.tsv", synth.labels_tsv().into_bytes());
    batch.add_json("synth.json", &cfg)?;
    batch.commit(&args.out_dir)?;
    Ok(())
}

/// One query line: a unit with its (possibly empty) list of reading groups.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitQuery {
    pub unit: String,
    pub groups: Vec<ReadingGroup>,
}

/// Parses the divided-reading query format. Lines are
/// `unit<TAB>group<TAB>reading,reading,…`; a bare `unit` asks for every
/// reading as its own group. Blank lines, `#` comments and a leading
/// `unit<TAB>group…` header are ignored.
pub fn parse_query(text: &str) -> Result<Vec<UnitQuery>> {
    let mut queries: Vec<UnitQuery> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if queries.is_empty() && fields[0].eq_ignore_ascii_case("unit") {
            continue;
        }
        let unit = fields[0];
        if unit.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty unit".into(),
            });
        }
        let idx = match queries.iter().position(|q| q.unit == unit) {
            Some(idx) => idx,
            None => {
                queries.push(UnitQuery {
                    unit: unit.to_string(),
                    groups: Vec::new(),
                });
                queries.len() - 1
            }
        };
        match fields.len() {
            1 => {}
            3 => {
                let readings: Vec<&str> = fields[2]
                    .split(',')
                    .map(str::trim)
                    .filter(|r| !r.is_empty())
                    .collect();
                if fields[1].is_empty() || readings.is_empty() {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "a group needs a label and at least one reading".into(),
                    });
                }
                queries[idx]
                    .groups
                    .push(ReadingGroup::new(fields[1], readings));
            }
            n => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 1 or 3 tab-separated fields, found {n}"),
                })
            }
        }
    }
    Ok(queries)
}

fn cmd_divided(args: &DividedArgs) -> Result<()> {
    let run = load_run(&args.run_dir)?;
    let mut queries = match &args.query {
        Some(path) => parse_query(&read_input(path)?)?,
        None => Vec::new(),
    };
    for unit in &args.unit {
        if !queries.iter().any(|q| &q.unit == unit) {
            queries.push(UnitQuery {
                unit: unit.clone(),
                groups: Vec::new(),
            });
        }
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["unit", "cluster", "verdict", "detail"])?;
    for q in &queries {
        match divided_reading_support(&run.w, &run.x, &q.unit, &q.groups) {
            Ok(v) => {
                for (c, verdict) in v.verdicts.iter().enumerate() {
                    let detail = v
                        .groups
                        .iter()
                        .zip(&v.scores[c])
                        .map(|(g, s)| format!("{g}={s}"))
                        .collect::<Vec<_>>()
                        .join(";");
                    let verdict = match verdict {
                        Verdict::Group(label) => label.clone(),
                        Verdict::Split => "Split".to_string(),
                    };
                    out.write_record([q.unit.clone(), format!("C{}", c + 1), verdict, detail])?;
                }
            }
            Err(e) => out.write_record([
                q.unit.clone(),
                String::new(),
                "error".to_string(),
                e.to_string(),
            ])?,
        }
    }
    let target = args
        .out
        .clone()
        .unwrap_or_else(|| run.dir.join("divided.csv"));
    commit_single(&target, finish_csv(out)?)
}

fn cmd_matrix(args: &MatrixArgs) -> Result<()> {
    let policy = args.policy.policy()?;
    let (filtered, x) = load_matrix(&args.input, &policy, args.weighting)?;
    let mut triplets = Vec::new();
    x.data().write_triplets(&mut triplets)?;
    let mut batch = AtomicBatch::new();
    batch.add(artifacts::MATRIX_FILE, triplets);
    batch.add_json(artifacts::LABELS_FILE, &x.labels())?;
    batch.add_json("exclusions.json", &filtered.log())?;
    batch.commit(&args.out_dir)?;
    Ok(())
}
