//! Planted-cluster collations for validation.
//!
//! Each exclusive unit carries one reading per cluster; a witness attests its
//! own cluster's reading unless contamination flips it to a uniformly chosen
//! rival cluster's reading. Shared units carry a single reading attested by
//! every witness. Lacunae are written as `lacunose` cells, so they are removed
//! by the default exclusion policy rather than silently missing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collation::{CellState, Collation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub clusters: usize,
    pub witnesses_per_cluster: usize,
    /// Units whose readings separate the clusters.
    pub exclusive_units: usize,
    /// Units with one reading common to all witnesses.
    pub shared_units: usize,
    /// Probability that a witness attests a rival cluster's reading.
    pub contamination: f64,
    /// Probability that a cell is lacunose.
    pub lacuna_rate: f64,
    /// Extra fragmentary witnesses, planted round-robin across clusters.
    pub fragments: usize,
    /// Probability that a fragment is extant at a unit.
    pub fragment_extant: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            clusters: 4,
            witnesses_per_cluster: 20,
            exclusive_units: 30,
            shared_units: 0,
            contamination: 0.0,
            lacuna_rate: 0.0,
            fragments: 0,
            fragment_extant: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.witnesses_per_cluster == 0 {
            return Err(Error::Config(
                "clusters and witnesses per cluster must be positive".into(),
            ));
        }
        if self.exclusive_units + self.shared_units == 0 {
            return Err(Error::Config("at least one unit is required".into()));
        }
        for (name, p) in [
            ("contamination", self.contamination),
            ("lacuna rate", self.lacuna_rate),
            ("fragment extant rate", self.fragment_extant),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} must lie in [0, 1]")));
            }
        }
        if self.contamination > 0.0 && self.clusters < 2 {
            return Err(Error::Config(
                "contamination needs at least two clusters".into(),
            ));
        }
        Ok(())
    }
}

/// A generated collation with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCollation {
    pub collation: Collation,
    /// `(witness, planted cluster)` in witness order.
    pub labels: Vec<(String, usize)>,
    /// Ids of the fragmentary witnesses.
    pub fragments: Vec<String>,
    /// Exclusive-unit cells that were attested and drawn from a rival cluster.
    pub contaminated_cells: usize,
    /// Exclusive-unit cells that were attested.
    pub exclusive_cells: usize,
}

impl SyntheticCollation {
    /// Planted cluster of every witness, in witness order.
    pub fn planted(&self) -> Vec<usize> {
        self.labels.iter().map(|(_, c)| *c).collect()
    }

    /// Planted cluster for each of `witnesses`, `None` for unknown ids.
    pub fn planted_for(&self, witnesses: &[String]) -> Vec<Option<usize>> {
        witnesses
            .iter()
            .map(|w| self.labels.iter().find(|(id, _)| id == w).map(|(_, c)| *c))
            .collect()
    }

    /// `witness<TAB>cluster` table with a header line.
    pub fn labels_tsv(&self) -> String {
        let mut out = String::from("witness\tcluster\n");
        for (w, c) in &self.labels {
            out.push_str(&format!("{w}\t{c}\n"));
        }
        out
    }
}

pub fn witness_id(cluster: usize, index: usize) -> String {
    format!("c{cluster}w{index:02}")
}

pub fn fragment_id(index: usize) -> String {
    format!("frag{index:02}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCollation> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.clusters;
    let mut labels: Vec<(String, usize)> = Vec::new();
    for c in 0..k {
        for i in 0..cfg.witnesses_per_cluster {
            labels.push((witness_id(c, i), c));
        }
    }
    let fragments: Vec<String> = (0..cfg.fragments).map(fragment_id).collect();
    labels.extend(
        fragments
            .iter()
            .enumerate()
            .map(|(f, id)| (id.clone(), f % k)),
    );
    let primary_count = k * cfg.witnesses_per_cluster;

    let mut records: Vec<(String, String, String, CellState)> = Vec::new();
    let mut contaminated_cells = 0;
    let mut exclusive_cells = 0;
    let units = cfg.exclusive_units + cfg.shared_units;
    for u in 0..units {
        let unit = format!("u{u:03}");
        let exclusive = u < cfg.exclusive_units;
        for (j, (witness, own)) in labels.iter().enumerate() {
            let fragment = j >= primary_count;
            if fragment && !rng.random_bool(cfg.fragment_extant) {
                records.push((
                    witness.clone(),
                    unit.clone(),
                    String::new(),
                    CellState::Lacunose,
                ));
                continue;
            }
            if rng.random_bool(cfg.lacuna_rate) {
                records.push((
                    witness.clone(),
                    unit.clone(),
                    String::new(),
                    CellState::Lacunose,
                ));
                continue;
            }
            let reading = if exclusive {
                exclusive_cells += 1;
                let mut c = *own;
                if rng.random_bool(cfg.contamination) {
                    let offset = rng.random_range(1..k);
                    c = (own + offset) % k;
                    contaminated_cells += 1;
                }
                format!("r{c}")
            } else {
                "s".to_string()
            };
            records.push((witness.clone(), unit.clone(), reading, CellState::Attested));
        }
    }
    Ok(SyntheticCollation {
        collation: Collation::from_records(records)?,
        labels,
        fragments,
        contaminated_cells,
        exclusive_cells,
    })
}

/// Fraction of witnesses whose assigned cluster matches the planted one under
/// the best relabelling of clusters. Unassigned witnesses count as misses.
pub fn recovery_rate(planted: &[usize], assigned: &[Option<usize>], k: usize) -> Result<f64> {
    if planted.len() != assigned.len() {
        return Err(Error::Dimension(format!(
            "{} planted labels against {} assignments",
            planted.len(),
            assigned.len()
        )));
    }
    if planted.is_empty() {
        return Err(Error::EmptyMatrix("no witnesses to score".into()));
    }
    if let Some(bad) = planted
        .iter()
        .copied()
        .chain(assigned.iter().flatten().copied())
        .find(|&c| c >= k)
    {
        return Err(Error::Dimension(format!("cluster {bad} outside 0..{k}")));
    }
    // confusion[p][a]: witnesses planted in p and assigned to a.
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, a) in planted.iter().zip(assigned) {
        if let Some(a) = *a {
            confusion[p][a] += 1;
        }
    }
    let mut used = vec![false; k];
    let best = best_matching(&confusion, 0, &mut used);
    Ok(best as f64 / planted.len() as f64)
}

/// Maximum-weight perfect matching by exhaustive search with an optimistic
/// bound; adequate for the small cluster counts used here.
fn best_matching(confusion: &[Vec<usize>], row: usize, used: &mut [bool]) -> usize {
    if row == confusion.len() {
        return 0;
    }
    let mut best = 0;
    for col in 0..used.len() {
        if used[col] {
            continue;
        }
        let gain = confusion[row][col];
        let bound: usize = gain
            + confusion[row + 1..]
                .iter()
                .map(|r| r.iter().copied().max().unwrap_or(0))
                .sum::<usize>();
        if bound <= best {
            continue;
        }
        used[col] = true;
        best = best.max(gain + best_matching(confusion, row + 1, used));
        used[col] = false;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clean_generation_shape() {
        let s = generate(&SynthConfig {
            clusters: 3,
            witnesses_per_cluster: 4,
            exclusive_units: 5,
            shared_units: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(s.collation.witnesses().len(), 12);
        assert_eq!(s.collation.units().len(), 7);
        assert_eq!(s.collation.cells().len(), 84);
        // Three readings per exclusive unit plus one per shared unit.
        assert_eq!(s.collation.readings().len(), 3 * 5 + 2);
        assert_eq!(s.contaminated_cells, 0);
    }

    #[test]
    fn rates_are_validated() {
        for bad in [-0.1, 1.5, f64::NAN] {
            let cfg = SynthConfig {
                contamination: bad,
                ..SynthConfig::default()
            };
            assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn same_seed_same_collation() {
        let cfg = SynthConfig {
            contamination: 0.2,
            lacuna_rate: 0.1,
            seed: 9,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }

    #[test]
    fn recovery_under_relabelling() {
        let planted = [0, 0, 1, 1, 2, 2];
        let assigned = [Some(2), Some(2), Some(0), Some(0), Some(1), None];
        let r = recovery_rate(&planted, &assigned, 3).unwrap();
        assert!((r - 5.0 / 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn recovery_is_permutation_invariant(
            planted in prop::collection::vec(0usize..4, 1..30),
            shift in 0usize..4,
        ) {
            let assigned: Vec<Option<usize>> = planted.iter().map(|c| Some((c + shift) % 4)).collect();
            prop_assert_eq!(recovery_rate(&planted, &assigned, 4).unwrap(), 1.0);
        }
    }
}
