//! Collation ingestion and the exclusion pipeline.
//!
//! A collation records, for every (witness, variation unit) pair, which
//! reading the witness attests and in what state. Readings are scoped to their
//! unit, so reading `1` at one unit and reading `1` at another are different
//! rows of the eventual matrix.
//!
//! Input is tab-separated (columns `witness`, `unit`, `reading`, `state`; state optional) or
//! a JSON array of objects with the same fields.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellState {
    Attested,
    Lacunose,
    Uncertain,
    Corrector,
    Overlapped,
}

impl CellState {
    pub const ALL: [CellState; 5] = [
        CellState::Attested,
        CellState::Lacunose,
        CellState::Uncertain,
        CellState::Corrector,
        CellState::Overlapped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CellState::Attested => "attested",
            CellState::Lacunose => "lacunose",
            CellState::Uncertain => "uncertain",
            CellState::Corrector => "corrector",
            CellState::Overlapped => "overlapped",
        }
    }
}

impl fmt::Display for CellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let token = s.trim();
        if token.is_empty() {
            return Ok(CellState::Attested);
        }
        CellState::ALL
            .into_iter()
            .find(|state| state.as_str().eq_ignore_ascii_case(token))
            .ok_or_else(|| token.to_string())
    }
}

/// One (witness, unit) record. Indices refer to [`Collation::witnesses`] and
/// [`Collation::units`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub witness: usize,
    pub unit: usize,
    pub reading: String,
    pub state: CellState,
}

/// A reading identified by its unit and its unit-local id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReadingKey {
    pub unit: String,
    pub reading: String,
}

impl ReadingKey {
    pub fn new(unit: impl Into<String>, reading: impl Into<String>) -> Self {
        ReadingKey {
            unit: unit.into(),
            reading: reading.into(),
        }
    }

    /// `unit.reading`, the label layout used in profile tables.
    pub fn label(&self) -> String {
        format!("{}.{}", self.unit, self.reading)
    }
}

impl fmt::Display for ReadingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.unit, self.reading)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Collation {
    witnesses: Vec<String>,
    units: Vec<String>,
    cells: Vec<Cell>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CellRecord {
    witness: String,
    unit: String,
    #[serde(default)]
    reading: String,
    #[serde(default)]
    state: Option<String>,
}

#[derive(Default)]
struct CollationBuilder {
    collation: Collation,
    witness_index: HashMap<String, usize>,
    unit_index: HashMap<String, usize>,
    cell_index: HashMap<(usize, usize), usize>,
}

impl CollationBuilder {
    fn witness(&mut self, witness: &str) -> usize {
        let c = &mut self.collation;
        *self
            .witness_index
            .entry(witness.to_string())
            .or_insert_with(|| {
                c.witnesses.push(witness.to_string());
                c.witnesses.len() - 1
            })
    }

    fn unit(&mut self, unit: &str) -> usize {
        let c = &mut self.collation;
        *self.unit_index.entry(unit.to_string()).or_insert_with(|| {
            c.units.push(unit.to_string());
            c.units.len() - 1
        })
    }

    fn push(
        &mut self,
        line: usize,
        witness: &str,
        unit: &str,
        reading: &str,
        state: CellState,
    ) -> Result<()> {
        if witness.is_empty() || unit.is_empty() {
            return Err(Error::Parse {
                line,
                message: "witness and unit must be non-empty".into(),
            });
        }
        if state == CellState::Attested && reading.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("attested cell for `{witness}` at `{unit}` has no reading"),
            });
        }
        let w = self.witness(witness);
        let u = self.unit(unit);
        let c = &mut self.collation;
        if let Some(&existing) = self.cell_index.get(&(w, u)) {
            let prev = &c.cells[existing];
            if prev.reading == reading && prev.state == state {
                return Ok(());
            }
            return Err(Error::DuplicateCell {
                line,
                witness: witness.to_string(),
                unit: unit.to_string(),
            });
        }
        self.cell_index.insert((w, u), c.cells.len());
        c.cells.push(Cell {
            witness: w,
            unit: u,
            reading: reading.to_string(),
            state,
        });
        Ok(())
    }
}

/// Parses a collation document, sniffing JSON (leading `[`) versus TSV.
pub fn parse_collation(source: &str) -> Result<Collation> {
    let trimmed = source.trim_start_matches('\u{feff}').trim_start();
    if trimmed.starts_with('[') {
        parse_json(trimmed)
    } else {
        parse_tsv(source.trim_start_matches('\u{feff}'))
    }
}

fn parse_json(source: &str) -> Result<Collation> {
    let records: Vec<CellRecord> = serde_json::from_str(source)?;
    let mut builder = CollationBuilder::default();
    for (i, rec) in records.iter().enumerate() {
        let line = i + 1;
        let state = match &rec.state {
            None => CellState::Attested,
            Some(token) => token
                .parse()
                .map_err(|token| Error::UnknownState { line, token })?,
        };
        builder.push(
            line,
            rec.witness.trim(),
            rec.unit.trim(),
            rec.reading.trim(),
            state,
        )?;
    }
    Ok(builder.collation)
}

fn parse_tsv(source: &str) -> Result<Collation> {
    let mut builder = CollationBuilder::default();
    let mut columns: Option<[Option<usize>; 4]> = None;
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        let Some(cols) = columns else {
            columns = Some(header_columns(&fields, line)?);
            continue;
        };
        let get = |slot: Option<usize>| slot.and_then(|c| fields.get(c).copied()).unwrap_or("");
        let [w, u, r, s] = cols;
        if fields.len() < 2 {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected at least 2 tab-separated fields, found {}",
                    fields.len()
                ),
            });
        }
        let state = get(s)
            .parse()
            .map_err(|token| Error::UnknownState { line, token })?;
        builder.push(line, get(w), get(u), get(r), state)?;
    }
    Ok(builder.collation)
}

fn header_columns(fields: &[&str], line: usize) -> Result<[Option<usize>; 4]> {
    let find = |name: &str| fields.iter().position(|f| f.eq_ignore_ascii_case(name));
    let cols = [
        find("witness"),
        find("unit"),
        find("reading"),
        find("state"),
    ];
    if cols[0].is_none() || cols[1].is_none() || cols[2].is_none() {
        return Err(Error::Parse {
            line,
            message: "header must name `witness`, `unit` and `reading` columns".into(),
        });
    }
    Ok(cols)
}

impl Collation {
    /// Builds from `(witness, unit, reading, state)` records with the same
    /// rules as the text parsers; `line` in errors is the 1-based record index.
    pub fn from_records<I, S>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, S, CellState)>,
        S: AsRef<str>,
    {
        let mut builder = CollationBuilder::default();
        for (i, (w, u, r, state)) in records.into_iter().enumerate() {
            builder.push(
                i + 1,
                w.as_ref().trim(),
                u.as_ref().trim(),
                r.as_ref().trim(),
                state,
            )?;
        }
        Ok(builder.collation)
    }

    pub fn witnesses(&self) -> &[String] {
        &self.witnesses
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Distinct readings in unit order, then first appearance within the unit.
    /// Cells in non-attested states still name readings; an empty reading id
    /// (allowed for gaps) is not a reading.
    pub fn readings(&self) -> Vec<ReadingKey> {
        let mut per_unit: Vec<Vec<&str>> = vec![Vec::new(); self.units.len()];
        for cell in &self.cells {
            let slot = &mut per_unit[cell.unit];
            if !cell.reading.is_empty() && !slot.contains(&cell.reading.as_str()) {
                slot.push(&cell.reading);
            }
        }
        per_unit
            .into_iter()
            .enumerate()
            .flat_map(|(u, rs)| rs.into_iter().map(move |r| (u, r)))
            .map(|(u, r)| ReadingKey::new(self.units[u].clone(), r))
            .collect()
    }

    /// Re-encodes as TSV with a header, in cell order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("witness\tunit\treading\tstate\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                self.witnesses[cell.witness], self.units[cell.unit], cell.reading, cell.state
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionPolicy {
    pub drop_states: BTreeSet<CellState>,
    pub drop_singular_readings: bool,
    pub min_extant_readings: usize,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        ExclusionPolicy {
            drop_states: [
                CellState::Lacunose,
                CellState::Uncertain,
                CellState::Corrector,
                CellState::Overlapped,
            ]
            .into_iter()
            .collect(),
            drop_singular_readings: true,
            min_extant_readings: 300,
        }
    }
}

impl ExclusionPolicy {
    /// Keeps every cell and reading; every witness is primary.
    pub fn keep_all() -> Self {
        ExclusionPolicy {
            drop_states: BTreeSet::new(),
            drop_singular_readings: false,
            min_extant_readings: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.drop_states.contains(&CellState::Attested) {
            return Err(Error::Policy("`attested` cannot be a dropped state".into()));
        }
        Ok(())
    }

    /// Whether a cell in `state` can ever count as an attestation.
    fn counts(&self, state: CellState) -> bool {
        state == CellState::Attested || !self.drop_states.contains(&state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    /// Cell state is in the policy's drop set.
    State(CellState),
    /// No surviving attestation at all.
    Unattested,
    /// Attested by exactly one witness.
    Singular,
    /// Every surviving attestation belongs to a secondary witness.
    NoPrimaryAttestation,
    /// Witness has fewer surviving readings than the threshold.
    BelowMinExtant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Cell {
        witness: String,
        unit: String,
        reading: String,
        rule: DropRule,
    },
    Reading {
        unit: String,
        reading: String,
        attestations: usize,
        rule: DropRule,
    },
    Witness {
        witness: String,
        extant: usize,
        threshold: usize,
        rule: DropRule,
    },
}

/// A fragmentary witness excluded from the joint factorization, with the
/// retained rows it still attests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryWitness {
    pub witness: String,
    /// Indices into [`FilteredCollation::readings`].
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredCollation {
    units: Vec<String>,
    readings: Vec<ReadingKey>,
    unit_of_reading: Vec<usize>,
    primary: Vec<String>,
    /// (row, primary column) attestation pairs, sorted by row then column.
    primary_cells: Vec<(usize, usize)>,
    secondary: Vec<SecondaryWitness>,
    log: Vec<Provenance>,
    original_readings: usize,
    original_witnesses: usize,
}

impl FilteredCollation {
    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn readings(&self) -> &[ReadingKey] {
        &self.readings
    }

    /// Index into [`FilteredCollation::units`] for each retained reading.
    pub fn unit_of_reading(&self) -> &[usize] {
        &self.unit_of_reading
    }

    pub fn primary(&self) -> &[String] {
        &self.primary
    }

    pub fn primary_cells(&self) -> &[(usize, usize)] {
        &self.primary_cells
    }

    pub fn secondary(&self) -> &[SecondaryWitness] {
        &self.secondary
    }

    pub fn secondary_witness(&self, id: &str) -> Option<&SecondaryWitness> {
        self.secondary.iter().find(|s| s.witness == id)
    }

    pub fn log(&self) -> &[Provenance] {
        &self.log
    }

    pub fn original_readings(&self) -> usize {
        self.original_readings
    }

    pub fn original_witnesses(&self) -> usize {
        self.original_witnesses
    }

    /// No retained reading or no primary witness; such a result cannot be
    /// turned into a matrix.
    pub fn is_empty(&self) -> bool {
        self.readings.is_empty() || self.primary.is_empty()
    }

    pub fn dropped_readings(&self) -> usize {
        self.log
            .iter()
            .filter(|p| matches!(p, Provenance::Reading { .. }))
            .count()
    }

    /// Rebuilds a collation containing only the surviving attested cells, for
    /// re-filtering.
    pub fn to_collation(&self) -> Collation {
        let mut builder = CollationBuilder::default();
        for w in self
            .primary
            .iter()
            .chain(self.secondary.iter().map(|s| &s.witness))
        {
            builder.witness(w);
        }
        for u in &self.units {
            builder.unit(u);
        }
        // Row-major emission keeps reading first-appearance order.
        let mut by_row: Vec<Vec<&str>> = vec![Vec::new(); self.readings.len()];
        for &(row, col) in &self.primary_cells {
            by_row[row].push(&self.primary[col]);
        }
        for sec in &self.secondary {
            for &row in &sec.rows {
                by_row[row].push(&sec.witness);
            }
        }
        for (row, witnesses) in by_row.iter().enumerate() {
            let key = &self.readings[row];
            for w in witnesses {
                builder
                    .push(0, w, &key.unit, &key.reading, CellState::Attested)
                    .expect("filtered cells are unique per (witness, unit)");
            }
        }
        builder.collation
    }
}

/// Applies the exclusion pipeline in a single pass: state filter, singular
/// readings (counted over every witness), witness partition, then removal of
/// readings left without any primary attestation.
pub fn apply_exclusions(c: &Collation, policy: &ExclusionPolicy) -> Result<FilteredCollation> {
    policy.validate()?;
    let all_readings = c.readings();
    let reading_index: HashMap<(&str, &str), usize> = all_readings
        .iter()
        .enumerate()
        .map(|(i, k)| ((k.unit.as_str(), k.reading.as_str()), i))
        .collect();
    let mut log = Vec::new();

    // Stage 1: surviving attested cells as (witness, reading) pairs.
    let mut surviving: Vec<(usize, usize)> = Vec::new();
    for cell in &c.cells {
        if !policy.counts(cell.state) {
            log.push(Provenance::Cell {
                witness: c.witnesses[cell.witness].clone(),
                unit: c.units[cell.unit].clone(),
                reading: cell.reading.clone(),
                rule: DropRule::State(cell.state),
            });
            continue;
        }
        if cell.reading.is_empty() {
            continue;
        }
        let r = reading_index[&(c.units[cell.unit].as_str(), cell.reading.as_str())];
        surviving.push((cell.witness, r));
    }

    // Stage 2: attestation counts over all witnesses.
    let mut counts = vec![0usize; all_readings.len()];
    for &(_, r) in &surviving {
        counts[r] += 1;
    }
    let mut keep = vec![true; all_readings.len()];
    for (r, &n) in counts.iter().enumerate() {
        let rule = if n == 0 {
            Some(DropRule::Unattested)
        } else if n == 1 && policy.drop_singular_readings {
            Some(DropRule::Singular)
        } else {
            None
        };
        if let Some(rule) = rule {
            keep[r] = false;
            log.push(Provenance::Reading {
                unit: all_readings[r].unit.clone(),
                reading: all_readings[r].reading.clone(),
                attestations: n,
                rule,
            });
        }
    }
    surviving.retain(|&(_, r)| keep[r]);

    // Stage 3: witness partition by surviving reading count.
    let mut extant = vec![0usize; c.witnesses.len()];
    for &(w, _) in &surviving {
        extant[w] += 1;
    }
    let is_primary: Vec<bool> = extant
        .iter()
        .map(|&n| n >= policy.min_extant_readings)
        .collect();
    for (w, &primary) in is_primary.iter().enumerate() {
        if !primary {
            log.push(Provenance::Witness {
                witness: c.witnesses[w].clone(),
                extant: extant[w],
                threshold: policy.min_extant_readings,
                rule: DropRule::BelowMinExtant,
            });
        }
    }

    // Stage 4: readings attested only by secondary witnesses would be zero rows.
    let mut primary_count = vec![0usize; all_readings.len()];
    for &(w, r) in &surviving {
        if is_primary[w] {
            primary_count[r] += 1;
        }
    }
    for r in 0..all_readings.len() {
        if keep[r] && primary_count[r] == 0 {
            keep[r] = false;
            log.push(Provenance::Reading {
                unit: all_readings[r].unit.clone(),
                reading: all_readings[r].reading.clone(),
                attestations: counts[r],
                rule: DropRule::NoPrimaryAttestation,
            });
        }
    }

    let mut row_of = vec![usize::MAX; all_readings.len()];
    let mut readings = Vec::new();
    for (r, key) in all_readings.iter().enumerate() {
        if keep[r] {
            row_of[r] = readings.len();
            readings.push(key.clone());
        }
    }
    let unit_lookup: HashMap<&str, usize> = c
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let unit_of_reading = readings
        .iter()
        .map(|k| unit_lookup[k.unit.as_str()])
        .collect();

    let mut col_of = vec![usize::MAX; c.witnesses.len()];
    let mut primary = Vec::new();
    for (w, id) in c.witnesses.iter().enumerate() {
        if is_primary[w] {
            col_of[w] = primary.len();
            primary.push(id.clone());
        }
    }
    let mut secondary_rows: Vec<Vec<usize>> = vec![Vec::new(); c.witnesses.len()];
    let mut primary_cells = Vec::new();
    for &(w, r) in &surviving {
        if !keep[r] {
            continue;
        }
        if is_primary[w] {
            primary_cells.push((row_of[r], col_of[w]));
        } else {
            secondary_rows[w].push(row_of[r]);
        }
    }
    primary_cells.sort_unstable();
    let secondary = c
        .witnesses
        .iter()
        .enumerate()
        .filter(|&(w, _)| !is_primary[w])
        .map(|(w, id)| {
            let mut rows = std::mem::take(&mut secondary_rows[w]);
            rows.sort_unstable();
            SecondaryWitness {
                witness: id.clone(),
                rows,
            }
        })
        .collect();

    Ok(FilteredCollation {
        units: c.units.clone(),
        readings,
        unit_of_reading,
        primary,
        primary_cells,
        secondary,
        log,
        original_readings: all_readings.len(),
        original_witnesses: c.witnesses.len(),
    })
}
