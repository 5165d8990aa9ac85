//! Identification disclosure risk.
//!
//! For each target the intruder matches the known values against the
//! release: un-synthesized variables must agree exactly, synthesized ones
//! are compared with plausible original values (exactly for categorical
//! variables, within a radius for continuous ones). Match probabilities are
//! averaged over Monte Carlo draws of those plausible originals and rolled
//! up into the expected match risk, true match rate and false match rate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;

use crate::data::{Cell, Column, Dataset, Partition, Schema, Target, TargetFile};
use crate::error::IdentificationError;
use crate::rng::{self, StreamRng};
use crate::synthesis::{Predictive, SyntheticRelease};

/// Match probabilities closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RadiusMetric {
    /// `|z - t| <= radius`.
    Absolute,
    /// `|z - t| <= radius * |t|`.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Radius {
    pub radius: f64,
    pub metric: RadiusMetric,
}

impl Radius {
    pub fn absolute(radius: f64) -> Self {
        Radius { radius, metric: RadiusMetric::Absolute }
    }

    pub fn relative(radius: f64) -> Self {
        Radius { radius, metric: RadiusMetric::Relative }
    }

    #[inline]
    pub fn contains(&self, value: f64, target: f64) -> bool {
        let d = (value - target).abs();
        match self.metric {
            RadiusMetric::Absolute => d <= self.radius,
            RadiusMetric::Relative => d <= self.radius * target.abs(),
        }
    }
}

/// Source of the population counts `N_t`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PopulationSource {
    #[default]
    None,
    Constant(u64),
    /// Counts keyed by target id.
    PerTarget(BTreeMap<String, u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    /// Assume every target is in the release.
    pub in_sample: bool,
    pub population: PopulationSource,
    /// Radii for continuous synthesized variables, keyed by schema index.
    pub radii: BTreeMap<usize, Radius>,
    /// Monte Carlo iterations `h`.
    pub iterations: usize,
    /// Whether the intruder knows the synthesizer. When set, plausible
    /// originals are drawn from the retained draws; otherwise a release is
    /// picked and its values are taken as they are.
    pub metadata_known: bool,
    /// Selection-reason meta-data. Carried for completeness and ignored.
    pub selection_reason: Vec<String>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            in_sample: true,
            population: PopulationSource::None,
            radii: BTreeMap::new(),
            iterations: 100,
            metadata_known: false,
            selection_reason: Vec::new(),
        }
    }
}

impl MatchConfig {
    /// Every violation of the configuration against `schema`.
    pub fn violations(&self, schema: &Schema) -> Vec<String> {
        let mut out = Vec::new();
        if self.iterations == 0 {
            out.push("iterations must be at least 1".to_string());
        }
        if !self.in_sample && self.population == PopulationSource::None {
            out.push("in_sample = false requires a population size source".to_string());
        }
        for (&v, r) in &self.radii {
            if v >= schema.len() {
                out.push(format!("radius given for unknown variable index {v}"));
                continue;
            }
            let def = schema.variable(v);
            if def.is_categorical() || !def.synthesized {
                out.push(format!("radius given for `{}`, which is not a continuous synthesized variable", def.name));
            }
            if !(r.radius > 0.0 && r.radius.is_finite()) {
                out.push(format!("radius for `{}` must be positive", def.name));
            }
        }
        for v in Partition::of(schema).known_synthesized {
            let def = schema.variable(v);
            if !def.is_categorical() && !self.radii.contains_key(&v) {
                out.push(format!("continuous synthesized variable `{}` needs a matching radius", def.name));
            }
        }
        out
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), IdentificationError> {
        match self.violations(schema).into_iter().next() {
            Some(v) => Err(IdentificationError::InvalidConfig(v)),
            None => Ok(()),
        }
    }

    /// `N_t` for a target, `None` in in-sample mode.
    pub fn population_for(&self, target: &str) -> Result<Option<u64>, IdentificationError> {
        if self.in_sample {
            return Ok(None);
        }
        match &self.population {
            PopulationSource::None => Err(IdentificationError::MissingPopulation { target: target.into() }),
            PopulationSource::Constant(n) => Ok(Some(*n)),
            PopulationSource::PerTarget(map) => map
                .get(target)
                .copied()
                .map(Some)
                .ok_or_else(|| IdentificationError::MissingPopulation { target: target.into() }),
        }
    }

    #[inline]
    fn matches(&self, var: usize, value: Cell, target: Cell) -> bool {
        match (value, target) {
            (Cell::Level(a), Cell::Level(b)) => a == b,
            (Cell::Real(z), Cell::Real(t)) => match self.radii.get(&var) {
                Some(r) => r.contains(z, t),
                None => z == t,
            },
            _ => false,
        }
    }
}

/// Probabilities over records `0..n` plus "not in the release". Only
/// records with positive probability are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchVector {
    pub n: usize,
    /// `(row index, probability)` in increasing row order.
    pub entries: Vec<(usize, f64)>,
    pub outside: f64,
}

impl MatchVector {
    /// Dense vector of length `n + 1`; the last entry is "not in release".
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        for &(r, p) in &self.entries {
            out[r] = p;
        }
        out[self.n] = self.outside;
        out
    }

    pub fn get(&self, row: usize) -> f64 {
        self.entries.binary_search_by(|e| e.0.cmp(&row)).map_or(0.0, |k| self.entries[k].1)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum::<f64>() + self.outside
    }
}

/// Probability of each of `n_t` matching records and of "not in release".
fn allocate(matches: usize, population: Option<u64>, target: &str) -> Result<(f64, f64), IdentificationError> {
    match population {
        None if matches == 0 => Ok((0.0, 1.0)),
        None => Ok((1.0 / matches as f64, 0.0)),
        Some(n) if n < matches as u64 => Err(IdentificationError::InconsistentPopulation {
            target: target.into(),
            population: n,
            matches,
        }),
        Some(0) => Ok((0.0, 1.0)),
        Some(n) => Ok((1.0 / n as f64, (n - matches as u64) as f64 / n as f64)),
    }
}

type KnownValues = Vec<(usize, Cell)>;

/// Splits a target's known values into un-synthesized and synthesized ones.
fn split_known(target: &Target, schema: &Schema) -> (KnownValues, KnownValues) {
    target.known.iter().copied().partition(|&(v, _)| !schema.variable(v).synthesized)
}

/// Match probabilities for one target given one candidate set of original
/// synthesized values.
///
/// `release` supplies the un-synthesized columns; `originals` holds the
/// candidate values of synthesized variables as `(schema index, column)`.
pub fn match_given_originals(
    target: &Target,
    release: &Dataset,
    originals: &[(usize, Column)],
    config: &MatchConfig,
) -> Result<MatchVector, IdentificationError> {
    let schema = release.schema();
    let (unsynth, synth) = split_known(target, schema);
    let columns: Vec<&Column> = synth
        .iter()
        .map(|&(v, _)| {
            originals.iter().find(|(j, _)| *j == v).map(|(_, c)| c).ok_or_else(|| {
                IdentificationError::InvalidConfig(format!("no candidate values for `{}`", schema.variable(v).name))
            })
        })
        .collect::<Result<_, _>>()?;
    let matched: Vec<usize> = (0..release.n_rows())
        .filter(|&r| {
            unsynth.iter().all(|&(v, t)| release.cell(r, v).key() == t.key())
                && synth.iter().zip(&columns).all(|(&(v, t), col)| config.matches(v, col.get(r), t))
        })
        .collect();
    let (each, outside) = allocate(matched.len(), config.population_for(&target.id)?, &target.id)?;
    let entries = if each > 0.0 { matched.into_iter().map(|r| (r, each)).collect() } else { Vec::new() };
    Ok(MatchVector { n: release.n_rows(), entries, outside })
}

/// One draw of plausible original values for every synthesized variable.
///
/// With `metadata_known` a retained draw is chosen uniformly and each record
/// is resampled from the predictive; otherwise a release is chosen uniformly
/// and its synthesized columns are returned as they are.
pub fn draw_plausible_originals(
    release: &SyntheticRelease,
    predictive: &dyn Predictive,
    metadata_known: bool,
    rng: &mut StreamRng,
) -> Result<Vec<(usize, Column)>, IdentificationError> {
    let schema = release.datasets[0].schema();
    let synthesized = Partition::of(schema).synthesized;
    if !metadata_known {
        let l = rng.random_range(0..release.m());
        return Ok(synthesized.iter().map(|&v| (v, release.datasets[l].column(v).clone())).collect());
    }
    if predictive.draw_count() == 0 {
        return Err(IdentificationError::NoDraws);
    }
    let h = rng.random_range(0..predictive.draw_count());
    let base = &release.datasets[0];
    let mut columns: Vec<Column> = synthesized
        .iter()
        .map(|&v| match base.column(v) {
            Column::Categorical(c) => Column::Categorical(Vec::with_capacity(c.len())),
            Column::Continuous(c) => Column::Continuous(Vec::with_capacity(c.len())),
        })
        .collect();
    for r in 0..base.n_rows() {
        let mut row = base.record(r);
        predictive.sample_into(h, &mut row, rng);
        for (col, &v) in columns.iter_mut().zip(&synthesized) {
            match (col, row[v]) {
                (Column::Categorical(c), Cell::Level(l)) => c.push(l),
                (Column::Continuous(c), Cell::Real(x)) => c.push(x),
                _ => unreachable!("predictive samples match the schema"),
            }
        }
    }
    Ok(synthesized.into_iter().zip(columns).collect())
}

/// Per-target matching statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchStats {
    /// Records attaining the maximum match probability.
    pub c: usize,
    /// Whether the true record is among them; `None` without a known truth.
    pub t: Option<bool>,
}

impl MatchStats {
    /// Unique true match.
    pub fn k(&self) -> Option<bool> {
        self.t.map(|t| t && self.c == 1)
    }

    /// Unique false match.
    pub fn f(&self) -> Option<bool> {
        self.t.map(|t| !t && self.c == 1)
    }
}

/// `c_i` and `T_i` for a probability vector.
///
/// The maximum is taken over records only. When every record has zero
/// probability all `n` records tie.
pub fn match_stats(probs: &MatchVector, true_row: Option<usize>) -> MatchStats {
    let max = probs.entries.iter().map(|e| e.1).fold(0.0, f64::max);
    if max <= TIE_TOLERANCE {
        return MatchStats { c: probs.n, t: true_row.map(|_| true) };
    }
    let c = probs.entries.iter().filter(|e| e.1 >= max - TIE_TOLERANCE).count();
    MatchStats { c, t: true_row.map(|r| probs.get(r) >= max - TIE_TOLERANCE) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatch {
    pub target_id: String,
    pub probabilities: MatchVector,
    pub max_probability: f64,
    pub stats: MatchStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentificationSummary {
    pub expected_match_risk: f64,
    pub true_match_rate: f64,
    pub false_match_rate: f64,
    /// Targets with a unique maximum, `s`.
    pub unique_matches: usize,
    /// Set when `s = 0`; the false match rate is then reported as 0.
    pub no_unique_matches: bool,
    /// Targets entering the summaries.
    pub evaluated: usize,
    /// Targets without a known true record, left out of the summaries.
    pub excluded: usize,
}

/// Expected match risk `sum T/c`, true match rate `sum K / N` and false
/// match rate `sum F / s`. Targets without a known truth are skipped.
pub fn summarize_risks(stats: &[MatchStats], n_targets: usize) -> IdentificationSummary {
    let mut expected = 0.0;
    let (mut k, mut f, mut s, mut evaluated) = (0usize, 0usize, 0usize, 0usize);
    for st in stats {
        let Some(t) = st.t else { continue };
        evaluated += 1;
        if t {
            expected += 1.0 / st.c as f64;
        }
        if st.c == 1 {
            s += 1;
            if t {
                k += 1;
            } else {
                f += 1;
            }
        }
    }
    let excluded = stats.len() - evaluated;
    IdentificationSummary {
        expected_match_risk: expected,
        true_match_rate: if n_targets == 0 { 0.0 } else { k as f64 / n_targets as f64 },
        false_match_rate: if s == 0 { 0.0 } else { f as f64 / s as f64 },
        unique_matches: s,
        no_unique_matches: s == 0,
        evaluated,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub n_records: usize,
    pub targets: Vec<TargetMatch>,
    pub summary: IdentificationSummary,
}

/// Rows sorted by their values of a fixed set of variables, for block
/// lookup by exact match.
struct BlockIndex<'a> {
    data: &'a Dataset,
    vars: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> BlockIndex<'a> {
    fn new(data: &'a Dataset, vars: Vec<usize>) -> Self {
        let mut order: Vec<usize> = (0..data.n_rows()).collect();
        if !vars.is_empty() {
            order.sort_by(|&a, &b| {
                for &v in &vars {
                    match data.cell(a, v).key().cmp(&data.cell(b, v).key()) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                a.cmp(&b)
            });
        }
        BlockIndex { data, vars, order }
    }

    fn compare(&self, row: usize, key: &[u64]) -> Ordering {
        for (&v, &k) in self.vars.iter().zip(key) {
            match self.data.cell(row, v).key().cmp(&k) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }

    fn block(&self, key: &[u64]) -> &[usize] {
        let lo = self.order.partition_point(|&r| self.compare(r, key) == Ordering::Less);
        let hi = self.order.partition_point(|&r| self.compare(r, key) != Ordering::Greater);
        &self.order[lo..hi]
    }
}

/// Monte Carlo identification risk, building the predictive from the
/// release's model.
pub fn monte_carlo_identification(
    targets: &TargetFile,
    release: &SyntheticRelease,
    config: &MatchConfig,
    seed: u64,
) -> Result<IdentificationResult, IdentificationError> {
    let schema = release.datasets[0].schema();
    let predictive = release.model.predictive(schema, &BTreeMap::new());
    monte_carlo_identification_with(targets, release, predictive.as_ref(), config, seed)
}

/// Averages [`match_given_originals`] over `config.iterations` draws of
/// plausible originals for each target.
///
/// Only the records sharing the target's un-synthesized known values can
/// match, so plausible originals are drawn for those records alone. Each
/// `(target, iteration)` pair has its own random stream, which makes the
/// result independent of scheduling.
pub fn monte_carlo_identification_with(
    targets: &TargetFile,
    release: &SyntheticRelease,
    predictive: &dyn Predictive,
    config: &MatchConfig,
    seed: u64,
) -> Result<IdentificationResult, IdentificationError> {
    let base = &release.datasets[0];
    let schema = base.schema();
    config.validate(schema)?;
    if config.metadata_known && predictive.draw_count() == 0 {
        return Err(IdentificationError::NoDraws);
    }
    let n = base.n_rows();
    for t in &targets.targets {
        for &(v, _) in &t.known {
            if v >= schema.len() || !schema.variable(v).intruder_known {
                return Err(IdentificationError::UnknownVariable {
                    target: t.id.clone(),
                    variable: if v < schema.len() { schema.variable(v).name.clone() } else { format!("#{v}") },
                });
            }
        }
        if let Some(id) = t.true_row_id {
            if base.row_index(id).is_none() {
                return Err(IdentificationError::InvalidConfig(format!(
                    "target `{}`: true_row_id {id} is not in the release",
                    t.id
                )));
            }
        }
    }

    let mut indexes: BTreeMap<Vec<usize>, BlockIndex<'_>> = BTreeMap::new();
    for t in &targets.targets {
        let (us, _) = split_known(t, schema);
        let vars: Vec<usize> = us.iter().map(|e| e.0).collect();
        indexes.entry(vars.clone()).or_insert_with(|| BlockIndex::new(base, vars));
    }

    let outcomes = crate::par_map(targets.targets.len(), |ti| -> Result<TargetMatch, IdentificationError> {
        let target = &targets.targets[ti];
        let (us, synth) = split_known(target, schema);
        let vars: Vec<usize> = us.iter().map(|e| e.0).collect();
        let key: Vec<u64> = us.iter().map(|e| e.1.key()).collect();
        let block = indexes[&vars].block(&key);
        let population = config.population_for(&target.id)?;
        let target_hash = rng::hash_str(&target.id);

        let mut sums = vec![0.0; block.len()];
        let mut outside = 0.0;
        let mut hit = vec![false; block.len()];
        let mut rows: Vec<Vec<Cell>> =
            if config.metadata_known { block.iter().map(|&r| base.record(r)).collect() } else { Vec::new() };
        for it in 0..config.iterations {
            let mut rng = rng::stream(seed, &[target_hash, it as u64]);
            let mut count = 0usize;
            if config.metadata_known {
                let h = rng.random_range(0..predictive.draw_count());
                for (k, row) in rows.iter_mut().enumerate() {
                    predictive.sample_into(h, row, &mut rng);
                    hit[k] = synth.iter().all(|&(v, t)| config.matches(v, row[v], t));
                    count += hit[k] as usize;
                }
            } else {
                let z = &release.datasets[rng.random_range(0..release.m())];
                for (k, &r) in block.iter().enumerate() {
                    hit[k] = synth.iter().all(|&(v, t)| config.matches(v, z.cell(r, v), t));
                    count += hit[k] as usize;
                }
            }
            let (each, out) = allocate(count, population, &target.id)?;
            outside += out;
            if each > 0.0 {
                for (s, &h) in sums.iter_mut().zip(&hit) {
                    if h {
                        *s += each;
                    }
                }
            }
        }
        let h = config.iterations as f64;
        let mut entries: Vec<(usize, f64)> =
            block.iter().zip(&sums).filter(|(_, &s)| s > 0.0).map(|(&r, &s)| (r, s / h)).collect();
        entries.sort_by_key(|e| e.0);
        let probabilities = MatchVector { n, entries, outside: outside / h };
        let max_probability = probabilities.entries.iter().map(|e| e.1).fold(0.0, f64::max);
        let true_row = target.true_row_id.and_then(|id| base.row_index(id));
        let stats = match_stats(&probabilities, true_row);
        Ok(TargetMatch { target_id: target.id.clone(), probabilities, max_probability, stats })
    });
    let targets_out = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let stats: Vec<MatchStats> = targets_out.iter().map(|t| t.stats).collect();
    let evaluated = stats.iter().filter(|s| s.t.is_some()).count();
    if evaluated < stats.len() {
        log::warn!("{} targets without a true record are excluded from the summaries", stats.len() - evaluated);
    }
    let summary = summarize_risks(&stats, evaluated);
    Ok(IdentificationResult { n_records: n, targets: targets_out, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VariableDef;
    use crate::synthesis::{MixtureDraw, MixtureModel, MixturePredictive, Provenance, ReleaseModel};
    use alloc::sync::Arc;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                VariableDef::categorical_k("u", 3, false, true),
                VariableDef::categorical_k("s", 2, true, true),
                VariableDef::continuous("x", 0.0, 100.0, true, true),
            ])
            .unwrap(),
        )
    }

    fn data(rows: &[(u32, u32, f64)]) -> Dataset {
        let rows: Vec<Vec<Cell>> = rows.iter().map(|&(u, s, x)| vec![Cell::Level(u), Cell::Level(s), Cell::Real(x)]).collect();
        Dataset::from_rows(schema(), &rows).unwrap()
    }

    fn target(id: &str, u: Option<u32>, s: Option<u32>, x: Option<f64>, truth: Option<usize>) -> Target {
        let mut known = Vec::new();
        if let Some(u) = u {
            known.push((0, Cell::Level(u)));
        }
        if let Some(s) = s {
            known.push((1, Cell::Level(s)));
        }
        if let Some(x) = x {
            known.push((2, Cell::Real(x)));
        }
        Target { id: id.into(), known, true_row_id: truth }
    }

    fn config() -> MatchConfig {
        MatchConfig { radii: BTreeMap::from([(2, Radius::absolute(1.0))]), iterations: 1, ..Default::default() }
    }

    fn originals(d: &Dataset) -> Vec<(usize, Column)> {
        vec![(1, d.column(1).clone()), (2, d.column(2).clone())]
    }

    #[test]
    fn in_sample_matches_share_mass() {
        let d = data(&[(0, 1, 10.0), (0, 1, 10.5), (1, 1, 10.0), (0, 0, 10.0)]);
        let t = target("a", Some(0), Some(1), Some(10.2), Some(1));
        let v = match_given_originals(&t, &d, &originals(&d), &config()).unwrap();
        assert_eq!(v.dense(), vec![0.5, 0.5, 0.0, 0.0, 0.0]);
        // Record 3 disagrees on the un-synthesized variable.
        assert_eq!(v.get(2), 0.0);
        let none = target("b", Some(2), None, None, None);
        assert_eq!(match_given_originals(&none, &d, &originals(&d), &config()).unwrap().dense(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn population_mode_leaves_remainder_outside() {
        let rows: Vec<(u32, u32, f64)> = (0..8).map(|i| (if i < 4 { 0 } else { 1 }, 0, 5.0)).collect();
        let d = data(&rows);
        let cfg = MatchConfig { in_sample: false, population: PopulationSource::Constant(10), ..config() };
        let t = target("a", Some(0), None, None, None);
        let v = match_given_originals(&t, &d, &originals(&d), &cfg).unwrap();
        let dense = v.dense();
        assert_eq!(&dense[..4], &[0.1; 4]);
        assert_eq!(&dense[4..8], &[0.0; 4]);
        assert!((dense[8] - 0.6).abs() < 1e-15);
        assert!((v.total() - 1.0).abs() < 1e-12);

        let small = MatchConfig { population: PopulationSource::Constant(3), ..cfg.clone() };
        assert_eq!(
            match_given_originals(&t, &d, &originals(&d), &small).unwrap_err(),
            IdentificationError::InconsistentPopulation { target: "a".into(), population: 3, matches: 4 }
        );
        let per = MatchConfig { population: PopulationSource::PerTarget(BTreeMap::new()), ..cfg };
        assert_eq!(
            match_given_originals(&t, &d, &originals(&d), &per).unwrap_err(),
            IdentificationError::MissingPopulation { target: "a".into() }
        );
    }

    #[test]
    fn relative_radius() {
        let d = data(&[(0, 0, 10.0), (0, 0, 11.5), (0, 0, 12.5)]);
        let cfg = MatchConfig { radii: BTreeMap::from([(2, Radius::relative(0.2))]), ..config() };
        let t = target("a", None, None, Some(10.0), None);
        let v = match_given_originals(&t, &d, &originals(&d), &cfg).unwrap();
        assert_eq!(v.dense(), vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn summary_hand_cases() {
        let s = summarize_risks(&[MatchStats { c: 1, t: Some(true) }], 1);
        assert_eq!((s.expected_match_risk, s.true_match_rate, s.false_match_rate), (1.0, 1.0, 0.0));
        let s = summarize_risks(&[MatchStats { c: 4, t: Some(true) }], 1);
        assert_eq!((s.expected_match_risk, s.true_match_rate), (0.25, 0.0));
        let three = [MatchStats { c: 1, t: Some(true) }, MatchStats { c: 1, t: Some(false) }, MatchStats { c: 2, t: Some(true) }];
        let s = summarize_risks(&three, 3);
        assert_eq!(s.expected_match_risk, 1.5);
        assert_eq!(s.true_match_rate, 1.0 / 3.0);
        assert_eq!(s.false_match_rate, 0.5);
        assert_eq!(s.unique_matches, 2);
        let s = summarize_risks(&[MatchStats { c: 3, t: Some(false) }, MatchStats { c: 2, t: None }], 1);
        assert_eq!((s.false_match_rate, s.no_unique_matches, s.excluded), (0.0, true, 1));
    }

    #[test]
    fn stats_tie_tolerance_and_zero_vector() {
        let v = MatchVector { n: 4, entries: vec![(0, 0.25), (2, 0.25 + 1e-14), (3, 0.2)], outside: 0.3 };
        assert_eq!(match_stats(&v, Some(2)), MatchStats { c: 2, t: Some(true) });
        assert_eq!(match_stats(&v, Some(3)), MatchStats { c: 2, t: Some(false) });
        let empty = MatchVector { n: 4, entries: vec![], outside: 1.0 };
        assert_eq!(match_stats(&empty, Some(1)), MatchStats { c: 4, t: Some(true) });
    }

    fn release(d: &Dataset, z: Vec<Dataset>, draws: Vec<MixtureDraw>) -> SyntheticRelease {
        let model = MixtureModel::new(vec![1], vec![2], draws).unwrap();
        let prov = Provenance { synthesizer: "mixture".into(), seed: 0, hyperparameters: BTreeMap::new() };
        let _ = d;
        SyntheticRelease::new(z, ReleaseModel::Mixture(model), prov).unwrap()
    }

    fn cat_schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![VariableDef::categorical_k("u", 3, false, true), VariableDef::categorical_k("s", 2, true, true)]).unwrap(),
        )
    }

    fn cat_data(rows: &[(u32, u32)]) -> Dataset {
        let rows: Vec<Vec<Cell>> = rows.iter().map(|&(u, s)| vec![Cell::Level(u), Cell::Level(s)]).collect();
        Dataset::from_rows(cat_schema(), &rows).unwrap()
    }

    #[test]
    fn plausible_originals() {
        let d = cat_data(&[(0, 1), (1, 0), (2, 1)]);
        let half = MixtureDraw::new(vec![1.0], vec![vec![vec![0.5, 0.5]]]).unwrap();
        let r = release(&d, vec![d.clone()], vec![half]);
        let ReleaseModel::Mixture(m) = &r.model else { unreachable!() };
        let p = MixturePredictive::new(m);
        let mut g = StreamRng::seed_from_u64(1);
        assert_eq!(draw_plausible_originals(&r, &p, false, &mut g).unwrap(), vec![(1, d.column(1).clone())]);

        let point = MixtureDraw::new(vec![1.0], vec![vec![vec![0.0, 1.0]]]).unwrap();
        let r = release(&d, vec![d.clone()], vec![point]);
        let ReleaseModel::Mixture(m) = &r.model else { unreachable!() };
        let p = MixturePredictive::new(m);
        assert_eq!(draw_plausible_originals(&r, &p, true, &mut g).unwrap(), vec![(1, Column::Categorical(vec![1, 1, 1]))]);
    }

    /// Two-class draw: the analytic predictive probability of level 1 is
    /// `0.4 * 0.9 + 0.6 * 0.2 = 0.48` for every record.
    #[test]
    fn plausible_originals_follow_the_predictive() {
        let d = cat_data(&[(0, 1), (1, 0), (2, 1), (0, 0)]);
        let draw = MixtureDraw::new(vec![0.4, 0.6], vec![vec![vec![0.1, 0.9]], vec![vec![0.8, 0.2]]]).unwrap();
        let r = release(&d, vec![d.clone()], vec![draw]);
        let ReleaseModel::Mixture(m) = &r.model else { unreachable!() };
        let p = MixturePredictive::new(m);
        let mut g = StreamRng::seed_from_u64(9);
        let mut ones = [0usize; 4];
        for _ in 0..10_000 {
            let o = draw_plausible_originals(&r, &p, true, &mut g).unwrap();
            let Column::Categorical(c) = &o[0].1 else { unreachable!() };
            for (k, &l) in c.iter().enumerate() {
                ones[k] += l as usize;
            }
        }
        for c in ones {
            assert!((c as f64 / 10_000.0 - 0.48).abs() < 0.02);
        }
    }

    #[test]
    fn single_deterministic_iteration_equals_direct_match() {
        let d = cat_data(&[(0, 1), (0, 1), (1, 1), (0, 0)]);
        let draw = MixtureDraw::new(vec![1.0], vec![vec![vec![0.5, 0.5]]]).unwrap();
        let r = release(&d, vec![d.clone()], vec![draw]);
        let targets = TargetFile::new(
            &cat_schema(),
            vec![
                Target { id: "a".into(), known: vec![(0, Cell::Level(0)), (1, Cell::Level(1))], true_row_id: Some(2) },
                Target { id: "b".into(), known: vec![(1, Cell::Level(0))], true_row_id: Some(4) },
            ],
        )
        .unwrap();
        let cfg = MatchConfig { iterations: 1, ..Default::default() };
        let res = monte_carlo_identification(&targets, &r, &cfg, 3).unwrap();
        for (t, m) in targets.targets.iter().zip(&res.targets) {
            let direct = match_given_originals(t, &d, &[(1, d.column(1).clone())], &cfg).unwrap();
            assert_eq!(m.probabilities, direct);
        }
        assert_eq!(res.targets[0].stats, MatchStats { c: 2, t: Some(true) });
        assert_eq!(res.targets[1].stats, MatchStats { c: 1, t: Some(true) });
        assert_eq!(res.summary.expected_match_risk, 1.5);
    }

    /// One record whose synthesized binary value is 0 or 1 with probability
    /// one half. The target agrees with it on everything else, so the exact
    /// expected match probability is `0.5 * 1 + 0.5 * 0 = 0.5`.
    #[test]
    fn two_outcome_convergence() {
        let d = cat_data(&[(0, 1), (1, 1)]);
        let draw = MixtureDraw::new(vec![1.0], vec![vec![vec![0.5, 0.5]]]).unwrap();
        let r = release(&d, vec![d.clone()], vec![draw]);
        let targets = TargetFile::new(
            &cat_schema(),
            vec![Target { id: "t".into(), known: vec![(0, Cell::Level(0)), (1, Cell::Level(1))], true_row_id: Some(1) }],
        )
        .unwrap();
        let cfg = MatchConfig { iterations: 10_000, metadata_known: true, ..Default::default() };
        let res = monte_carlo_identification(&targets, &r, &cfg, 17).unwrap();
        let v = &res.targets[0].probabilities;
        assert!((v.get(0) - 0.5).abs() < 0.02);
        assert!((v.total() - 1.0).abs() < 1e-9);
        assert_eq!(v.get(1), 0.0);
    }

    #[test]
    fn config_violations() {
        let s = schema();
        let cfg = MatchConfig { iterations: 0, in_sample: false, ..Default::default() };
        let v = cfg.violations(&s);
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[2].contains("`x`"));
        let bad = MatchConfig { radii: BTreeMap::from([(2, Radius::absolute(0.0)), (0, Radius::absolute(1.0))]), ..config() };
        assert_eq!(bad.violations(&s).len(), 2);
        assert!(config().validate(&s).is_ok());
    }

    #[test]
    fn unknown_variable_and_bad_truth_are_rejected() {
        let d = cat_data(&[(0, 1)]);
        let draw = MixtureDraw::new(vec![1.0], vec![vec![vec![0.5, 0.5]]]).unwrap();
        let r = release(&d, vec![d.clone()], vec![draw]);
        let targets = TargetFile { targets: vec![Target { id: "t".into(), known: vec![(0, Cell::Level(0))], true_row_id: Some(9) }] };
        assert!(matches!(
            monte_carlo_identification(&targets, &r, &MatchConfig::default(), 1),
            Err(IdentificationError::InvalidConfig(_))
        ));
    }

    /// Exact mean and standard deviation of the per-iteration match
    /// probability of block record 0 when each of `k` block records matches
    /// independently with probability `p`.
    fn enumerate_block(k: usize, p: f64) -> (f64, f64) {
        let (mut m1, mut m2) = (0.0, 0.0);
        for mask in 0u32..(1 << k) {
            let hits = mask.count_ones() as i32;
            let prob = p.powi(hits) * (1.0 - p).powi(k as i32 - hits);
            let x = if mask & 1 == 1 { 1.0 / hits as f64 } else { 0.0 };
            m1 += prob * x;
            m2 += prob * x * x;
        }
        (m1, (m2 - m1 * m1).max(0.0).sqrt())
    }

    #[test]
    fn monte_carlo_within_three_standard_errors() {
        let mut g = StreamRng::seed_from_u64(2718);
        for case in 0..20 {
            let k = g.random_range(1..6usize);
            let p = g.random_range(0.1..0.9);
            let h = g.random_range(1000..3000usize);
            let rows: Vec<(u32, u32)> = (0..k).map(|_| (0, 0)).chain([(1, 1), (2, 0)]).collect();
            let d = cat_data(&rows);
            let draw = MixtureDraw::new(vec![1.0], vec![vec![vec![1.0 - p, p]]]).unwrap();
            let r = release(&d, vec![d.clone()], vec![draw]);
            let targets = TargetFile {
                targets: vec![Target { id: "t".into(), known: vec![(0, Cell::Level(0)), (1, Cell::Level(1))], true_row_id: None }],
            };
            let cfg = MatchConfig { iterations: h, metadata_known: true, ..Default::default() };
            let res = monte_carlo_identification(&targets, &r, &cfg, case).unwrap();
            let (mean, sd) = enumerate_block(k, p);
            let est = res.targets[0].probabilities.get(0);
            let se = sd / (h as f64).sqrt();
            assert!((est - mean).abs() < 3.0 * se + 1e-12, "case {case}: k={k} p={p} h={h}: {est} vs {mean} (se {se})");
        }
    }

    proptest! {
        #[test]
        fn radius_monotonicity(xs in proptest::collection::vec(0.0f64..100.0, 1..30), t in 0.0f64..100.0, r1 in 0.01f64..10.0, extra in 0.0f64..10.0) {
            let rows: Vec<(u32, u32, f64)> = xs.iter().map(|&x| (0, 0, x)).collect();
            let d = data(&rows);
            let tg = target("a", None, None, Some(t), None);
            let count = |r: f64| {
                let cfg = MatchConfig { radii: BTreeMap::from([(2, Radius::absolute(r))]), ..config() };
                match_given_originals(&tg, &d, &originals(&d), &cfg).unwrap().entries.len()
            };
            prop_assert!(count(r1 + extra) >= count(r1));
        }

        #[test]
        fn vectors_sum_to_one_and_respect_unsynthesized(
            rows in proptest::collection::vec((0u32..3, 0u32..2, 0.0f64..100.0), 1..30),
            tu in 0u32..3, ts in 0u32..2, flips in proptest::collection::vec(any::<bool>(), 30),
            pop in proptest::option::of(30u64..100),
        ) {
            let d = data(&rows);
            let perturbed: Vec<u32> = (0..d.n_rows()).map(|r| d.cell(r, 1).level().unwrap() ^ flips[r] as u32).collect();
            let orig = vec![(1, Column::Categorical(perturbed)), (2, d.column(2).clone())];
            let cfg = match pop {
                Some(n) => MatchConfig { in_sample: false, population: PopulationSource::Constant(n), ..config() },
                None => config(),
            };
            let tg = target("a", Some(tu), Some(ts), None, None);
            let v = match_given_originals(&tg, &d, &orig, &cfg).unwrap();
            prop_assert!((v.total() - 1.0).abs() < 1e-9);
            if pop.is_none() && !v.entries.is_empty() {
                prop_assert_eq!(v.outside, 0.0);
            }
            for &(r, p) in &v.entries {
                prop_assert!(p > 0.0);
                prop_assert_eq!(d.cell(r, 0), Cell::Level(tu));
            }
        }
    }
}
