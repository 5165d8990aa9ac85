//! Record-level attribute disclosure risk.
//!
//! For a target record `i` the intruder's posterior over a guess set is
//! obtained with Bayes' rule. The likelihood of each release under a guess
//! `y*` is estimated by self-normalized importance sampling over the retained
//! parameter draws, with weights `f(y* | theta_h) / f(y_i | theta_h)`:
//!
//! ```text
//! p(Z_l | y*) ~= sum_h p(Z_l | theta_h) r_h / sum_h r_h
//! ```
//!
//! Everything is accumulated in log space.

mod summary;

pub use summary::{
    geo_risk_summaries, map_match_summaries, rank_of, rank_summary, unique_patterns, GeoRisk, MapRecord, MapSummary,
    RankSummary,
};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Cell, Dataset, Partition, Schema, VariableKind};
use crate::error::AttributeError;
use crate::math::{ln, log_sum_exp};
use crate::synthesis::{Predictive, SyntheticRelease};

/// Default cap on the size of a fully enumerated guess set.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Draws whose proposal density `f(y_i | theta_h)` is below this are dropped.
pub const PROPOSAL_FLOOR: f64 = 1e-300;

/// How the candidate values for a record are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum GuessMode {
    /// The truth plus every vector differing from it in exactly one free
    /// variable.
    Neighborhood,
    /// Every combination of levels of the free variables.
    FullEnumeration { cap: u64 },
    /// Caller-supplied vectors over all synthesized variables, in schema
    /// order. The truth is appended when missing.
    Explicit(Vec<Vec<Cell>>),
    /// A 2-D location grid over two continuous synthesized coordinates.
    Grid(GridSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridExtent {
    /// The declared bounds of the coordinate variables.
    Declared,
    Fixed { x: (f64, f64), y: (f64, f64) },
    /// A square of the given half-width around the true location, clipped to
    /// the declared bounds.
    Local { half_width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub x_var: usize,
    pub y_var: usize,
    pub extent: GridExtent,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(x_var: usize, y_var: usize) -> Self {
        GridSpec { x_var, y_var, extent: GridExtent::Declared, points_per_axis: 100 }
    }

    fn axis_bounds(&self, schema: &Schema, var: usize, truth: f64, fixed: Option<(f64, f64)>) -> (f64, f64) {
        let (lower, upper) = match schema.variable(var).kind {
            VariableKind::Continuous { lower, upper } => (lower, upper),
            VariableKind::Categorical { .. } => (0.0, 0.0),
        };
        match self.extent {
            GridExtent::Declared => (lower, upper),
            GridExtent::Fixed { .. } => fixed.unwrap_or((lower, upper)),
            GridExtent::Local { half_width } => ((truth - half_width).max(lower), (truth + half_width).min(upper)),
        }
    }

    /// Grid spacing along each axis, used as the kernel bandwidth for
    /// continuous densities. Local grids are assumed unclipped.
    pub fn steps(&self, schema: &Schema) -> (f64, f64) {
        let span = |var: usize, fixed: Option<(f64, f64)>| -> f64 {
            let (lo, hi) = match self.extent {
                GridExtent::Local { half_width } => (-half_width, half_width),
                _ => self.axis_bounds(schema, var, 0.0, fixed),
            };
            (hi - lo) / (self.points_per_axis.max(2) - 1) as f64
        };
        let (fx, fy) = match self.extent {
            GridExtent::Fixed { x, y } => (Some(x), Some(y)),
            _ => (None, None),
        };
        (span(self.x_var, fx), span(self.y_var, fy))
    }

    fn validate(&self, schema: &Schema) -> Result<(), AttributeError> {
        for var in [self.x_var, self.y_var] {
            if var >= schema.len() {
                return Err(AttributeError::InvalidScenario(format!("grid variable index {var} out of range")));
            }
            let def = schema.variable(var);
            if !def.synthesized || def.is_categorical() {
                return Err(AttributeError::InvalidScenario(format!(
                    "grid coordinate `{}` must be a continuous synthesized variable",
                    def.name
                )));
            }
        }
        if self.x_var == self.y_var {
            return Err(AttributeError::InvalidScenario("grid coordinates must be two distinct variables".into()));
        }
        if self.points_per_axis < 2 {
            return Err(AttributeError::InvalidScenario("a grid needs at least 2 points per axis".into()));
        }
        match self.extent {
            GridExtent::Fixed { x, y } if !(x.0 < x.1 && y.0 < y.1) => {
                Err(AttributeError::InvalidScenario("grid bounds must satisfy lower < upper".into()))
            }
            GridExtent::Local { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                Err(AttributeError::InvalidScenario("grid half-width must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Grid points row-major in `y`, then `x`.
    fn points(&self, schema: &Schema, truth: (f64, f64)) -> Vec<(f64, f64)> {
        let (fx, fy) = match self.extent {
            GridExtent::Fixed { x, y } => (Some(x), Some(y)),
            _ => (None, None),
        };
        let (x0, x1) = self.axis_bounds(schema, self.x_var, truth.0, fx);
        let (y0, y1) = self.axis_bounds(schema, self.y_var, truth.1, fy);
        let p = self.points_per_axis;
        let at = |lo: f64, hi: f64, k: usize| if k + 1 == p { hi } else { lo + (hi - lo) * k as f64 / (p - 1) as f64 };
        let mut out = Vec::with_capacity(p * p + 1);
        for a in 0..p {
            for b in 0..p {
                out.push((at(x0, x1, b), at(y0, y1, a)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessKind {
    Neighborhood,
    FullEnumeration,
    Explicit,
    Grid,
}

/// Candidate value vectors for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessSet {
    pub record_id: usize,
    /// Synthesized variables, in schema order; every guess is aligned with it.
    pub variables: Vec<usize>,
    pub guesses: Vec<Vec<Cell>>,
    pub true_position: usize,
    pub kind: GuessKind,
    /// Synthesized variables held at their true values in every guess.
    pub fixed: Vec<usize>,
}

impl GuessSet {
    pub fn len(&self) -> usize {
        self.guesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guesses.is_empty()
    }

    /// Location of each guess for a grid guess set.
    pub fn locations(&self, spec: &GridSpec) -> Vec<(f64, f64)> {
        let xi = self.variables.iter().position(|&v| v == spec.x_var).expect("grid variable");
        let yi = self.variables.iter().position(|&v| v == spec.y_var).expect("grid variable");
        self.guesses.iter().map(|g| (g[xi].as_f64(), g[yi].as_f64())).collect()
    }
}

/// Builds the guess set for the record with identifier `record_id`.
///
/// `fixed` lists synthesized variables the intruder already knows for this
/// record; guesses never vary them.
pub fn build_guess_set(
    dataset: &Dataset,
    record_id: usize,
    mode: &GuessMode,
    fixed: &[usize],
) -> Result<GuessSet, AttributeError> {
    let schema = dataset.schema();
    let row = dataset.row_index(record_id).ok_or(AttributeError::UnknownRecord(record_id))?;
    let variables = Partition::of(schema).synthesized;
    let mut fixed: BTreeSet<usize> = fixed.iter().copied().collect();
    if let Some(&v) = fixed.iter().find(|v| !variables.contains(v)) {
        return Err(AttributeError::InvalidScenario(format!("known variable index {v} is not synthesized")));
    }
    if let GuessMode::Grid(spec) = mode {
        spec.validate(schema)?;
        fixed.extend(variables.iter().copied().filter(|&v| v != spec.x_var && v != spec.y_var));
    }
    let truth: Vec<Cell> = variables.iter().map(|&v| dataset.cell(row, v)).collect();
    let free: Vec<usize> = (0..variables.len()).filter(|&p| !fixed.contains(&variables[p])).collect();

    let categorical_free = || -> Result<Vec<usize>, AttributeError> {
        free.iter()
            .map(|&p| schema.variable(variables[p]).cardinality().ok_or_else(|| {
                AttributeError::UnsupportedKind(schema.variable(variables[p]).name.clone())
            }))
            .collect()
    };

    let (guesses, true_position, kind) = match mode {
        GuessMode::Neighborhood => {
            let cards = categorical_free()?;
            let mut guesses = vec![truth.clone()];
            for (&p, &k) in free.iter().zip(&cards) {
                let own = truth[p].level().expect("categorical");
                for level in (0..k as u32).filter(|&l| l != own) {
                    let mut g = truth.clone();
                    g[p] = Cell::Level(level);
                    guesses.push(g);
                }
            }
            (guesses, 0, GuessKind::Neighborhood)
        }
        GuessMode::FullEnumeration { cap } => {
            let cards = categorical_free()?;
            let size = cards.iter().try_fold(1u64, |acc, &k| acc.checked_mul(k as u64)).unwrap_or(u64::MAX);
            if size > *cap {
                return Err(AttributeError::GuessSetTooLarge { size, cap: *cap });
            }
            let mut guesses = Vec::with_capacity(size as usize);
            let mut digits = vec![0u32; free.len()];
            let mut true_position = 0;
            for idx in 0..size as usize {
                let mut g = truth.clone();
                for (d, &p) in free.iter().enumerate() {
                    g[p] = Cell::Level(digits[d]);
                }
                if g == truth {
                    true_position = idx;
                }
                guesses.push(g);
                for d in (0..free.len()).rev() {
                    digits[d] += 1;
                    if (digits[d] as usize) < cards[d] {
                        break;
                    }
                    digits[d] = 0;
                }
            }
            (guesses, true_position, GuessKind::FullEnumeration)
        }
        GuessMode::Explicit(list) => {
            let mut seen = BTreeSet::new();
            let mut guesses = Vec::with_capacity(list.len() + 1);
            for g in list {
                if g.len() != variables.len() {
                    return Err(AttributeError::InvalidScenario(format!(
                        "explicit guess has {} values, expected {}",
                        g.len(),
                        variables.len()
                    )));
                }
                for (p, &cell) in g.iter().enumerate() {
                    schema
                        .check_cell(variables[p], cell, record_id)
                        .map_err(|e| AttributeError::InvalidScenario(format!("explicit guess: {e}")))?;
                    if fixed.contains(&variables[p]) && cell != truth[p] {
                        return Err(AttributeError::InvalidScenario(format!(
                            "explicit guess changes known variable `{}`",
                            schema.variable(variables[p]).name
                        )));
                    }
                }
                if !seen.insert(key(g)) {
                    return Err(AttributeError::InvalidScenario("explicit guesses must be distinct".into()));
                }
                guesses.push(g.clone());
            }
            let true_position = match guesses.iter().position(|g| *g == truth) {
                Some(p) => p,
                None => {
                    guesses.push(truth.clone());
                    guesses.len() - 1
                }
            };
            (guesses, true_position, GuessKind::Explicit)
        }
        GuessMode::Grid(spec) => {
            let xi = variables.iter().position(|&v| v == spec.x_var).expect("validated");
            let yi = variables.iter().position(|&v| v == spec.y_var).expect("validated");
            let loc = (truth[xi].as_f64(), truth[yi].as_f64());
            let points = spec.points(schema, loc);
            let mut guesses: Vec<Vec<Cell>> = points
                .iter()
                .map(|&(x, y)| {
                    let mut g = truth.clone();
                    g[xi] = Cell::Real(x);
                    g[yi] = Cell::Real(y);
                    g
                })
                .collect();
            let true_position = match points.iter().position(|&p| p == loc) {
                Some(p) => p,
                None => {
                    guesses.push(truth.clone());
                    guesses.len() - 1
                }
            };
            (guesses, true_position, GuessKind::Grid)
        }
    };
    if guesses.is_empty() {
        return Err(AttributeError::EmptyGrid);
    }
    Ok(GuessSet { record_id, variables, guesses, true_position, kind, fixed: fixed.into_iter().collect() })
}

fn key(g: &[Cell]) -> Vec<u64> {
    g.iter().map(|c| c.key()).collect()
}

/// What the intruder knows about the target record's synthesized values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Knowledge {
    /// Original synthesized values of every other record.
    WorstCase,
    /// Worst case plus the target's own values of these synthesized
    /// variables.
    KnownSubset(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Uniform,
    /// One probability per guess, in guess-set order.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeScenario {
    pub knowledge: Knowledge,
    pub prior: Prior,
    /// Whether the synthesizer and its draws are known to the intruder. The
    /// computation always uses them; the flag is recorded for reporting.
    pub metadata_known: bool,
    pub guesses: GuessMode,
}

impl Default for AttributeScenario {
    fn default() -> Self {
        AttributeScenario {
            knowledge: Knowledge::WorstCase,
            prior: Prior::Uniform,
            metadata_known: true,
            guesses: GuessMode::Neighborhood,
        }
    }
}

impl AttributeScenario {
    pub fn validate(&self, schema: &Schema) -> Result<(), AttributeError> {
        if let Knowledge::KnownSubset(vars) = &self.knowledge {
            for &v in vars {
                if v >= schema.len() || !schema.variable(v).synthesized {
                    return Err(AttributeError::InvalidScenario(format!(
                        "known subset variable index {v} is not a synthesized variable"
                    )));
                }
            }
        }
        if let Prior::Explicit(p) = &self.prior {
            validate_prior(p)?;
        }
        if let GuessMode::Grid(spec) = &self.guesses {
            spec.validate(schema)?;
        }
        Ok(())
    }

    pub fn known_variables(&self) -> &[usize] {
        match &self.knowledge {
            Knowledge::WorstCase => &[],
            Knowledge::KnownSubset(v) => v,
        }
    }

    /// Kernel bandwidths implied by the scenario's location grid, if any.
    pub fn bandwidths(&self, schema: &Schema) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        if let GuessMode::Grid(spec) = &self.guesses {
            let (sx, sy) = spec.steps(schema);
            out.insert(spec.x_var, sx);
            out.insert(spec.y_var, sy);
        }
        out
    }
}

fn validate_prior(p: &[f64]) -> Result<(), AttributeError> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(AttributeError::InvalidScenario("prior probabilities must be finite and non-negative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AttributeError::InvalidScenario(format!("prior sums to {total}, not 1")));
    }
    Ok(())
}

/// Importance weight `f(y* | theta) / f(y_i | theta)` for a single draw.
///
/// `record` is the full confidential record and `guess` holds values for
/// `guesses.variables`. Densities are conditional on `guesses.fixed`.
pub fn importance_weight(
    predictive: &dyn Predictive,
    draw: usize,
    record: &[Cell],
    guesses: &GuessSet,
    guess: usize,
) -> Result<f64, AttributeError> {
    let base = predictive.log_conditional_density(draw, record, &guesses.fixed);
    if !(base >= ln(PROPOSAL_FLOOR)) {
        return Err(AttributeError::DegenerateProposal { record: guesses.record_id, draw });
    }
    let mut row = record.to_vec();
    for (&v, &cell) in guesses.variables.iter().zip(&guesses.guesses[guess]) {
        row[v] = cell;
    }
    Ok(crate::math::exp(predictive.log_conditional_density(draw, &row, &guesses.fixed) - base))
}

/// Normalized posterior for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordPosterior {
    pub record_id: usize,
    pub posterior: Vec<f64>,
    pub true_position: usize,
    /// Draws dropped because the proposal density vanished.
    pub dropped_draws: usize,
}

/// Shares the per-release log-likelihoods `ln p(Z_l | theta_h)` across
/// records.
pub struct AttributeAssessor<'a> {
    confidential: &'a Dataset,
    predictive: &'a dyn Predictive,
    /// `release_ll[l][h]`.
    release_ll: Vec<Vec<f64>>,
}

impl core::fmt::Debug for AttributeAssessor<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("AttributeAssessor")
            .field("records", &self.confidential.n_rows())
            .field("releases", &self.release_ll.len())
            .field("draws", &self.predictive.draw_count())
            .finish()
    }
}

impl<'a> AttributeAssessor<'a> {
    pub fn new(
        release: &SyntheticRelease,
        predictive: &'a dyn Predictive,
        confidential: &'a Dataset,
    ) -> Result<Self, AttributeError> {
        if predictive.draw_count() == 0 {
            return Err(AttributeError::NoDraws);
        }
        let release_ll = crate::par_map(release.m(), |l| predictive.log_likelihoods(&release.datasets[l]));
        Ok(AttributeAssessor { confidential, predictive, release_ll })
    }

    /// Builds an assessor from precomputed `ln p(Z_l | theta_h)`.
    pub fn with_log_likelihoods(
        release_ll: Vec<Vec<f64>>,
        predictive: &'a dyn Predictive,
        confidential: &'a Dataset,
    ) -> Result<Self, AttributeError> {
        if predictive.draw_count() == 0 {
            return Err(AttributeError::NoDraws);
        }
        if release_ll.iter().any(|r| r.len() != predictive.draw_count()) {
            return Err(AttributeError::InvalidScenario("one log-likelihood per draw is required".into()));
        }
        Ok(AttributeAssessor { confidential, predictive, release_ll })
    }

    pub fn release_log_likelihoods(&self) -> &[Vec<f64>] {
        &self.release_ll
    }

    pub fn posterior(&self, guesses: &GuessSet, prior: &Prior) -> Result<RecordPosterior, AttributeError> {
        self.posterior_inner(guesses, prior, false)
    }

    fn posterior_inner(
        &self,
        guesses: &GuessSet,
        prior: &Prior,
        uniform_constant: bool,
    ) -> Result<RecordPosterior, AttributeError> {
        let record_id = guesses.record_id;
        let row_index = self.confidential.row_index(record_id).ok_or(AttributeError::UnknownRecord(record_id))?;
        let g_count = guesses.len();
        if let Prior::Explicit(p) = prior {
            if p.len() != g_count {
                return Err(AttributeError::PriorLengthMismatch { prior: p.len(), guesses: g_count });
            }
            validate_prior(p)?;
        }
        let h_count = self.predictive.draw_count();
        let mut row = self.confidential.record(row_index);
        let floor = ln(PROPOSAL_FLOOR);

        let base: Vec<f64> =
            (0..h_count).map(|h| self.predictive.log_conditional_density(h, &row, &guesses.fixed)).collect();
        let kept: Vec<usize> = (0..h_count).filter(|&h| base[h] >= floor).collect();
        let dropped = h_count - kept.len();
        if dropped > 0 {
            log::warn!("record {record_id}: dropped {dropped} of {h_count} draws with vanishing proposal density");
        }
        if 2 * dropped > h_count {
            return Err(AttributeError::TooManyDroppedDraws { record: record_id, dropped, total: h_count });
        }

        let mut log_lik = Vec::with_capacity(g_count);
        let mut weight_mass = Vec::with_capacity(g_count);
        let mut lw = vec![0.0; kept.len()];
        let mut terms = vec![0.0; kept.len()];
        for (g, guess) in guesses.guesses.iter().enumerate() {
            if g == guesses.true_position {
                lw.iter_mut().for_each(|w| *w = 0.0);
            } else {
                for (&v, &cell) in guesses.variables.iter().zip(guess) {
                    row[v] = cell;
                }
                for (w, &h) in lw.iter_mut().zip(&kept) {
                    *w = self.predictive.log_conditional_density(h, &row, &guesses.fixed) - base[h];
                }
            }
            let den = log_sum_exp(&lw);
            weight_mass.push(den);
            let mut total = if den == f64::NEG_INFINITY { f64::NEG_INFINITY } else { 0.0 };
            if total.is_finite() {
                for ll in &self.release_ll {
                    for ((t, &w), &h) in terms.iter_mut().zip(&lw).zip(&kept) {
                        *t = ll[h] + w;
                    }
                    total += log_sum_exp(&terms) - den;
                }
            }
            match prior {
                Prior::Uniform if uniform_constant => total += ln(1.0 / g_count as f64),
                Prior::Uniform => {}
                Prior::Explicit(p) => total += ln(p[g]),
            }
            log_lik.push(total);
        }
        let posterior = crate::math::normalize_log_weights(&log_lik).ok_or_else(|| {
            let worst_guess = weight_mass
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (g, &m)| if m < best.1 { (g, m) } else { best })
                .0;
            AttributeError::NumericalDegeneracy { record: record_id, worst_guess }
        })?;
        Ok(RecordPosterior { record_id, posterior, true_position: guesses.true_position, dropped_draws: dropped })
    }
}

/// One-shot posterior for a single guess set, building the predictive from
/// the release's model.
pub fn posterior_over_guesses(
    release: &SyntheticRelease,
    confidential: &Dataset,
    guesses: &GuessSet,
    scenario: &AttributeScenario,
) -> Result<Vec<f64>, AttributeError> {
    scenario.validate(confidential.schema())?;
    let predictive = release.model.predictive(confidential.schema(), &scenario.bandwidths(confidential.schema()));
    let assessor = AttributeAssessor::new(release, predictive.as_ref(), confidential)?;
    Ok(assessor.posterior(guesses, &scenario.prior)?.posterior)
}

/// Per-record outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRisk {
    pub record_id: usize,
    pub posterior: Vec<f64>,
    pub true_position: usize,
    pub rank: usize,
    pub true_probability: f64,
    pub dropped_draws: usize,
    pub geo: Option<GeoRisk>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeRiskResult {
    pub records: Vec<RecordRisk>,
    pub summary: RankSummary,
    pub map: Option<MapSummary>,
}

/// Assesses every record in `record_ids` (all records when `None`).
pub fn assess_attribute_risk(
    release: &SyntheticRelease,
    confidential: &Dataset,
    scenario: &AttributeScenario,
    record_ids: Option<&[usize]>,
) -> Result<AttributeRiskResult, AttributeError> {
    let schema = confidential.schema();
    scenario.validate(schema)?;
    let predictive = release.model.predictive(schema, &scenario.bandwidths(schema));
    let assessor = AttributeAssessor::new(release, predictive.as_ref(), confidential)?;
    assess_with(&assessor, confidential, scenario, record_ids)
}

/// As [`assess_attribute_risk`] with a prepared assessor.
pub fn assess_with(
    assessor: &AttributeAssessor<'_>,
    confidential: &Dataset,
    scenario: &AttributeScenario,
    record_ids: Option<&[usize]>,
) -> Result<AttributeRiskResult, AttributeError> {
    let schema = confidential.schema();
    let ids: Vec<usize> = match record_ids {
        Some(ids) => ids.to_vec(),
        None => (1..=confidential.n_rows()).collect(),
    };
    let grid = match &scenario.guesses {
        GuessMode::Grid(spec) => Some(spec),
        _ => None,
    };
    let locations: Option<Vec<(f64, f64)>> = grid.map(|spec| {
        (0..confidential.n_rows())
            .map(|r| (confidential.cell(r, spec.x_var).as_f64(), confidential.cell(r, spec.y_var).as_f64()))
            .collect()
    });

    type Outcome = Result<(RecordRisk, Option<Vec<(f64, f64)>>), AttributeError>;
    let outcomes = crate::par_map(ids.len(), |k| -> Outcome {
        let guesses = build_guess_set(confidential, ids[k], &scenario.guesses, scenario.known_variables())?;
        let post = assessor.posterior(&guesses, &scenario.prior)?;
        let rank = rank_of(&post.posterior, post.true_position);
        let mut geo = None;
        let mut guess_locations = None;
        if let (Some(spec), Some(locs)) = (grid, &locations) {
            let points = guesses.locations(spec);
            let truth = points[guesses.true_position];
            geo = Some(geo_risk_summaries(&post.posterior, &points, truth, locs)?);
            guess_locations = Some(points);
        }
        Ok((
            RecordRisk {
                record_id: ids[k],
                true_probability: post.posterior[post.true_position],
                posterior: post.posterior,
                true_position: post.true_position,
                rank,
                dropped_draws: post.dropped_draws,
                geo,
            },
            guess_locations,
        ))
    });
    let mut records = Vec::with_capacity(ids.len());
    let mut all_locations = Vec::new();
    for o in outcomes {
        let (r, l) = o?;
        records.push(r);
        if let Some(l) = l {
            all_locations.push(l);
        }
    }
    let summary = rank_summary(&records);
    let map = grid.map(|_| {
        let unique = unique_patterns(confidential, &Partition::of(schema).unsynthesized);
        let inputs: Vec<MapRecord<'_>> = records
            .iter()
            .zip(&all_locations)
            .map(|(r, locs)| MapRecord {
                posterior: &r.posterior,
                locations: locs,
                true_position: r.true_position,
                unique_pattern: unique[r.record_id - 1],
            })
            .collect();
        map_match_summaries(&inputs)
    });
    Ok(AttributeRiskResult { records, summary, map })
}
