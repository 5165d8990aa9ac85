//! Finite mixture of products of multinomials, fitted by blocked Gibbs
//! sampling with symmetric Dirichlet(1) priors on the class weights and on
//! every per-class multinomial.
//!
//! Records are compressed into distinct level patterns before sampling: the
//! class allocation of all records sharing a pattern is drawn as one
//! multinomial, which is equivalent to drawing each record independently.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::data::{Column, Dataset};
use crate::error::SynthesisError;
use crate::math::{self, cumulative, sample_cumulative, sample_dirichlet};
use crate::rng;

const PROB_TOLERANCE: f64 = 1e-9;

/// One posterior draw of the mixture parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureDraw {
    /// Probability of each latent class.
    pub component_weights: Vec<f64>,
    /// `per_class_multinomials[c][j][k]`: probability of level `k` of the
    /// `j`-th modeled variable within class `c`.
    pub per_class_multinomials: Vec<Vec<Vec<f64>>>,
}

impl MixtureDraw {
    pub fn new(component_weights: Vec<f64>, per_class_multinomials: Vec<Vec<Vec<f64>>>) -> Result<Self, SynthesisError> {
        let draw = MixtureDraw { component_weights, per_class_multinomials };
        draw.validate()?;
        Ok(draw)
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |what: &str| SynthesisError::InvalidConfig(format!("mixture draw: {what}"));
        check_simplex(&self.component_weights).map_err(|_| bad("component weights are not a probability vector"))?;
        if self.per_class_multinomials.len() != self.component_weights.len() {
            return Err(bad("one multinomial set per class required"));
        }
        let p = self.per_class_multinomials.first().map_or(0, Vec::len);
        for class in &self.per_class_multinomials {
            if class.len() != p {
                return Err(bad("classes disagree on the number of variables"));
            }
            for (j, probs) in class.iter().enumerate() {
                if probs.len() != self.per_class_multinomials[0][j].len() {
                    return Err(bad("classes disagree on a variable's cardinality"));
                }
                check_simplex(probs).map_err(|_| bad("a per-class multinomial is not a probability vector"))?;
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.component_weights.len()
    }

    pub fn variables(&self) -> usize {
        self.per_class_multinomials.first().map_or(0, Vec::len)
    }

    /// `sum_c w_c prod_j p_cj(levels_j)`.
    pub fn density(&self, levels: &[u32]) -> f64 {
        self.component_weights
            .iter()
            .zip(&self.per_class_multinomials)
            .map(|(&w, class)| w * class.iter().zip(levels).map(|(p, &l)| p[l as usize]).product::<f64>())
            .sum()
    }
}

fn check_simplex(p: &[f64]) -> Result<(), ()> {
    if p.is_empty() || p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(());
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > PROB_TOLERANCE {
        return Err(());
    }
    Ok(())
}

/// Predictive density of a record under one draw. `levels` holds the
/// record's level codes over the modeled (synthesized) variables.
pub fn predictive_density(draw: &MixtureDraw, levels: &[u32]) -> f64 {
    draw.density(levels)
}

/// Gibbs sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GibbsConfig {
    pub classes: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig { classes: 20, burn_in: 500, thin: 5, draws: 100 }
    }
}

/// Retained draws together with the variables they describe.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureModel {
    /// Schema indices of the modeled variables, in draw order.
    pub variables: Vec<usize>,
    pub cardinalities: Vec<usize>,
    pub draws: Vec<MixtureDraw>,
}

impl MixtureModel {
    pub fn new(variables: Vec<usize>, cardinalities: Vec<usize>, draws: Vec<MixtureDraw>) -> Result<Self, SynthesisError> {
        if variables.len() != cardinalities.len() {
            return Err(SynthesisError::InvalidConfig("variables and cardinalities differ in length".into()));
        }
        for d in &draws {
            d.validate()?;
            if d.variables() != variables.len()
                || d.per_class_multinomials[0].iter().zip(&cardinalities).any(|(p, &k)| p.len() != k)
            {
                return Err(SynthesisError::InvalidConfig("draw shape does not match the modeled variables".into()));
            }
        }
        Ok(MixtureModel { variables, cardinalities, draws })
    }
}

/// Level patterns over the modeled variables with their multiplicities, in
/// lexicographic order.
pub(crate) fn level_patterns(dataset: &Dataset, variables: &[usize]) -> Vec<(Vec<u32>, u64)> {
    let cols: Vec<&[u32]> = variables
        .iter()
        .map(|&j| dataset.column(j).as_categorical().expect("categorical column"))
        .collect();
    let mut counts: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    let mut key = vec![0u32; cols.len()];
    for row in 0..dataset.n_rows() {
        for (k, c) in key.iter_mut().zip(&cols) {
            *k = c[row];
        }
        match counts.get_mut(key.as_slice()) {
            Some(c) => *c += 1,
            None => {
                counts.insert(key.clone(), 1);
            }
        }
    }
    counts.into_iter().collect()
}

/// Fits the mixture to the synthesized variables of `dataset` and returns
/// the retained post-burn-in draws.
pub fn fit_mixture(dataset: &Dataset, config: &GibbsConfig, seed: u64) -> Result<MixtureModel, SynthesisError> {
    let schema = dataset.schema();
    let variables: Vec<usize> = (0..schema.len()).filter(|&j| schema.variable(j).synthesized).collect();
    fit_mixture_on(dataset, &variables, config, seed)
}

/// As [`fit_mixture`], over an explicit list of categorical variables.
pub fn fit_mixture_on(
    dataset: &Dataset,
    variables: &[usize],
    config: &GibbsConfig,
    seed: u64,
) -> Result<MixtureModel, SynthesisError> {
    let schema = dataset.schema();
    let mut cards = Vec::with_capacity(variables.len());
    for &j in variables {
        let def = schema.variable(j);
        cards.push(def.cardinality().ok_or_else(|| SynthesisError::NonCategorical(def.name.clone()))?);
    }
    if config.classes == 0 || config.draws == 0 || config.thin == 0 {
        return Err(SynthesisError::InvalidConfig("classes, draws and thin must be at least 1".into()));
    }
    if dataset.n_rows() == 0 {
        return Err(SynthesisError::EmptyData);
    }
    if variables.is_empty() {
        return Err(SynthesisError::InvalidConfig("no variables to model".into()));
    }

    let patterns = level_patterns(dataset, variables);
    let classes = config.classes;
    let mut rng = rng::stream(seed, &[0x6d69_7874]);

    // alloc[pattern][class]: records of the pattern currently in the class.
    let uniform = vec![1.0 / classes as f64; classes];
    let mut alloc: Vec<Vec<u64>> = patterns.iter().map(|(_, n)| sample_multinomial(*n, &uniform, &mut rng)).collect();

    let total_iterations = config.burn_in + config.draws * config.thin;
    let mut retained = Vec::with_capacity(config.draws);
    let mut class_probs = vec![0.0; classes];
    for iteration in 0..total_iterations {
        // Parameters given allocations.
        let mut class_totals = vec![0u64; classes];
        let mut level_counts: Vec<Vec<Vec<u64>>> =
            (0..classes).map(|_| cards.iter().map(|&k| vec![0u64; k]).collect()).collect();
        for ((levels, _), counts) in patterns.iter().zip(&alloc) {
            for (c, &n_c) in counts.iter().enumerate() {
                if n_c == 0 {
                    continue;
                }
                class_totals[c] += n_c;
                for (j, &l) in levels.iter().enumerate() {
                    level_counts[c][j][l as usize] += n_c;
                }
            }
        }
        let alpha: Vec<f64> = class_totals.iter().map(|&n| 1.0 + n as f64).collect();
        let weights = sample_dirichlet(&alpha, &mut rng);
        let multinomials: Vec<Vec<Vec<f64>>> = level_counts
            .iter()
            .map(|class| {
                class
                    .iter()
                    .map(|counts| {
                        let a: Vec<f64> = counts.iter().map(|&n| 1.0 + n as f64).collect();
                        sample_dirichlet(&a, &mut rng)
                    })
                    .collect()
            })
            .collect();

        // Allocations given parameters.
        for ((levels, n), counts) in patterns.iter().zip(alloc.iter_mut()) {
            for (c, prob) in class_probs.iter_mut().enumerate() {
                *prob = weights[c] * levels.iter().enumerate().map(|(j, &l)| multinomials[c][j][l as usize]).product::<f64>();
            }
            if class_probs.iter().sum::<f64>() <= 0.0 {
                class_probs.iter_mut().zip(&weights).for_each(|(p, &w)| *p = w);
            }
            *counts = sample_multinomial(*n, &class_probs, &mut rng);
        }

        if iteration >= config.burn_in && (iteration - config.burn_in + 1) % config.thin == 0 {
            retained.push(MixtureDraw { component_weights: weights, per_class_multinomials: multinomials });
        }
    }
    debug_assert_eq!(retained.len(), config.draws);
    MixtureModel::new(variables.to_vec(), cards, retained)
}

/// Multinomial draw through sequential conditional binomials.
fn sample_multinomial<R: Rng + ?Sized>(n: u64, weights: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; weights.len()];
    if n == 1 {
        out[math::sample_index(weights, rng)] = 1;
        return out;
    }
    let mut remaining = n;
    let mut mass: f64 = weights.iter().sum();
    for (i, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == weights.len() || mass <= w {
            out[i] = remaining;
            break;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let x = if p == 0.0 { 0 } else { Binomial::new(remaining, p).expect("valid binomial").sample(rng) };
        out[i] = x;
        remaining -= x;
        mass -= w;
    }
    out
}

/// Cumulative tables for fast sampling from one draw.
#[derive(Debug, Clone)]
pub(crate) struct DrawSampler {
    weights: Vec<f64>,
    levels: Vec<Vec<Vec<f64>>>,
}

impl DrawSampler {
    pub(crate) fn new(draw: &MixtureDraw) -> Self {
        DrawSampler {
            weights: cumulative(&draw.component_weights),
            levels: draw.per_class_multinomials.iter().map(|c| c.iter().map(|p| cumulative(p)).collect()).collect(),
        }
    }

    #[inline]
    pub(crate) fn sample_class<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_cumulative(&self.weights, rng)
    }

    #[inline]
    pub(crate) fn sample_level<R: Rng + ?Sized>(&self, class: usize, var: usize, rng: &mut R) -> u32 {
        sample_cumulative(&self.levels[class][var], rng) as u32
    }
}

/// Synthetic columns for the modeled variables, sampled record by record
/// from `draw`.
pub(crate) fn sample_columns<R: Rng + ?Sized>(draw: &MixtureDraw, n: usize, rng: &mut R) -> Vec<Column> {
    let sampler = DrawSampler::new(draw);
    let p = draw.variables();
    let mut cols: Vec<Vec<u32>> = (0..p).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let c = sampler.sample_class(rng);
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(sampler.sample_level(c, j, rng));
        }
    }
    cols.into_iter().map(Column::Categorical).collect()
}
