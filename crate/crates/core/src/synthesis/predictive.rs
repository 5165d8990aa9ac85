//! Evaluating and sampling the synthesizer's predictive distribution under
//! individual retained draws.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::{Cell, Dataset, Schema, VariableKind};
use crate::math::{cumulative, ln};
use crate::rng::StreamRng;

use super::cart::{CartDraw, CartModel};
use super::mixture::{level_patterns, DrawSampler, MixtureModel};

/// Per-draw access to `f(y^s | y^us, theta_h)`.
///
/// Rows are full records in schema order; only the synthesized cells (and,
/// for CART, the predictors) are read.
pub trait Predictive: Sync {
    fn draw_count(&self) -> usize;

    /// `ln f(y^s | y^us, theta_h)`.
    fn log_density(&self, draw: usize, row: &[Cell]) -> f64;

    /// Log density of the synthesized variables outside `known`, conditional
    /// on the values of `row` at `known`.
    fn log_conditional_density(&self, draw: usize, row: &[Cell], known: &[usize]) -> f64;

    /// `ln p(Z | theta_h)` for every draw, with `Z` a synthetic dataset.
    fn log_likelihoods(&self, dataset: &Dataset) -> Vec<f64> {
        let mut row = Vec::with_capacity(dataset.schema().len());
        (0..self.draw_count())
            .map(|h| {
                (0..dataset.n_rows())
                    .map(|r| {
                        row.clear();
                        row.extend(dataset.columns().iter().map(|c| c.get(r)));
                        self.log_density(h, &row)
                    })
                    .sum()
            })
            .collect()
    }

    /// Overwrites the synthesized cells of `row` with a draw from
    /// `f(. | y^us, theta_h)`.
    fn sample_into(&self, draw: usize, row: &mut [Cell], rng: &mut StreamRng);
}

/// Running log-sum-exp accumulator.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    #[inline]
    fn new() -> Self {
        LogSum { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    #[inline]
    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * crate::math::exp(self.max - x) + 1.0;
            self.max = x;
        } else {
            self.sum += crate::math::exp(x - self.max);
        }
    }

    #[inline]
    fn value(self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + ln(self.sum)
        }
    }
}

/// Mixture predictive with precomputed log tables.
#[derive(Debug)]
pub struct MixturePredictive<'a> {
    model: &'a MixtureModel,
    /// `log_weights[h][c]`.
    log_weights: Vec<Vec<f64>>,
    /// `log_probs[h][c][j][k]`.
    log_probs: Vec<Vec<Vec<Vec<f64>>>>,
    samplers: Vec<DrawSampler>,
}

impl<'a> MixturePredictive<'a> {
    pub fn new(model: &'a MixtureModel) -> Self {
        let log_weights = model.draws.iter().map(|d| d.component_weights.iter().map(|&w| ln(w)).collect()).collect();
        let log_probs = model
            .draws
            .iter()
            .map(|d| {
                d.per_class_multinomials
                    .iter()
                    .map(|c| c.iter().map(|p| p.iter().map(|&x| ln(x)).collect()).collect())
                    .collect()
            })
            .collect();
        let samplers = model.draws.iter().map(DrawSampler::new).collect();
        MixturePredictive { model, log_weights, log_probs, samplers }
    }

    fn log_density_levels(&self, h: usize, levels: &[u32]) -> f64 {
        let mut acc = LogSum::new();
        for (c, &lw) in self.log_weights[h].iter().enumerate() {
            let lp = &self.log_probs[h][c];
            acc.add(lw + levels.iter().enumerate().map(|(j, &l)| lp[j][l as usize]).sum::<f64>());
        }
        acc.value()
    }
}

impl Predictive for MixturePredictive<'_> {
    fn draw_count(&self) -> usize {
        self.model.draws.len()
    }

    fn log_density(&self, draw: usize, row: &[Cell]) -> f64 {
        let vars = &self.model.variables;
        let mut acc = LogSum::new();
        for (c, &lw) in self.log_weights[draw].iter().enumerate() {
            let lp = &self.log_probs[draw][c];
            let mut t = lw;
            for (j, &var) in vars.iter().enumerate() {
                t += lp[j][row[var].level().expect("categorical cell") as usize];
            }
            acc.add(t);
        }
        acc.value()
    }

    fn log_conditional_density(&self, draw: usize, row: &[Cell], known: &[usize]) -> f64 {
        let vars = &self.model.variables;
        if !vars.iter().any(|v| known.contains(v)) {
            return self.log_density(draw, row);
        }
        let mut joint = LogSum::new();
        let mut marginal = LogSum::new();
        for (c, &lw) in self.log_weights[draw].iter().enumerate() {
            let lp = &self.log_probs[draw][c];
            let mut t_all = lw;
            let mut t_known = lw;
            for (j, &var) in vars.iter().enumerate() {
                let term = lp[j][row[var].level().expect("categorical cell") as usize];
                t_all += term;
                if known.contains(&var) {
                    t_known += term;
                }
            }
            joint.add(t_all);
            marginal.add(t_known);
        }
        joint.value() - marginal.value()
    }

    fn log_likelihoods(&self, dataset: &Dataset) -> Vec<f64> {
        let patterns = level_patterns(dataset, &self.model.variables);
        (0..self.draw_count())
            .map(|h| patterns.iter().map(|(levels, n)| *n as f64 * self.log_density_levels(h, levels)).sum())
            .collect()
    }

    fn sample_into(&self, draw: usize, row: &mut [Cell], rng: &mut StreamRng) {
        let sampler = &self.samplers[draw];
        let c = sampler.sample_class(rng);
        for (j, &var) in self.model.variables.iter().enumerate() {
            row[var] = Cell::Level(sampler.sample_level(c, j, rng));
        }
    }
}

#[derive(Debug)]
enum LeafTable {
    /// Bootstrap mass per level.
    Levels(Vec<f64>),
    /// Donor values sorted ascending with the running weight total.
    Values { sorted: Vec<f64>, cumulative: Vec<f64> },
}

impl LeafTable {
    fn log_mass(&self, cell: Cell, bandwidth: f64) -> f64 {
        match (self, cell) {
            (LeafTable::Levels(mass), Cell::Level(l)) => mass.get(l as usize).map_or(f64::NEG_INFINITY, |&m| ln(m)),
            (LeafTable::Values { sorted, cumulative }, Cell::Real(x)) => {
                let half = bandwidth / 2.0;
                let lo = sorted.partition_point(|&v| v < x - half);
                let hi = sorted.partition_point(|&v| v <= x + half);
                if hi <= lo {
                    return f64::NEG_INFINITY;
                }
                let below = if lo == 0 { 0.0 } else { cumulative[lo - 1] };
                ln(cumulative[hi - 1] - below) - ln(bandwidth)
            }
            _ => f64::NEG_INFINITY,
        }
    }
}

/// CART predictive built from leaf-weight snapshots.
///
/// Categorical variables use the bootstrap mass of each level in the leaf.
/// Continuous variables use a box kernel: the bootstrap mass of donors
/// within half a bandwidth of the value, divided by the bandwidth.
#[derive(Debug)]
pub struct CartPredictive<'a> {
    model: &'a CartModel,
    /// `tables[h][tree][leaf]`.
    tables: Vec<Vec<Vec<LeafTable>>>,
    /// Sampling tables in donor order, `sampling[h][tree][leaf]`.
    sampling: Vec<Vec<Vec<Vec<f64>>>>,
    bandwidths: Vec<f64>,
}

impl<'a> CartPredictive<'a> {
    /// `bandwidths` maps schema indices of continuous synthesized variables
    /// to kernel widths; missing entries default to 1% of the declared range.
    pub fn new(model: &'a CartModel, draws: &[CartDraw], schema: &Schema, bandwidths: &BTreeMap<usize, f64>) -> Self {
        let bandwidths: Vec<f64> = model
            .trees
            .iter()
            .map(|t| match schema.variable(t.target).kind {
                VariableKind::Continuous { lower, upper } => {
                    bandwidths.get(&t.target).copied().unwrap_or((upper - lower) / 100.0)
                }
                VariableKind::Categorical { .. } => 1.0,
            })
            .collect();
        let tables = draws
            .iter()
            .map(|draw| {
                model
                    .trees
                    .iter()
                    .zip(&draw.leaf_weights)
                    .map(|(tree, weights)| {
                        let levels = schema.variable(tree.target).cardinality();
                        tree.leaves
                            .iter()
                            .zip(weights)
                            .map(|(donors, w)| match levels {
                                Some(k) => {
                                    let mut mass = alloc::vec![0.0; k];
                                    for (d, &wt) in donors.iter().zip(w) {
                                        mass[d.level().expect("categorical donor") as usize] += wt;
                                    }
                                    LeafTable::Levels(mass)
                                }
                                None => {
                                    let mut pairs: Vec<(f64, f64)> =
                                        donors.iter().map(|d| d.as_f64()).zip(w.iter().copied()).collect();
                                    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                                    let sorted = pairs.iter().map(|p| p.0).collect();
                                    let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                                    LeafTable::Values { sorted, cumulative: cumulative(&weights) }
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let sampling = draws.iter().map(CartModel::cumulative_tables).collect();
        CartPredictive { model, tables, sampling, bandwidths }
    }
}

impl Predictive for CartPredictive<'_> {
    fn draw_count(&self) -> usize {
        self.tables.len()
    }

    fn log_density(&self, draw: usize, row: &[Cell]) -> f64 {
        let mut total = 0.0;
        for (t, tree) in self.model.trees.iter().enumerate() {
            let Some(leaf) = tree.route(|j| row[j]) else {
                return f64::NEG_INFINITY;
            };
            total += self.tables[draw][t][leaf].log_mass(row[tree.target], self.bandwidths[t]);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        total
    }

    /// The sequential trees do not give closed-form marginals over a subset
    /// of variables, so this returns the joint density. Importance weights
    /// only use ratios between rows sharing the known values, and those
    /// ratios coincide for the joint and the conditional.
    fn log_conditional_density(&self, draw: usize, row: &[Cell], _known: &[usize]) -> f64 {
        self.log_density(draw, row)
    }

    fn sample_into(&self, draw: usize, row: &mut [Cell], rng: &mut StreamRng) {
        // Routing cannot fail for trees produced by `fit_cart`; leave the row
        // untouched otherwise.
        let _ = self.model.synthesize_row(&self.sampling[draw], row, rng);
    }
}
