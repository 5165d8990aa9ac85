//! Synthesizers producing releases together with retained parameter draws.

pub mod cart;
pub mod mixture;
pub mod predictive;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{Column, Dataset};
use crate::error::SynthesisError;
use crate::rng;

pub use cart::{fit_cart, CartDraw, CartModel, Node, SplitRule, Tree};
pub use mixture::{fit_mixture, fit_mixture_on, predictive_density, GibbsConfig, MixtureDraw, MixtureModel};
pub use predictive::{CartPredictive, MixturePredictive, Predictive};

/// The synthesizer behind a release and its retained draws.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ReleaseModel {
    Mixture(MixtureModel),
    Cart { model: CartModel, draws: Vec<CartDraw> },
}

impl ReleaseModel {
    pub fn draw_count(&self) -> usize {
        match self {
            ReleaseModel::Mixture(m) => m.draws.len(),
            ReleaseModel::Cart { draws, .. } => draws.len(),
        }
    }

    /// Predictive evaluator. `bandwidths` only matters for CART models with
    /// continuous synthesized variables (see [`CartPredictive::new`]).
    pub fn predictive<'a>(
        &'a self,
        schema: &crate::data::Schema,
        bandwidths: &BTreeMap<usize, f64>,
    ) -> Box<dyn Predictive + 'a> {
        match self {
            ReleaseModel::Mixture(m) => Box::new(MixturePredictive::new(m)),
            ReleaseModel::Cart { model, draws } => Box::new(CartPredictive::new(model, draws, schema, bandwidths)),
        }
    }

    pub fn synthesizer_name(&self) -> &'static str {
        match self {
            ReleaseModel::Mixture(_) => "mixture",
            ReleaseModel::Cart { .. } => "cart",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub synthesizer: String,
    pub seed: u64,
    pub hyperparameters: BTreeMap<String, String>,
}

/// `m` synthetic datasets plus the retained draws of the model that
/// generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRelease {
    pub datasets: Vec<Dataset>,
    pub model: ReleaseModel,
    pub provenance: Provenance,
}

impl SyntheticRelease {
    pub fn new(datasets: Vec<Dataset>, model: ReleaseModel, provenance: Provenance) -> Result<Self, SynthesisError> {
        if datasets.is_empty() {
            return Err(SynthesisError::InvalidConfig("a release needs at least one dataset".into()));
        }
        if model.draw_count() == 0 {
            return Err(SynthesisError::InvalidConfig("a release needs at least one retained draw".into()));
        }
        let n = datasets[0].n_rows();
        if datasets.iter().any(|d| d.n_rows() != n || d.schema() != datasets[0].schema()) {
            return Err(SynthesisError::InvalidConfig("release datasets differ in shape".into()));
        }
        let first = &datasets[0];
        for d in &datasets[1..] {
            for j in (0..first.schema().len()).filter(|&j| !first.schema().variable(j).synthesized) {
                if d.column(j) != first.column(j) {
                    return Err(SynthesisError::InvalidConfig(format!(
                        "un-synthesized column `{}` differs between releases",
                        first.schema().variable(j).name
                    )));
                }
            }
        }
        Ok(SyntheticRelease { datasets, model, provenance })
    }

    pub fn m(&self) -> usize {
        self.datasets.len()
    }

    pub fn n_rows(&self) -> usize {
        self.datasets[0].n_rows()
    }

    /// True when every un-synthesized column of every release equals the
    /// confidential column bit for bit.
    pub fn preserves_unsynthesized(&self, confidential: &Dataset) -> bool {
        let schema = confidential.schema();
        self.datasets.iter().all(|d| {
            (0..schema.len())
                .filter(|&j| !schema.variable(j).synthesized)
                .all(|j| columns_bit_equal(d.column(j), confidential.column(j)))
        })
    }
}

fn columns_bit_equal(a: &Column, b: &Column) -> bool {
    match (a, b) {
        (Column::Categorical(x), Column::Categorical(y)) => x == y,
        (Column::Continuous(x), Column::Continuous(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
        }
        _ => false,
    }
}

/// Generates `m` releases from retained mixture draws. Release `l` uses draw
/// `l mod H` and its own random stream derived from `(seed, l)`.
pub fn generate_mixture_release(
    model: &MixtureModel,
    dataset: &Dataset,
    m: usize,
    seed: u64,
) -> Result<SyntheticRelease, SynthesisError> {
    if m == 0 {
        return Err(SynthesisError::InvalidConfig("m must be at least 1".into()));
    }
    if model.draws.is_empty() {
        return Err(SynthesisError::InvalidConfig("no retained draws".into()));
    }
    let n = dataset.n_rows();
    let datasets = crate::par_map(m, |l| {
        let mut rng = rng::stream(seed, &[0x7265_6c65, l as u64]);
        let draw = &model.draws[l % model.draws.len()];
        let cols = mixture::sample_columns(draw, n, &mut rng);
        dataset.with_columns_replaced(model.variables.iter().copied().zip(cols).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| SynthesisError::InvalidConfig(e.to_string()))?;

    let mut hyper = BTreeMap::new();
    hyper.insert("classes".into(), model.draws[0].classes().to_string());
    hyper.insert("draws".into(), model.draws.len().to_string());
    hyper.insert("m".into(), m.to_string());
    let provenance = Provenance { synthesizer: "mixture".into(), seed, hyperparameters: hyper };
    SyntheticRelease::new(datasets, ReleaseModel::Mixture(model.clone()), provenance)
}

/// Generates `m` releases from a fitted CART model. Each release draws its
/// own leaf-weight snapshot, which is retained as that release's draw.
pub fn cart_generate(model: &CartModel, dataset: &Dataset, m: usize, seed: u64) -> Result<SyntheticRelease, SynthesisError> {
    if m == 0 {
        return Err(SynthesisError::InvalidConfig("m must be at least 1".into()));
    }
    let results = crate::par_map(m, |l| {
        let mut rng = rng::stream(seed, &[0x6361_7274, l as u64]);
        let draw = model.draw_weights(&mut rng);
        let cols = cart::synthesize_dataset(model, &draw, dataset, &mut rng)?;
        let d = dataset.with_columns_replaced(cols).map_err(|e| SynthesisError::InvalidConfig(e.to_string()))?;
        Ok::<_, SynthesisError>((d, draw))
    });
    let mut datasets = Vec::with_capacity(m);
    let mut draws = Vec::with_capacity(m);
    for r in results {
        let (d, w) = r?;
        datasets.push(d);
        draws.push(w);
    }
    let mut hyper = BTreeMap::new();
    hyper.insert("min_leaf".into(), model.min_leaf.to_string());
    hyper.insert("order".into(), format!("{:?}", model.order));
    hyper.insert("m".into(), m.to_string());
    let provenance = Provenance { synthesizer: "cart".into(), seed, hyperparameters: hyper };
    SyntheticRelease::new(datasets, ReleaseModel::Cart { model: model.clone(), draws }, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, Schema, VariableDef};
    use alloc::sync::Arc;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let schema = Arc::new(
            Schema::new(vec![
                VariableDef::categorical_k("a", 2, true, false),
                VariableDef::categorical_k("b", 3, true, true),
                VariableDef::categorical_k("u", 4, false, true),
                VariableDef::continuous("w", 0.0, 10.0, false, false),
            ])
            .unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<Cell>> = (0..n)
            .map(|_| {
                vec![
                    Cell::Level(rng.random_range(0..2)),
                    Cell::Level(rng.random_range(0..3)),
                    Cell::Level(rng.random_range(0..4)),
                    Cell::Real(rng.random::<f64>() * 10.0),
                ]
            })
            .collect();
        Dataset::from_rows(schema, &rows).unwrap()
    }

    #[test]
    fn degenerate_mixture_reproduces_point_mass() {
        let d = toy(30, 1);
        let draw = MixtureDraw::new(vec![1.0], vec![vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]]]).unwrap();
        let model = MixtureModel::new(vec![0, 1], vec![2, 3], vec![draw]).unwrap();
        let rel = generate_mixture_release(&model, &d, 2, 3).unwrap();
        for z in &rel.datasets {
            for r in 0..z.n_rows() {
                assert_eq!(z.cell(r, 0), Cell::Level(1));
                assert_eq!(z.cell(r, 1), Cell::Level(2));
            }
        }
    }

    #[test]
    fn release_shape_and_unsynthesized_identity() {
        let d = toy(50, 2);
        let model = fit_mixture(&d, &GibbsConfig { classes: 3, burn_in: 10, thin: 1, draws: 5 }, 1).unwrap();
        let rel = generate_mixture_release(&model, &d, 3, 9).unwrap();
        assert_eq!(rel.m(), 3);
        assert!(rel.datasets.iter().all(|z| z.n_rows() == 50));
        assert!(rel.preserves_unsynthesized(&d));
        assert_eq!(rel, generate_mixture_release(&model, &d, 3, 9).unwrap());
        assert_ne!(rel.datasets, generate_mixture_release(&model, &d, 3, 10).unwrap().datasets);
    }

    #[test]
    fn mixture_marginals_match_posterior_predictive() {
        let d = toy(1000, 3);
        let model = fit_mixture(&d, &GibbsConfig { classes: 4, burn_in: 50, thin: 2, draws: 10 }, 5).unwrap();
        let rel = generate_mixture_release(&model, &d, 10, 6).unwrap();
        // Oracle: average over the draws used (one per release) of the
        // analytic mixture marginal sum_c w_c p_cj(k).
        for (j, &var) in model.variables.iter().enumerate() {
            for k in 0..model.cardinalities[j] {
                let analytic: f64 = (0..10)
                    .map(|l| {
                        let draw = &model.draws[l % model.draws.len()];
                        draw.component_weights
                            .iter()
                            .zip(&draw.per_class_multinomials)
                            .map(|(w, c)| w * c[j][k])
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / 10.0;
                let empirical = rel
                    .datasets
                    .iter()
                    .map(|z| (0..z.n_rows()).filter(|&r| z.cell(r, var) == Cell::Level(k as u32)).count() as f64)
                    .sum::<f64>()
                    / (10.0 * 1000.0);
                assert!((empirical - analytic).abs() < 0.05, "var {var} level {k}: {empirical} vs {analytic}");
            }
        }
    }

    #[test]
    fn cart_single_leaf_support_containment() {
        let d = toy(60, 4);
        let model = fit_cart(&d, &[0, 1], 60).unwrap();
        let rel = cart_generate(&model, &d, 4, 2).unwrap();
        assert_eq!(rel.model.draw_count(), 4);
        assert!(rel.preserves_unsynthesized(&d));
        for z in &rel.datasets {
            for r in 0..z.n_rows() {
                for j in [0, 1] {
                    assert!((0..d.n_rows()).any(|s| d.cell(s, j) == z.cell(r, j)));
                }
            }
        }
    }

    #[test]
    fn cart_pure_leaf_synthesizes_its_value() {
        let schema = Arc::new(
            Schema::new(vec![VariableDef::categorical_k("x", 2, false, true), VariableDef::categorical_k("y", 3, true, false)])
                .unwrap(),
        );
        let rows: Vec<Vec<Cell>> =
            (0..40).map(|i| vec![Cell::Level(i % 2), Cell::Level(if i % 2 == 0 { 2 } else { 0 })]).collect();
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let model = fit_cart(&d, &[1], 5).unwrap();
        let rel = cart_generate(&model, &d, 3, 8).unwrap();
        for z in &rel.datasets {
            for r in 0..z.n_rows() {
                assert_eq!(z.cell(r, 1), d.cell(r, 1));
            }
        }
    }

    #[test]
    fn cart_piecewise_constant_strata() {
        // Continuous target with mean 2 in stratum 0 and 8 in stratum 1.
        let schema = Arc::new(
            Schema::new(vec![
                VariableDef::categorical_k("stratum", 2, false, false),
                VariableDef::continuous("y", -10.0, 20.0, true, false),
            ])
            .unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let means = [2.0, 8.0];
        let rows: Vec<Vec<Cell>> = (0..500)
            .map(|i| {
                let s = (i % 2) as usize;
                let noise: f64 = rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5;
                vec![Cell::Level(s as u32), Cell::Real(means[s] + noise * 0.5)]
            })
            .collect();
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let model = fit_cart(&d, &[1], 5).unwrap();
        let tree = &model.trees[0];
        for leaf in 0..tree.leaf_count() {
            // Each leaf holds records of a single stratum.
            let strata: alloc::collections::BTreeSet<u32> = (0..d.n_rows())
                .filter(|&r| tree.route(|j| d.cell(r, j)) == Some(leaf))
                .map(|r| d.cell(r, 0).level().unwrap())
                .collect();
            assert_eq!(strata.len(), 1);
            let s = *strata.iter().next().unwrap() as usize;
            let donors = &tree.leaves[leaf];
            let mean = donors.iter().map(|c| c.as_f64()).sum::<f64>() / donors.len() as f64;
            assert!((mean - means[s]).abs() < 0.1, "leaf mean {mean} vs {}", means[s]);
        }

        let rel = cart_generate(&model, &d, 5, 12).unwrap();
        for s in 0..2u32 {
            let conf: Vec<f64> =
                (0..d.n_rows()).filter(|&r| d.cell(r, 0) == Cell::Level(s)).map(|r| d.cell(r, 1).as_f64()).collect();
            let conf_mean = conf.iter().sum::<f64>() / conf.len() as f64;
            for z in &rel.datasets {
                let syn: Vec<f64> = (0..z.n_rows())
                    .filter(|&r| z.cell(r, 0) == Cell::Level(s))
                    .map(|r| z.cell(r, 1).as_f64())
                    .collect();
                let syn_mean = syn.iter().sum::<f64>() / syn.len() as f64;
                assert!((syn_mean - conf_mean).abs() < 0.15, "stratum {s}: {syn_mean} vs {conf_mean}");
            }
        }
    }

    #[test]
    fn cart_release_is_seed_deterministic() {
        let d = toy(80, 5);
        let model = fit_cart(&d, &[1, 0], 5).unwrap();
        assert_eq!(cart_generate(&model, &d, 2, 1).unwrap(), cart_generate(&model, &d, 2, 1).unwrap());
    }

    #[test]
    fn release_validation() {
        let d = toy(10, 6);
        let model = fit_mixture(&d, &GibbsConfig { classes: 2, burn_in: 0, thin: 1, draws: 1 }, 1).unwrap();
        assert!(generate_mixture_release(&model, &d, 0, 1).is_err());
        let prov = Provenance { synthesizer: "mixture".into(), seed: 0, hyperparameters: BTreeMap::new() };
        assert!(SyntheticRelease::new(vec![], ReleaseModel::Mixture(model.clone()), prov.clone()).is_err());
        let mut other = d.clone();
        other = other.with_record_values(0, &[2], &[Cell::Level((d.cell(0, 2).level().unwrap() + 1) % 4)]).unwrap();
        assert!(SyntheticRelease::new(vec![d, other], ReleaseModel::Mixture(model), prov).is_err());
    }
}
