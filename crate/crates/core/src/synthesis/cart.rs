//! Sequential CART synthesizer.
//!
//! Each synthesized variable, in synthesis order, gets a binary tree grown
//! on the un-synthesized variables plus the variables synthesized before it.
//! Leaves keep the confidential values that reached them (the donors).
//! Synthesis routes a record down each tree and draws its value from the
//! leaf's donors with Bayesian bootstrap weights.
//!
//! Splits maximize the decrease in Gini impurity (categorical target) or in
//! squared error (continuous target). Continuous predictors split at
//! midpoints between consecutive distinct values, categorical predictors
//! split one level against the rest. Ties go to the lowest variable index,
//! then the lowest threshold.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Cell, Column, Dataset, Schema, VariableKind};
use crate::error::SynthesisError;
use crate::math::{bayesian_bootstrap_weights, cumulative, sample_cumulative};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SplitRule {
    /// Left when the predictor is `<= threshold`.
    AtMost(f64),
    /// Left when the predictor equals the level.
    Equals(u32),
}

impl SplitRule {
    #[inline]
    fn goes_left(self, cell: Cell) -> bool {
        match self {
            SplitRule::AtMost(t) => cell.as_f64() <= t,
            SplitRule::Equals(level) => cell == Cell::Level(level),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Node {
    Split { variable: usize, rule: SplitRule, left: usize, right: usize },
    Leaf { leaf: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tree {
    /// Schema index of the variable this tree synthesizes.
    pub target: usize,
    /// Schema indices of the variables splits may use.
    pub predictors: Vec<usize>,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
    /// Donor values per leaf.
    pub leaves: Vec<Vec<Cell>>,
}

impl Tree {
    /// Leaf reached by a record whose cells are read through `get`.
    pub fn route<F: Fn(usize) -> Cell>(&self, get: F) -> Option<usize> {
        let mut node = 0;
        for _ in 0..=self.nodes.len() {
            match self.nodes.get(node)? {
                Node::Leaf { leaf } => return Some(*leaf),
                Node::Split { variable, rule, left, right } => {
                    node = if rule.goes_left(get(*variable)) { *left } else { *right };
                }
            }
        }
        None
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CartModel {
    /// Synthesis order (schema indices).
    pub order: Vec<usize>,
    pub min_leaf: usize,
    /// One tree per entry of `order`.
    pub trees: Vec<Tree>,
}

/// Bayesian bootstrap weights drawn for one release: `leaf_weights[t][l]`
/// holds one weight per donor of leaf `l` of tree `t`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CartDraw {
    pub leaf_weights: Vec<Vec<Vec<f64>>>,
}

impl CartModel {
    /// Draws one snapshot of leaf weights.
    pub fn draw_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> CartDraw {
        CartDraw {
            leaf_weights: self
                .trees
                .iter()
                .map(|t| t.leaves.iter().map(|d| bayesian_bootstrap_weights(d.len(), rng)).collect())
                .collect(),
        }
    }

    /// Synthesizes the order variables for record `row` in place, reading the
    /// other cells from `row` as well.
    pub(crate) fn synthesize_row<R: Rng + ?Sized>(
        &self,
        tables: &[Vec<Vec<f64>>],
        row: &mut [Cell],
        rng: &mut R,
    ) -> Option<()> {
        for (tree, tree_tables) in self.trees.iter().zip(tables) {
            let leaf = tree.route(|j| row[j])?;
            let donor = sample_cumulative(&tree_tables[leaf], rng);
            row[tree.target] = tree.leaves[leaf][donor];
        }
        Some(())
    }

    pub(crate) fn cumulative_tables(draw: &CartDraw) -> Vec<Vec<Vec<f64>>> {
        draw.leaf_weights.iter().map(|t| t.iter().map(|w| cumulative(w)).collect()).collect()
    }
}

/// Fits one tree per variable in `order`.
pub fn fit_cart(dataset: &Dataset, order: &[usize], min_leaf: usize) -> Result<CartModel, SynthesisError> {
    let schema = dataset.schema();
    let n = dataset.n_rows();
    if order.is_empty() {
        return Err(SynthesisError::InvalidConfig("synthesis order is empty".into()));
    }
    for (k, &j) in order.iter().enumerate() {
        if j >= schema.len() || !schema.variable(j).synthesized {
            return Err(SynthesisError::InvalidConfig(format!("order entry #{k} is not a synthesized variable")));
        }
        if order[..k].contains(&j) {
            return Err(SynthesisError::InvalidConfig(format!("`{}` appears twice in the order", schema.variable(j).name)));
        }
    }
    if min_leaf == 0 {
        return Err(SynthesisError::InvalidConfig("min_leaf must be at least 1".into()));
    }
    if min_leaf > n {
        return Err(SynthesisError::LeafTooLarge { min_leaf, n });
    }
    let unsynthesized: Vec<usize> = (0..schema.len()).filter(|&j| !schema.variable(j).synthesized).collect();
    let trees = order
        .iter()
        .enumerate()
        .map(|(k, &target)| {
            let mut predictors: Vec<usize> = unsynthesized.iter().chain(&order[..k]).copied().collect();
            predictors.sort_unstable();
            grow_tree(dataset, target, predictors, min_leaf)
        })
        .collect();
    Ok(CartModel { order: order.to_vec(), min_leaf, trees })
}

enum Target<'a> {
    Categorical { codes: &'a [u32], levels: usize },
    Continuous(&'a [f64]),
}

/// Impurity accumulator: Gini (times node size) for categorical targets,
/// sum of squared deviations for continuous ones.
#[derive(Clone)]
enum Stats {
    Counts { counts: Vec<u64>, n: u64, sum_sq: u64 },
    Moments { n: f64, sum: f64, sum_sq: f64 },
}

impl Stats {
    fn empty(target: &Target<'_>) -> Stats {
        match target {
            Target::Categorical { levels, .. } => Stats::Counts { counts: vec![0; *levels], n: 0, sum_sq: 0 },
            Target::Continuous(_) => Stats::Moments { n: 0.0, sum: 0.0, sum_sq: 0.0 },
        }
    }

    #[inline]
    fn add(&mut self, target: &Target<'_>, row: usize, shift: f64) {
        match (self, target) {
            (Stats::Counts { counts, n, sum_sq }, Target::Categorical { codes, .. }) => {
                let c = &mut counts[codes[row] as usize];
                *sum_sq += 2 * *c + 1;
                *c += 1;
                *n += 1;
            }
            (Stats::Moments { n, sum, sum_sq }, Target::Continuous(values)) => {
                let y = values[row] - shift;
                *n += 1.0;
                *sum += y;
                *sum_sq += y * y;
            }
            _ => unreachable!(),
        }
    }

    #[inline]
    fn remove(&mut self, target: &Target<'_>, row: usize, shift: f64) {
        match (self, target) {
            (Stats::Counts { counts, n, sum_sq }, Target::Categorical { codes, .. }) => {
                let c = &mut counts[codes[row] as usize];
                *sum_sq -= 2 * *c - 1;
                *c -= 1;
                *n -= 1;
            }
            (Stats::Moments { n, sum, sum_sq }, Target::Continuous(values)) => {
                let y = values[row] - shift;
                *n -= 1.0;
                *sum -= y;
                *sum_sq -= y * y;
            }
            _ => unreachable!(),
        }
    }

    #[inline]
    fn impurity(&self) -> f64 {
        match self {
            Stats::Counts { n, sum_sq, .. } => {
                if *n == 0 {
                    0.0
                } else {
                    *n as f64 - *sum_sq as f64 / *n as f64
                }
            }
            Stats::Moments { n, sum, sum_sq } => {
                if *n == 0.0 {
                    0.0
                } else {
                    (sum_sq - sum * sum / n).max(0.0)
                }
            }
        }
    }
}

struct Candidate {
    gain: f64,
    variable: usize,
    rule: SplitRule,
}

fn grow_tree(dataset: &Dataset, target: usize, predictors: Vec<usize>, min_leaf: usize) -> Tree {
    let schema = dataset.schema();
    let target_view = match dataset.column(target) {
        Column::Categorical(codes) => Target::Categorical { codes, levels: schema.variable(target).cardinality().unwrap_or(0) },
        Column::Continuous(values) => Target::Continuous(values),
    };

    let mut nodes: Vec<Node> = vec![Node::Leaf { leaf: usize::MAX }];
    let mut leaves: Vec<Vec<Cell>> = Vec::new();
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, (0..dataset.n_rows()).collect())];

    while let Some((node, rows)) = stack.pop() {
        match best_split(dataset, schema, &target_view, &predictors, &rows, min_leaf) {
            Some(candidate) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| candidate.rule.goes_left(dataset.cell(r, candidate.variable)));
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { leaf: usize::MAX });
                nodes.push(Node::Leaf { leaf: usize::MAX });
                nodes[node] = Node::Split { variable: candidate.variable, rule: candidate.rule, left, right };
                // Right first so the left subtree is expanded first.
                stack.push((right, right_rows));
                stack.push((left, left_rows));
            }
            None => {
                nodes[node] = Node::Leaf { leaf: leaves.len() };
                leaves.push(rows.iter().map(|&r| dataset.cell(r, target)).collect());
            }
        }
    }
    Tree { target, predictors, nodes, leaves }
}

fn best_split(
    dataset: &Dataset,
    schema: &Schema,
    target: &Target<'_>,
    predictors: &[usize],
    rows: &[usize],
    min_leaf: usize,
) -> Option<Candidate> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let shift = match target {
        Target::Continuous(values) => rows.iter().map(|&r| values[r]).sum::<f64>() / n as f64,
        Target::Categorical { .. } => 0.0,
    };
    let mut parent = Stats::empty(target);
    for &r in rows {
        parent.add(target, r, shift);
    }
    let parent_impurity = parent.impurity();
    let scale = parent_impurity.abs().max(1.0);
    if parent_impurity <= 1e-12 * scale {
        return None;
    }

    let mut best: Option<Candidate> = None;
    let consider = |gain: f64, variable: usize, rule: SplitRule, best: &mut Option<Candidate>| {
        let threshold = best.as_ref().map_or(1e-10 * scale, |b| b.gain + 1e-12 * scale);
        if gain > threshold {
            *best = Some(Candidate { gain, variable, rule });
        }
    };

    for &j in predictors {
        match &schema.variable(j).kind {
            VariableKind::Continuous { .. } => {
                let xs = dataset.column(j).as_continuous().expect("continuous column");
                let mut sorted: Vec<usize> = rows.to_vec();
                sorted.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
                let mut left = Stats::empty(target);
                let mut right = parent.clone();
                for i in 1..n {
                    let moved = sorted[i - 1];
                    left.add(target, moved, shift);
                    right.remove(target, moved, shift);
                    if i < min_leaf || n - i < min_leaf {
                        continue;
                    }
                    let (lo, hi) = (xs[sorted[i - 1]], xs[sorted[i]]);
                    if lo >= hi {
                        continue;
                    }
                    let gain = parent_impurity - left.impurity() - right.impurity();
                    consider(gain, j, SplitRule::AtMost(lo + (hi - lo) / 2.0), &mut best);
                }
            }
            VariableKind::Categorical { levels } => {
                let codes = dataset.column(j).as_categorical().expect("categorical column");
                let mut per_level: Vec<Option<Stats>> = vec![None; levels.len()];
                let mut sizes = vec![0usize; levels.len()];
                for &r in rows {
                    let l = codes[r] as usize;
                    sizes[l] += 1;
                    per_level[l].get_or_insert_with(|| Stats::empty(target)).add(target, r, shift);
                }
                for (level, stats) in per_level.iter().enumerate() {
                    let Some(left) = stats else { continue };
                    let size = sizes[level];
                    if size < min_leaf || n - size < min_leaf {
                        continue;
                    }
                    let mut right = parent.clone();
                    for &r in rows.iter().filter(|&&r| codes[r] as usize == level) {
                        right.remove(target, r, shift);
                    }
                    let gain = parent_impurity - left.impurity() - right.impurity();
                    consider(gain, j, SplitRule::Equals(level as u32), &mut best);
                }
            }
        }
    }
    best
}

/// Synthesizes the order variables of every record with one snapshot.
pub(crate) fn synthesize_dataset<R: Rng + ?Sized>(
    model: &CartModel,
    draw: &CartDraw,
    dataset: &Dataset,
    rng: &mut R,
) -> Result<Vec<(usize, Column)>, SynthesisError> {
    let schema = dataset.schema();
    let tables = CartModel::cumulative_tables(draw);
    let n = dataset.n_rows();
    let mut out: Vec<Column> = model
        .order
        .iter()
        .map(|&j| match schema.variable(j).kind {
            VariableKind::Categorical { .. } => Column::Categorical(Vec::with_capacity(n)),
            VariableKind::Continuous { .. } => Column::Continuous(Vec::with_capacity(n)),
        })
        .collect();
    let mut row = Vec::with_capacity(schema.len());
    for r in 0..n {
        row.clear();
        row.extend(dataset.columns().iter().map(|c| c.get(r)));
        model.synthesize_row(&tables, &mut row, rng).ok_or_else(|| SynthesisError::Unroutable {
            row: r + 1,
            variable: schema.variable(model.order[0]).name.clone(),
        })?;
        for (col, &j) in out.iter_mut().zip(&model.order) {
            match (col, row[j]) {
                (Column::Categorical(c), Cell::Level(l)) => c.push(l),
                (Column::Continuous(c), Cell::Real(x)) => c.push(x),
                _ => unreachable!("donor kinds follow the schema"),
            }
        }
    }
    Ok(model.order.iter().copied().zip(out).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VariableDef;
    use alloc::sync::Arc;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn separable() -> Dataset {
        let schema = Arc::new(
            Schema::new(vec![
                VariableDef::categorical_k("x", 2, false, true),
                VariableDef::categorical_k("y", 2, true, false),
            ])
            .unwrap(),
        );
        let rows: Vec<Vec<Cell>> = (0..40).map(|i| vec![Cell::Level(i % 2), Cell::Level(i % 2)]).collect();
        Dataset::from_rows(schema, &rows).unwrap()
    }

    #[test]
    fn separable_data_gives_one_split_with_pure_leaves() {
        let d = separable();
        let m = fit_cart(&d, &[1], 5).unwrap();
        let tree = &m.trees[0];
        assert_eq!(tree.leaf_count(), 2);
        assert!(matches!(tree.nodes[0], Node::Split { variable: 0, rule: SplitRule::Equals(0), .. }));
        for leaf in &tree.leaves {
            assert!(leaf.iter().all(|&c| c == leaf[0]));
        }
    }

    #[test]
    fn min_leaf_equal_to_n_gives_single_leaf() {
        let d = separable();
        let m = fit_cart(&d, &[1], d.n_rows()).unwrap();
        assert_eq!(m.trees[0].leaf_count(), 1);
        assert_eq!(m.trees[0].leaves[0].len(), d.n_rows());
    }

    #[test]
    fn fit_errors() {
        let d = separable();
        assert_eq!(fit_cart(&d, &[1], 41), Err(SynthesisError::LeafTooLarge { min_leaf: 41, n: 40 }));
        assert!(fit_cart(&d, &[], 5).is_err());
        assert!(fit_cart(&d, &[0], 5).is_err());
    }

    #[test]
    fn leaves_respect_min_leaf_and_predictor_availability() {
        let schema = Arc::new(
            Schema::new(vec![
                VariableDef::continuous("x", 0.0, 1.0, false, false),
                VariableDef::continuous("lon", 0.0, 100.0, true, true),
                VariableDef::continuous("lat", 0.0, 100.0, true, true),
            ])
            .unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<Cell>> = (0..300)
            .map(|_| {
                let x: f64 = rng.random();
                let lon = 100.0 * x * 0.9 + rng.random::<f64>() * 10.0;
                let lat = (lon * 0.5 + rng.random::<f64>() * 20.0).min(100.0);
                vec![Cell::Real(x), Cell::Real(lon), Cell::Real(lat)]
            })
            .collect();
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let m = fit_cart(&d, &[1, 2], 7).unwrap();
        assert_eq!(m.trees[0].predictors, vec![0]);
        assert_eq!(m.trees[1].predictors, vec![0, 1]);
        for tree in &m.trees {
            assert!(tree.leaves.iter().all(|l| l.len() >= 7));
            assert_eq!(tree.leaves.iter().map(Vec::len).sum::<usize>(), 300);
            for node in &tree.nodes {
                if let Node::Split { variable, .. } = node {
                    assert!(tree.predictors.contains(variable));
                }
            }
        }
        // Every confidential record routes to the leaf holding it as a donor.
        let tree = &m.trees[1];
        for r in 0..d.n_rows() {
            let leaf = tree.route(|j| d.cell(r, j)).unwrap();
            assert!(tree.leaves[leaf].contains(&d.cell(r, 2)));
        }
    }

    #[test]
    fn gini_prefers_lowest_index_on_ties() {
        // Two identical predictors: the split must use the first one.
        let schema = Arc::new(
            Schema::new(vec![
                VariableDef::categorical_k("a", 2, false, false),
                VariableDef::categorical_k("b", 2, false, false),
                VariableDef::categorical_k("y", 2, true, false),
            ])
            .unwrap(),
        );
        let rows: Vec<Vec<Cell>> =
            (0..20).map(|i| vec![Cell::Level(i % 2), Cell::Level(i % 2), Cell::Level(i % 2)]).collect();
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let m = fit_cart(&d, &[2], 2).unwrap();
        assert!(matches!(m.trees[0].nodes[0], Node::Split { variable: 0, .. }));
    }
}
