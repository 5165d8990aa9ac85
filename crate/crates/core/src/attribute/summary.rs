//! File-level summaries of record posteriors.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::AttributeError;
use crate::math::distance;

use super::RecordRisk;

/// Posterior differences below this are ties.
const TIE_TOLERANCE: f64 = 1e-12;

/// Rank of the guess at `true_position` (1 = highest posterior). Tied
/// guesses share the smallest rank.
pub fn rank_of(posterior: &[f64], true_position: usize) -> usize {
    let p = posterior[true_position];
    1 + posterior.iter().filter(|&&q| q > p + TIE_TOLERANCE).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSummary {
    pub records: usize,
    /// Number of records at each rank of the true guess.
    pub rank_counts: BTreeMap<usize, usize>,
    /// Mean and median posterior of the true guess; zero with no records.
    pub mean_probability: f64,
    pub median_probability: f64,
}

pub fn rank_summary(records: &[RecordRisk]) -> RankSummary {
    let mut rank_counts = BTreeMap::new();
    for r in records {
        *rank_counts.entry(r.rank).or_insert(0) += 1;
    }
    let mut probs: Vec<f64> = records.iter().map(|r| r.true_probability).collect();
    probs.sort_by(f64::total_cmp);
    let n = probs.len();
    let (mean, median) = if n == 0 {
        (0.0, 0.0)
    } else {
        let median = if n % 2 == 1 { probs[n / 2] } else { 0.5 * (probs[n / 2 - 1] + probs[n / 2]) };
        (probs.iter().sum::<f64>() / n as f64, median)
    };
    RankSummary { records: n, rank_counts, mean_probability: mean, median_probability: median }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRisk {
    /// Distance from the modal guess to the true location.
    pub r1: f64,
    /// Confidential records within distance `r1` of the true location.
    pub r2: usize,
    pub mode_index: usize,
    /// The posterior maximum is attained by more than one grid point.
    pub tied: bool,
}

fn mode(posterior: &[f64]) -> (usize, bool) {
    let max = posterior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut hits = posterior.iter().enumerate().filter(|(_, &p)| p >= max - TIE_TOLERANCE).map(|(i, _)| i);
    let first = hits.next().unwrap_or(0);
    (first, hits.next().is_some())
}

/// `R1` and `R2` for one record. The intruder's guess is the posterior
/// mode; ties go to the lowest index.
pub fn geo_risk_summaries(
    posterior: &[f64],
    grid: &[(f64, f64)],
    truth: (f64, f64),
    locations: &[(f64, f64)],
) -> Result<GeoRisk, AttributeError> {
    if grid.is_empty() || posterior.is_empty() {
        return Err(AttributeError::EmptyGrid);
    }
    if grid.len() != posterior.len() {
        return Err(AttributeError::InvalidScenario("posterior and grid lengths differ".into()));
    }
    let (mode_index, tied) = mode(posterior);
    let r1 = distance(grid[mode_index], truth);
    let reach = r1 + TIE_TOLERANCE * r1.max(1.0);
    let r2 = locations.iter().filter(|&&loc| distance(loc, truth) <= reach).count();
    Ok(GeoRisk { r1, r2, mode_index, tied })
}

/// Input for [`map_match_summaries`].
#[derive(Debug, Clone, Copy)]
pub struct MapRecord<'a> {
    pub posterior: &'a [f64],
    pub locations: &'a [(f64, f64)],
    pub true_position: usize,
    pub unique_pattern: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSummary {
    /// Percentage of records whose true location attains the posterior
    /// maximum.
    pub map_correct_pct: f64,
    /// Percentage of all records that are MAP-correct and have a unique
    /// un-synthesized pattern.
    pub unique_map_correct_pct: f64,
    /// Mean distance between the true location and the modal guess.
    pub mean_distance: f64,
}

pub fn map_match_summaries(records: &[MapRecord<'_>]) -> MapSummary {
    if records.is_empty() {
        return MapSummary { map_correct_pct: 0.0, unique_map_correct_pct: 0.0, mean_distance: 0.0 };
    }
    let mut correct = 0usize;
    let mut unique_correct = 0usize;
    let mut dist = 0.0;
    for r in records {
        let (m, _) = mode(r.posterior);
        let max = r.posterior[m];
        if r.posterior[r.true_position] >= max - TIE_TOLERANCE {
            correct += 1;
            if r.unique_pattern {
                unique_correct += 1;
            }
        }
        dist += distance(r.locations[m], r.locations[r.true_position]);
    }
    let n = records.len() as f64;
    MapSummary {
        map_correct_pct: 100.0 * correct as f64 / n,
        unique_map_correct_pct: 100.0 * unique_correct as f64 / n,
        mean_distance: dist / n,
    }
}

/// Whether each record's combination of `variables` is shared by no other
/// record.
pub fn unique_patterns(dataset: &Dataset, variables: &[usize]) -> Vec<bool> {
    let keys: Vec<Vec<u64>> =
        (0..dataset.n_rows()).map(|r| variables.iter().map(|&v| dataset.cell(r, v).key()).collect()).collect();
    let mut seen = BTreeSet::new();
    let mut repeated = BTreeSet::new();
    for k in &keys {
        if !seen.insert(k.clone()) {
            repeated.insert(k.clone());
        }
    }
    keys.iter().map(|k| !repeated.contains(k)).collect()
}
