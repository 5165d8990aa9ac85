//! Small numeric helpers shared by the samplers and estimators.
//!
//! All transcendental functions go through `libm` so that results are
//! identical with and without the `std` feature.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `ln(sum(exp(x)))`, stable for large magnitudes. Returns `-inf` for an
/// empty slice or when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(sum)
}

/// Normalizes log-weights into probabilities. Returns `None` when every
/// weight is `-inf`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return None;
    }
    Some(log_weights.iter().map(|&w| exp(w - lse)).collect())
}

/// Euclidean distance in the plane.
#[inline]
pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::hypot(a.0 - b.0, a.1 - b.1)
}

/// Draws an index with probability proportional to `weights` (nonnegative,
/// not necessarily normalized). Falls back to the last positive index when
/// rounding leaves the uniform above the running total.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "sample_index needs positive total weight");
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Draws an index from a cumulative distribution table whose last entry is
/// the total mass.
#[inline]
pub fn sample_cumulative<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("non-empty table");
    let u = rng.random::<f64>() * total;
    let idx = cumulative.partition_point(|&c| c <= u);
    idx.min(cumulative.len() - 1)
}

/// Running cumulative sums of `weights`.
pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|&w| {
            acc += w;
            acc
        })
        .collect()
}

/// Draws from a Dirichlet distribution with the given concentrations via
/// normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        // All gammas underflowed (tiny concentrations): fall back to the mean.
        let a_total: f64 = alpha.iter().sum();
        draws.iter_mut().zip(alpha).for_each(|(d, &a)| *d = a / a_total);
    }
    draws
}

/// Bayesian bootstrap weights for `n` donors: a flat Dirichlet draw.
pub fn bayesian_bootstrap_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let ones = alloc::vec![1.0; n];
    sample_dirichlet(&ones, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, f64::NEG_INFINITY]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_log_weights_sums_to_one() {
        let p = normalize_log_weights(&[-700.0, -701.0, -702.5]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY]).is_none());
    }

    #[test]
    fn dirichlet_is_a_probability_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = sample_dirichlet(&[1.0, 2.0, 0.5, 7.0], &mut rng);
            assert!(d.iter().all(|&x| x >= 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_mean_matches_concentrations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alpha = [2.0, 3.0, 5.0];
        let mut mean = [0.0; 3];
        let reps = 20_000;
        for _ in 0..reps {
            let d = sample_dirichlet(&alpha, &mut rng);
            for k in 0..3 {
                mean[k] += d[k] / reps as f64;
            }
        }
        for k in 0..3 {
            assert!((mean[k] - alpha[k] / 10.0).abs() < 0.01, "{mean:?}");
        }
    }

    #[test]
    fn samplers_respect_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let i = sample_index(&[0.0, 1.0, 0.0, 2.0], &mut rng);
            assert!(i == 1 || i == 3);
            let j = sample_cumulative(&cumulative(&[0.0, 1.0, 0.0, 2.0]), &mut rng);
            assert!(j == 1 || j == 3);
        }
    }

    #[test]
    fn hypot_distance() {
        assert_eq!(distance((0.0, 0.0), (3.0, 4.0)), 5.0);
    }
}
