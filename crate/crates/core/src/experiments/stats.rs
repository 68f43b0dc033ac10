//! Seeds, summary statistics and log-log slope fits.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for a tuple such as `(seed, n, rep)`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C909, |acc, p| splitmix(acc ^ splitmix(*p)))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// OLS slope of `log y` on `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Replication means, errors and the fitted slope at one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub metric: String,
    pub slope: f64,
    pub slope_ci_lo: f64,
    pub slope_ci_hi: f64,
    pub ladder: Vec<usize>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub medians: Vec<f64>,
    /// Replications retained at each ladder point.
    pub counts: Vec<usize>,
    pub excluded: usize,
}

impl RateResult {
    /// Medians strictly decrease along the ladder.
    pub fn medians_decrease(&self) -> bool {
        self.medians.windows(2).all(|w| w[1] < w[0])
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Slope of `log mean` vs `log ladder` with a percentile bootstrap over
/// replications (200 resamples, 95% interval).
pub fn fit_rate(
    metric: &str,
    ladder: &[usize],
    samples: &[Vec<f64>],
    excluded: usize,
    seed: u64,
) -> RateResult {
    let x: Vec<f64> = ladder.iter().map(|&n| n as f64).collect();
    let means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    let slope = loglog_slope(&x, &means);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xB007]));
    let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let bm: Vec<f64> = samples
            .iter()
            .map(|s| {
                let k = s.len();
                (0..k).map(|_| s[rng.random_range(0..k)]).sum::<f64>() / k as f64
            })
            .collect();
        let b = loglog_slope(&x, &bm);
        if b.is_finite() {
            boots.push(b);
        }
    }
    boots.sort_by(f64::total_cmp);
    let pick = |q: f64| {
        if boots.is_empty() {
            f64::NAN
        } else {
            boots[((q * (boots.len() - 1) as f64).round() as usize).min(boots.len() - 1)]
        }
    };
    RateResult {
        metric: metric.to_string(),
        slope,
        slope_ci_lo: pick(0.025),
        slope_ci_hi: pick(0.975),
        ladder: ladder.to_vec(),
        means,
        stderrs: samples.iter().map(|s| stderr(s)).collect(),
        medians: samples.iter().map(|s| median(s)).collect(),
        counts: samples.iter().map(Vec::len).collect(),
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let x = [10.0, 100.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        assert!((loglog_slope(&x, &y) + 0.75).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_brackets_slope() {
        let ladder = [100, 200, 400, 800];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Vec<f64>> = ladder
            .iter()
            .map(|&n| {
                (0..30)
                    .map(|_| (n as f64).powf(-1.0) * rng.random_range(0.5..1.5))
                    .collect()
            })
            .collect();
        let r = fit_rate("x", &ladder, &samples, 0, 7);
        assert!(r.slope_ci_lo <= r.slope && r.slope <= r.slope_ci_hi);
        assert!((r.slope + 1.0).abs() < 0.2);
        assert_eq!(r.counts, vec![30; 4]);
        assert!(r.medians_decrease());
        assert_eq!(r, fit_rate("x", &ladder, &samples, 0, 7));
    }

    #[test]
    fn seeds_differ_per_component() {
        let a = derive_seed(&[0, 500, 1]);
        assert_ne!(a, derive_seed(&[0, 500, 2]));
        assert_ne!(a, derive_seed(&[0, 1000, 1]));
        assert_ne!(a, derive_seed(&[1, 500, 1]));
        assert_eq!(a, derive_seed(&[0, 500, 1]));
    }

    #[test]
    fn median_and_stderr() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((stderr(&[1.0, 3.0]) - 1.0).abs() < 1e-12);
    }
}
