//! Smoothed density estimation from samples, with optional projection onto
//! `{L ≤ μ ≤ U, ∫μ = 1}`.
//!
//! The wavelet estimator is the truncated Haar expansion at level `J`: its
//! empirical scaling coefficients are bin frequencies on the `2^J` dyadic
//! partition of each axis, so it coincides with a dyadic histogram. Nodal
//! values are averages of the piecewise-constant estimate over each node's
//! dual cell.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_values, Grid, GridDensity, SampleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Wavelet,
    Histogram,
    Kernel,
}

/// Resolution of the estimator; `Auto` defers to [`choose_resolution`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Auto,
    /// Haar truncation level `J` (`2^J` bins per axis).
    Level(u32),
    /// Histogram bins per axis.
    Bins(usize),
    /// Gaussian kernel bandwidth.
    Bandwidth(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: EstimatorMethod,
    #[serde(default = "auto")]
    pub resolution: Resolution,
    /// Lower and upper density bounds `(L, U)`.
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
    /// Smoothness `s ≥ 0` used by automatic resolution.
    #[serde(default = "one")]
    pub smoothness: f64,
}

fn auto() -> Resolution {
    Resolution::Auto
}

fn one() -> f64 {
    1.0
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: EstimatorMethod::Wavelet,
            resolution: Resolution::Auto,
            bounds: None,
            smoothness: 1.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some((l, u)) = self.bounds {
            if !(l >= 0.0 && l < u && u.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "bounds need 0 <= L < U, got ({l}, {u})"
                )));
            }
        }
        if !(self.smoothness >= 0.0) {
            return Err(Error::InvalidArgument("smoothness must be >= 0".into()));
        }
        match self.resolution {
            Resolution::Bins(0) => Err(Error::InvalidArgument("zero bins".into())),
            Resolution::Bandwidth(b) if !(b > 0.0) => {
                Err(Error::InvalidArgument("bandwidth must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `J = round(log2(n) / (d + 2s))`, clamped to `[0, max_level]`.
pub fn choose_resolution(n: usize, s: f64, d: usize, max_level: u32) -> u32 {
    if n <= 1 {
        return 0;
    }
    let j = ((n as f64).log2() / (d as f64 + 2.0 * s)).round();
    (j.max(0.0) as u32).min(max_level)
}

/// `⌊log2(min_k N_k)⌋`, the finest dyadic level a grid can resolve.
pub fn max_level(grid: &Grid) -> u32 {
    let n = *grid.sizes().iter().min().expect("non-empty grid");
    usize::BITS - 1 - n.leading_zeros()
}

/// Builds the smoothed estimate `μ̃` on `grid`.
pub fn estimate_density(
    samples: &SampleSet,
    cfg: &EstimatorConfig,
    grid: &Grid,
) -> Result<GridDensity> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "samples in d={} but grid in d={}",
            samples.dim(),
            grid.dim()
        )));
    }
    if let Some((l, u)) = cfg.bounds {
        let vol = grid.volume();
        if u * vol < 1.0 || l * vol > 1.0 {
            return Err(Error::InfeasibleBounds(format!(
                "[{l}, {u}] on a domain of volume {vol}"
            )));
        }
    }
    let n = samples.len();
    let auto_level = choose_resolution(n, cfg.smoothness, grid.dim(), max_level(grid));
    let raw = match (cfg.method, cfg.resolution) {
        (EstimatorMethod::Wavelet, Resolution::Level(j)) => histogram(samples, grid, 1usize << j),
        (EstimatorMethod::Wavelet, Resolution::Auto) => {
            histogram(samples, grid, 1usize << auto_level)
        }
        (EstimatorMethod::Histogram, Resolution::Bins(b)) => histogram(samples, grid, b),
        (EstimatorMethod::Histogram, Resolution::Auto | Resolution::Level(_)) => {
            let j = match cfg.resolution {
                Resolution::Level(j) => j,
                _ => auto_level,
            };
            histogram(samples, grid, 1usize << j)
        }
        (EstimatorMethod::Kernel, Resolution::Bandwidth(bw)) => kernel(samples, grid, bw),
        (EstimatorMethod::Kernel, Resolution::Auto | Resolution::Level(_)) => {
            let j = match cfg.resolution {
                Resolution::Level(j) => j,
                _ => auto_level,
            };
            // bandwidth matched to the standard deviation of a level-J bin
            let ell = (0..grid.dim()).map(|a| grid.extent(a)).fold(f64::INFINITY, f64::min);
            kernel(samples, grid, ell / (1u64 << j) as f64 / 12f64.sqrt())
        }
        (m, r) => {
            return Err(Error::InvalidArgument(format!(
                "resolution {r:?} does not apply to {m:?}"
            )))
        }
    };
    match cfg.bounds {
        Some((l, u)) => project_to_bounds(grid, raw, l, u),
        None => GridDensity::normalized(grid.clone(), raw),
    }
}

/// Per-axis overlap of node dual cells with `bins` equal bins.
fn dual_cell_overlaps(grid: &Grid, axis: usize, bins: usize) -> Vec<Vec<(usize, f64)>> {
    let (lo, hi) = (grid.lo(axis), grid.hi(axis));
    let h = grid.spacing(axis);
    let bw = (hi - lo) / bins as f64;
    (0..grid.sizes()[axis])
        .map(|i| {
            let x = lo + i as f64 * h;
            let (a, b) = ((x - 0.5 * h).max(lo), (x + 0.5 * h).min(hi));
            let first = (((a - lo) / bw).floor() as usize).min(bins - 1);
            let last = (((b - lo) / bw).ceil() as usize).clamp(first + 1, bins);
            (first..last)
                .filter_map(|k| {
                    let (c0, c1) = (lo + k as f64 * bw, lo + (k + 1) as f64 * bw);
                    let ov = (b.min(c1) - a.max(c0)).max(0.0);
                    (ov > 0.0).then_some((k, ov / (b - a)))
                })
                .collect()
        })
        .collect()
}

fn histogram(samples: &SampleSet, grid: &Grid, bins: usize) -> Vec<f64> {
    let d = grid.dim();
    let bins = bins.max(1);
    let mut counts = vec![0.0; bins.pow(d as u32)];
    let bin_of = |axis: usize, x: f64| {
        let t = (x - grid.lo(axis)) / grid.extent(axis);
        ((t * bins as f64).floor() as usize).min(bins - 1)
    };
    for p in samples.iter() {
        let k = if d == 1 {
            bin_of(0, p[0])
        } else {
            bin_of(0, p[0]) * bins + bin_of(1, p[1])
        };
        counts[k] += 1.0;
    }
    let bin_vol: f64 = (0..d).map(|a| grid.extent(a) / bins as f64).product();
    let scale = 1.0 / (samples.len() as f64 * bin_vol);
    counts.iter_mut().for_each(|c| *c *= scale);

    let ov: Vec<_> = (0..d).map(|a| dual_cell_overlaps(grid, a, bins)).collect();
    (0..grid.len())
        .map(|k| {
            let idx = grid.multi_index(k);
            if d == 1 {
                ov[0][idx[0]].iter().map(|(b, w)| w * counts[*b]).sum()
            } else {
                let mut acc = 0.0;
                for (b0, w0) in &ov[0][idx[0]] {
                    for (b1, w1) in &ov[1][idx[1]] {
                        acc += w0 * w1 * counts[b0 * bins + b1];
                    }
                }
                acc
            }
        })
        .collect()
}

/// Gaussian KDE via linear binning onto the grid and a separable
/// convolution with boundary reflection.
fn kernel(samples: &SampleSet, grid: &Grid, bw: f64) -> Vec<f64> {
    let mut mass = vec![0.0; grid.len()];
    for p in samples.iter() {
        crate::grid::deposit(grid, p, 1.0, &mut mass);
    }
    let w = grid.weights();
    let mut field: Vec<f64> = mass.iter().zip(&w).map(|(m, w)| m / w).collect();
    for axis in 0..grid.dim() {
        let n = grid.sizes()[axis];
        let h = grid.spacing(axis);
        let reach = ((4.0 * bw / h).ceil() as isize).max(1);
        let taps: Vec<f64> = (-reach..=reach)
            .map(|o| (-0.5 * (o as f64 * h / bw).powi(2)).exp())
            .collect();
        let stride = if grid.dim() == 2 && axis == 0 { grid.sizes()[1] } else { 1 };
        let reflect = |i: isize| -> usize {
            let period = 2 * (n as isize - 1);
            let mut j = i.rem_euclid(period);
            if j >= n as isize {
                j = period - j;
            }
            j as usize
        };
        let mut out = vec![0.0; grid.len()];
        let mut line_in = vec![0.0; n];
        let mut line_w = vec![0.0; n];
        for k in 0..grid.len() {
            if grid.multi_index(k)[axis] != 0 {
                continue;
            }
            for i in 0..n {
                line_in[i] = field[k + i * stride];
                line_w[i] = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            }
            for i in 0..n {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (t, tap) in taps.iter().enumerate() {
                    let j = reflect(i as isize + t as isize - reach);
                    acc += tap * line_in[j] * line_w[j];
                    norm += tap;
                }
                out[k + i * stride] = acc / norm;
            }
        }
        field = out;
    }
    field
}

/// Clip to `[L, U]`, then restore unit mass with an additive shift
/// `c` solving `∫ clip(v + c, L, U) = 1` by bisection.
pub fn project_to_bounds(grid: &Grid, raw: Vec<f64>, lower: f64, upper: f64) -> Result<GridDensity> {
    let vol = grid.volume();
    if upper * vol < 1.0 || lower * vol > 1.0 {
        return Err(Error::InfeasibleBounds(format!(
            "[{lower}, {upper}] on a domain of volume {vol}"
        )));
    }
    let w = grid.weights();
    let mass_at = |c: f64| -> f64 {
        raw.iter()
            .zip(&w)
            .map(|(v, w)| w * (v + c).clamp(lower, upper))
            .sum()
    };
    let vmax = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut a, mut b) = (lower - vmax, upper - vmin);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mass_at(mid) < 1.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    let c = 0.5 * (a + b);
    let mut vals: Vec<f64> = raw.iter().map(|v| (v + c).clamp(lower, upper)).collect();
    let mass = integrate_values(grid, &vals);
    vals.iter_mut().for_each(|v| *v /= mass);
    Ok(GridDensity::new(grid.clone(), vals)?.with_bounds(lower, upper))
}

/// Reads a sample CSV with header `x1` or `x1,x2`.
pub fn load_samples_csv(path: impl AsRef<Path>, grid: &Grid, source_id: usize) -> Result<SampleSet> {
    let mut rdr = csv::Reader::from_path(path)?;
    read_samples(&mut rdr, grid, source_id)
}

pub fn read_samples<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    grid: &Grid,
    source_id: usize,
) -> Result<SampleSet> {
    let d = grid.dim();
    let expected: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != expected {
        return Err(Error::InvalidArgument(format!(
            "expected header {expected:?}, got {header:?}"
        )));
    }
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != d {
            return Err(Error::InvalidArgument(format!("row with {} columns", rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("not a number: {field:?}"))
            })?;
            pts.push(v);
        }
    }
    SampleSet::new(grid, pts, source_id)
}
