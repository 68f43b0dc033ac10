//! Ground-truth evaluators: exact one-dimensional Wasserstein distances and
//! barycenters, the location-scatter closed form, a fixed-support LP
//! barycenter, and a debiased entropic distance for d = 2.

mod entropic;
mod lp;

pub use entropic::{w2_entropic_2d, EntropicOptions};
pub use lp::{lp_barycenter_fixed_support, DiscreteMeasure, LpBarycenter};

use crate::error::{Error, Result};
use crate::grid::{GridDensity, GridFunction};
use crate::semidual::BarycenterProblem;

/// Quantile levels used by every 1-D oracle.
pub const QUANTILE_LEVELS: usize = 4096;

/// Quantile function sampled at midpoint levels `(k + ½)/K`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileRep {
    levels: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileRep {
    pub fn new(levels: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if levels.len() != values.len() || levels.is_empty() {
            return Err(Error::InvalidArgument("quantile arrays must match".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("quantiles must be nondecreasing".into()));
        }
        Ok(Self { levels, values })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// ω-weighted average of quantile functions on a shared level grid.
    pub fn average(reps: &[QuantileRep], weights: &[f64]) -> Result<Self> {
        let first = reps
            .first()
            .ok_or_else(|| Error::InvalidArgument("no quantile functions".into()))?;
        if reps.iter().any(|r| r.levels != first.levels) || reps.len() != weights.len() {
            return Err(Error::InvalidArgument("quantile levels differ".into()));
        }
        let mut values = vec![0.0; first.values.len()];
        for (r, w) in reps.iter().zip(weights) {
            for (v, q) in values.iter_mut().zip(&r.values) {
                *v += w * q;
            }
        }
        // rounding can break monotonicity by an ulp
        for k in 1..values.len() {
            values[k] = values[k].max(values[k - 1]);
        }
        Self::new(first.levels.clone(), values)
    }

    /// `(∫₀¹ |Q_a − Q_b|^p dq)^{1/p}` by midpoint quadrature.
    pub fn distance(&self, other: &QuantileRep, p: f64) -> Result<f64> {
        if self.levels != other.levels {
            return Err(Error::InvalidArgument("quantile levels differ".into()));
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs().powf(p))
            .sum();
        Ok((s / self.values.len() as f64).powf(1.0 / p))
    }

    /// Deposits mass `1/K` at every quantile value.
    pub fn to_density(&self, grid: &crate::grid::Grid) -> Result<GridDensity> {
        if grid.dim() != 1 {
            return Err(Error::UnsupportedDimension {
                dim: grid.dim(),
                what: "quantile deposition",
            });
        }
        let mut masses = vec![0.0; grid.len()];
        let w = 1.0 / self.values.len() as f64;
        for v in &self.values {
            crate::grid::deposit(grid, &[*v], w, &mut masses);
        }
        GridDensity::from_masses(grid.clone(), &masses)
    }
}

fn midpoint_levels(k: usize) -> Vec<f64> {
    (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect()
}

fn require_1d(mu: &GridDensity, what: &'static str) -> Result<()> {
    match mu.grid().dim() {
        1 => Ok(()),
        dim => Err(Error::UnsupportedDimension { dim, what }),
    }
}

/// Cumulative mass at grid nodes of the piecewise-linear interpolant.
fn node_cdf(mu: &GridDensity) -> Vec<f64> {
    let v = mu.values();
    let h = mu.grid().spacing(0);
    let mut cdf = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for w in v.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        cdf.push(acc);
    }
    cdf
}

/// Exact quantiles of the piecewise-linear density at the given levels.
pub fn quantiles_at(mu: &GridDensity, levels: &[f64]) -> Result<QuantileRep> {
    require_1d(mu, "quantiles")?;
    let g = mu.grid();
    let h = g.spacing(0);
    let lo = g.lo(0);
    let v = mu.values();
    let cdf = node_cdf(mu);
    let total = *cdf.last().expect("grid has nodes");
    let mut out = Vec::with_capacity(levels.len());
    let mut cell = 0usize;
    for &q in levels {
        let target = q * total;
        while cell + 2 < cdf.len() && cdf[cell + 1] <= target {
            cell += 1;
        }
        // mass within the cell up to offset t: a t + (b − a) t² / (2h)
        let r = (target - cdf[cell]).max(0.0);
        let (a, b) = (v[cell], v[cell + 1]);
        let slope = (b - a) / h;
        let t = if slope.abs() < 1e-14 * (a.abs() + b.abs() + 1.0) {
            if a > 0.0 {
                r / a
            } else {
                0.5 * h
            }
        } else {
            let disc = (a * a + 2.0 * slope * r).max(0.0);
            2.0 * r / (a + disc.sqrt()).max(f64::MIN_POSITIVE)
        };
        let x = lo + (cell as f64 + t.clamp(0.0, h) / h) * h;
        out.push(x);
    }
    for k in 1..out.len() {
        out[k] = out[k].max(out[k - 1]);
    }
    QuantileRep::new(levels.to_vec(), out)
}

/// Quantiles at the `K = 4096` midpoint levels.
pub fn quantiles(mu: &GridDensity) -> Result<QuantileRep> {
    quantiles_at(mu, &midpoint_levels(QUANTILE_LEVELS))
}

/// Exact 1-D `W₂` via quantile quadrature.
pub fn w2_1d(mu: &GridDensity, nu: &GridDensity) -> Result<f64> {
    quantiles(mu)?.distance(&quantiles(nu)?, 2.0)
}

/// Exact 1-D `W₁ = ∫ |F_μ − F_ν| dx` for densities on one grid.
pub fn w1_1d(mu: &GridDensity, nu: &GridDensity) -> Result<f64> {
    require_1d(mu, "w1_1d")?;
    require_1d(nu, "w1_1d")?;
    mu.grid().ensure_same(nu.grid())?;
    let h = mu.grid().spacing(0);
    let (a, b) = (mu.values(), nu.values());
    let (fa, fb) = (node_cdf(mu), node_cdf(nu));
    let mut total = 0.0;
    for k in 0..a.len() - 1 {
        // D(t) = d0 + e t + c t², t ∈ [0, h]
        let d0 = fa[k] - fb[k];
        let e = a[k] - b[k];
        let c = ((a[k + 1] - b[k + 1]) - e) / (2.0 * h);
        let prim = |t: f64| d0 * t + 0.5 * e * t * t + c * t * t * t / 3.0;
        let mut cuts = vec![0.0];
        if c.abs() > 1e-300 {
            let disc = e * e - 4.0 * c * d0;
            if disc >= 0.0 {
                let s = disc.sqrt();
                cuts.push((-e - s) / (2.0 * c));
                cuts.push((-e + s) / (2.0 * c));
            }
        } else if e != 0.0 {
            cuts.push(-d0 / e);
        }
        cuts.push(h);
        cuts.retain(|t| (0.0..=h).contains(t));
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            total += (prim(w[1]) - prim(w[0])).abs();
        }
    }
    Ok(total)
}

/// `W₁` between a density and a quantile function, `∫ |Q_μ − Q| dq`.
pub fn w1_to_quantiles(mu: &GridDensity, q: &QuantileRep) -> Result<f64> {
    quantiles_at(mu, q.levels())?.distance(q, 1.0)
}

/// Quantile function `Σ ω_j F_j⁻¹` of the 1-D barycenter.
pub fn barycenter_1d_quantiles(prob: &BarycenterProblem) -> Result<QuantileRep> {
    let reps = prob
        .densities()
        .iter()
        .map(quantiles)
        .collect::<Result<Vec<_>>>()?;
    QuantileRep::average(&reps, prob.weights())
}

/// The 1-D barycenter, deposited on the problem grid.
pub fn barycenter_1d_oracle(prob: &BarycenterProblem) -> Result<GridDensity> {
    barycenter_1d_quantiles(prob)?.to_density(prob.grid())
}

/// `𝓔 = Σ (ω_j/2) W₂²(μ̄, μ_j)`, evaluated on quantile functions directly.
pub fn barycenter_functional_oracle(prob: &BarycenterProblem) -> Result<f64> {
    let reps = prob
        .densities()
        .iter()
        .map(quantiles)
        .collect::<Result<Vec<_>>>()?;
    let bar = QuantileRep::average(&reps, prob.weights())?;
    let mut total = 0.0;
    for (r, w) in reps.iter().zip(prob.weights()) {
        let d = bar.distance(r, 2.0)?;
        total += 0.5 * w * d * d;
    }
    Ok(total)
}

/// `V(ν) = Σ (ω_j/2) W₂²(ν, μ_j)`.
pub fn weighted_variance(nu: &GridDensity, prob: &BarycenterProblem) -> Result<f64> {
    let q = quantiles(nu)?;
    let mut total = 0.0;
    for (mu, w) in prob.densities().iter().zip(prob.weights()) {
        let d = q.distance(&quantiles(mu)?, 2.0)?;
        total += 0.5 * w * d * d;
    }
    Ok(total)
}

/// Barycenter of the affine family `x ↦ A_j x + b_j` applied to `reference`:
/// the pushforward by `x ↦ (Σ ω_j A_j) x + Σ ω_j b_j`.
pub fn location_scatter_oracle(
    reference: &GridDensity,
    maps: &[(f64, f64)],
    weights: &[f64],
) -> Result<GridDensity> {
    require_1d(reference, "location_scatter_oracle")?;
    if maps.len() != weights.len() || maps.is_empty() {
        return Err(Error::InvalidArgument("one weight per affine map".into()));
    }
    if let Some((a, _)) = maps.iter().find(|(a, _)| !(*a > 0.0)) {
        return Err(Error::InvalidArgument(format!("nonpositive scale {a}")));
    }
    let scale: f64 = maps.iter().zip(weights).map(|((a, _), w)| a * w).sum();
    let shift: f64 = maps.iter().zip(weights).map(|((_, b), w)| b * w).sum();
    affine_pushforward(reference, scale, shift)
}

/// Exact law of `a X + b` for `X ~ reference`, via quantiles.
pub fn affine_pushforward(reference: &GridDensity, a: f64, b: f64) -> Result<GridDensity> {
    let q = quantiles(reference)?;
    let moved: Vec<f64> = q.values().iter().map(|x| a * x + b).collect();
    QuantileRep::new(q.levels().to_vec(), moved)?.to_density(reference.grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn box_density(g: &Grid, a: f64, b: f64) -> GridDensity {
        // piecewise-linear box with one-cell ramps at the ends
        let h = g.spacing(0);
        GridDensity::from_fn(g.clone(), |x| {
            let x = x[0];
            if x < a - 0.5 * h || x > b + 0.5 * h {
                0.0
            } else {
                1.0
            }
        })
        .unwrap()
    }

    #[test]
    fn uniform_quantiles_are_linear() {
        let g = Grid::line(0.0, 1.0, 65).unwrap();
        let q = quantiles(&GridDensity::uniform(g)).unwrap();
        for (l, v) in q.levels().iter().zip(q.values()) {
            assert!((l - v).abs() < 1e-12);
        }
    }

    #[test]
    fn quantiles_invert_linear_density() {
        let g = Grid::line(0.0, 1.0, 11).unwrap();
        let mu = GridDensity::from_fn(g, |x| 2.0 * x[0]).unwrap();
        let q = quantiles(&mu).unwrap();
        for (l, v) in q.levels().iter().zip(q.values()) {
            assert!((v - l.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn w2_examples() {
        let g = Grid::line(0.0, 2.0, 2049).unwrap();
        let a = box_density(&g, 0.0, 1.0);
        assert_eq!(w2_1d(&a, &a).unwrap(), 0.0);
        let b = box_density(&g, 0.2, 1.2);
        assert!((w2_1d(&a, &b).unwrap() - 0.2).abs() < 1e-3);
        let c = box_density(&g, 0.0, 0.5);
        let want = 1.0 / (2.0 * 3f64.sqrt());
        assert!((w2_1d(&a, &c).unwrap() - want).abs() < 1e-3);
    }

    #[test]
    fn w1_examples() {
        let g = Grid::line(0.0, 2.0, 2049).unwrap();
        let a = box_density(&g, 0.0, 1.0);
        assert_eq!(w1_1d(&a, &a).unwrap(), 0.0);
        let b = box_density(&g, 0.3, 1.3);
        assert!((w1_1d(&a, &b).unwrap() - 0.3).abs() < 1e-3);
        let c = box_density(&g, 0.0, 0.5);
        assert!((w1_1d(&a, &c).unwrap() - 0.25).abs() < 1e-3);
    }

    #[test]
    fn w1_matches_quantile_form() {
        let g = Grid::line(0.0, 1.0, 257).unwrap();
        let a = GridDensity::from_fn(g.clone(), |x| (-(x[0] - 0.3).powi(2) / 0.01).exp()).unwrap();
        let b = GridDensity::from_fn(g.clone(), |x| 1.0 + x[0]).unwrap();
        let direct = w1_1d(&a, &b).unwrap();
        let via_q = w1_to_quantiles(&a, &quantiles(&b).unwrap()).unwrap();
        assert!((direct - via_q).abs() < 1e-4, "{direct} {via_q}");
    }

    #[test]
    fn barycenter_of_translates() {
        let g = Grid::line(0.0, 1.0, 513).unwrap();
        let bump = |c: f64| {
            GridDensity::from_fn(g.clone(), move |x| (-(x[0] - c).powi(2) / 0.005).exp()).unwrap()
        };
        let prob = BarycenterProblem::uniform(vec![bump(0.3), bump(0.6)]).unwrap();
        let bar = barycenter_1d_oracle(&prob).unwrap();
        assert!(w1_1d(&bar, &bump(0.45)).unwrap() < 2.0 * g.spacing(0));
        let e = barycenter_functional_oracle(&prob).unwrap();
        assert!((e - 0.3f64.powi(2) / 8.0).abs() < 1e-6, "{e}");

        let same = BarycenterProblem::uniform(vec![bump(0.4), bump(0.4), bump(0.4)]).unwrap();
        assert!(barycenter_functional_oracle(&same).unwrap() < 1e-20);
        assert!(w1_1d(&barycenter_1d_oracle(&same).unwrap(), &bump(0.4)).unwrap() < 1e-3);

        let three = BarycenterProblem::uniform(vec![bump(0.3), bump(0.5), bump(0.7)]).unwrap();
        let want = 0.5 * (0.2f64.powi(2) * 2.0) / 3.0;
        assert!((barycenter_functional_oracle(&three).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn location_scatter_examples() {
        let g = Grid::line(-1.0, 1.0, 1025).unwrap();
        let reference =
            GridDensity::from_fn(g.clone(), |x| (-(x[0] * x[0]) / (2.0 * 0.05f64.powi(2))).exp())
                .unwrap();
        let id = location_scatter_oracle(&reference, &[(1.0, 0.0), (1.0, 0.0)], &[0.5, 0.5]).unwrap();
        assert!(w1_1d(&id, &reference).unwrap() < 2.0 * g.spacing(0));

        let scaled = location_scatter_oracle(&reference, &[(1.0, 0.0), (3.0, 0.0)], &[0.5, 0.5]).unwrap();
        let two = affine_pushforward(&reference, 2.0, 0.0).unwrap();
        assert!(w1_1d(&scaled, &two).unwrap() < 1e-9);
        let members: Vec<_> = [1.0, 3.0]
            .iter()
            .map(|a| affine_pushforward(&reference, *a, 0.0).unwrap())
            .collect();
        let prob = BarycenterProblem::uniform(members).unwrap();
        let oracle = barycenter_1d_oracle(&prob).unwrap();
        assert!(w1_1d(&oracle, &two).unwrap() < 2.0 * g.spacing(0));

        let shifted = location_scatter_oracle(&reference, &[(1.0, -0.2), (1.0, 0.4)], &[0.5, 0.5]).unwrap();
        assert!((shifted.mean(0) - 0.1).abs() < 1e-3);

        assert!(location_scatter_oracle(&reference, &[(0.0, 0.0)], &[1.0]).is_err());
    }

    #[test]
    fn rejects_two_dimensions() {
        let g = Grid::square(0.0, 1.0, 8).unwrap();
        let mu = GridDensity::uniform(g);
        assert!(matches!(w2_1d(&mu, &mu), Err(Error::UnsupportedDimension { .. })));
        assert!(matches!(w1_1d(&mu, &mu), Err(Error::UnsupportedDimension { .. })));
    }
}
