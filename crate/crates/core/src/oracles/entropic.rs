//! Debiased entropic `W₂` between densities on one 2-D grid.
//!
//! Log-domain Sinkhorn with ε-scaling on the cost `‖x − y‖²`. The quadratic
//! cost separates across axes, so each soft-min is two 1-D log-sum-exp
//! passes.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity, GridFunction};

/// Settings for [`w2_entropic_2d`].
#[derive(Clone, Debug, PartialEq)]
pub struct EntropicOptions {
    /// Final regularisation; `None` uses `10⁻³ · diam²`.
    pub epsilon: Option<f64>,
    /// L¹ marginal violation at which iterations stop.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            tol: 1e-7,
            max_iter: 100_000,
        }
    }
}

const MAX_SIDE: usize = 64;

struct Kernel {
    n0: usize,
    n1: usize,
    c0: Vec<f64>,
    c1: Vec<f64>,
}

fn lse(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Kernel {
    fn new(grid: &Grid) -> Self {
        let (n0, n1) = (grid.sizes()[0], grid.sizes()[1]);
        let sq = |axis: usize, n: usize| {
            let x = grid.axis_coords(axis);
            let mut c = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    c[i * n + j] = (x[i] - x[j]).powi(2);
                }
            }
            c
        };
        Self {
            n0,
            n1,
            c0: sq(0, n0),
            c1: sq(1, n1),
        }
    }

    /// `out(x) = −ε log Σ_y exp((h(y) − ‖x − y‖²)/ε)` with `h = g + ε log ν`.
    fn softmin(&self, h: &[f64], eps: f64, tmp: &mut [f64], out: &mut [f64]) {
        let (n0, n1) = (self.n0, self.n1);
        for y0 in 0..n0 {
            let row = &h[y0 * n1..(y0 + 1) * n1];
            for x1 in 0..n1 {
                let c = &self.c1[x1 * n1..(x1 + 1) * n1];
                tmp[y0 * n1 + x1] = lse(row.iter().zip(c).map(|(v, c)| (v - c) / eps));
            }
        }
        for x0 in 0..n0 {
            let c = &self.c0[x0 * n0..(x0 + 1) * n0];
            for x1 in 0..n1 {
                let s = lse((0..n0).map(|y0| tmp[y0 * n1 + x1] - c[y0] / eps));
                out[x0 * n1 + x1] = -eps * s;
            }
        }
    }
}

/// `OT_ε(μ, ν) = ⟨f, μ⟩ + ⟨g, ν⟩` at the Sinkhorn fixed point.
fn sinkhorn(
    k: &Kernel,
    a: &[f64],
    b: &[f64],
    eps_final: f64,
    eps_start: f64,
    opts: &EntropicOptions,
) -> Result<f64> {
    let n = a.len();
    let (la, lb): (Vec<f64>, Vec<f64>) = (
        a.iter().map(|v| v.ln()).collect(),
        b.iter().map(|v| v.ln()).collect(),
    );
    let (mut f, mut g) = (vec![0.0; n], vec![0.0; n]);
    let (mut h, mut tmp, mut out) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut eps = eps_start.max(eps_final);
    let mut iters = 0;
    loop {
        let last = eps <= eps_final;
        loop {
            for i in 0..n {
                h[i] = g[i] + eps * lb[i];
            }
            k.softmin(&h, eps, &mut tmp, &mut f);
            for i in 0..n {
                h[i] = f[i] + eps * la[i];
            }
            k.softmin(&h, eps, &mut tmp, &mut g);
            iters += 1;
            // after the g-update the second marginal is exact; measure the first
            for i in 0..n {
                h[i] = g[i] + eps * lb[i];
            }
            k.softmin(&h, eps, &mut tmp, &mut out);
            let viol: f64 = (0..n)
                .filter(|&i| a[i] > 0.0)
                .map(|i| (a[i] * ((f[i] - out[i]) / eps).exp() - a[i]).abs())
                .sum();
            let stage_tol = if last { opts.tol } else { opts.tol.max(1e-3) };
            if viol <= stage_tol {
                break;
            }
            if iters >= opts.max_iter {
                return Err(Error::NoConvergence(format!(
                    "Sinkhorn marginal violation {viol:e} after {iters} iterations"
                )));
            }
        }
        if last {
            break;
        }
        eps = (eps * 0.5).max(eps_final);
    }
    let fa: f64 = (0..n).filter(|&i| a[i] > 0.0).map(|i| f[i] * a[i]).sum();
    let gb: f64 = (0..n).filter(|&i| b[i] > 0.0).map(|i| g[i] * b[i]).sum();
    Ok(fa + gb)
}

/// Debiased entropic estimate of `W₂(μ, ν)`:
/// `√(OT_ε(μ,ν) − ½OT_ε(μ,μ) − ½OT_ε(ν,ν))`. Bias is `O(ε log(1/ε))`.
pub fn w2_entropic_2d(mu: &GridDensity, nu: &GridDensity, opts: &EntropicOptions) -> Result<f64> {
    let grid = mu.grid();
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            dim: grid.dim(),
            what: "w2_entropic_2d",
        });
    }
    grid.ensure_same(nu.grid())?;
    if grid.sizes().iter().any(|&n| n > MAX_SIDE) {
        return Err(Error::SizeCap(format!("entropic grids are capped at {MAX_SIDE} per axis")));
    }
    let eps = opts.epsilon.unwrap_or(1e-3 * grid.diameter_sq());
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let k = Kernel::new(grid);
    let a = mu.masses();
    let b = nu.masses();
    let start = grid.diameter_sq();
    let ab = sinkhorn(&k, &a, &b, eps, start, opts)?;
    let aa = sinkhorn(&k, &a, &a, eps, start, opts)?;
    let bb = sinkhorn(&k, &b, &b, eps, start, opts)?;
    Ok((ab - 0.5 * aa - 0.5 * bb).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(g: &Grid, c: [f64; 2], s: f64) -> GridDensity {
        GridDensity::from_fn(g.clone(), |x| {
            let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            (-r2 / (2.0 * s * s)).exp()
        })
        .unwrap()
    }

    #[test]
    fn identical_measures_are_near_zero() {
        let g = Grid::square(0.0, 1.0, 24).unwrap();
        let mu = bump(&g, [0.5, 0.5], 0.1);
        let d = w2_entropic_2d(&mu, &mu, &EntropicOptions::default()).unwrap();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn translation_is_recovered() {
        let g = Grid::square(0.0, 1.0, 32).unwrap();
        let a = bump(&g, [0.35, 0.5], 0.07);
        let b = bump(&g, [0.6, 0.5], 0.07);
        let d = w2_entropic_2d(&a, &b, &EntropicOptions::default()).unwrap();
        assert!((d - 0.25).abs() < 0.02, "{d}");
    }
}
