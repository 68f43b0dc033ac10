//! Ḣ¹ / Ḣ⁻¹ geometry on grids.
//!
//! The zero-Neumann Laplacian on a node-centred uniform grid is diagonalised
//! by the type-I discrete cosine transform, which is orthogonal under the
//! trapezoidal inner product. The inverse Laplacian divides cosine mode `k`
//! by its continuum eigenvalue `(πk/ℓ)²`, so pure cosine modes are inverted
//! exactly.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    integrate_values, Grid, GridFunction, GridPotential, SignedGridMeasure, ZERO_MASS_TOL,
};

/// Unnormalised DCT-I along one axis, computed through an FFT of the even
/// extension: `y_k = x_0 + (−1)^k x_{N−1} + 2 Σ_{n=1}^{N−2} x_n cos(πnk/(N−1))`.
struct Dct1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dct1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        Self {
            n,
            fft: planner.plan_fft_forward(2 * (n - 1)),
        }
    }

    fn apply(&self, data: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let n = self.n;
        let m = 2 * (n - 1);
        buf.clear();
        buf.extend(data.iter().map(|&x| Complex::new(x, 0.0)));
        buf.extend(data[1..n - 1].iter().rev().map(|&x| Complex::new(x, 0.0)));
        debug_assert_eq!(buf.len(), m);
        self.fft.process(buf);
        for (k, d) in data.iter_mut().enumerate() {
            *d = buf[k].re;
        }
    }
}

/// Spectral solver for `−Δφ = g` with zero Neumann data and `∫φ = 0`.
pub struct PoissonSolver {
    grid: Grid,
    dcts: Vec<Dct1>,
    /// Continuum eigenvalues per axis.
    eig: Vec<Vec<f64>>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver").field("grid", &self.grid).finish()
    }
}

impl PoissonSolver {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let dcts = grid
            .sizes()
            .iter()
            .map(|&n| Dct1::new(n, &mut planner))
            .collect();
        let eig = (0..grid.dim())
            .map(|a| {
                let ell = grid.extent(a);
                (0..grid.sizes()[a])
                    .map(|k| (std::f64::consts::PI * k as f64 / ell).powi(2))
                    .collect()
            })
            .collect();
        Self {
            grid: grid.clone(),
            dcts,
            eig,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [f64]) {
        let mut buf = Vec::new();
        let sizes = self.grid.sizes();
        if self.grid.dim() == 1 {
            self.dcts[0].apply(data, &mut buf);
            return;
        }
        let (n0, n1) = (sizes[0], sizes[1]);
        for row in data.chunks_mut(n1) {
            self.dcts[1].apply(row, &mut buf);
        }
        let mut col = vec![0.0; n0];
        for j in 0..n1 {
            for i in 0..n0 {
                col[i] = data[i * n1 + j];
            }
            self.dcts[0].apply(&mut col, &mut buf);
            for i in 0..n0 {
                data[i * n1 + j] = col[i];
            }
        }
    }

    /// Solves on raw nodal values; the mean of `g` is projected out first.
    pub fn solve_values(&self, g: &[f64]) -> Vec<f64> {
        let mut data = g.to_vec();
        self.transform(&mut data);
        let sizes = self.grid.sizes();
        let norm: f64 = sizes.iter().map(|&n| 2.0 * (n - 1) as f64).product();
        if self.grid.dim() == 1 {
            data[0] = 0.0;
            for k in 1..sizes[0] {
                data[k] /= self.eig[0][k] * norm;
            }
        } else {
            let n1 = sizes[1];
            for (idx, d) in data.iter_mut().enumerate() {
                let (i, j) = (idx / n1, idx % n1);
                let lam = self.eig[0][i] + self.eig[1][j];
                *d = if lam == 0.0 { 0.0 } else { *d / (lam * norm) };
            }
        }
        self.transform(&mut data);
        data
    }

    /// `(−Δ)⁻¹ g` for a zero-mass signed measure.
    pub fn solve(&self, g: &SignedGridMeasure) -> Result<GridPotential> {
        self.grid.ensure_same(g.grid())?;
        GridPotential::new(self.grid.clone(), self.solve_values(g.values()))
    }

    /// `‖g‖_{Ḣ⁻¹}` on raw values, i.e. `(∫ g (−Δ)⁻¹g)^{1/2}`.
    pub fn hneg1_norm_values(&self, g: &[f64]) -> f64 {
        let phi = self.solve_values(g);
        let pairing: f64 = self
            .grid
            .weights()
            .iter()
            .zip(g.iter().zip(&phi))
            .map(|(w, (a, b))| w * a * b)
            .sum();
        pairing.max(0.0).sqrt()
    }
}

fn check_zero_mass(grid: &Grid, values: &[f64]) -> Result<()> {
    let mass = integrate_values(grid, values);
    let tv: f64 = grid
        .weights()
        .iter()
        .zip(values)
        .map(|(w, v)| w * v.abs())
        .sum();
    if mass.abs() > ZERO_MASS_TOL * tv.max(1.0) {
        return Err(Error::NonzeroMass { mass });
    }
    Ok(())
}

/// Solves `−Δφ = g`, `∂φ/∂n = 0`, `∫φ = 0`.
pub fn neumann_inverse_laplacian(g: &SignedGridMeasure) -> Result<GridPotential> {
    check_zero_mass(g.grid(), g.values())?;
    PoissonSolver::new(g.grid()).solve(g)
}

/// Ḣ⁻¹ norm `‖∇(−Δ)⁻¹g‖_{L²}` of a zero-mass grid function.
pub fn hneg1_norm(g: &SignedGridMeasure) -> Result<f64> {
    check_zero_mass(g.grid(), g.values())?;
    Ok(PoissonSolver::new(g.grid()).hneg1_norm_values(g.values()))
}

/// Central differences in the interior, one-sided at the boundary.
pub fn gradient(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let sizes = grid.sizes();
    let n = sizes[axis];
    let h = grid.spacing(axis);
    let stride = if grid.dim() == 2 && axis == 0 { sizes[1] } else { 1 };
    (0..grid.len())
        .map(|k| {
            let i = grid.multi_index(k)[axis];
            if i == 0 {
                (f[k + stride] - f[k]) / h
            } else if i + 1 == n {
                (f[k] - f[k - stride]) / h
            } else {
                (f[k + stride] - f[k - stride]) / (2.0 * h)
            }
        })
        .collect()
}

/// `⟨f, g⟩_{Ḣ¹} = ∫ ∇f·∇g` on raw values.
pub fn hdot1_inner_values(grid: &Grid, f: &[f64], g: &[f64]) -> f64 {
    let w = grid.weights();
    (0..grid.dim())
        .map(|a| {
            let df = gradient(grid, f, a);
            let dg = gradient(grid, g, a);
            w.iter()
                .zip(df.iter().zip(&dg))
                .map(|(w, (x, y))| w * x * y)
                .sum::<f64>()
        })
        .sum()
}

pub fn hdot1_inner(f: &GridPotential, g: &GridPotential) -> Result<f64> {
    f.grid().ensure_same(g.grid())?;
    Ok(hdot1_inner_values(f.grid(), f.values(), g.values()))
}

/// Which component norm [`product_norm`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    /// Ḣ¹ seminorm of potentials.
    Primal,
    /// Ḣ⁻¹ norm of zero-mass measures.
    Dual,
}

/// An element of the weighted product space (m−1 components on one grid).
#[derive(Clone, Debug, PartialEq)]
pub struct ProductTangent {
    grid: Grid,
    components: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ProductTangent {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if components.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::InvalidArgument(format!("weight {w} is not positive")));
        }
        if components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch("component length differs from grid".into()));
        }
        Ok(Self {
            grid,
            components,
            weights,
        })
    }

    /// Builds from potentials, checking that they share one grid.
    pub fn from_potentials(parts: &[GridPotential], weights: Vec<f64>) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no components".into()))?
            .grid()
            .clone();
        for p in parts {
            grid.ensure_same(p.grid())?;
        }
        let comps = parts.iter().map(|p| p.values().to_vec()).collect();
        Self::new(grid, comps, weights)
    }

    /// Builds from signed measures, checking that they share one grid.
    pub fn from_measures(parts: &[SignedGridMeasure], weights: Vec<f64>) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no components".into()))?
            .grid()
            .clone();
        for p in parts {
            grid.ensure_same(p.grid())?;
        }
        let comps = parts.iter().map(|p| p.values().to_vec()).collect();
        Self::new(grid, comps, weights)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `(Σ ω_i ‖t_i‖²)^{1/2}` with the Ḣ¹ or Ḣ⁻¹ component norm.
pub fn product_norm(t: &ProductTangent, mode: NormMode) -> Result<f64> {
    let solver = match mode {
        NormMode::Dual => Some(PoissonSolver::new(&t.grid)),
        NormMode::Primal => None,
    };
    let mut acc = 0.0;
    for (c, w) in t.components.iter().zip(&t.weights) {
        let sq = match &solver {
            Some(s) => {
                check_zero_mass(&t.grid, c)?;
                s.hneg1_norm_values(c).powi(2)
            }
            None => hdot1_inner_values(&t.grid, c, c),
        };
        acc += w * sq;
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cos_measure(grid: &Grid, k: f64) -> SignedGridMeasure {
        let v = grid.tabulate(|x| (k * PI * x[0]).cos());
        SignedGridMeasure::new(grid.clone(), v).unwrap()
    }

    #[test]
    fn dct_matches_direct_sum() {
        let n = 9;
        let mut planner = FftPlanner::new();
        let dct = Dct1::new(n, &mut planner);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect();
        let mut y = x.clone();
        dct.apply(&mut y, &mut Vec::new());
        for k in 0..n {
            let mut s = x[0] + if k % 2 == 0 { x[n - 1] } else { -x[n - 1] };
            for (i, xi) in x.iter().enumerate().take(n - 1).skip(1) {
                s += 2.0 * xi * (PI * (i * k) as f64 / (n - 1) as f64).cos();
            }
            assert!((s - y[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_laplacian_of_cosines() {
        let g = Grid::line(0.0, 1.0, 256).unwrap();
        for k in [1.0, 2.0] {
            let phi = neumann_inverse_laplacian(&cos_measure(&g, k)).unwrap();
            let expect = g.tabulate(|x| (k * PI * x[0]).cos() / (k * k * PI * PI));
            let err = phi
                .values()
                .iter()
                .zip(&expect)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-4, "k={k} err={err}");
        }
    }

    #[test]
    fn inverse_laplacian_tensor_mode() {
        let g = Grid::square(0.0, 1.0, 64).unwrap();
        let v = g.tabulate(|x| (PI * x[0]).cos() * (PI * x[1]).cos());
        let phi =
            neumann_inverse_laplacian(&SignedGridMeasure::new(g.clone(), v.clone()).unwrap())
                .unwrap();
        for (p, gv) in phi.values().iter().zip(&v) {
            assert!((p - gv / (2.0 * PI * PI)).abs() < 1e-3);
        }
    }

    #[test]
    fn inverse_laplacian_rejects_mass() {
        let g = Grid::line(0.0, 1.0, 32).unwrap();
        let bad = vec![1.0; 32];
        assert!(matches!(
            check_zero_mass(&g, &bad),
            Err(Error::NonzeroMass { .. })
        ));
    }

    #[test]
    fn hneg1_examples() {
        let g = Grid::line(0.0, 1.0, 256).unwrap();
        let n1 = hneg1_norm(&cos_measure(&g, 1.0)).unwrap();
        assert!((n1 - 1.0 / (PI * 2f64.sqrt())).abs() < 1e-3);
        let n2 = hneg1_norm(&cos_measure(&g, 2.0)).unwrap();
        assert!((n2 - 1.0 / (2.0 * PI * 2f64.sqrt())).abs() < 1e-3);
        assert_eq!(hneg1_norm(&SignedGridMeasure::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn hdot1_examples() {
        let g = Grid::line(0.0, 1.0, 256).unwrap();
        let x = GridPotential::from_fn(g.clone(), |x| x[0]).unwrap();
        assert!((hdot1_inner(&x, &x).unwrap() - 1.0).abs() < 1e-10);
        let c1 = GridPotential::from_fn(g.clone(), |x| (PI * x[0]).cos()).unwrap();
        let c2 = GridPotential::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        assert!(hdot1_inner(&c1, &c2).unwrap().abs() < 1e-6);
        assert!((hdot1_inner(&c1, &c1).unwrap() - PI * PI / 2.0).abs() < 1e-2);
    }

    #[test]
    fn product_norm_examples() {
        let g = Grid::line(0.0, 1.0, 256).unwrap();
        let x = GridPotential::from_fn(g.clone(), |x| x[0]).unwrap();
        let z = GridPotential::zeros(g.clone());
        let t = ProductTangent::from_potentials(&[x.clone(), x.clone()], vec![0.5, 0.5]).unwrap();
        assert!((product_norm(&t, NormMode::Primal).unwrap() - 1.0).abs() < 1e-10);
        let t = ProductTangent::from_potentials(&[z, x], vec![0.3, 0.7]).unwrap();
        assert!((product_norm(&t, NormMode::Primal).unwrap() - 0.7f64.sqrt()).abs() < 1e-10);

        // Independent oracle: composite Simpson quadrature of the analytic
        // gradients −π sin(πx) and −2π sin(2πx) on a fine mesh.
        let simpson = |f: &dyn Fn(f64) -> f64| {
            let n = 20_000;
            let h = 1.0 / n as f64;
            let mut s = f(0.0) + f(1.0);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let e1 = simpson(&|x| (PI * (PI * x).sin()).powi(2));
        let e2 = simpson(&|x| (2.0 * PI * (2.0 * PI * x).sin()).powi(2));
        let oracle = (0.5 * e1 + 0.5 * e2).sqrt();
        let c1 = GridPotential::from_fn(g.clone(), |x| (PI * x[0]).cos()).unwrap();
        let c2 = GridPotential::from_fn(g.clone(), |x| (2.0 * PI * x[0]).cos()).unwrap();
        let t = ProductTangent::from_potentials(&[c1, c2], vec![0.5, 0.5]).unwrap();
        let got = product_norm(&t, NormMode::Primal).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-3, "{got} vs {oracle}");

        let other = GridPotential::zeros(Grid::line(0.0, 1.0, 128).unwrap());
        let z = GridPotential::zeros(g);
        assert!(ProductTangent::from_potentials(&[z, other], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn dual_mode_product_norm() {
        let g = Grid::line(0.0, 1.0, 256).unwrap();
        let c = cos_measure(&g, 1.0);
        let t = ProductTangent::from_measures(&[c.clone(), c], vec![0.5, 0.5]).unwrap();
        let n = product_norm(&t, NormMode::Dual).unwrap();
        assert!((n - 1.0 / (PI * 2f64.sqrt())).abs() < 1e-3);
    }
}
