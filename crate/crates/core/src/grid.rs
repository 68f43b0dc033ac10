//! Uniform box grids over Ω ⊂ ℝ^d (d = 1, 2), grid functions, sampling and
//! pushforward by mass deposition.
//!
//! Nodes are stored row-major: in two dimensions node `(i, j)` lives at
//! `i * sizes[1] + j`. All quadrature is the (tensor) trapezoidal rule, which
//! integrates the multilinear interpolant of the nodal values exactly, so a
//! [`GridDensity`] is identified with that interpolant wherever a continuous
//! density is needed (sampling, quantiles).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-mass invariant of [`GridDensity`].
pub const MASS_TOL: f64 = 1e-10;
/// Tolerance on the zero-mass invariant of [`SignedGridMeasure`].
pub const ZERO_MASS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GridDef {
    bounds: Vec<(f64, f64)>,
    sizes: Vec<usize>,
}

/// Axis-aligned uniform grid on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDef", into = "GridDef")]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    sizes: Vec<usize>,
}

impl TryFrom<GridDef> for Grid {
    type Error = Error;

    fn try_from(def: GridDef) -> Result<Self> {
        Grid::new(&def.bounds, &def.sizes)
    }
}

impl From<Grid> for GridDef {
    fn from(g: Grid) -> Self {
        GridDef {
            bounds: g.lo.iter().copied().zip(g.hi.iter().copied()).collect(),
            sizes: g.sizes,
        }
    }
}

impl Grid {
    pub fn new(bounds: &[(f64, f64)], sizes: &[usize]) -> Result<Self> {
        let dim = bounds.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension { dim, what: "grid" });
        }
        if sizes.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} bounds but {} sizes",
                dim,
                sizes.len()
            )));
        }
        for (axis, (&(lo, hi), &n)) in bounds.iter().zip(sizes).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: need finite lo < hi, got ({lo}, {hi})"
                )));
            }
            if n < 4 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: need at least 4 nodes, got {n}"
                )));
            }
        }
        Ok(Self {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
            sizes: sizes.to_vec(),
        })
    }

    /// One-dimensional grid on `[lo, hi]` with `n` nodes.
    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(&[(lo, hi)], &[n])
    }

    /// Square grid `[lo, hi]²` with `n × n` nodes.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(&[(lo, hi), (lo, hi)], &[n, n])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent(axis) / (self.sizes[axis] - 1) as f64
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.spacing(a))
            .fold(0.0, f64::max)
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    /// Squared diameter of the box.
    pub fn diameter_sq(&self) -> f64 {
        (0..self.dim()).map(|a| self.extent(a).powi(2)).sum()
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        (0..self.sizes[axis])
            .map(|i| self.lo[axis] + i as f64 * h)
            .collect()
    }

    /// Multi-index of flat node `k` (second entry is 0 in one dimension).
    pub fn multi_index(&self, k: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [k, 0]
        } else {
            [k / self.sizes[1], k % self.sizes[1]]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] * self.sizes[1] + idx[1]
        }
    }

    /// Coordinates of node `k` (unused trailing entries are 0).
    pub fn point(&self, k: usize) -> [f64; 2] {
        let idx = self.multi_index(k);
        let mut p = [0.0; 2];
        for (axis, slot) in p.iter_mut().enumerate().take(self.dim()) {
            *slot = self.lo[axis] + idx[axis] as f64 * self.spacing(axis);
        }
        p
    }

    fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing(axis);
        if i == 0 || i + 1 == self.sizes[axis] {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoidal quadrature weights, one per node.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let idx = self.multi_index(k);
                (0..self.dim()).map(|a| self.axis_weight(a, idx[a])).product()
            })
            .collect()
    }

    /// `‖x‖²` at every node.
    pub fn sq_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let p = self.point(k);
                p[0] * p[0] + p[1] * p[1]
            })
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .enumerate()
            .all(|(a, &x)| x >= self.lo[a] && x <= self.hi[a])
    }

    /// Evaluates `f` at every node.
    pub fn tabulate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let p = self.point(k);
                f(&p[..self.dim()])
            })
            .collect()
    }

    /// Multilinear interpolation of nodal `values` at `p` (clamped to the box).
    pub fn interpolate(&self, values: &[f64], p: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_stencil(p, |k, w| acc += w * values[k]);
        acc
    }

    /// Calls `visit(node, weight)` for the multilinear stencil of `p`.
    pub(crate) fn for_each_stencil(&self, p: &[f64], mut visit: impl FnMut(usize, f64)) {
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for axis in 0..self.dim() {
            let h = self.spacing(axis);
            let n = self.sizes[axis];
            let x = p[axis].clamp(self.lo[axis], self.hi[axis]);
            let s = (x - self.lo[axis]) / h;
            let i = (s.floor() as usize).min(n - 2);
            base[axis] = i;
            frac[axis] = (s - i as f64).clamp(0.0, 1.0);
        }
        if self.dim() == 1 {
            let t = frac[0];
            if t < 1.0 {
                visit(base[0], 1.0 - t);
            }
            if t > 0.0 {
                visit(base[0] + 1, t);
            }
        } else {
            let n1 = self.sizes[1];
            for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
                if wi == 0.0 {
                    continue;
                }
                for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                    if wj == 0.0 {
                        continue;
                    }
                    visit((base[0] + di) * n1 + base[1] + dj, wi * wj);
                }
            }
        }
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Trapezoidal integral of raw nodal values.
pub fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    let w = grid.weights();
    w.iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Anything that is a function sampled on a [`Grid`].
pub trait GridFunction {
    fn grid(&self) -> &Grid;
    fn values(&self) -> &[f64];
}

/// Trapezoidal-rule integral over Ω.
pub fn integrate<F: GridFunction + ?Sized>(f: &F) -> f64 {
    integrate_values(f.grid(), f.values())
}

macro_rules! grid_function {
    ($t:ty) => {
        impl GridFunction for $t {
            fn grid(&self) -> &Grid {
                &self.grid
            }
            fn values(&self) -> &[f64] {
                &self.values
            }
        }
    };
}

/// Nonnegative grid function with unit trapezoidal mass.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
    bounds: Option<(f64, f64)>,
}
grid_function!(GridDensity);

impl GridDensity {
    /// Validates nonnegativity and unit mass (within [`MASS_TOL`]).
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("bad nodal value {v}")));
        }
        let mass = integrate_values(&grid, &values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!("mass {mass} != 1")));
        }
        Ok(Self {
            grid,
            values,
            bounds: None,
        })
    }

    /// Clips negatives to zero and rescales to unit mass.
    pub fn normalized(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::InvalidDensity("non-finite nodal value".into()));
            }
            *v = v.max(0.0);
        }
        let mass = integrate_values(&grid, &values);
        if mass <= 0.0 {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self {
            grid,
            values,
            bounds: None,
        })
    }

    /// Density proportional to `f` on the grid.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.tabulate(f);
        Self::normalized(grid, values)
    }

    pub fn uniform(grid: Grid) -> Self {
        let v = 1.0 / grid.volume();
        let values = vec![v; grid.len()];
        Self {
            grid,
            values,
            bounds: None,
        }
    }

    /// Builds a density from per-node masses (mass / trapezoid weight).
    pub fn from_masses(grid: Grid, masses: &[f64]) -> Result<Self> {
        check_len(&grid, masses)?;
        let w = grid.weights();
        let values = masses.iter().zip(&w).map(|(m, w)| m / w).collect();
        Self::normalized(grid, values)
    }

    /// Known density bounds `(L, U)`, when carried.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.bounds = Some((lower, upper));
        self
    }

    /// Per-node masses `w_k μ_k`.
    pub fn masses(&self) -> Vec<f64> {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// First moment along `axis`.
    pub fn mean(&self, axis: usize) -> f64 {
        let vals: Vec<f64> = (0..self.grid.len())
            .map(|k| self.grid.point(k)[axis] * self.values[k])
            .collect();
        integrate_values(&self.grid, &vals)
    }

    /// `self − other` as a zero-mass signed measure.
    pub fn difference(&self, other: &GridDensity) -> Result<SignedGridMeasure> {
        self.grid.ensure_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        SignedGridMeasure::new(self.grid.clone(), values)
    }

    /// L¹ distance between two densities on one grid.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(integrate_values(&self.grid, &diff))
    }
}

/// Real-valued grid function (dual potentials, Brenier potentials, conjugates).
#[derive(Clone, Debug, PartialEq)]
pub struct GridPotential {
    grid: Grid,
    values: Vec<f64>,
}
grid_function!(GridPotential);

impl GridPotential {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite potential value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.tabulate(f);
        Self::new(grid, values)
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute nodal difference.
    pub fn sup_distance(&self, other: &GridPotential) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Grid function with zero trapezoidal mass.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedGridMeasure {
    grid: Grid,
    values: Vec<f64>,
}
grid_function!(SignedGridMeasure);

impl SignedGridMeasure {
    /// Validates the zero-mass invariant within [`ZERO_MASS_TOL`] (scaled by
    /// the total variation when it exceeds one).
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        let mass = integrate_values(&grid, &values);
        let tv: f64 = grid
            .weights()
            .iter()
            .zip(&values)
            .map(|(w, v)| w * v.abs())
            .sum();
        if !mass.is_finite() || mass.abs() > ZERO_MASS_TOL * tv.max(1.0) {
            return Err(Error::NonzeroMass { mass });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Removes the mean so the result has exactly zero trapezoidal mass.
    pub fn centered(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        let shift = integrate_values(&grid, &values) / grid.volume();
        values.iter_mut().for_each(|v| *v -= shift);
        Ok(Self { grid, values })
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_len(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// A discrete map: one image point in ℝ^d per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMap {
    grid: Grid,
    points: Vec<f64>,
}

impl PointMap {
    /// `points` is flat with stride `grid.dim()`.
    pub fn new(grid: Grid, points: Vec<f64>) -> Result<Self> {
        if points.len() != grid.len() * grid.dim() {
            return Err(Error::GridMismatch(format!(
                "{} coordinates for {} nodes in d={}",
                points.len(),
                grid.len(),
                grid.dim()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite map value".into()));
        }
        Ok(Self { grid, points })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> [f64; 2]) -> Result<Self> {
        let d = grid.dim();
        let mut points = Vec::with_capacity(grid.len() * d);
        for k in 0..grid.len() {
            let p = grid.point(k);
            points.extend_from_slice(&f(&p[..d])[..d]);
        }
        Self::new(grid, points)
    }

    pub fn identity(grid: Grid) -> Self {
        let d = grid.dim();
        let mut points = Vec::with_capacity(grid.len() * d);
        for k in 0..grid.len() {
            points.extend_from_slice(&grid.point(k)[..d]);
        }
        Self { grid, points }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn image(&self, k: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.points[k * d..(k + 1) * d]
    }
}

/// Result of a pushforward.
#[derive(Clone, Debug)]
pub struct Pushforward {
    pub density: GridDensity,
    /// Set when all mass landed on a single node.
    pub collapsed: bool,
}

/// Deposits `mass` at `p` onto `masses` with multilinear weights.
pub fn deposit(grid: &Grid, p: &[f64], mass: f64, masses: &mut [f64]) {
    grid.for_each_stencil(p, |k, w| masses[k] += w * mass);
}

/// `T♯μ` by forward mass deposition: each node's mass `w_k μ_k` is moved to
/// `T(x_k)` (clamped into Ω) and splatted onto the neighbouring nodes.
pub fn pushforward(map: &PointMap, mu: &GridDensity) -> Result<Pushforward> {
    map.grid.ensure_same(&mu.grid)?;
    let grid = &mu.grid;
    let src = mu.masses();
    let mut dst = vec![0.0; grid.len()];
    for (k, &m) in src.iter().enumerate() {
        if m != 0.0 {
            deposit(grid, map.image(k), m, &mut dst);
        }
    }
    let occupied = dst.iter().filter(|m| **m > 0.0).count();
    let density = GridDensity::from_masses(grid.clone(), &dst)?;
    Ok(Pushforward {
        density,
        collapsed: occupied <= 1,
    })
}

/// I.i.d. draws from one marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    source_id: usize,
}

impl SampleSet {
    /// `points` is flat with stride `grid.dim()`; every point must lie in the box.
    pub fn new(grid: &Grid, points: Vec<f64>, source_id: usize) -> Result<Self> {
        let dim = grid.dim();
        if !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates is not a multiple of d={dim}",
                points.len()
            )));
        }
        if let Some(bad) = points.chunks(dim).find(|p| !grid.contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "sample {bad:?} outside the grid box"
            )));
        }
        Ok(Self {
            dim,
            points,
            source_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_id(&self) -> usize {
        self.source_id
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// Empirical mean of `g` over the sample.
    pub fn empirical_mean(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        self.iter().map(g).sum::<f64>() / self.len() as f64
    }
}

/// `n` i.i.d. draws from `mu`, deterministic given `seed`.
pub fn sample(mu: &GridDensity, n: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with_rng(mu, n, 0, &mut rng)
}

/// Inverse-CDF sampling of the piecewise-linear interpolant in one
/// dimension, rejection against `sup μ` in two.
pub fn sample_with_rng<R: Rng + ?Sized>(
    mu: &GridDensity,
    n: usize,
    source_id: usize,
    rng: &mut R,
) -> SampleSet {
    let grid = &mu.grid;
    let mut points = Vec::with_capacity(n * grid.dim());
    if grid.dim() == 1 {
        let h = grid.spacing(0);
        let v = &mu.values;
        let mut cum = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 0..v.len() - 1 {
            acc += 0.5 * h * (v[i] + v[i + 1]);
            cum.push(acc);
        }
        let total = acc;
        for _ in 0..n {
            let u = rng.random::<f64>() * total;
            // cell i with cum[i] <= u < cum[i+1]
            let i = match cum.partition_point(|c| *c <= u) {
                0 => 0,
                p => (p - 1).min(v.len() - 2),
            };
            let r = (u - cum[i]).max(0.0);
            let (a, b) = (v[i], v[i + 1]);
            let disc = (a * a + 2.0 * (b - a) * r / h).max(0.0);
            let denom = a + disc.sqrt();
            let t = if denom > 0.0 { (2.0 * r / denom).min(h) } else { 0.5 * h };
            let x = (grid.lo(0) + i as f64 * h + t).min(grid.hi(0));
            points.push(x);
        }
    } else {
        let sup = mu.max_value();
        while points.len() < 2 * n {
            let p = [
                grid.lo(0) + rng.random::<f64>() * grid.extent(0),
                grid.lo(1) + rng.random::<f64>() * grid.extent(1),
            ];
            let u = rng.random::<f64>() * sup;
            if u < grid.interpolate(&mu.values, &p) {
                points.extend_from_slice(&p);
            }
        }
    }
    SampleSet {
        dim: grid.dim(),
        points,
        source_id,
    }
}
