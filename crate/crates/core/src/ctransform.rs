//! Legendre conjugates, c-transforms for the cost `½‖x − y‖²`, transport
//! maps, and certified generators for the class F_{α,β}.
//!
//! With `θ = ½‖·‖² − f` we have `f^c = ½‖·‖² − θ*` and
//! `T_{f^c} = ∇θ*`, the maximiser of `⟨x, y⟩ − θ(y)`. Conjugates are taken
//! over grid nodes with a linear-time lower-hull sweep per axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridPotential, PointMap};

/// One-dimensional discrete Legendre transform:
/// `val[j] = max_k s[j]·y[k] − theta[k]`, `arg[j]` the smallest maximiser.
///
/// `y` and `s` must be increasing.
pub(crate) fn legendre_1d(
    y: &[f64],
    theta: &[f64],
    s: &[f64],
    val: &mut [f64],
    arg: &mut [usize],
    hull: &mut Vec<usize>,
) {
    hull.clear();
    for k in 0..y.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b unless it lies strictly below the chord a–k
            if (theta[b] - theta[a]) * (y[k] - y[a]) >= (theta[k] - theta[a]) * (y[b] - y[a]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let mut j = 0;
    for (t, &sj) in s.iter().enumerate() {
        let mut cur = sj * y[hull[j]] - theta[hull[j]];
        while j + 1 < hull.len() {
            let next = sj * y[hull[j + 1]] - theta[hull[j + 1]];
            if next > cur {
                j += 1;
                cur = next;
            } else {
                break;
            }
        }
        val[t] = cur;
        arg[t] = hull[j];
    }
}

/// Reusable buffers for repeated conjugates on one grid.
#[derive(Clone, Debug)]
pub struct Legendre {
    grid: Grid,
    coords: Vec<Vec<f64>>,
    hull: Vec<usize>,
    line_in: Vec<f64>,
    line_val: Vec<f64>,
    line_arg: Vec<usize>,
    stage: Vec<f64>,
    stage_arg: Vec<usize>,
}

impl Legendre {
    pub fn new(grid: &Grid) -> Self {
        let coords = (0..grid.dim()).map(|a| grid.axis_coords(a)).collect();
        let longest = *grid.sizes().iter().max().unwrap_or(&0);
        Self {
            grid: grid.clone(),
            coords,
            hull: Vec::with_capacity(longest),
            line_in: vec![0.0; longest],
            line_val: vec![0.0; longest],
            line_arg: vec![0; longest],
            stage: vec![0.0; grid.len()],
            stage_arg: vec![0; grid.len()],
        }
    }

    /// `θ*(x) = max_y ⟨x, y⟩ − θ(y)` over grid nodes, with the flat index of
    /// the (lexicographically smallest) maximiser.
    pub fn conjugate(&mut self, theta: &[f64], val: &mut [f64], arg: &mut [usize]) {
        if self.grid.dim() == 1 {
            let c = &self.coords[0];
            legendre_1d(c, theta, c, val, arg, &mut self.hull);
            return;
        }
        let (n0, n1) = (self.grid.sizes()[0], self.grid.sizes()[1]);
        let (c0, c1) = (&self.coords[0], &self.coords[1]);
        // inner axis: g(y1, x2) = max_{y2} x2·y2 − θ(y1, y2)
        for i in 0..n0 {
            let row = i * n1..(i + 1) * n1;
            legendre_1d(
                c1,
                &theta[row.clone()],
                c1,
                &mut self.stage[row.clone()],
                &mut self.stage_arg[row],
                &mut self.hull,
            );
        }
        // outer axis: θ*(x1, x2) = max_{y1} x1·y1 + g(y1, x2)
        for j in 0..n1 {
            for i in 0..n0 {
                self.line_in[i] = -self.stage[i * n1 + j];
            }
            legendre_1d(
                c0,
                &self.line_in[..n0],
                c0,
                &mut self.line_val[..n0],
                &mut self.line_arg[..n0],
                &mut self.hull,
            );
            for i in 0..n0 {
                let y1 = self.line_arg[i];
                val[i * n1 + j] = self.line_val[i];
                arg[i * n1 + j] = y1 * n1 + self.stage_arg[y1 * n1 + j];
            }
        }
    }
}

/// A conjugate together with its argmax index map.
#[derive(Clone, Debug)]
pub struct Conjugate {
    pub values: GridPotential,
    pub argmax: Vec<usize>,
}

/// Discrete Legendre conjugate `θ*(x) = max_{y ∈ grid} ⟨x, y⟩ − θ(y)`.
pub fn legendre_conjugate(theta: &GridPotential) -> Conjugate {
    let grid = theta.grid();
    let mut val = vec![0.0; grid.len()];
    let mut arg = vec![0; grid.len()];
    Legendre::new(grid).conjugate(theta.values(), &mut val, &mut arg);
    Conjugate {
        values: GridPotential::new(grid.clone(), val).expect("finite conjugate"),
        argmax: arg,
    }
}

/// `θ = ½‖·‖² − f`.
pub fn brenier_from_dual(f: &GridPotential) -> GridPotential {
    let grid = f.grid();
    let vals = grid
        .sq_norms()
        .iter()
        .zip(f.values())
        .map(|(q, v)| 0.5 * q - v)
        .collect();
    GridPotential::new(grid.clone(), vals).expect("finite input")
}

/// c-transform with its minimiser map.
#[derive(Clone, Debug)]
pub struct CTransform {
    pub values: GridPotential,
    /// Flat node index of `T_{f^c}(x_k)`.
    pub argmin: Vec<usize>,
}

/// `f^c(x) = min_y ½‖x − y‖² − f(y)`, computed as `½‖x‖² − θ*(x)`.
pub fn c_transform_with_map(f: &GridPotential) -> CTransform {
    let grid = f.grid();
    let conj = legendre_conjugate(&brenier_from_dual(f));
    let vals = grid
        .sq_norms()
        .iter()
        .zip(conj.values.values())
        .map(|(q, t)| 0.5 * q - t)
        .collect();
    CTransform {
        values: GridPotential::new(grid.clone(), vals).expect("finite"),
        argmin: conj.argmax,
    }
}

pub fn c_transform(f: &GridPotential) -> GridPotential {
    c_transform_with_map(f).values
}

/// `T_{f^c} = ∇θ*`, read off the argmax nodes of the conjugate.
pub fn transport_map(f: &GridPotential) -> PointMap {
    let ct = c_transform_with_map(f);
    index_map_to_points(f.grid(), &ct.argmin)
}

pub(crate) fn index_map_to_points(grid: &Grid, idx: &[usize]) -> PointMap {
    let d = grid.dim();
    let mut pts = Vec::with_capacity(grid.len() * d);
    for &k in idx {
        pts.extend_from_slice(&grid.point(k)[..d]);
    }
    PointMap::new(grid.clone(), pts).expect("grid nodes are finite")
}

/// Curvature band `0 < α ≤ β < ∞` of F_{α,β}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialClassParams {
    pub alpha: f64,
    pub beta: f64,
}

impl PotentialClassParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta >= alpha && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < alpha <= beta < inf, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// `a · Π_i cos(ω_i x_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineBump {
    pub amplitude: f64,
    pub frequencies: Vec<f64>,
}

impl CosineBump {
    fn value(&self, x: &[f64]) -> f64 {
        self.amplitude
            * x.iter()
                .zip(&self.frequencies)
                .map(|(x, w)| (w * x).cos())
                .product::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            let mut g = -self.amplitude * self.frequencies[a] * (self.frequencies[a] * x[a]).sin();
            for (b, (xb, wb)) in x.iter().zip(&self.frequencies).enumerate() {
                if b != a {
                    g *= (wb * xb).cos();
                }
            }
            *o += g;
        }
    }

    /// Spectral-norm bound `|a| Σ ω_i²` on the Hessian.
    fn hessian_bound(&self) -> f64 {
        self.amplitude.abs() * self.frequencies.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Quadratic-plus-bump dual potential
/// `f(x) = (1 − c)‖x‖²/2 + ⟨b, x⟩ + Σ bumps`, so that
/// `φ = ½‖·‖² − f = c‖x‖²/2 − ⟨b, x⟩ − Σ bumps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabSpec {
    pub curvature: f64,
    pub shift: Vec<f64>,
    #[serde(default)]
    pub bumps: Vec<CosineBump>,
}

impl FabSpec {
    pub fn quadratic(curvature: f64, shift: Vec<f64>) -> Self {
        Self {
            curvature,
            shift,
            bumps: Vec::new(),
        }
    }

    /// Certified `[λ_min, λ_max]` enclosing the Hessian of φ.
    pub fn curvature_band(&self) -> (f64, f64) {
        let spread: f64 = self.bumps.iter().map(CosineBump::hessian_bound).sum();
        (self.curvature - spread, self.curvature + spread)
    }

    pub fn dual_value(&self, x: &[f64]) -> f64 {
        let q: f64 = x.iter().map(|v| v * v).sum();
        let lin: f64 = x.iter().zip(&self.shift).map(|(x, b)| x * b).sum();
        0.5 * (1.0 - self.curvature) * q + lin + self.bumps.iter().map(|b| b.value(x)).sum::<f64>()
    }

    /// `∇φ(x) = c x − b − Σ ∇bumps`.
    pub fn brenier_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut bump = vec![0.0; x.len()];
        for b in &self.bumps {
            b.gradient(x, &mut bump);
        }
        x.iter()
            .zip(&self.shift)
            .zip(&bump)
            .map(|((x, s), g)| self.curvature * x - s - g)
            .collect()
    }

    fn check_dims(&self, d: usize) -> Result<()> {
        if self.shift.len() != d || self.bumps.iter().any(|b| b.frequencies.len() != d) {
            return Err(Error::InvalidArgument(format!(
                "potential spec does not match dimension {d}"
            )));
        }
        Ok(())
    }
}

/// Tabulates a potential certified (analytically) to lie in F_{α,β}.
pub fn make_fab_potential(
    params: &PotentialClassParams,
    spec: &FabSpec,
    grid: &Grid,
) -> Result<GridPotential> {
    spec.check_dims(grid.dim())?;
    let (lo, hi) = spec.curvature_band();
    if lo < params.alpha - 1e-12 || hi > params.beta + 1e-12 {
        return Err(Error::OutsideClass(format!(
            "Hessian band [{lo}, {hi}] not inside [{}, {}]",
            params.alpha, params.beta
        )));
    }
    GridPotential::from_fn(grid.clone(), |x| spec.dual_value(x))
}

/// Outcome of a conjugate-curvature check.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub min_curvature: f64,
    pub max_curvature: f64,
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    pub nodes_checked: usize,
    pub pass: bool,
}

/// Checks that second differences of `φ*` lie in `[1/β − tol, 1/α + tol]`.
///
/// Second differences use a stencil of `⌈√N / 2⌉` nodes, which keeps the
/// `O(h²)` grid-maximisation error of `φ*` below the band tolerance. Only
/// nodes whose stencil maximisers stay off the boundary are checked; elsewhere
/// `φ*` is affine because the maximiser is clamped to Ω.
pub fn verify_conjugate_curvature(
    phi: &GridPotential,
    params: &PotentialClassParams,
    tol: f64,
) -> CurvatureReport {
    let grid = phi.grid();
    let conj = legendre_conjugate(phi);
    let v = conj.values.values();
    let (mut lo, mut hi, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    let on_boundary = |k: usize| {
        let idx = grid.multi_index(k);
        (0..grid.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == grid.sizes()[a])
    };
    for axis in 0..grid.dim() {
        let n = grid.sizes()[axis];
        let step = ((n as f64).sqrt() / 2.0).ceil() as usize;
        let h = grid.spacing(axis) * step as f64;
        let stride = if grid.dim() == 2 && axis == 0 { grid.sizes()[1] } else { 1 };
        for k in 0..grid.len() {
            let i = grid.multi_index(k)[axis];
            if i < step || i + step >= n {
                continue;
            }
            let (km, kp) = (k - step * stride, k + step * stride);
            if [km, k, kp].iter().any(|&q| on_boundary(conj.argmax[q])) {
                continue;
            }
            let d2 = (v[kp] - 2.0 * v[k] + v[km]) / (h * h);
            lo = lo.min(d2);
            hi = hi.max(d2);
            count += 1;
        }
    }
    let lower = 1.0 / params.beta;
    let upper = 1.0 / params.alpha;
    CurvatureReport {
        min_curvature: lo,
        max_curvature: hi,
        lower,
        upper,
        tol,
        nodes_checked: count,
        pass: count > 0 && lo >= lower - tol && hi <= upper + tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(grid: &Grid, theta: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let d = grid.dim();
        let mut val = vec![f64::NEG_INFINITY; grid.len()];
        let mut arg = vec![0; grid.len()];
        for k in 0..grid.len() {
            let x = grid.point(k);
            for j in 0..grid.len() {
                let y = grid.point(j);
                let ip: f64 = (0..d).map(|a| x[a] * y[a]).sum();
                let cand = ip - theta[j];
                if cand > val[k] {
                    val[k] = cand;
                    arg[k] = j;
                }
            }
        }
        (val, arg)
    }

    #[test]
    fn self_conjugate_quadratic() {
        let g = Grid::line(-1.0, 1.0, 201).unwrap();
        let theta = GridPotential::from_fn(g.clone(), |y| 0.5 * y[0] * y[0]).unwrap();
        let c = legendre_conjugate(&theta);
        let h = g.spacing(0);
        for (k, v) in c.values.values().iter().enumerate() {
            let x = g.point(k)[0];
            assert!((v - 0.5 * x * x).abs() <= h * h);
        }
    }

    #[test]
    fn steeper_quadratic_matches_brute_force() {
        let g = Grid::line(-1.0, 1.0, 101).unwrap();
        let theta = g.tabulate(|y| y[0] * y[0]);
        let (bf, _) = brute_force(&g, &theta);
        let c = legendre_conjugate(&GridPotential::new(g.clone(), theta).unwrap());
        let h = g.spacing(0);
        for (k, v) in c.values.values().iter().enumerate() {
            assert_eq!(*v, bf[k]);
            let x = g.point(k)[0];
            assert!((v - 0.25 * x * x).abs() <= h);
        }
    }

    #[test]
    fn linear_theta_attains_on_boundary() {
        let g = Grid::line(0.0, 1.0, 64).unwrap();
        let theta = g.tabulate(|y| 0.3 * y[0]);
        let (bf, bfa) = brute_force(&g, &theta);
        let c = legendre_conjugate(&GridPotential::new(g.clone(), theta).unwrap());
        assert_eq!(c.values.values(), &bf[..]);
        assert_eq!(c.argmax, bfa);
        // θ*(x) = max(0, x − 0.3)
        for (k, v) in c.values.values().iter().enumerate() {
            let x = g.point(k)[0];
            assert!((v - (x - 0.3).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_matches_brute_force() {
        let g = Grid::new(&[(-1.0, 1.0), (0.0, 2.0)], &[13, 9]).unwrap();
        let theta = g.tabulate(|y| 0.7 * y[0] * y[0] + (3.0 * y[1]).sin() + y[0] * y[1] * 0.2);
        let (bf, bfa) = brute_force(&g, &theta);
        let c = legendre_conjugate(&GridPotential::new(g, theta).unwrap());
        for (k, v) in c.values.values().iter().enumerate() {
            assert!((v - bf[k]).abs() < 1e-12);
        }
        assert_eq!(c.argmax, bfa);
    }

    #[test]
    fn c_transform_of_zero_is_zero() {
        let g = Grid::square(0.0, 1.0, 20).unwrap();
        let fc = c_transform(&GridPotential::zeros(g.clone()));
        assert!(fc.values().iter().all(|v| v.abs() < 1e-10));
        let t = transport_map(&GridPotential::zeros(g.clone()));
        for k in 0..g.len() {
            assert_eq!(t.image(k), &g.point(k)[..2]);
        }
    }

    #[test]
    fn c_transform_of_linear_potential() {
        let g = Grid::line(-1.0, 1.0, 201).unwrap();
        let h = g.spacing(0);
        let b = 0.2;
        let f = GridPotential::from_fn(g.clone(), |y| b * y[0]).unwrap();
        let fc = c_transform(&f);
        let t = transport_map(&f);
        for k in 0..g.len() {
            let x = g.point(k)[0];
            if x + b <= 1.0 {
                assert!((fc.values()[k] - (-0.5 * b * b - b * x)).abs() < h * h);
                assert!((t.image(k)[0] - (x + b)).abs() <= h);
            }
        }
    }

    #[test]
    fn c_transform_of_quarter_quadratic() {
        let g = Grid::line(-1.0, 1.0, 201).unwrap();
        let h = g.spacing(0);
        let f = GridPotential::from_fn(g.clone(), |y| 0.25 * y[0] * y[0]).unwrap();
        let fc = c_transform(&f);
        let t = transport_map(&f);
        for k in 0..g.len() {
            let x = g.point(k)[0];
            if (2.0 * x).abs() <= 1.0 {
                assert!((fc.values()[k] + 0.5 * x * x).abs() <= h);
                assert!((t.image(k)[0] - 2.0 * x).abs() <= h);
            }
        }
    }

    #[test]
    fn quadratic_theta_gives_scaled_map() {
        // θ = c‖y‖²/2, f = (1 − c)‖y‖²/2, T(x) = x / c
        let g = Grid::line(-1.0, 1.0, 401).unwrap();
        let h = g.spacing(0);
        let c = 1.6;
        let f = make_fab_potential(
            &PotentialClassParams::new(c, c).unwrap(),
            &FabSpec::quadratic(c, vec![0.0]),
            &g,
        )
        .unwrap();
        let t = transport_map(&f);
        for k in 0..g.len() {
            let x = g.point(k)[0];
            assert!((t.image(k)[0] - x / c).abs() <= h);
        }
    }

    #[test]
    fn fab_generator_examples() {
        let g = Grid::line(0.0, 1.0, 64).unwrap();
        let one = PotentialClassParams::new(1.0, 1.0).unwrap();
        let f = make_fab_potential(&one, &FabSpec::quadratic(1.0, vec![0.0]), &g).unwrap();
        assert!(f.values().iter().all(|v| *v == 0.0));

        let half = PotentialClassParams::new(0.5, 0.5).unwrap();
        assert!(make_fab_potential(&half, &FabSpec::quadratic(0.5, vec![0.0]), &g).is_ok());
        assert!(make_fab_potential(&one, &FabSpec::quadratic(0.5, vec![0.0]), &g).is_err());

        let a = 0.1 / (std::f64::consts::PI.powi(2));
        let spec = FabSpec {
            curvature: 0.8,
            shift: vec![0.0],
            bumps: vec![CosineBump {
                amplitude: a,
                frequencies: vec![std::f64::consts::PI],
            }],
        };
        let band = spec.curvature_band();
        assert!((band.0 - 0.7).abs() < 1e-12 && (band.1 - 0.9).abs() < 1e-12);
        let p = PotentialClassParams::new(0.7, 0.9).unwrap();
        assert!(make_fab_potential(&p, &spec, &g).is_ok());
        // symbolic second derivative of φ = 0.8x²/2 − a cos(πx) is 0.8 + aπ² cos(πx)
        let narrow = PotentialClassParams::new(0.75, 0.9).unwrap();
        assert!(matches!(
            make_fab_potential(&narrow, &spec, &g),
            Err(Error::OutsideClass(_))
        ));
    }

    #[test]
    fn conjugate_curvature_examples() {
        let g = Grid::line(-1.0, 1.0, 256).unwrap();
        let h = g.spacing(0);
        let identity = GridPotential::from_fn(g.clone(), |x| 0.5 * x[0] * x[0]).unwrap();
        let r = verify_conjugate_curvature(&identity, &PotentialClassParams::new(1.0, 1.0).unwrap(), 1e-9);
        assert!(r.pass, "{r:?}");

        for c in [2.0, 0.5] {
            let phi = GridPotential::from_fn(g.clone(), |x| 0.5 * c * x[0] * x[0]).unwrap();
            let r = verify_conjugate_curvature(&phi, &PotentialClassParams::new(c, c).unwrap(), 5.0 * h);
            assert!(r.pass, "c={c}: {r:?}");
            assert!((r.min_curvature - 1.0 / c).abs() <= 5.0 * h);
        }
    }
}
