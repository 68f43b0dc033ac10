//! Semi-dual barycenter objective, its Sobolev gradient, and the ascent
//! solver.
//!
//! For potentials `f_1, …, f_{m−1}` and `f_mix = −Σ_{j<m} (ω_j/ω_m) f_j`,
//!
//! ```text
//! D(f) = Σ_{i<m} ω_i ∫ f_i^c dμ_i + ω_m ∫ f_mix^c dμ_m,
//! ```
//!
//! and the gradient pairs with directions `φ` as
//! `Σ ω_i ∫ φ_i d(T_{f_mix^c}♯μ_m − T_{f_i^c}♯μ_i)`. On the grid every
//! quantity is evaluated with trapezoidal quadrature and grid-node
//! c-transforms, so the gradient below is the exact (super)gradient of the
//! discrete objective.

mod checks;

pub use checks::{
    check_bounded_potentials, check_pl_inequality, check_strong_concavity, concavity_constant,
    mix_is_convex, random_fab_spec, strong_concavity_trial, BoundedPotentialReport,
    ConcavityTrial, PlReport, PlSettings, StrongConcavityReport,
};

use serde::{Deserialize, Serialize};

use crate::ctransform::Legendre;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity, GridFunction, GridPotential, SignedGridMeasure};
use crate::sobolev::{PoissonSolver, ProductTangent};

/// Marginals `μ_1, …, μ_m` and barycentric weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterProblem {
    densities: Vec<GridDensity>,
    weights: Vec<f64>,
}

impl BarycenterProblem {
    pub fn new(densities: Vec<GridDensity>, weights: Vec<f64>) -> Result<Self> {
        if densities.len() < 2 {
            return Err(Error::InvalidArgument("need at least two marginals".into()));
        }
        if densities.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} marginals but {} weights",
                densities.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        let grid = densities[0].grid();
        for d in &densities[1..] {
            grid.ensure_same(d.grid())?;
        }
        Ok(Self {
            densities,
            weights,
        })
    }

    /// Uniform weights `1/m`.
    pub fn uniform(densities: Vec<GridDensity>) -> Result<Self> {
        let m = densities.len();
        Self::new(densities, vec![1.0 / m as f64; m])
    }

    pub fn grid(&self) -> &Grid {
        self.densities[0].grid()
    }

    pub fn m(&self) -> usize {
        self.densities.len()
    }

    pub fn densities(&self) -> &[GridDensity] {
        &self.densities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest nodal density over all marginals.
    pub fn min_density(&self) -> f64 {
        self.densities
            .iter()
            .map(GridDensity::min_value)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The dual variable `(f_1, …, f_{m−1})` with the problem weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSet {
    potentials: Vec<GridPotential>,
    weights: Vec<f64>,
}

impl PotentialSet {
    /// `weights` are all m problem weights; `potentials` holds m−1 entries.
    pub fn new(potentials: Vec<GridPotential>, weights: Vec<f64>) -> Result<Self> {
        if potentials.len() + 1 != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} potentials need {} weights, got {}",
                potentials.len(),
                potentials.len() + 1,
                weights.len()
            )));
        }
        if let Some(first) = potentials.first() {
            for p in &potentials[1..] {
                first.grid().ensure_same(p.grid())?;
            }
        }
        Ok(Self {
            potentials,
            weights,
        })
    }

    pub fn zeros(prob: &BarycenterProblem) -> Self {
        let potentials = (0..prob.m() - 1)
            .map(|_| GridPotential::zeros(prob.grid().clone()))
            .collect();
        Self {
            potentials,
            weights: prob.weights.clone(),
        }
    }

    pub fn potentials(&self) -> &[GridPotential] {
        &self.potentials
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Shifts every `f_i` so that `sup f_i = 0`; `D` is invariant.
    pub fn normalize(&mut self) {
        for p in &mut self.potentials {
            let s = p.sup();
            p.values_mut().iter_mut().for_each(|v| *v -= s);
        }
    }

    fn raw(&self) -> Vec<Vec<f64>> {
        self.potentials.iter().map(|p| p.values().to_vec()).collect()
    }
}

/// `f_mix = −Σ_{j<m} (ω_j/ω_m) f_j`.
pub fn f_mix(ps: &PotentialSet) -> Result<GridPotential> {
    let wm = *ps.weights.last().expect("m >= 1 weights");
    if !(wm > 0.0) {
        return Err(Error::InvalidArgument("f_mix needs ω_m > 0".into()));
    }
    let grid = ps
        .potentials
        .first()
        .ok_or_else(|| Error::InvalidArgument("no potentials".into()))?
        .grid()
        .clone();
    let mut out = vec![0.0; grid.len()];
    for (p, w) in ps.potentials.iter().zip(&ps.weights) {
        let r = w / wm;
        for (o, v) in out.iter_mut().zip(p.values()) {
            *o -= r * v;
        }
    }
    GridPotential::new(grid, out)
}

/// Objective value, gradient measures and pushforward masses at one point.
#[derive(Clone, Debug)]
pub struct DualEvaluation {
    pub value: f64,
    /// `T_{f_mix^c}♯μ_m − T_{f_i^c}♯μ_i` as nodal densities, `i < m`.
    pub gradient: Vec<Vec<f64>>,
    /// Per-node masses of `T_{f_i^c}♯μ_i` for all `i ≤ m` (last = mix).
    pub pushforward_masses: Vec<Vec<f64>>,
}

/// Reusable evaluator of `D` and its gradient for one problem.
pub struct SemiDual<'a> {
    prob: &'a BarycenterProblem,
    weights: Vec<f64>,
    half_sq: Vec<f64>,
    masses: Vec<Vec<f64>>,
    legendre: Legendre,
    poisson: PoissonSolver,
    theta: Vec<f64>,
    conj: Vec<f64>,
    arg: Vec<usize>,
}

impl<'a> SemiDual<'a> {
    pub fn new(prob: &'a BarycenterProblem) -> Result<Self> {
        if !(prob.weights[prob.m() - 1] > 0.0) {
            return Err(Error::InvalidArgument("semi-dual needs ω_m > 0".into()));
        }
        let grid = prob.grid();
        let n = grid.len();
        Ok(Self {
            prob,
            weights: grid.weights(),
            half_sq: grid.sq_norms().iter().map(|q| 0.5 * q).collect(),
            masses: prob.densities.iter().map(GridDensity::masses).collect(),
            legendre: Legendre::new(grid),
            poisson: PoissonSolver::new(grid),
            theta: vec![0.0; n],
            conj: vec![0.0; n],
            arg: vec![0; n],
        })
    }

    pub fn problem(&self) -> &BarycenterProblem {
        self.prob
    }

    pub fn poisson(&self) -> &PoissonSolver {
        &self.poisson
    }

    fn mix(&self, f: &[Vec<f64>]) -> Vec<f64> {
        let w = &self.prob.weights;
        let wm = w[w.len() - 1];
        let mut out = vec![0.0; self.weights.len()];
        for (p, wi) in f.iter().zip(w) {
            let r = wi / wm;
            for (o, v) in out.iter_mut().zip(p) {
                *o -= r * v;
            }
        }
        out
    }

    /// c-transform of `pot` into `self.conj` with minimiser indices in `self.arg`.
    fn c_transform(&mut self, pot: &[f64]) {
        for ((t, q), p) in self.theta.iter_mut().zip(&self.half_sq).zip(pot) {
            *t = q - p;
        }
        self.legendre
            .conjugate(&self.theta, &mut self.conj, &mut self.arg);
        for (c, q) in self.conj.iter_mut().zip(&self.half_sq) {
            *c = q - *c;
        }
    }

    /// `D(f)` only.
    pub fn objective(&mut self, f: &[Vec<f64>]) -> f64 {
        let mix = self.mix(f);
        let m = self.prob.m();
        let mut value = 0.0;
        for i in 0..m {
            let pot = if i + 1 < m { &f[i] } else { &mix };
            self.c_transform(pot);
            let term: f64 = self.masses[i]
                .iter()
                .zip(&self.conj)
                .map(|(a, b)| a * b)
                .sum();
            value += self.prob.weights[i] * term;
        }
        value
    }

    /// `D(f)`, the gradient measures and the pushforwards.
    pub fn evaluate(&mut self, f: &[Vec<f64>]) -> DualEvaluation {
        let mix = self.mix(f);
        let m = self.prob.m();
        let n = self.weights.len();
        let mut value = 0.0;
        let mut pushes = Vec::with_capacity(m);
        for i in 0..m {
            let pot = if i + 1 < m { &f[i] } else { &mix };
            self.c_transform(pot);
            let mut push = vec![0.0; n];
            let mut term = 0.0;
            for k in 0..n {
                let mass = self.masses[i][k];
                term += mass * self.conj[k];
                push[self.arg[k]] += mass;
            }
            value += self.prob.weights[i] * term;
            pushes.push(push);
        }
        let last = &pushes[m - 1];
        let gradient = pushes[..m - 1]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(last)
                    .zip(&self.weights)
                    .map(|((pi, pm), w)| (pm - pi) / w)
                    .collect()
            })
            .collect();
        DualEvaluation {
            value,
            gradient,
            pushforward_masses: pushes,
        }
    }

    /// Sobolev ascent direction `ψ_i = (−Δ)⁻¹ g_i` and `‖∇D‖_{𝓗'}`.
    pub fn sobolev_direction(&self, eval: &DualEvaluation) -> (Vec<Vec<f64>>, f64) {
        let mut sq = 0.0;
        let dirs = eval
            .gradient
            .iter()
            .zip(&self.prob.weights)
            .map(|(g, w)| {
                let psi = self.poisson.solve_values(g);
                let pair: f64 = self
                    .weights
                    .iter()
                    .zip(g.iter().zip(&psi))
                    .map(|(q, (a, b))| q * a * b)
                    .sum();
                sq += w * pair.max(0.0);
                psi
            })
            .collect();
        (dirs, sq.sqrt())
    }

    /// `⟨∇D(f), φ⟩ = Σ ω_i ∫ φ_i g_i`.
    pub fn pairing(&self, eval: &DualEvaluation, dir: &[Vec<f64>]) -> f64 {
        eval.gradient
            .iter()
            .zip(dir)
            .zip(&self.prob.weights)
            .map(|((g, p), w)| {
                w * self
                    .weights
                    .iter()
                    .zip(g.iter().zip(p))
                    .map(|(q, (a, b))| q * a * b)
                    .sum::<f64>()
            })
            .sum()
    }

    /// ω-weighted average of all m pushforwards, as a density.
    pub fn barycenter(&self, eval: &DualEvaluation) -> Result<GridDensity> {
        let n = self.weights.len();
        let mut mass = vec![0.0; n];
        for (p, w) in eval.pushforward_masses.iter().zip(&self.prob.weights) {
            for (m, v) in mass.iter_mut().zip(p) {
                *m += w * v;
            }
        }
        GridDensity::from_masses(self.prob.grid().clone(), &mass)
    }
}

fn check_grids(ps: &PotentialSet, prob: &BarycenterProblem) -> Result<()> {
    if ps.potentials.len() + 1 != prob.m() {
        return Err(Error::InvalidArgument(format!(
            "{} potentials for {} marginals",
            ps.potentials.len(),
            prob.m()
        )));
    }
    for p in &ps.potentials {
        prob.grid().ensure_same(p.grid())?;
    }
    Ok(())
}

/// Semi-dual objective `D(f_1, …, f_{m−1})`.
pub fn dual_objective(ps: &PotentialSet, prob: &BarycenterProblem) -> Result<f64> {
    check_grids(ps, prob)?;
    Ok(SemiDual::new(prob)?.objective(&ps.raw()))
}

/// Gradient of `D` as m−1 zero-mass measures (dual-space tangent).
pub fn dual_gradient(ps: &PotentialSet, prob: &BarycenterProblem) -> Result<ProductTangent> {
    check_grids(ps, prob)?;
    let eval = SemiDual::new(prob)?.evaluate(&ps.raw());
    let grid = prob.grid().clone();
    let comps = eval
        .gradient
        .into_iter()
        .map(|g| SignedGridMeasure::new(grid.clone(), g))
        .collect::<Result<Vec<_>>>()?;
    let m = prob.m();
    // zero-weight components carry no norm; keep the tangent well-formed
    let weights = prob.weights[..m - 1]
        .iter()
        .map(|w| w.max(f64::MIN_POSITIVE))
        .collect();
    ProductTangent::from_measures(&comps, weights)
}

/// `(Σ ω_i ‖g_i‖²_{Ḣ⁻¹})^{1/2}`.
pub fn gradient_norm(t: &ProductTangent) -> Result<f64> {
    crate::sobolev::product_norm(t, crate::sobolev::NormMode::Dual)
}

/// Solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgaConfig {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_step() -> f64 {
    1.0
}
fn default_max_iter() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-4
}

impl Default for SgaConfig {
    fn default() -> Self {
        Self {
            step: default_step(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

/// Solver summary; serialises as `{value, iterations, converged, grad_norm_history}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm_history: Vec<f64>,
}

/// State handed to a solver observer after each accepted iterate.
pub struct Iterate<'s> {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub potentials: &'s [Vec<f64>],
}

/// Smallest step before the ascent is declared stalled.
const MIN_STEP: f64 = 1e-12;

/// Sobolev gradient ascent; see [`sga_solve_observed`].
pub fn sga_solve(
    prob: &BarycenterProblem,
    init: &PotentialSet,
    cfg: &SgaConfig,
) -> Result<(PotentialSet, SolveReport)> {
    sga_solve_observed(prob, init, cfg, |_| {})
}

/// `f_i ← f_i + τ (−Δ)⁻¹(T_{f_mix^c}♯μ_m − T_{f_i^c}♯μ_i)`, then
/// `sup f_i = 0`. The step `τ` is halved whenever the objective would
/// decrease, so accepted iterates are monotone. Stops when the gradient norm
/// reaches `tol`, after `max_iter` accepted steps, or when the step underflows.
pub fn sga_solve_observed(
    prob: &BarycenterProblem,
    init: &PotentialSet,
    cfg: &SgaConfig,
    mut observe: impl FnMut(&Iterate<'_>),
) -> Result<(PotentialSet, SolveReport)> {
    check_grids(init, prob)?;
    if !(cfg.step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let mut sd = SemiDual::new(prob)?;
    let mut ps = init.clone();
    ps.normalize();
    let mut f = ps.raw();
    let mut eval = sd.evaluate(&f);
    if !eval.value.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut step = cfg.step;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let (dirs, gn) = sd.sobolev_direction(&eval);
        history.push(gn);
        observe(&Iterate {
            iteration: iterations,
            value: eval.value,
            grad_norm: gn,
            potentials: &f,
        });
        if gn <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        let mut accepted = None;
        while step >= MIN_STEP {
            let mut trial: Vec<Vec<f64>> = f
                .iter()
                .zip(&dirs)
                .map(|(fi, di)| fi.iter().zip(di).map(|(a, b)| a + step * b).collect())
                .collect();
            for t in &mut trial {
                let s = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.iter_mut().for_each(|v| *v -= s);
            }
            let next = sd.evaluate(&trial);
            if !next.value.is_finite() {
                return Err(Error::NonFinite {
                    iteration: iterations + 1,
                });
            }
            if next.value >= eval.value {
                accepted = Some((trial, next));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, next)) => {
                f = trial;
                eval = next;
                iterations += 1;
            }
            None => break,
        }
    }
    let grid = prob.grid().clone();
    let potentials = f
        .into_iter()
        .map(|v| GridPotential::new(grid.clone(), v))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        PotentialSet::new(potentials, prob.weights.clone())?,
        SolveReport {
            value: eval.value,
            iterations,
            converged,
            grad_norm_history: history,
        },
    ))
}

/// ω-weighted average of `T_{f_i^c}♯μ_i` (i < m) and `T_{f_mix^c}♯μ_m`.
pub fn reconstruct_barycenter(ps: &PotentialSet, prob: &BarycenterProblem) -> Result<GridDensity> {
    check_grids(ps, prob)?;
    let mut sd = SemiDual::new(prob)?;
    let eval = sd.evaluate(&ps.raw());
    sd.barycenter(&eval)
}
