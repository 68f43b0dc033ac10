//! The property suite: numerical checks of the structural facts the
//! estimator relies on, with pass/fail and the worst observed ratio.
//!
//! Every item reports `worst`, the largest observed value of
//! `(observed excess) / (allowed slack)` or `observed / bound`; an item
//! passes when `worst ≤ 1` over all of its checks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::spec::ExperimentSpec;
use super::stats::derive_seed;
use crate::ctransform::{
    c_transform_with_map, legendre_conjugate, make_fab_potential, verify_conjugate_curvature,
    FabSpec, PotentialClassParams,
};
use crate::error::Result;
use crate::grid::{pushforward, Grid, GridDensity, GridFunction, GridPotential, PointMap};
use crate::oracles::w2_1d;
use crate::semidual::{
    check_bounded_potentials, check_pl_inequality, check_strong_concavity, random_fab_spec,
    sga_solve, BarycenterProblem, PlSettings, PotentialSet, SgaConfig,
};
use crate::sobolev::{gradient, PoissonSolver};

/// Default curvature band for certified generators.
pub const DEFAULT_CLASS: PotentialClassParams = PotentialClassParams {
    alpha: 0.8,
    beta: 1.25,
};

#[derive(Clone, Debug, Serialize)]
pub struct PropertyItem {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub worst: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub grid_size: usize,
    pub items: Vec<PropertyItem>,
    pub pass: bool,
}

impl PropertyReport {
    pub fn item(&self, name: &str) -> Option<&PropertyItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

fn item(name: &str, checked: usize, worst: f64, detail: String) -> PropertyItem {
    PropertyItem {
        name: name.to_string(),
        pass: checked > 0 && worst <= 1.0,
        checked,
        worst,
        detail,
    }
}

/// Settings for [`run_property_suite_with`].
#[derive(Clone, Debug)]
pub struct PropertySettings {
    pub seed: u64,
    pub grid_size: usize,
    pub class: PotentialClassParams,
    pub instances: usize,
    pub concavity_trials: usize,
    pub pl_trajectories: usize,
}

impl Default for PropertySettings {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_size: 257,
            class: DEFAULT_CLASS,
            instances: 20,
            concavity_trials: 100,
            pl_trajectories: 3,
        }
    }
}

impl PropertySettings {
    pub fn from_spec(spec: &ExperimentSpec) -> Self {
        Self {
            seed: spec.seed,
            grid_size: spec.grid_size,
            class: spec.class.unwrap_or(DEFAULT_CLASS),
            ..Self::default()
        }
    }
}

pub fn run_property_suite(spec: &ExperimentSpec) -> Result<PropertyReport> {
    run_property_suite_with(&PropertySettings::from_spec(spec))
}

pub fn run_property_suite_with(s: &PropertySettings) -> Result<PropertyReport> {
    let grid = Grid::line(0.0, 1.0, s.grid_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[s.seed, 0x9A0]));
    let specs: Vec<FabSpec> = (0..s.instances)
        .map(|_| random_fab_spec(&s.class, &grid, &mut rng))
        .collect();
    let items = vec![
        legendre_exactness(s.seed)?,
        double_transform(&grid, &s.class, &specs)?,
        envelope(&grid, &s.class, &specs)?,
        gradient_identity(&grid, &s.class, &specs)?,
        conjugate_curvature(&grid, &s.class, &specs)?,
        change_of_variable(&grid, &s.class, &specs, &mut rng)?,
        strong_concavity(&grid, &s.class, s.concavity_trials, s.seed)?,
        pl_inequality(&grid, &s.class, s.pl_trajectories, s.seed)?,
        pushforward_stability(&grid, &mut rng)?,
        comparability(&grid, &mut rng)?,
        bounded_potentials(&grid, &s.class)?,
    ];
    let pass = items.iter().all(|i| i.pass);
    Ok(PropertyReport {
        seed: s.seed,
        grid_size: s.grid_size,
        items,
        pass,
    })
}

fn interior(grid: &Grid, k: usize) -> bool {
    let idx = grid.multi_index(k);
    (0..grid.dim()).all(|a| idx[a] > 0 && idx[a] + 1 < grid.sizes()[a])
}

/// Fast Legendre transform against exhaustive maximisation, N ≤ 128.
fn legendre_exactness(seed: u64) -> Result<PropertyItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x1E6]));
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (t, n) in [16usize, 33, 64, 128].iter().cycle().take(12).enumerate() {
        let grid = if t % 3 == 2 {
            Grid::square(-1.0, 1.0, n / 4 + 4)?
        } else {
            Grid::line(-1.0, 1.0, *n)?
        };
        let theta: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let conj = legendre_conjugate(&GridPotential::new(grid.clone(), theta.clone())?);
        for k in 0..grid.len() {
            let x = grid.point(k);
            let best = (0..grid.len())
                .map(|j| {
                    let y = grid.point(j);
                    x[0] * y[0] + x[1] * y[1] - theta[j]
                })
                .fold(f64::NEG_INFINITY, f64::max);
            // exact up to the rounding of one inner product
            worst = worst.max((conj.values.values()[k] - best).abs() / 1e-12);
            checked += 1;
        }
    }
    Ok(item(
        "legendre_exact",
        checked,
        worst,
        "fast transform vs brute force; worst |diff| / 1e-12".into(),
    ))
}

fn tabulate(grid: &Grid, class: &PotentialClassParams, spec: &FabSpec) -> Result<GridPotential> {
    make_fab_potential(class, spec, grid)
}

/// `f^{cc} = f` within `10h` where the second transform's minimiser is interior.
fn double_transform(grid: &Grid, class: &PotentialClassParams, specs: &[FabSpec]) -> Result<PropertyItem> {
    let h = grid.max_spacing();
    let (mut checked, mut worst) = (0, 0.0f64);
    for spec in specs {
        let f = tabulate(grid, class, spec)?;
        let fc = c_transform_with_map(&f);
        let fcc = c_transform_with_map(&fc.values);
        for k in 0..grid.len() {
            if !interior(grid, fcc.argmin[k]) || !interior(grid, k) {
                continue;
            }
            let err = (fcc.values.values()[k] - f.values()[k]).abs();
            worst = worst.max(err / (10.0 * h));
            checked += 1;
        }
    }
    Ok(item(
        "double_c_transform",
        checked,
        worst,
        format!("{} instances; worst |f^cc - f| / 10h", specs.len()),
    ))
}

/// `f^c(x) = ½‖T(x) − x‖² − f(T(x))` at every node.
fn envelope(grid: &Grid, class: &PotentialClassParams, specs: &[FabSpec]) -> Result<PropertyItem> {
    let h = grid.max_spacing();
    let (mut checked, mut worst) = (0, 0.0f64);
    for spec in specs {
        let f = tabulate(grid, class, spec)?;
        let fc = c_transform_with_map(&f);
        for k in 0..grid.len() {
            let (x, t) = (grid.point(k), grid.point(fc.argmin[k]));
            let d2 = (t[0] - x[0]).powi(2) + (t[1] - x[1]).powi(2);
            let rhs = 0.5 * d2 - f.values()[fc.argmin[k]];
            worst = worst.max((fc.values.values()[k] - rhs).abs() / (10.0 * h));
            checked += 1;
        }
    }
    Ok(item(
        "c_transform_envelope",
        checked,
        worst,
        "worst |f^c - (|T-x|^2/2 - f(T))| / 10h".into(),
    ))
}

/// `∇f(T(x)) = T(x) − x` at nodes whose image is interior.
fn gradient_identity(grid: &Grid, class: &PotentialClassParams, specs: &[FabSpec]) -> Result<PropertyItem> {
    let h = grid.max_spacing();
    let (mut checked, mut worst) = (0, 0.0f64);
    for spec in specs {
        let f = tabulate(grid, class, spec)?;
        let fc = c_transform_with_map(&f);
        let grads: Vec<Vec<f64>> = (0..grid.dim()).map(|a| gradient(grid, f.values(), a)).collect();
        for k in 0..grid.len() {
            let tk = fc.argmin[k];
            if !interior(grid, tk) {
                continue;
            }
            let (x, t) = (grid.point(k), grid.point(tk));
            let err = (0..grid.dim())
                .map(|a| (grads[a][tk] - (t[a] - x[a])).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(err / (10.0 * h));
            checked += 1;
        }
    }
    Ok(item(
        "c_transform_gradient",
        checked,
        worst,
        "worst |grad f(T) - (T - x)| / 10h".into(),
    ))
}

/// Second differences of `φ*` inside `[1/β − 10h, 1/α + 10h]`.
fn conjugate_curvature(grid: &Grid, class: &PotentialClassParams, specs: &[FabSpec]) -> Result<PropertyItem> {
    let tol = 10.0 * grid.max_spacing();
    let (mut checked, mut worst) = (0, 0.0f64);
    let mut detail = String::new();
    for spec in specs {
        let (lo, hi) = spec.curvature_band();
        let band = PotentialClassParams::new(lo, hi)?;
        let phi = GridPotential::from_fn(grid.clone(), |x| {
            0.5 * x.iter().map(|v| v * v).sum::<f64>() - spec.dual_value(x)
        })?;
        let r = verify_conjugate_curvature(&phi, &band, tol);
        // also against the class band, which contains the spec band
        let excess = (r.lower - r.min_curvature).max(r.max_curvature - r.upper).max(0.0);
        let class_ok = r.min_curvature >= 1.0 / class.beta - tol && r.max_curvature <= 1.0 / class.alpha + tol;
        worst = worst.max(if class_ok { excess / tol } else { f64::INFINITY });
        checked += r.nodes_checked;
        if r.nodes_checked == 0 {
            worst = f64::INFINITY;
        }
        detail = format!("last band [{:.4}, {:.4}] observed [{:.4}, {:.4}]", r.lower, r.upper, r.min_curvature, r.max_curvature);
    }
    Ok(item("conjugate_curvature", checked, worst, detail))
}

/// `α‖∇φ*(y) − ∇ψ*(y)‖ ≤ ‖∇ψ(∇φ*(y)) − ∇φ(∇φ*(y))‖ ≤ β‖∇φ*(y) − ∇ψ*(y)‖`
/// up to `10h`, at random interior `y`.
fn change_of_variable(
    grid: &Grid,
    class: &PotentialClassParams,
    specs: &[FabSpec],
    rng: &mut ChaCha8Rng,
) -> Result<PropertyItem> {
    let slack = 10.0 * grid.max_spacing();
    let (mut checked, mut worst) = (0, 0.0f64);
    let brenier = |s: &FabSpec| -> Result<(GridPotential, Vec<usize>)> {
        let phi = GridPotential::from_fn(grid.clone(), |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>() - s.dual_value(x))?;
        let c = legendre_conjugate(&phi);
        Ok((phi, c.argmax))
    };
    for pair in specs.windows(2) {
        let (phi_spec, psi_spec) = (&pair[0], &pair[1]);
        let (_, arg_phi) = brenier(phi_spec)?;
        let (_, arg_psi) = brenier(psi_spec)?;
        let d = grid.dim();
        for _ in 0..50 {
            let k = rng.random_range(0..grid.len());
            if !interior(grid, arg_phi[k]) || !interior(grid, arg_psi[k]) {
                continue;
            }
            let xp = &grid.point(arg_phi[k])[..d];
            let xq = &grid.point(arg_psi[k])[..d];
            let dist = xp.iter().zip(xq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let gpsi = psi_spec.brenier_gradient(xp);
            let gphi = phi_spec.brenier_gradient(xp);
            let mid = gpsi.iter().zip(&gphi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let low = class.alpha * dist - mid;
            let high = mid - class.beta * dist;
            worst = worst.max(low.max(high).max(0.0) / slack);
            checked += 1;
        }
    }
    Ok(item(
        "change_of_variable",
        checked,
        worst,
        "largest sandwich violation / 10h".into(),
    ))
}

fn bounded_problem(grid: &Grid, centres: &[f64], sds: &[f64], floor: f64) -> Result<BarycenterProblem> {
    let u = 1.0 / grid.volume();
    let dens = centres
        .iter()
        .zip(sds)
        .map(|(c, s)| {
            let g = GridDensity::from_fn(grid.clone(), |x| (-(x[0] - c).powi(2) / (2.0 * s * s)).exp())?;
            let v = g.into_values().into_iter().map(|v| (1.0 - floor) * v + floor * u).collect();
            GridDensity::normalized(grid.clone(), v)
        })
        .collect::<Result<Vec<_>>>()?;
    BarycenterProblem::uniform(dens)
}

fn strong_concavity(grid: &Grid, class: &PotentialClassParams, trials: usize, seed: u64) -> Result<PropertyItem> {
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for (k, (centres, sds)) in [
        (vec![0.4, 0.6], vec![0.1, 0.15]),
        (vec![0.35, 0.5, 0.65], vec![0.08, 0.12, 0.1]),
    ]
    .iter()
    .enumerate()
    {
        let prob = bounded_problem(grid, centres, sds, 0.3)?;
        let r = check_strong_concavity(&prob, class, trials, derive_seed(&[seed, k as u64]))?;
        checked += r.trials;
        // worst margin normalised by the per-trial slack is not reported; use pass count
        worst = worst.max(if r.pass { 0.0 } else { f64::INFINITY });
        detail.push(format!(
            "m={}: lambda={:.4} passed {}/{} (skipped {}), worst (gap-bound)/|g-f|^2={:.3e}",
            prob.m(),
            r.lambda,
            r.passed,
            r.trials,
            r.skipped,
            r.worst_relative_margin
        ));
    }
    Ok(item("strong_concavity", checked, worst, detail.join("; ")))
}

fn pl_inequality(grid: &Grid, class: &PotentialClassParams, trajectories: usize, seed: u64) -> Result<PropertyItem> {
    let prob = bounded_problem(grid, &[0.4, 0.6], &[0.1, 0.1], 0.3)?;
    let r = check_pl_inequality(
        &prob,
        class,
        &PlSettings {
            trajectories,
            seed,
            ..PlSettings::default()
        },
    )?;
    let worst = if r.monotone && r.trajectories == trajectories { r.worst_ratio } else { f64::INFINITY };
    Ok(item(
        "pl_inequality",
        r.points_checked,
        worst,
        format!(
            "lambda={:.4}, {} trajectories, violations={}, monotone={}",
            r.lambda, r.trajectories, r.violations, r.monotone
        ),
    ))
}

fn random_bump_density(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Result<GridDensity> {
    let c = rng.random_range(lo + 0.05..hi - 0.05);
    let s = rng.random_range(0.02..0.06);
    let (a, b) = (lo, hi);
    GridDensity::from_fn(grid.clone(), move |x| {
        if x[0] < a || x[0] > b {
            0.0
        } else {
            (-(x[0] - c).powi(2) / (2.0 * s * s)).exp()
        }
    })
}

/// `‖T♯ρ‖_{Ḣ⁻¹} ≤ (Λ/λ^{d/2}) ‖ρ‖_{Ḣ⁻¹} (1 + 10h)` for `T = ∇φ`,
/// `φ(x) = c‖x − x₀‖²/2`, so `Λ = λ = c`.
fn pushforward_stability(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<PropertyItem> {
    let h = grid.max_spacing();
    let poisson = PoissonSolver::new(grid);
    let (mut checked, mut worst) = (0, 0.0f64);
    for _ in 0..20 {
        let c = rng.random_range(0.5..1.5);
        let a = random_bump_density(grid, rng, 0.3, 0.7)?;
        let b = random_bump_density(grid, rng, 0.3, 0.7)?;
        let map = PointMap::from_fn(grid.clone(), |x| [c * (x[0] - 0.5) + 0.5, 0.0])?;
        let (ta, tb) = (pushforward(&map, &a)?.density, pushforward(&map, &b)?.density);
        let before = poisson.hneg1_norm_values(a.difference(&b)?.values());
        let after = poisson.hneg1_norm_values(tb.difference(&ta)?.values());
        let bound = c / c.sqrt() * before * (1.0 + 10.0 * h);
        worst = worst.max(after / bound);
        checked += 1;
    }
    Ok(item(
        "pushforward_stability",
        checked,
        worst,
        "worst |T#rho| / (Lambda/lambda^(d/2) |rho| (1+10h))".into(),
    ))
}

/// `‖μ − ν‖_{Ḣ⁻¹} ≤ √U W₂` and `W₂ ≤ (2/√L) ‖μ − ν‖_{Ḣ⁻¹}`, each with `(1 + 10h)`.
fn comparability(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<PropertyItem> {
    let h = grid.max_spacing();
    let poisson = PoissonSolver::new(grid);
    let (mut checked, mut worst) = (0, 0.0f64);
    for _ in 0..20 {
        let floor = rng.random_range(0.2..0.8);
        let mut make = || -> Result<GridDensity> {
            let bump = random_bump_density(grid, rng, 0.0, 1.0)?;
            let v = bump.into_values().into_iter().map(|v| (1.0 - floor) * v + floor).collect();
            GridDensity::normalized(grid.clone(), v)
        };
        let (mu, nu) = (make()?, make()?);
        let l = mu.min_value().min(nu.min_value());
        let u = mu.max_value().max(nu.max_value());
        let hn = poisson.hneg1_norm_values(mu.difference(&nu)?.values());
        let w2 = w2_1d(&mu, &nu)?;
        let slack = 1.0 + 10.0 * h;
        worst = worst
            .max(hn / (u.sqrt() * w2 * slack))
            .max(w2 / (2.0 / l.sqrt() * hn * slack));
        checked += 1;
    }
    Ok(item(
        "hneg1_w2_comparability",
        checked,
        worst,
        "worst ratio to the comparability bounds".into(),
    ))
}

/// Converged two-marginal solve: `−‖c‖_∞ − tol ≤ f̃ ≤ tol` and the map bound.
fn bounded_potentials(grid: &Grid, class: &PotentialClassParams) -> Result<PropertyItem> {
    let prob = bounded_problem(grid, &[0.35, 0.65], &[0.08, 0.12], 0.0)?;
    let (ps, _) = sga_solve(&prob, &PotentialSet::zeros(&prob), &SgaConfig::default())?;
    let tol = 10.0 * grid.max_spacing();
    let r = check_bounded_potentials(&ps, &prob, class, tol)?;
    let worst = [
        (-r.cost_sup - r.min_potential) / tol,
        r.max_potential / tol,
        r.max_map_norm / r.map_norm_bound,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    Ok(item(
        "bounded_potentials",
        ps.potentials().len() + 1,
        worst,
        format!(
            "f in [{:.4}, {:.2e}], box [-{:.3}, 0]; max |T| {:.3} <= {:.3}",
            r.min_potential, r.max_potential, r.cost_sup, r.max_map_norm, r.map_norm_bound
        ),
    ))
}
