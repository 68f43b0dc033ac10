//! Numerical checks of strong concavity, the PL inequality and the
//! dual-potential bounds on certified instances.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{sga_solve_observed, BarycenterProblem, PotentialSet, SemiDual, SgaConfig};
use crate::ctransform::{make_fab_potential, CosineBump, FabSpec, PotentialClassParams};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridPotential};
use crate::sobolev::hdot1_inner_values;

/// `λ = L α^{d+1} / β²`.
pub fn concavity_constant(prob: &BarycenterProblem, params: &PotentialClassParams) -> f64 {
    let d = prob.grid().dim() as i32;
    prob.min_density() * params.alpha.powi(d + 1) / (params.beta * params.beta)
}

/// Random quadratic-plus-bump spec centred on the box, certified in F_{α,β}.
///
/// The curvature is drawn from the middle half of `[α, β]`, the bump uses
/// the remaining room, and the offset from the box centre is at most 5% of
/// the extent per axis.
pub fn random_fab_spec(params: &PotentialClassParams, grid: &Grid, rng: &mut impl Rng) -> FabSpec {
    let d = grid.dim();
    let band = params.beta - params.alpha;
    let c = if band > 0.0 {
        rng.random_range(params.alpha + 0.25 * band..=params.beta - 0.25 * band)
    } else {
        params.alpha
    };
    let room = (c - params.alpha).min(params.beta - c) * rng.random_range(0.0..0.9);
    let mut bumps = Vec::new();
    if room > 0.0 {
        let frequencies: Vec<f64> = (0..d)
            .map(|a| std::f64::consts::PI * rng.random_range(1..=2) as f64 / grid.extent(a))
            .collect();
        let norm: f64 = frequencies.iter().map(|w| w * w).sum();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        bumps.push(CosineBump {
            amplitude: sign * room / norm,
            frequencies,
        });
    }
    let shift = (0..d)
        .map(|a| {
            let centre = 0.5 * (grid.lo(a) + grid.hi(a));
            let b = rng.random_range(-0.05..=0.05) * grid.extent(a);
            b - (1.0 - c) * centre
        })
        .collect();
    FabSpec {
        curvature: c,
        shift,
        bumps,
    }
}

/// `½‖·‖² − g_mix` is convex when `1 + Σ (ω_j/ω_m)(1 − β_j) ≥ 0`, with
/// `β_j` the certified upper curvature of each spec.
pub fn mix_is_convex(specs: &[FabSpec], weights: &[f64]) -> bool {
    let wm = weights[weights.len() - 1];
    let s: f64 = specs
        .iter()
        .zip(weights)
        .map(|(sp, w)| (w / wm) * (1.0 - sp.curvature_band().1))
        .sum();
    1.0 + s >= 0.0
}

/// Terms of one strong-concavity comparison.
#[derive(Clone, Debug, Serialize)]
pub struct ConcavityTrial {
    /// `D(g) − D(f) − ⟨∇D(f), g − f⟩`.
    pub gap: f64,
    /// `−(λ/2)‖g − f‖²`.
    pub bound: f64,
    pub slack: f64,
    pub distance: f64,
}

impl ConcavityTrial {
    /// `gap − bound`; the inequality holds when this is at most `slack`.
    pub fn margin(&self) -> f64 {
        self.gap - self.bound
    }

    pub fn holds(&self) -> bool {
        self.margin() <= self.slack
    }
}

fn raw(ps: &[GridPotential]) -> Vec<Vec<f64>> {
    ps.iter().map(|p| p.values().to_vec()).collect()
}

fn product_h1_sq(grid: &Grid, weights: &[f64], diff: &[Vec<f64>]) -> f64 {
    diff.iter()
        .zip(weights)
        .map(|(d, w)| w * hdot1_inner_values(grid, d, d))
        .sum()
}

/// Evaluates both sides of the strong-concavity inequality at `(f, g)`.
pub fn strong_concavity_trial(
    prob: &BarycenterProblem,
    params: &PotentialClassParams,
    f: &PotentialSet,
    g: &PotentialSet,
) -> Result<ConcavityTrial> {
    super::check_grids(f, prob)?;
    super::check_grids(g, prob)?;
    let lambda = concavity_constant(prob, params);
    let mut sd = SemiDual::new(prob)?;
    let (fr, gr) = (raw(f.potentials()), raw(g.potentials()));
    let ef = sd.evaluate(&fr);
    let dg = sd.objective(&gr);
    let diff: Vec<Vec<f64>> = gr
        .iter()
        .zip(&fr)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let dist = product_h1_sq(prob.grid(), prob.weights(), &diff).sqrt();
    Ok(ConcavityTrial {
        gap: dg - ef.value - sd.pairing(&ef, &diff),
        bound: -0.5 * lambda * dist * dist,
        slack: 10.0 * prob.grid().max_spacing() * dist,
        distance: dist,
    })
}

/// Summary of [`check_strong_concavity`].
#[derive(Clone, Debug, Serialize)]
pub struct StrongConcavityReport {
    pub lambda: f64,
    pub trials: usize,
    pub passed: usize,
    /// Generated pairs rejected by the convex-mix side condition.
    pub skipped: usize,
    /// Largest `gap − bound` over trials.
    pub worst_margin: f64,
    /// Largest `(gap − bound) / ‖g − f‖²`.
    pub worst_relative_margin: f64,
    pub pass: bool,
}

fn certified_set(
    prob: &BarycenterProblem,
    params: &PotentialClassParams,
    rng: &mut ChaCha8Rng,
) -> Result<Option<PotentialSet>> {
    let specs: Vec<FabSpec> = (0..prob.m() - 1)
        .map(|_| random_fab_spec(params, prob.grid(), rng))
        .collect();
    if !mix_is_convex(&specs, prob.weights()) {
        return Ok(None);
    }
    let pots = specs
        .iter()
        .map(|s| make_fab_potential(params, s, prob.grid()))
        .collect::<Result<Vec<_>>>()?;
    let mut ps = PotentialSet::new(pots, prob.weights().to_vec())?;
    ps.normalize();
    Ok(Some(ps))
}

/// Random certified pairs `(f, g)`; each must satisfy
/// `D(g) − D(f) − ⟨∇D(f), g − f⟩ ≤ −(λ/2)‖g − f‖² + 10h‖g − f‖`.
pub fn check_strong_concavity(
    prob: &BarycenterProblem,
    params: &PotentialClassParams,
    trials: usize,
    seed: u64,
) -> Result<StrongConcavityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut done, mut passed, mut skipped) = (0, 0, 0);
    let (mut worst, mut worst_rel) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    while done < trials {
        if skipped > 100 * trials.max(1) {
            return Err(Error::InvalidArgument(
                "class parameters leave no room for a convex mix".into(),
            ));
        }
        let (Some(f), Some(g)) = (
            certified_set(prob, params, &mut rng)?,
            certified_set(prob, params, &mut rng)?,
        ) else {
            skipped += 1;
            continue;
        };
        let t = strong_concavity_trial(prob, params, &f, &g)?;
        worst = worst.max(t.margin());
        if t.distance > 0.0 {
            worst_rel = worst_rel.max(t.margin() / (t.distance * t.distance));
        }
        passed += usize::from(t.holds());
        done += 1;
    }
    Ok(StrongConcavityReport {
        lambda: concavity_constant(prob, params),
        trials: done,
        passed,
        skipped,
        worst_margin: worst,
        worst_relative_margin: worst_rel,
        pass: passed == done,
    })
}

/// Settings for [`check_pl_inequality`].
#[derive(Clone, Debug)]
pub struct PlSettings {
    /// Trajectories: the first starts at zero, the rest at random certified points.
    pub trajectories: usize,
    /// Iterates inspected per trajectory.
    pub points: usize,
    pub seed: u64,
    /// Solver used for the reference optimum.
    pub reference: SgaConfig,
}

impl Default for PlSettings {
    fn default() -> Self {
        Self {
            trajectories: 3,
            points: 50,
            seed: 0,
            reference: SgaConfig {
                step: 1.0,
                max_iter: 5000,
                tol: 1e-7,
            },
        }
    }
}

/// Summary of [`check_pl_inequality`].
#[derive(Clone, Debug, Serialize)]
pub struct PlReport {
    pub lambda: f64,
    pub reference_value: f64,
    pub trajectories: usize,
    pub points_checked: usize,
    pub violations: usize,
    /// Largest `(D* − D(f)) / (‖∇D(f)‖²/(2λ) + slack)`.
    pub worst_ratio: f64,
    /// Optimality gap nonincreasing along every trajectory.
    pub monotone: bool,
    pub pass: bool,
}

/// Checks `D* − D(f_t) ≤ ‖∇D(f_t)‖²/(2λ) + 10h‖∇D(f_t)‖` along ascent
/// trajectories, with `D*` from a high-precision solve.
pub fn check_pl_inequality(
    prob: &BarycenterProblem,
    params: &PotentialClassParams,
    settings: &PlSettings,
) -> Result<PlReport> {
    let lambda = concavity_constant(prob, params);
    let h = prob.grid().max_spacing();
    let zero = PotentialSet::zeros(prob);
    let (_, reference) = sga_solve_observed(prob, &zero, &settings.reference, |_| {})?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let traj_cfg = SgaConfig {
        max_iter: settings.points.saturating_sub(1),
        tol: 0.0,
        ..settings.reference.clone()
    };
    let mut records: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut best = reference.value;
    for t in 0..settings.trajectories {
        let init = if t == 0 {
            zero.clone()
        } else {
            let mut tries = 0;
            loop {
                if let Some(ps) = certified_set(prob, params, &mut rng)? {
                    break ps;
                }
                tries += 1;
                if tries > 1000 {
                    return Err(Error::InvalidArgument(
                        "could not draw a certified initial point".into(),
                    ));
                }
            }
        };
        let mut rec = Vec::new();
        sga_solve_observed(prob, &init, &traj_cfg, |it| rec.push((it.value, it.grad_norm)))?;
        best = rec.iter().map(|r| r.0).fold(best, f64::max);
        records.push(rec);
    }
    let (mut checked, mut violations, mut worst) = (0, 0, f64::NEG_INFINITY);
    let mut monotone = true;
    for rec in &records {
        let mut prev = f64::INFINITY;
        for &(value, gn) in rec {
            let gap = best - value;
            let allowed = gn * gn / (2.0 * lambda) + 10.0 * h * gn + 1e-12;
            worst = worst.max(gap / allowed);
            violations += usize::from(gap > allowed);
            monotone &= gap <= prev + 1e-8;
            prev = gap;
            checked += 1;
        }
    }
    Ok(PlReport {
        lambda,
        reference_value: best,
        trajectories: records.len(),
        points_checked: checked,
        violations,
        worst_ratio: worst,
        monotone,
        pass: violations == 0 && monotone && records.len() == settings.trajectories,
    })
}

/// Outcome of [`check_bounded_potentials`].
#[derive(Clone, Debug, Serialize)]
pub struct BoundedPotentialReport {
    /// `‖c‖_∞ = ½ diam(Ω)²`.
    pub cost_sup: f64,
    pub min_potential: f64,
    pub max_potential: f64,
    /// Largest `‖T_{f_i^c}(x)‖ = ‖∇φ_i*(x)‖` over nodes and components.
    pub max_map_norm: f64,
    /// `2 √(‖c‖_∞ / α)`.
    pub map_norm_bound: f64,
    pub pass: bool,
}

/// Checks `−‖c‖_∞ − tol ≤ f_i ≤ tol` for every component (`f_mix` after
/// shifting it to sup 0) and the gradient bound `‖∇φ*‖ ≤ 2 √(‖c‖_∞/α)`.
pub fn check_bounded_potentials(
    ps: &PotentialSet,
    prob: &BarycenterProblem,
    params: &PotentialClassParams,
    tol: f64,
) -> Result<BoundedPotentialReport> {
    super::check_grids(ps, prob)?;
    let grid = prob.grid();
    let cost_sup = 0.5 * grid.diameter_sq();
    let mix = super::f_mix(ps)?;
    let mut comps: Vec<&GridPotential> = ps.potentials().iter().collect();
    comps.push(&mix);
    let (mut lo, mut hi, mut map) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for (i, p) in comps.into_iter().enumerate() {
        // f_mix is determined by the others; only its oscillation is meaningful
        let shift = if i + 1 == prob.m() { p.sup() } else { 0.0 };
        lo = lo.min(p.inf() - shift);
        hi = hi.max(p.sup() - shift);
        let ct = crate::ctransform::c_transform_with_map(p);
        for &k in &ct.argmin {
            let y = grid.point(k);
            map = map.max((y[0] * y[0] + y[1] * y[1]).sqrt());
        }
    }
    let map_norm_bound = 2.0 * (cost_sup / params.alpha).sqrt();
    Ok(BoundedPotentialReport {
        cost_sup,
        min_potential: lo,
        max_potential: hi,
        max_map_norm: map,
        map_norm_bound,
        pass: lo >= -cost_sup - tol && hi <= tol && map <= map_norm_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDensity;

    fn bounded_problem(grid: &Grid, m: usize) -> BarycenterProblem {
        let dens = (0..m)
            .map(|j| {
                let c = 0.35 + 0.15 * j as f64;
                GridDensity::from_fn(grid.clone(), |x| {
                    0.5 + (-(x[0] - c).powi(2) / 0.02).exp()
                })
                .unwrap()
            })
            .collect();
        BarycenterProblem::uniform(dens).unwrap()
    }

    #[test]
    fn identical_pair_has_zero_terms() {
        let g = Grid::line(0.0, 1.0, 128).unwrap();
        let prob = bounded_problem(&g, 2);
        let params = PotentialClassParams::new(1.0, 1.0).unwrap();
        let f = PotentialSet::new(
            vec![GridPotential::from_fn(g.clone(), |x| 0.03 * x[0]).unwrap()],
            vec![0.5, 0.5],
        )
        .unwrap();
        let t = strong_concavity_trial(&prob, &params, &f, &f).unwrap();
        assert_eq!(t.gap, 0.0);
        assert_eq!(t.bound, 0.0);
        assert!(t.holds());
    }

    #[test]
    fn linear_potentials_are_strictly_inside() {
        let g = Grid::line(0.0, 1.0, 256).unwrap();
        let prob = bounded_problem(&g, 2);
        let params = PotentialClassParams::new(1.0, 1.0).unwrap();
        let lin = |b: f64| {
            PotentialSet::new(
                vec![GridPotential::from_fn(g.clone(), move |x| b * x[0]).unwrap()],
                vec![0.5, 0.5],
            )
            .unwrap()
        };
        let t = strong_concavity_trial(&prob, &params, &lin(0.02), &lin(-0.03)).unwrap();
        assert!(t.margin() < 0.0, "{t:?}");
    }

    #[test]
    fn random_pairs_pass() {
        let g = Grid::line(0.0, 1.0, 128).unwrap();
        let prob = bounded_problem(&g, 3);
        let params = PotentialClassParams::new(0.8, 1.25).unwrap();
        let r = check_strong_concavity(&prob, &params, 20, 1).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.trials, 20);
    }

    #[test]
    fn generated_specs_are_certified() {
        let g = Grid::square(0.0, 1.0, 16).unwrap();
        let params = PotentialClassParams::new(0.7, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = random_fab_spec(&params, &g, &mut rng);
            assert!(make_fab_potential(&params, &s, &g).is_ok());
        }
    }

    #[test]
    fn mix_condition() {
        let s = |c: f64| FabSpec::quadratic(c, vec![0.0]);
        assert!(mix_is_convex(&[s(1.3)], &[0.5, 0.5]));
        assert!(mix_is_convex(&[s(2.0)], &[0.5, 0.5]));
        assert!(!mix_is_convex(&[s(2.1)], &[0.5, 0.5]));
        assert!(!mix_is_convex(&[s(1.3), s(1.3)], &[0.45, 0.45, 0.1]));
    }
}
