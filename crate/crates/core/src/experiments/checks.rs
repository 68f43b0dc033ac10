//! Solver-level checks against the exact 1-D oracles: strong duality on random
//! instances and barycenter recovery from samples.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::spec::MarginalSpec;
use super::stats::{derive_seed, mean};
use crate::density::{estimate_density, EstimatorConfig};
use crate::error::Result;
use crate::grid::{sample, Grid, GridDensity};
use crate::oracles::{barycenter_1d_quantiles, barycenter_functional_oracle, w1_to_quantiles};
use crate::semidual::{reconstruct_barycenter, sga_solve, BarycenterProblem, PotentialSet, SgaConfig};

#[derive(Clone, Debug, Serialize)]
pub struct GapRecord {
    pub weights: Vec<f64>,
    pub solver_value: f64,
    pub oracle_value: f64,
    pub relative_gap: f64,
}

/// Random `m ∈ {2, 3}` truncated-Gaussian instances: solver value against the
/// exact functional.
pub fn duality_gap_study(seed: u64, instances: usize, grid_size: usize) -> Result<Vec<GapRecord>> {
    let grid = Grid::line(0.0, 1.0, grid_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xD6A9]));
    (0..instances)
        .map(|_| {
            let m = rng.random_range(2..=3);
            let dens = (0..m)
                .map(|_| {
                    let mu = rng.random_range(0.3..0.7);
                    let sd = rng.random_range(0.05..0.12);
                    MarginalSpec::truncated_gaussian(&[mu], &[sd]).density(&grid)
                })
                .collect::<Result<Vec<_>>>()?;
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let prob = BarycenterProblem::new(dens, weights.clone())?;
            let (_, report) = sga_solve(&prob, &PotentialSet::zeros(&prob), &SgaConfig::default())?;
            let oracle = barycenter_functional_oracle(&prob)?;
            Ok(GapRecord {
                weights,
                solver_value: report.value,
                oracle_value: oracle,
                relative_gap: (report.value - oracle).abs() / oracle,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub n: usize,
    pub replications: usize,
    pub h: f64,
    /// Mean `W₁` from the solver's barycenter to the true oracle barycenter.
    pub w1: f64,
    /// Mean `W₁` of the exact barycenter of the estimates to the truth.
    pub statistical_floor: f64,
    /// `W₁` of the solver on the true densities (no sampling).
    pub w1_population: f64,
    pub bound: f64,
    pub pass: bool,
}

/// The two-Gaussian instance `N(0.35, 0.08²)`, `N(0.65, 0.12²)`, `ω = (½, ½)`.
pub fn standard_instance(grid: &Grid) -> Result<BarycenterProblem> {
    let dens = [(0.35, 0.08), (0.65, 0.12)]
        .iter()
        .map(|(m, s)| MarginalSpec::truncated_gaussian(&[*m], &[*s]).density(grid))
        .collect::<Result<Vec<GridDensity>>>()?;
    BarycenterProblem::uniform(dens)
}

/// Reconstructs the barycenter from `n` samples per marginal and compares it
/// with `5h + 3 · statistical floor`.
pub fn barycenter_recovery(seed: u64, n: usize, replications: usize, grid_size: usize) -> Result<RecoveryReport> {
    let grid = Grid::line(0.0, 1.0, grid_size)?;
    let truth = standard_instance(&grid)?;
    let oracle = barycenter_1d_quantiles(&truth)?;
    let cfg = SgaConfig::default();
    let (ps, _) = sga_solve(&truth, &PotentialSet::zeros(&truth), &cfg)?;
    let w1_population = w1_to_quantiles(&reconstruct_barycenter(&ps, &truth)?, &oracle)?;
    let (mut solver, mut floor) = (Vec::new(), Vec::new());
    for rep in 0..replications {
        let est = truth
            .densities()
            .iter()
            .enumerate()
            .map(|(j, mu)| {
                let s = sample(mu, n, derive_seed(&[seed, n as u64, rep as u64, j as u64]));
                estimate_density(&s, &EstimatorConfig::default(), &grid)
            })
            .collect::<Result<Vec<_>>>()?;
        let prob = BarycenterProblem::uniform(est)?;
        let exact = barycenter_1d_quantiles(&prob)?;
        floor.push(exact.distance(&oracle, 1.0)?);
        let (ps, _) = sga_solve(&prob, &PotentialSet::zeros(&prob), &cfg)?;
        solver.push(w1_to_quantiles(&reconstruct_barycenter(&ps, &prob)?, &oracle)?);
    }
    let h = grid.max_spacing();
    let (w1, statistical_floor) = (mean(&solver), mean(&floor));
    let bound = 5.0 * h + 3.0 * statistical_floor;
    Ok(RecoveryReport {
        n,
        replications,
        h,
        w1,
        statistical_floor,
        w1_population,
        bound,
        pass: w1 <= bound,
    })
}
