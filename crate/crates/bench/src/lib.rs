//! Fixtures shared by the kernel benchmarks.

use bary_core::experiments::MarginalSpec;
use bary_core::{BarycenterProblem, Grid, GridDensity, GridPotential};

pub fn line(n: usize) -> Grid {
    Grid::line(0.0, 1.0, n).expect("valid grid")
}

pub fn gaussian(grid: &Grid, mean: f64, sd: f64) -> GridDensity {
    MarginalSpec::truncated_gaussian(&[mean], &[sd])
        .density(grid)
        .expect("valid density")
}

/// `m` Gaussians with means spread over `[0.3, 0.7]`, uniform weights.
pub fn problem(grid: &Grid, m: usize) -> BarycenterProblem {
    let dens = (0..m)
        .map(|j| {
            let t = j as f64 / (m.max(2) - 1) as f64;
            gaussian(grid, 0.3 + 0.4 * t, 0.06 + 0.04 * t)
        })
        .collect();
    BarycenterProblem::uniform(dens).expect("valid problem")
}

/// A wiggly potential, away from any special structure.
pub fn potential(grid: &Grid) -> GridPotential {
    GridPotential::from_fn(grid.clone(), |x| {
        let s: f64 = x.iter().sum();
        0.1 * s + 0.03 * (9.0 * s).sin()
    })
    .expect("valid potential")
}
