//! Oracle problems read from JSON: exact 1-D barycenters on a grid, or the
//! fixed-support LP for small discrete measures.

use serde::{Deserialize, Serialize};

use super::spec::MarginalSpec;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::oracles::{
    barycenter_1d_oracle, barycenter_1d_quantiles, barycenter_functional_oracle,
    lp_barycenter_fixed_support, quantiles_at, w2_1d, DiscreteMeasure, LpBarycenter,
};
use crate::semidual::{sga_solve, BarycenterProblem, PotentialSet, SgaConfig};

fn default_domain() -> (f64, f64) {
    (0.0, 1.0)
}
fn default_grid_size() -> usize {
    257
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleProblem {
    /// Densities on `[lo, hi]`, solved through quantile functions.
    Grid {
        #[serde(default = "default_domain")]
        domain: (f64, f64),
        #[serde(default = "default_grid_size")]
        grid_size: usize,
        marginals: Vec<MarginalSpec>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        /// Also run the gradient solver and report its value.
        #[serde(default)]
        compare_solver: bool,
    },
    /// Discrete measures with a candidate barycenter support.
    Discrete {
        marginals: Vec<DiscreteMeasure>,
        support: Vec<Vec<f64>>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleReport {
    Grid {
        functional: f64,
        /// Barycenter quantiles at levels 0.1, …, 0.9.
        deciles: Vec<f64>,
        barycenter_mean: f64,
        w2_to_marginals: Vec<f64>,
        /// Barycenter density at the grid nodes.
        density: Vec<f64>,
        solver_value: Option<f64>,
    },
    Discrete(LpBarycenter),
}

fn uniform_weights(w: &Option<Vec<f64>>, m: usize) -> Vec<f64> {
    w.clone().unwrap_or_else(|| vec![1.0 / m as f64; m])
}

pub fn solve_oracle(problem: &OracleProblem) -> Result<OracleReport> {
    match problem {
        OracleProblem::Grid {
            domain,
            grid_size,
            marginals,
            weights,
            compare_solver,
        } => {
            let grid = Grid::line(domain.0, domain.1, *grid_size)?;
            let dens = marginals
                .iter()
                .map(|m| m.density(&grid))
                .collect::<Result<Vec<GridDensity>>>()?;
            let prob = BarycenterProblem::new(dens, uniform_weights(weights, marginals.len()))?;
            let bar = barycenter_1d_oracle(&prob)?;
            let levels: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
            let dec = quantiles_at(&bar, &levels)?;
            let q = barycenter_1d_quantiles(&prob)?;
            let mean = q.values().iter().sum::<f64>() / q.values().len() as f64;
            let w2 = prob
                .densities()
                .iter()
                .map(|mu| w2_1d(&bar, mu))
                .collect::<Result<Vec<_>>>()?;
            let solver_value = if *compare_solver {
                let cfg = SgaConfig {
                    max_iter: 5000,
                    tol: 1e-6,
                    ..SgaConfig::default()
                };
                Some(sga_solve(&prob, &PotentialSet::zeros(&prob), &cfg)?.1.value)
            } else {
                None
            };
            Ok(OracleReport::Grid {
                functional: barycenter_functional_oracle(&prob)?,
                deciles: dec.values().to_vec(),
                barycenter_mean: mean,
                w2_to_marginals: w2,
                density: bar.into_values(),
                solver_value,
            })
        }
        OracleProblem::Discrete {
            marginals,
            support,
            weights,
        } => {
            if marginals.is_empty() {
                return Err(Error::InvalidArgument("no marginals".into()));
            }
            let w = uniform_weights(weights, marginals.len());
            Ok(OracleReport::Discrete(lp_barycenter_fixed_support(marginals, support, &w)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_problem_round_trip() {
        let p: OracleProblem = serde_json::from_str(
            r#"{"kind": "discrete",
                "marginals": [{"points": [[0.0]], "masses": [1.0]}, {"points": [[1.0]], "masses": [1.0]}],
                "support": [[0.0], [0.5], [1.0]]}"#,
        )
        .unwrap();
        match solve_oracle(&p).unwrap() {
            OracleReport::Discrete(b) => {
                assert!((b.masses[1] - 1.0).abs() < 1e-9);
                assert!((b.value - 0.125).abs() < 1e-9);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn bad_masses_are_rejected() {
        let r: std::result::Result<OracleProblem, _> = serde_json::from_str(
            r#"{"kind": "discrete", "marginals": [{"points": [[0.0]], "masses": [0.5]}], "support": [[0.0]]}"#,
        );
        assert!(r.is_err());
    }
}
