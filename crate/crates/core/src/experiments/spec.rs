//! JSON experiment specifications.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ctransform::PotentialClassParams;
use crate::density::EstimatorConfig;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::semidual::SgaConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FunctionalRate,
    BarycenterRate,
    DensityRate,
    TwoLayer,
    PropertySuite,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FunctionalRate => "functional_rate",
            Mode::BarycenterRate => "barycenter_rate",
            Mode::DensityRate => "density_rate",
            Mode::TwoLayer => "two_layer",
            Mode::PropertySuite => "property_suite",
        }
    }
}

/// A marginal law on the grid box. `floor ∈ [0, 1)` mixes in the uniform
/// law so that the density is bounded below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    /// Gaussian restricted to the box, per-axis mean and standard deviation.
    TruncatedGaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
        #[serde(default)]
        floor: f64,
    },
    /// Uniform on a sub-box.
    Uniform {
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default)]
        floor: f64,
    },
}

impl MarginalSpec {
    pub fn truncated_gaussian(mean: &[f64], sd: &[f64]) -> Self {
        MarginalSpec::TruncatedGaussian {
            mean: mean.to_vec(),
            sd: sd.to_vec(),
            floor: 0.0,
        }
    }

    fn floor(&self) -> f64 {
        match self {
            MarginalSpec::TruncatedGaussian { floor, .. } | MarginalSpec::Uniform { floor, .. } => {
                *floor
            }
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let (a, b) = match self {
            MarginalSpec::TruncatedGaussian { mean, sd, .. } => {
                if sd.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::InvalidArgument("sd must be positive".into()));
                }
                (mean.len(), sd.len())
            }
            MarginalSpec::Uniform { lo, hi, .. } => {
                if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    return Err(Error::InvalidArgument("uniform needs lo < hi".into()));
                }
                (lo.len(), hi.len())
            }
        };
        if a != d || b != d {
            return Err(Error::InvalidArgument(format!(
                "marginal parameters do not match d = {d}"
            )));
        }
        if !(0.0..1.0).contains(&self.floor()) {
            return Err(Error::InvalidArgument("floor must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Unnormalised shape at `x` (before the uniform floor).
    fn shape(&self, x: &[f64]) -> f64 {
        match self {
            MarginalSpec::TruncatedGaussian { mean, sd, .. } => {
                let q: f64 = x
                    .iter()
                    .zip(mean.iter().zip(sd))
                    .map(|(x, (m, s))| ((x - m) / s).powi(2))
                    .sum();
                (-0.5 * q).exp()
            }
            MarginalSpec::Uniform { lo, hi, .. } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(x, (l, h))| *x >= *l && *x <= *h);
                f64::from(u8::from(inside))
            }
        }
    }

    /// Tabulated density, normalised on the grid.
    pub fn density(&self, grid: &Grid) -> Result<GridDensity> {
        self.validate(grid.dim())?;
        let shape = GridDensity::from_fn(grid.clone(), |x| self.shape(x))?;
        let floor = self.floor();
        if floor == 0.0 {
            return Ok(shape);
        }
        let u = 1.0 / grid.volume();
        let values = shape
            .into_values()
            .into_iter()
            .map(|v| (1.0 - floor) * v + floor * u)
            .collect();
        GridDensity::normalized(grid.clone(), values)
    }
}

/// Affine population for the two-layer mode: latent measures are laws of
/// `c (X − x₀) + x₀ + b` with `X ~ reference`, `c ~ U[κ, λ]`, `b ~ U[−B, B]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub reference: MarginalSpec,
    /// `(κ, λ)`; the population barycenter is the reference when the
    /// interval is centred at 1.
    pub scale: (f64, f64),
    pub max_shift: f64,
}

impl PopulationSpec {
    fn validate(&self) -> Result<()> {
        let (k, l) = self.scale;
        if !(k > 0.0 && l >= k && l - k < 1.0) {
            return Err(Error::InvalidArgument(
                "population scales need 0 < κ ≤ λ and λ − κ < 1".into(),
            ));
        }
        if !(self.max_shift >= 0.0) {
            return Err(Error::InvalidArgument("max_shift must be nonnegative".into()));
        }
        Ok(())
    }
}

fn default_d() -> usize {
    1
}
fn default_grid_size() -> usize {
    257
}
fn default_domain() -> (f64, f64) {
    (0.0, 1.0)
}
fn default_replications() -> usize {
    30
}

/// One experiment, as read from JSON. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Barycentric weights; uniform over the marginals when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub marginals: Vec<MarginalSpec>,
    #[serde(default)]
    pub n_ladder: Vec<usize>,
    /// Two-layer: numbers of latent measures for the m-sweep.
    #[serde(default)]
    pub m_ladder: Vec<usize>,
    /// Two-layer: sample size held fixed during the m-sweep.
    #[serde(default)]
    pub n_fixed: Option<usize>,
    /// Two-layer: number of latent measures held fixed during the n-sweep.
    #[serde(default)]
    pub m_fixed: Option<usize>,
    #[serde(default)]
    pub population: Option<PopulationSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
    #[serde(default)]
    pub solver: SgaConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Property suite: curvature band of the certified generators.
    #[serde(default)]
    pub class: Option<PotentialClassParams>,
    /// CSV destination; the summary goes next to it with `.summary.json`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<Grid> {
        let (lo, hi) = self.domain;
        match self.d {
            1 => Grid::line(lo, hi, self.grid_size),
            2 => Grid::square(lo, hi, self.grid_size),
            d => Err(Error::UnsupportedDimension {
                dim: d,
                what: "experiments",
            }),
        }
    }

    pub fn weights(&self, m: usize) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / m as f64; m])
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.estimator.validate()?;
        let rate_mode = !matches!(self.mode, Mode::PropertySuite);
        let strictly_increasing = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if rate_mode && self.replications < 10 {
            return Err(Error::InvalidArgument("rate modes need replications >= 10".into()));
        }
        match self.mode {
            Mode::FunctionalRate | Mode::BarycenterRate | Mode::DensityRate => {
                if self.n_ladder.len() < 3 || !strictly_increasing(&self.n_ladder) {
                    return Err(Error::InvalidArgument(
                        "n_ladder must be strictly increasing with at least 3 points".into(),
                    ));
                }
                if self.n_ladder[0] == 0 {
                    return Err(Error::InvalidArgument("sample sizes must be positive".into()));
                }
                let need = if self.mode == Mode::DensityRate { 1 } else { 2 };
                if self.marginals.len() < need {
                    return Err(Error::InvalidArgument(format!(
                        "mode needs at least {need} marginals"
                    )));
                }
                for mg in &self.marginals {
                    mg.validate(self.d)?;
                }
                if let Some(w) = &self.weights {
                    if w.len() != self.marginals.len() {
                        return Err(Error::InvalidArgument("one weight per marginal".into()));
                    }
                }
            }
            Mode::TwoLayer => {
                let pop = self
                    .population
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("two_layer needs a population".into()))?;
                pop.validate()?;
                pop.reference.validate(self.d)?;
                if self.d != 1 {
                    return Err(Error::UnsupportedDimension {
                        dim: self.d,
                        what: "two_layer",
                    });
                }
                let m_sweep = !self.m_ladder.is_empty();
                let n_sweep = !self.n_ladder.is_empty();
                if !m_sweep && !n_sweep {
                    return Err(Error::InvalidArgument("two_layer needs m_ladder or n_ladder".into()));
                }
                if m_sweep
                    && (self.m_ladder.len() < 3
                        || !strictly_increasing(&self.m_ladder)
                        || self.m_ladder[0] < 2
                        || self.n_fixed.is_none())
                {
                    return Err(Error::InvalidArgument(
                        "m_ladder needs >= 3 increasing values >= 2 and n_fixed".into(),
                    ));
                }
                if n_sweep
                    && (self.n_ladder.len() < 3
                        || !strictly_increasing(&self.n_ladder)
                        || self.m_fixed.is_none_or(|m| m < 2))
                {
                    return Err(Error::InvalidArgument(
                        "n_ladder needs >= 3 increasing values and m_fixed >= 2".into(),
                    ));
                }
            }
            Mode::PropertySuite => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "mode": "functional_rate",
        "marginals": [
            {"family": "truncated_gaussian", "mean": [0.35], "sd": [0.08]},
            {"family": "truncated_gaussian", "mean": [0.65], "sd": [0.12]}
        ],
        "n_ladder": [500, 1000, 2000],
        "replications": 10
    }"#;

    #[test]
    fn parses_with_defaults() {
        let s = ExperimentSpec::from_json(BASE).unwrap();
        assert_eq!(s.d, 1);
        assert_eq!(s.grid_size, 257);
        assert_eq!(s.solver, SgaConfig::default());
        assert_eq!(s.weights(2), vec![0.5, 0.5]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = BASE.replacen("\"mode\"", "\"bogus\": 1, \"mode\"", 1);
        assert!(ExperimentSpec::from_json(&bad).is_err());
        let bad = BASE.replacen("\"sd\": [0.08]", "\"sd\": [0.08], \"skew\": 2", 1);
        assert!(ExperimentSpec::from_json(&bad).is_err());
    }

    #[test]
    fn ladder_rules() {
        let short = BASE.replace("[500, 1000, 2000]", "[500, 1000]");
        assert!(ExperimentSpec::from_json(&short).is_err());
        let unsorted = BASE.replace("[500, 1000, 2000]", "[500, 2000, 1000]");
        assert!(ExperimentSpec::from_json(&unsorted).is_err());
        let few = BASE.replace("\"replications\": 10", "\"replications\": 9");
        assert!(ExperimentSpec::from_json(&few).is_err());
    }

    #[test]
    fn floor_bounds_density_below() {
        let g = Grid::line(0.0, 1.0, 128).unwrap();
        let m = MarginalSpec::TruncatedGaussian {
            mean: vec![0.5],
            sd: vec![0.05],
            floor: 0.2,
        };
        let d = m.density(&g).unwrap();
        assert!(d.min_value() >= 0.2 - 1e-9);
    }
}
