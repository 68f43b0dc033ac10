//! Monte Carlo runners for the rate experiments.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::spec::{ExperimentSpec, MarginalSpec, Mode, PopulationSpec};
use super::stats::{derive_seed, fit_rate, mean};
use super::{Exclusion, ExperimentOutput, Row};
use crate::density::estimate_density;
use crate::error::{Error, Result};
use crate::grid::{sample, Grid, GridDensity, GridFunction, SignedGridMeasure};
use crate::oracles::{
    barycenter_1d_quantiles, barycenter_functional_oracle, quantiles_at, w1_1d, w1_to_quantiles,
    w2_1d, QuantileRep,
};
use crate::semidual::{reconstruct_barycenter, sga_solve, BarycenterProblem, PotentialSet, SgaConfig};
use crate::sobolev::PoissonSolver;

/// Tag mixed into latent-layer seeds so they never collide with sample seeds.
const LATENT: u64 = 0x1A7E;

/// Metrics of one replication, or the reason it was dropped.
type RepOutcome = std::result::Result<Vec<(&'static str, f64)>, String>;

struct Cell {
    n: usize,
    m: usize,
    m_outer: Option<usize>,
    rep: usize,
    seed: u64,
}

/// Collects replication outcomes into rows, per-ladder samples and exclusions.
struct Collector {
    mode: Mode,
    d: usize,
    rows: Vec<Row>,
    exclusions: Vec<Exclusion>,
}

impl Collector {
    fn new(spec: &ExperimentSpec) -> Self {
        Self {
            mode: spec.mode,
            d: spec.d,
            rows: Vec::new(),
            exclusions: Vec::new(),
        }
    }

    /// Records the outcomes of one ladder point and returns retained values per metric.
    fn push(&mut self, cells: &[Cell], outcomes: Vec<RepOutcome>) -> BTreeMap<&'static str, Vec<f64>> {
        let mut by_metric: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
        for (c, out) in cells.iter().zip(outcomes) {
            match out {
                Ok(metrics) => {
                    for (name, value) in metrics {
                        self.rows.push(Row {
                            mode: self.mode.as_str().to_string(),
                            d: self.d,
                            m: c.m,
                            n: c.n,
                            m_outer: c.m_outer,
                            rep: c.rep,
                            seed: c.seed,
                            metric: name.to_string(),
                            value,
                        });
                        by_metric.entry(name).or_default().push(value);
                    }
                }
                Err(cause) => {
                    eprintln!(
                        "excluded replication: n={} m={} rep={} seed={}: {cause}",
                        c.n, c.m, c.rep, c.seed
                    );
                    self.exclusions.push(Exclusion {
                        n: c.n,
                        m: c.m,
                        rep: c.rep,
                        seed: c.seed,
                        cause,
                    });
                }
            }
        }
        by_metric
    }
}

fn estimate_all(
    truth: &[GridDensity],
    n: usize,
    seed: u64,
    spec: &ExperimentSpec,
    grid: &Grid,
) -> Result<Vec<GridDensity>> {
    truth
        .iter()
        .enumerate()
        .map(|(j, mu)| {
            let s = sample(mu, n, derive_seed(&[seed, j as u64]));
            estimate_density(&s, &spec.estimator, grid)
        })
        .collect()
}

/// Solver settings for reference values computed on the true marginals.
fn reference_solver(spec: &ExperimentSpec) -> SgaConfig {
    SgaConfig {
        max_iter: spec.solver.max_iter.max(5000),
        tol: spec.solver.tol.min(1e-6),
        ..spec.solver.clone()
    }
}

fn truths(spec: &ExperimentSpec, grid: &Grid) -> Result<Vec<GridDensity>> {
    spec.marginals.iter().map(|m| m.density(grid)).collect()
}

/// Functional and barycenter rates under one-layer sampling.
pub fn run_one_layer(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let grid = spec.grid()?;
    let truth = truths(spec, &grid)?;
    let m = truth.len();
    let weights = spec.weights(m);
    let true_prob = BarycenterProblem::new(truth.clone(), weights.clone())?;
    let want_bary = spec.mode == Mode::BarycenterRate;
    if want_bary && spec.d != 1 {
        return Err(Error::UnsupportedDimension {
            dim: spec.d,
            what: "barycenter_rate",
        });
    }
    let mut diagnostics = BTreeMap::new();
    let reference = if spec.d == 1 {
        barycenter_functional_oracle(&true_prob)?
    } else {
        let (_, r) = sga_solve(&true_prob, &PotentialSet::zeros(&true_prob), &reference_solver(spec))?;
        r.value
    };
    diagnostics.insert("reference_functional".to_string(), reference);
    let oracle_q: Option<QuantileRep> = if want_bary {
        Some(barycenter_1d_quantiles(&true_prob)?)
    } else {
        None
    };

    let mut col = Collector::new(spec);
    let mut samples: BTreeMap<&'static str, Vec<Vec<f64>>> = BTreeMap::new();
    for &n in &spec.n_ladder {
        let cells: Vec<Cell> = (0..spec.replications)
            .map(|rep| Cell {
                n,
                m,
                m_outer: None,
                rep,
                seed: derive_seed(&[spec.seed, n as u64, rep as u64]),
            })
            .collect();
        let outcomes: Vec<RepOutcome> = cells
            .par_iter()
            .map(|c| {
                let run = || -> Result<Vec<(&'static str, f64)>> {
                    let est = estimate_all(&truth, n, c.seed, spec, &grid)?;
                    let prob = BarycenterProblem::new(est, weights.clone())?;
                    let (ps, report) = sga_solve(&prob, &PotentialSet::zeros(&prob), &spec.solver)?;
                    let err = report.value - reference;
                    let mut out = vec![("estimate", report.value), ("sq_error", err * err)];
                    if let Some(q) = &oracle_q {
                        let bar = reconstruct_barycenter(&ps, &prob)?;
                        out.push(("w1", w1_to_quantiles(&bar, q)?));
                    }
                    Ok(out)
                };
                run().map_err(|e| e.to_string())
            })
            .collect();
        for (k, v) in col.push(&cells, outcomes) {
            samples.entry(k).or_default().push(v);
        }
    }
    let primary = if want_bary { "w1" } else { "sq_error" };
    let secondary = if want_bary { vec!["sq_error"] } else { vec![] };
    finish(spec, col, &spec.n_ladder, samples, primary, &secondary, diagnostics)
}

/// Risks `‖μ − μ̃‖²_{Ḣ⁻¹}` and `W₂²(μ, μ̃)` of the first marginal.
pub fn run_density_rate(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let grid = spec.grid()?;
    let truth = spec.marginals[0].density(&grid)?;
    let poisson = PoissonSolver::new(&grid);
    let mut col = Collector::new(spec);
    let mut samples: BTreeMap<&'static str, Vec<Vec<f64>>> = BTreeMap::new();
    for &n in &spec.n_ladder {
        let cells: Vec<Cell> = (0..spec.replications)
            .map(|rep| Cell {
                n,
                m: 1,
                m_outer: None,
                rep,
                seed: derive_seed(&[spec.seed, n as u64, rep as u64]),
            })
            .collect();
        let outcomes: Vec<RepOutcome> = cells
            .par_iter()
            .map(|c| {
                let run = || -> Result<Vec<(&'static str, f64)>> {
                    let est = estimate_all(std::slice::from_ref(&truth), n, c.seed, spec, &grid)?
                        .remove(0);
                    let diff: SignedGridMeasure = est.difference(&truth)?;
                    let hn = poisson.hneg1_norm_values(diff.values());
                    let mut out = vec![("hneg1_sq", hn * hn)];
                    if spec.d == 1 {
                        let w = w2_1d(&est, &truth)?;
                        out.push(("w2_sq", w * w));
                    }
                    Ok(out)
                };
                run().map_err(|e| e.to_string())
            })
            .collect();
        for (k, v) in col.push(&cells, outcomes) {
            samples.entry(k).or_default().push(v);
        }
    }
    let mut diagnostics = BTreeMap::new();
    let (lo, hi) = (truth.min_value(), truth.max_value());
    diagnostics.insert("density_lower".to_string(), lo);
    diagnostics.insert("density_upper".to_string(), hi);
    if let (Some(h), Some(w)) = (samples.get("hneg1_sq"), samples.get("w2_sq")) {
        let ratios: Vec<f64> = h.iter().zip(w).map(|(a, b)| mean(a) / mean(b)).collect();
        let rmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let rmax = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        diagnostics.insert("risk_ratio_min".to_string(), rmin);
        diagnostics.insert("risk_ratio_max".to_string(), rmax);
        // ‖·‖²_{Ḣ⁻¹} ≤ U W₂² and W₂² ≤ (4/L) ‖·‖²_{Ḣ⁻¹}
        diagnostics.insert("risk_ratio_band_lo".to_string(), lo / 4.0);
        diagnostics.insert("risk_ratio_band_hi".to_string(), hi);
    }
    let secondary: Vec<&str> = if spec.d == 1 { vec!["w2_sq"] } else { vec![] };
    finish(spec, col, &spec.n_ladder, samples, "hneg1_sq", &secondary, diagnostics)
}

/// Latent draw `c (x − x₀) + x₀ + b` of the affine population.
#[derive(Clone, Copy, Debug)]
struct AffineDraw {
    scale: f64,
    shift: f64,
}

struct Population {
    reference: GridDensity,
    /// Population barycenter: the reference scaled by the mean of `c`.
    truth: GridDensity,
    centre: f64,
    support: (f64, f64),
    spec: PopulationSpec,
}

impl Population {
    fn new(spec: &PopulationSpec, grid: &Grid) -> Result<Self> {
        let reference = spec.reference.density(grid)?;
        let centre = match &spec.reference {
            MarginalSpec::TruncatedGaussian { mean, .. } => mean[0],
            MarginalSpec::Uniform { lo, hi, .. } => 0.5 * (lo[0] + hi[0]),
        };
        let q = quantiles_at(&reference, &[1e-6, 1.0 - 1e-6])?;
        let mut pop = Self {
            truth: reference.clone(),
            reference,
            centre,
            support: (q.values()[0], q.values()[1]),
            spec: spec.clone(),
        };
        let (k, l) = spec.scale;
        pop.truth = pop.latent_density(
            AffineDraw {
                scale: 0.5 * (k + l),
                shift: 0.0,
            },
            grid,
        )?;
        Ok(pop)
    }

    /// Draws a map, halving the shift until the image of the support fits in Ω.
    fn draw(&self, rng: &mut ChaCha8Rng, grid: &Grid) -> AffineDraw {
        let (k, l) = self.spec.scale;
        let scale = if l > k { rng.random_range(k..=l) } else { k };
        let mut shift = if self.spec.max_shift > 0.0 {
            rng.random_range(-self.spec.max_shift..=self.spec.max_shift)
        } else {
            0.0
        };
        let image = |s: f64, b: f64| {
            let f = |x: f64| s * (x - self.centre) + self.centre + b;
            (f(self.support.0), f(self.support.1))
        };
        for _ in 0..60 {
            let (a, b) = image(scale, shift);
            if a >= grid.lo(0) && b <= grid.hi(0) {
                break;
            }
            shift *= 0.5;
        }
        AffineDraw { scale, shift }
    }

    fn latent_density(&self, a: AffineDraw, grid: &Grid) -> Result<GridDensity> {
        let (lo, hi) = (grid.lo(0), grid.hi(0));
        let values = grid.tabulate(|y| {
            let x = (y[0] - self.centre - a.shift) / a.scale + self.centre;
            if x < lo || x > hi {
                0.0
            } else {
                grid.interpolate(self.reference.values(), &[x]) / a.scale
            }
        });
        GridDensity::normalized(grid.clone(), values)
    }
}

/// Two-layer sampling: latent measures from an affine population, then `n`
/// samples from each; error is `W₁` to the population barycenter.
pub fn run_two_layer(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let grid = spec.grid()?;
    let pop_spec = spec
        .population
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("two_layer needs a population".into()))?;
    let pop = Population::new(pop_spec, &grid)?;
    let mut col = Collector::new(spec);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("support_lo".to_string(), pop.support.0);
    diagnostics.insert("support_hi".to_string(), pop.support.1);

    let run_cell = |c: &Cell, metric: &'static str| -> RepOutcome {
        let run = || -> Result<Vec<(&'static str, f64)>> {
            // latent draws depend on (seed, m, rep) only, shared across n
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, LATENT, c.m as u64, c.rep as u64]));
            let latent = (0..c.m)
                .map(|_| pop.latent_density(pop.draw(&mut rng, &grid), &grid))
                .collect::<Result<Vec<_>>>()?;
            let est = estimate_all(&latent, c.n, c.seed, spec, &grid)?;
            let prob = BarycenterProblem::uniform(est)?;
            let (ps, _) = sga_solve(&prob, &PotentialSet::zeros(&prob), &spec.solver)?;
            let bar = reconstruct_barycenter(&ps, &prob)?;
            Ok(vec![(metric, w1_1d(&bar, &pop.truth)?)])
        };
        run().map_err(|e| e.to_string())
    };

    let mut results = Vec::new();
    if !spec.m_ladder.is_empty() {
        let n = spec.n_fixed.expect("validated");
        let mut per_m = Vec::new();
        for &m in &spec.m_ladder {
            let cells: Vec<Cell> = (0..spec.replications)
                .map(|rep| Cell {
                    n,
                    m,
                    m_outer: Some(m),
                    rep,
                    seed: derive_seed(&[spec.seed, n as u64, m as u64, rep as u64]),
                })
                .collect();
            let outcomes: Vec<RepOutcome> = cells.par_iter().map(|c| run_cell(c, "w1_vs_m")).collect();
            per_m.push(col.push(&cells, outcomes).remove("w1_vs_m").unwrap_or_default());
        }
        let excl = col.exclusions.len();
        results.push(fit_rate("w1_vs_m", &spec.m_ladder, &per_m, excl, spec.seed));
    }
    if !spec.n_ladder.is_empty() {
        let m = spec.m_fixed.expect("validated");
        let before = col.exclusions.len();
        let mut per_n = Vec::new();
        for &n in &spec.n_ladder {
            let cells: Vec<Cell> = (0..spec.replications)
                .map(|rep| Cell {
                    n,
                    m,
                    m_outer: Some(m),
                    rep,
                    seed: derive_seed(&[spec.seed, n as u64, m as u64, rep as u64]),
                })
                .collect();
            let outcomes: Vec<RepOutcome> = cells.par_iter().map(|c| run_cell(c, "w1_vs_n")).collect();
            per_n.push(col.push(&cells, outcomes).remove("w1_vs_n").unwrap_or_default());
        }
        let excl = col.exclusions.len() - before;
        results.push(fit_rate("w1_vs_n", &spec.n_ladder, &per_n, excl, spec.seed));
    }
    Ok(ExperimentOutput {
        mode: spec.mode,
        rows: col.rows,
        results,
        exclusions: col.exclusions,
        diagnostics,
        properties: None,
    })
}

fn finish(
    spec: &ExperimentSpec,
    col: Collector,
    ladder: &[usize],
    samples: BTreeMap<&'static str, Vec<Vec<f64>>>,
    primary: &str,
    secondary: &[&str],
    diagnostics: BTreeMap<String, f64>,
) -> Result<ExperimentOutput> {
    let excluded = col.exclusions.len();
    let mut results = Vec::new();
    for name in std::iter::once(&primary).chain(secondary) {
        let s = samples
            .get(*name)
            .filter(|s| s.len() == ladder.len() && s.iter().all(|v| !v.is_empty()))
            .ok_or_else(|| {
                Error::NoConvergence(format!("every replication excluded at some ladder point ({name})"))
            })?;
        results.push(fit_rate(name, ladder, s, excluded, spec.seed));
    }
    Ok(ExperimentOutput {
        mode: spec.mode,
        rows: col.rows,
        results,
        exclusions: col.exclusions,
        diagnostics,
        properties: None,
    })
}

