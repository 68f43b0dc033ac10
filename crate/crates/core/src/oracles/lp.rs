//! Fixed-support barycenter of small discrete measures as an exact linear
//! program, solved by a dense two-phase simplex with Bland's rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ATOMS: usize = 6;
const MAX_SUPPORT: usize = 40;
const MAX_MARGINALS: usize = 8;
const TOL: f64 = 1e-9;

/// Finitely many weighted atoms in ℝ^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::InvalidArgument("one mass per atom".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidArgument("atoms differ in dimension".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidArgument("negative atom mass".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("atom masses sum to {total}")));
        }
        Ok(Self { points, masses })
    }

    pub fn dirac(point: Vec<f64>) -> Self {
        Self {
            points: vec![point],
            masses: vec![1.0],
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    points: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;

    fn try_from(r: RawMeasure) -> Result<Self> {
        Self::new(r.points, r.masses)
    }
}

/// Optimal barycenter weights on the candidate support and the functional.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpBarycenter {
    pub support: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    pub value: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimises `Σ_j (ω_j/2) Σ ‖a − s‖² π_j(a, s)` over couplings `π_j` whose
/// first marginal is `μ_j` and whose second marginals coincide on `support`.
/// Caps: ≤ 6 atoms per marginal, ≤ 40 support points, ≤ 8 marginals.
pub fn lp_barycenter_fixed_support(
    marginals: &[DiscreteMeasure],
    support: &[Vec<f64>],
    weights: &[f64],
) -> Result<LpBarycenter> {
    let m = marginals.len();
    if m < 2 || m != weights.len() {
        return Err(Error::InvalidArgument("need m >= 2 marginals with weights".into()));
    }
    if m > MAX_MARGINALS
        || support.len() > MAX_SUPPORT
        || marginals.iter().any(|mu| mu.points.len() > MAX_ATOMS)
    {
        return Err(Error::SizeCap(format!(
            "at most {MAX_MARGINALS} marginals of {MAX_ATOMS} atoms and {MAX_SUPPORT} support points"
        )));
    }
    if support.is_empty() {
        return Err(Error::InvalidArgument("empty candidate support".into()));
    }
    let s = support.len();
    let offsets: Vec<usize> = marginals
        .iter()
        .scan(0, |acc, mu| {
            let o = *acc;
            *acc += mu.points.len() * s;
            Some(o)
        })
        .collect();
    let nvar = offsets[m - 1] + marginals[m - 1].points.len() * s;
    let var = |j: usize, k: usize, t: usize| offsets[j] + k * s + t;

    let mut cost = vec![0.0; nvar];
    for (j, mu) in marginals.iter().enumerate() {
        for (k, a) in mu.points.iter().enumerate() {
            for (t, p) in support.iter().enumerate() {
                cost[var(j, k, t)] = 0.5 * weights[j] * sq_dist(a, p);
            }
        }
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (j, mu) in marginals.iter().enumerate() {
        for (k, mass) in mu.masses.iter().enumerate() {
            let mut r = vec![0.0; nvar];
            for t in 0..s {
                r[var(j, k, t)] = 1.0;
            }
            rows.push(r);
            rhs.push(*mass);
        }
    }
    for j in 1..m {
        for t in 0..s {
            let mut r = vec![0.0; nvar];
            for k in 0..marginals[j].points.len() {
                r[var(j, k, t)] = 1.0;
            }
            for k in 0..marginals[0].points.len() {
                r[var(0, k, t)] = -1.0;
            }
            rows.push(r);
            rhs.push(0.0);
        }
    }
    let (x, value) = simplex(rows, rhs, &cost)?;
    let masses = (0..s)
        .map(|t| {
            (0..marginals[0].points.len())
                .map(|k| x[var(0, k, t)])
                .sum::<f64>()
                .max(0.0)
        })
        .collect();
    Ok(LpBarycenter {
        support: support.to_vec(),
        masses,
        value,
    })
}

/// Dense tableau: `rows × (cols + 1)`, last column is the right-hand side.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        self.t[r].iter_mut().for_each(|v| *v /= p);
        let pr = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, q) in row.iter_mut().zip(&pr) {
                    *v -= f * q;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost · x` over the current tableau with Bland's rule,
    /// considering only columns `< allowed`.
    fn optimise(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        let rhs = self.cols;
        let max_iter = 50_000;
        for _ in 0..max_iter {
            let mut enter = None;
            for c in 0..allowed {
                if self.basis.contains(&c) {
                    continue;
                }
                let reduced = cost[c]
                    - self
                        .basis
                        .iter()
                        .zip(&self.t)
                        .map(|(&b, row)| cost[b] * row[c])
                        .sum::<f64>();
                if reduced < -TOL {
                    enter = Some(c);
                    break;
                }
            }
            let Some(c) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.t.iter().enumerate() {
                if row[c] > TOL {
                    let ratio = row[rhs] / row[c];
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - TOL
                                || (ratio <= best + TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::NoConvergence("linear program is unbounded".into()));
            };
            self.pivot(r, c);
        }
        Err(Error::NoConvergence("simplex iteration limit".into()))
    }
}

/// Solves `min c·x` subject to `A x = b`, `x ≥ 0`.
fn simplex(a: Vec<Vec<f64>>, mut b: Vec<f64>, c: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = c.len();
    let rows = a.len();
    let cols = n + rows;
    let mut t = Vec::with_capacity(rows);
    for (i, mut row) in a.into_iter().enumerate() {
        if b[i] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
            b[i] = -b[i];
        }
        row.resize(cols + 1, 0.0);
        row[n + i] = 1.0;
        row[cols] = b[i];
        t.push(row);
    }
    let mut tab = Tableau {
        t,
        basis: (n..cols).collect(),
        cols,
    };
    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimise(&phase1, cols)?;
    let infeas: f64 = tab
        .basis
        .iter()
        .zip(&tab.t)
        .filter(|(b, _)| **b >= n)
        .map(|(_, row)| row[cols])
        .sum();
    if infeas > 1e-7 {
        return Err(Error::Infeasible);
    }
    // drive zero-level artificials out of the basis; drop redundant rows
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            match (0..n).find(|&c| tab.t[r][c].abs() > TOL) {
                Some(c) => tab.pivot(r, c),
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    let mut phase2 = c.to_vec();
    phase2.resize(cols, 0.0);
    tab.optimise(&phase2, n)?;
    let mut x = vec![0.0; n];
    for (&bv, row) in tab.basis.iter().zip(&tab.t) {
        if bv < n {
            x[bv] = row[cols];
        }
    }
    let value = x.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok((x, value))
}
