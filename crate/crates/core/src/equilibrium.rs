//! Nash equilibrium estimation and exact small-game oracles.

use std::fmt;

use serde::Serialize;

use crate::dynamics::{self, DynamicsConfig, StopReason, StoppingRule};
use crate::error::{Error, Result};
use crate::game::{epsilon_of, expected_payoff, MixedStrategy, PayoffMatrix, StrategyProfile};

/// Largest game the support-enumeration oracle accepts.
pub const SUPPORT_ENUM_MAX: usize = 5;

/// Pivot magnitude below which a support system is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-10;

pub const DEFAULT_ESTIMATOR_ETA: f64 = 0.05;
pub const DEFAULT_ESTIMATOR_XI: f64 = 100.0;
pub const DEFAULT_ESTIMATOR_TOL: f64 = 1e-15;
pub const DEFAULT_ESTIMATOR_TMAX: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "estimator")]
    Estimator,
    #[serde(rename = "oracle_2x2")]
    Oracle2x2,
    #[serde(rename = "support_enum")]
    SupportEnum,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Estimator => "estimator",
            Method::Oracle2x2 => "oracle_2x2",
            Method::SupportEnum => "support_enum",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub profile: StrategyProfile,
    /// `x^T R y` at `profile`.
    pub value: f64,
    pub method: Method,
    pub certificate_eps: f64,
    /// Estimator only.
    pub steps_used: Option<u64>,
}

#[derive(Serialize)]
struct EquilibriumJson<'a> {
    x: &'a [f64],
    y: &'a [f64],
    value: f64,
    method: Method,
    certificate_eps: f64,
    steps_used: Option<u64>,
}

impl EquilibriumResult {
    fn certified(game: &PayoffMatrix, profile: StrategyProfile, method: Method, steps_used: Option<u64>) -> Result<Self> {
        Ok(Self {
            value: expected_payoff(game, &profile.x, &profile.y)?,
            certificate_eps: epsilon_of(game, &profile)?,
            profile,
            method,
            steps_used,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&EquilibriumJson {
            x: self.profile.x.probabilities(),
            y: self.profile.y.probabilities(),
            value: self.value,
            method: self.method,
            certificate_eps: self.certificate_eps,
            steps_used: self.steps_used,
        })
        .expect("finite floats serialize")
    }
}

/// Runs FLBR-MWU until `D_KL(iterate || IBR) <= tol`.
///
/// A run that hits `t_max` is discarded rather than returned.
pub fn estimate_nash(game: &PayoffMatrix, eta: f64, xi: f64, tol: f64, t_max: u64) -> Result<EquilibriumResult> {
    let cfg = DynamicsConfig::flbr(eta, xi)?.with_t_max(t_max).with_record_every(u64::MAX);
    let res = dynamics::run(game, &cfg, StoppingRule::CriterionKl(tol), None)?;
    match res.stop_reason {
        StopReason::Criterion => {
            let steps = res.steps;
            EquilibriumResult::certified(game, res.state.into_current(), Method::Estimator, Some(steps))
        }
        StopReason::TMax => Err(Error::Discarded { steps: res.steps }),
        StopReason::NumericsError => Err(Error::Numerics(res.numerics_error.unwrap_or_default())),
    }
}

/// [`estimate_nash`] with the default parameters.
pub fn estimate_nash_default(game: &PayoffMatrix) -> Result<EquilibriumResult> {
    estimate_nash(
        game,
        DEFAULT_ESTIMATOR_ETA,
        DEFAULT_ESTIMATOR_XI,
        DEFAULT_ESTIMATOR_TOL,
        DEFAULT_ESTIMATOR_TMAX,
    )
}

/// Closed-form equilibrium of a 2x2 game.
pub fn solve_2x2(game: &PayoffMatrix) -> Result<EquilibriumResult> {
    if game.rows() != 2 || game.cols() != 2 {
        return Err(Error::Dimension(format!("solve_2x2 needs a 2x2 game, got {}x{}", game.rows(), game.cols())));
    }
    for i in 0..2 {
        for j in 0..2 {
            let v = game.get(i, j);
            let row_min = v <= game.get(i, 1 - j);
            let col_max = v >= game.get(1 - i, j);
            if row_min && col_max {
                let profile = StrategyProfile::new(MixedStrategy::pure(2, i), MixedStrategy::pure(2, j));
                return EquilibriumResult::certified(game, profile, Method::Oracle2x2, None);
            }
        }
    }
    // No saddle: both players mix and the denominator is nonzero.
    let (a, b, c, d) = (game.get(0, 0), game.get(0, 1), game.get(1, 0), game.get(1, 1));
    let den = a - b - c + d;
    let x1 = (d - c) / den;
    let y1 = (d - b) / den;
    let profile = StrategyProfile::from_probabilities(&[x1, 1.0 - x1], &[y1, 1.0 - y1])?;
    EquilibriumResult::certified(game, profile, Method::Oracle2x2, None)
}

/// Subsets of `0..n` ordered lexicographically by their sorted index vectors.
fn subsets(n: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
        .collect();
    all.sort();
    all
}

/// Solves `a z = b` in place by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < SINGULAR_PIVOT {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|k| a[r][k] * z[k]).sum();
        z[r] = (b[r] - tail) / a[r][r];
    }
    Some(z)
}

/// Strategy on `own` (weights `w`) and value `v` making the opponent
/// indifferent across `other`: `Σ_{i∈own} w_i M(i, j) = v` for `j ∈ other`.
fn indifference(own: &[usize], other: &[usize], entry: impl Fn(usize, usize) -> f64) -> Option<(Vec<f64>, f64)> {
    let k = own.len();
    let mut a = vec![vec![0.0; k + 1]; k + 1];
    let mut b = vec![0.0; k + 1];
    for (r, &j) in other.iter().enumerate() {
        for (c, &i) in own.iter().enumerate() {
            a[r][c] = entry(i, j);
        }
        a[r][k] = -1.0;
    }
    for c in 0..k {
        a[k][c] = 1.0;
    }
    b[k] = 1.0;
    let z = gauss_solve(a, b)?;
    Some((z[..k].to_vec(), z[k]))
}

fn spread(dim: usize, support: &[usize], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (&i, &p) in support.iter().zip(w) {
        out[i] = p.max(0.0);
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= s);
    out
}

/// Every support pair passing the equilibrium tests, in lexicographic order.
pub fn support_equilibria(game: &PayoffMatrix, tol: f64) -> Result<Vec<EquilibriumResult>> {
    let (n, m) = (game.rows(), game.cols());
    if n > SUPPORT_ENUM_MAX || m > SUPPORT_ENUM_MAX {
        return Err(Error::Size { rows: n, cols: m });
    }
    let (rows, cols) = (subsets(n), subsets(m));
    let mut found = Vec::new();
    for sx in &rows {
        for sy in cols.iter().filter(|s| s.len() == sx.len()) {
            if let Some(profile) = check_support_pair(game, sx, sy, tol) {
                found.push(EquilibriumResult::certified(game, profile, Method::SupportEnum, None)?);
            }
        }
    }
    Ok(found)
}

fn check_support_pair(game: &PayoffMatrix, sx: &[usize], sy: &[usize], tol: f64) -> Option<StrategyProfile> {
    let (n, m) = (game.rows(), game.cols());
    let (xw, v) = indifference(sx, sy, |i, j| game.get(i, j))?;
    let (yw, u) = indifference(sy, sx, |j, i| game.get(i, j))?;
    if xw.iter().chain(&yw).any(|&p| p < -tol) || (v - u).abs() > tol {
        return None;
    }
    let x = spread(n, sx, &xw);
    let y = spread(m, sy, &yw);
    // Row player maximises: no row earns more than u; column player minimises: no column pays less than v.
    for i in 0..n {
        let ry: f64 = (0..m).map(|j| game.get(i, j) * y[j]).sum();
        if ry > u + tol {
            return None;
        }
    }
    for j in 0..m {
        let rtx: f64 = (0..n).map(|i| game.get(i, j) * x[i]).sum();
        if rtx < v - tol {
            return None;
        }
    }
    StrategyProfile::from_probabilities(&x, &y).ok()
}

/// Brute-force equilibrium over all equal-size support pairs (n, m <= 5).
/// The lexicographically smallest accepted `(Sx, Sy)` wins.
pub fn solve_support_enum(game: &PayoffMatrix, tol: f64) -> Result<EquilibriumResult> {
    let (n, m) = (game.rows(), game.cols());
    if n > SUPPORT_ENUM_MAX || m > SUPPORT_ENUM_MAX {
        return Err(Error::Size { rows: n, cols: m });
    }
    let (rows, cols) = (subsets(n), subsets(m));
    for sx in &rows {
        for sy in cols.iter().filter(|s| s.len() == sx.len()) {
            if let Some(profile) = check_support_pair(game, sx, sy, tol) {
                return EquilibriumResult::certified(game, profile, Method::SupportEnum, None);
            }
        }
    }
    Err(Error::NoSolution { tol })
}

/// Exact 2x2 solution, otherwise support enumeration.
pub fn solve_oracle(game: &PayoffMatrix) -> Result<EquilibriumResult> {
    if game.rows() == 2 && game.cols() == 2 {
        solve_2x2(game)
    } else {
        solve_support_enum(game, 1e-10)
    }
}

/// `epsilon_of(game, profile) <= eps`.
pub fn verify_eps_nash(game: &PayoffMatrix, profile: &StrategyProfile, eps: f64) -> Result<bool> {
    if !(eps >= 0.0) {
        return Err(Error::Input(format!("eps must be >= 0, got {eps}")));
    }
    Ok(epsilon_of(game, profile)? <= eps)
}
