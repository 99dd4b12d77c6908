//! Convergence measures over profiles and trajectories.

use std::io::Write;

use crate::dynamics::DynamicsState;
use crate::error::{Error, Result};
use crate::game::{self, MixedStrategy, PayoffMatrix, StrategyProfile};

/// Bit-exact header of the trajectory CSV.
pub const TRAJECTORY_CSV_HEADER: &str = "step,kl_to_ref,l1_to_ref,eps_nash,game_value,criterion_kl";

/// Coordinates of `p` below this contribute nothing to `KL(p || q)`.
const KL_SKIP: f64 = 1e-300;

/// Above this the plain sum is accurate; below it cancellation dominates.
const KL_CANCEL_REGIME: f64 = 1e-8;

/// Measurements of one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub kl_to_ref: Option<f64>,
    pub l1_to_ref: Option<f64>,
    pub eps_nash: f64,
    pub game_value: f64,
    /// FLBR/OMD only.
    pub criterion_kl: Option<f64>,
}

impl TrajectoryRecord {
    pub fn capture(game: &PayoffMatrix, state: &DynamicsState, reference: Option<&StrategyProfile>) -> Result<Self> {
        let p = state.current();
        let ry = game::payoff_vector_row(game, &p.y)?;
        let rtx = game::payoff_vector_col(game, &p.x)?;
        let (kl_to_ref, l1_to_ref) = match reference {
            Some(r) => (Some(kl_divergence(r, p)?), Some(l1_distance(r, p)?)),
            None => (None, None),
        };
        Ok(Self {
            step: state.step(),
            kl_to_ref,
            l1_to_ref,
            eps_nash: game::epsilon_from_payoffs(p.x.probabilities(), &ry, &rtx),
            game_value: game::dot(p.x.probabilities(), &ry),
            criterion_kl: state.intermediate().map(|h| profile_kl(p, h)),
        })
    }

    /// One CSV row without the line terminator; absent fields are empty.
    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{}",
            self.step,
            opt(self.kl_to_ref),
            opt(self.l1_to_ref),
            self.eps_nash,
            self.game_value,
            opt(self.criterion_kl)
        )
    }
}

pub fn write_trajectory_csv<W: Write>(records: &[TrajectoryRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// `KL(p || q)` for one player, natural log, with `0 ln 0 = 0`.
///
/// Near zero the plain sum `Σ p (ln p - ln q)` loses everything to the
/// rounding of the two normalisations, so small values are recomputed as
/// `ln Σ_S p e^{-(d - c)} - ln Σ_S q`, with `d = ln p - ln q`, `c = Σ_S p d`
/// and `S` the coordinates where `p` is not negligible. Both forms agree in
/// exact arithmetic; the second is insensitive to a common offset in `d`.
pub fn strategy_kl(p: &MixedStrategy, q: &MixedStrategy) -> f64 {
    let (lp, lq) = (p.log_weights(), q.log_weights());
    let pp = p.probabilities();
    let mut c = 0.0;
    for i in 0..pp.len() {
        if pp[i] >= KL_SKIP {
            c += pp[i] * (lp[i] - lq[i]);
        }
    }
    if c > KL_CANCEL_REGIME {
        return c;
    }
    let (mut s, mut p_out, mut q_out) = (0.0, 0.0, 0.0);
    for i in 0..pp.len() {
        if pp[i] >= KL_SKIP {
            s += pp[i] * (-(lp[i] - lq[i] - c)).exp_m1();
        } else {
            p_out += pp[i];
            q_out += q.probabilities()[i];
        }
    }
    let kl = (s - p_out).ln_1p() - (-q_out).ln_1p();
    kl.max(0.0)
}

fn profile_kl(p: &StrategyProfile, q: &StrategyProfile) -> f64 {
    strategy_kl(&p.x, &q.x) + strategy_kl(&p.y, &q.y)
}

fn check_same_dims(p: &StrategyProfile, q: &StrategyProfile) -> Result<()> {
    if p.x.dim() != q.x.dim() || p.y.dim() != q.y.dim() {
        return Err(Error::Dimension(format!(
            "profiles of shape {}x{} and {}x{}",
            p.x.dim(),
            p.y.dim(),
            q.x.dim(),
            q.y.dim()
        )));
    }
    Ok(())
}

/// `D_KL(p || q)` summed over both players.
pub fn kl_divergence(p: &StrategyProfile, q: &StrategyProfile) -> Result<f64> {
    check_same_dims(p, q)?;
    Ok(profile_kl(p, q))
}

/// `||x - x'||_1 + ||y - y'||_1`.
pub fn l1_distance(p: &StrategyProfile, q: &StrategyProfile) -> Result<f64> {
    check_same_dims(p, q)?;
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>();
    Ok(d(p.x.probabilities(), q.x.probabilities()) + d(p.y.probabilities(), q.y.probabilities()))
}

/// `D_KL((x^t, y^t) || (x̂^t, ŷ^t))` of an FLBR/OMD state.
pub fn criterion_kl(state: &DynamicsState) -> Result<f64> {
    let mid = state.intermediate().ok_or(Error::MissingIntermediate)?;
    Ok(profile_kl(state.current(), mid))
}

/// `D_KL(profile || intermediate)` for an explicitly given intermediate profile.
pub fn profile_criterion_kl(profile: &StrategyProfile, intermediate: &StrategyProfile) -> Result<f64> {
    kl_divergence(profile, intermediate)
}

/// `v^t = x^T R y`.
pub fn game_value_at(game: &PayoffMatrix, profile: &StrategyProfile) -> Result<f64> {
    game::expected_payoff(game, &profile.x, &profile.y)
}
