//! One-step update rules (MWU, OMWU, OMD, FLBR-MWU) and the trajectory runner.
//!
//! Every rule is a multiplicative reweighing of the previous strategy by an
//! exponentiated payoff vector; they differ only in which opponent strategy
//! the payoffs are taken against:
//!
//! | rule | row gain `g` used in `x' ∝ x · exp(η g)` |
//! |------|-------------------------------------------|
//! | MWU  | `R y`                                     |
//! | OMWU | `2 R y - R y_prev`                        |
//! | FLBR | `R ŷ`, with `ŷ ∝ y · exp(-ξ Rᵀ x)`        |
//! | OMD  | FLBR with `ξ = η`                         |
//!
//! The column player mirrors this with `-Rᵀ` and the intermediate `x̂`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{MixedStrategy, PayoffMatrix, StrategyProfile};
use crate::metrics::{self, TrajectoryRecord};

/// Default trajectory thinning.
pub const DEFAULT_RECORD_EVERY: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mwu,
    Omwu,
    Omd,
    Flbr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Mwu, Algorithm::Omwu, Algorithm::Omd, Algorithm::Flbr];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mwu => "mwu",
            Algorithm::Omwu => "omwu",
            Algorithm::Omd => "omd",
            Algorithm::Flbr => "flbr",
        }
    }

    /// Whether a step produces an intermediate (IBR) profile.
    pub fn has_intermediate(self) -> bool {
        matches!(self, Algorithm::Omd | Algorithm::Flbr)
    }

    /// Whether `xi` is a free parameter of the rule.
    pub fn uses_xi(self) -> bool {
        self == Algorithm::Flbr
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mwu" => Ok(Algorithm::Mwu),
            "omwu" => Ok(Algorithm::Omwu),
            "omd" => Ok(Algorithm::Omd),
            "flbr" | "flbr-mwu" | "flbr_mwu" => Ok(Algorithm::Flbr),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected mwu, omwu, omd or flbr)"
            ))),
        }
    }
}

/// Parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub algorithm: Algorithm,
    /// Learning rate of the update step, in `(0, 1)`.
    pub eta: f64,
    /// Rate of the intermediate step. Ignored by MWU/OMWU, equal to `eta` for OMD.
    pub xi: f64,
    pub t_max: u64,
    pub record_every: u64,
    pub seed: u64,
}

impl DynamicsConfig {
    pub fn new(algorithm: Algorithm, eta: f64, xi: f64) -> Result<Self> {
        let cfg = Self {
            algorithm,
            eta,
            xi,
            t_max: 1_000_000,
            record_every: DEFAULT_RECORD_EVERY,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mwu(eta: f64) -> Result<Self> {
        Self::new(Algorithm::Mwu, eta, 0.0)
    }

    pub fn omwu(eta: f64) -> Result<Self> {
        Self::new(Algorithm::Omwu, eta, 0.0)
    }

    pub fn omd(eta: f64) -> Result<Self> {
        Self::new(Algorithm::Omd, eta, eta)
    }

    pub fn flbr(eta: f64, xi: f64) -> Result<Self> {
        Self::new(Algorithm::Flbr, eta, xi)
    }

    pub fn with_t_max(mut self, t_max: u64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_record_every(mut self, record_every: u64) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::Config(format!("xi must be finite and >= 0, got {}", self.xi)));
        }
        if self.algorithm == Algorithm::Omd && self.xi != self.eta {
            return Err(Error::Config(format!(
                "OMD uses xi = eta; got xi = {} with eta = {}",
                self.xi, self.eta
            )));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// The intermediate rate actually applied by a step.
    pub fn effective_xi(&self) -> f64 {
        match self.algorithm {
            Algorithm::Omd => self.eta,
            _ => self.xi,
        }
    }
}

/// Iterate of a run: the current profile, the one before it and, for
/// FLBR/OMD, the intermediate profile computed on the way.
#[derive(Debug, Clone)]
pub struct DynamicsState {
    current: StrategyProfile,
    previous: StrategyProfile,
    intermediate: Option<StrategyProfile>,
    step: u64,
    scratch: Scratch,
}

/// Work buffers for one state. `hist_*` hold `R y_prev` / `Rᵀ x_prev` when
/// `hist_valid` is set, which saves OMWU two products per step.
#[derive(Debug, Clone)]
struct Scratch {
    row: Vec<f64>,
    col: Vec<f64>,
    row_gain: Vec<f64>,
    col_gain: Vec<f64>,
    hist_row: Vec<f64>,
    hist_col: Vec<f64>,
    hist_valid: bool,
}

impl Scratch {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            row: vec![0.0; rows],
            col: vec![0.0; cols],
            row_gain: vec![0.0; rows],
            col_gain: vec![0.0; cols],
            hist_row: vec![0.0; rows],
            hist_col: vec![0.0; cols],
            hist_valid: false,
        }
    }
}

impl DynamicsState {
    /// A state at `t = 0`; the history is initialised to the same profile.
    pub fn new(initial: StrategyProfile) -> Self {
        Self::with_history(initial.clone(), initial)
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self::new(StrategyProfile::uniform(rows, cols))
    }

    /// A state at `t = 0` with an explicit `t = -1` profile for OMWU.
    pub fn with_history(current: StrategyProfile, previous: StrategyProfile) -> Self {
        let scratch = Scratch::new(current.x.dim(), current.y.dim());
        Self {
            current,
            previous,
            intermediate: None,
            step: 0,
            scratch,
        }
    }

    pub fn current(&self) -> &StrategyProfile {
        &self.current
    }

    pub fn previous(&self) -> &StrategyProfile {
        &self.previous
    }

    /// `(x̂^t, ŷ^t)`, defined after the first FLBR/OMD step.
    pub fn intermediate(&self) -> Option<&StrategyProfile> {
        self.intermediate.as_ref()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn into_current(self) -> StrategyProfile {
        self.current
    }

    fn check_dims(&self, game: &PayoffMatrix) -> Result<()> {
        self.current.check_dims(game)?;
        self.previous.check_dims(game)
    }

    /// Advances by one step in place.
    pub(crate) fn advance(&mut self, game: &PayoffMatrix, algorithm: Algorithm, eta: f64, xi: f64) -> Result<()> {
        let s = &mut self.scratch;
        game.row_payoffs_into(self.current.y.probabilities(), &mut s.row);
        game.col_payoffs_into(self.current.x.probabilities(), &mut s.col);

        match algorithm {
            Algorithm::Mwu => {
                self.current.x.reweigh_into(&s.row, eta, &mut self.previous.x)?;
                self.current.y.reweigh_into(&s.col, -eta, &mut self.previous.y)?;
            }
            Algorithm::Omwu => {
                if !s.hist_valid {
                    game.row_payoffs_into(self.previous.y.probabilities(), &mut s.hist_row);
                    game.col_payoffs_into(self.previous.x.probabilities(), &mut s.hist_col);
                }
                for ((g, &now), &before) in s.row_gain.iter_mut().zip(&s.row).zip(&s.hist_row) {
                    *g = 2.0 * now - before;
                }
                for ((g, &now), &before) in s.col_gain.iter_mut().zip(&s.col).zip(&s.hist_col) {
                    *g = 2.0 * now - before;
                }
                self.current.x.reweigh_into(&s.row_gain, eta, &mut self.previous.x)?;
                self.current.y.reweigh_into(&s.col_gain, -eta, &mut self.previous.y)?;
            }
            Algorithm::Omd | Algorithm::Flbr => {
                let xi = if algorithm == Algorithm::Omd { eta } else { xi };
                let mid = self
                    .intermediate
                    .get_or_insert_with(|| self.current.clone());
                self.current.x.reweigh_into(&s.row, xi, &mut mid.x)?;
                self.current.y.reweigh_into(&s.col, -xi, &mut mid.y)?;
                game.row_payoffs_into(mid.y.probabilities(), &mut s.row_gain);
                game.col_payoffs_into(mid.x.probabilities(), &mut s.col_gain);
                self.current.x.reweigh_into(&s.row_gain, eta, &mut self.previous.x)?;
                self.current.y.reweigh_into(&s.col_gain, -eta, &mut self.previous.y)?;
            }
        }

        // `previous` now holds the new iterate and the old current becomes the history.
        std::mem::swap(&mut self.current, &mut self.previous);
        std::mem::swap(&mut s.hist_row, &mut s.row);
        std::mem::swap(&mut s.hist_col, &mut s.col);
        s.hist_valid = true;
        self.step += 1;
        Ok(())
    }
}

/// `s_i exp(rate * gain_i) / sum_l s_l exp(rate * gain_l)`, computed in log space.
pub fn softmax_reweigh(s: &MixedStrategy, gain: &[f64], rate: f64) -> Result<MixedStrategy> {
    s.reweighed(gain, rate)
}

fn stepped(game: &PayoffMatrix, state: &DynamicsState, algorithm: Algorithm, eta: f64, xi: f64) -> Result<DynamicsState> {
    state.check_dims(game)?;
    let mut next = state.clone();
    next.advance(game, algorithm, eta, xi)?;
    Ok(next)
}

/// One MWU step against the opponent's current strategy.
pub fn mwu_step(game: &PayoffMatrix, state: &DynamicsState, cfg: &DynamicsConfig) -> Result<DynamicsState> {
    stepped(game, state, Algorithm::Mwu, cfg.eta, 0.0)
}

/// One optimistic MWU step (exponent `2η R y^{t-1} - η R y^{t-2}`).
pub fn omwu_step(game: &PayoffMatrix, state: &DynamicsState, cfg: &DynamicsConfig) -> Result<DynamicsState> {
    stepped(game, state, Algorithm::Omwu, cfg.eta, 0.0)
}

/// The intermediate best-response step at rate `xi`.
pub fn ibr_step(game: &PayoffMatrix, profile: &StrategyProfile, xi: f64) -> Result<StrategyProfile> {
    profile.check_dims(game)?;
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::Numerics(format!("xi must be finite and >= 0, got {xi}")));
    }
    let ry = crate::game::payoff_vector_row(game, &profile.y)?;
    let rtx = crate::game::payoff_vector_col(game, &profile.x)?;
    Ok(StrategyProfile::new(
        profile.x.reweighed(&ry, xi)?,
        profile.y.reweighed(&rtx, -xi)?,
    ))
}

/// One FLBR-MWU step: IBR at rate `cfg.xi`, then MWU at rate `cfg.eta`
/// against the intermediate opponent. With an OMD config `xi = eta` is used.
pub fn flbr_step(game: &PayoffMatrix, state: &DynamicsState, cfg: &DynamicsConfig) -> Result<DynamicsState> {
    stepped(game, state, Algorithm::Flbr, cfg.eta, cfg.effective_xi())
}

/// One entropic OMD step, i.e. [`flbr_step`] with `xi = eta`.
pub fn omd_step(game: &PayoffMatrix, state: &DynamicsState, cfg: &DynamicsConfig) -> Result<DynamicsState> {
    stepped(game, state, Algorithm::Flbr, cfg.eta, cfg.eta)
}

/// One step of whichever rule `cfg.algorithm` names.
pub fn step(game: &PayoffMatrix, state: &DynamicsState, cfg: &DynamicsConfig) -> Result<DynamicsState> {
    stepped(game, state, cfg.algorithm, cfg.eta, cfg.effective_xi())
}

/// When a run stops. Encoded as `criterion_kl:<tol>`, `kl_to_ref:<tol>`,
/// `eps_nash:<tol>`, `l1_to_ref:<tol>` or `tmax_only`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// `D_KL((x^t, y^t) || (x̂^t, ŷ^t)) <= tol`; FLBR/OMD only.
    CriterionKl(f64),
    /// `D_KL(reference || (x^t, y^t)) <= tol`.
    KlToRef(f64),
    EpsNash(f64),
    L1ToRef(f64),
    TmaxOnly,
}

impl StoppingRule {
    pub fn needs_reference(&self) -> bool {
        matches!(self, StoppingRule::KlToRef(_) | StoppingRule::L1ToRef(_))
    }
}

impl fmt::Display for StoppingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoppingRule::CriterionKl(t) => write!(f, "criterion_kl:{t:e}"),
            StoppingRule::KlToRef(t) => write!(f, "kl_to_ref:{t:e}"),
            StoppingRule::EpsNash(t) => write!(f, "eps_nash:{t:e}"),
            StoppingRule::L1ToRef(t) => write!(f, "l1_to_ref:{t:e}"),
            StoppingRule::TmaxOnly => f.write_str("tmax_only"),
        }
    }
}

impl FromStr for StoppingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "tmax_only" {
            return Ok(StoppingRule::TmaxOnly);
        }
        let (kind, tol) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad stopping rule {s:?}")))?;
        let tol: f64 = tol
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad tolerance in stopping rule {s:?}")))?;
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::Config(format!("tolerance must be finite and >= 0 in {s:?}")));
        }
        match kind.trim() {
            "criterion_kl" => Ok(StoppingRule::CriterionKl(tol)),
            "kl_to_ref" => Ok(StoppingRule::KlToRef(tol)),
            "eps_nash" => Ok(StoppingRule::EpsNash(tol)),
            "l1_to_ref" => Ok(StoppingRule::L1ToRef(tol)),
            other => Err(Error::Config(format!("unknown stopping rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Criterion,
    TMax,
    NumericsError,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Criterion => "criterion",
            StopReason::TMax => "tmax",
            StopReason::NumericsError => "numerics_error",
        })
    }
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: DynamicsState,
    pub steps: u64,
    pub stop_reason: StopReason,
    /// Records every `record_every` steps (including step 0) plus the final step.
    pub records: Vec<TrajectoryRecord>,
    /// Message of the numerical failure when `stop_reason` is `NumericsError`.
    pub numerics_error: Option<String>,
}

impl RunResult {
    pub fn profile(&self) -> &StrategyProfile {
        self.state.current()
    }

    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Criterion
    }
}

/// Runs from the uniform profile.
pub fn run(
    game: &PayoffMatrix,
    cfg: &DynamicsConfig,
    stop: StoppingRule,
    reference: Option<&StrategyProfile>,
) -> Result<RunResult> {
    let start = StrategyProfile::uniform(game.rows(), game.cols());
    run_observed(game, cfg, stop, reference, start, |_| {})
}

/// Runs from an arbitrary strictly positive profile.
pub fn run_from(
    game: &PayoffMatrix,
    cfg: &DynamicsConfig,
    stop: StoppingRule,
    reference: Option<&StrategyProfile>,
    initial: StrategyProfile,
) -> Result<RunResult> {
    run_observed(game, cfg, stop, reference, initial, |_| {})
}

/// Like [`run_from`], calling `observer` on the initial state and after every step.
///
/// Invalid inputs are errors; a numerical failure mid-run ends the run with
/// [`StopReason::NumericsError`] instead.
pub fn run_observed(
    game: &PayoffMatrix,
    cfg: &DynamicsConfig,
    stop: StoppingRule,
    reference: Option<&StrategyProfile>,
    initial: StrategyProfile,
    mut observer: impl FnMut(&DynamicsState),
) -> Result<RunResult> {
    cfg.validate()?;
    initial.check_dims(game)?;
    if let Some(r) = reference {
        r.check_dims(game)?;
    }
    if stop.needs_reference() && reference.is_none() {
        return Err(Error::Config(format!("stopping rule {stop} needs a reference profile")));
    }
    if matches!(stop, StoppingRule::CriterionKl(_)) && !cfg.algorithm.has_intermediate() {
        return Err(Error::Config(format!(
            "stopping rule {stop} is only defined for flbr and omd, not {}",
            cfg.algorithm
        )));
    }

    let xi = cfg.effective_xi();
    let mut state = DynamicsState::new(initial);
    let mut records = vec![TrajectoryRecord::capture(game, &state, reference)?];
    observer(&state);

    let mut stop_reason = StopReason::TMax;
    let mut numerics_error = None;
    while state.step < cfg.t_max {
        if let Err(e) = state.advance(game, cfg.algorithm, cfg.eta, xi) {
            stop_reason = StopReason::NumericsError;
            numerics_error = Some(e.to_string());
            break;
        }
        observer(&state);
        if state.step.is_multiple_of(cfg.record_every) {
            records.push(TrajectoryRecord::capture(game, &state, reference)?);
        }
        if stop_fired(game, &state, stop, reference)? {
            stop_reason = StopReason::Criterion;
            break;
        }
    }
    if records.last().map(|r| r.step) != Some(state.step) {
        records.push(TrajectoryRecord::capture(game, &state, reference)?);
    }
    Ok(RunResult {
        steps: state.step,
        state,
        stop_reason,
        records,
        numerics_error,
    })
}

fn stop_fired(
    game: &PayoffMatrix,
    state: &DynamicsState,
    stop: StoppingRule,
    reference: Option<&StrategyProfile>,
) -> Result<bool> {
    Ok(match stop {
        StoppingRule::CriterionKl(tol) => metrics::criterion_kl(state)? <= tol,
        StoppingRule::KlToRef(tol) => {
            metrics::kl_divergence(reference.expect("checked"), state.current())? <= tol
        }
        StoppingRule::L1ToRef(tol) => {
            metrics::l1_distance(reference.expect("checked"), state.current())? <= tol
        }
        StoppingRule::EpsNash(tol) => crate::game::epsilon_of(game, state.current())? <= tol,
        StoppingRule::TmaxOnly => false,
    })
}
