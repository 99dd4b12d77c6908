//! Zero-sum matrix games: payoff matrices, mixed strategies and profiles.
//!
//! The row player maximises `x^T R y`, the column player minimises it. All
//! payoffs live in `(0, 1]`; [`rescale`] maps an arbitrary finite matrix there.
//!
//! Mixed strategies are kept in log space so that coordinates can travel far
//! below `f64::MIN_POSITIVE` relative scale and still come back.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest log-probability a coordinate may take. `exp(LOG_FLOOR)` is still a
/// (subnormal) positive double, so probabilities never reach exactly zero.
pub const LOG_FLOOR: f64 = -745.0;

/// Lower end of the range [`rescale`] maps onto.
pub const RESCALE_FLOOR: f64 = 1e-6;

/// Probability assigned to a coordinate sitting on [`LOG_FLOOR`].
fn floor_prob() -> f64 {
    LOG_FLOOR.exp()
}

/// An `n x m` payoff matrix with entries in `(0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Input(format!(
                "payoff matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if let Some((k, &e)) = entries
            .iter()
            .enumerate()
            .find(|(_, &e)| !(e.is_finite() && e > 0.0 && e <= 1.0))
        {
            return Err(Error::Input(format!(
                "entry ({}, {}) = {e} is outside (0, 1]",
                k / cols,
                k % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != cols) {
            return Err(Error::Dimension(format!(
                "ragged rows: expected {cols} columns, found {}",
                bad.as_ref().len()
            )));
        }
        let entries = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, entries)
    }

    /// A matrix with every entry equal to `value`.
    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Relabels rows and columns: entry `(i, j)` of the result is
    /// `self[row_perm[i], col_perm[j]]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Result<Self> {
        check_permutation(row_perm, self.rows)?;
        check_permutation(col_perm, self.cols)?;
        let entries = row_perm
            .iter()
            .flat_map(|&i| col_perm.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self::new(self.rows, self.cols, entries)
    }

    /// `out = R y`. Caller guarantees the lengths. Subnormal probabilities
    /// contribute below 1e-307 and are skipped: subnormal arithmetic is
    /// orders of magnitude slower and long runs park most coordinates there.
    #[inline]
    pub(crate) fn row_payoffs_into(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &p) in y.iter().enumerate() {
            if p < f64::MIN_POSITIVE {
                continue;
            }
            for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
                *o += row[j] * p;
            }
        }
    }

    /// `out = R^T x`. Caller guarantees the lengths.
    #[inline]
    pub(crate) fn col_payoffs_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&xi, row) in x.iter().zip(self.entries.chunks_exact(self.cols)) {
            if xi < f64::MIN_POSITIVE {
                continue;
            }
            for (o, r) in out.iter_mut().zip(row) {
                *o += xi * r;
            }
        }
    }

    /// Parses the plain-text matrix format: a `n m` header line followed by
    /// `n` lines of `m` whitespace-separated decimals. Lines starting with `#`
    /// and blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let (rows, cols, entries) = parse_raw(text)?;
        Self::new(rows, cols, entries)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders the matrix in the text format read by [`PayoffMatrix::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for i in 0..self.rows {
            for (j, e) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if perm.len() != len {
        return Err(Error::Dimension(format!(
            "permutation of length {} for dimension {len}",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= len || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Input(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

/// Parses the matrix text format without range-checking the entries.
pub fn parse_raw(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Input("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Input(format!("bad dimension token {t:?}")))
        })
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Input(format!(
            "header must be `n m`, got {header:?}"
        )));
    };
    let mut entries = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Input(format!("expected {rows} rows, found {i}")))?;
        let before = entries.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Input(format!("row {i}: bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::Input(format!("row {i}: non-finite entry {tok:?}")));
            }
            entries.push(v);
        }
        if entries.len() - before != cols {
            return Err(Error::Input(format!(
                "row {i}: expected {cols} entries, found {}",
                entries.len() - before
            )));
        }
    }
    if let Some(extra) = lines.next() {
        return Err(Error::Input(format!("trailing content {extra:?}")));
    }
    Ok((rows, cols, entries))
}

/// Maps an arbitrary finite matrix into `(0, 1]`.
///
/// Matrices already in range are returned unchanged. Otherwise the affine map
/// sending the minimum to [`RESCALE_FLOOR`] and the maximum to 1 is applied,
/// which keeps every row and column argmax. A constant out-of-range matrix
/// becomes all `0.5`.
pub fn rescale(rows: usize, cols: usize, raw: &[f64]) -> Result<PayoffMatrix> {
    if raw.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{rows}x{cols} matrix needs {} entries, got {}",
            rows * cols,
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    if raw.iter().all(|&v| v > 0.0 && v <= 1.0) {
        return PayoffMatrix::new(rows, cols, raw.to_vec());
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return PayoffMatrix::constant(rows, cols, 0.5);
    }
    let scale = (1.0 - RESCALE_FLOOR) / (hi - lo);
    let entries = raw
        .iter()
        .map(|&v| {
            if v == hi {
                1.0
            } else {
                (RESCALE_FLOOR + scale * (v - lo)).clamp(RESCALE_FLOOR, 1.0)
            }
        })
        .collect();
    PayoffMatrix::new(rows, cols, entries)
}

/// A point on the probability simplex, held as normalised log-probabilities.
///
/// Both the log-probabilities and the probabilities are materialised at
/// construction; every coordinate is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy {
    log_weights: Vec<f64>,
    probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0, "strategy dimension must be positive");
        let p = 1.0 / dim as f64;
        Self {
            log_weights: vec![p.ln(); dim],
            probs: vec![p; dim],
        }
    }

    /// The pure strategy `e_index`, with the other coordinates on the floor.
    pub fn pure(dim: usize, index: usize) -> Self {
        assert!(index < dim, "pure strategy index {index} out of range {dim}");
        let mut lw = vec![LOG_FLOOR; dim];
        lw[index] = 0.0;
        Self::normalized(lw)
    }

    /// Normalises arbitrary log-weights. `-inf` is accepted and means "zero";
    /// it is clamped to [`LOG_FLOOR`].
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::Input("strategy must have at least one coordinate".into()));
        }
        if log_weights
            .iter()
            .any(|w| w.is_nan() || *w == f64::INFINITY)
        {
            return Err(Error::Numerics(format!(
                "log-weights must not be NaN or +inf: {log_weights:?}"
            )));
        }
        if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
            return Err(Error::Input("all log-weights are -inf".into()));
        }
        Ok(Self::normalized(log_weights))
    }

    /// Builds a strategy from non-negative weights (normalised here).
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Input(format!(
                "probabilities must be finite and non-negative: {probs:?}"
            )));
        }
        Self::from_log_weights(probs.iter().map(|p| p.ln()).collect())
    }

    fn normalized(mut lw: Vec<f64>) -> Self {
        let mut probs = vec![0.0; lw.len()];
        let lse = exp_normalize(&lw, &mut probs);
        finish_normalization(&mut lw, &mut probs, lse);
        Self {
            log_weights: lw,
            probs,
        }
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    /// Normalised log-probabilities, each `>= LOG_FLOOR`.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Indices whose probability exceeds `tol` (0-based).
    pub fn support(&self, tol: f64) -> Vec<usize> {
        support(self, tol)
    }

    /// `s_i exp(rate * gain_i) / sum_l s_l exp(rate * gain_l)`, evaluated in
    /// log space with max-subtraction.
    pub fn reweighed(&self, gain: &[f64], rate: f64) -> Result<Self> {
        let mut out = self.clone();
        self.reweigh_into(gain, rate, &mut out)?;
        Ok(out)
    }

    /// Same as [`MixedStrategy::reweighed`] but writes into `out`, reusing its
    /// buffers. `out` must have the same dimension.
    pub(crate) fn reweigh_into(&self, gain: &[f64], rate: f64, out: &mut Self) -> Result<()> {
        if gain.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "gain has {} entries for a {}-dimensional strategy",
                gain.len(),
                self.dim()
            )));
        }
        if !rate.is_finite() {
            return Err(Error::Numerics(format!("non-finite rate {rate}")));
        }
        debug_assert_eq!(out.dim(), self.dim());
        for ((o, &w), &g) in out.log_weights.iter_mut().zip(&self.log_weights).zip(gain) {
            *o = w + rate * g;
        }
        if out.log_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerics(format!(
                "non-finite exponent in reweighing (rate {rate}, gain {gain:?})"
            )));
        }
        let lse = exp_normalize(&out.log_weights, &mut out.probs);
        finish_normalization(&mut out.log_weights, &mut out.probs, lse);
        Ok(())
    }
}

/// ln of the smallest normal f64, rounded up.
const SUBNORMAL_LOG: f64 = -708.0;

/// Writes `exp(lw - max) / sum` into `probs` and returns the log-sum-exp.
#[inline]
fn exp_normalize(lw: &[f64], probs: &mut [f64]) -> f64 {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &w) in probs.iter_mut().zip(lw) {
        // Below this the term is subnormal; finish_normalization recomputes it.
        *p = if w - max < SUBNORMAL_LOG { 0.0 } else { (w - max).exp() };
        sum += *p;
    }
    let inv = 1.0 / sum;
    for p in probs.iter_mut() {
        *p *= inv;
    }
    max + sum.ln()
}

#[inline]
fn finish_normalization(lw: &mut [f64], probs: &mut [f64], lse: f64) {
    for (w, p) in lw.iter_mut().zip(probs.iter_mut()) {
        *w -= lse;
        if *w <= LOG_FLOOR {
            *w = LOG_FLOOR;
            *p = floor_prob();
        } else if *p < f64::MIN_POSITIVE {
            *p = w.exp();
        }
    }
}

/// A pair of strategies `(x, y)` for the row and the column player.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    pub x: MixedStrategy,
    pub y: MixedStrategy,
}

impl StrategyProfile {
    pub fn new(x: MixedStrategy, y: MixedStrategy) -> Self {
        Self { x, y }
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self::new(MixedStrategy::uniform(rows), MixedStrategy::uniform(cols))
    }

    pub fn from_probabilities(x: &[f64], y: &[f64]) -> Result<Self> {
        Ok(Self::new(
            MixedStrategy::from_probabilities(x)?,
            MixedStrategy::from_probabilities(y)?,
        ))
    }

    pub(crate) fn check_dims(&self, game: &PayoffMatrix) -> Result<()> {
        if self.x.dim() != game.rows() || self.y.dim() != game.cols() {
            return Err(Error::Dimension(format!(
                "profile is {}x{} but the game is {}x{}",
                self.x.dim(),
                self.y.dim(),
                game.rows(),
                game.cols()
            )));
        }
        Ok(())
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} has dimension {got}, expected {want}"
        )))
    }
}

/// `x^T R y`.
pub fn expected_payoff(game: &PayoffMatrix, x: &MixedStrategy, y: &MixedStrategy) -> Result<f64> {
    check_len("row strategy", x.dim(), game.rows())?;
    check_len("column strategy", y.dim(), game.cols())?;
    let ry = payoff_vector_row(game, y)?;
    Ok(dot(x.probabilities(), &ry))
}

/// `(R y)_i`, the payoff of each pure row strategy against `y`.
pub fn payoff_vector_row(game: &PayoffMatrix, y: &MixedStrategy) -> Result<Vec<f64>> {
    check_len("column strategy", y.dim(), game.cols())?;
    let mut out = vec![0.0; game.rows()];
    game.row_payoffs_into(y.probabilities(), &mut out);
    Ok(out)
}

/// `(R^T x)_j`, the payoff conceded by each pure column strategy against `x`.
pub fn payoff_vector_col(game: &PayoffMatrix, x: &MixedStrategy) -> Result<Vec<f64>> {
    check_len("row strategy", x.dim(), game.rows())?;
    let mut out = vec![0.0; game.cols()];
    game.col_payoffs_into(x.probabilities(), &mut out);
    Ok(out)
}

/// The smallest `eps` for which `profile` is an `eps`-Nash equilibrium:
/// the larger of the two players' best unilateral deviation gains.
pub fn epsilon_of(game: &PayoffMatrix, profile: &StrategyProfile) -> Result<f64> {
    profile.check_dims(game)?;
    let ry = payoff_vector_row(game, &profile.y)?;
    let rtx = payoff_vector_col(game, &profile.x)?;
    Ok(epsilon_from_payoffs(profile.x.probabilities(), &ry, &rtx))
}

pub(crate) fn epsilon_from_payoffs(x: &[f64], ry: &[f64], rtx: &[f64]) -> f64 {
    let value = dot(x, ry);
    let best_row = ry.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_col = rtx.iter().copied().fold(f64::INFINITY, f64::min);
    (best_row - value).max(value - best_col).max(0.0)
}

/// Indices (0-based) whose probability exceeds `tol`.
pub fn support(s: &MixedStrategy, tol: f64) -> Vec<usize> {
    s.probabilities()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > tol)
        .map(|(i, _)| i)
        .collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn g2() -> PayoffMatrix {
        PayoffMatrix::from_rows(&[[0.8, 0.2], [0.3, 0.7]]).unwrap()
    }

    fn strat(p: &[f64]) -> MixedStrategy {
        MixedStrategy::from_probabilities(p).unwrap()
    }

    #[test]
    fn matrix_rejects_out_of_range_entries() {
        assert!(PayoffMatrix::from_rows(&[[0.5, 1.5]]).is_err());
        assert!(PayoffMatrix::from_rows(&[[0.0, 0.5]]).is_err());
        assert!(PayoffMatrix::from_rows(&[[f64::NAN, 0.5]]).is_err());
        assert!(PayoffMatrix::from_rows(&[[1.0, 1e-300]]).is_ok());
        assert!(PayoffMatrix::new(0, 3, vec![]).is_err());
        assert!(matches!(
            PayoffMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5]]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn expected_payoff_examples() {
        let c = PayoffMatrix::constant(2, 2, 0.5).unwrap();
        let any = strat(&[0.3, 0.7]);
        assert_abs_diff_eq!(
            expected_payoff(&c, &any, &strat(&[0.9, 0.1])).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let r = g2();
        let v = expected_payoff(&r, &MixedStrategy::pure(2, 0), &MixedStrategy::pure(2, 1)).unwrap();
        assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
        // 0.4*0.5*(0.8+0.2) + 0.6*0.5*(0.3+0.7) = 0.2 + 0.3
        let v = expected_payoff(&r, &strat(&[0.4, 0.6]), &strat(&[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        assert!(matches!(
            expected_payoff(&r, &strat(&[1.0, 1.0, 1.0]), &strat(&[0.5, 0.5])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn payoff_vectors() {
        let c = PayoffMatrix::constant(3, 2, 0.25).unwrap();
        let ry = payoff_vector_row(&c, &strat(&[0.1, 0.9])).unwrap();
        assert!(ry.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let ry = payoff_vector_row(&g2(), &strat(&[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(ry[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ry[1], 0.5, epsilon = 1e-15);
        let rtx = payoff_vector_col(&g2(), &MixedStrategy::pure(2, 0)).unwrap();
        assert_abs_diff_eq!(rtx[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(rtx[1], 0.2, epsilon = 1e-12);
        assert!(payoff_vector_col(&g2(), &strat(&[1.0])).is_err());
    }

    #[test]
    fn epsilon_examples() {
        let c = PayoffMatrix::constant(3, 3, 0.4).unwrap();
        assert_eq!(epsilon_of(&c, &StrategyProfile::uniform(3, 3)).unwrap(), 0.0);
        let r = g2();
        let ne = StrategyProfile::from_probabilities(&[0.4, 0.6], &[0.5, 0.5]).unwrap();
        assert!(epsilon_of(&r, &ne).unwrap() <= 1e-12);
        let pure = StrategyProfile::new(MixedStrategy::pure(2, 0), MixedStrategy::pure(2, 0));
        assert_abs_diff_eq!(epsilon_of(&r, &pure).unwrap(), 0.6, epsilon = 1e-12);
        let wrong = StrategyProfile::uniform(3, 2);
        assert!(epsilon_of(&r, &wrong).is_err());
    }

    #[test]
    fn support_examples() {
        assert_eq!(strat(&[0.5, 0.5]).support(1e-9), vec![0, 1]);
        assert_eq!(strat(&[1.0, 0.0]).support(1e-9), vec![0]);
        let shaped = strat(&[
            0.126766, 0.276988, 0.0, 0.22506, 0.081435, 0.0, 0.191705, 0.0, 0.098045, 0.0,
        ]);
        // 1-based {1,2,4,5,7,9}
        assert_eq!(shaped.support(1e-9), vec![0, 1, 3, 4, 6, 8]);
    }

    #[test]
    fn rescale_examples() {
        let inside = [0.2, 0.9, 1.0, 0.5];
        let r = rescale(2, 2, &inside).unwrap();
        assert_eq!(r.entries(), &inside);

        let r = rescale(2, 2, &[-1.0, 1.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.entries(), &[RESCALE_FLOOR, 1.0, 1.0, RESCALE_FLOOR]);

        let r = rescale(2, 3, &[4.0; 6]).unwrap();
        assert!(r.entries().iter().all(|&e| e == 0.5));

        assert!(matches!(
            rescale(1, 2, &[1.0, f64::INFINITY]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn pure_strategy_sits_on_the_floor() {
        let p = MixedStrategy::pure(3, 1);
        assert_eq!(p.log_weights(), &[LOG_FLOOR, 0.0, LOG_FLOOR]);
        assert!(p.probabilities().iter().all(|&q| q > 0.0));
        assert_abs_diff_eq!(p.probabilities().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn from_log_weights_rejects_nan_and_positive_infinity() {
        assert!(MixedStrategy::from_log_weights(vec![0.0, f64::NAN]).is_err());
        assert!(MixedStrategy::from_log_weights(vec![0.0, f64::INFINITY]).is_err());
        assert!(MixedStrategy::from_log_weights(vec![f64::NEG_INFINITY; 2]).is_err());
        let s = MixedStrategy::from_log_weights(vec![f64::NEG_INFINITY, 3.0]).unwrap();
        assert_eq!(s.log_weights()[0], LOG_FLOOR);
    }

    #[test]
    fn matrix_text_format() {
        let text = "# a comment\n2 3\n0.5 1 0.25\n# another\n0.125 0.75 1e-3";
        let r = PayoffMatrix::parse(text).unwrap();
        assert_eq!((r.rows(), r.cols()), (2, 3));
        assert_eq!(r.get(1, 2), 0.001);
        assert_eq!(r.to_text(), "2 3\n0.5 1 0.25\n0.125 0.75 0.001\n");
        assert_eq!(PayoffMatrix::parse(&r.to_text()).unwrap(), r);

        assert!(PayoffMatrix::parse("2 2\n0.5 0.5\n").is_err());
        assert!(PayoffMatrix::parse("1 2\n0.5 1.5\n").is_err());
        assert!(PayoffMatrix::parse("1 2\n0.5 0,5\n").is_err());
        assert!(PayoffMatrix::parse("1 2\n0.5 0.5 0.5\n").is_err());
        assert!(PayoffMatrix::parse("1 2 3\n0.5 0.5\n").is_err());
        assert!(PayoffMatrix::parse("1 1\n0.5\n0.5\n").is_err());
    }

    #[test]
    fn permuted_relabels_entries() {
        let r = PayoffMatrix::from_rows(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]).unwrap();
        let p = r.permuted(&[1, 0], &[2, 0, 1]).unwrap();
        assert_eq!(p.row(0), &[0.6, 0.4, 0.5]);
        assert_eq!(p.row(1), &[0.3, 0.1, 0.2]);
        assert!(r.permuted(&[0, 0], &[0, 1, 2]).is_err());
    }

    fn simplex(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, dim)
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = PayoffMatrix> {
        proptest::collection::vec(0.001f64..=1.0, rows * cols)
            .prop_map(move |e| PayoffMatrix::new(rows, cols, e).unwrap())
    }

    proptest! {
        #[test]
        fn probabilities_are_normalised_and_positive(lw in proptest::collection::vec(-900.0f64..50.0, 1..12)) {
            let s = MixedStrategy::from_log_weights(lw).unwrap();
            let p = s.probabilities();
            prop_assert!(p.iter().all(|&q| q > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(s.log_weights().iter().all(|&w| w.is_finite() && w >= LOG_FLOOR));
        }

        #[test]
        fn expected_payoff_is_bilinear(r in matrix(3, 4), a in simplex(3), b in simplex(3), y in simplex(4)) {
            let (xa, xb, ys) = (strat(&a), strat(&b), strat(&y));
            let pa = expected_payoff(&r, &xa, &ys).unwrap();
            let pb = expected_payoff(&r, &xb, &ys).unwrap();
            for alpha in [0.0, 0.25, 0.5, 1.0] {
                let mix: Vec<f64> = xa.probabilities().iter().zip(xb.probabilities())
                    .map(|(u, v)| alpha * u + (1.0 - alpha) * v).collect();
                let pm = expected_payoff(&r, &strat(&mix), &ys).unwrap();
                prop_assert!((pm - (alpha * pa + (1.0 - alpha) * pb)).abs() <= 1e-12);
            }
        }

        #[test]
        fn rescale_preserves_argmax(raw in proptest::collection::vec(-5.0f64..5.0, 12), y in simplex(4), x in simplex(3)) {
            let r = rescale(3, 4, &raw).unwrap();
            let raw_rows: Vec<f64> = (0..3).map(|i| (0..4).map(|j| raw[i * 4 + j] * y[j]).sum()).collect();
            let ry: Vec<f64> = (0..3).map(|i| (0..4).map(|j| r.get(i, j) * y[j]).sum()).collect();
            prop_assert_eq!(argmax(&raw_rows), argmax(&ry));
            let raw_cols: Vec<f64> = (0..4).map(|j| (0..3).map(|i| raw[i * 4 + j] * x[i]).sum()).collect();
            let rtx: Vec<f64> = (0..4).map(|j| (0..3).map(|i| r.get(i, j) * x[i]).sum()).collect();
            prop_assert_eq!(argmax(&raw_cols), argmax(&rtx));
        }
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
            .0
    }
}
