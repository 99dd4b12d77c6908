//! Jacobian of the FLBR-MWU update map at an equilibrium and contraction
//! certification.
//!
//! The map acts on unnormalised `(x, y)`:
//!
//! ```text
//! φ1(x, y) = x · exp(η R f(x, y)) / <x, exp(η R f(x, y))>,  f = softmax of y · exp(-ξ Rᵀx)
//! φ2(x, y) = y · exp(-η Rᵀ g(x, y)) / <y, exp(-η Rᵀ g(x, y))>, g = softmax of x · exp(ξ R y)
//! ```
//!
//! Coordinates are ordered row player first, then column player.

pub mod eigen;

use std::fmt;

use serde::Serialize;

pub use eigen::{eigen_moduli, eigenvalues, Eigenvalue};

use crate::equilibrium::EquilibriumResult;
use crate::error::{Error, Result};
use crate::game::PayoffMatrix;

pub const DEFAULT_SUPPORT_TOL: f64 = 1e-6;
pub const DEFAULT_CONTRACTION_MARGIN: f64 = 1e-9;

/// Largest equilibrium error the Jacobian formulas are trusted at.
pub const MAX_CERTIFICATE_EPS: f64 = 1e-6;

/// Probabilities in `(support_tol * AMBIGUITY, support_tol]` are neither
/// clearly off nor clearly on the support.
const AMBIGUITY: f64 = 1e-3;

const MAX_PNORM: u32 = 16;

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a != 0.0 {
                    for j in 0..other.cols {
                        out.data[i * other.cols + j] += a * other.get(k, j);
                    }
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Induced 1-norm: largest absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Induced ∞-norm: largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Induced 2-norm, `sqrt(λ_max(MᵀM))`.
    pub fn norm_2(&self) -> Result<f64> {
        Ok(eigen_moduli(&self.transpose().mul(self))?.first().copied().unwrap_or(0.0).sqrt())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:>12.6e}", self.get(i, j))).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Jacobian of the update map at an equilibrium.
#[derive(Debug, Clone)]
pub struct EquilibriumJacobian {
    /// `(n + m) x (n + m)`.
    pub full: DenseMatrix,
    /// `J̃`: rows and columns of `full` restricted to the supports, `k1 + k2` square.
    pub support_submatrix: DenseMatrix,
    pub row_support: Vec<usize>,
    pub col_support: Vec<usize>,
    pub dxx: DenseMatrix,
    pub dxy: DenseMatrix,
    pub dyx: DenseMatrix,
    pub dyy: DenseMatrix,
    pub eta: f64,
    pub xi: f64,
    pub value: f64,
}

impl EquilibriumJacobian {
    pub fn k1(&self) -> usize {
        self.row_support.len()
    }

    pub fn k2(&self) -> usize {
        self.col_support.len()
    }

    /// `A`: `-x*_i` across the upper-left block rows and `-y*_i` across the lower-right ones.
    pub fn a_part(&self, x: &[f64], y: &[f64]) -> DenseMatrix {
        let (k1, k2) = (self.k1(), self.k2());
        let mut a = DenseMatrix::zeros(k1 + k2, k1 + k2);
        for (r, &i) in self.row_support.iter().enumerate() {
            for c in 0..k1 {
                a.set(r, c, -x[i]);
            }
        }
        for (r, &j) in self.col_support.iter().enumerate() {
            for c in 0..k2 {
                a.set(k1 + r, k1 + c, -y[j]);
            }
        }
        a
    }

    /// `J' = J̃ - A`.
    pub fn j_prime(&self, x: &[f64], y: &[f64]) -> DenseMatrix {
        let a = self.a_part(x, y);
        let mut out = self.support_submatrix.clone();
        for (o, v) in out.data.iter_mut().zip(a.data()) {
            *o -= v;
        }
        out
    }

    /// Largest entry of `(1_{k1}, 0) J̃` and `(0, 1_{k2}) J̃` in absolute value.
    pub fn left_kernel_residual(&self) -> f64 {
        let (k1, k2) = (self.k1(), self.k2());
        let j = &self.support_submatrix;
        let mut worst: f64 = 0.0;
        for c in 0..k1 + k2 {
            let top: f64 = (0..k1).map(|r| j.get(r, c)).sum();
            let bottom: f64 = (k1..k1 + k2).map(|r| j.get(r, c)).sum();
            worst = worst.max(top.abs()).max(bottom.abs());
        }
        worst
    }
}

/// Equilibrium strategies with off-support coordinates zeroed.
struct CleanEquilibrium {
    x: Vec<f64>,
    y: Vec<f64>,
    sx: Vec<usize>,
    sy: Vec<usize>,
}

fn clean_support(probs: &[f64], tol: f64, player: &str) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut out = vec![0.0; probs.len()];
    let mut support = Vec::new();
    for (i, &p) in probs.iter().enumerate() {
        if p > tol {
            out[i] = p;
            support.push(i);
        } else if p > tol * AMBIGUITY {
            return Err(Error::IllConditionedSupport { index: i, prob: p, tol });
        }
    }
    if support.is_empty() {
        return Err(Error::Input(format!("{player} strategy has empty support")));
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= s);
    Ok((out, support))
}

fn validate_rates(eta: f64, xi: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Config(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::Config(format!("xi must be finite and >= 0, got {xi}")));
    }
    Ok(())
}

fn clean(game: &PayoffMatrix, ne: &EquilibriumResult, support_tol: f64) -> Result<CleanEquilibrium> {
    ne.profile.check_dims(game)?;
    if !(ne.certificate_eps <= MAX_CERTIFICATE_EPS) {
        return Err(Error::Input(format!(
            "equilibrium certificate {} exceeds {MAX_CERTIFICATE_EPS}",
            ne.certificate_eps
        )));
    }
    let (x, sx) = clean_support(ne.profile.x.probabilities(), support_tol, "row")?;
    let (y, sy) = clean_support(ne.profile.y.probabilities(), support_tol, "column")?;
    Ok(CleanEquilibrium { x, y, sx, sy })
}

/// Jacobian of the update map at `ne`, entries in closed form.
pub fn jacobian_at_equilibrium(
    game: &PayoffMatrix,
    ne: &EquilibriumResult,
    eta: f64,
    xi: f64,
    support_tol: f64,
) -> Result<EquilibriumJacobian> {
    validate_rates(eta, xi)?;
    let CleanEquilibrium { x, y, sx, sy } = clean(game, ne, support_tol)?;
    let (n, m) = (game.rows(), game.cols());
    let r = |i: usize, j: usize| game.get(i, j);
    let ry: Vec<f64> = (0..n).map(|i| (0..m).map(|j| r(i, j) * y[j]).sum()).collect();
    let rtx: Vec<f64> = (0..m).map(|j| (0..n).map(|i| r(i, j) * x[i]).sum()).collect();
    let v: f64 = (0..n).map(|i| x[i] * ry[i]).sum();

    // Mxx[i][j] = Σ_k R_ik y_k R_jk - Σ_l (Rᵀx)_l y_l R_jl
    let mxx = |i: usize, j: usize| -> f64 {
        (0..m).map(|k| r(i, k) * y[k] * r(j, k)).sum::<f64>() - (0..m).map(|l| rtx[l] * y[l] * r(j, l)).sum::<f64>()
    };
    // Myy[i][j] = Σ_k R_ki x_k R_kj - Σ_l (Ry)_l x_l R_lj
    let myy = |i: usize, j: usize| -> f64 {
        (0..n).map(|k| r(k, i) * x[k] * r(k, j)).sum::<f64>() - (0..n).map(|l| ry[l] * x[l] * r(l, j)).sum::<f64>()
    };
    let dxy = |i: usize, j: usize| x[i] * (r(i, j) - rtx[j]) * (-xi * (rtx[j] - v)).exp();
    let dyx = |i: usize, j: usize| -y[i] * (r(j, i) - ry[j]) * (xi * (ry[j] - v)).exp();

    let mut full = DenseMatrix::zeros(n + m, n + m);
    let in_sx: Vec<bool> = (0..n).map(|i| x[i] > 0.0).collect();
    let in_sy: Vec<bool> = (0..m).map(|j| y[j] > 0.0).collect();
    for i in 0..n {
        if !in_sx[i] {
            full.set(i, i, (eta * (ry[i] - v)).exp());
            continue;
        }
        for j in 0..n {
            let own = (eta * (ry[j] - v)).exp();
            let delta = if i == j { 1.0 } else { 0.0 };
            full.set(i, j, delta - x[i] * (eta * xi * mxx(i, j) + own));
        }
        for j in 0..m {
            full.set(i, n + j, eta * dxy(i, j));
        }
    }
    for i in 0..m {
        if !in_sy[i] {
            full.set(n + i, n + i, (-eta * (rtx[i] - v)).exp());
            continue;
        }
        for j in 0..n {
            full.set(n + i, j, eta * dyx(i, j));
        }
        for j in 0..m {
            let own = (-eta * (rtx[j] - v)).exp();
            let delta = if i == j { 1.0 } else { 0.0 };
            full.set(n + i, n + j, delta - y[i] * (eta * xi * myy(i, j) + own));
        }
    }

    let support_idx: Vec<usize> = sx.iter().copied().chain(sy.iter().map(|j| n + j)).collect();
    let support_submatrix = full.submatrix(&support_idx, &support_idx);
    let block = |rows: &[usize], cols: &[usize], f: &dyn Fn(usize, usize) -> f64| {
        let mut b = DenseMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (c, &j) in cols.iter().enumerate() {
                b.set(a, c, f(i, j));
            }
        }
        b
    };
    Ok(EquilibriumJacobian {
        dxx: block(&sx, &sx, &|i, j| -x[i] * mxx(i, j)),
        dxy: block(&sx, &sy, &dxy),
        dyx: block(&sy, &sx, &dyx),
        dyy: block(&sy, &sy, &|i, j| -y[i] * myy(i, j)),
        full,
        support_submatrix,
        row_support: sx,
        col_support: sy,
        eta,
        xi,
        value: v,
    })
}

fn normalized_reweigh(s: &[f64], gain: &[f64], rate: f64) -> Vec<f64> {
    let top = gain.iter().map(|g| rate * g).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = s.iter().zip(gain).map(|(p, g)| p * (rate * g - top).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// The update map `φ` on unnormalised vectors, in plain arithmetic.
pub fn update_map(game: &PayoffMatrix, x: &[f64], y: &[f64], eta: f64, xi: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (game.rows(), game.cols());
    let ry: Vec<f64> = (0..n).map(|i| (0..m).map(|j| game.get(i, j) * y[j]).sum()).collect();
    let rtx: Vec<f64> = (0..m).map(|j| (0..n).map(|i| game.get(i, j) * x[i]).sum()).collect();
    let g = normalized_reweigh(x, &ry, xi);
    let f = normalized_reweigh(y, &rtx, -xi);
    let rf: Vec<f64> = (0..n).map(|i| (0..m).map(|j| game.get(i, j) * f[j]).sum()).collect();
    let rtg: Vec<f64> = (0..m).map(|j| (0..n).map(|i| game.get(i, j) * g[i]).sum()).collect();
    (normalized_reweigh(x, &rf, eta), normalized_reweigh(y, &rtg, -eta))
}

/// Central finite-difference Jacobian of [`update_map`] at `(x, y)`.
pub fn finite_difference_jacobian(game: &PayoffMatrix, x: &[f64], y: &[f64], eta: f64, xi: f64, h: f64) -> DenseMatrix {
    let (n, m) = (x.len(), y.len());
    let mut out = DenseMatrix::zeros(n + m, n + m);
    let mut point: Vec<f64> = x.iter().chain(y).copied().collect();
    for c in 0..n + m {
        let orig = point[c];
        point[c] = orig + h;
        let (px, py) = update_map(game, &point[..n], &point[n..], eta, xi);
        point[c] = orig - h;
        let (mx, my) = update_map(game, &point[..n], &point[n..], eta, xi);
        point[c] = orig;
        for r in 0..n {
            out.set(r, c, (px[r] - mx[r]) / (2.0 * h));
        }
        for r in 0..m {
            out.set(n + r, c, (py[r] - my[r]) / (2.0 * h));
        }
    }
    out
}

/// Equilibrium strategies as the Jacobian sees them (off-support zeroed).
pub fn cleaned_equilibrium(game: &PayoffMatrix, ne: &EquilibriumResult, support_tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = clean(game, ne, support_tol)?;
    Ok((c.x, c.y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PNormCertificate {
    pub p: u32,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// Largest eigenvalue modulus of the full Jacobian.
    pub spectral_radius: f64,
    /// Largest eigenvalue modulus of `J̃`.
    pub support_spectral_radius: f64,
    pub is_contraction: bool,
    pub pnorm_certificate: Option<PNormCertificate>,
    pub dxx_diag_negative: bool,
    pub dyy_diag_negative: bool,
    pub eta: f64,
    pub xi: f64,
}

#[derive(Serialize)]
struct ContractionJson {
    spectral_radius: f64,
    is_contraction: bool,
    pnorm_certificate: Option<PNormCertificate>,
    dxx_diag_negative: bool,
    dyy_diag_negative: bool,
    eta: f64,
    xi: f64,
}

impl ContractionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ContractionJson {
            spectral_radius: self.spectral_radius,
            is_contraction: self.is_contraction,
            pnorm_certificate: self.pnorm_certificate,
            dxx_diag_negative: self.dxx_diag_negative,
            dyy_diag_negative: self.dyy_diag_negative,
            eta: self.eta,
            xi: self.xi,
        })
        .expect("finite floats serialize")
    }
}

/// Upper bounds on `||M||_p` for `p = 1..=16`: exact at 1 and 2, Riesz-Thorin
/// interpolation between the 1- and ∞-norms otherwise. First `p` below one wins.
pub fn pnorm_certificate(m: &DenseMatrix) -> Result<Option<PNormCertificate>> {
    let (n1, ninf) = (m.norm_1(), m.norm_inf());
    for p in 1..=MAX_PNORM {
        let bound = match p {
            1 => n1,
            2 => m.norm_2()?,
            _ => {
                let t = 1.0 / f64::from(p);
                n1.powf(t) * ninf.powf(1.0 - t)
            }
        };
        if bound < 1.0 {
            return Ok(Some(PNormCertificate { p, bound }));
        }
    }
    Ok(None)
}

/// `P J' P` with `P` the orthogonal projector onto `{Σ x̃ = 0, Σ ỹ = 0}`.
///
/// `J'` always has the eigenvalue 1 (left eigenvector `(1, 0)`), so a norm
/// bound below one can only hold on the invariant subspace where the
/// dynamics actually move; the spectrum there equals that of `J̃`.
pub fn projected_j_prime(jac: &EquilibriumJacobian, x: &[f64], y: &[f64]) -> DenseMatrix {
    let (k1, k2) = (jac.k1(), jac.k2());
    let k = k1 + k2;
    let mut p = DenseMatrix::identity(k);
    for a in 0..k {
        for b in 0..k {
            if a < k1 && b < k1 {
                p.set(a, b, p.get(a, b) - 1.0 / k1 as f64);
            } else if a >= k1 && b >= k1 {
                p.set(a, b, p.get(a, b) - 1.0 / k2 as f64);
            }
        }
    }
    p.mul(&jac.j_prime(x, y)).mul(&p)
}

pub fn certify_contraction(game: &PayoffMatrix, ne: &EquilibriumResult, eta: f64, xi: f64) -> Result<ContractionReport> {
    certify_contraction_with(game, ne, eta, xi, DEFAULT_SUPPORT_TOL, DEFAULT_CONTRACTION_MARGIN)
}

pub fn certify_contraction_with(
    game: &PayoffMatrix,
    ne: &EquilibriumResult,
    eta: f64,
    xi: f64,
    support_tol: f64,
    margin: f64,
) -> Result<ContractionReport> {
    let jac = jacobian_at_equilibrium(game, ne, eta, xi, support_tol)?;
    let (x, y) = cleaned_equilibrium(game, ne, support_tol)?;
    let spectral_radius = eigen_moduli(&jac.full)?.first().copied().unwrap_or(0.0);
    let support_spectral_radius = eigen_moduli(&jac.support_submatrix)?.first().copied().unwrap_or(0.0);
    let diag_negative = |d: &DenseMatrix| (0..d.rows()).all(|i| d.get(i, i) < 0.0);
    Ok(ContractionReport {
        spectral_radius,
        support_spectral_radius,
        is_contraction: spectral_radius < 1.0 - margin,
        pnorm_certificate: pnorm_certificate(&projected_j_prime(&jac, &x, &y))?,
        dxx_diag_negative: diag_negative(&jac.dxx),
        dyy_diag_negative: diag_negative(&jac.dyy),
        eta,
        xi,
    })
}
