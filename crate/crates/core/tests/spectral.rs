use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use zsd::equilibrium::{solve_2x2, solve_support_enum, EquilibriumResult};
use zsd::experiments::random_game;
use zsd::spectral::{
    certify_contraction, cleaned_equilibrium, eigen_moduli, finite_difference_jacobian, jacobian_at_equilibrium,
    pnorm_certificate, DEFAULT_SUPPORT_TOL,
};
use zsd::{DenseMatrix, Error, PayoffMatrix, StrategyProfile};

fn dm(rows: &[&[f64]]) -> DenseMatrix {
    DenseMatrix::from_rows(rows).unwrap()
}

/// Moduli of the roots of the characteristic polynomial of a 2x2 or 3x3 matrix.
fn char_poly_moduli(m: &DenseMatrix) -> Vec<f64> {
    let g = |i, j| m.get(i, j);
    let mut out = match m.rows() {
        2 => {
            let (tr, det) = (g(0, 0) + g(1, 1), g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0));
            quadratic_moduli(-tr, det)
        }
        3 => {
            // λ³ + a λ² + b λ + c
            let tr = g(0, 0) + g(1, 1) + g(2, 2);
            let minors = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) + g(0, 0) * g(2, 2) - g(0, 2) * g(2, 0)
                + g(1, 1) * g(2, 2)
                - g(1, 2) * g(2, 1);
            let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
            let (a, b, c) = (-tr, minors, -det);
            let f = |l: f64| ((l + a) * l + b) * l + c;
            // A real root lies in [-B, B] with B the Cauchy bound; bisect, then polish by Newton.
            let bound = 1.0 + a.abs().max(b.abs()).max(c.abs());
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut r = 0.5 * (lo + hi);
            for _ in 0..5 {
                let d = (3.0 * r + 2.0 * a) * r + b;
                if d != 0.0 {
                    r -= f(r) / d;
                }
            }
            // Deflate: λ² + (a + r) λ + (b + r (a + r)).
            let mut rest = quadratic_moduli(a + r, b + r * (a + r));
            rest.push(r.abs());
            rest
        }
        _ => unreachable!(),
    };
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

fn quadratic_moduli(b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        vec![((-b + s) / 2.0).abs(), ((-b - s) / 2.0).abs()]
    } else {
        let m = c.abs().sqrt();
        vec![m, m]
    }
}

#[test]
fn eigen_examples() {
    assert_eq!(eigen_moduli(&DenseMatrix::identity(3)).unwrap(), vec![1.0, 1.0, 1.0]);
    let rot = eigen_moduli(&dm(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
    assert_abs_diff_eq!(rot[0], 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(rot[1], 1.0, epsilon = 1e-15);
    let m = eigen_moduli(&dm(&[&[0.5, 0.2], &[0.1, 0.4]])).unwrap();
    assert_abs_diff_eq!(m[0], 0.6, epsilon = 1e-14);
    assert_abs_diff_eq!(m[1], 0.3, epsilon = 1e-14);
}

#[test]
fn eigen_handles_larger_structured_matrices() {
    // Companion matrix of (λ - 1)(λ - 2)...(λ - 6).
    let coeffs = [720.0, -1764.0, 1624.0, -735.0, 175.0, -21.0];
    let mut c = DenseMatrix::zeros(6, 6);
    for i in 1..6 {
        c.set(i, i - 1, 1.0);
    }
    for (i, &a) in coeffs.iter().enumerate() {
        c.set(i, 5, -a);
    }
    let m = eigen_moduli(&c).unwrap();
    for (k, v) in m.iter().enumerate() {
        assert!((v - (6 - k) as f64).abs() <= 1e-8, "{m:?}");
    }
    // A 60x60 rotation-block matrix: moduli are the block scalings.
    let mut b = DenseMatrix::zeros(60, 60);
    for k in 0..30 {
        let r = 0.5 + k as f64 / 60.0;
        let t = 0.1 * k as f64 + 0.3;
        b.set(2 * k, 2 * k, r * t.cos());
        b.set(2 * k, 2 * k + 1, -r * t.sin());
        b.set(2 * k + 1, 2 * k, r * t.sin());
        b.set(2 * k + 1, 2 * k + 1, r * t.cos());
    }
    let m = eigen_moduli(&b).unwrap();
    assert_abs_diff_eq!(m[0], 0.5 + 29.0 / 60.0, epsilon = 1e-10);
    assert_abs_diff_eq!(m[59], 0.5, epsilon = 1e-10);
}

#[test]
fn eigen_rejects_bad_input() {
    assert!(matches!(eigen_moduli(&DenseMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    assert!(matches!(eigen_moduli(&DenseMatrix::zeros(201, 201)), Err(Error::Input(_))));
    let mut m = DenseMatrix::identity(2);
    m.set(0, 1, f64::NAN);
    assert!(eigen_moduli(&m).is_err());
}

proptest! {
    #[test]
    fn eigen_matches_characteristic_polynomial_2x2(v in prop::collection::vec(-2.0f64..2.0, 4)) {
        let m = dm(&[&v[0..2], &v[2..4]]);
        let got = eigen_moduli(&m).unwrap();
        let want = char_poly_moduli(&m);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{:?} vs {:?}", got, want);
        }
    }

    #[test]
    fn eigen_matches_characteristic_polynomial_3x3(v in prop::collection::vec(-2.0f64..2.0, 9)) {
        let m = dm(&[&v[0..3], &v[3..6], &v[6..9]]);
        let got = eigen_moduli(&m).unwrap();
        let want = char_poly_moduli(&m);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{:?} vs {:?}", got, want);
        }
    }
}

fn g2(rows: &[[f64; 2]]) -> PayoffMatrix {
    PayoffMatrix::from_rows(rows).unwrap()
}

#[test]
fn pure_equilibrium_has_a_zero_support_block() {
    let r = g2(&[[0.9, 0.8], [0.2, 0.1]]);
    let ne = solve_2x2(&r).unwrap();
    let jac = jacobian_at_equilibrium(&r, &ne, 0.1, 5.0, DEFAULT_SUPPORT_TOL).unwrap();
    assert_eq!((jac.k1(), jac.k2()), (1, 1));
    assert!(jac.support_submatrix.max_abs() <= 1e-15);
    let report = certify_contraction(&r, &ne, 0.1, 5.0).unwrap();
    assert!(report.support_spectral_radius <= 1e-15);
    assert!(report.spectral_radius < 1.0);
    // Full radius is the largest off-support diagonal entry.
    let off = [(0.1f64 * (0.2 - 0.8)).exp(), (-0.1f64 * (0.9 - 0.8)).exp()];
    assert_abs_diff_eq!(report.spectral_radius, off[0].max(off[1]), epsilon = 1e-14);
}

#[test]
fn symmetric_game_dxx_entry() {
    let r = g2(&[[0.9, 0.1], [0.1, 0.9]]);
    let ne = solve_2x2(&r).unwrap();
    for (eta, xi) in [(0.1, 5.0), (0.3, 0.1), (0.05, 100.0)] {
        let jac = jacobian_at_equilibrium(&r, &ne, eta, xi, DEFAULT_SUPPORT_TOL).unwrap();
        assert_abs_diff_eq!(jac.dxx.get(0, 0), -0.08, epsilon = 1e-15);
    }
}

fn game_with_partial_row_support() -> (PayoffMatrix, EquilibriumResult) {
    (0..)
        .map(|seed| {
            let r = random_game(3, 3, 7_000 + seed);
            let ne = solve_support_enum(&r, 1e-10).unwrap();
            (r, ne)
        })
        .find(|(_, ne)| ne.profile.x.support(1e-9).len() == 2)
        .unwrap()
}

#[test]
fn off_support_rows_are_a_single_diagonal_entry_below_one() {
    let (r, ne) = game_with_partial_row_support();
    let eta = 0.1;
    let jac = jacobian_at_equilibrium(&r, &ne, eta, 5.0, DEFAULT_SUPPORT_TOL).unwrap();
    let (x, y) = cleaned_equilibrium(&r, &ne, DEFAULT_SUPPORT_TOL).unwrap();
    let i = (0..3).find(|&i| x[i] == 0.0).unwrap();
    let ry: f64 = (0..3).map(|j| r.get(i, j) * y[j]).sum();
    let expect = (eta * (ry - jac.value)).exp();
    for c in 0..6 {
        let want = if c == i { expect } else { 0.0 };
        assert_eq!(jac.full.get(i, c), want);
    }
    assert!(expect < 1.0);
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut instances = vec![game_with_partial_row_support()];
    for seed in 0..6 {
        let r = random_game(4, 3, 8_000 + seed);
        let ne = solve_support_enum(&r, 1e-10).unwrap();
        instances.push((r, ne));
    }
    for (r, ne) in &instances {
        for (eta, xi) in [(0.05, 10.0), (0.1, 2.0), (0.3, 0.5)] {
            let jac = jacobian_at_equilibrium(r, ne, eta, xi, DEFAULT_SUPPORT_TOL).unwrap();
            let (x, y) = cleaned_equilibrium(r, ne, DEFAULT_SUPPORT_TOL).unwrap();
            let fd = finite_difference_jacobian(r, &x, &y, eta, xi, 1e-6);
            for i in 0..fd.rows() {
                for j in 0..fd.cols() {
                    assert!(
                        (fd.get(i, j) - jac.full.get(i, j)).abs() <= 1e-4,
                        "entry ({i},{j}): fd {} vs analytic {}",
                        fd.get(i, j),
                        jac.full.get(i, j)
                    );
                }
            }
        }
    }
}

#[test]
fn left_kernel_and_block_bounds_hold() {
    for seed in 0..40 {
        let n = 3 + (seed % 3) as usize;
        let r = random_game(n, n, 9_000 + seed);
        let ne = solve_support_enum(&r, 1e-10).unwrap();
        let jac = jacobian_at_equilibrium(&r, &ne, 0.05, 10.0, DEFAULT_SUPPORT_TOL).unwrap();
        assert!(jac.left_kernel_residual() <= 1e-10, "seed {seed}");
        for b in [&jac.dxx, &jac.dxy, &jac.dyx, &jac.dyy] {
            assert!(b.max_abs() <= 1.0 + 1e-12);
        }
        // A single-strategy support makes its D block identically zero.
        for d in [&jac.dxx, &jac.dyy].into_iter().filter(|d| d.rows() > 1) {
            assert!((0..d.rows()).all(|i| d.get(i, i) < -1e-12), "seed {seed}");
        }
    }
}

#[test]
fn j_prime_has_eigenvalue_one_and_its_projection_matches_j_tilde() {
    let r = random_game(4, 4, 31);
    let ne = solve_support_enum(&r, 1e-10).unwrap();
    let jac = jacobian_at_equilibrium(&r, &ne, 0.05, 10.0, DEFAULT_SUPPORT_TOL).unwrap();
    let (x, y) = cleaned_equilibrium(&r, &ne, DEFAULT_SUPPORT_TOL).unwrap();
    let jp = jac.j_prime(&x, &y);
    // (1, 0) J' = (1, 0)
    for c in 0..jp.cols() {
        let s: f64 = (0..jac.k1()).map(|row| jp.get(row, c)).sum();
        let want = if c < jac.k1() { 1.0 } else { 0.0 };
        assert!((s - want).abs() <= 1e-10);
    }
    let projected = zsd::spectral::projected_j_prime(&jac, &x, &y);
    let a = eigen_moduli(&projected).unwrap();
    let b = eigen_moduli(&jac.support_submatrix).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() <= 1e-8, "{a:?} vs {b:?}");
    }
}

#[test]
fn pnorm_certificate_examples() {
    let small = dm(&[&[0.2, 0.1], &[0.0, 0.3]]);
    let c = pnorm_certificate(&small).unwrap().unwrap();
    assert_eq!(c.p, 1);
    assert_abs_diff_eq!(c.bound, 0.4, epsilon = 1e-15);
    // Absolute row and column sums are 1.1, but the spectral norm is below one.
    let m = dm(&[&[0.6, 0.5], &[-0.5, 0.6]]);
    let c = pnorm_certificate(&m).unwrap().unwrap();
    assert_eq!(c.p, 2);
    assert_abs_diff_eq!(c.bound, (0.61f64).sqrt(), epsilon = 1e-12);
    assert!(pnorm_certificate(&DenseMatrix::identity(3)).unwrap().is_none());
}

#[test]
fn contraction_examples() {
    let r = g2(&[[0.9, 0.1], [0.1, 0.9]]);
    let ne = solve_2x2(&r).unwrap();
    let report = certify_contraction(&r, &ne, 0.1, 5.0).unwrap();
    assert!(report.is_contraction);
    assert!(report.dxx_diag_negative && report.dyy_diag_negative);
    let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["dxx_diag_negative", "dyy_diag_negative", "eta", "is_contraction", "pnorm_certificate", "spectral_radius", "xi"]
    );
}

#[test]
fn jacobian_refuses_bad_inputs() {
    let r = g2(&[[0.8, 0.2], [0.3, 0.7]]);
    let mut ne = solve_2x2(&r).unwrap();
    assert!(jacobian_at_equilibrium(&r, &ne, 1.5, 5.0, DEFAULT_SUPPORT_TOL).is_err());
    assert!(jacobian_at_equilibrium(&r, &ne, 0.1, -5.0, DEFAULT_SUPPORT_TOL).is_err());

    let blurred = StrategyProfile::from_probabilities(&[0.4, 0.6], &[1.0 - 5e-7, 5e-7]).unwrap();
    let fake = EquilibriumResult { profile: blurred, certificate_eps: 0.0, ..ne.clone() };
    assert!(matches!(
        jacobian_at_equilibrium(&r, &fake, 0.1, 5.0, DEFAULT_SUPPORT_TOL),
        Err(Error::IllConditionedSupport { index: 1, .. })
    ));

    ne.certificate_eps = 1e-3;
    assert!(matches!(jacobian_at_equilibrium(&r, &ne, 0.1, 5.0, DEFAULT_SUPPORT_TOL), Err(Error::Input(_))));
}
