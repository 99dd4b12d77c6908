//! Eigenvalues of a small dense real matrix: balancing, reduction to upper
//! Hessenberg form by stabilised elimination, then Francis double-shift QR.

use super::DenseMatrix;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 200;

/// QR sweeps allowed per eigenvalue before giving up.
const MAX_SWEEPS: usize = 60;

/// A complex eigenvalue `re + i im`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// 1-based square work array, so the QR sweep reads like its textbook form.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    fn new(m: &DenseMatrix) -> Self {
        let n = m.rows();
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * (n + 1) + j + 1] = m.get(i, j);
            }
        }
        Self { n, a }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.n + 1) + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let n1 = self.n + 1;
        self.a[i * n1 + j] = v;
    }

    #[inline]
    fn sub(&mut self, i: usize, j: usize, v: f64) {
        let n1 = self.n + 1;
        self.a[i * n1 + j] -= v;
    }

    fn swap(&mut self, (i1, j1): (usize, usize), (i2, j2): (usize, usize)) {
        let n1 = self.n + 1;
        self.a.swap(i1 * n1 + j1, i2 * n1 + j2);
    }

    /// Diagonal similarity by powers of two so that row and column norms match.
    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let n = self.n;
        let sqrdx = RADIX * RADIX;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let (mut r, mut c) = (0.0, 0.0);
                for j in 1..=n {
                    if j != i {
                        c += self.at(j, i).abs();
                        r += self.at(i, j).abs();
                    }
                }
                if c == 0.0 || r == 0.0 {
                    continue;
                }
                let s = c + r;
                let mut f = 1.0;
                let mut g = r / RADIX;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        let v = self.at(i, j) * g;
                        self.set(i, j, v);
                        let v = self.at(j, i) * f;
                        self.set(j, i, v);
                    }
                }
            }
        }
    }

    /// Gaussian elimination with pivoting to upper Hessenberg form.
    fn hessenberg(&mut self) {
        let n = self.n;
        for m in 2..n {
            let mut x = 0.0f64;
            let mut piv = m;
            for j in m..=n {
                if self.at(j, m - 1).abs() > x.abs() {
                    x = self.at(j, m - 1);
                    piv = j;
                }
            }
            if piv != m {
                for j in (m - 1)..=n {
                    self.swap((piv, j), (m, j));
                }
                for j in 1..=n {
                    self.swap((j, piv), (j, m));
                }
            }
            if x != 0.0 {
                for i in (m + 1)..=n {
                    let mut y = self.at(i, m - 1);
                    if y != 0.0 {
                        y /= x;
                        self.set(i, m - 1, y);
                        for j in m..=n {
                            let v = y * self.at(m, j);
                            self.sub(i, j, v);
                        }
                        for j in 1..=n {
                            let v = y * self.at(j, i);
                            self.set(j, m, self.at(j, m) + v);
                        }
                    }
                }
            }
        }
        for i in 1..=n {
            for j in 1..i.saturating_sub(1) {
                self.set(i, j, 0.0);
            }
        }
    }

    /// Francis double-shift QR on the Hessenberg matrix; writes into `out[1..=n]`.
    fn qr(&mut self, out: &mut [Option<Eigenvalue>]) -> std::result::Result<(), usize> {
        let n = self.n;
        let mut anorm = 0.0;
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm += self.at(i, j).abs();
            }
        }
        let mut nn = n;
        let mut t = 0.0;
        let (mut p, mut q, mut r): (f64, f64, f64);
        let (mut x, mut y, mut z, mut w): (f64, f64, f64, f64);
        let mut sweeps_total = 0usize;
        while nn >= 1 {
            let mut its = 0usize;
            loop {
                let mut l = nn;
                while l >= 2 {
                    let mut s = self.at(l - 1, l - 1).abs() + self.at(l, l).abs();
                    if s == 0.0 {
                        s = anorm;
                    }
                    if self.at(l, l - 1).abs() + s == s {
                        self.set(l, l - 1, 0.0);
                        break;
                    }
                    l -= 1;
                }
                x = self.at(nn, nn);
                if l == nn {
                    out[nn] = Some(Eigenvalue { re: x + t, im: 0.0 });
                    nn -= 1;
                    break;
                }
                y = self.at(nn - 1, nn - 1);
                w = self.at(nn, nn - 1) * self.at(nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        let mut lo = x + z;
                        let hi = x + z;
                        if z != 0.0 {
                            lo = x - w / z;
                        }
                        out[nn - 1] = Some(Eigenvalue { re: hi, im: 0.0 });
                        out[nn] = Some(Eigenvalue { re: lo, im: 0.0 });
                    } else {
                        out[nn - 1] = Some(Eigenvalue { re: x + p, im: -z });
                        out[nn] = Some(Eigenvalue { re: x + p, im: z });
                    }
                    nn = nn.saturating_sub(2);
                    break;
                }
                if its == MAX_SWEEPS {
                    return Err(sweeps_total);
                }
                if its > 0 && its.is_multiple_of(10) {
                    // Exceptional shift.
                    t += x;
                    for i in 1..=nn {
                        self.sub(i, i, x);
                    }
                    let s = self.at(nn, nn - 1).abs() + self.at(nn - 1, nn - 2).abs();
                    x = 0.75 * s;
                    y = x;
                    w = -0.4375 * s * s;
                }
                its += 1;
                sweeps_total += 1;

                let mut m = nn - 2;
                loop {
                    z = self.at(m, m);
                    r = x - z;
                    let s = y - z;
                    p = (r * s - w) / self.at(m + 1, m) + self.at(m, m + 1);
                    q = self.at(m + 1, m + 1) - z - r - s;
                    r = self.at(m + 2, m + 1);
                    let s = p.abs() + q.abs() + r.abs();
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == l {
                        break;
                    }
                    let u = self.at(m, m - 1).abs() * (q.abs() + r.abs());
                    let v = p.abs() * (self.at(m - 1, m - 1).abs() + z.abs() + self.at(m + 1, m + 1).abs());
                    if u + v == v {
                        break;
                    }
                    m -= 1;
                }
                for i in (m + 2)..=nn {
                    self.set(i, i - 2, 0.0);
                    if i != m + 2 {
                        self.set(i, i - 3, 0.0);
                    }
                }
                let mut k = m;
                while k < nn {
                    if k != m {
                        p = self.at(k, k - 1);
                        q = self.at(k + 1, k - 1);
                        r = 0.0;
                        if k != nn - 1 {
                            r = self.at(k + 2, k - 1);
                        }
                        x = p.abs() + q.abs() + r.abs();
                        if x != 0.0 {
                            p /= x;
                            q /= x;
                            r /= x;
                        }
                    }
                    let s = (p * p + q * q + r * r).sqrt().copysign(p);
                    if s != 0.0 {
                        if k == m {
                            if l != m {
                                let v = -self.at(k, k - 1);
                                self.set(k, k - 1, v);
                            }
                        } else {
                            self.set(k, k - 1, -s * x);
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for j in k..=nn {
                            p = self.at(k, j) + q * self.at(k + 1, j);
                            if k != nn - 1 {
                                p += r * self.at(k + 2, j);
                                self.sub(k + 2, j, p * z);
                            }
                            self.sub(k + 1, j, p * y);
                            self.sub(k, j, p * x);
                        }
                        let mmin = nn.min(k + 3);
                        for i in l..=mmin {
                            p = x * self.at(i, k) + y * self.at(i, k + 1);
                            if k != nn - 1 {
                                p += z * self.at(i, k + 2);
                                self.sub(i, k + 2, p * r);
                            }
                            self.sub(i, k + 1, p * q);
                            self.sub(i, k, p);
                        }
                    }
                    k += 1;
                }
                if l + 1 >= nn {
                    break;
                }
            }
        }
        Ok(())
    }
}

/// All eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<Eigenvalue>> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::Dimension(format!("eigenvalues need a square matrix, got {}x{}", n, m.cols())));
    }
    if n > MAX_DIM {
        return Err(Error::Input(format!("matrix of size {n} exceeds the eigen solver limit {MAX_DIM}")));
    }
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut work = Work::new(m);
    work.balance();
    work.hessenberg();
    let mut out = vec![None; n + 1];
    match work.qr(&mut out) {
        Ok(()) => Ok(out.into_iter().skip(1).map(|e| e.expect("every slot filled")).collect()),
        Err(sweeps) => {
            let mut partial: Vec<f64> = out.iter().flatten().map(Eigenvalue::modulus).collect();
            partial.sort_by(|a, b| b.total_cmp(a));
            Err(Error::Convergence {
                sweeps,
                found: partial.len(),
                total: n,
                partial,
            })
        }
    }
}

/// Eigenvalue moduli in descending order.
pub fn eigen_moduli(m: &DenseMatrix) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = eigenvalues(m)?.iter().map(Eigenvalue::modulus).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}
