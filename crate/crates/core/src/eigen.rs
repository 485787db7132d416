//! Dense complex non-symmetric eigensolver.
//!
//! Pipeline: diagonal balancing, Householder reduction to Hessenberg form,
//! single-shift complex QR (Wilkinson shifts, exceptional shifts every ten
//! stalled sweeps) to Schur form, then eigenvectors by back-substitution on the
//! triangular factor. The sweep budget is `30 * dim`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::DenseMatrix;
use crate::scalar::{abs1, lit, tol, Real, C};

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    pub eigenvalues: Vec<C<T>>,
    /// Right eigenvectors, unit 2-norm, largest component real and positive.
    pub eigenvectors: Vec<Vec<C<T>>>,
    /// `‖Hv − Ev‖₂` per pair, measured against the input matrix.
    pub residuals: Vec<T>,
    /// Frobenius norm of the input matrix.
    pub norm: T,
}

impl<T: Real> Spectrum<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_residual(&self) -> T {
        self.residuals.iter().fold(T::zero(), |a, &r| a.max(r))
    }
}

/// Frobenius norm, the scale used for residual and classification cuts.
pub fn spectral_norm_estimate<T: Real>(h: &DenseMatrix<T>) -> T {
    h.frobenius_norm()
}

/// Residual bound promised by [`eig`] for a matrix of the given norm.
pub fn residual_tolerance<T: Real>(norm: T) -> T {
    tol::<T>(1e-8) * norm.max(T::min_positive_value())
}

/// All eigenvalues and right eigenvectors, sorted by real then imaginary part.
pub fn eig<T: Real>(h: &DenseMatrix<T>) -> Result<Spectrum<T>> {
    check_input(h)?;
    let n = h.dim();
    let mut w = Work::new(h, true);
    w.hessenberg();
    w.schur()?;
    let tnorm = w.a.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
    let vectors: Vec<Vec<C<T>>> = (0..n).into_par_iter().map(|k| w.eigenvector(k, tnorm)).collect();
    let values: Vec<C<T>> = (0..n).map(|k| w.a[k * n + k]).collect();
    let order = sort_order(&values);
    let eigenvalues: Vec<C<T>> = order.iter().map(|&k| values[k]).collect();
    let eigenvectors: Vec<Vec<C<T>>> = order.iter().map(|&k| vectors[k].clone()).collect();
    let residuals = eigenvalues.par_iter().zip(eigenvectors.par_iter()).map(|(&e, v)| residual(h, e, v)).collect();
    Ok(Spectrum { eigenvalues, eigenvectors, residuals, norm: h.frobenius_norm() })
}

/// Eigenvalues only, sorted like [`eig`]. Skips the triangular update outside
/// the active block and the transform accumulation.
pub fn eigenvalues<T: Real>(h: &DenseMatrix<T>) -> Result<Vec<C<T>>> {
    check_input(h)?;
    let n = h.dim();
    let mut w = Work::new(h, false);
    w.hessenberg();
    w.schur()?;
    let values: Vec<C<T>> = (0..n).map(|k| w.a[k * n + k]).collect();
    Ok(sort_order(&values).into_iter().map(|k| values[k]).collect())
}

pub fn residual<T: Real>(h: &DenseMatrix<T>, e: C<T>, v: &[C<T>]) -> T {
    h.mul_vec(v).iter().zip(v).fold(T::zero(), |s, (hv, x)| s + (*hv - e * x).norm_sqr()).sqrt()
}

fn check_input<T: Real>(h: &DenseMatrix<T>) -> Result<()> {
    if h.dim() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if !h.is_finite() {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn sort_order<T: Real>(values: &[C<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        x.re.partial_cmp(&y.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    idx
}

/// Givens pair `(c, s)` with `[c s; -s̄ c]·[x; y] = [r; 0]`, `c` real.
fn givens<T: Real>(x: C<T>, y: C<T>) -> (T, C<T>) {
    let zero = C::new(T::zero(), T::zero());
    if y == zero {
        return (T::one(), zero);
    }
    let ax = x.norm();
    if ax == T::zero() {
        return (T::zero(), y.conj() / y.norm());
    }
    let nrm = ax.hypot(y.norm());
    (ax / nrm, (x / ax) * y.conj() / nrm)
}

struct Work<T> {
    n: usize,
    a: Vec<C<T>>,
    /// Accumulated unitary stored transposed: row `j` is column `j` of Z.
    zt: Option<Vec<C<T>>>,
    scale: Vec<T>,
}

impl<T: Real> Work<T> {
    fn new(h: &DenseMatrix<T>, want_vectors: bool) -> Self {
        let n = h.dim();
        let mut w = Self { n, a: h.as_slice().to_vec(), zt: None, scale: vec![T::one(); n] };
        w.balance();
        if want_vectors {
            let mut z = vec![C::new(T::zero(), T::zero()); n * n];
            for i in 0..n {
                z[i * n + i] = C::new(T::one(), T::zero());
            }
            w.zt = Some(z);
        }
        w
    }

    /// Diagonal similarity by powers of two that evens out row and column norms.
    fn balance(&mut self) {
        let n = self.n;
        let two = lit::<T>(2.0);
        let four = lit::<T>(4.0);
        for _ in 0..100 {
            let mut converged = true;
            for i in 0..n {
                let mut c = T::zero();
                let mut r = T::zero();
                for j in 0..n {
                    if j != i {
                        c += abs1(self.a[j * n + i]);
                        r += abs1(self.a[i * n + j]);
                    }
                }
                if c == T::zero() || r == T::zero() {
                    continue;
                }
                let s = c + r;
                let mut f = T::one();
                let mut g = r / two;
                while c < g {
                    f *= two;
                    c *= four;
                }
                g = r * two;
                while c >= g {
                    f /= two;
                    c /= four;
                }
                if (c + r) / f < lit::<T>(0.95) * s {
                    converged = false;
                    self.scale[i] *= f;
                    for j in 0..n {
                        self.a[i * n + j] /= f;
                        self.a[j * n + i] *= f;
                    }
                }
            }
            if converged {
                break;
            }
        }
    }

    fn hessenberg(&mut self) {
        let n = self.n;
        if n < 3 {
            return;
        }
        let zero = C::new(T::zero(), T::zero());
        let mut v = vec![zero; n];
        let mut s = vec![zero; n];
        for k in 0..n - 2 {
            let m = n - k - 1;
            let mut tail = T::zero();
            for i in 1..m {
                tail += self.a[(k + 1 + i) * n + k].norm_sqr();
            }
            if tail == T::zero() {
                continue;
            }
            let x0 = self.a[(k + 1) * n + k];
            let xnorm = (x0.norm_sqr() + tail).sqrt();
            let phase = if x0.norm() == T::zero() { C::new(T::one(), T::zero()) } else { x0 / x0.norm() };
            let alpha = -phase * xnorm;
            for i in 0..m {
                v[i] = self.a[(k + 1 + i) * n + k];
            }
            v[0] -= alpha;
            let vnorm2 = v[..m].iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
            let beta = lit::<T>(2.0) / vnorm2;

            // Left: rows k+1.., columns k+1.. (column k is set explicitly).
            for j in k + 1..n {
                s[j] = zero;
            }
            for i in 0..m {
                let vi = v[i].conj();
                let row = &self.a[(k + 1 + i) * n..(k + 2 + i) * n];
                for j in k + 1..n {
                    s[j] += vi * row[j];
                }
            }
            for i in 0..m {
                let f = v[i] * beta;
                let row = &mut self.a[(k + 1 + i) * n..(k + 2 + i) * n];
                for j in k + 1..n {
                    row[j] -= f * s[j];
                }
            }
            self.a[(k + 1) * n + k] = alpha;
            for i in 1..m {
                self.a[(k + 1 + i) * n + k] = zero;
            }

            // Right: all rows, columns k+1..
            for i in 0..n {
                let row = &mut self.a[i * n..(i + 1) * n];
                let mut t = zero;
                for q in 0..m {
                    t += row[k + 1 + q] * v[q];
                }
                let t = t * beta;
                for q in 0..m {
                    row[k + 1 + q] -= t * v[q].conj();
                }
            }

            if let Some(zt) = self.zt.as_mut() {
                for i in 0..n {
                    s[i] = zero;
                }
                for q in 0..m {
                    let vq = v[q];
                    let zrow = &zt[(k + 1 + q) * n..(k + 2 + q) * n];
                    for i in 0..n {
                        s[i] += zrow[i] * vq;
                    }
                }
                for q in 0..m {
                    let f = v[q].conj() * beta;
                    let zrow = &mut zt[(k + 1 + q) * n..(k + 2 + q) * n];
                    for i in 0..n {
                        zrow[i] -= s[i] * f;
                    }
                }
            }
        }
    }

    fn schur(&mut self) -> Result<()> {
        let n = self.n;
        if n == 1 {
            return Ok(());
        }
        let want_t = self.zt.is_some();
        let ulp = T::epsilon();
        let small = T::min_positive_value() * (lit::<T>(n as f64) / ulp);
        let budget = 30 * n;
        let mut sweeps = 0usize;
        let mut its = 0usize;
        let mut hi = n - 1;
        let zero = C::new(T::zero(), T::zero());

        while hi > 0 {
            let mut l = hi;
            while l > 0 {
                let sub = abs1(self.a[l * n + l - 1]);
                if sub <= small {
                    break;
                }
                let mut tst = abs1(self.a[(l - 1) * n + l - 1]) + abs1(self.a[l * n + l]);
                if tst == T::zero() {
                    if l >= 2 {
                        tst += abs1(self.a[(l - 1) * n + l - 2]);
                    }
                    if l + 1 < n {
                        tst += abs1(self.a[(l + 1) * n + l]);
                    }
                }
                if sub <= ulp * tst {
                    break;
                }
                l -= 1;
            }
            if l > 0 {
                self.a[l * n + l - 1] = zero;
            }
            if l == hi {
                hi -= 1;
                its = 0;
                continue;
            }
            if sweeps >= budget {
                return Err(Error::NoConvergence { sweeps, dim: n });
            }
            sweeps += 1;
            its += 1;

            let shift = if its.is_multiple_of(10) {
                let (d, sub) = if (its / 10) % 2 == 1 {
                    (self.a[l * n + l], self.a[(l + 1) * n + l])
                } else {
                    (self.a[hi * n + hi], self.a[hi * n + hi - 1])
                };
                d + C::new(lit::<T>(0.75) * sub.re.abs(), T::zero())
            } else {
                let a = self.a[(hi - 1) * n + hi - 1];
                let b = self.a[(hi - 1) * n + hi];
                let c = self.a[hi * n + hi - 1];
                let d = self.a[hi * n + hi];
                let p = (a - d) * lit::<T>(0.5);
                let bc = b * c;
                let disc = (p * p + bc).sqrt();
                let s = if (p.conj() * disc).re >= T::zero() { p + disc } else { p - disc };
                if s.norm() == T::zero() {
                    d
                } else {
                    d - bc / s
                }
            };

            let col_end = if want_t { n } else { hi + 1 };
            let row_start = if want_t { 0 } else { l };
            let mut x = self.a[l * n + l] - shift;
            let mut y = self.a[(l + 1) * n + l];
            for k in l..hi {
                if k > l {
                    x = self.a[k * n + k - 1];
                    y = self.a[(k + 1) * n + k - 1];
                }
                let (c, s) = givens(x, y);
                let sc = s.conj();
                let col_start = if k > l { k - 1 } else { k };
                {
                    let (top, bottom) = self.a.split_at_mut((k + 1) * n);
                    let r1 = &mut top[k * n..];
                    let r2 = &mut bottom[..n];
                    for j in col_start..col_end {
                        let (h1, h2) = (r1[j], r2[j]);
                        r1[j] = h1 * c + s * h2;
                        r2[j] = h2 * c - sc * h1;
                    }
                }
                if k > l {
                    self.a[(k + 1) * n + k - 1] = zero;
                }
                let row_end = (k + 2).min(hi);
                for i in row_start..=row_end {
                    let (h1, h2) = (self.a[i * n + k], self.a[i * n + k + 1]);
                    self.a[i * n + k] = h1 * c + h2 * sc;
                    self.a[i * n + k + 1] = h2 * c - h1 * s;
                }
                if let Some(zt) = self.zt.as_mut() {
                    let (top, bottom) = zt.split_at_mut((k + 1) * n);
                    let z1 = &mut top[k * n..];
                    let z2 = &mut bottom[..n];
                    for i in 0..n {
                        let (u1, u2) = (z1[i], z2[i]);
                        z1[i] = u1 * c + u2 * sc;
                        z2[i] = u2 * c - u1 * s;
                    }
                }
            }
        }
        Ok(())
    }

    /// Eigenvector for the k-th diagonal entry of the Schur factor, mapped
    /// back through the accumulated transforms and the balancing.
    fn eigenvector(&self, k: usize, tnorm: T) -> Vec<C<T>> {
        let n = self.n;
        let zero = C::new(T::zero(), T::zero());
        let zt = self.zt.as_ref().expect("vectors requested");
        let lam = self.a[k * n + k];
        let ulp = T::epsilon();
        let smin = (ulp * tnorm).max(T::min_positive_value() * lit(1e4));
        let big = T::max_value().sqrt() * ulp;
        let mut x = vec![zero; k + 1];
        x[k] = C::new(T::one(), T::zero());
        for i in (0..k).rev() {
            let row = &self.a[i * n..(i + 1) * n];
            let mut s = zero;
            for j in i + 1..=k {
                s += row[j] * x[j];
            }
            let mut d = row[i] - lam;
            if abs1(d) < smin {
                d = C::new(smin, T::zero());
            }
            x[i] = -s / d;
            let m = x[i].norm();
            if m > big {
                for xj in x[i..].iter_mut() {
                    *xj /= m;
                }
            }
        }
        let mut v = vec![zero; n];
        for (j, &xj) in x.iter().enumerate() {
            if xj == zero {
                continue;
            }
            let zcol = &zt[j * n..(j + 1) * n];
            for i in 0..n {
                v[i] += zcol[i] * xj;
            }
        }
        for (vi, &d) in v.iter_mut().zip(&self.scale) {
            *vi *= d;
        }
        normalize(&mut v);
        v
    }
}

/// Scales to unit 2-norm and rotates the largest component onto the positive
/// real axis.
fn normalize<T: Real>(v: &mut [C<T>]) {
    let mut best = 0;
    let mut best_mag = T::zero();
    let mut norm2 = T::zero();
    for (i, z) in v.iter().enumerate() {
        let m = z.norm_sqr();
        norm2 += m;
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if norm2 == T::zero() {
        return;
    }
    let phase = v[best].conj() / v[best].norm();
    let f = phase / norm2.sqrt();
    for z in v.iter_mut() {
        *z *= f;
    }
}
