//! Non-Bloch machinery: roots of the characteristic equation, boundary
//! determinants, and the ring solvers built on the unitary (`|β| = 1`) and
//! asymptotic (`|β| = e^{δ/L}`) ansätze.

use crate::eigen::eigenvalues;
use crate::error::{Error, Result};
use crate::lattice::{DenseMatrix, HoppingSet, ModelSpec};
use crate::scalar::{from_usize, lit, Real, C};

/// Roots β of `Σ t_n β^n + conj(t_n) β^{-n} = E`, sorted by |β| then phase.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaRootSet<T> {
    pub energy: C<T>,
    pub roots: Vec<C<T>>,
    pub hoppings: HoppingSet<T>,
}

impl<T: Real> BetaRootSet<T> {
    /// `|Σ t_n β^n + conj(t_n) β^{-n} − E| / (1 + |E|)` for one root.
    pub fn relative_residual(&self, beta: C<T>) -> T {
        (dispersion(&self.hoppings, beta) - self.energy).norm() / (T::one() + self.energy.norm())
    }

    pub fn max_relative_residual(&self) -> T {
        self.roots.iter().fold(T::zero(), |a, &b| a.max(self.relative_residual(b)))
    }

    /// Smallest distance between two roots.
    pub fn min_separation(&self) -> T {
        let mut best = T::infinity();
        for (a, &x) in self.roots.iter().enumerate() {
            for &y in &self.roots[a + 1..] {
                best = best.min((x - y).norm());
            }
        }
        best
    }
}

/// `E(β) = Σ t_n β^n + conj(t_n) β^{-n}`.
pub fn dispersion<T: Real>(h: &HoppingSet<T>, beta: C<T>) -> C<T> {
    h.iter().fold(C::new(T::zero(), T::zero()), |acc, (n, t)| {
        let p = beta.powi(n as i32);
        acc + t * p + t.conj() / p
    })
}

/// Coefficients `c_p` (p = 0..=2M) of `β^M (E(β) − E)`.
fn char_poly<T: Real>(h: &HoppingSet<T>, e: C<T>) -> Vec<C<T>> {
    let m = h.max_range();
    let mut c = vec![C::new(T::zero(), T::zero()); 2 * m + 1];
    for (n, t) in h.iter() {
        c[m + n] += t;
        c[m - n] += t.conj();
    }
    c[m] -= e;
    c
}

fn poly_eval<T: Real>(c: &[C<T>], x: C<T>) -> (C<T>, C<T>) {
    let zero = C::new(T::zero(), T::zero());
    let mut p = zero;
    let mut dp = zero;
    for &a in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

pub fn characteristic_roots<T: Real>(h: &HoppingSet<T>, e: C<T>) -> Result<BetaRootSet<T>> {
    if !(e.re.is_finite() && e.im.is_finite()) {
        return Err(Error::InvalidArgument("energy is not finite".into()));
    }
    let c = char_poly(h, e);
    let deg = c.len() - 1;
    let lead = c[deg];
    let companion = DenseMatrix::from_fn(deg, |i, j| {
        if i == 0 {
            -c[deg - 1 - j] / lead
        } else if j + 1 == i {
            C::new(T::one(), T::zero())
        } else {
            C::new(T::zero(), T::zero())
        }
    });
    let mut roots = eigenvalues(&companion)?;
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = poly_eval(&c, *r);
            if dp.norm() == T::zero() {
                break;
            }
            let next = *r - p / dp;
            if poly_eval(&c, next).0.norm() < p.norm() {
                *r = next;
            } else {
                break;
            }
        }
    }
    sort_roots(&mut roots);
    Ok(BetaRootSet { energy: e, roots, hoppings: h.clone() })
}

/// Ascending |β| (moduli within a relative 1e-9 count as equal), then phase
/// in (−π, π]. Insertion sort keeps this total on near-ties.
fn sort_roots<T: Real>(roots: &mut [C<T>]) {
    let before = |a: &C<T>, b: &C<T>| {
        let (ma, mb) = (a.norm(), b.norm());
        if (ma - mb).abs() > lit::<T>(1e-9) * ma.max(mb).max(T::one()) {
            ma < mb
        } else {
            a.arg() < b.arg()
        }
    };
    for i in 1..roots.len() {
        let mut j = i;
        while j > 0 && before(&roots[j], &roots[j - 1]) {
            roots.swap(j, j - 1);
            j -= 1;
        }
    }
}

/// Boundary determinant with columns pre-scaled by `|β_l|^{-L/2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryDeterminant<T> {
    /// Determinant of the scaled matrix; zero iff the true determinant is.
    pub scaled: C<T>,
    /// `ln|true det| = ln|scaled| + log_scale`.
    pub log_scale: T,
    /// Product over columns of the 2-norm of the summed term magnitudes in
    /// each entry. Bounds `|scaled|` and, unlike the norm of the summed
    /// entries, is insensitive to cancellation inside an entry.
    pub column_norm_product: T,
}

impl<T: Real> BoundaryDeterminant<T> {
    /// `|scaled| / column_norm_product`, in [0, 1].
    pub fn normalized(&self) -> T {
        if self.column_norm_product == T::zero() {
            T::zero()
        } else {
            self.scaled.norm() / self.column_norm_product
        }
    }
}

/// Minimum root separation below which the determinant is refused.
pub const ROOT_COINCIDENCE_TOL: f64 = 1e-10;

/// Determinant of the boundary matrix: rows are the sites within `M` of
/// either edge, column `l` is the plane-wave ansatz with root `β_l`, and each
/// entry collects the terms by which the finite chain departs from the bulk
/// equation at that site (missing or wrapped hops plus perturbations).
pub fn boundary_determinant<T: Real>(spec: &ModelSpec<T>, roots: &BetaRootSet<T>) -> Result<BoundaryDeterminant<T>> {
    let m = spec.max_range();
    let l = spec.len();
    if l <= 2 * m {
        return Err(Error::InvalidModel(format!("boundary determinant needs L > 2M (L = {l}, M = {m})")));
    }
    let bulk = spec.bulk_hoppings();
    if roots.roots.len() != 2 * m || !same_hoppings(&bulk, &roots.hoppings) {
        return Err(Error::InvalidArgument("root set was not computed from the model's bulk hoppings".into()));
    }
    if roots.roots.iter().any(|b| b.norm() == T::zero()) {
        return Err(Error::InvalidArgument("zero root".into()));
    }
    if roots.min_separation() < lit(ROOT_COINCIDENCE_TOL) {
        return Err(Error::IllConditioned("characteristic roots coincide (exceptional point)".into()));
    }
    let rows: Vec<usize> = (1..=m).chain(l - m + 1..=l).collect();
    for p in spec.perturbations() {
        if !rows.contains(&p.site_i) {
            return Err(Error::InvalidModel(format!("perturbation row {} lies outside the boundary layers", p.site_i)));
        }
    }
    let wrap = spec.wrap_phase();
    let half = from_usize::<T>(l) / lit(2.0);
    let li = l as i64;
    let mut f = DenseMatrix::zeros(2 * m);
    let mut magnitude = vec![T::zero(); 2 * m];
    let mut log_scale = T::zero();
    for (col, &beta) in roots.roots.iter().enumerate() {
        let ln_mod = beta.norm().ln();
        let arg = beta.arg();
        log_scale += half * ln_mod;
        let pow = |p: i64| {
            let p = lit::<T>(p as f64);
            C::from_polar(((p - half) * ln_mod).exp(), p * arg)
        };
        let mut mag2 = T::zero();
        for (row, &r) in rows.iter().enumerate() {
            let r = r as i64;
            let mut terms: Vec<C<T>> = Vec::new();
            for (n, t) in bulk.iter() {
                let n = n as i64;
                if r + n > li {
                    terms.push(-t * pow(r + n));
                    if let Some(w) = wrap {
                        terms.push(t * w * pow(r + n - li));
                    }
                }
                if r - n < 1 {
                    terms.push(-t.conj() * pow(r - n));
                    if let Some(w) = wrap {
                        terms.push((t * w).conj() * pow(r - n + li));
                    }
                }
            }
            for p in spec.perturbations().iter().filter(|p| p.site_i as i64 == r) {
                terms.push(p.amplitude * pow(p.site_j as i64));
            }
            let entry = terms.iter().fold(C::new(T::zero(), T::zero()), |a, &x| a + x);
            let size = terms.iter().fold(T::zero(), |a, x| a + x.norm());
            mag2 += size * size;
            f[(row, col)] = entry;
        }
        magnitude[col] = mag2.sqrt();
    }
    let column_norm_product = magnitude.iter().fold(T::one(), |a, &x| a * x);
    Ok(BoundaryDeterminant { scaled: f.determinant(), log_scale, column_norm_product })
}

fn same_hoppings<T: Real>(a: &HoppingSet<T>, b: &HoppingSet<T>) -> bool {
    let eps = lit::<T>(1e-12);
    a.max_range() == b.max_range()
        && a.iter().all(|(n, t)| b.get(n).is_some_and(|u| (t - u).norm() <= eps * (T::one() + t.norm())))
        && b.iter().all(|(n, _)| a.get(n).is_some())
}

/// The flux ring with `V = g e^{iφ}|1⟩⟨1| + g e^{-iφ}|L⟩⟨L|` and real
/// nearest-neighbour hopping `t`, flux `θ` per bond.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingParams<T> {
    pub len: usize,
    pub t: T,
    pub theta: T,
    pub phi: T,
    pub g: T,
}

impl<T: Real> RingParams<T> {
    /// Reads the parameters back from a model of that form.
    pub fn from_model(spec: &ModelSpec<T>) -> Result<Self> {
        let not_ring = || Error::InvalidModel("not a flux ring with edge potentials on sites 1 and L".into());
        if spec.boundary() != crate::lattice::Boundary::Periodic || spec.max_range() != 1 {
            return Err(not_ring());
        }
        let t = spec.hoppings().get(1).ok_or_else(not_ring)?;
        if t.im != T::zero() || t.re <= T::zero() {
            return Err(not_ring());
        }
        let l = spec.len();
        let (mut first, mut last) = (None, None);
        for p in spec.perturbations() {
            match (p.site_i, p.site_j) {
                (1, 1) if first.is_none() => first = Some(p.amplitude),
                (i, j) if i == l && j == l && last.is_none() => last = Some(p.amplitude),
                _ => return Err(not_ring()),
            }
        }
        let zero = C::new(T::zero(), T::zero());
        let (a, b) = (first.unwrap_or(zero), last.unwrap_or(zero));
        if (a - b.conj()).norm() > lit::<T>(1e-12) * (T::one() + a.norm()) {
            return Err(not_ring());
        }
        let theta = match spec.gauge() {
            crate::lattice::FluxGauge::Uniform => spec.flux_theta(),
            crate::lattice::FluxGauge::WrapBond => return Err(not_ring()),
        };
        Ok(Self { len: l, t: t.re, theta, phi: if a.norm() == T::zero() { T::zero() } else { a.arg() }, g: a.norm() })
    }

    pub fn to_model(&self) -> Result<ModelSpec<T>> {
        crate::lattice::models::flux_ring(self.len, self.t, self.theta, self.g, self.phi)
    }
}

/// Input of [`unitary_scan`]: the ring without `g`, plus the `g` range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitaryScanParams<T> {
    pub len: usize,
    pub t: T,
    pub theta: T,
    pub phi: T,
    pub g_min: T,
    pub g_max: T,
    /// Number of `g` samples used to assemble the broken intervals.
    pub g_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitaryPoint<T> {
    pub gamma: T,
    /// `g/t` on the two branches; `None` where the discriminant is negative.
    pub g_plus: Option<T>,
    pub g_minus: Option<T>,
    pub discriminant_negative: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryScanResult<T> {
    pub points: Vec<UnitaryPoint<T>>,
    /// Sorted, disjoint `g` ranges (in energy units) without a full set of
    /// real solutions. Endpoints are sampled `g` values.
    pub broken_g_intervals: Vec<(T, T)>,
}

/// Boundary function of the ring restricted to `β = e^{iγ}`, with
/// `x = g/t`. Its zeros in (0, π) are the real band energies `2t cos γ`.
pub fn unitary_boundary_function<T: Real>(gamma: T, x: T, len: usize, theta: T, phi: T) -> T {
    let l = from_usize::<T>(len);
    let two = lit::<T>(2.0);
    x * x * (gamma * (l - T::one())).sin() - two * x * phi.cos() * (gamma * l).sin()
        + two * ((gamma * l).cos() - (theta * l).cos()) * gamma.sin()
}

/// The same function continued to real `β = ±e^{κ}`, multiplied by the
/// positive factor `2e^{-κL}` so it stays finite. Zeros at `κ > 0` are real
/// energies `±2t cosh κ` outside the band.
fn real_beta_function<T: Real>(kappa: T, x: T, len: usize, theta: T, phi: T, negative: bool) -> T {
    let l = from_usize::<T>(len);
    let two = lit::<T>(2.0);
    let e1 = (-kappa).exp();
    let e_2l1 = (-kappa * (two * l - T::one())).exp();
    let e_2l = (-two * kappa * l).exp();
    let e_l = (-kappa * l).exp();
    let (s_phi, s_theta) = if negative {
        let parity = if len.is_multiple_of(2) { T::one() } else { -T::one() };
        (T::one(), parity)
    } else {
        (-T::one(), T::one())
    };
    x * x * (e1 - e_2l1)
        + s_phi * two * x * phi.cos() * (T::one() - e_2l)
        + two * (T::one() + e_2l - two * s_theta * (theta * l).cos() * e_l) * kappa.sinh()
}

fn count_sign_changes<T: Real>(values: impl Iterator<Item = T>) -> usize {
    let mut count = 0;
    let mut prev: Option<T> = None;
    for v in values {
        if v == T::zero() {
            continue;
        }
        if let Some(p) = prev {
            if (p < T::zero()) != (v < T::zero()) {
                count += 1;
            }
        }
        prev = Some(v);
    }
    count
}

/// Number of real eigenvalues of the ring found by root counting: band
/// energies from `β = e^{iγ}` plus out-of-band energies from real `β`.
pub fn count_real_solutions<T: Real>(len: usize, t: T, theta: T, phi: T, g: T, gamma_points: usize) -> usize {
    let x = g / t;
    let pi = T::PI();
    let n = gamma_points.max(40 * len);
    let band = count_sign_changes(
        (1..n).map(|k| unitary_boundary_function(pi * from_usize::<T>(k) / from_usize::<T>(n), x, len, theta, phi)),
    );
    let kappa_max = (lit::<T>(2.0) + x.abs()).acosh() + lit(0.5);
    let nk = 40 * len;
    let kappa = |k: usize| kappa_max * from_usize::<T>(k) / from_usize::<T>(nk);
    let outside: usize = [false, true]
        .iter()
        .map(|&neg| count_sign_changes((1..=nk).map(|k| real_beta_function(kappa(k), x, len, theta, phi, neg))))
        .sum();
    band + outside
}

pub fn unitary_scan<T: Real>(params: &UnitaryScanParams<T>, gamma_resolution: usize) -> Result<UnitaryScanResult<T>> {
    if gamma_resolution < 1000 {
        return Err(Error::InvalidArgument("gamma_resolution must be at least 1000".into()));
    }
    if params.len < 3 || params.t <= T::zero() || params.g_steps < 2 || params.g_min > params.g_max {
        return Err(Error::InvalidArgument("invalid unitary scan parameters".into()));
    }
    let l = from_usize::<T>(params.len);
    let two_pi = T::PI() + T::PI();
    let pole_tol = lit::<T>(1e-14);
    let (cphi, theta_l) = (params.phi.cos(), params.theta * l);
    let points = (0..=gamma_resolution)
        .filter_map(|k| {
            let gamma = two_pi * from_usize::<T>(k) / from_usize::<T>(gamma_resolution);
            let a = (gamma * (l - T::one())).sin();
            if a.abs() < pole_tol {
                return None;
            }
            let b = cphi * (gamma * l).sin();
            let cc = lit::<T>(2.0) * ((gamma * l).cos() - theta_l.cos()) * gamma.sin();
            let disc = b * b - a * cc;
            if disc < T::zero() {
                Some(UnitaryPoint { gamma, g_plus: None, g_minus: None, discriminant_negative: true })
            } else {
                let r = disc.sqrt();
                Some(UnitaryPoint {
                    gamma,
                    g_plus: Some((b + r) / a),
                    g_minus: Some((b - r) / a),
                    discriminant_negative: false,
                })
            }
        })
        .collect();

    let mut broken_g_intervals: Vec<(T, T)> = Vec::new();
    let mut open: Option<(T, T)> = None;
    for k in 0..params.g_steps {
        let g = params.g_min + (params.g_max - params.g_min) * from_usize::<T>(k) / from_usize::<T>(params.g_steps - 1);
        let broken = g != T::zero()
            && count_real_solutions(params.len, params.t, params.theta, params.phi, g, gamma_resolution / 2)
                < params.len;
        open = match (open, broken) {
            (None, true) => Some((g, g)),
            (Some((lo, _)), true) => Some((lo, g)),
            (Some(iv), false) => {
                broken_g_intervals.push(iv);
                None
            }
            (None, false) => None,
        };
    }
    broken_g_intervals.extend(open);
    Ok(UnitaryScanResult { points, broken_g_intervals })
}

/// One solution `β = e^{iγ + δ/L}` of the large-L equations for broken pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticSolution<T> {
    pub gamma: T,
    pub delta: T,
}

impl<T: Real> AsymptoticSolution<T> {
    pub fn beta(&self, len: usize) -> C<T> {
        C::from_polar((self.delta / from_usize::<T>(len)).exp(), self.gamma)
    }

    /// `E = t(β + 1/β)`.
    pub fn energy(&self, t: T, len: usize) -> C<T> {
        let b = self.beta(len);
        (b + b.inv()) * t
    }
}

/// Leading-order equation fixing γ (its zeros), from the real part of the
/// boundary condition with `sinh δ ≠ 0`.
pub fn asymptotic_gamma_function<T: Real>(gamma: T, p: &RingParams<T>) -> T {
    let l = from_usize::<T>(p.len);
    let two = lit::<T>(2.0);
    two * p.t * p.t * (gamma * l).sin() * gamma.sin() - p.g * p.g * (gamma * (l - T::one())).cos()
        + two * p.g * p.t * p.phi.cos() * (gamma * l).cos()
}

/// Solves for γ on a grid of `10·L` points over [0, π] with bisection, then
/// for δ from `cosh δ = −2t² cos(θL) sin γ / A(γ)`. Each admissible γ yields
/// the pair `±δ`. Empty when no sign change or no `cosh δ > 1` is found.
pub fn asymptotic_broken_solver<T: Real>(p: &RingParams<T>) -> Vec<AsymptoticSolution<T>> {
    let l = from_usize::<T>(p.len);
    let n = 10 * p.len.max(1);
    let pi = T::PI();
    let two = lit::<T>(2.0);
    let f = |gamma: T| asymptotic_gamma_function(gamma, p);
    let grid: Vec<T> = (0..=n).map(|k| pi * from_usize::<T>(k) / from_usize::<T>(n)).collect();
    let values: Vec<T> = grid.iter().map(|&x| f(x)).collect();
    let mut gammas = Vec::new();
    for k in 0..n {
        let (a, b) = (values[k], values[k + 1]);
        if a == T::zero() {
            gammas.push(grid[k]);
        } else if (a < T::zero()) != (b < T::zero()) && b != T::zero() {
            let (mut lo, mut hi, mut flo) = (grid[k], grid[k + 1], a);
            for _ in 0..100 {
                let mid = (lo + hi) / two;
                let fm = f(mid);
                if (fm < T::zero()) == (flo < T::zero()) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo <= T::epsilon() * pi {
                    break;
                }
            }
            gammas.push((lo + hi) / two);
        }
    }
    let mut out = Vec::new();
    for gamma in gammas {
        if gamma <= T::zero() || gamma >= pi {
            continue;
        }
        let a = -p.g * p.g * (gamma * (l - T::one())).sin() + two * p.g * p.t * p.phi.cos() * (gamma * l).sin()
            - two * p.t * p.t * (gamma * l).cos() * gamma.sin();
        if a == T::zero() {
            continue;
        }
        let ch = -two * p.t * p.t * (p.theta * l).cos() * gamma.sin() / a;
        if ch > T::one() {
            let delta = ch.acosh();
            out.push(AsymptoticSolution { gamma, delta });
            out.push(AsymptoticSolution { gamma, delta: -delta });
        }
    }
    out
}
