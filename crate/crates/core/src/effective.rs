//! Projected effective Hamiltonians, analytic PT-breaking thresholds and the
//! index-inversion (chiral) check for evenly spaced multi-level blocks.

use crate::eigen::eigenvalues;
use crate::error::{Error, Result};
use crate::lattice::{DenseMatrix, PerturbationTerm};
use crate::scalar::{cis, from_usize, lit, tol, Real, C};

/// Orthonormality tolerance for projection bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Tolerance of the chiral check and of the zero-mode test.
pub const CHIRAL_TOL: f64 = 1e-10;

/// `matrix = d0·I + (gap + g·dz)σz + g·dx·σx + i·g·dy·σy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliDecomposition<T> {
    pub gap: T,
    pub d0: T,
    pub dx: T,
    pub dy: T,
    pub dz: T,
    pub g: T,
}

impl<T: Real> PauliDecomposition<T> {
    pub fn matrix(&self) -> DenseMatrix<T> {
        let z = self.gap + self.g * self.dz;
        let x = self.g * self.dx;
        let y = self.g * self.dy;
        DenseMatrix::from_real_rows(&[vec![self.d0 + z, x + y], vec![x - y, self.d0 - z]]).expect("2x2 rows")
    }

    /// `(Δ + g dz)² + (g dx)² − (g dy)²`; negative means a conjugate pair.
    pub fn radicand(&self) -> T {
        let z = self.gap + self.g * self.dz;
        z * z + (self.g * self.dx).powi(2) - (self.g * self.dy).powi(2)
    }

    pub fn eigenvalues(&self) -> [C<T>; 2] {
        let r = self.radicand();
        let s = if r >= T::zero() { C::new(r.sqrt(), T::zero()) } else { C::new(T::zero(), (-r).sqrt()) };
        let d0 = C::new(self.d0, T::zero());
        [d0 - s, d0 + s]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveBlock<T> {
    pub matrix: DenseMatrix<T>,
    pub decomposition: Option<PauliDecomposition<T>>,
}

impl<T: Real> EffectiveBlock<T> {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn eigenvalues(&self) -> Result<Vec<C<T>>> {
        match &self.decomposition {
            Some(d) => Ok(d.eigenvalues().to_vec()),
            None => eigenvalues(&self.matrix),
        }
    }
}

/// `⟨ψ_a|V|ψ_b⟩` for an orthonormal set of vectors.
pub fn project_perturbation<T: Real>(vectors: &[Vec<C<T>>], v: &[PerturbationTerm<T>]) -> Result<DenseMatrix<T>> {
    let k = vectors.len();
    let len = vectors.first().map_or(0, Vec::len);
    if let Some(bad) = vectors.iter().find(|x| x.len() != len) {
        return Err(Error::DimensionMismatch { expected: len, found: bad.len() });
    }
    for term in v {
        for site in [term.site_i, term.site_j] {
            if site == 0 || site > len {
                return Err(Error::SiteOutOfRange { site, len });
            }
        }
    }
    let mut worst = T::zero();
    for a in 0..k {
        for b in a..k {
            let dot: C<T> = vectors[a].iter().zip(&vectors[b]).map(|(x, y)| x.conj() * y).sum();
            let target = if a == b { T::one() } else { T::zero() };
            worst = worst.max((dot - target).norm());
        }
    }
    if worst > tol::<T>(ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal(worst.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(DenseMatrix::from_fn(k, |a, b| {
        v.iter().map(|term| vectors[a][term.site_i - 1].conj() * term.amplitude * vectors[b][term.site_j - 1]).sum()
    }))
}

/// Two-level block of the flux ring in the `(k_n, k_{L−n})` subspace.
pub fn eff_h_pbc<T: Real>(n: usize, len: usize, theta: T, phi: T, g: T, t: T) -> Result<EffectiveBlock<T>> {
    if n == 0 || 2 * n >= len {
        return Err(Error::InvalidArgument(format!("mode index {n} must satisfy 1 <= n < L/2 (L = {len})")));
    }
    if theta.abs() >= T::PI() / from_usize(len) {
        log::warn!("two-level block used outside |theta| < pi/L");
    }
    let l = from_usize::<T>(len);
    let two = lit::<T>(2.0);
    let k = two * T::PI() * from_usize::<T>(n) / l;
    let parity = if len % 2 == 1 { T::one() } else { -T::one() };
    let d = PauliDecomposition {
        gap: -two * t * k.sin() * theta.sin(),
        d0: two * t * k.cos() * theta.cos() + two * g / l * phi.cos(),
        dx: parity * two / l * k.cos() * phi.cos(),
        dy: parity * two / l * k.sin() * phi.sin(),
        dz: T::zero(),
        g,
    };
    Ok(EffectiveBlock { matrix: d.matrix(), decomposition: Some(d) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold<T> {
    /// Smallest breaking strength and, for ring thresholds, the mode realizing it.
    Finite {
        g_c: T,
        mode: Option<usize>,
    },
    NoFiniteThreshold,
}

impl<T: Real> Threshold<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Threshold::Finite { g_c, .. } => Some(*g_c),
            Threshold::NoFiniteThreshold => None,
        }
    }
}

/// Per-mode threshold `t L |sin kₙ| s / √(sin²φ − cos²kₙ)` for a flux factor
/// `s`; `None` when the coupling cannot close the gap.
fn mode_threshold<T: Real>(n: usize, len: usize, phi: T, t: T, s: T) -> Option<T> {
    let l = from_usize::<T>(len);
    let k = lit::<T>(2.0) * T::PI() * from_usize::<T>(n) / l;
    let q = phi.sin().powi(2) - k.cos().powi(2);
    (q > T::zero()).then(|| t.abs() * l * s * k.sin().abs() / q.sqrt())
}

/// Breaking strength of the `(k_n, k_{L−n})` block alone.
pub fn mode_threshold_pbc<T: Real>(n: usize, len: usize, theta: T, phi: T, t: T) -> Option<T> {
    mode_threshold(n, len, phi, t, theta.sin().abs())
}

/// As [`mode_threshold_pbc`] with `√(sin θ)` in place of `sin θ`.
pub fn mode_threshold_pbc_printed<T: Real>(n: usize, len: usize, theta: T, phi: T, t: T) -> Option<T> {
    mode_threshold(n, len, phi, t, theta.sin().abs().sqrt())
}

fn minimize_over_modes<T: Real>(len: usize, per_mode: impl Fn(usize) -> Option<T>) -> Threshold<T> {
    let mut best: Option<(T, usize)> = None;
    for n in (1..).take_while(|n| 2 * n < len) {
        if let Some(g) = per_mode(n) {
            if best.is_none_or(|(b, _)| g < b) {
                best = Some((g, n));
            }
        }
    }
    match best {
        Some((g_c, n)) => Threshold::Finite { g_c, mode: Some(n) },
        None => Threshold::NoFiniteThreshold,
    }
}

/// Smallest `g` at which some two-level block acquires a conjugate pair:
/// `g_n = t L |sin kₙ sin θ| / √(sin²φ − cos²kₙ)`, minimized over modes.
pub fn threshold_pbc<T: Real>(len: usize, theta: T, phi: T, t: T) -> Threshold<T> {
    minimize_over_modes(len, |n| mode_threshold_pbc(n, len, theta, phi, t))
}

/// The same minimization with `√(sin θ)` in place of `sin θ`; kept for comparison.
pub fn threshold_pbc_printed<T: Real>(len: usize, theta: T, phi: T, t: T) -> Threshold<T> {
    minimize_over_modes(len, |n| mode_threshold_pbc_printed(n, len, theta, phi, t))
}

/// Coupling structure of a two-level open-chain block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObcCoupling<T> {
    /// `Δσz + g(dx σx + dz σz + i dy σy)`.
    Symmetric { dx: T, dy: T, dz: T },
    /// `Δσz + i g(dx σx + dy σy)`.
    Antisymmetric { dx: T, dy: T },
}

impl<T: Real> ObcCoupling<T> {
    /// Squared half-splitting; negative when the pair is complex.
    pub fn radicand(&self, delta12: T, g: T) -> T {
        match *self {
            ObcCoupling::Symmetric { dx, dy, dz } => (delta12 + g * dz).powi(2) + (g * dx).powi(2) - (g * dy).powi(2),
            ObcCoupling::Antisymmetric { dx, dy } => delta12 * delta12 - g * g * (dx * dx + dy * dy),
        }
    }
}

pub fn eff_h_obc<T: Real>(delta12: T, g: T, coupling: ObcCoupling<T>) -> [C<T>; 2] {
    let r = coupling.radicand(delta12, g);
    let s = if r >= T::zero() { C::new(r.sqrt(), T::zero()) } else { C::new(T::zero(), (-r).sqrt()) };
    [-s, s]
}

/// Smallest `g ≥ 0` beyond which the radicand is negative.
pub fn obc_threshold<T: Real>(delta12: T, coupling: ObcCoupling<T>) -> Threshold<T> {
    // radicand = a g² + b g + c
    let (a, b, c) = match coupling {
        ObcCoupling::Symmetric { dx, dy, dz } => {
            (dz * dz + dx * dx - dy * dy, lit::<T>(2.0) * delta12 * dz, delta12 * delta12)
        }
        ObcCoupling::Antisymmetric { dx, dy } => (-(dx * dx + dy * dy), T::zero(), delta12 * delta12),
    };
    let finite = |g_c: T| Threshold::Finite { g_c, mode: None };
    if c == T::zero() {
        return if a < T::zero() || (a == T::zero() && b < T::zero()) {
            finite(T::zero())
        } else if b < T::zero() {
            finite(-b / a)
        } else {
            Threshold::NoFiniteThreshold
        };
    }
    if a == T::zero() {
        return if b < T::zero() { finite(-c / b) } else { Threshold::NoFiniteThreshold };
    }
    let disc = b * b - lit::<T>(4.0) * a * c;
    if disc <= T::zero() {
        return Threshold::NoFiniteThreshold;
    }
    let sq = disc.sqrt();
    let (r1, r2) = ((-b - sq) / (a + a), (-b + sq) / (a + a));
    let (lo, hi) = (r1.min(r2), r1.max(r2));
    if a < T::zero() {
        // negative outside [lo, hi], with c > 0 putting 0 inside
        finite(hi)
    } else if lo > T::zero() {
        finite(lo)
    } else {
        Threshold::NoFiniteThreshold
    }
}

/// `diag(−w, …, w)·δE + V`.
pub fn multiband_block<T: Real>(w: usize, delta_e: T, v: &DenseMatrix<T>) -> Result<EffectiveBlock<T>> {
    let k = 2 * w + 1;
    if v.dim() != k {
        return Err(Error::DimensionMismatch { expected: k, found: v.dim() });
    }
    let matrix = DenseMatrix::from_fn(k, |a, b| {
        let level = from_usize::<T>(a) - from_usize::<T>(w);
        let diag = if a == b { C::new(level * delta_e, T::zero()) } else { C::new(T::zero(), T::zero()) };
        diag + v[(a, b)]
    });
    Ok(EffectiveBlock { matrix, decomposition: None })
}

/// `max |P̃ h P̃ + h|`, with `P̃` reversing the level index.
pub fn chiral_residual<T: Real>(block: &EffectiveBlock<T>) -> T {
    let m = &block.matrix;
    let k = m.dim();
    let mut worst = T::zero();
    for a in 0..k {
        for b in 0..k {
            worst = worst.max((m[(k - 1 - a, k - 1 - b)] + m[(a, b)]).norm());
        }
    }
    worst
}

/// True iff the block anticommutes with index inversion and its spectrum is
/// symmetric under negation with a zero mode.
pub fn chiral_symmetry_check<T: Real>(block: &EffectiveBlock<T>) -> bool {
    let k = block.dim();
    if k.is_multiple_of(2) {
        return false;
    }
    let eps = tol::<T>(CHIRAL_TOL);
    if chiral_residual(block) > eps {
        return false;
    }
    let Ok(vals) = block.eigenvalues() else {
        return false;
    };
    let scale = T::one().max(block.matrix.frobenius_norm());
    let pair_tol = eps * scale;
    let mut used = vec![false; k];
    for &e in &vals {
        let partner = (0..k).filter(|&j| !used[j]).min_by(|&x, &y| {
            (vals[x] + e).norm().partial_cmp(&(vals[y] + e).norm()).unwrap_or(std::cmp::Ordering::Equal)
        });
        match partner {
            Some(j) if (vals[j] + e).norm() <= pair_tol => used[j] = true,
            _ => return false,
        }
    }
    vals.iter().any(|e| e.norm() <= pair_tol)
}

/// Levels `−w..=w` of the flux ring around the plane wave `k_n`, in ascending
/// energy order.
#[derive(Clone, Debug, PartialEq)]
pub struct RingSubspace<T> {
    /// Mode indices `m` of `k_m = 2πm/L`.
    pub modes: Vec<usize>,
    pub energies: Vec<T>,
    /// Centered plane waves `e^{i k_m (j − (L+1)/2)} / √L`.
    pub vectors: Vec<Vec<C<T>>>,
    /// Mean level spacing inside the subspace.
    pub spacing: T,
    /// Distance from the subspace edge to the nearest excluded level.
    pub outer_gap: T,
}

pub fn ring_subspace<T: Real>(len: usize, t: T, theta: T, n: usize, w: usize) -> Result<RingSubspace<T>> {
    if 2 * w + 1 > len || n >= len {
        return Err(Error::InvalidArgument(format!("subspace of {} levels around mode {n} in L = {len}", 2 * w + 1)));
    }
    let l = from_usize::<T>(len);
    let k = |m: usize| lit::<T>(2.0) * T::PI() * from_usize::<T>(m) / l;
    let energy = |m: usize| lit::<T>(2.0) * t * (k(m) + theta).cos();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| energy(a).partial_cmp(&energy(b)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let pos = order.iter().position(|&m| m == n).expect("mode present");
    if pos < w || pos + w >= len {
        return Err(Error::InvalidArgument(format!("mode {n} too close to the band edge for w = {w}")));
    }
    let modes: Vec<usize> = order[pos - w..=pos + w].to_vec();
    let energies: Vec<T> = modes.iter().map(|&m| energy(m)).collect();
    let center = (l + T::one()) / lit(2.0);
    let norm = l.sqrt().recip();
    let vectors =
        modes.iter().map(|&m| (1..=len).map(|j| cis(k(m) * (from_usize::<T>(j) - center)) * norm).collect()).collect();
    let below = if pos > w { energies[0] - energy(order[pos - w - 1]) } else { T::infinity() };
    let above = if pos + w + 1 < len { energy(order[pos + w + 1]) - energies[2 * w] } else { T::infinity() };
    let spacing = if w == 0 { T::zero() } else { (energies[2 * w] - energies[0]) / from_usize::<T>(2 * w) };
    Ok(RingSubspace { modes, energies, vectors, spacing, outer_gap: below.min(above) })
}

/// Multi-level block of a ring perturbation around `k_n` with evenly spaced
/// diagonal, relative to the reference level.
pub fn ring_multiband_block<T: Real>(
    len: usize,
    t: T,
    theta: T,
    v: &[PerturbationTerm<T>],
    n: usize,
    w: usize,
) -> Result<EffectiveBlock<T>> {
    let sub = ring_subspace(len, t, theta, n, w)?;
    let projected = project_perturbation(&sub.vectors, v)?;
    if projected.frobenius_norm() > sub.outer_gap / lit(2.0) {
        log::warn!(
            "projected perturbation norm {} exceeds half the gap {} to excluded levels",
            projected.frobenius_norm(),
            sub.outer_gap
        );
    }
    multiband_block(w, sub.spacing, &projected)
}
