//! Bloch bands of the bulk hoppings, equal-energy points, and the energy
//! window in which open-chain PT breaking of the continuous spectrum can occur.

use serde_json::{json, Value};

use crate::analysis::{classify_with_tolerance, default_tol_imag, detect_bound_states};
use crate::eigen::eig;
use crate::error::{Error, Result};
use crate::lattice::{build_hamiltonian, Boundary, HoppingSet, ModelSpec};
use crate::scalar::{cis, from_usize, lit, to_f64, Real, C};

/// Grid size for sign-change bracketing over one Brillouin zone.
pub const BAND_GRID: usize = 10_000;
/// Bisection stops once the bracket is this narrow.
pub const ROOT_TOL: f64 = 1e-12;
/// Roots closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-10;

/// `E(k) = Σ_n t_n e^{ikn} + conj(t_n) e^{-ikn}`.
pub fn band_energy<T: Real>(h: &HoppingSet<T>, k: T) -> T {
    h.iter().fold(T::zero(), |acc, (n, t)| acc + lit::<T>(2.0) * (t * cis(k * from_usize::<T>(n))).re)
}

/// `dE/dk`.
pub fn band_slope<T: Real>(h: &HoppingSet<T>, k: T) -> T {
    h.iter().fold(T::zero(), |acc, (n, t)| {
        let n = from_usize::<T>(n);
        acc - lit::<T>(2.0) * n * (t * cis(k * n)).im
    })
}

/// Zeros of a 2π-periodic function in [0, 2π) by bracketing on
/// [`BAND_GRID`] points and bisection.
fn periodic_zeros<T: Real>(f: impl Fn(T) -> T) -> Vec<T> {
    let two_pi = T::PI() + T::PI();
    let n = BAND_GRID;
    let k = |i: usize| two_pi * from_usize::<T>(i) / from_usize::<T>(n);
    let values: Vec<T> = (0..=n).map(|i| f(k(i))).collect();
    let root_tol = lit::<T>(ROOT_TOL).max(T::epsilon() * two_pi);
    let mut roots = Vec::new();
    for i in 0..n {
        let (a, b) = (values[i], values[i + 1]);
        if a == T::zero() {
            roots.push(k(i));
        } else if b != T::zero() && (a < T::zero()) != (b < T::zero()) {
            let (mut lo, mut hi, mut flo) = (k(i), k(i + 1), a);
            while hi - lo > root_tol {
                let mid = (lo + hi) / lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid);
                if fm == T::zero() {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < T::zero()) == (flo < T::zero()) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push((lo + hi) / lit(2.0));
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let dedup = lit::<T>(DEDUP_TOL);
    let mut out: Vec<T> = Vec::with_capacity(roots.len());
    for r in roots {
        if out.last().is_none_or(|&last| r - last > dedup) {
            out.push(r);
        }
    }
    if out.len() > 1 && out[0] + two_pi - out[out.len() - 1] <= dedup {
        out.pop();
    }
    out
}

/// All real `k ∈ [0, 2π)` with `E(k) = ε`.
pub fn equal_energy_points<T: Real>(h: &HoppingSet<T>, epsilon: T) -> Vec<T> {
    periodic_zeros(|k| band_energy(h, k) - epsilon)
}

/// Critical points of the band, i.e. zeros of `dE/dk`.
pub fn critical_points<T: Real>(h: &HoppingSet<T>) -> Vec<T> {
    periodic_zeros(|k| band_slope(h, k))
}

/// `(min E, max E)` over the Brillouin zone.
pub fn band_range<T: Real>(h: &HoppingSet<T>) -> (T, T) {
    critical_points(h)
        .into_iter()
        .chain(std::iter::once(T::zero()))
        .map(|k| band_energy(h, k))
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), e| (lo.min(e), hi.max(e)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyInterval<T> {
    pub lo: T,
    pub hi: T,
    /// Number of real `k` solving `E(k) = ε` inside the interval.
    pub multiplicity: usize,
}

/// Energy intervals with more than one pair of equal-energy points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PtWindow<T> {
    pub intervals: Vec<EnergyInterval<T>>,
}

impl<T: Real> PtWindow<T> {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// True if `e` lies in some interval widened by `slack` on both sides.
    pub fn contains(&self, e: T, slack: T) -> bool {
        self.intervals.iter().any(|iv| e > iv.lo - slack && e < iv.hi + slack)
    }
}

/// Splits the band range at the critical values and keeps the pieces whose
/// midpoint has at least four equal-energy points.
pub fn pt_breaking_window<T: Real>(h: &HoppingSet<T>) -> PtWindow<T> {
    let mut values: Vec<T> = critical_points(h).into_iter().map(|k| band_energy(h, k)).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let sep = lit::<T>(ROOT_TOL);
    values.dedup_by(|b, a| (*b - *a).abs() <= sep);
    let mut intervals: Vec<EnergyInterval<T>> = Vec::new();
    for pair in values.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let multiplicity = equal_energy_points(h, (lo + hi) / lit(2.0)).len();
        if multiplicity < 4 {
            continue;
        }
        match intervals.last_mut() {
            Some(last) if last.hi == lo && last.multiplicity == multiplicity => last.hi = hi,
            _ => intervals.push(EnergyInterval { lo, hi, multiplicity }),
        }
    }
    PtWindow { intervals }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation<T> {
    pub index: usize,
    pub energy: C<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionReport<T> {
    pub window: PtWindow<T>,
    /// Slack added to each window edge: `5 · bandwidth / L`.
    pub tolerance: T,
    pub complex_energies_inside: bool,
    /// Continuous-spectrum complex eigenvalues outside the widened window.
    pub violations: Vec<Violation<T>>,
    pub bound_states: Vec<usize>,
    /// Complex fraction of the continuous spectrum.
    pub p_com: T,
    pub n_com: usize,
}

impl<T: Real> CriterionReport<T> {
    pub fn to_json(&self) -> Value {
        json!({
            "window": self.window.intervals.iter().map(|iv| [to_f64(iv.lo), to_f64(iv.hi)]).collect::<Vec<_>>(),
            "multiplicity": self.window.intervals.iter().map(|iv| iv.multiplicity).collect::<Vec<_>>(),
            "tolerance": to_f64(self.tolerance),
            "complex_energies_inside": self.complex_energies_inside,
            "violations": self.violations.iter().map(|v| json!({
                "index": v.index,
                "reE": to_f64(v.energy.re),
                "imE": to_f64(v.energy.im),
            })).collect::<Vec<_>>(),
            "bound_states": self.bound_states,
            "p_com": to_f64(self.p_com),
            "n_com": self.n_com,
        })
    }
}

/// Diagonalizes an open chain and checks that every complex eigenvalue of
/// the continuous spectrum has its real part inside the PT window.
pub fn criterion_check<T: Real>(spec: &ModelSpec<T>) -> Result<CriterionReport<T>> {
    criterion_check_with(spec, None)
}

/// As [`criterion_check`], with an explicit imaginary-part cut.
pub fn criterion_check_with<T: Real>(spec: &ModelSpec<T>, tol_imag: Option<T>) -> Result<CriterionReport<T>> {
    if spec.boundary() != Boundary::Open {
        return Err(Error::NotOpen);
    }
    let spectrum = eig(&build_hamiltonian(spec))?;
    let bound_states = detect_bound_states(&spectrum, spec.max_range());
    let class = classify_with_tolerance(
        &spectrum.eigenvalues,
        tol_imag.unwrap_or_else(|| default_tol_imag(spectrum.norm)),
        &bound_states,
    );
    let window = pt_breaking_window(spec.hoppings());
    let (lo, hi) = band_range(spec.hoppings());
    let tolerance = lit::<T>(5.0) * (hi - lo) / from_usize::<T>(spec.len());
    let violations: Vec<Violation<T>> = class
        .complex_indices
        .iter()
        .filter(|&&i| !window.contains(spectrum.eigenvalues[i].re, tolerance))
        .map(|&i| Violation { index: i, energy: spectrum.eigenvalues[i] })
        .collect();
    Ok(CriterionReport {
        window,
        tolerance,
        complex_energies_inside: violations.is_empty(),
        violations,
        bound_states,
        p_com: class.p_com,
        n_com: class.n_com,
    })
}
