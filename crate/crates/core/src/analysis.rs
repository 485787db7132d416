//! Diagnostics derived from a spectrum: complex fraction, localization
//! measures, scale-free fits and bound-state detection.

use rayon::prelude::*;

use crate::eigen::{eig, Spectrum};
use crate::error::{Error, Result};
use crate::lattice::{build_hamiltonian, ModelSpec};
use crate::scalar::{from_usize, lit, tol, Real, C};

/// Relative imaginary-part cut: `tol_imag = IMAG_TOL_FACTOR · ‖H‖_F`.
pub const IMAG_TOL_FACTOR: f64 = 1e-8;
/// States with fitted `|c|` above this are bound states.
pub const C_BOUND_CUT: f64 = 10.0;
/// Minimum number of sites in a decay fit.
pub const MIN_FIT_SITES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumClassification<T> {
    pub p_com: T,
    pub n_com: usize,
    pub complex_indices: Vec<usize>,
    pub tol_imag: T,
    /// Per complex index: nearest other eigenvalue to its conjugate, and distance.
    pub conjugate_partners: Vec<(usize, T)>,
}

impl<T: Real> SpectrumClassification<T> {
    pub fn max_pairing_distance(&self) -> T {
        self.conjugate_partners.iter().fold(T::zero(), |a, &(_, d)| a.max(d))
    }
}

pub fn default_tol_imag<T: Real>(scale: T) -> T {
    tol::<T>(IMAG_TOL_FACTOR) * scale
}

/// Classifies with `tol_imag = 1e-8 · scale`; pass `‖H‖_F` as `scale`.
pub fn classify_spectrum<T: Real>(eigenvalues: &[C<T>], scale: T) -> SpectrumClassification<T> {
    classify_with_tolerance(eigenvalues, default_tol_imag(scale), &[])
}

/// Classification with an explicit cut, ignoring `excluded` indices (bound
/// states). `p_com` is always relative to the full dimension.
pub fn classify_with_tolerance<T: Real>(
    eigenvalues: &[C<T>],
    tol_imag: T,
    excluded: &[usize],
) -> SpectrumClassification<T> {
    let complex_indices: Vec<usize> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, e)| e.im.abs() > tol_imag && !excluded.contains(i))
        .map(|(i, _)| i)
        .collect();
    let conjugate_partners = complex_indices
        .iter()
        .map(|&i| {
            let target = eigenvalues[i].conj();
            eigenvalues
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, e)| (j, (e - target).norm()))
                .fold((i, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .collect();
    let n_com = complex_indices.len();
    let p_com =
        if eigenvalues.is_empty() { T::zero() } else { from_usize::<T>(n_com) / from_usize::<T>(eigenvalues.len()) };
    SpectrumClassification { p_com, n_com, complex_indices, tol_imag, conjugate_partners }
}

fn weights<T: Real>(v: &[C<T>]) -> Result<(Vec<T>, T)> {
    let w: Vec<T> = v.iter().map(|z| z.norm_sqr()).collect();
    let total = w.iter().fold(T::zero(), |a, &x| a + x);
    if total == T::zero() || !total.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok((w, total))
}

/// `Σ |v_j|² j / Σ |v_j|²` with sites `j = 1..=L`.
pub fn mean_position<T: Real>(v: &[C<T>]) -> Result<T> {
    let (w, total) = weights(v)?;
    let s = w.iter().enumerate().fold(T::zero(), |a, (j, &x)| a + x * from_usize::<T>(j + 1));
    Ok(s / total)
}

/// `Σ |v_j|² |j − L/2| / Σ |v_j|²`.
pub fn half_asymmetry<T: Real>(v: &[C<T>]) -> Result<T> {
    let (w, total) = weights(v)?;
    let mid = from_usize::<T>(v.len()) / lit(2.0);
    let s = w.iter().enumerate().fold(T::zero(), |a, (j, &x)| a + x * (from_usize::<T>(j + 1) - mid).abs());
    Ok(s / total)
}

/// Inclusive 1-based site range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiteWindow {
    pub first: usize,
    pub last: usize,
}

impl SiteWindow {
    pub fn len(&self) -> usize {
        (self.last + 1).saturating_sub(self.first)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Boundary layer excluded from decay fits: `max(M, 5)` sites.
pub fn boundary_width(max_range: usize) -> usize {
    max_range.max(5)
}

/// Middle 60% of the chain, symmetric, never inside the boundary layers.
pub fn default_window(len: usize, max_range: usize) -> SiteWindow {
    let w = boundary_width(max_range);
    let first = (len / 5 + 1).max(w + 1);
    SiteWindow { first, last: (len + 1).saturating_sub(first) }
}

/// Least-squares slope of `ln|v_j|` over the window, returned as `c = slope·L`
/// so that `|v_j| ∝ e^{c j / L}`. `boundary_width` is the number of sites at
/// each edge the window may not touch.
pub fn fit_decay_constant<T: Real>(v: &[C<T>], window: SiteWindow, boundary_width: usize) -> Result<T> {
    let l = v.len();
    if window.first == 0 || window.last > l || window.len() < MIN_FIT_SITES {
        return Err(Error::InvalidArgument(format!(
            "fit window {}..={} invalid for L = {l} (need at least {MIN_FIT_SITES} sites)",
            window.first, window.last
        )));
    }
    if window.first <= boundary_width || window.last + boundary_width > l {
        return Err(Error::InvalidArgument(format!(
            "fit window {}..={} touches the {boundary_width}-site boundary layer",
            window.first, window.last
        )));
    }
    let mut logs = Vec::with_capacity(window.len());
    for j in window.first..=window.last {
        let m = v[j - 1].norm();
        if m == T::zero() {
            return Err(Error::InvalidArgument(format!("zero amplitude at site {j}")));
        }
        logs.push(m.ln());
    }
    Ok(log_slope(&logs, window.first) * from_usize::<T>(l))
}

/// Same fit with zero amplitudes floored, for classification where a
/// missing value should not abort the sweep.
fn robust_decay_constant<T: Real>(v: &[C<T>], window: SiteWindow) -> Option<T> {
    if window.len() < MIN_FIT_SITES || window.first == 0 || window.last > v.len() {
        return None;
    }
    let peak = v.iter().fold(T::zero(), |a, z| a.max(z.norm()));
    if peak == T::zero() {
        return None;
    }
    let floor = peak * T::epsilon() * T::epsilon();
    let logs: Vec<T> = (window.first..=window.last).map(|j| v[j - 1].norm().max(floor).ln()).collect();
    Some(log_slope(&logs, window.first) * from_usize::<T>(v.len()))
}

fn log_slope<T: Real>(ys: &[T], first_site: usize) -> T {
    let n = from_usize::<T>(ys.len());
    let xs: Vec<T> = (0..ys.len()).map(|k| from_usize::<T>(first_site + k)).collect();
    let xm = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let ym = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - xm) * (y - ym);
        sxx += (x - xm) * (x - xm);
    }
    sxy / sxx
}

/// Indices of states whose fitted `|c|` exceeds [`C_BOUND_CUT`], using the
/// default window for the given hopping range.
pub fn detect_bound_states<T: Real>(spectrum: &Spectrum<T>, max_range: usize) -> Vec<usize> {
    let window = default_window(spectrum.len(), max_range);
    let cut = lit::<T>(C_BOUND_CUT);
    spectrum
        .eigenvectors
        .iter()
        .enumerate()
        .filter(|(_, v)| robust_decay_constant(v, window).is_some_and(|c| c.abs() > cut))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateMetrics<T> {
    pub index: usize,
    pub energy: C<T>,
    pub mean_position: T,
    pub half_asymmetry: T,
    pub c_fit: Option<T>,
    pub is_bound: bool,
}

pub fn state_metrics<T: Real>(spectrum: &Spectrum<T>, max_range: usize) -> Result<Vec<StateMetrics<T>>> {
    let window = default_window(spectrum.len(), max_range);
    let cut = lit::<T>(C_BOUND_CUT);
    spectrum
        .eigenvalues
        .iter()
        .zip(&spectrum.eigenvectors)
        .enumerate()
        .map(|(index, (&energy, v))| {
            let c_fit = robust_decay_constant(v, window);
            Ok(StateMetrics {
                index,
                energy,
                mean_position: mean_position(v)?,
                half_asymmetry: half_asymmetry(v)?,
                c_fit,
                is_bound: c_fit.is_some_and(|c| c.abs() > cut),
            })
        })
        .collect()
}

/// Rescaled mean-position curve `(rank/L, ⟨x⟩/L)` with states ranked by
/// ascending Im E; bound states are left out.
pub fn mean_position_curve<T: Real>(spectrum: &Spectrum<T>, excluded: &[usize]) -> Result<Vec<(T, T)>> {
    let mut idx: Vec<usize> = (0..spectrum.len()).filter(|i| !excluded.contains(i)).collect();
    idx.sort_by(|&a, &b| {
        spectrum.eigenvalues[a]
            .im
            .partial_cmp(&spectrum.eigenvalues[b].im)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let l = from_usize::<T>(spectrum.len());
    let n = from_usize::<T>(idx.len());
    idx.iter()
        .enumerate()
        .map(|(r, &i)| {
            let x = (from_usize::<T>(r) + lit(0.5)) / n;
            Ok((x, mean_position(&spectrum.eigenvectors[i])? / l))
        })
        .collect()
}

/// Largest vertical gap between two curves, evaluating `b` by linear
/// interpolation at the abscissae of `a`.
pub fn curve_distance<T: Real>(a: &[(T, T)], b: &[(T, T)]) -> T {
    if b.is_empty() {
        return T::infinity();
    }
    a.iter().fold(T::zero(), |worst, &(x, y)| {
        let k = b.partition_point(|p| p.0 < x);
        let yb = if k == 0 {
            b[0].1
        } else if k == b.len() {
            b[b.len() - 1].1
        } else {
            let (x0, y0) = b[k - 1];
            let (x1, y1) = b[k];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        };
        worst.max((y - yb).abs())
    })
}

/// Which eigenstate represents a size in the scale-free fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StateSelection {
    /// The state at the median rank by Im E among continuous-spectrum states
    /// with positive imaginary part.
    #[default]
    Typical,
    /// The state with maximal Im E, ties broken by the smallest index.
    MaxImag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleFreeFit<T> {
    pub sizes: Vec<usize>,
    pub c_estimates: Vec<T>,
    pub c_mean: T,
    /// `(max − min) / |mean|` of the estimates.
    pub c_relative_spread: T,
    /// Log-log slope of max |Im E| over the continuous spectrum vs L.
    pub im_scaling_exponent: T,
    /// Log-log slope of Im E of the selected states vs L.
    pub selected_im_exponent: T,
    pub selected: Vec<(usize, C<T>)>,
    /// Largest distance between the rescaled mean-position curve of the
    /// smallest size and those of the others.
    pub curve_distance: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScaleFreeOutcome<T> {
    Fit(ScaleFreeFit<T>),
    NoComplexStates { size: usize },
}

struct SizeResult<T> {
    c: T,
    max_im: T,
    selected: (usize, C<T>),
    curve: Vec<(T, T)>,
}

/// Builds and diagonalizes the family at each size and fits the decay
/// constant of one representative state per size.
pub fn fit_scale_free<T, F>(family: F, sizes: &[usize], selection: StateSelection) -> Result<ScaleFreeOutcome<T>>
where
    T: Real,
    F: Fn(usize) -> Result<ModelSpec<T>> + Sync,
{
    if sizes.len() < 3 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("need at least three strictly increasing sizes".into()));
    }
    let per_size: Vec<Result<Option<SizeResult<T>>>> =
        sizes.par_iter().map(|&l| analyse_size(&family, l, selection)).collect();
    let mut results = Vec::with_capacity(sizes.len());
    for (r, &l) in per_size.into_iter().zip(sizes) {
        match r? {
            Some(res) => results.push(res),
            None => return Ok(ScaleFreeOutcome::NoComplexStates { size: l }),
        }
    }
    let c_estimates: Vec<T> = results.iter().map(|r| r.c).collect();
    let n = from_usize::<T>(c_estimates.len());
    let c_mean = c_estimates.iter().fold(T::zero(), |a, &c| a + c) / n;
    let (lo, hi) = c_estimates.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    let log_l: Vec<T> = sizes.iter().map(|&l| from_usize::<T>(l).ln()).collect();
    let max_logs: Vec<T> = results.iter().map(|r| r.max_im.ln()).collect();
    let sel_logs: Vec<T> = results.iter().map(|r| r.selected.1.im.abs().ln()).collect();
    let curve_distance = results[1..].iter().fold(T::zero(), |a, r| a.max(curve_distance(&results[0].curve, &r.curve)));
    Ok(ScaleFreeOutcome::Fit(ScaleFreeFit {
        sizes: sizes.to_vec(),
        c_relative_spread: (hi - lo) / c_mean.abs(),
        c_estimates,
        c_mean,
        im_scaling_exponent: regression_slope(&log_l, &max_logs),
        selected_im_exponent: regression_slope(&log_l, &sel_logs),
        selected: results.iter().map(|r| r.selected).collect(),
        curve_distance,
    }))
}

fn analyse_size<T, F>(family: &F, l: usize, selection: StateSelection) -> Result<Option<SizeResult<T>>>
where
    T: Real,
    F: Fn(usize) -> Result<ModelSpec<T>>,
{
    let spec = family(l)?;
    let spectrum = eig(&build_hamiltonian(&spec))?;
    let bound = detect_bound_states(&spectrum, spec.max_range());
    let class = classify_with_tolerance(&spectrum.eigenvalues, default_tol_imag(spectrum.norm), &bound);
    if class.n_com == 0 {
        return Ok(None);
    }
    let energies = &spectrum.eigenvalues;
    let max_im = class.complex_indices.iter().fold(T::zero(), |a, &i| a.max(energies[i].im.abs()));
    let pick = match selection {
        StateSelection::MaxImag => {
            class.complex_indices.iter().copied().fold(None, |best: Option<usize>, i| match best {
                Some(b) if energies[b].im >= energies[i].im => Some(b),
                _ => Some(i),
            })
        }
        StateSelection::Typical => {
            let mut upper: Vec<usize> =
                class.complex_indices.iter().copied().filter(|&i| energies[i].im > T::zero()).collect();
            upper.sort_by(|&a, &b| {
                energies[a].im.partial_cmp(&energies[b].im).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            });
            upper.get(upper.len() / 2).copied()
        }
    };
    let Some(pick) = pick else {
        return Ok(None);
    };
    let c = fit_decay_constant(
        &spectrum.eigenvectors[pick],
        default_window(l, spec.max_range()),
        boundary_width(spec.max_range()),
    )?;
    Ok(Some(SizeResult { c, max_im, selected: (pick, energies[pick]), curve: mean_position_curve(&spectrum, &bound)? }))
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn regression_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = from_usize::<T>(xs.len());
    let xm = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let ym = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - xm) * (y - ym);
        sxx += (x - xm) * (x - xm);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::models;

    fn c(re: f64) -> C<f64> {
        C::new(re, 0.0)
    }

    fn profile(l: usize, cc: f64) -> Vec<C<f64>> {
        (1..=l).map(|j| c((cc * j as f64 / l as f64).exp())).collect()
    }

    #[test]
    fn mean_position_examples() {
        assert!((mean_position(&vec![c(1.0); 99]).unwrap() - 50.0).abs() < 1e-12);
        let mut d = vec![c(0.0); 20];
        d[6] = C::new(0.0, -3.0);
        assert!((mean_position(&d).unwrap() - 7.0).abs() < 1e-12);
        assert!(mean_position(&[c(0.0); 5]).is_err());
    }

    #[test]
    fn mean_position_of_exponential_profile() {
        // Closed-form geometric sums with ratio r = e^{2c/L}.
        let (l, cc) = (100usize, 2.0f64);
        let r = (2.0 * cc / l as f64).exp();
        let n = l as f64;
        let sum = r * (1.0 - r.powf(n)) / (1.0 - r);
        let wsum = r * (1.0 - (n + 1.0) * r.powf(n) + n * r.powf(n + 1.0)) / (1.0 - r).powi(2);
        let got = mean_position(&profile(l, cc)).unwrap();
        assert!((got - wsum / sum).abs() < 1e-9, "{got} vs {}", wsum / sum);
    }

    #[test]
    fn half_asymmetry_examples() {
        assert!((half_asymmetry(&vec![c(1.0); 100]).unwrap() - 25.0).abs() < 1e-12);
        let mut d = vec![c(0.0); 100];
        d[49] = c(1.0);
        assert_eq!(half_asymmetry(&d).unwrap(), 0.0);
        let edges: Vec<C<f64>> =
            (1..=100).map(|j| c((-(j as f64) / 8.0).exp() + (-((101 - j) as f64) / 8.0).exp())).collect();
        assert!(half_asymmetry(&edges).unwrap() > 25.0);
    }

    #[test]
    fn decay_fit_examples() {
        let w = default_window(100, 1);
        assert_eq!(w, SiteWindow { first: 21, last: 80 });
        assert!((fit_decay_constant(&profile(100, 2.0), w, 5).unwrap() - 2.0).abs() < 1e-10);
        assert!(fit_decay_constant(&profile(100, 0.0), w, 5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn decay_fit_rejects_bad_windows() {
        let v = profile(100, 1.0);
        assert!(fit_decay_constant(&v, SiteWindow { first: 3, last: 50 }, 5).is_err());
        assert!(fit_decay_constant(&v, SiteWindow { first: 50, last: 98 }, 5).is_err());
        assert!(fit_decay_constant(&v, SiteWindow { first: 40, last: 45 }, 5).is_err());
        let mut z = v.clone();
        z[49] = c(0.0);
        assert!(fit_decay_constant(&z, SiteWindow { first: 21, last: 80 }, 5).is_err());
    }

    #[test]
    fn classification_invariants() {
        let vals = vec![c(-1.0), C::new(0.0, 0.5), C::new(0.0, -0.5), C::new(1.0, 1e-12)];
        let cl = classify_spectrum(&vals, 1.0);
        assert_eq!(cl.complex_indices, vec![1, 2]);
        assert_eq!(cl.p_com, 0.5);
        assert_eq!(cl.conjugate_partners, vec![(2, 0.0), (1, 0.0)]);
        let cl = classify_with_tolerance(&vals, 1e-8, &[2]);
        assert_eq!(cl.n_com, 1);
        assert_eq!(cl.p_com, 0.25);
    }

    #[test]
    fn hermitian_spectrum_has_no_complex_states() {
        let s = eig(&build_hamiltonian(&models::open_chain(40, 1.0).unwrap())).unwrap();
        assert_eq!(classify_spectrum(&s.eigenvalues, s.norm).n_com, 0);
    }

    #[test]
    fn gain_chain_states_acquire_imaginary_parts() {
        let s = eig(&build_hamiltonian(&models::gain_chain(100, 1.0, 1.0).unwrap())).unwrap();
        let cl = classify_spectrum(&s.eigenvalues, s.norm);
        assert!(cl.p_com > 0.95, "{}", cl.p_com);
    }

    #[test]
    fn bound_state_detection() {
        let s = eig(&build_hamiltonian(&models::gain_chain(200, 1.0, 1.5).unwrap())).unwrap();
        let b = detect_bound_states(&s, 1);
        assert_eq!(b.len(), 1);
        assert!((s.eigenvalues[b[0]] - C::new(0.0, 1.5 - 1.0 / 1.5)).norm() < 1e-6);
        let s = eig(&build_hamiltonian(&models::gain_chain(200, 1.0, 0.5).unwrap())).unwrap();
        assert!(detect_bound_states(&s, 1).is_empty());
    }

    #[test]
    fn scale_free_fit_reports_degenerate_family() {
        let out =
            fit_scale_free(|l| models::gain_chain(l, 1.0f64, 0.0), &[20, 30, 40], StateSelection::Typical).unwrap();
        assert_eq!(out, ScaleFreeOutcome::NoComplexStates { size: 20 });
        assert!(fit_scale_free(|l| models::gain_chain(l, 1.0, 0.5), &[20, 40], StateSelection::Typical).is_err());
    }

    #[test]
    fn curve_distance_interpolates() {
        let a = vec![(0.25, 1.0), (0.75, 2.0)];
        let b = vec![(0.0, 1.0), (1.0, 3.0)];
        assert!((curve_distance::<f64>(&a, &b) - 0.5).abs() < 1e-15);
    }
}
