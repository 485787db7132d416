//! Model-level checks against independent oracles: closed forms, brute-force
//! sampling and direct diagonalization.

use std::f64::consts::{FRAC_PI_2, PI};

use sfloc::analysis::{
    boundary_width, default_window, detect_bound_states, fit_decay_constant, fit_scale_free, ScaleFreeOutcome,
    StateSelection,
};
use sfloc::band::{band_energy, criterion_check, pt_breaking_window};
use sfloc::eigen::{eig, eigenvalues};
use sfloc::nonbloch::{asymptotic_broken_solver, unitary_scan, RingParams, UnitaryScanParams};
use sfloc::scan::p_com;
use sfloc::{build_hamiltonian, models, Complex64, HoppingSet64};

fn scale_free_fit(sizes: &[usize]) -> sfloc::analysis::ScaleFreeFit<f64> {
    match fit_scale_free(|l| models::gain_chain::<f64>(l, 1.0, 1.0), sizes, StateSelection::Typical).unwrap() {
        ScaleFreeOutcome::Fit(f) => f,
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn gain_chain_decay_constant_is_size_independent() {
    let fit = scale_free_fit(&[100, 200, 400]);
    assert!(fit.c_relative_spread < 0.05, "{:?}", fit.c_estimates);
}

#[test]
fn gain_chain_imaginary_parts_scale_as_inverse_size() {
    let fit = scale_free_fit(&[100, 200, 400]);
    assert!((fit.im_scaling_exponent + 1.0).abs() <= 0.1, "max|Im E| slope {}", fit.im_scaling_exponent);
}

#[test]
fn bound_state_sits_at_the_edge_root() {
    let spec = models::gain_chain(200, 1.0, 1.5).unwrap();
    let s = eig(&build_hamiltonian(&spec)).unwrap();
    let bound = detect_bound_states(&s, 1);
    assert_eq!(bound.len(), 1);
    // β = i g/t in E = t(β + 1/β)
    let beta = Complex64::new(0.0, 1.5);
    let expected = beta + beta.inv();
    assert!((s.eigenvalues[bound[0]] - expected).norm() < 1e-6);

    let weak = models::gain_chain(200, 1.0, 0.5).unwrap();
    let s = eig(&build_hamiltonian(&weak)).unwrap();
    assert!(detect_bound_states(&s, 1).is_empty());
}

#[test]
fn strong_edge_potential_breaks_only_bound_states() {
    let spec = models::nnn_chain::<f64>(100, 1.0, 0.1, 2.0).unwrap();
    let r = criterion_check(&spec).unwrap();
    assert_eq!(r.bound_states.len(), 2);
    let s = eigenvalues(&build_hamiltonian(&spec)).unwrap();
    for &i in &r.bound_states {
        assert!(s[i].im.abs() > 0.1);
    }
    assert_eq!(r.n_com, 0);
}

#[test]
fn small_next_nearest_hopping_keeps_continuum_real() {
    for k in 0..=20 {
        let g = 0.1 * k as f64;
        let r = criterion_check(&models::nnn_chain(100, 1.0, 0.1, g).unwrap()).unwrap();
        assert_eq!(r.n_com, 0, "g = {g}: {:?}", r.violations);
    }
}

#[test]
fn broken_continuum_stays_in_window() {
    let r = criterion_check(&models::nnn_chain(100, 1.0, 0.5, 0.8).unwrap()).unwrap();
    assert!(r.n_com > 0);
    assert!(r.violations.is_empty(), "{:?}", r.violations);
}

#[test]
fn window_matches_dense_sampling() {
    // count sign changes of E(k) − ε on a fine grid
    let h = HoppingSet64::real(&[1.0, 0.5]).unwrap();
    let n = 200_000;
    let es: Vec<f64> = (0..n).map(|i| band_energy(&h, 2.0 * PI * i as f64 / n as f64)).collect();
    let crossings = |eps: f64| (0..n).filter(|&i| ((es[i] - eps) > 0.0) != ((es[(i + 1) % n] - eps) > 0.0)).count();
    let window = pt_breaking_window(&h);
    assert_eq!(window.intervals.len(), 1);
    let iv = window.intervals[0];
    // sampled edges: where the count first/last reaches four
    let probes: Vec<f64> = (0..=4000).map(|i| -1.6 + 0.7 * i as f64 / 4000.0).collect();
    let four: Vec<f64> = probes.iter().copied().filter(|&e| crossings(e) >= 4).collect();
    let (lo, hi) = (four[0], *four.last().unwrap());
    assert!((lo - iv.lo).abs() < 2e-3 && (hi - iv.hi).abs() < 2e-3, "{lo} {hi} vs {iv:?}");
    // closed form: −t₁²/(4t₂) − 2t₂ and −2t₁ + 2t₂
    assert!((iv.lo + 1.5).abs() < 1e-10 && (iv.hi + 1.0).abs() < 1e-10);
}

#[test]
fn ring_below_threshold_is_real() {
    let spec = models::flux_ring(100, 1.0, 0.005, 0.2, FRAC_PI_2).unwrap();
    assert_eq!(p_com(&spec, None).unwrap(), 0.0);
}

#[test]
fn unitary_intervals_are_consistent_with_diagonalization() {
    let (len, theta) = (16, 0.6 / 16.0);
    let scan = unitary_scan(
        &UnitaryScanParams { len, t: 1.0, theta, phi: FRAC_PI_2, g_min: 0.0, g_max: 2.5, g_steps: 26 },
        2000,
    )
    .unwrap();
    for k in 0..26 {
        let g = 0.1 * k as f64;
        let inside = scan.broken_g_intervals.iter().any(|&(lo, hi)| g >= lo - 1e-9 && g <= hi + 1e-9);
        let p = p_com(&models::flux_ring(len, 1.0, theta, g, FRAC_PI_2).unwrap(), None).unwrap();
        assert_eq!(inside, p > 0.0, "g = {g}, P_com = {p}");
    }
}

#[test]
fn asymptotic_delta_matches_fitted_decay() {
    let (len, phi) = (100, FRAC_PI_2);
    let theta = 0.5 / len as f64;
    let params = RingParams { len, t: 1.0, theta, phi, g: 1.0 };
    let spec = params.to_model().unwrap();
    let s = eig(&build_hamiltonian(&spec)).unwrap();
    let solutions = asymptotic_broken_solver(&params);
    assert!(!solutions.is_empty());
    let window = default_window(len, 1);
    for sol in solutions.iter().filter(|s| s.delta.abs() > 1e-6) {
        let e = sol.energy(1.0, len);
        let nearest = (0..s.len())
            .min_by(|&a, &b| (s.eigenvalues[a] - e).norm().total_cmp(&(s.eigenvalues[b] - e).norm()))
            .unwrap();
        let c = fit_decay_constant(&s.eigenvectors[nearest], window, boundary_width(1)).unwrap();
        let rel = (c.abs() - sol.delta.abs()).abs() / sol.delta.abs();
        assert!(rel < 0.2, "δ = {}, fitted c = {c} (E = {e})", sol.delta);
    }
}
