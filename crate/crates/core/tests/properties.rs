use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use sfloc::analysis::{classify_spectrum, half_asymmetry, mean_position};
use sfloc::band::{band_energy, critical_points, equal_energy_points};
use sfloc::config::{ModelDoc, Parameter};
use sfloc::effective::{chiral_residual, eff_h_pbc, multiband_block};
use sfloc::eigen::{eig, eigenvalues};
use sfloc::nonbloch::characteristic_roots;
use sfloc::scan::{run_sweep, Axis, Metric, SweepConfig, SweepOptions};
use sfloc::{apply_gauge_transform, build_hamiltonian, models, Complex64, HoppingSet64, Matrix64};

fn vector(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

/// Largest distance from a point of `a` to its nearest point of `b`.
fn set_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().map(|x| b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn mean_position_is_bounded_and_scale_invariant(
        v in (5usize..60).prop_flat_map(vector),
        scale in 0.01f64..100.0,
        phase in 0.0f64..TAU,
    ) {
        prop_assume!(v.iter().any(|z| z.norm() > 1e-3));
        let l = v.len() as f64;
        let x = mean_position(&v).unwrap();
        prop_assert!((1.0..=l).contains(&x));
        let w: Vec<Complex64> = v.iter().map(|z| z * Complex64::from_polar(scale, phase)).collect();
        prop_assert!((mean_position(&w).unwrap() - x).abs() < 1e-9 * l);
        let d = half_asymmetry(&v).unwrap();
        prop_assert!((0.0..=l / 2.0).contains(&d));
    }

    #[test]
    fn characteristic_roots_solve_and_pair(
        t2 in -0.8f64..0.8,
        e in -3.0f64..3.0,
    ) {
        prop_assume!(t2.abs() > 0.05);
        let h = HoppingSet64::real(&[1.0, t2]).unwrap();
        let set = characteristic_roots(&h, Complex64::new(e, 0.0)).unwrap();
        prop_assert_eq!(set.roots.len(), 4);
        prop_assert!(set.max_relative_residual() < 1e-9);
        // real E: the roots are closed under β → 1/conj(β)
        for &b in &set.roots {
            let image = b.conj().inv();
            let nearest = set.roots.iter().map(|r| (r - image).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest < 1e-7 * (1.0 + b.norm()), "β = {}", b);
        }
    }

    #[test]
    fn gauge_transform_preserves_spectrum(len in 3usize..24, theta in -PI..PI, g in 0.0f64..2.0) {
        let spec = models::flux_ring(len, 1.0, theta, g, 0.7).unwrap();
        let moved = apply_gauge_transform(&spec).unwrap();
        let a = eigenvalues(&build_hamiltonian(&spec)).unwrap();
        let b = eigenvalues(&build_hamiltonian(&moved)).unwrap();
        prop_assert!(set_distance(&a, &b) < 1e-9 && set_distance(&b, &a) < 1e-9);
    }

    #[test]
    fn band_is_periodic_and_level_sets_are_even(
        t1 in 0.2f64..2.0,
        t2 in -1.0f64..1.0,
        k in 0.0f64..TAU,
        u in 0.0f64..1.0,
    ) {
        let h = HoppingSet64::real(&[t1, t2]).unwrap();
        prop_assert!((band_energy(&h, k) - band_energy(&h, k + 2.0 * PI)).abs() < 1e-12);
        let crit: Vec<f64> = critical_points(&h).iter().map(|&k| band_energy(&h, k)).collect();
        let (lo, hi) = crit.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
        let eps = lo + u * (hi - lo);
        prop_assume!(crit.iter().all(|&c| (c - eps).abs() > 1e-6));
        prop_assert_eq!(equal_energy_points(&h, eps).len() % 2, 0);
    }

    #[test]
    fn two_level_block_is_real_or_conjugate(
        len in 8usize..200,
        theta in -0.05f64..0.05,
        phi in -PI..PI,
        g in 0.0f64..3.0,
        frac in 0.0f64..1.0,
    ) {
        let n = 1 + ((len.div_ceil(2) - 2) as f64 * frac) as usize;
        let block = eff_h_pbc(n, len, theta, phi, g, 1.0).unwrap();
        let [a, b] = [block.eigenvalues().unwrap()[0], block.eigenvalues().unwrap()[1]];
        let real = a.im.abs() < 1e-12 && b.im.abs() < 1e-12;
        let pair = (a - b.conj()).norm() < 1e-12;
        prop_assert!(real || pair, "{} {}", a, b);
    }

    #[test]
    fn chiral_blocks_have_symmetric_spectra(
        w in 1usize..4,
        spacing in 0.01f64..1.0,
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 49),
    ) {
        // antisymmetric under index inversion: V[k-1-a][k-1-b] = −V[a][b]
        let k = 2 * w + 1;
        let mut v = Matrix64::zeros(k);
        for a in 0..k {
            for b in 0..k {
                let (ra, rb) = (k - 1 - a, k - 1 - b);
                if (a, b) < (ra, rb) {
                    let (re, im) = entries[a * 7 + b];
                    v[(a, b)] = Complex64::new(re, im);
                    v[(ra, rb)] = -Complex64::new(re, im);
                }
            }
        }
        let block = multiband_block(w, spacing, &v).unwrap();
        prop_assert!(chiral_residual(&block) < 1e-14);
        let vals = block.eigenvalues().unwrap();
        let scale = 1.0 + block.matrix.frobenius_norm();
        for &e in &vals {
            let partner = vals.iter().map(|x| (x + e).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner < 1e-8 * scale);
        }
    }

    #[test]
    fn hermitian_models_are_never_complex(len in 5usize..40, t2 in -0.6f64..0.6, theta in -PI..PI) {
        let open = models::nnn_chain(len, 1.0, t2, 0.0).unwrap();
        let ring = models::periodic_chain(len, 1.0, theta).unwrap();
        for spec in [open, ring] {
            let h = build_hamiltonian(&spec);
            prop_assert_eq!(classify_spectrum(&eigenvalues(&h).unwrap(), h.frobenius_norm()).p_com, 0.0);
        }
    }

    #[test]
    fn pt_symmetric_spectra_pair_up(len in 6usize..40, t2 in -0.6f64..0.6, g in 0.0f64..2.0) {
        let spec = models::nnn_chain(len, 1.0, t2, g).unwrap();
        let h = build_hamiltonian(&spec);
        let s = eig(&h).unwrap();
        let class = classify_spectrum(&s.eigenvalues, s.norm);
        prop_assert!(class.max_pairing_distance() < 1e-6 * s.norm.max(1.0));
        prop_assert!(s.max_residual() < 1e-8 * s.norm.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sweeps_do_not_depend_on_thread_count(
        len in 8usize..20,
        steps1 in 2usize..5,
        steps2 in 2usize..5,
        threads in 2usize..6,
    ) {
        let config = SweepConfig {
            base_model: ModelDoc::from_spec(&models::nnn_chain(len, 1.0, 0.4, 1.0).unwrap()),
            axis1: Axis { parameter: Parameter::Hopping(2), min: 0.0, max: 0.6, steps: steps1 },
            axis2: Axis { parameter: Parameter::G, min: 0.0, max: 2.0, steps: steps2 },
            metric: Metric::MaxImE,
            tol_imag: None,
        };
        let run = |n| run_sweep(&config, &SweepOptions { threads: Some(n), cache_dir: None }).unwrap().to_csv();
        prop_assert_eq!(run(1), run(threads));
    }
}
