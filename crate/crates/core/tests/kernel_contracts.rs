use std::f64::consts::PI;

use ncq::kernels::KernelSpec;
use ncq::rng::stream_rng;
use ncq::stats::{ks_distance, TabulatedCdf};
use proptest::prelude::*;

fn tabulated_cdf(k: &KernelSpec) -> TabulatedCdf {
    let half = 60.0 / k.m_delta();
    let n = 6000;
    let h = 2.0 * half / n as f64;
    let xs: Vec<f64> = (0..=n).map(|j| -half + h * j as f64).collect();
    let mut fs = vec![k.mass(f64::NEG_INFINITY, xs[0]).unwrap()];
    for w in xs.windows(2) {
        fs.push(fs[fs.len() - 1] + k.mass(w[0], w[1]).unwrap());
    }
    TabulatedCdf::new(xs, fs)
}

#[test]
fn samplers_match_their_cdfs() {
    for (s, m) in [0.5, 1.0, 5.0].into_iter().enumerate() {
        for (f, k) in [KernelSpec::gaussian(m).unwrap(), KernelSpec::fejer(m).unwrap()].into_iter().enumerate() {
            let cdf = tabulated_cdf(&k);
            let mut rng = stream_rng(40 + s as u64, f as u64, 0);
            let mut draws: Vec<f64> = (0..100_000).map(|_| k.sample(&mut rng)).collect();
            let d = ks_distance(&mut draws, |x| cdf.eval(x));
            assert!(d < 0.01, "{:?} m={m}: KS {d}", k.family());
        }
    }
}

#[test]
fn full_line_masses() {
    for m in [0.3, 1.0, 7.0, 50.0] {
        assert!((KernelSpec::gaussian(m).unwrap().total_mass().unwrap() - 1.0).abs() < 1e-6);
        assert!((KernelSpec::fejer(m).unwrap().total_mass().unwrap() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn truncated_mass_grows_with_radius() {
    let mut prev = 0.0;
    for r in [0.5, 1.0, 3.0, 10.0, 40.0, 200.0] {
        let mass = KernelSpec::truncated_fejer(1.0, r).unwrap().total_mass().unwrap();
        assert!(mass > prev && mass < 1.0, "R={r}: {mass}");
        prev = mass;
    }
}

#[test]
fn delta_sequence_limit() {
    for (a, b) in [(-0.1, 0.2), (-1.0, 0.05)] {
        for k in [KernelSpec::gaussian as fn(f64) -> ncq::Result<KernelSpec>, KernelSpec::fejer] {
            let masses: Vec<f64> = [1.0, 10.0, 100.0].iter().map(|&m| k(m).unwrap().mass(a, b).unwrap()).collect();
            assert!(masses.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{masses:?}");
            // sin² ≤ 1 bounds the mass outside (a, b) for both families.
            let outside = (1.0 / a.abs() + 1.0 / b) / (PI * 100.0);
            assert!(1.0 - masses[2] <= outside, "{masses:?}");
        }
    }
}

#[test]
fn fejer_nodes() {
    for m in [0.5, 1.0, 3.0] {
        let k = KernelSpec::fejer(m).unwrap();
        for j in [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0] {
            assert_eq!(k.eval(j * PI / m).unwrap(), 0.0);
        }
    }
}

proptest! {
    #[test]
    fn log_eval_is_a_density(u in -100.0f64..100.0, m in 0.05f64..30.0, r in 0.1f64..50.0) {
        for k in [KernelSpec::gaussian(m).unwrap(), KernelSpec::fejer(m).unwrap(), KernelSpec::truncated_fejer(m, r).unwrap()] {
            let l = k.log_eval(u).unwrap();
            prop_assert!(!l.is_nan() && l < f64::INFINITY);
            prop_assert!(l.exp() >= 0.0);
            prop_assert_eq!(l, k.log_eval(-u).unwrap());
        }
    }
}
