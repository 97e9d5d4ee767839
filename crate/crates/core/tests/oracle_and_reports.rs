use ncq::density::{AlphaMeasure, PathDensity};
use ncq::experiments::{classical_limit_sweep, regression_battery};
use ncq::export::{write_battery_csv, write_sweep_csv};
use ncq::kernels::{KernelFamily, KernelSpec};
use ncq::model::TimeGrid;
use ncq::observables::Observable;
use ncq::oracle::{lattice_expectation, triangle_cases, LatticeSpec};
use ncq::sampling::SamplerConfig;
use ncq::systems::SystemSolution;

#[test]
fn lattice_refinement_is_cauchy() {
    for case in triangle_cases().unwrap() {
        for obs in [Observable::PositionAt { t_index: 2, coord: 0 }, Observable::PositionSquaredAt { t_index: 1, coord: 0 }] {
            let values: Vec<f64> = [5, 9, 17]
                .iter()
                .map(|&p| lattice_expectation(&case.density, &obs, &LatticeSpec::auto(p)).unwrap().value)
                .collect();
            let (first, second) = ((values[1] - values[0]).abs(), (values[2] - values[1]).abs());
            assert!(second < first || second < 1e-12, "{}: {values:?}", case.id);
        }
    }
}

fn template() -> PathDensity {
    let sys = SystemSolution::harmonic_oscillator_1d(2.0, 1.0).unwrap();
    PathDensity::new(sys, TimeGrid::new(0.0, 1.0, 11).unwrap(), KernelSpec::gaussian(1.0).unwrap(), AlphaMeasure::point(vec![0.0, 1.0]))
        .unwrap()
}

fn sweep_csv() -> (Vec<u8>, bool) {
    let sweep = classical_limit_sweep(
        &template(),
        KernelFamily::Gaussian,
        None,
        &Observable::PositionSquaredAt { t_index: 5, coord: 0 },
        &[1.0, 2.0, 4.0, 8.0, 16.0],
        &SamplerConfig::ancestral(20_000, 12),
    )
    .unwrap();
    let mut out = Vec::new();
    write_sweep_csv(&mut out, &sweep).unwrap();
    (out, sweep.monotone)
}

#[test]
fn gaussian_sweep_is_monotone_and_reproducible() {
    let (a, monotone) = sweep_csv();
    assert!(monotone);
    assert_eq!(a, sweep_csv().0);
}

#[test]
fn battery_report_is_reproducible() {
    let csv = || {
        let mut out = Vec::new();
        write_battery_csv(&mut out, &regression_battery()).unwrap();
        out
    };
    assert_eq!(csv(), csv());
}
