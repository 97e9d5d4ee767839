use ncq::density::{AlphaMeasure, PathConstraint, PathDensity, Softness};
use ncq::kernels::KernelSpec;
use ncq::model::{TimeGrid, Trajectory};
use ncq::sampling::{acceptance_probability, ancestral_sample, importance_reweight, metropolis_sample, SamplerConfig};
use ncq::stats::{chains_mean_se, ks_two_sample, mean, variance};
use ncq::systems::SystemSolution;

fn slice_values(xs: &[Trajectory], i: usize) -> Vec<f64> {
    xs.iter().map(|x| x.at(i, 0)).collect()
}

/// Upper 0.001 point of χ²(k), Wilson–Hilferty.
fn chi2_critical(k: f64) -> f64 {
    let z = 3.0902;
    let c = 2.0 / (9.0 * k);
    k * (1.0 - c + z * c.sqrt()).powi(3)
}

fn chi2_against_marginal(d: &PathDensity, i: usize, n: usize, seed: u64) -> (f64, f64) {
    let xs = ancestral_sample(d, &SamplerConfig::ancestral(n, seed)).unwrap().trajectories;
    let values = slice_values(&xs, i);
    let (c, s) = d.classical_spread(i, 0).unwrap();
    let width = (s * s + d.kernel().width().powi(2)).sqrt();
    let (lo, hi, bins) = (c - 3.0 * width, c + 3.0 * width, 30);
    let h = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins + 2];
    for v in values {
        let j = if v < lo { 0 } else if v >= hi { bins + 1 } else { (1 + ((v - lo) / h) as usize).min(bins) };
        counts[j] += 1.0;
    }
    let sub = 40;
    let mut probs = vec![0.0; bins + 2];
    for (j, p) in probs.iter_mut().enumerate().skip(1).take(bins) {
        let a = lo + (j - 1) as f64 * h;
        // Midpoint rule on a fine sub-grid.
        *p = (0..sub)
            .map(|q| d.marginal_density(i, &[a + (q as f64 + 0.5) * h / sub as f64]).unwrap())
            .sum::<f64>()
            * h
            / sub as f64;
    }
    let inner: f64 = probs.iter().sum();
    let tail = 1.0 - inner;
    probs[0] = tail / 2.0;
    probs[bins + 1] = tail / 2.0;
    let mut chi2 = 0.0;
    let mut dof = -1.0;
    for (o, p) in counts.iter().zip(&probs) {
        let e = p * n as f64;
        if e >= 5.0 {
            chi2 += (o - e).powi(2) / e;
            dof += 1.0;
        }
    }
    (chi2, chi2_critical(dof))
}

#[test]
fn ancestral_histograms_match_marginals() {
    let ho = SystemSolution::harmonic_oscillator_1d(2.0, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.5, 4).unwrap();
    let cases = [
        PathDensity::new(ho, grid, KernelSpec::gaussian(1.0).unwrap(), AlphaMeasure::point(vec![0.0, 1.0])).unwrap(),
        PathDensity::new(ho, grid, KernelSpec::fejer(2.0).unwrap(), AlphaMeasure::point(vec![0.3, 0.5])).unwrap(),
        PathDensity::new(
            ho,
            grid,
            KernelSpec::gaussian(1.5).unwrap(),
            AlphaMeasure::GaussianPrior { mean: vec![0.2, 1.0], sd: vec![0.3, 0.3] },
        )
        .unwrap(),
    ];
    for (k, d) in cases.iter().enumerate() {
        for i in [1, 3] {
            let (chi2, crit) = chi2_against_marginal(d, i, 20_000, 100 + k as u64);
            assert!(chi2 < crit, "case {k} slice {i}: chi2 {chi2} vs {crit}");
        }
    }
}

fn unconstrained() -> PathDensity {
    let sys = SystemSolution::harmonic_oscillator_1d(2.0, 1.0).unwrap();
    PathDensity::new(sys, TimeGrid::new(0.0, 1.0, 11).unwrap(), KernelSpec::gaussian(2.0).unwrap(), AlphaMeasure::point(vec![0.0, 1.0]))
        .unwrap()
}

#[test]
fn metropolis_marginal_matches_ancestral() {
    let d = unconstrained();
    let mid = d.grid().mid_index();
    let mut a = slice_values(&ancestral_sample(&d, &SamplerConfig::ancestral(100_000, 1)).unwrap().trajectories, mid);
    let batch = metropolis_sample(&d, &SamplerConfig::metropolis(400_000, 1000, 4, 2)).unwrap();
    let mut b = slice_values(&batch.trajectories, mid);
    let rate = batch.diagnostics.acceptance_rate.unwrap();
    assert!(rate > 0.1 && rate < 0.9, "{rate}");
    let ks = ks_two_sample(&mut a, &mut b);
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn chain_order_does_not_change_the_merged_estimate() {
    let d = unconstrained();
    let batch = metropolis_sample(&d, &SamplerConfig::metropolis(4000, 200, 4, 5)).unwrap();
    let values = slice_values(&batch.trajectories, 3);
    let chains: Vec<&[f64]> = batch.chain_ranges().into_iter().map(|r| &values[r]).collect();
    let forward = chains_mean_se(&chains);
    let mut reversed = chains.clone();
    reversed.reverse();
    let backward = chains_mean_se(&reversed);
    assert!((forward.0 - backward.0).abs() < 1e-12);
    assert!((forward.1 - backward.1).abs() < 1e-12);
}

#[test]
fn metropolis_step_leaves_the_lattice_distribution_invariant() {
    let sys = SystemSolution::free_particle_1d(1.0).unwrap();
    let d = PathDensity::new(sys, TimeGrid::new(0.0, 1.0, 2).unwrap(), KernelSpec::gaussian(1.0).unwrap(), AlphaMeasure::point(vec![0.0, 0.5]))
        .unwrap();
    let n = 41;
    let pts: Vec<f64> = (0..n).map(|j| -3.0 + 6.0 * j as f64 / (n - 1) as f64).collect();
    let state = |a: usize, b: usize| Trajectory::new(*d.grid(), 1, vec![pts[a], pts[b]]).unwrap();
    let mut logw = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            logw[a * n + b] = d.log_weight(&state(a, b)).unwrap();
        }
    }
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logw.iter().map(|l| (l - top).exp()).sum();
    let pi: Vec<f64> = logw.iter().map(|l| (l - top).exp() / total).collect();
    // Single-slice proposals to a neighbouring lattice point, each of the
    // four moves with probability 1/4; moves off the lattice are rejected.
    let mut next = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let s = a * n + b;
            let mut stay = 1.0;
            for (da, db) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (na, nb) = (a as i64 + da, b as i64 + db);
                if na < 0 || nb < 0 || na >= n as i64 || nb >= n as i64 {
                    continue;
                }
                let t = na as usize * n + nb as usize;
                let p = 0.25 * acceptance_probability(logw[s], logw[t]);
                next[t] += pi[s] * p;
                stay -= p;
            }
            next[s] += pi[s] * stay;
        }
    }
    let tv: f64 = 0.5 * next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 1e-3, "TV {tv}");
}

#[test]
fn soft_pin_concentrates_slice_zero() {
    let (m, mf, x0) = (2.0, 50.0, 1.0);
    let d = unconstrained()
        .with_kernel(KernelSpec::gaussian(m).unwrap())
        .unwrap()
        .with_constraint(PathConstraint::position(0, vec![x0], Softness::Kernel(KernelSpec::gaussian(mf).unwrap())))
        .unwrap();
    let batch = metropolis_sample(&d, &SamplerConfig::metropolis(40_000, 1000, 4, 9)).unwrap();
    let values = slice_values(&batch.trajectories, 0);
    let chains: Vec<&[f64]> = batch.chain_ranges().into_iter().map(|r| &values[r]).collect();
    let (mu, se, _) = chains_mean_se(&chains);
    assert!((mu - x0).abs() <= 3.0 * se, "{mu} ± {se}");
    let expected_sd = (1.0 / (2.0 * (m * m + mf * mf))).sqrt();
    let sd = variance(&values).sqrt();
    assert!((sd / expected_sd - 1.0).abs() < 0.1, "{sd} vs {expected_sd}");
}

#[test]
fn importance_ess_reflects_pin_placement() {
    let d = unconstrained();
    let batch = ancestral_sample(&d, &SamplerConfig::ancestral(20_000, 4)).unwrap();
    let w = d.kernel().width();
    for (offset, mf, good) in [(0.0, 2.0, true), (0.0, 1.0, true), (10.0 * w, 2.0, false)] {
        let pinned = d
            .clone()
            .with_constraint(PathConstraint::position(0, vec![1.0 + offset], Softness::Kernel(KernelSpec::gaussian(mf).unwrap())))
            .unwrap();
        let r = importance_reweight(&batch, &pinned).unwrap();
        let frac = r.diagnostics.ess / batch.len() as f64;
        assert_eq!(frac > 0.5, good, "offset {offset}, m_F {mf}: {frac}");
        if !good {
            assert!(frac < 1e-2, "{frac}");
        }
    }
    let same = importance_reweight(&batch, &d).unwrap();
    assert_eq!(same.weights, batch.weights);
    assert_eq!(mean(&same.weights), 1.0);
}
