//! Brute-force reference evaluators for small instances: exact path sums
//! over a position lattice and nested α/x quadrature of single-slice
//! observables.

use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{AlphaMeasure, PathDensity, PRIOR_HALF_WIDTH};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::math::{log_sum_exp, WeightedLogAccumulator};
use crate::model::{TimeGrid, Trajectory};
use crate::observables::{self, EvalContext, Observable};
use crate::quad;
use crate::sampling::SamplerConfig;
use crate::systems::SystemSolution;

pub const MAX_LATTICE_SLICES: usize = 6;
pub const MAX_LATTICE_POINTS: usize = 64;
/// Largest number of lattice paths a single evaluation may enumerate.
pub const LATTICE_BUDGET: u64 = 100_000_000;

/// Where the lattice points of each slice lie.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeRange {
    /// The same interval for every slice, one per coordinate.
    Fixed { intervals: Vec<(f64, f64)> },
    /// Classical centre ± `half_widths`·(kernel width + α spread), per slice.
    Auto { half_widths: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub points_per_slice: usize,
    pub range: LatticeRange,
}

impl LatticeSpec {
    pub fn fixed(points_per_slice: usize, intervals: Vec<(f64, f64)>) -> Self {
        Self {
            points_per_slice,
            range: LatticeRange::Fixed { intervals },
        }
    }

    pub fn auto(points_per_slice: usize) -> Self {
        Self {
            points_per_slice,
            range: LatticeRange::Auto { half_widths: 6.0 },
        }
    }

    /// Number of lattice paths for `n_slices` slices in `dim` dimensions,
    /// saturating on overflow.
    pub fn n_paths(&self, n_slices: usize, dim: usize) -> u64 {
        let mut total: u64 = 1;
        for _ in 0..n_slices * dim {
            total = total.saturating_mul(self.points_per_slice as u64);
        }
        total
    }

    /// Lattice points for every (slice, coordinate), slice-major.
    fn points(&self, density: &PathDensity) -> Result<Vec<Vec<f64>>> {
        let n = density.grid().n_slices();
        let dim = density.dim();
        let p = self.points_per_slice;
        if n > MAX_LATTICE_SLICES {
            return Err(Error::Config(format!(
                "lattice oracles take at most {MAX_LATTICE_SLICES} slices, got {n}"
            )));
        }
        if !(2..=MAX_LATTICE_POINTS).contains(&p) {
            return Err(Error::Config(format!(
                "lattice points per slice must be in 2..={MAX_LATTICE_POINTS}, got {p}"
            )));
        }
        let paths = self.n_paths(n, dim);
        if paths > LATTICE_BUDGET {
            return Err(Error::LatticeBudget {
                paths,
                budget: LATTICE_BUDGET,
            });
        }
        let mut out = Vec::with_capacity(n * dim);
        for i in 0..n {
            for d in 0..dim {
                let (lo, hi) = match &self.range {
                    LatticeRange::Fixed { intervals } => *intervals.get(d).ok_or(Error::DimensionMismatch {
                        what: "lattice intervals",
                        expected: dim,
                        got: intervals.len(),
                    })?,
                    LatticeRange::Auto { half_widths } => {
                        let (c, s) = density.classical_spread(i, d)?;
                        let h = half_widths * (density.kernel().width() + s);
                        (c - h, c + h)
                    }
                };
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Config(format!("invalid lattice interval ({lo}, {hi})")));
                }
                let h = (hi - lo) / (p - 1) as f64;
                out.push((0..p).map(|j| if j + 1 == p { hi } else { lo + j as f64 * h }).collect());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeResult {
    pub value: f64,
    /// Estimated probability outside the lattice cells, from the per-slice
    /// marginals.
    pub clipped_mass: f64,
    pub n_paths: u64,
}

/// `Σ O(x) w(x) / Σ w(x)` over every lattice path, streamed in log space.
pub fn lattice_expectation(
    density: &PathDensity,
    obs: &Observable,
    lattice: &LatticeSpec,
) -> Result<LatticeResult> {
    if density.is_classical() {
        return Err(Error::AnalyticModeOnly("summed over a lattice"));
    }
    obs.validate(density.grid(), density.dim())?;
    observables::check_finite(density, obs)?;
    let points = lattice.points(density)?;
    let grid = *density.grid();
    let dim = density.dim();
    let kernel = density.kernel();
    let nv = points.len();
    let p = lattice.points_per_slice;

    // Flattened α-nodes of every block, and for each lattice variable the
    // log kernel factor at each of its points against each node.
    let rules = density.alpha_rules();
    let mut spans = Vec::new();
    let mut base = Vec::new();
    for (_, _, lw) in &rules {
        spans.push(base.len()..base.len() + lw.len());
        base.extend_from_slice(lw);
    }
    let width = base.len();
    let basis = density.basis();
    let mut table = vec![vec![0.0; p * width]; nv];
    for (v, row) in table.iter_mut().enumerate() {
        let (i, d) = (v / dim, v % dim);
        let (off, c0, c1) = basis[i];
        for ((coords, nodes, _), span) in rules.iter().zip(&spans) {
            if !coords.contains(&d) {
                continue;
            }
            for (k, alpha) in nodes.iter().enumerate() {
                let xs = off + c0 * alpha[2 * d] + c1 * alpha[2 * d + 1];
                for (j, x) in points[v].iter().enumerate() {
                    row[j * width + span.start + k] = kernel.log_eval(x - xs)?;
                }
            }
        }
    }
    let clipped_mass = clipped_mass(density, &points, &rules)?;

    let alpha = density.classical_alpha()?;
    let ctx = EvalContext {
        system: density.system(),
        alpha: alpha.as_ref(),
    };
    let constrained = !density.constraints().is_empty();
    let partials = (0..p)
        .into_par_iter()
        .map(|outer| {
            let mut acc = WeightedLogAccumulator::default();
            let mut idx = vec![0usize; nv];
            idx[0] = outer;
            let mut prefix = vec![vec![0.0; width]; nv];
            let mut x = Trajectory::from_parts(grid, dim, points.iter().map(|pts| pts[0]).collect());
            let mut lse = Vec::with_capacity(width);
            let mut from = 0;
            loop {
                for v in from..nv {
                    let row = &table[v][idx[v] * width..(idx[v] + 1) * width];
                    let (done, rest) = prefix.split_at_mut(v);
                    let prev = done.last().unwrap_or(&base);
                    for ((out, a), b) in rest[0].iter_mut().zip(prev).zip(row) {
                        *out = a + b;
                    }
                    x.values_mut()[v] = points[v][idx[v]];
                }
                let last = &prefix[nv - 1];
                let mut lw = 0.0;
                for span in &spans {
                    lse.clear();
                    lse.extend_from_slice(&last[span.clone()]);
                    lw += log_sum_exp(&lse);
                }
                if constrained && lw > f64::NEG_INFINITY {
                    lw += density.constraint_log_factor(&x)?;
                }
                if lw > f64::NEG_INFINITY {
                    acc.push(lw, obs.evaluate(&x, &ctx)?);
                }
                // Odometer over every variable but the outermost.
                let mut v = nv - 1;
                loop {
                    if v == 0 {
                        return Ok(acc);
                    }
                    idx[v] += 1;
                    if idx[v] < p {
                        break;
                    }
                    idx[v] = 0;
                    v -= 1;
                }
                from = v;
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let acc = partials
        .into_iter()
        .fold(WeightedLogAccumulator::default(), WeightedLogAccumulator::merge);
    if acc.sum_w == 0.0 {
        return Err(Error::DegenerateWeights(
            "every lattice path has zero weight".into(),
        ));
    }
    Ok(LatticeResult {
        value: acc.mean(),
        clipped_mass,
        n_paths: lattice.n_paths(grid.n_slices(), dim),
    })
}

type Rules = [(Vec<usize>, Vec<Vec<f64>>, Vec<f64>)];

fn clipped_mass(density: &PathDensity, points: &[Vec<f64>], rules: &Rules) -> Result<f64> {
    let kernel = density.kernel();
    let total = kernel.total_mass()?;
    let dim = density.dim();
    let basis = density.basis();
    let mut inside = 1.0;
    for (v, pts) in points.iter().enumerate() {
        let (i, d) = (v / dim, v % dim);
        let (off, c0, c1) = basis[i];
        let half = 0.5 * (pts[1] - pts[0]);
        let (lo, hi) = (pts[0] - half, pts[pts.len() - 1] + half);
        let (_, nodes, lw) = rules.iter().find(|r| r.0.contains(&d)).expect("every coordinate has a block");
        let mut m = 0.0;
        for (alpha, w) in nodes.iter().zip(lw) {
            let xs = off + c0 * alpha[2 * d] + c1 * alpha[2 * d + 1];
            m += w.exp() * kernel.mass(lo - xs, hi - xs)?;
        }
        inside *= (m / total).min(1.0);
    }
    Ok((1.0 - inside).max(0.0))
}

/// `∫dα μ(α) ∫dx O(x) δ_m(x − x_s(α; t))` for an observable of one slice,
/// by nested adaptive quadrature (α components outside, kernel inside).
pub fn slice_quadrature(density: &PathDensity, obs: &Observable, rel_tol: f64) -> Result<f64> {
    if density.is_classical() {
        return Err(Error::AnalyticModeOnly("integrated by the quadrature oracle"));
    }
    if !density.constraints().is_empty() {
        return Err(Error::Unsupported(
            "slice quadrature needs a density without path constraints".into(),
        ));
    }
    let (i, d, f) = obs.single_slice().ok_or_else(|| {
        Error::Unsupported(format!("`{}` does not depend on a single slice", obs.name()))
    })?;
    obs.validate(density.grid(), density.dim())?;
    observables::check_finite(density, obs)?;
    let kernel = *density.kernel();
    let (off, c0, c1) = density.basis()[i];
    let failure = RefCell::new(None);
    let inner = |a0: f64, a1: f64| -> f64 {
        let xs = off + c0 * a0 + c1 * a1;
        match kernel.average(|u| f(xs + u), rel_tol) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let (k0, k1) = (2 * d, 2 * d + 1);
    let nested = |lo: [f64; 2], hi: [f64; 2], weight: &dyn Fn(usize, f64) -> f64| -> Result<f64> {
        let outer = quad::integrate(
            |a0| {
                let r = quad::integrate(|a1| weight(1, a1) * inner(a0, a1), lo[1], hi[1], 1e-14, rel_tol);
                match r {
                    Ok(r) => weight(0, a0) * r.value,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            lo[0],
            hi[0],
            1e-14,
            rel_tol,
        );
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        let norm0 = quad::integrate(|a| weight(0, a), lo[0], hi[0], 1e-300, 1e-14)?.value;
        let norm1 = quad::integrate(|a| weight(1, a), lo[1], hi[1], 1e-300, 1e-14)?.value;
        Ok(outer?.value / (norm0 * norm1))
    };
    let value = match density.alpha_measure() {
        AlphaMeasure::PointMass { alpha } => inner(alpha.0[k0], alpha.0[k1]),
        AlphaMeasure::BoxUniform { lo, hi } => nested([lo[k0], lo[k1]], [hi[k0], hi[k1]], &|_, _| 1.0)?,
        AlphaMeasure::GaussianPrior { mean, sd } => {
            let (m, s) = ([mean[k0], mean[k1]], [sd[k0], sd[k1]]);
            let lo = [m[0] - PRIOR_HALF_WIDTH * s[0], m[1] - PRIOR_HALF_WIDTH * s[1]];
            let hi = [m[0] + PRIOR_HALF_WIDTH * s[0], m[1] + PRIOR_HALF_WIDTH * s[1]];
            nested(lo, hi, &|j, a| (-0.5 * ((a - m[j]) / s[j]).powi(2)).exp())?
        }
        AlphaMeasure::Lebesgue => unreachable!("flat measures are classical"),
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(value)
}

/// One density of the oracle triangle battery.
#[derive(Debug, Clone)]
pub struct TriangleCase {
    pub id: &'static str,
    pub density: PathDensity,
    pub lattice: LatticeSpec,
}

/// Sample sizes for [`run_triangle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleBudget {
    pub ancestral_samples: usize,
    pub metropolis_samples: usize,
    pub metropolis_chains: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for TriangleBudget {
    fn default() -> Self {
        Self {
            ancestral_samples: 40_000,
            metropolis_samples: 40_000,
            metropolis_chains: 4,
            burn_in: 500,
            seed: 2024,
        }
    }
}

/// Comparison row of the oracle triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub case_id: String,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
    pub metropolis_estimate: f64,
    pub metropolis_stderr: f64,
    pub lattice_value: f64,
    pub quadrature_value: f64,
    pub verdict: String,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

/// Combined-σ tolerance between Monte Carlo estimates and the lattice.
pub const TRIANGLE_SIGMAS: f64 = 3.0;
/// Absolute tolerance between lattice and slice quadrature.
pub const LATTICE_QUADRATURE_TOL: f64 = 1e-3;

/// Three 4-slice, 1D, Gaussian-kernel densities.
pub fn triangle_cases() -> Result<Vec<TriangleCase>> {
    let grid = TimeGrid::new(0.0, 1.5, 4)?;
    let ho = SystemSolution::harmonic_oscillator_1d(2.0, 1.0)?;
    let free = SystemSolution::free_particle_1d(1.0)?;
    Ok(vec![
        TriangleCase {
            id: "ho_point_m1",
            density: PathDensity::new(ho, grid, KernelSpec::gaussian(1.0)?, AlphaMeasure::point(vec![0.0, 1.0]))?,
            lattice: LatticeSpec::auto(31),
        },
        TriangleCase {
            id: "free_point_m2",
            density: PathDensity::new(free, grid, KernelSpec::gaussian(2.0)?, AlphaMeasure::point(vec![0.5, 1.0]))?,
            lattice: LatticeSpec::auto(31),
        },
        TriangleCase {
            id: "ho_prior_m1.5",
            density: PathDensity::new(
                ho,
                grid,
                KernelSpec::gaussian(1.5)?,
                AlphaMeasure::GaussianPrior {
                    mean: vec![0.2, 1.0],
                    sd: vec![0.3, 0.3],
                },
            )?
            .with_alpha_quadrature(33)?,
            lattice: LatticeSpec::auto(19),
        },
    ])
}

/// The two battery observables.
pub fn triangle_observables() -> Vec<Observable> {
    vec![
        Observable::PositionAt { t_index: 2, coord: 0 },
        Observable::PositionSquaredAt { t_index: 1, coord: 0 },
    ]
}

/// Ancestral MC, Metropolis MC, lattice path sum and slice quadrature on one
/// case and observable.
pub fn run_triangle(case: &TriangleCase, obs: &Observable, budget: &TriangleBudget) -> Result<OracleReport> {
    let anc = observables::expectation(
        &case.density,
        obs,
        &SamplerConfig::ancestral(budget.ancestral_samples, budget.seed),
    )?;
    let mh = observables::expectation(
        &case.density,
        obs,
        &SamplerConfig::metropolis(budget.metropolis_samples, budget.burn_in, budget.metropolis_chains, budget.seed),
    )?;
    let lattice = lattice_expectation(&case.density, obs, &case.lattice)?.value;
    let quadrature = slice_quadrature(&case.density, obs, 1e-10)?;
    let within = |a: f64, sa: f64, b: f64, sb: f64| (a - b).abs() <= TRIANGLE_SIGMAS * (sa * sa + sb * sb).sqrt();
    let ok = within(anc.estimate, anc.std_error, mh.estimate, mh.std_error)
        && within(anc.estimate, anc.std_error, lattice, 0.0)
        && within(mh.estimate, mh.std_error, lattice, 0.0)
        && (lattice - quadrature).abs() <= LATTICE_QUADRATURE_TOL;
    Ok(OracleReport {
        case_id: format!("{}/{}", case.id, obs.name()),
        mc_estimate: anc.estimate,
        mc_stderr: anc.std_error,
        metropolis_estimate: mh.estimate,
        metropolis_stderr: mh.std_error,
        lattice_value: lattice,
        quadrature_value: quadrature,
        verdict: if ok { "pass" } else { "fail" }.to_string(),
    })
}

/// Every case against every observable, in a fixed order.
pub fn triangle_battery(budget: &TriangleBudget) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for case in triangle_cases()? {
        for obs in triangle_observables() {
            out.push(run_triangle(&case, &obs, budget)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{PathConstraint, Softness};

    fn gaussian_point(m: f64, n: usize) -> PathDensity {
        let sys = SystemSolution::harmonic_oscillator_1d(2.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.5, n).unwrap();
        PathDensity::new(sys, grid, KernelSpec::gaussian(m).unwrap(), AlphaMeasure::point(vec![0.3, 0.4])).unwrap()
    }

    #[test]
    fn separable_lattice_matches_single_slice_sum() {
        let d = gaussian_point(1.0, 3);
        let spec = LatticeSpec::fixed(21, vec![(-4.0, 4.0)]);
        let obs = Observable::PositionAt { t_index: 1, coord: 0 };
        let lat = lattice_expectation(&d, &obs, &spec).unwrap();
        let xs = d.classical_trajectory().unwrap().unwrap().at(1, 0);
        let pts: Vec<f64> = (0..21).map(|j| -4.0 + 0.4 * j as f64).collect();
        let w: Vec<f64> = pts.iter().map(|x| d.kernel().eval(x - xs).unwrap()).collect();
        let direct = pts.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / w.iter().sum::<f64>();
        assert!((lat.value - direct).abs() < 1e-10);
        assert_eq!(lat.n_paths, 21u64.pow(3));
    }

    #[test]
    fn lattice_second_moment_of_gaussian() {
        let d = gaussian_point(1.0, 4);
        let spec = LatticeSpec::fixed(41, vec![(-5.0, 5.0)]);
        let obs = Observable::PositionSquaredAt { t_index: 2, coord: 0 };
        let lat = lattice_expectation(&d, &obs, &spec).unwrap();
        let xs = d.classical_trajectory().unwrap().unwrap().at(2, 0);
        assert!((lat.value - (xs * xs + 0.5)).abs() < 1e-3, "{} vs {}", lat.value, xs * xs + 0.5);
        assert!(lat.clipped_mass < 1e-6);
    }

    #[test]
    fn lattice_budget_and_limits() {
        let d = gaussian_point(1.0, 6);
        let obs = Observable::PositionAt { t_index: 0, coord: 0 };
        assert!(matches!(
            lattice_expectation(&d, &obs, &LatticeSpec::auto(30)),
            Err(Error::LatticeBudget { .. })
        ));
        assert!(lattice_expectation(&gaussian_point(1.0, 7), &obs, &LatticeSpec::auto(3)).is_err());
        assert!(lattice_expectation(&d, &obs, &LatticeSpec::auto(65)).is_err());
    }

    #[test]
    fn shifted_log_weights_give_the_same_mean() {
        let lws = [-3.0, -1.0, -2.5, 0.0];
        let os = [1.0, 2.0, 3.0, 4.0];
        let mean = |shift: f64| {
            let mut acc = WeightedLogAccumulator::default();
            for (lw, o) in lws.iter().zip(&os) {
                acc.push(lw + shift, *o);
            }
            acc.mean()
        };
        assert!((mean(0.0) - mean(1000.0)).abs() < 1e-14);
        assert!((mean(0.0) - mean(-1000.0)).abs() < 1e-14);
    }

    #[test]
    fn quadrature_agrees_with_lattice_on_position() {
        let d = gaussian_point(1.5, 3);
        let obs = Observable::PositionAt { t_index: 2, coord: 0 };
        let q = slice_quadrature(&d, &obs, 1e-12).unwrap();
        let xs = d.classical_trajectory().unwrap().unwrap().at(2, 0);
        assert!((q - xs).abs() < 1e-9);
        let lat = lattice_expectation(&d, &obs, &LatticeSpec::auto(41)).unwrap();
        assert!((q - lat.value).abs() < 1e-6);
    }

    #[test]
    fn quadrature_with_prior_matches_lattice() {
        let case = &triangle_cases().unwrap()[2];
        for obs in triangle_observables() {
            let q = slice_quadrature(&case.density, &obs, 1e-10).unwrap();
            let lat = lattice_expectation(&case.density, &obs, &case.lattice).unwrap();
            assert!((q - lat.value).abs() < 1e-6, "{}: {q} vs {}", obs.name(), lat.value);
        }
    }

    #[test]
    fn truncated_fejer_second_moment() {
        let sys = SystemSolution::free_particle_1d(1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let d = PathDensity::new(sys, grid, KernelSpec::truncated_fejer(1.0, 20.0).unwrap(), AlphaMeasure::point(vec![0.0, 0.0])).unwrap();
        let q = slice_quadrature(&d, &Observable::PositionSquaredAt { t_index: 0, coord: 0 }, 1e-10).unwrap();
        // The kernel is unnormalized after truncation, so the moment is
        // relative to its retained mass.
        let raw = (20.0 - (40.0f64).sin() / 2.0) / std::f64::consts::PI;
        let mass = d.kernel().total_mass().unwrap();
        assert!((q - raw / mass).abs() < 1e-6 * raw);
        assert!((q / (20.0 / std::f64::consts::PI) - 1.0).abs() < 0.1);
    }

    #[test]
    fn lattice_with_soft_constraint_refines() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let d = gaussian_point(1.0, 3)
            .with_constraint(PathConstraint::position(0, vec![0.8], Softness::Kernel(g)))
            .unwrap();
        let obs = Observable::PositionAt { t_index: 0, coord: 0 };
        let v = |p| lattice_expectation(&d, &obs, &LatticeSpec::auto(p)).unwrap().value;
        let (a, b, c) = (v(9), v(17), v(33));
        assert!((c - b).abs() <= (b - a).abs() + 1e-12);
        // Product of two equal-width Gaussians centred at x_s(0) and 0.8.
        let xs = d.classical_trajectory().unwrap().unwrap().at(0, 0);
        assert!((c - 0.5 * (xs + 0.8)).abs() < 1e-6, "{c}");
    }

    #[test]
    fn report_serializes_with_expected_keys() {
        let r = OracleReport {
            case_id: "x".into(),
            mc_estimate: 1.0,
            mc_stderr: 0.1,
            metropolis_estimate: 1.0,
            metropolis_stderr: 0.1,
            lattice_value: 1.0,
            quadrature_value: 1.0,
            verdict: "pass".into(),
        };
        let v = serde_json::to_value(&r).unwrap();
        for key in ["case_id", "mc_estimate", "mc_stderr", "lattice_value", "quadrature_value", "verdict"] {
            assert!(v.get(key).is_some());
        }
    }
}
