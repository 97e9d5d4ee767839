//! Canned studies: classical-limit sweeps over `m_delta`, grid refinement,
//! and the regression battery of closed-form results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{AlphaMeasure, PathConstraint, PathDensity, Softness};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::{ExpectationResult, TimeGrid};
use crate::observables::{self, Observable, Stencil};
use crate::sampling::SamplerConfig;
use crate::systems::SystemSolution;

/// Classical counterpart of `density`: exact kernel, every constraint made
/// exact. Expectations under it are analytic whenever it selects one path.
pub fn classical_reference(density: &PathDensity) -> Result<PathDensity> {
    let constraints = density
        .constraints()
        .iter()
        .map(|c| PathConstraint {
            kind: c.kind.clone(),
            softness: Softness::Exact,
        })
        .collect();
    let measure = match density.alpha_measure() {
        m @ AlphaMeasure::PointMass { .. } => m.clone(),
        _ if !density.constraints().is_empty() => AlphaMeasure::Lebesgue,
        m => m.clone(),
    };
    PathDensity::new(*density.system(), *density.grid(), KernelSpec::exact(), measure)?
        .with_constraints(constraints)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m_delta: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub ess: f64,
    /// `estimate − classical`.
    pub deviation: f64,
    /// Closed-form deviation where one is known (Gaussian second moments).
    pub predicted_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub observable: String,
    pub kernel_family: String,
    pub classical: f64,
    pub rows: Vec<SweepRow>,
    /// Weighted least-squares slope of `ln|deviation|` against `ln m`.
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    /// `|deviation|` never increases by more than 3 combined standard errors.
    pub monotone: bool,
}

/// Kernel of the sweep at `m`: `template` rescaled, with truncation radius
/// `trunc_scale/m` when given.
pub fn sweep_kernel(family: KernelFamily, m: f64, trunc_scale: Option<f64>) -> Result<KernelSpec> {
    KernelSpec::new(family, m, trunc_scale.map(|s| s / m))
}

/// `⟨O⟩` at each `m_delta`, against the classical value of the same setup.
pub fn classical_limit_sweep(
    template: &PathDensity,
    family: KernelFamily,
    trunc_scale: Option<f64>,
    obs: &Observable,
    m_values: &[f64],
    cfg: &SamplerConfig,
) -> Result<SweepResult> {
    if m_values.len() < 3 || m_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(
            "a limit sweep needs at least 3 strictly increasing m_delta values".into(),
        ));
    }
    if family == KernelFamily::ExactDelta {
        return Err(Error::Config("sweep over the exact kernel is meaningless".into()));
    }
    let reference = classical_reference(template)?;
    let classical = observables::expectation(&reference, obs, cfg)?.estimate;
    let rows = m_values
        .par_iter()
        .map(|&m| {
            let density = template.with_kernel(sweep_kernel(family, m, trunc_scale)?)?;
            let r = observables::expectation(&density, obs, cfg)?;
            let predicted_deviation = match (family, obs, density.alpha_measure()) {
                (KernelFamily::Gaussian, Observable::PositionSquaredAt { .. }, AlphaMeasure::PointMass { .. })
                    if density.constraints().is_empty() =>
                {
                    Some(density.kernel().width().powi(2))
                }
                _ => None,
            };
            Ok(SweepRow {
                m_delta: m,
                estimate: r.estimate,
                std_error: r.std_error,
                n_samples: r.n_samples,
                ess: r.ess,
                deviation: r.estimate - classical,
                predicted_deviation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (slope, slope_std_error) = match log_log_slope(&rows) {
        Some((s, se)) => (Some(s), Some(se)),
        None => (None, None),
    };
    let monotone = rows.windows(2).all(|w| {
        let tol = 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].deviation.abs() <= w[0].deviation.abs() + tol
    });
    Ok(SweepResult {
        observable: obs.name(),
        kernel_family: family.name().to_string(),
        classical,
        rows,
        slope,
        slope_std_error,
        monotone,
    })
}

/// Weighted least squares of `ln|dev|` on `ln m`, weighting each point by
/// `(dev/se)²`, the inverse variance of `ln|dev|`.
fn log_log_slope(rows: &[SweepRow]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.deviation != 0.0 && r.std_error > 0.0)
        .map(|r| (r.m_delta.ln(), r.deviation.abs().ln(), (r.deviation / r.std_error).powi(2)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx, (1.0 / sxx).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub n_slices: usize,
    pub dt: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub classical: f64,
    /// Closed-form stencil energy for Gaussian point-mass densities.
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStudy {
    pub observable: String,
    pub rows: Vec<GridRow>,
    /// Agreement of estimates with `predicted`, when every row has one.
    pub r_squared: Option<f64>,
}

/// Re-runs `density` on grids with each slice count. `observable` builds the
/// observable for a grid so it can follow a fixed time.
pub fn grid_refinement_study<F>(
    density: &PathDensity,
    observable: F,
    slice_counts: &[usize],
    cfg: &SamplerConfig,
) -> Result<GridStudy>
where
    F: Fn(&TimeGrid) -> Result<Observable> + Sync,
{
    if slice_counts.is_empty() || slice_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("slice counts must be strictly increasing".into()));
    }
    let g = density.grid();
    let mut name = String::new();
    let mut rows = Vec::with_capacity(slice_counts.len());
    for &n in slice_counts {
        let grid = TimeGrid::new(g.t_start(), g.t_end(), n)?;
        let d = density.with_grid(grid)?;
        let obs = observable(&grid)?;
        name = obs.name();
        let r: ExpectationResult = observables::expectation(&d, &obs, cfg)?;
        let classical = observables::expectation(&classical_reference(&d)?, &obs, cfg)?.estimate;
        let predicted = match obs {
            Observable::Energy { stencil, t_index } if !d.is_classical() => {
                observables::gaussian_stencil_energy_prediction(&d, stencil, t_index).ok()
            }
            _ if d.is_classical() => Some(classical),
            _ => None,
        };
        rows.push(GridRow {
            n_slices: n,
            dt: grid.dt(),
            estimate: r.estimate,
            std_error: r.std_error,
            classical,
            predicted,
        });
    }
    let r_squared = r_squared(&rows);
    Ok(GridStudy {
        observable: name,
        rows,
        r_squared,
    })
}

fn r_squared(rows: &[GridRow]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| r.predicted.map(|p| (r.estimate, p))).collect::<Option<_>>()?;
    if pairs.len() < 2 {
        return None;
    }
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let ss_tot: f64 = pairs.iter().map(|p| (p.0 - mean).powi(2)).sum();
    let ss_res: f64 = pairs.iter().map(|p| (p.0 - p.1).powi(2)).sum();
    if ss_tot == 0.0 {
        return Some(if ss_res == 0.0 { 1.0 } else { 0.0 });
    }
    Some(1.0 - ss_res / ss_tot)
}

/// Bumped whenever a battery row or tolerance changes.
pub const BATTERY_MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub id: String,
    pub description: String,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub id: String,
    pub description: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub manifest_version: String,
    pub rows: Vec<BatteryRow>,
    pub passed: bool,
}

const NODE_SCAN_POINTS: usize = 2001;

fn entry(id: &str, description: &str, expected: f64, tolerance: f64) -> BatteryEntry {
    BatteryEntry {
        id: id.into(),
        description: description.into(),
        expected,
        tolerance,
    }
}

/// The rows of the regression battery with their tolerances.
pub fn battery_manifest() -> Vec<BatteryEntry> {
    let cell = |m: f64| 8.0 * std::f64::consts::PI / m / (NODE_SCAN_POINTS - 1) as f64;
    let mut rows = Vec::new();
    for omega in [1.0, 2.0, 3.0] {
        rows.push(entry(
            &format!("normalization_omega_{omega}"),
            "pinned harmonic oscillator normalization equals omega",
            omega,
            1e-12,
        ));
    }
    rows.push(entry(
        "energy_ho_pinned",
        "exactly pinned oscillator (x0=1, v0=0, omega=2, mass=1) has energy 2",
        2.0,
        1e-12,
    ));
    rows.push(entry(
        "energy_ho_pinned_std_error",
        "the classical energy carries no sampling error",
        0.0,
        0.0,
    ));
    rows.push(entry(
        "energy_identity",
        "energy equals m v0^2/2 + m omega^2 x0^2/2 (x0=-0.7, v0=1.3, omega=1.7, mass=2.5)",
        0.5 * 2.5 * 1.3 * 1.3 + 0.5 * 2.5 * 1.7 * 1.7 * 0.49,
        1e-10,
    ));
    rows.push(entry(
        "pinned_alpha_ho",
        "largest deviation of the pinned constants from (0, 1) for x0=1, v0=0",
        0.0,
        1e-12,
    ));
    for m in [1.0, 2.0] {
        rows.push(entry(
            &format!("fejer_node_m{m}"),
            "first Fejer marginal node above the classical position sits at pi/m_delta",
            std::f64::consts::PI / m,
            cell(m),
        ));
    }
    rows.push(entry(
        "gaussian_nodes",
        "a Gaussian marginal has no nodes",
        0.0,
        0.0,
    ));
    rows
}

fn pinned_oscillator(x0: f64, v0: f64, omega: f64, mass: f64) -> Result<PathDensity> {
    let sys = SystemSolution::harmonic_oscillator_1d(omega, mass)?;
    let grid = TimeGrid::new(0.0, 1.0, 11)?;
    PathDensity::new(sys, grid, KernelSpec::exact(), AlphaMeasure::Lebesgue)?.with_constraints(vec![
        PathConstraint::position(0, vec![x0], Softness::Exact),
        PathConstraint::velocity(0, vec![v0], Softness::Exact),
    ])
}

fn analytic_energy(x0: f64, v0: f64, omega: f64, mass: f64) -> Result<ExpectationResult> {
    observables::expectation(
        &pinned_oscillator(x0, v0, omega, mass)?,
        &Observable::Energy {
            stencil: Stencil::Analytic,
            t_index: 5,
        },
        &SamplerConfig::ancestral(1, 0),
    )
}

fn fejer_first_node(m: f64) -> Result<f64> {
    let sys = SystemSolution::harmonic_oscillator_1d(2.0, 1.0)?;
    let grid = TimeGrid::new(0.0, 1.0, 3)?;
    let d = PathDensity::new(sys, grid, KernelSpec::fejer(m)?, AlphaMeasure::point(vec![0.3, 0.8]))?;
    let center = d.classical_spread(1, 0)?.0;
    let half = 4.0 * std::f64::consts::PI / m;
    let scan = observables::node_scan(&d, 1, (center - half, center + half), NODE_SCAN_POINTS)?;
    scan.nodes
        .iter()
        .map(|x| x - center)
        .filter(|u| *u > 0.0)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Config(format!("no Fejer node found for m_delta={m}")))
}

fn gaussian_node_count() -> Result<f64> {
    let sys = SystemSolution::harmonic_oscillator_1d(2.0, 1.0)?;
    let grid = TimeGrid::new(0.0, 1.0, 3)?;
    let d = PathDensity::new(sys, grid, KernelSpec::gaussian(1.0)?, AlphaMeasure::point(vec![0.3, 0.8]))?;
    let c = d.classical_spread(1, 0)?.0;
    let half = 4.0 * std::f64::consts::PI;
    Ok(observables::node_scan(&d, 1, (c - half, c + half), NODE_SCAN_POINTS)?.nodes.len() as f64)
}

fn observe(id: &str) -> Result<f64> {
    if let Some(omega) = id.strip_prefix("normalization_omega_") {
        let omega: f64 = omega.parse().map_err(|_| Error::Config(format!("bad battery id {id}")))?;
        return pinned_oscillator(1.0, 0.0, omega, 1.0)?.pinned_normalization();
    }
    if let Some(m) = id.strip_prefix("fejer_node_m") {
        let m: f64 = m.parse().map_err(|_| Error::Config(format!("bad battery id {id}")))?;
        return fejer_first_node(m);
    }
    match id {
        "energy_ho_pinned" => Ok(analytic_energy(1.0, 0.0, 2.0, 1.0)?.estimate),
        "energy_ho_pinned_std_error" => Ok(analytic_energy(1.0, 0.0, 2.0, 1.0)?.std_error),
        "energy_identity" => Ok(analytic_energy(-0.7, 1.3, 1.7, 2.5)?.estimate),
        "pinned_alpha_ho" => {
            let alpha = pinned_oscillator(1.0, 0.0, 2.0, 1.0)?
                .classical_alpha()?
                .ok_or_else(|| Error::Config("pins did not fix alpha".into()))?;
            Ok(alpha.0[0].abs().max((alpha.0[1] - 1.0).abs()))
        }
        "gaussian_nodes" => gaussian_node_count(),
        other => Err(Error::Config(format!("unknown battery row `{other}`"))),
    }
}

/// Evaluates every manifest row. Evaluation errors become failing rows.
pub fn regression_battery() -> BatteryReport {
    let rows: Vec<BatteryRow> = battery_manifest()
        .into_iter()
        .map(|e| {
            let observed = observe(&e.id).unwrap_or(f64::NAN);
            let pass = (observed - e.expected).abs() <= e.tolerance * e.expected.abs().max(1.0);
            BatteryRow {
                id: e.id,
                description: e.description,
                expected: e.expected,
                observed,
                tolerance: e.tolerance,
                pass,
            }
        })
        .collect();
    BatteryReport {
        manifest_version: BATTERY_MANIFEST_VERSION.into(),
        passed: rows.iter().all(|r| r.pass),
        rows,
    }
}
