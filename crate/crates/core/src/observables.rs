//! Observables `O[x(t)]` and their expectation values `⟨O⟩ = ∫𝒟x O[x] P[x]`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::PathDensity;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::{AlphaVector, ExpectationResult, TimeGrid, Trajectory};
use crate::sampling::{self, SamplerConfig, SamplerMethod};
use crate::stats;
use crate::systems::SystemSolution;

/// How the velocity inside the energy is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Exact solution velocity from the integration constants.
    Analytic,
    /// `(x_{i+1} − x_i)/dt`, backward at the last slice.
    Forward,
    /// `(x_{i+1} − x_{i−1})/(2dt)` in the interior, one-sided at the ends.
    Central,
}

impl Stencil {
    pub fn name(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::Forward => "forward",
            Self::Central => "central",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "forward" => Ok(Self::Forward),
            "central" => Ok(Self::Central),
            other => Err(Error::Config(format!(
                "unknown stencil `{other}` (expected analytic, forward or central)"
            ))),
        }
    }
}

/// A named pure function of a trajectory.
#[derive(Clone)]
pub struct CustomObservable {
    pub name: String,
    pub f: Arc<dyn Fn(&Trajectory) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub enum Observable {
    PositionAt { t_index: usize, coord: usize },
    PositionSquaredAt { t_index: usize, coord: usize },
    /// `½m̂|v|² + V(x)` at one slice.
    Energy { stencil: Stencil, t_index: usize },
    /// Average of the inner observable re-indexed at every slice.
    PathAverage(Box<Observable>),
    /// `Σ cₖ Oₖ`.
    Linear(Vec<(f64, Observable)>),
    Custom(CustomObservable),
}

/// What an observable may need beyond the trajectory itself.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub system: &'a SystemSolution,
    /// Integration constants of the path, for analytic velocities.
    pub alpha: Option<&'a AlphaVector>,
}

impl Observable {
    pub fn custom(name: &str, f: impl Fn(&Trajectory) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(CustomObservable {
            name: name.to_string(),
            f: Arc::new(f),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Self::PositionAt { t_index, coord } => format!("position[{t_index}][{coord}]"),
            Self::PositionSquaredAt { t_index, coord } => format!("position_squared[{t_index}][{coord}]"),
            Self::Energy { stencil, t_index } => format!("energy_{}[{t_index}]", stencil.name()),
            Self::PathAverage(inner) => format!("path_average({})", inner.name()),
            Self::Linear(terms) => terms
                .iter()
                .map(|(c, o)| format!("{c}*{}", o.name()))
                .collect::<Vec<_>>()
                .join("+"),
            Self::Custom(c) => c.name.clone(),
        }
    }

    /// The same observable moved to slice `i` (no-op for composites).
    pub fn at_slice(&self, i: usize) -> Self {
        match self {
            Self::PositionAt { coord, .. } => Self::PositionAt { t_index: i, coord: *coord },
            Self::PositionSquaredAt { coord, .. } => Self::PositionSquaredAt { t_index: i, coord: *coord },
            Self::Energy { stencil, .. } => Self::Energy { stencil: *stencil, t_index: i },
            other => other.clone(),
        }
    }

    pub fn validate(&self, grid: &TimeGrid, dim: usize) -> Result<()> {
        match self {
            Self::PositionAt { t_index, coord } | Self::PositionSquaredAt { t_index, coord } => {
                grid.check_index(*t_index)?;
                if *coord >= dim {
                    return Err(Error::Config(format!(
                        "coordinate {coord} out of range for dimension {dim}"
                    )));
                }
                Ok(())
            }
            Self::Energy { t_index, .. } => grid.check_index(*t_index),
            Self::PathAverage(inner) => inner.validate(grid, dim),
            Self::Linear(terms) => terms.iter().try_for_each(|(_, o)| o.validate(grid, dim)),
            Self::Custom(_) => Ok(()),
        }
    }

    pub fn stencil(&self) -> Option<Stencil> {
        match self {
            Self::Energy { stencil, .. } => Some(*stencil),
            Self::PathAverage(inner) => inner.stencil(),
            Self::Linear(terms) => terms.iter().find_map(|(_, o)| o.stencil()),
            _ => None,
        }
    }

    /// Whether this observable has a finite expectation under `kernel`.
    /// Fejér tails decay like `u⁻²`, so any observable growing with the
    /// sampled positions diverges unless the kernel is truncated.
    pub fn finite_under(&self, kernel: &KernelSpec, system: &SystemSolution) -> bool {
        if kernel.family() != KernelFamily::Fejer {
            return true;
        }
        match self {
            Self::PositionAt { .. } | Self::PositionSquaredAt { .. } => false,
            Self::Energy { stencil, .. } => {
                *stencil == Stencil::Analytic && matches!(system.kind(), crate::systems::SystemKind::FreeParticle1d | crate::systems::SystemKind::FreeParticle3d)
            }
            Self::PathAverage(inner) => inner.finite_under(kernel, system),
            Self::Linear(terms) => terms.iter().all(|(c, o)| *c == 0.0 || o.finite_under(kernel, system)),
            Self::Custom(_) => true,
        }
    }

    /// Depends on a single slice and coordinate through `x ↦ f(x)`; used by
    /// the quadrature oracle.
    pub fn single_slice(&self) -> Option<(usize, usize, fn(f64) -> f64)> {
        match self {
            Self::PositionAt { t_index, coord } => Some((*t_index, *coord, |x| x)),
            Self::PositionSquaredAt { t_index, coord } => Some((*t_index, *coord, |x| x * x)),
            _ => None,
        }
    }

    pub fn evaluate(&self, x: &Trajectory, ctx: &EvalContext<'_>) -> Result<f64> {
        match self {
            Self::PositionAt { t_index, coord } => Ok(x.at(*t_index, *coord)),
            Self::PositionSquaredAt { t_index, coord } => Ok(x.at(*t_index, *coord).powi(2)),
            Self::Energy { stencil, t_index } => energy(x, *stencil, *t_index, ctx),
            Self::PathAverage(inner) => {
                let n = x.n_slices();
                let mut total = 0.0;
                for i in 0..n {
                    total += inner.at_slice(i).evaluate(x, ctx)?;
                }
                Ok(total / n as f64)
            }
            Self::Linear(terms) => terms
                .iter()
                .map(|(c, o)| o.evaluate(x, ctx).map(|v| c * v))
                .sum(),
            Self::Custom(c) => Ok((c.f)(x)),
        }
    }
}

fn stencil_velocity(x: &Trajectory, stencil: Stencil, i: usize, d: usize) -> f64 {
    let n = x.n_slices();
    let dt = x.grid().dt();
    match stencil {
        Stencil::Central if i > 0 && i + 1 < n => (x.at(i + 1, d) - x.at(i - 1, d)) / (2.0 * dt),
        _ if i + 1 < n => (x.at(i + 1, d) - x.at(i, d)) / dt,
        _ => (x.at(i, d) - x.at(i - 1, d)) / dt,
    }
}

fn energy(x: &Trajectory, stencil: Stencil, i: usize, ctx: &EvalContext<'_>) -> Result<f64> {
    let system = ctx.system;
    let dim = system.dim();
    let t = x.grid().slice_time(i);
    let mut kinetic = 0.0;
    for d in 0..dim {
        let v = match stencil {
            Stencil::Analytic => {
                let alpha = ctx.alpha.ok_or_else(|| {
                    Error::Config(
                        "the analytic stencil needs the path's integration constants (point-mass or exactly pinned densities)"
                            .into(),
                    )
                })?;
                system.velocity_coord(alpha.as_slice(), t, d)
            }
            s => stencil_velocity(x, s, i, d),
        };
        kinetic += v * v;
    }
    Ok(0.5 * system.mass() * kinetic + system.potential(x.slice(i)))
}

/// Expected stencil energy at slice `i` for a Gaussian-kernel, point-mass
/// density under exact sampling: the classical stencil energy plus the
/// kernel variance `s² = 1/(2m²)` fed through the stencil and the potential.
pub fn gaussian_stencil_energy_prediction(
    density: &PathDensity,
    stencil: Stencil,
    i: usize,
) -> Result<f64> {
    if density.kernel().family() != KernelFamily::Gaussian || !density.constraints().is_empty() {
        return Err(Error::Unsupported(
            "energy prediction needs an unconstrained Gaussian-kernel density".into(),
        ));
    }
    let alpha = density
        .classical_alpha()?
        .ok_or_else(|| Error::Unsupported("energy prediction needs a point-mass alpha".into()))?;
    let system = density.system();
    let grid = density.grid();
    let cl = system.eval_solution(&alpha, grid)?;
    let ctx = EvalContext {
        system,
        alpha: Some(&alpha),
    };
    let classical = energy(&cl, stencil, i, &ctx)?;
    let s2 = density.kernel().width().powi(2);
    let dt = grid.dt();
    let n = grid.n_slices();
    let velocity_var = match stencil {
        Stencil::Analytic => 0.0,
        Stencil::Central if i > 0 && i + 1 < n => 2.0 * s2 / (4.0 * dt * dt),
        _ => 2.0 * s2 / (dt * dt),
    };
    let dim = system.dim() as f64;
    let omega = system.omega();
    Ok(classical + 0.5 * system.mass() * dim * velocity_var + 0.5 * system.mass() * omega * omega * s2)
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Content digest of a (density, observable, sampler) triple.
pub fn config_digest(density: &PathDensity, obs: &Observable, cfg: &SamplerConfig) -> String {
    digest(&[&density.describe(), &format!("{obs:?}"), &format!("{cfg:?}")])
}

/// Rejects observables whose expectation does not exist under the kernel.
pub fn check_finite(density: &PathDensity, obs: &Observable) -> Result<()> {
    if !obs.finite_under(density.kernel(), density.system()) {
        return Err(Error::Divergent {
            observable: obs.name(),
            kernel: density.kernel().to_string(),
        });
    }
    Ok(())
}

/// `⟨O⟩` under `density`.
///
/// Classical densities with a single distinguished path are evaluated
/// analytically (standard error 0). Everything else is estimated from a
/// sample batch drawn according to `cfg`.
pub fn expectation(
    density: &PathDensity,
    obs: &Observable,
    cfg: &SamplerConfig,
) -> Result<ExpectationResult> {
    obs.validate(density.grid(), density.dim())?;
    check_finite(density, obs)?;
    let config_digest = config_digest(density, obs, cfg);
    let meta = |estimate, std_error, n_samples, ess| ExpectationResult {
        estimate,
        std_error,
        n_samples,
        ess,
        seed: cfg.seed,
        config_digest: config_digest.clone(),
        n_slices: density.grid().n_slices(),
        stencil: obs.stencil().map(|s| s.name().to_string()),
    };
    if density.is_classical() {
        if let Some(alpha) = density.classical_alpha()? {
            let path = density.system().eval_solution(&alpha, density.grid())?;
            let ctx = EvalContext {
                system: density.system(),
                alpha: Some(&alpha),
            };
            return Ok(meta(obs.evaluate(&path, &ctx)?, 0.0, 1, 1.0));
        }
    }
    cfg.validate()?;
    let batch = sampling::sample(density, cfg)?;
    let point_alpha = density.classical_alpha()?;
    let system = density.system();
    let values = batch
        .trajectories
        .par_iter()
        .map(|x| {
            // Exact-kernel samples with random α are classical paths, so the
            // constants can be recovered exactly.
            let fitted = if point_alpha.is_none() && density.is_classical() {
                Some(system.fit_alpha(x)?.0)
            } else {
                None
            };
            let ctx = EvalContext {
                system,
                alpha: point_alpha.as_ref().or(fitted.as_ref()),
            };
            obs.evaluate(x, &ctx)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len();
    let (estimate, se, ess) = match batch.method {
        SamplerMethod::MetropolisPath => {
            let chains: Vec<&[f64]> = batch
                .chain_ranges()
                .into_iter()
                .filter(|r| !r.is_empty())
                .map(|r| &values[r])
                .collect();
            stats::chains_mean_se(&chains)
        }
        _ => {
            let (m, se) = stats::weighted_mean_se(&values, &batch.weights);
            (m, se, stats::kish_ess(&batch.weights))
        }
    };
    Ok(meta(estimate, se, n, ess.min(n as f64)))
}

/// Tabulated single-time marginal with its detected nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeScan {
    pub t_index: usize,
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    pub max_density: f64,
    /// Interior local minima with `ρ < NODE_THRESHOLD · max ρ`. A run of
    /// consecutive sub-threshold points reports its midpoint.
    pub nodes: Vec<f64>,
}

/// Relative threshold separating true zeros from quadrature noise.
pub const NODE_THRESHOLD: f64 = 1e-6;

/// Scans `ρ_t` along coordinate 0 over `[lo, hi]` (other coordinates held on
/// the classical centre).
pub fn node_scan(
    density: &PathDensity,
    t_index: usize,
    x_range: (f64, f64),
    n_points: usize,
) -> Result<NodeScan> {
    let (lo, hi) = x_range;
    if !(lo < hi) || n_points < 3 {
        return Err(Error::Config(format!(
            "node scan needs lo < hi and at least 3 points, got ({lo}, {hi}) with {n_points}"
        )));
    }
    density.grid().check_index(t_index)?;
    let dim = density.dim();
    let mut base = Vec::with_capacity(dim);
    for d in 0..dim {
        base.push(density.classical_spread(t_index, d)?.0);
    }
    let h = (hi - lo) / (n_points - 1) as f64;
    let xs: Vec<f64> = (0..n_points)
        .map(|j| if j + 1 == n_points { hi } else { lo + j as f64 * h })
        .collect();
    let rho = xs
        .par_iter()
        .map(|&x| {
            let mut point = base.clone();
            point[0] = x;
            density.marginal_density(t_index, &point)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = rho.iter().copied().fold(0.0, f64::max);
    let threshold = NODE_THRESHOLD * max;
    let mut nodes = Vec::new();
    let mut j = 1;
    while j + 1 < n_points {
        let local_min = rho[j] <= rho[j - 1] && rho[j] <= rho[j + 1];
        if rho[j] < threshold && (local_min || rho[j + 1] < threshold) {
            let start = j;
            while j + 1 < n_points && rho[j + 1] < threshold {
                j += 1;
            }
            // Runs touching the scan edge are not interior minima.
            if start > 0 && j + 1 < n_points && rho[start - 1] >= rho[start] && rho[j + 1] >= rho[j] {
                nodes.push(0.5 * (xs[start] + xs[j]));
            }
        }
        j += 1;
    }
    Ok(NodeScan {
        t_index,
        xs,
        density: rho,
        max_density: max,
        nodes,
    })
}
