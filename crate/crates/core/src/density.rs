//! Discretized path densities.
//!
//! A [`PathDensity`] is the finite-resolution version of
//!
//! ```text
//! P[x] = F[x] · ∫dα ∏ᵢ ∏_d δ_m(xᵢ^d − x_s^d(α; tᵢ))
//! ```
//!
//! The normalizing functional `F` is split in two. The part that only
//! restricts the integration constants lives in [`AlphaMeasure`]; genuine
//! path functionals (soft or exact pins on sampled values) live in
//! [`PathConstraint`]. With the exact delta kernel the density is never
//! evaluated pointwise; everything is resolved analytically from the
//! classical trajectory instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::math::log_sum_exp;
use crate::model::{AlphaVector, TimeGrid, Trajectory};
use crate::quad;
use crate::systems::SystemSolution;

/// Default Gauss–Legendre resolution per α component.
pub const DEFAULT_ALPHA_QUADRATURE: usize = 129;
/// Below this the α-quadrature is too coarse to be trusted.
pub const MIN_ALPHA_QUADRATURE: usize = 9;
/// Gaussian priors are integrated over mean ± this many standard deviations.
pub const PRIOR_HALF_WIDTH: f64 = 6.0;

/// Measure over the integration constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaMeasure {
    PointMass { alpha: AlphaVector },
    BoxUniform { lo: Vec<f64>, hi: Vec<f64> },
    GaussianPrior { mean: Vec<f64>, sd: Vec<f64> },
    /// The improper flat `dα`. Only usable with the exact delta kernel, where
    /// exact position and velocity pins select a single classical path.
    Lebesgue,
}

impl AlphaMeasure {
    pub fn point(alpha: impl Into<AlphaVector>) -> Self {
        Self::PointMass {
            alpha: alpha.into(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let check_len = |what: &'static str, v: &[f64]| {
            if v.len() != n {
                Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                })
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(Error::Config(format!("{what} must be finite")))
            } else {
                Ok(())
            }
        };
        match self {
            Self::PointMass { alpha } => check_len("point-mass alpha", alpha.as_slice()),
            Self::BoxUniform { lo, hi } => {
                check_len("box lower bounds", lo)?;
                check_len("box upper bounds", hi)?;
                if lo.iter().zip(hi).any(|(l, h)| l >= h) {
                    return Err(Error::Config("box bounds must satisfy lo < hi".into()));
                }
                Ok(())
            }
            Self::GaussianPrior { mean, sd } => {
                check_len("prior mean", mean)?;
                check_len("prior sd", sd)?;
                if sd.iter().any(|s| *s <= 0.0) {
                    return Err(Error::Config("prior standard deviations must be positive".into()));
                }
                Ok(())
            }
            Self::Lebesgue => Ok(()),
        }
    }

    /// Per-component centre and variance of the measure, if proper.
    fn moments(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::PointMass { alpha } => Some((alpha.0.clone(), vec![0.0; alpha.len()])),
            Self::BoxUniform { lo, hi } => Some((
                lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
                lo.iter().zip(hi).map(|(l, h)| (h - l).powi(2) / 12.0).collect(),
            )),
            Self::GaussianPrior { mean, sd } => {
                Some((mean.clone(), sd.iter().map(|s| s * s).collect()))
            }
            Self::Lebesgue => None,
        }
    }

    /// Integration range and weight function for component `k`.
    fn component_rule(&self, k: usize, q: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::BoxUniform { lo, hi } => Some(quad::gauss_legendre_on(q, lo[k], hi[k])),
            Self::GaussianPrior { mean, sd } => {
                let (x, mut w) = quad::gauss_legendre_on(
                    q,
                    mean[k] - PRIOR_HALF_WIDTH * sd[k],
                    mean[k] + PRIOR_HALF_WIDTH * sd[k],
                );
                for (wi, xi) in w.iter_mut().zip(&x) {
                    let z = (xi - mean[k]) / sd[k];
                    *wi *= (-0.5 * z * z).exp();
                }
                Some((x, w))
            }
            _ => None,
        }
    }
}

/// What a path constraint pins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    PositionAt { t_index: usize, target: Vec<f64> },
    /// Velocity from the forward stencil `(x_{i+1} − x_i)/dt` (backward at
    /// the last slice). Analytic evaluations use the exact solution velocity.
    StencilVelocityAt { t_index: usize, target: Vec<f64> },
}

impl ConstraintKind {
    pub fn t_index(&self) -> usize {
        match self {
            Self::PositionAt { t_index, .. } | Self::StencilVelocityAt { t_index, .. } => *t_index,
        }
    }

    fn target(&self) -> &[f64] {
        match self {
            Self::PositionAt { target, .. } | Self::StencilVelocityAt { target, .. } => target,
        }
    }

    fn with_index(&self, t_index: usize) -> Self {
        match self {
            Self::PositionAt { target, .. } => Self::PositionAt {
                t_index,
                target: target.clone(),
            },
            Self::StencilVelocityAt { target, .. } => Self::StencilVelocityAt {
                t_index,
                target: target.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Softness {
    Exact,
    Kernel(KernelSpec),
}

/// A factor of the normalizing functional acting on sampled path values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConstraint {
    pub kind: ConstraintKind,
    pub softness: Softness,
}

impl PathConstraint {
    pub fn position(t_index: usize, target: Vec<f64>, softness: Softness) -> Self {
        Self {
            kind: ConstraintKind::PositionAt { t_index, target },
            softness,
        }
    }

    pub fn velocity(t_index: usize, target: Vec<f64>, softness: Softness) -> Self {
        Self {
            kind: ConstraintKind::StencilVelocityAt { t_index, target },
            softness,
        }
    }

    /// Log of this constraint's factor on `x`.
    pub fn log_factor(&self, x: &Trajectory) -> Result<f64> {
        let Softness::Kernel(k) = self.softness else {
            return Err(Error::AnalyticModeOnly("used as pointwise constraint factors"));
        };
        let i = self.kind.t_index();
        let dim = x.dim();
        let mut total = 0.0;
        for (d, target) in self.kind.target().iter().enumerate().take(dim) {
            let value = match self.kind {
                ConstraintKind::PositionAt { .. } => x.at(i, d),
                ConstraintKind::StencilVelocityAt { .. } => forward_velocity(x, i, d),
            };
            total += k.log_eval(value - target)?;
        }
        Ok(total)
    }
}

/// Forward-difference velocity at slice `i`, backward at the last slice.
pub fn forward_velocity(x: &Trajectory, i: usize, d: usize) -> f64 {
    let dt = x.grid().dt();
    if i + 1 < x.n_slices() {
        (x.at(i + 1, d) - x.at(i, d)) / dt
    } else {
        (x.at(i, d) - x.at(i - 1, d)) / dt
    }
}

/// Tensor-product α-quadrature for one block of integration constants.
#[derive(Debug, Clone)]
struct BlockRule {
    coords: Vec<usize>,
    /// Full-length α vectors (components outside the block are zero).
    nodes: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
}

/// Outcome of [`PathDensity::classical_membership`].
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub alpha: AlphaVector,
    pub max_residual: f64,
}

/// The assembled discretized path density.
#[derive(Debug, Clone)]
pub struct PathDensity {
    system: SystemSolution,
    grid: TimeGrid,
    kernel: KernelSpec,
    alpha_measure: AlphaMeasure,
    constraints: Vec<PathConstraint>,
    alpha_quadrature: usize,
    /// Classical path for point-mass measures, row-major by slice.
    center: Option<Vec<f64>>,
    blocks: Vec<BlockRule>,
    basis: Vec<(f64, f64, f64)>,
}

impl PathDensity {
    pub fn new(
        system: SystemSolution,
        grid: TimeGrid,
        kernel: KernelSpec,
        alpha_measure: AlphaMeasure,
    ) -> Result<Self> {
        Self::assemble(
            system,
            grid,
            kernel,
            alpha_measure,
            Vec::new(),
            DEFAULT_ALPHA_QUADRATURE,
        )
    }

    pub fn with_constraints(self, constraints: Vec<PathConstraint>) -> Result<Self> {
        Self::assemble(
            self.system,
            self.grid,
            self.kernel,
            self.alpha_measure,
            constraints,
            self.alpha_quadrature,
        )
    }

    pub fn with_constraint(self, constraint: PathConstraint) -> Result<Self> {
        let mut all = self.constraints.clone();
        all.push(constraint);
        self.with_constraints(all)
    }

    pub fn with_alpha_quadrature(self, points_per_component: usize) -> Result<Self> {
        Self::assemble(
            self.system,
            self.grid,
            self.kernel,
            self.alpha_measure,
            self.constraints,
            points_per_component,
        )
    }

    pub fn with_kernel(&self, kernel: KernelSpec) -> Result<Self> {
        Self::assemble(
            self.system,
            self.grid,
            kernel,
            self.alpha_measure.clone(),
            self.constraints.clone(),
            self.alpha_quadrature,
        )
    }

    pub fn with_alpha_measure(&self, alpha_measure: AlphaMeasure) -> Result<Self> {
        Self::assemble(
            self.system,
            self.grid,
            self.kernel,
            alpha_measure,
            self.constraints.clone(),
            self.alpha_quadrature,
        )
    }

    /// Same density on a new grid; constraints follow their slice times.
    pub fn with_grid(&self, grid: TimeGrid) -> Result<Self> {
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let t = self.grid.slice_time(c.kind.t_index());
                Ok(PathConstraint {
                    kind: c.kind.with_index(grid.index_of(t)?),
                    softness: c.softness,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(
            self.system,
            grid,
            self.kernel,
            self.alpha_measure.clone(),
            constraints,
            self.alpha_quadrature,
        )
    }

    pub fn without_constraints(&self) -> Self {
        Self {
            constraints: Vec::new(),
            ..self.clone()
        }
    }

    fn assemble(
        system: SystemSolution,
        grid: TimeGrid,
        kernel: KernelSpec,
        alpha_measure: AlphaMeasure,
        constraints: Vec<PathConstraint>,
        alpha_quadrature: usize,
    ) -> Result<Self> {
        let n = system.n_constants();
        let dim = system.dim();
        alpha_measure.validate(n)?;
        if alpha_quadrature < MIN_ALPHA_QUADRATURE {
            return Err(Error::Config(format!(
                "alpha quadrature resolution {alpha_quadrature} is below the minimum of {MIN_ALPHA_QUADRATURE}"
            )));
        }
        for c in &constraints {
            grid.check_index(c.kind.t_index())?;
            if c.kind.target().len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "constraint target",
                    expected: dim,
                    got: c.kind.target().len(),
                });
            }
            match (kernel.is_exact(), c.softness) {
                (false, Softness::Exact) => {
                    return Err(Error::Config(
                        "exact constraint softness is only permitted with the exact delta kernel"
                            .into(),
                    ))
                }
                (true, Softness::Kernel(_)) => {
                    return Err(Error::Config(
                        "the exact delta kernel takes exact constraints only".into(),
                    ))
                }
                (_, Softness::Kernel(k)) if k.is_exact() => {
                    return Err(Error::Config(
                        "use Softness::Exact rather than an exact-delta softness kernel".into(),
                    ))
                }
                _ => {}
            }
        }
        if matches!(alpha_measure, AlphaMeasure::Lebesgue) && !kernel.is_exact() {
            return Err(Error::Config(
                "the flat (lebesgue) alpha measure is only normalizable with the exact delta kernel and exact pins"
                    .into(),
            ));
        }
        let basis: Vec<_> = grid.times().map(|t| system.position_basis(t)).collect();
        let center = match &alpha_measure {
            AlphaMeasure::PointMass { alpha } => {
                Some(system.eval_solution(alpha, &grid)?.values().to_vec())
            }
            _ => None,
        };
        let mut blocks = Vec::new();
        if !kernel.is_exact() && center.is_none() {
            for block in system.alpha_blocks() {
                let rules: Vec<_> = block
                    .alphas
                    .iter()
                    .map(|&k| alpha_measure.component_rule(k, alpha_quadrature).expect("proper measure"))
                    .collect();
                let total: usize = rules.iter().map(|r| r.0.len()).product();
                if total > 10_000_000 {
                    return Err(Error::Config(format!(
                        "alpha quadrature needs {total} nodes per block; lower the resolution"
                    )));
                }
                let mut nodes = Vec::with_capacity(total);
                let mut weights = Vec::with_capacity(total);
                for flat in 0..total {
                    let mut alpha = vec![0.0; n];
                    let mut w = 1.0;
                    let mut rem = flat;
                    for (r, &k) in rules.iter().zip(&block.alphas) {
                        let j = rem % r.0.len();
                        rem /= r.0.len();
                        alpha[k] = r.0[j];
                        w *= r.1[j];
                    }
                    nodes.push(alpha);
                    weights.push(w);
                }
                let sum: f64 = weights.iter().sum();
                blocks.push(BlockRule {
                    coords: block.coords,
                    nodes,
                    log_weights: weights.iter().map(|w| (w / sum).ln()).collect(),
                });
            }
        }
        Ok(Self {
            system,
            grid,
            kernel,
            alpha_measure,
            constraints,
            alpha_quadrature,
            center,
            blocks,
            basis,
        })
    }

    pub fn system(&self) -> &SystemSolution {
        &self.system
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn alpha_measure(&self) -> &AlphaMeasure {
        &self.alpha_measure
    }

    pub fn constraints(&self) -> &[PathConstraint] {
        &self.constraints
    }

    pub fn alpha_quadrature(&self) -> usize {
        self.alpha_quadrature
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// True when the kernel is the exact delta and evaluation is analytic.
    pub fn is_classical(&self) -> bool {
        self.kernel.is_exact()
    }

    /// Exact position and velocity pins at a common slice, if present.
    fn exact_pins(&self) -> Option<(usize, Vec<f64>, Vec<f64>)> {
        let mut pos = None;
        let mut vel = None;
        for c in &self.constraints {
            if c.softness != Softness::Exact {
                continue;
            }
            match &c.kind {
                ConstraintKind::PositionAt { t_index, target } => pos = Some((*t_index, target.clone())),
                ConstraintKind::StencilVelocityAt { t_index, target } => {
                    vel = Some((*t_index, target.clone()))
                }
            }
        }
        match (pos, vel) {
            (Some((i, x0)), Some((j, v0))) if i == j => Some((i, x0, v0)),
            _ => None,
        }
    }

    /// The single classical path selected by this density, if there is one:
    /// the point-mass α, or the α fixed by exact position and velocity pins.
    pub fn classical_alpha(&self) -> Result<Option<AlphaVector>> {
        let pinned = match self.exact_pins() {
            Some((i, x0, v0)) => Some(self.system.pinned_alpha(&x0, &v0, self.grid.slice_time(i))?),
            None => None,
        };
        match (&self.alpha_measure, pinned) {
            (AlphaMeasure::PointMass { alpha }, Some(p)) => {
                let agree = alpha
                    .0
                    .iter()
                    .zip(&p.0)
                    .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()));
                if agree {
                    Ok(Some(alpha.clone()))
                } else {
                    Err(Error::Config(
                        "point-mass alpha contradicts the exact pins; the density is zero".into(),
                    ))
                }
            }
            (AlphaMeasure::PointMass { alpha }, None) => Ok(Some(alpha.clone())),
            (_, pinned) => Ok(pinned),
        }
    }

    /// Classical trajectory of [`Self::classical_alpha`].
    pub fn classical_trajectory(&self) -> Result<Option<Trajectory>> {
        self.classical_alpha()?
            .map(|a| self.system.eval_solution(&a, &self.grid))
            .transpose()
    }

    fn check_trajectory(&self, x: &Trajectory) -> Result<()> {
        if x.grid() != &self.grid {
            return Err(Error::InvalidTrajectory(
                "trajectory grid differs from the density grid".into(),
            ));
        }
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "trajectory dimension",
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Log of the α-integrated kernel product, without path constraints.
    pub fn log_weight_unconstrained(&self, x: &Trajectory) -> Result<f64> {
        if self.is_classical() {
            return Err(Error::AnalyticModeOnly("evaluated pointwise"));
        }
        self.check_trajectory(x)?;
        let k = &self.kernel;
        let values = x.values();
        if let Some(center) = &self.center {
            let mut total = 0.0;
            for (v, c) in values.iter().zip(center) {
                total += k.log_eval(v - c)?;
            }
            return Ok(total);
        }
        let dim = self.dim();
        let mut total = 0.0;
        let mut terms = Vec::new();
        for block in &self.blocks {
            terms.clear();
            for (alpha, lw) in block.nodes.iter().zip(&block.log_weights) {
                let mut acc = *lw;
                for (i, &(off, c0, c1)) in self.basis.iter().enumerate() {
                    for &d in &block.coords {
                        let xs = off + c0 * alpha[2 * d] + c1 * alpha[2 * d + 1];
                        acc += k.log_eval(values[i * dim + d] - xs)?;
                    }
                }
                terms.push(acc);
            }
            total += log_sum_exp(&terms);
        }
        Ok(total)
    }

    /// Sum of the path-constraint log factors.
    pub fn constraint_log_factor(&self, x: &Trajectory) -> Result<f64> {
        self.constraints.iter().map(|c| c.log_factor(x)).sum()
    }

    /// `log P[x]` up to the (never computed) overall normalization.
    /// `-inf` is a legal result at kernel nodes and outside truncation.
    pub fn log_weight(&self, x: &Trajectory) -> Result<f64> {
        let base = self.log_weight_unconstrained(x)?;
        if base == f64::NEG_INFINITY {
            return Ok(base);
        }
        Ok(base + self.constraint_log_factor(x)?)
    }

    /// Whether `x` lies within `tol` (max-norm) of some classical solution.
    pub fn classical_membership(&self, x: &Trajectory, tol: f64) -> Result<Membership> {
        self.check_trajectory(x)?;
        let (alpha, max_residual) = self.system.fit_alpha(x)?;
        Ok(Membership {
            member: max_residual <= tol,
            alpha,
            max_residual,
        })
    }

    /// Normalization constant of the exactly pinned classical density: the
    /// Jacobian of the pinned data with respect to α.
    pub fn pinned_normalization(&self) -> Result<f64> {
        if !self.is_classical() {
            return Err(Error::NonClassical(
                "pinned normalization is analytic only; NCQ normalizations cancel in Monte Carlo ratio estimators and are not computed"
                    .into(),
            ));
        }
        let (i, _, _) = self.exact_pins().ok_or_else(|| {
            Error::NonClassical(
                "pinned normalization needs exact position and velocity pins at one slice".into(),
            )
        })?;
        self.system.constraint_jacobian(self.grid.slice_time(i))
    }

    /// Log of the single-time marginal `ρ_t(x)` at slice `t_index`.
    pub fn log_marginal_density(&self, t_index: usize, x_point: &[f64]) -> Result<f64> {
        if self.is_classical() {
            return Err(Error::AnalyticModeOnly("evaluated pointwise"));
        }
        if !self.constraints.is_empty() {
            return Err(Error::Unsupported(
                "single-time marginals are only available without path constraints".into(),
            ));
        }
        self.grid.check_index(t_index)?;
        let dim = self.dim();
        if x_point.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "marginal point",
                expected: dim,
                got: x_point.len(),
            });
        }
        let k = &self.kernel;
        if let Some(center) = &self.center {
            let mut total = 0.0;
            for d in 0..dim {
                total += k.log_eval(x_point[d] - center[t_index * dim + d])?;
            }
            return Ok(total);
        }
        let (off, c0, c1) = self.basis[t_index];
        let mut total = 0.0;
        for block in &self.blocks {
            let mut terms = Vec::with_capacity(block.nodes.len());
            for (alpha, lw) in block.nodes.iter().zip(&block.log_weights) {
                let mut acc = *lw;
                for &d in &block.coords {
                    let xs = off + c0 * alpha[2 * d] + c1 * alpha[2 * d + 1];
                    acc += k.log_eval(x_point[d] - xs)?;
                }
                terms.push(acc);
            }
            total += log_sum_exp(&terms);
        }
        Ok(total)
    }

    /// Single-time marginal `ρ_t(x) = ∫dα μ(α) ∏_d δ_m(x^d − x_s^d(α; t))`.
    pub fn marginal_density(&self, t_index: usize, x_point: &[f64]) -> Result<f64> {
        self.log_marginal_density(t_index, x_point).map(f64::exp)
    }

    /// Centre and spread (standard deviation of `x_s`) of coordinate `d` at
    /// slice `i` under the α-measure. Used to size lattices and scan ranges.
    pub fn classical_spread(&self, i: usize, d: usize) -> Result<(f64, f64)> {
        let (mean, var) = match self.alpha_measure.moments() {
            Some(m) => m,
            None => {
                let alpha = self.classical_alpha()?.ok_or_else(|| {
                    Error::Config("flat alpha measure without exact pins".into())
                })?;
                let n = alpha.len();
                (alpha.0, vec![0.0; n])
            }
        };
        let (off, c0, c1) = self.basis[i];
        let center = off + c0 * mean[2 * d] + c1 * mean[2 * d + 1];
        let spread = (c0 * c0 * var[2 * d] + c1 * c1 * var[2 * d + 1]).sqrt();
        Ok((center, spread))
    }

    /// The α-quadrature as `(coords, nodes, normalized log weights)` per
    /// block. A point mass is a single block holding every coordinate.
    pub(crate) fn alpha_rules(&self) -> Vec<(Vec<usize>, Vec<Vec<f64>>, Vec<f64>)> {
        if let AlphaMeasure::PointMass { alpha } = &self.alpha_measure {
            return vec![((0..self.dim()).collect(), vec![alpha.0.clone()], vec![0.0])];
        }
        self.blocks
            .iter()
            .map(|b| (b.coords.clone(), b.nodes.clone(), b.log_weights.clone()))
            .collect()
    }

    /// `(off, c0, c1)` of the position basis at every slice.
    pub(crate) fn basis(&self) -> &[(f64, f64, f64)] {
        &self.basis
    }

    /// Draws integration constants from the α-measure.
    pub fn sample_alpha<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<AlphaVector> {
        use rand_distr::StandardNormal;
        match &self.alpha_measure {
            AlphaMeasure::PointMass { alpha } => Ok(alpha.clone()),
            AlphaMeasure::BoxUniform { lo, hi } => Ok(AlphaVector(
                lo.iter()
                    .zip(hi)
                    .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                    .collect(),
            )),
            AlphaMeasure::GaussianPrior { mean, sd } => Ok(AlphaVector(
                mean.iter()
                    .zip(sd)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )),
            AlphaMeasure::Lebesgue => self
                .classical_alpha()?
                .ok_or_else(|| Error::Config("flat alpha measure without exact pins".into())),
        }
    }

    /// Stable identity of the density for config digests.
    pub fn describe(&self) -> String {
        format!(
            "system={:?};grid={:?};kernel={:?};alpha={:?};constraints={:?};q={}",
            self.system, self.grid, self.kernel, self.alpha_measure, self.constraints, self.alpha_quadrature
        )
    }
}
