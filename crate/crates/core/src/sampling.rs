//! Trajectory samplers for path densities.
//!
//! * [`ancestral_sample`] draws exactly: α from its measure, then every
//!   slice and coordinate independently from the kernel around `x_s(α; tᵢ)`.
//! * [`metropolis_sample`] runs random-walk Metropolis chains over trajectory
//!   space, needed once path constraints break the product structure.
//! * [`importance_reweight`] turns an ancestral batch into a weighted batch
//!   for the constrained density.
//!
//! All randomness flows from [`crate::rng::stream_rng`], so a batch is a pure
//! function of the density and the [`SamplerConfig`].

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{ConstraintKind, PathDensity, Softness};
use crate::error::{Error, Result};
use crate::model::{AlphaVector, Trajectory};
use crate::rng::{stream_rng, streams};
use crate::stats;

/// Fraction of Metropolis proposals that shift the whole path rigidly; the
/// rest move a single slice.
pub const SHIFT_PROPOSAL_FRACTION: f64 = 0.1;

/// Proposals without a single acceptance before a chain gives up.
const MIN_STALL_WINDOW: usize = 1000;

/// Below this acceptance rate a run is flagged as possibly non-ergodic.
pub const LOW_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    Ancestral,
    MetropolisPath,
    ImportanceFromAncestral,
}

impl SamplerMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ancestral" => Ok(Self::Ancestral),
            "metropolis" | "metropolis_path" => Ok(Self::MetropolisPath),
            "importance" | "importance_from_ancestral" => Ok(Self::ImportanceFromAncestral),
            other => Err(Error::Config(format!(
                "unknown sampler method `{other}` (expected ancestral, metropolis or importance)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    /// Total retained samples (split evenly across Metropolis chains).
    pub n_samples: usize,
    /// Metropolis sweeps discarded per chain. One sweep is `n_slices`
    /// proposals and yields one retained sample.
    pub burn_in: usize,
    /// Random-walk step; `None` picks the kernel width scale `1/m_delta`.
    pub proposal_step: Option<f64>,
    pub n_chains: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn ancestral(n_samples: usize, seed: u64) -> Self {
        Self {
            method: SamplerMethod::Ancestral,
            n_samples,
            burn_in: 0,
            proposal_step: None,
            n_chains: 1,
            seed,
        }
    }

    pub fn metropolis(n_samples: usize, burn_in: usize, n_chains: usize, seed: u64) -> Self {
        Self {
            method: SamplerMethod::MetropolisPath,
            n_samples,
            burn_in,
            proposal_step: None,
            n_chains,
            seed,
        }
    }

    pub fn importance(n_samples: usize, seed: u64) -> Self {
        Self {
            method: SamplerMethod::ImportanceFromAncestral,
            ..Self::ancestral(n_samples, seed)
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.proposal_step = Some(step);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if let Some(step) = self.proposal_step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Config(format!("proposal_step must be positive, got {step}")));
            }
        }
        Ok(())
    }
}

/// Default Metropolis step: one kernel scale `1/m_delta`.
pub fn default_proposal_step(density: &PathDensity) -> f64 {
    1.0 / density.kernel().m_delta()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub acceptance_rate: Option<f64>,
    pub ess: f64,
    /// Per chain: mean over retained samples of the path-averaged first
    /// coordinate.
    pub per_chain_means: Vec<f64>,
    /// Retained samples per chain, in chain order (one entry for exact
    /// samplers).
    pub chain_lengths: Vec<usize>,
    /// Set when acceptance fell below [`LOW_ACCEPTANCE`].
    pub low_acceptance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub trajectories: Vec<Trajectory>,
    pub weights: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub method: SamplerMethod,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn has_uniform_weights(&self) -> bool {
        self.weights.windows(2).all(|w| w[0] == w[1])
    }

    /// Chains as contiguous index ranges into `trajectories`.
    pub fn chain_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.diagnostics
            .chain_lengths
            .iter()
            .map(|&n| {
                let r = start..start + n;
                start += n;
                r
            })
            .collect()
    }
}

fn path_mean(x: &Trajectory) -> f64 {
    (0..x.n_slices()).map(|i| x.at(i, 0)).sum::<f64>() / x.n_slices() as f64
}

/// Exact i.i.d. draws from an unconstrained density (or the classical path
/// for exactly pinned densities).
pub fn ancestral_sample(density: &PathDensity, cfg: &SamplerConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let exact_pins_only = density.is_classical()
        && density.constraints().iter().all(|c| c.softness == Softness::Exact);
    if !density.constraints().is_empty() && !exact_pins_only {
        return Err(Error::Unsupported(
            "ancestral sampling cannot honour path constraints; use MetropolisPath or ImportanceFromAncestral"
                .into(),
        ));
    }
    let classical = if density.is_classical() && !density.constraints().is_empty() {
        Some(density.classical_alpha()?.ok_or_else(|| {
            Error::Config("exact pins must fix both position and velocity at one slice".into())
        })?)
    } else {
        None
    };
    let system = *density.system();
    let grid = *density.grid();
    let kernel = *density.kernel();
    let dim = system.dim();
    let trajectories = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, streams::ANCESTRAL, i as u64);
            let alpha = match &classical {
                Some(a) => a.clone(),
                None => density.sample_alpha(&mut rng)?,
            };
            let mut values = Vec::with_capacity(grid.n_slices() * dim);
            for t in grid.times() {
                for d in 0..dim {
                    values.push(system.position_coord(alpha.as_slice(), t, d) + kernel.sample(&mut rng));
                }
            }
            Ok(Trajectory::from_parts(grid, dim, values))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = trajectories.iter().map(path_mean).sum::<f64>() / trajectories.len() as f64;
    Ok(SampleBatch {
        weights: vec![1.0; trajectories.len()],
        diagnostics: Diagnostics {
            acceptance_rate: None,
            ess: trajectories.len() as f64,
            per_chain_means: vec![mean],
            chain_lengths: vec![trajectories.len()],
            low_acceptance: false,
        },
        trajectories,
        method: SamplerMethod::Ancestral,
    })
}

/// Metropolis acceptance probability `min(1, exp(Δ log w))`; moves from a
/// `-inf` state are always accepted, moves into one never.
pub fn acceptance_probability(log_current: f64, log_proposed: f64) -> f64 {
    if log_proposed == f64::NEG_INFINITY {
        0.0
    } else if log_current == f64::NEG_INFINITY {
        1.0
    } else {
        (log_proposed - log_current).exp().min(1.0)
    }
}

/// Starting α for a chain: the distinguished classical path. Soft position
/// and velocity pins at one slice are folded in when present.
fn initial_alpha(density: &PathDensity) -> Result<AlphaVector> {
    let mut pos = None;
    let mut vel = None;
    for c in density.constraints() {
        match &c.kind {
            ConstraintKind::PositionAt { t_index, target } => pos = Some((*t_index, target.clone())),
            ConstraintKind::StencilVelocityAt { t_index, target } => vel = Some((*t_index, target.clone())),
        }
    }
    if let (Some((i, x0)), Some((j, v0))) = (&pos, &vel) {
        if i == j {
            return density
                .system()
                .pinned_alpha(x0, v0, density.grid().slice_time(*i));
        }
    }
    match density.classical_alpha()? {
        Some(alpha) => Ok(alpha),
        None => centre_alpha(density),
    }
}

fn centre_alpha(density: &PathDensity) -> Result<AlphaVector> {
    use crate::density::AlphaMeasure;
    Ok(match density.alpha_measure() {
        AlphaMeasure::PointMass { alpha } => alpha.clone(),
        AlphaMeasure::BoxUniform { lo, hi } => {
            AlphaVector(lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect())
        }
        AlphaMeasure::GaussianPrior { mean, .. } => AlphaVector(mean.clone()),
        AlphaMeasure::Lebesgue => {
            return Err(Error::Initialization("flat alpha measure has no centre".into()))
        }
    })
}

/// One Metropolis chain. Exposed so callers can verify that merged runs are
/// plain concatenations of independent chains.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub samples: Vec<Trajectory>,
    pub accepted: usize,
    pub proposed: usize,
}

pub fn metropolis_chain(
    density: &PathDensity,
    cfg: &SamplerConfig,
    chain: usize,
    n_keep: usize,
) -> Result<ChainRun> {
    if density.is_classical() {
        return Err(Error::AnalyticModeOnly("sampled by Metropolis"));
    }
    let step = cfg.proposal_step.unwrap_or_else(|| default_proposal_step(density));
    let alpha = initial_alpha(density)?;
    let mut x = density.system().eval_solution(&alpha, density.grid())?;
    let mut lw = density.log_weight(&x)?;
    if !lw.is_finite() {
        return Err(Error::Initialization(format!(
            "classical starting path has log weight {lw}"
        )));
    }
    let n_slices = x.n_slices();
    let dim = x.dim();
    let window = MIN_STALL_WINDOW.max(50 * n_slices);
    let mut since_accept = 0usize;
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut samples = Vec::with_capacity(n_keep);
    let mut saved = vec![0.0; n_slices * dim];
    let stream = streams::METROPOLIS ^ chain as u64;
    for sweep in 0..cfg.burn_in + n_keep {
        let mut rng = stream_rng(cfg.seed, stream, sweep as u64);
        for _ in 0..n_slices {
            saved.copy_from_slice(x.values());
            if rng.random::<f64>() < SHIFT_PROPOSAL_FRACTION {
                for d in 0..dim {
                    let shift = step * rng.sample::<f64, _>(StandardNormal);
                    for i in 0..n_slices {
                        x.values_mut()[i * dim + d] += shift;
                    }
                }
            } else {
                let i = rng.random_range(0..n_slices);
                for d in 0..dim {
                    x.values_mut()[i * dim + d] += step * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let proposal_lw = density.log_weight(&x)?;
            proposed += 1;
            if rng.random::<f64>() < acceptance_probability(lw, proposal_lw) {
                lw = proposal_lw;
                accepted += 1;
                since_accept = 0;
            } else {
                x.values_mut().copy_from_slice(&saved);
                since_accept += 1;
                if since_accept >= window {
                    return Err(Error::StepSize { step, window });
                }
            }
        }
        if sweep >= cfg.burn_in {
            samples.push(x.clone());
        }
    }
    Ok(ChainRun {
        samples,
        accepted,
        proposed,
    })
}

/// Random-walk Metropolis over trajectories, `n_chains` chains in parallel,
/// merged in chain order.
pub fn metropolis_sample(density: &PathDensity, cfg: &SamplerConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let per_chain = cfg.n_samples.div_ceil(cfg.n_chains);
    let runs = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| {
            let keep = per_chain.min(cfg.n_samples - (c * per_chain).min(cfg.n_samples));
            metropolis_chain(density, cfg, c, keep)
        })
        .collect::<Result<Vec<_>>>()?;
    let accepted: usize = runs.iter().map(|r| r.accepted).sum();
    let proposed: usize = runs.iter().map(|r| r.proposed).sum();
    let rate = accepted as f64 / proposed.max(1) as f64;
    let traces: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.samples.iter().map(path_mean).collect())
        .collect();
    let trace_refs: Vec<&[f64]> = traces.iter().filter(|t| !t.is_empty()).map(|t| t.as_slice()).collect();
    let ess = if trace_refs.is_empty() {
        0.0
    } else {
        stats::chains_mean_se(&trace_refs).2
    };
    let per_chain_means = traces
        .iter()
        .map(|t| if t.is_empty() { f64::NAN } else { stats::mean(t) })
        .collect();
    let chain_lengths = runs.iter().map(|r| r.samples.len()).collect();
    let trajectories: Vec<Trajectory> = runs.into_iter().flat_map(|r| r.samples).collect();
    Ok(SampleBatch {
        weights: vec![1.0; trajectories.len()],
        diagnostics: Diagnostics {
            acceptance_rate: Some(rate),
            ess,
            per_chain_means,
            chain_lengths,
            low_acceptance: rate < LOW_ACCEPTANCE,
        },
        trajectories,
        method: SamplerMethod::MetropolisPath,
    })
}

/// Multiplies batch weights by the path-constraint factors of `density`.
pub fn importance_reweight(batch: &SampleBatch, density: &PathDensity) -> Result<SampleBatch> {
    if let Some(first) = batch.trajectories.first() {
        if first.grid() != density.grid() || first.dim() != density.dim() {
            return Err(Error::InvalidTrajectory(
                "batch was drawn on a different grid or dimension".into(),
            ));
        }
    }
    let log_factors = batch
        .trajectories
        .par_iter()
        .map(|x| density.constraint_log_factor(x))
        .collect::<Result<Vec<_>>>()?;
    let max = log_factors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights(format!(
            "{} samples, all outside the constraint support",
            batch.len()
        )));
    }
    let weights: Vec<f64> = batch
        .weights
        .iter()
        .zip(&log_factors)
        .map(|(w, lf)| w * (lf - max).exp())
        .collect();
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::DegenerateWeights("weights sum to zero".into()));
    }
    let ess = stats::kish_ess(&weights);
    let mut diagnostics = batch.diagnostics.clone();
    diagnostics.ess = ess;
    Ok(SampleBatch {
        trajectories: batch.trajectories.clone(),
        weights,
        diagnostics,
        method: if density.constraints().is_empty() {
            batch.method
        } else {
            SamplerMethod::ImportanceFromAncestral
        },
    })
}

/// Dispatches on `cfg.method`.
pub fn sample(density: &PathDensity, cfg: &SamplerConfig) -> Result<SampleBatch> {
    match cfg.method {
        SamplerMethod::Ancestral => ancestral_sample(density, cfg),
        SamplerMethod::MetropolisPath => metropolis_sample(density, cfg),
        SamplerMethod::ImportanceFromAncestral => {
            let base = ancestral_sample(&density.without_constraints(), cfg)?;
            importance_reweight(&base, density)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{AlphaMeasure, PathConstraint};
    use crate::kernels::KernelSpec;
    use crate::model::TimeGrid;
    use crate::systems::SystemSolution;
    use std::f64::consts::PI;

    fn ho(kernel: KernelSpec, n_slices: usize) -> PathDensity {
        let sys = SystemSolution::harmonic_oscillator_1d(2.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, PI, n_slices).unwrap();
        PathDensity::new(sys, grid, kernel, AlphaMeasure::point(vec![0.0, 1.0])).unwrap()
    }

    #[test]
    fn exact_delta_point_mass_reproduces_the_classical_path() {
        let d = ho(KernelSpec::exact(), 9);
        let batch = ancestral_sample(&d, &SamplerConfig::ancestral(20, 1)).unwrap();
        let cl = d.classical_trajectory().unwrap().unwrap();
        assert!(batch.trajectories.iter().all(|x| x == &cl));
    }

    #[test]
    fn ancestral_slice_means_are_centred() {
        let d = ho(KernelSpec::gaussian(2.0).unwrap(), 9);
        let n = 20_000;
        let batch = ancestral_sample(&d, &SamplerConfig::ancestral(n, 42)).unwrap();
        let cl = d.classical_trajectory().unwrap().unwrap();
        let se = 1.0 / (2.0 * 2.0 * (n as f64).sqrt());
        for i in 0..9 {
            let mean = batch.trajectories.iter().map(|x| x.at(i, 0)).sum::<f64>() / n as f64;
            assert!((mean - cl.at(i, 0)).abs() < 3.0 * se * 2f64.sqrt(), "slice {i}");
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let d = ho(KernelSpec::fejer(1.5).unwrap(), 7);
        let a = ancestral_sample(&d, &SamplerConfig::ancestral(300, 9)).unwrap();
        let b = ancestral_sample(&d, &SamplerConfig::ancestral(300, 9)).unwrap();
        assert_eq!(a, b);
        let c = ancestral_sample(&d, &SamplerConfig::ancestral(300, 10)).unwrap();
        assert_ne!(a, c);
        let cfg = SamplerConfig::metropolis(200, 50, 2, 3);
        let g = ho(KernelSpec::gaussian(1.0).unwrap(), 7);
        assert_eq!(metropolis_sample(&g, &cfg).unwrap(), metropolis_sample(&g, &cfg).unwrap());
    }

    #[test]
    fn ancestral_refuses_constraints() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let d = ho(g, 5)
            .with_constraint(PathConstraint::position(0, vec![1.0], Softness::Kernel(g)))
            .unwrap();
        assert!(matches!(
            ancestral_sample(&d, &SamplerConfig::ancestral(10, 0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn metropolis_errors() {
        let d = ho(KernelSpec::exact(), 5);
        assert!(metropolis_sample(&d, &SamplerConfig::metropolis(10, 0, 1, 0)).is_err());
        // A huge step against a sharp kernel never gets accepted.
        let sharp = ho(KernelSpec::gaussian(50.0).unwrap(), 5);
        let cfg = SamplerConfig::metropolis(400, 0, 1, 0).with_step(1e3);
        assert!(matches!(metropolis_sample(&sharp, &cfg), Err(Error::StepSize { .. })));
        // A starting path on a node of the soft pin cannot be initialized.
        let f = KernelSpec::fejer(1.0).unwrap();
        let pinned = ho(f, 5)
            .with_constraint(PathConstraint::position(0, vec![1.0 + PI], Softness::Kernel(f)))
            .unwrap();
        assert!(matches!(
            metropolis_sample(&pinned, &SamplerConfig::metropolis(10, 0, 1, 0)),
            Err(Error::Initialization(_))
        ));
    }

    #[test]
    fn acceptance_rule() {
        assert_eq!(acceptance_probability(0.0, 1.0), 1.0);
        assert!((acceptance_probability(0.0, -1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(acceptance_probability(0.0, f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn reweighting() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let d = ho(g, 5);
        let batch = ancestral_sample(&d, &SamplerConfig::ancestral(4000, 5)).unwrap();
        let same = importance_reweight(&batch, &d).unwrap();
        assert_eq!(same.weights, batch.weights);
        assert_eq!(same.diagnostics.ess, 4000.0);

        let soft = Softness::Kernel(KernelSpec::gaussian(1.0).unwrap());
        let near = d.clone().with_constraint(PathConstraint::position(0, vec![1.0], soft)).unwrap();
        let r = importance_reweight(&batch, &near).unwrap();
        assert!(r.diagnostics.ess / 4000.0 > 0.5, "ess {}", r.diagnostics.ess);

        // Ten kernel widths away.
        let far_target = 1.0 + 10.0 * g.width();
        let far = d.clone().with_constraint(PathConstraint::position(0, vec![far_target], soft)).unwrap();
        let r = importance_reweight(&batch, &far).unwrap();
        assert!(r.diagnostics.ess / 4000.0 < 1e-2, "ess {}", r.diagnostics.ess);

        let hard = Softness::Kernel(KernelSpec::truncated_fejer(1.0, 0.1).unwrap());
        let impossible = d.with_constraint(PathConstraint::position(0, vec![50.0], hard)).unwrap();
        assert!(matches!(importance_reweight(&batch, &impossible), Err(Error::DegenerateWeights(_))));
    }

    #[test]
    fn merged_chains_are_concatenated_independent_chains() {
        let d = ho(KernelSpec::gaussian(1.0).unwrap(), 6);
        let cfg = SamplerConfig::metropolis(400, 20, 4, 17);
        let merged = metropolis_sample(&d, &cfg).unwrap();
        let mut solo: Vec<Trajectory> = Vec::new();
        for c in 0..4 {
            solo.extend(metropolis_chain(&d, &cfg, c, 100).unwrap().samples);
        }
        assert_eq!(merged.trajectories, solo);
        // Summing chain contributions in reverse order gives the same mean.
        let forward: f64 = merged.trajectories.iter().map(|x| x.at(2, 0)).sum::<f64>() / 400.0;
        let reverse: f64 = merged.chain_ranges().iter().rev()
            .map(|r| merged.trajectories[r.clone()].iter().map(|x| x.at(2, 0)).sum::<f64>())
            .sum::<f64>() / 400.0;
        assert!((forward - reverse).abs() < 1e-12);
    }
}
