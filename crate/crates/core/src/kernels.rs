//! Delta sequences δ_m: log-space evaluation, exact sampling and interval
//! mass.
//!
//! Every family here is a positive semidefinite density that tends to the
//! Dirac delta as `m_delta → ∞`:
//!
//! * `Gaussian`: `δ_m(u) = m/√π · exp(−m²u²)`
//! * `Fejer`: `δ_m(u) = sin²(mu) / (π m u²)`, with nodes at `u = kπ/m`, `k ≠ 0`
//! * `TruncatedFejer`: the Fejér density restricted to `|u| ≤ R` (not
//!   renormalized, so its mass is below one)
//! * `ExactDelta`: the point mass itself, which is never evaluated pointwise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Number of Fejér half-periods integrated numerically on each side before
/// switching to the asymptotic tail expansion.
const FEJER_PANELS: f64 = 4096.0;

/// Gaussian densities are treated as zero beyond this many `1/m` units
/// (`exp(−1600)` underflows anyway).
const GAUSSIAN_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    ExactDelta,
    Gaussian,
    Fejer,
    TruncatedFejer,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::ExactDelta => "exact",
            Self::Gaussian => "gaussian",
            Self::Fejer => "fejer",
            Self::TruncatedFejer => "truncated_fejer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_delta" => Ok(Self::ExactDelta),
            "gaussian" => Ok(Self::Gaussian),
            "fejer" => Ok(Self::Fejer),
            "truncated_fejer" => Ok(Self::TruncatedFejer),
            other => Err(Error::InvalidKernel(format!(
                "unknown kernel family `{other}` (expected exact, gaussian, fejer or truncated_fejer)"
            ))),
        }
    }
}

/// A delta sequence with its sharpness parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    m_delta: f64,
    trunc_radius: Option<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, m_delta: f64, trunc_radius: Option<f64>) -> Result<Self> {
        if family != KernelFamily::ExactDelta && !(m_delta > 0.0 && m_delta.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "m_delta must be positive and finite, got {m_delta}"
            )));
        }
        match (family, trunc_radius) {
            (KernelFamily::TruncatedFejer, Some(r)) if r > 0.0 && r.is_finite() => {}
            (KernelFamily::TruncatedFejer, Some(r)) => {
                return Err(Error::InvalidKernel(format!(
                    "trunc_radius must be positive and finite, got {r}"
                )))
            }
            (KernelFamily::TruncatedFejer, None) => {
                return Err(Error::InvalidKernel(
                    "truncated_fejer requires trunc_radius".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidKernel(format!(
                    "trunc_radius only applies to truncated_fejer, not {}",
                    family.name()
                )))
            }
            (_, None) => {}
        }
        let m_delta = if family == KernelFamily::ExactDelta {
            f64::INFINITY
        } else {
            m_delta
        };
        Ok(Self {
            family,
            m_delta,
            trunc_radius,
        })
    }

    pub fn exact() -> Self {
        Self {
            family: KernelFamily::ExactDelta,
            m_delta: f64::INFINITY,
            trunc_radius: None,
        }
    }

    pub fn gaussian(m_delta: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, m_delta, None)
    }

    pub fn fejer(m_delta: f64) -> Result<Self> {
        Self::new(KernelFamily::Fejer, m_delta, None)
    }

    pub fn truncated_fejer(m_delta: f64, trunc_radius: f64) -> Result<Self> {
        Self::new(KernelFamily::TruncatedFejer, m_delta, Some(trunc_radius))
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Sharpness parameter; infinite for the exact delta.
    pub fn m_delta(&self) -> f64 {
        self.m_delta
    }

    pub fn trunc_radius(&self) -> Option<f64> {
        self.trunc_radius
    }

    pub fn is_exact(&self) -> bool {
        self.family == KernelFamily::ExactDelta
    }

    /// Same family (and truncation) with a different sharpness.
    pub fn with_m_delta(&self, m_delta: f64) -> Result<Self> {
        Self::new(self.family, m_delta, self.trunc_radius)
    }

    /// Whether `∫u²δ_m(u)du` is finite.
    pub fn has_finite_second_moment(&self) -> bool {
        self.family != KernelFamily::Fejer
    }

    /// Characteristic width: the standard deviation for the Gaussian, `1/m`
    /// for the Fejér families, zero for the exact delta.
    pub fn width(&self) -> f64 {
        match self.family {
            KernelFamily::ExactDelta => 0.0,
            KernelFamily::Gaussian => 1.0 / (self.m_delta * std::f64::consts::SQRT_2),
            KernelFamily::Fejer | KernelFamily::TruncatedFejer => 1.0 / self.m_delta,
        }
    }

    /// `log δ_m(u)`. Nodes and points outside the truncation radius give
    /// `-inf`, which is a legal value rather than an error.
    pub fn log_eval(&self, u: f64) -> Result<f64> {
        match self.family {
            KernelFamily::ExactDelta => Err(Error::AnalyticModeOnly("evaluated pointwise")),
            KernelFamily::Gaussian => Ok(self.gaussian_log(u)),
            KernelFamily::Fejer => Ok(self.fejer_log(u)),
            KernelFamily::TruncatedFejer => {
                if u.abs() > self.trunc_radius.unwrap_or(f64::INFINITY) {
                    Ok(f64::NEG_INFINITY)
                } else {
                    Ok(self.fejer_log(u))
                }
            }
        }
    }

    /// `δ_m(u)` in linear space.
    pub fn eval(&self, u: f64) -> Result<f64> {
        self.log_eval(u).map(f64::exp)
    }

    #[inline]
    fn gaussian_log(&self, u: f64) -> f64 {
        let m = self.m_delta;
        (m / PI.sqrt()).ln() - m * m * u * u
    }

    #[inline]
    fn fejer_log(&self, u: f64) -> f64 {
        let m = self.m_delta;
        let z = m * u;
        let log_peak = (m / PI).ln();
        if z == 0.0 {
            return log_peak;
        }
        let k = (z / PI).round();
        if k != 0.0 && (z - k * PI).abs() <= 4.0 * f64::EPSILON * z.abs() {
            return f64::NEG_INFINITY;
        }
        log_peak + 2.0 * sinc(z).abs().ln()
    }

    /// Draws `u ~ δ_m`. The exact delta always returns 0.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_counting(rng).0
    }

    /// Draws `u ~ δ_m` and reports how many envelope proposals were spent.
    ///
    /// The Fejér families use rejection from a two-piece envelope: the
    /// constant cap `m/π` on `|u| ≤ 1/m` and the inverse-square tail
    /// `1/(π m u²)` beyond, clipped to the truncation radius.
    pub fn sample_counting<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize) {
        let m = self.m_delta;
        match self.family {
            KernelFamily::ExactDelta => (0.0, 0),
            KernelFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                (z * self.width(), 1)
            }
            KernelFamily::Fejer | KernelFamily::TruncatedFejer => {
                let radius = self.trunc_radius.unwrap_or(f64::INFINITY);
                let cap = radius.min(1.0 / m);
                let cap_mass = 2.0 * cap * m / PI;
                let tail_mass = if radius > 1.0 / m {
                    2.0 / PI * (1.0 - 1.0 / (m * radius))
                } else {
                    0.0
                };
                let p_cap = cap_mass / (cap_mass + tail_mass);
                let v_min = 1.0 / (m * radius);
                let mut proposals = 0;
                loop {
                    proposals += 1;
                    let (u, accept) = if rng.random::<f64>() < p_cap {
                        let u = cap * (2.0 * rng.random::<f64>() - 1.0);
                        (u, sinc(m * u).powi(2))
                    } else {
                        // 1 - U lies in (0, 1], so |u| stays finite.
                        let v = v_min + (1.0 - v_min) * (1.0 - rng.random::<f64>());
                        let mag = 1.0 / (m * v);
                        let u = if rng.random::<bool>() { mag } else { -mag };
                        (u, (m * u).sin().powi(2))
                    };
                    if rng.random::<f64>() < accept && u.abs() <= radius {
                        return (u, proposals);
                    }
                }
            }
        }
    }

    /// `∫_a^b δ_m(u) du`; either bound may be infinite.
    pub fn mass(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::InvalidKernel(format!(
                "mass interval must satisfy a <= b, got ({a}, {b})"
            )));
        }
        let m = self.m_delta;
        match self.family {
            KernelFamily::ExactDelta => Ok(if a <= 0.0 && 0.0 <= b { 1.0 } else { 0.0 }),
            KernelFamily::Gaussian => {
                let cut = GAUSSIAN_CUTOFF / m;
                let (lo, hi) = (a.max(-cut), b.min(cut));
                if lo >= hi {
                    return Ok(0.0);
                }
                let mut breaks = vec![lo];
                for p in [-5.0 / m, -1.0 / m, 0.0, 1.0 / m, 5.0 / m] {
                    if p > lo && p < hi {
                        breaks.push(p);
                    }
                }
                breaks.push(hi);
                let r = quad::integrate_breaks(|u| self.gaussian_log(u).exp(), &breaks, 1e-15, 1e-13)?;
                Ok(r.value)
            }
            KernelFamily::Fejer => self.fejer_mass(a, b),
            KernelFamily::TruncatedFejer => {
                let r = self.trunc_radius.unwrap_or(f64::INFINITY);
                let (lo, hi) = (a.max(-r), b.min(r));
                if lo >= hi {
                    return Ok(0.0);
                }
                self.fejer_mass(lo, hi)
            }
        }
    }

    /// Total mass over the real line: 1 except for the truncated family.
    pub fn total_mass(&self) -> Result<f64> {
        self.mass(f64::NEG_INFINITY, f64::INFINITY)
    }

    fn fejer_mass(&self, a: f64, b: f64) -> Result<f64> {
        let m = self.m_delta;
        let edge = FEJER_PANELS * PI / m;
        let mut total = 0.0;
        let (lo, hi) = (a.max(-edge), b.min(edge));
        if lo < hi {
            let breaks = fejer_breaks(m, lo, hi);
            let r = quad::integrate_breaks(|u| self.fejer_log(u).exp(), &breaks, 1e-15, 1e-13)?;
            total += r.value;
        }
        if b > edge {
            total += fejer_tail(m, a.max(edge)) - fejer_tail(m, b);
        }
        if a < -edge {
            total += fejer_tail(m, (-b).max(edge)) - fejer_tail(m, -a);
        }
        Ok(total)
    }

    /// `∫ f(u) δ_m(u) du / ∫ δ_m(u) du` over the numerical support of the
    /// kernel. For the untruncated Fejér kernel the support is cut
    /// symmetrically at a large node, so odd moments stay exact but even
    /// moments of order ≥ 2 are meaningless.
    pub fn average<F: Fn(f64) -> f64>(&self, f: F, rel_tol: f64) -> Result<f64> {
        let m = self.m_delta;
        let (num, den) = match self.family {
            KernelFamily::ExactDelta => return Ok(f(0.0)),
            KernelFamily::Gaussian => {
                let cut = GAUSSIAN_CUTOFF / m;
                let breaks = [-cut, -5.0 / m, -1.0 / m, 0.0, 1.0 / m, 5.0 / m, cut];
                let w = |u: f64| self.gaussian_log(u).exp();
                (
                    quad::integrate_breaks(|u| f(u) * w(u), &breaks, 1e-300, rel_tol)?.value,
                    quad::integrate_breaks(w, &breaks, 1e-300, rel_tol)?.value,
                )
            }
            KernelFamily::Fejer | KernelFamily::TruncatedFejer => {
                let edge = self
                    .trunc_radius
                    .unwrap_or(f64::INFINITY)
                    .min(FEJER_PANELS * PI / m);
                let breaks = fejer_breaks(m, -edge, edge);
                let w = |u: f64| self.fejer_log(u).exp();
                (
                    quad::integrate_breaks(|u| f(u) * w(u), &breaks, 1e-300, rel_tol)?.value,
                    quad::integrate_breaks(w, &breaks, 1e-300, rel_tol)?.value,
                )
            }
        };
        Ok(num / den)
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.family, self.trunc_radius) {
            (KernelFamily::ExactDelta, _) => write!(f, "exact"),
            (fam, Some(r)) => write!(f, "{}(m_delta={}, R={})", fam.name(), self.m_delta, r),
            (fam, None) => write!(f, "{}(m_delta={})", fam.name(), self.m_delta),
        }
    }
}

/// `sin(z)/z` with the removable singularity filled in.
#[inline]
fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Breakpoints at every Fejér node inside `(lo, hi)`, plus the endpoints.
fn fejer_breaks(m: f64, lo: f64, hi: f64) -> Vec<f64> {
    let step = PI / m;
    let mut breaks = vec![lo];
    let mut k = (lo / step).floor() + 1.0;
    while k * step < hi {
        breaks.push(k * step);
        k += 1.0;
    }
    breaks.push(hi);
    breaks
}

/// Fejér mass beyond `s > 0` on one side, `(1/π)∫_{ms}^∞ sin²z/z² dz`, from
/// the large-argument expansion of the sine integral. Accurate to ~1e-20 for
/// `ms ≥ 4096π`.
fn fejer_tail(m: f64, s: f64) -> f64 {
    if s.is_infinite() {
        return 0.0;
    }
    let x = m * s;
    let y = 2.0 * x;
    let y2 = y * y;
    // π/2 − Si(y) = f(y) cos y + g(y) sin y
    let f = (1.0 - 2.0 / y2 + 24.0 / (y2 * y2)) / y;
    let g = (1.0 - 6.0 / y2 + 120.0 / (y2 * y2)) / y2;
    let aux = f * y.cos() + g * y.sin();
    (aux + x.sin().powi(2) / x) / PI
}
