//! Catalog of classical systems, each given by its general solution
//! `x_s(α; t)`.
//!
//! Every catalog entry is affine in the integration constants,
//! `x_s(α; t) = c(t) + Φ(t)·α`, which is what makes the pinning solve, the
//! constraint Jacobian and the classical-membership least squares exact.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AlphaVector, TimeGrid, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum SystemKind {
    /// `x = α₁ + α₂ t`
    FreeParticle1d,
    /// `x = α₁ sin(ωt) + α₂ cos(ωt)`
    HarmonicOscillator1d { omega: f64 },
    /// `x = α₁ + α₂ t + F t²/(2m̂)`
    ConstantForce1d { force: f64 },
    /// `xⁱ = α_{2i−1} + α_{2i} t`
    FreeParticle3d,
}

/// A classical system: its general solution and the particle mass `m̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSolution {
    #[serde(flatten)]
    kind: SystemKind,
    mass: f64,
}

/// Integration constants that only influence a subset of coordinates.
/// The α-integral of a path density factorizes over blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaBlock {
    pub coords: Vec<usize>,
    pub alphas: Vec<usize>,
}

/// One row of the `systems` listing.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub dimension: usize,
    pub n_constants: usize,
    pub params: &'static [&'static str],
    pub solution: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            id: "free_particle_1d",
            dimension: 1,
            n_constants: 2,
            params: &["mass"],
            solution: "x = a1 + a2 t",
        },
        CatalogEntry {
            id: "harmonic_oscillator_1d",
            dimension: 1,
            n_constants: 2,
            params: &["omega", "mass"],
            solution: "x = a1 sin(omega t) + a2 cos(omega t)",
        },
        CatalogEntry {
            id: "constant_force_1d",
            dimension: 1,
            n_constants: 2,
            params: &["force", "mass"],
            solution: "x = a1 + a2 t + force t^2 / (2 mass)",
        },
        CatalogEntry {
            id: "free_particle_3d",
            dimension: 3,
            n_constants: 6,
            params: &["mass"],
            solution: "x_i = a_(2i-1) + a_(2i) t",
        },
    ]
}

impl SystemSolution {
    pub fn new(kind: SystemKind, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config(format!("particle mass must be positive, got {mass}")));
        }
        match kind {
            SystemKind::HarmonicOscillator1d { omega } if !(omega > 0.0 && omega.is_finite()) => {
                return Err(Error::Config(format!("omega must be positive, got {omega}")))
            }
            SystemKind::ConstantForce1d { force } if !force.is_finite() => {
                return Err(Error::Config(format!("force must be finite, got {force}")))
            }
            _ => {}
        }
        Ok(Self { kind, mass })
    }

    pub fn free_particle_1d(mass: f64) -> Result<Self> {
        Self::new(SystemKind::FreeParticle1d, mass)
    }

    pub fn harmonic_oscillator_1d(omega: f64, mass: f64) -> Result<Self> {
        Self::new(SystemKind::HarmonicOscillator1d { omega }, mass)
    }

    pub fn constant_force_1d(force: f64, mass: f64) -> Result<Self> {
        Self::new(SystemKind::ConstantForce1d { force }, mass)
    }

    pub fn free_particle_3d(mass: f64) -> Result<Self> {
        Self::new(SystemKind::FreeParticle3d, mass)
    }

    /// Builds a catalog system from its id and a parameter map. `mass`
    /// defaults to 1; unknown parameters are rejected.
    pub fn from_id(id: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let entry = catalog()
            .into_iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::Config(format!("unknown system `{id}`")))?;
        if let Some(bad) = params.keys().find(|k| !entry.params.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "system `{id}` has no parameter `{bad}` (accepted: {})",
                entry.params.join(", ")
            )));
        }
        let get = |name: &str| {
            params
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("system `{id}` requires parameter `{name}`")))
        };
        let mass = params.get("mass").copied().unwrap_or(1.0);
        let kind = match id {
            "free_particle_1d" => SystemKind::FreeParticle1d,
            "harmonic_oscillator_1d" => SystemKind::HarmonicOscillator1d { omega: get("omega")? },
            "constant_force_1d" => SystemKind::ConstantForce1d { force: get("force")? },
            _ => SystemKind::FreeParticle3d,
        };
        Self::new(kind, mass)
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            SystemKind::FreeParticle1d => "free_particle_1d",
            SystemKind::HarmonicOscillator1d { .. } => "harmonic_oscillator_1d",
            SystemKind::ConstantForce1d { .. } => "constant_force_1d",
            SystemKind::FreeParticle3d => "free_particle_3d",
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Angular frequency, zero for systems without a restoring force.
    pub fn omega(&self) -> f64 {
        match self.kind {
            SystemKind::HarmonicOscillator1d { omega } => omega,
            _ => 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SystemKind::FreeParticle3d => 3,
            _ => 1,
        }
    }

    pub fn n_constants(&self) -> usize {
        2 * self.dim()
    }

    pub fn alpha_blocks(&self) -> Vec<AlphaBlock> {
        (0..self.dim())
            .map(|d| AlphaBlock {
                coords: vec![d],
                alphas: vec![2 * d, 2 * d + 1],
            })
            .collect()
    }

    /// Coefficients of the two α components driving coordinate `d`, plus the
    /// α-independent offset: `x^d = off + c₀ α_{2d} + c₁ α_{2d+1}`.
    #[inline]
    pub(crate) fn position_basis(&self, t: f64) -> (f64, f64, f64) {
        match self.kind {
            SystemKind::FreeParticle1d | SystemKind::FreeParticle3d => (0.0, 1.0, t),
            SystemKind::HarmonicOscillator1d { omega } => {
                let (s, c) = (omega * t).sin_cos();
                (0.0, s, c)
            }
            SystemKind::ConstantForce1d { force } => (0.5 * force / self.mass * t * t, 1.0, t),
        }
    }

    #[inline]
    pub(crate) fn velocity_basis(&self, t: f64) -> (f64, f64, f64) {
        match self.kind {
            SystemKind::FreeParticle1d | SystemKind::FreeParticle3d => (0.0, 0.0, 1.0),
            SystemKind::HarmonicOscillator1d { omega } => {
                let (s, c) = (omega * t).sin_cos();
                (0.0, omega * c, -omega * s)
            }
            SystemKind::ConstantForce1d { force } => (force / self.mass * t, 0.0, 1.0),
        }
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.n_constants() {
            return Err(Error::DimensionMismatch {
                what: "integration constants",
                expected: self.n_constants(),
                got: alpha.len(),
            });
        }
        Ok(())
    }

    /// Coordinate `d` of `x_s(α; t)`. `alpha` must have `n_constants` entries.
    #[inline]
    pub fn position_coord(&self, alpha: &[f64], t: f64, d: usize) -> f64 {
        let (off, c0, c1) = self.position_basis(t);
        off + c0 * alpha[2 * d] + c1 * alpha[2 * d + 1]
    }

    #[inline]
    pub fn velocity_coord(&self, alpha: &[f64], t: f64, d: usize) -> f64 {
        let (off, c0, c1) = self.velocity_basis(t);
        off + c0 * alpha[2 * d] + c1 * alpha[2 * d + 1]
    }

    pub fn eval(&self, alpha: &AlphaVector, t: f64) -> Result<Vec<f64>> {
        self.check_alpha(alpha.as_slice())?;
        Ok((0..self.dim())
            .map(|d| self.position_coord(alpha.as_slice(), t, d))
            .collect())
    }

    pub fn eval_velocity(&self, alpha: &AlphaVector, t: f64) -> Result<Vec<f64>> {
        self.check_alpha(alpha.as_slice())?;
        Ok((0..self.dim())
            .map(|d| self.velocity_coord(alpha.as_slice(), t, d))
            .collect())
    }

    /// Right-hand side of the equation of motion, `ẍ = a(x)`.
    pub fn acceleration(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            SystemKind::HarmonicOscillator1d { omega } => vec![-omega * omega * x[0]],
            SystemKind::ConstantForce1d { force } => vec![force / self.mass],
            _ => vec![0.0; self.dim()],
        }
    }

    /// Potential energy `V(x)`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        match self.kind {
            SystemKind::HarmonicOscillator1d { omega } => 0.5 * self.mass * omega * omega * x[0] * x[0],
            SystemKind::ConstantForce1d { force } => -force * x[0],
            _ => 0.0,
        }
    }

    /// Classical trajectory on `grid`.
    pub fn eval_solution(&self, alpha: &AlphaVector, grid: &TimeGrid) -> Result<Trajectory> {
        self.check_alpha(alpha.as_slice())?;
        let dim = self.dim();
        let mut values = Vec::with_capacity(grid.n_slices() * dim);
        for t in grid.times() {
            for d in 0..dim {
                values.push(self.position_coord(alpha.as_slice(), t, d));
            }
        }
        Trajectory::new(*grid, dim, values)
    }

    /// `∂(x(t0), ẋ(t0))/∂α` together with the α-independent offsets.
    /// Rows are the D positions followed by the D velocities.
    fn constraint_system(&self, t0: f64) -> (DMatrix<f64>, DVector<f64>) {
        let dim = self.dim();
        let n = self.n_constants();
        let mut m = DMatrix::zeros(2 * dim, n);
        let mut off = DVector::zeros(2 * dim);
        let (po, p0, p1) = self.position_basis(t0);
        let (vo, v0, v1) = self.velocity_basis(t0);
        for d in 0..dim {
            m[(d, 2 * d)] = p0;
            m[(d, 2 * d + 1)] = p1;
            off[d] = po;
            m[(dim + d, 2 * d)] = v0;
            m[(dim + d, 2 * d + 1)] = v1;
            off[dim + d] = vo;
        }
        (m, off)
    }

    fn singular(&self, t0: f64) -> Error {
        Error::SingularConstraint {
            system: self.id().to_string(),
            t0,
        }
    }

    /// `|det ∂(x(t0), ẋ(t0))/∂α|`: the normalization of the exactly pinned
    /// classical density.
    pub fn constraint_jacobian(&self, t0: f64) -> Result<f64> {
        let (m, _) = self.constraint_system(t0);
        let det = m.determinant().abs();
        let scale: f64 = m.row_iter().map(|r| r.norm()).product();
        if !(det > 1e-12 * scale) {
            return Err(self.singular(t0));
        }
        Ok(det)
    }

    /// Integration constants of the unique solution through `(x0, v0)` at `t0`.
    pub fn pinned_alpha(&self, x0: &[f64], v0: &[f64], t0: f64) -> Result<AlphaVector> {
        let dim = self.dim();
        for (what, v) in [("pinned position", x0), ("pinned velocity", v0)] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        self.constraint_jacobian(t0)?;
        let (m, off) = self.constraint_system(t0);
        let rhs = DVector::from_iterator(
            2 * dim,
            x0.iter().chain(v0).zip(off.iter()).map(|(v, o)| v - o),
        );
        let sol = m.lu().solve(&rhs).ok_or_else(|| self.singular(t0))?;
        Ok(AlphaVector(sol.iter().copied().collect()))
    }

    /// Least-squares integration constants for a sampled path, with the
    /// max-norm residual.
    pub fn fit_alpha(&self, x: &Trajectory) -> Result<(AlphaVector, f64)> {
        let dim = self.dim();
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "trajectory dimension",
                expected: dim,
                got: x.dim(),
            });
        }
        let n = self.n_constants();
        let rows = x.n_slices() * dim;
        let mut a = DMatrix::zeros(rows, n);
        let mut b = DVector::zeros(rows);
        for (i, t) in x.grid().times().enumerate() {
            let (off, c0, c1) = self.position_basis(t);
            for d in 0..dim {
                let r = i * dim + d;
                a[(r, 2 * d)] = c0;
                a[(r, 2 * d + 1)] = c1;
                b[r] = x.at(i, d) - off;
            }
        }
        let svd = a.clone().svd(true, true);
        let sol = svd
            .solve(&b, 1e-12)
            .map_err(|e| Error::Unsupported(format!("least squares failed: {e}")))?;
        let resid = (&a * &sol - &b).amax();
        Ok((AlphaVector(sol.iter().copied().collect()), resid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ho(omega: f64) -> SystemSolution {
        SystemSolution::harmonic_oscillator_1d(omega, 1.0).unwrap()
    }

    fn all_systems() -> Vec<SystemSolution> {
        vec![
            SystemSolution::free_particle_1d(1.3).unwrap(),
            ho(2.0),
            SystemSolution::constant_force_1d(-9.8, 2.0).unwrap(),
            SystemSolution::free_particle_3d(0.5).unwrap(),
        ]
    }

    fn alpha_for(sys: &SystemSolution, seed: f64) -> AlphaVector {
        AlphaVector((0..sys.n_constants()).map(|k| (seed + k as f64).sin() * 2.0).collect())
    }

    #[test]
    fn eval_examples() {
        let a = AlphaVector(vec![0.0, 1.0]);
        assert_eq!(ho(2.0).eval(&a, 0.0).unwrap(), vec![1.0]);
        let fp = SystemSolution::free_particle_1d(1.0).unwrap();
        assert_eq!(fp.eval(&AlphaVector(vec![1.0, 2.0]), 3.0).unwrap(), vec![7.0]);
        assert!(fp.eval(&AlphaVector(vec![1.0]), 0.0).is_err());
    }

    #[test]
    fn ho_satisfies_equation_of_motion() {
        let sys = ho(2.0);
        let grid = TimeGrid::new(0.0, PI, 201).unwrap();
        let x = sys.eval_solution(&AlphaVector(vec![0.0, 1.0]), &grid).unwrap();
        let dt = grid.dt();
        // Five-point second difference, O(dt⁴).
        for i in 2..199 {
            let acc = (-x.at(i + 2, 0) + 16.0 * x.at(i + 1, 0) - 30.0 * x.at(i, 0)
                + 16.0 * x.at(i - 1, 0)
                - x.at(i - 2, 0))
                / (12.0 * dt * dt);
            let resid = acc - sys.acceleration(x.slice(i))[0];
            assert!(resid.abs() < 1e-4, "slice {i}: {resid}");
        }
    }

    #[test]
    fn solutions_satisfy_their_ode_and_velocity_is_derivative() {
        for sys in all_systems() {
            let alpha = alpha_for(&sys, 0.3);
            for t in [0.0f64, 0.7, 2.0, -1.5] {
                let h = 1e-5 * f64::max(1.0, t.abs());
                let xp = sys.eval(&alpha, t + h).unwrap();
                let xm = sys.eval(&alpha, t - h).unwrap();
                let x = sys.eval(&alpha, t).unwrap();
                let v = sys.eval_velocity(&alpha, t).unwrap();
                let a = sys.acceleration(&x);
                for d in 0..sys.dim() {
                    let fd = (xp[d] - xm[d]) / (2.0 * h);
                    assert!((fd - v[d]).abs() <= 1e-6 * v[d].abs().max(1.0), "{}", sys.id());
                    let h2 = 1e-3;
                    let xpp = sys.eval(&alpha, t + h2).unwrap()[d];
                    let xmm = sys.eval(&alpha, t - h2).unwrap()[d];
                    let acc = (xpp - 2.0 * x[d] + xmm) / (h2 * h2);
                    assert!((acc - a[d]).abs() < 1e-4 * a[d].abs().max(1.0), "{}", sys.id());
                }
            }
        }
    }

    #[test]
    fn pinned_alpha_examples() {
        let a = ho(2.0).pinned_alpha(&[1.0], &[0.0], 0.0).unwrap();
        assert_eq!(a.0, vec![0.0, 1.0]);
        let a = ho(2.0).pinned_alpha(&[0.0], &[2.0], 0.0).unwrap();
        assert!((a.0[0] - 1.0).abs() < 1e-15 && a.0[1].abs() < 1e-15);
        let fp = SystemSolution::free_particle_1d(1.0).unwrap();
        assert_eq!(fp.pinned_alpha(&[5.0], &[-1.0], 0.0).unwrap().0, vec![5.0, -1.0]);
        assert!(fp.pinned_alpha(&[5.0, 1.0], &[-1.0], 0.0).is_err());
    }

    #[test]
    fn jacobian_examples() {
        assert!((ho(2.0).constraint_jacobian(0.0).unwrap() - 2.0).abs() < 1e-15);
        for t0 in [0.0, 0.7, 2.0] {
            assert!((ho(3.0).constraint_jacobian(t0).unwrap() - 3.0).abs() < 1e-12);
        }
        let fp = SystemSolution::free_particle_1d(1.0).unwrap();
        assert_eq!(fp.constraint_jacobian(0.0).unwrap(), 1.0);
    }

    /// Central-difference Jacobian of (x(t0), ẋ(t0)) with respect to α.
    fn numerical_jacobian(sys: &SystemSolution, t0: f64) -> f64 {
        let n = sys.n_constants();
        let dim = sys.dim();
        let base = vec![0.4; n];
        let mut jac = DMatrix::zeros(2 * dim, n);
        let h = 1e-6;
        for k in 0..n {
            let mut ap = base.clone();
            let mut am = base.clone();
            ap[k] += h;
            am[k] -= h;
            let (ap, am) = (AlphaVector(ap), AlphaVector(am));
            let xp = sys.eval(&ap, t0).unwrap();
            let xm = sys.eval(&am, t0).unwrap();
            let vp = sys.eval_velocity(&ap, t0).unwrap();
            let vm = sys.eval_velocity(&am, t0).unwrap();
            for d in 0..dim {
                jac[(d, k)] = (xp[d] - xm[d]) / (2.0 * h);
                jac[(dim + d, k)] = (vp[d] - vm[d]) / (2.0 * h);
            }
        }
        jac.determinant().abs()
    }

    #[test]
    fn jacobian_matches_finite_differences_and_is_time_independent() {
        for sys in all_systems() {
            let reference = sys.constraint_jacobian(0.0).unwrap();
            for t0 in [0.0, 0.7, 2.0, -3.1] {
                let j = sys.constraint_jacobian(t0).unwrap();
                assert!(((j - reference) / reference).abs() < 1e-8, "{} at {t0}", sys.id());
                let num = numerical_jacobian(&sys, t0);
                assert!(((num - j) / j).abs() < 1e-6, "{}: {num} vs {j}", sys.id());
            }
        }
    }

    #[test]
    fn superposition_for_linear_systems() {
        for sys in [SystemSolution::free_particle_1d(1.0).unwrap(), ho(1.7)] {
            let a = alpha_for(&sys, 0.1);
            let b = alpha_for(&sys, 2.2);
            let ab = AlphaVector(a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect());
            for t in [0.0, 0.5, 3.0] {
                let lhs = sys.eval(&ab, t).unwrap()[0];
                let rhs = sys.eval(&a, t).unwrap()[0] + sys.eval(&b, t).unwrap()[0];
                assert!((lhs - rhs).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn from_id_validates_parameters() {
        let mut p = BTreeMap::new();
        p.insert("omega".to_string(), 2.0);
        assert_eq!(SystemSolution::from_id("harmonic_oscillator_1d", &p).unwrap(), ho(2.0));
        assert!(SystemSolution::from_id("free_particle_1d", &p).is_err());
        assert!(SystemSolution::from_id("pendulum", &p).is_err());
        assert!(SystemSolution::from_id("harmonic_oscillator_1d", &BTreeMap::new()).is_err());
        p.insert("omega".to_string(), -1.0);
        assert!(SystemSolution::from_id("harmonic_oscillator_1d", &p).is_err());
    }

    #[test]
    fn fit_recovers_constants() {
        let grid = TimeGrid::new(0.0, 2.0, 17).unwrap();
        for sys in all_systems() {
            let alpha = alpha_for(&sys, 1.0);
            let x = sys.eval_solution(&alpha, &grid).unwrap();
            let (fit, resid) = sys.fit_alpha(&x).unwrap();
            assert!(resid < 1e-12);
            for (a, b) in fit.0.iter().zip(&alpha.0) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn pinning_round_trip(x0 in -10.0f64..10.0, v0 in -10.0f64..10.0, t0 in -5.0f64..5.0, omega in 0.1f64..5.0) {
            for sys in [ho(omega), SystemSolution::constant_force_1d(omega, 1.5).unwrap(), SystemSolution::free_particle_1d(1.0).unwrap()] {
                let a = sys.pinned_alpha(&[x0], &[v0], t0).unwrap();
                let x = sys.eval(&a, t0).unwrap()[0];
                let v = sys.eval_velocity(&a, t0).unwrap()[0];
                let scale = x0.abs() + v0.abs() + 1.0;
                proptest::prop_assert!((x - x0).abs() <= 1e-12 * scale);
                proptest::prop_assert!((v - v0).abs() <= 1e-12 * scale * omega.max(1.0));
            }
        }
    }
}
