//! Shared domain types: time grids, trajectories, integration constants and
//! expectation records. Nothing here computes beyond validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform discretization of `[t_start, t_end]` into `n_slices` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_slices: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_slices: usize) -> Result<Self> {
        if !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidGrid("endpoints must be finite".into()));
        }
        if t_end <= t_start {
            return Err(Error::InvalidGrid(format!(
                "t_end ({t_end}) must exceed t_start ({t_start})"
            )));
        }
        if n_slices < 2 {
            return Err(Error::InvalidGrid(format!(
                "n_slices must be at least 2, got {n_slices}"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            n_slices,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_slices - 1) as f64
    }

    /// Time of slice `i`. The final slice returns `t_end` exactly.
    pub fn slice_time(&self, i: usize) -> f64 {
        assert!(i < self.n_slices, "slice index {i} out of range");
        if i + 1 == self.n_slices {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_slices).map(|i| self.slice_time(i))
    }

    /// Index of the slice sitting at time `t`, if any slice is within a few
    /// ulps of it.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let pos = (t - self.t_start) / self.dt();
        let i = pos.round();
        let tol = 1e-9 * (1.0 + pos.abs());
        if i < 0.0 || i as usize >= self.n_slices || (pos - i).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "time {t} is not a slice of the grid [{}, {}] with {} slices",
                self.t_start, self.t_end, self.n_slices
            )));
        }
        Ok(i as usize)
    }

    /// Index of the middle slice (rounded down for even slice counts).
    pub fn mid_index(&self) -> usize {
        (self.n_slices - 1) / 2
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_slices {
            return Err(Error::Config(format!(
                "slice index {i} out of range for {} slices",
                self.n_slices
            )));
        }
        Ok(())
    }
}

/// Sampled path: `n_slices × dim` positions, row-major by slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidTrajectory("dimension must be positive".into()));
        }
        if values.len() != grid.n_slices() * dim {
            return Err(Error::InvalidTrajectory(format!(
                "expected {} values ({} slices × {dim}), got {}",
                grid.n_slices() * dim,
                grid.n_slices(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrajectory(format!(
                "non-finite entry {} at slice {}, coordinate {}",
                values[bad],
                bad / dim,
                bad % dim
            )));
        }
        Ok(Self { grid, dim, values })
    }

    /// Builds a trajectory from values the caller already knows are finite.
    pub(crate) fn from_parts(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_slices() * dim);
        Self { grid, dim, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn n_slices(&self) -> usize {
        self.grid.n_slices()
    }

    /// Position vector at slice `i`.
    pub fn slice(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn at(&self, i: usize, coord: usize) -> f64 {
        self.values[i * self.dim + coord]
    }
}

/// Integration constants α₁…αₙ of a general solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaVector(pub Vec<f64>);

impl AlphaVector {
    pub fn new(components: Vec<f64>) -> Self {
        Self(components)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for AlphaVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Estimate of an expectation value with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub estimate: f64,
    /// Zero only for analytic (classical) evaluations.
    pub std_error: f64,
    pub n_samples: usize,
    pub ess: f64,
    pub seed: u64,
    pub config_digest: String,
    pub n_slices: usize,
    /// Velocity stencil used by the observable, when it has one.
    pub stencil: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_examples() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert_eq!(g.dt(), 1.0);
        let g = TimeGrid::new(0.0, 2.0 * PI, 101).unwrap();
        assert_eq!(g.dt(), 2.0 * PI / 100.0);
        assert_eq!(g.slice_time(0), 0.0);
        assert_eq!(g.slice_time(100), 2.0 * PI);
        assert!(TimeGrid::new(1.0, 0.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, f64::INFINITY, 3).is_err());
    }

    #[test]
    fn index_of_recovers_slices() {
        let g = TimeGrid::new(-1.3, 2.9, 57).unwrap();
        for i in 0..57 {
            assert_eq!(g.index_of(g.slice_time(i)).unwrap(), i);
        }
        assert!(g.index_of(g.slice_time(3) + 0.5 * g.dt()).is_err());
        assert!(g.index_of(10.0).is_err());
    }

    #[test]
    fn trajectory_rejects_non_finite() {
        let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
        assert!(Trajectory::new(g, 1, vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(Trajectory::new(g, 1, vec![0.0, f64::INFINITY, 1.0]).is_err());
        assert!(Trajectory::new(g, 1, vec![0.0, 1.0]).is_err());
        let x = Trajectory::new(g, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(x.slice(1), &[2.0, 3.0]);
        assert_eq!(x.at(2, 1), 5.0);
    }

    proptest::proptest! {
        #[test]
        fn slice_times_round_trip(t0 in -100.0f64..100.0, len in 1e-3f64..50.0, n in 2usize..2000) {
            let g = TimeGrid::new(t0, t0 + len, n).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..n {
                let t = g.slice_time(i);
                proptest::prop_assert!(t > prev);
                prev = t;
                let recovered = ((t - g.t_start()) / g.dt()).round() as usize;
                proptest::prop_assert_eq!(recovered, i);
            }
            proptest::prop_assert_eq!(g.slice_time(n - 1), t0 + len);
        }
    }
}
