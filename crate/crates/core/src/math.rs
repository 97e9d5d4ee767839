//! Log-space accumulation helpers.

/// `log Σ exp(xᵢ)`, returning `-inf` for an empty slice or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Streaming `log Σ exp` that rescales its running sum whenever a new
/// maximum arrives.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Streaming weighted sums `Σ w`, `Σ w·o` and `Σ w·o²` with `w = exp(lw)`,
/// all held relative to a common running maximum of `lw`.
#[derive(Debug, Clone, Copy)]
pub struct WeightedLogAccumulator {
    pub max: f64,
    pub sum_w: f64,
    pub sum_wo: f64,
    pub sum_woo: f64,
}

impl Default for WeightedLogAccumulator {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum_w: 0.0,
            sum_wo: 0.0,
            sum_woo: 0.0,
        }
    }
}

impl WeightedLogAccumulator {
    pub fn push(&mut self, log_w: f64, o: f64) {
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.max {
            let s = (self.max - log_w).exp();
            self.sum_w *= s;
            self.sum_wo *= s;
            self.sum_woo *= s;
            self.max = log_w;
        }
        let w = (log_w - self.max).exp();
        self.sum_w += w;
        self.sum_wo += w * o;
        self.sum_woo += w * o * o;
    }

    /// Combines two partial accumulations. Order-dependent only through
    /// floating-point rounding, so callers merge in a fixed order.
    pub fn merge(mut self, other: Self) -> Self {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        let max = self.max.max(other.max);
        let a = (self.max - max).exp();
        let b = (other.max - max).exp();
        self.sum_w = self.sum_w * a + other.sum_w * b;
        self.sum_wo = self.sum_wo * a + other.sum_wo * b;
        self.sum_woo = self.sum_woo * a + other.sum_woo * b;
        self.max = max;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum_wo / self.sum_w
    }

    pub fn log_total(&self) -> f64 {
        self.max + self.sum_w.ln()
    }
}
