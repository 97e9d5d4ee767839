//! Sample statistics: weighted moments, autocorrelation ESS and
//! Kolmogorov–Smirnov distances.

/// Weighted mean and the standard error of that mean.
///
/// For uniform weights this is the usual `s/√n`. For non-uniform weights
/// the self-normalized importance-sampling estimate
/// `√(Σ wᵢ²(oᵢ − ō)²) / Σ wᵢ` is used.
pub fn weighted_mean_se(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let sw: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / sw;
    let uniform = weights.windows(2).all(|p| p[0] == p[1]);
    let n = values.len() as f64;
    let se = if uniform {
        if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        }
    } else {
        values
            .iter()
            .zip(weights)
            .map(|(v, w)| (w * (v - mean)).powi(2))
            .sum::<f64>()
            .sqrt()
            / sw
    };
    (mean, se)
}

/// Kish effective sample size `(Σw)²/Σw²`.
pub fn kish_ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Effective sample size of one chain from its autocorrelation function,
/// truncated with Geyer's initial positive sequence.
pub fn chain_ess(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        xs[..n - lag]
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}

/// Mean over chains and the MCMC standard error `s/√ESS`, with ESS summed
/// over chains.
pub fn chains_mean_se(chains: &[&[f64]]) -> (f64, f64, f64) {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let m = mean(&all);
    let ess: f64 = chains.iter().map(|c| chain_ess(c)).sum::<f64>().max(1.0);
    let var = if all.len() > 1 { variance(&all) } else { 0.0 };
    (m, (var / ess).sqrt(), ess.min(all.len() as f64))
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples`
/// (sorted in place) and a reference CDF evaluated at every sample.
pub fn ks_distance<F: FnMut(f64) -> f64>(samples: &mut [f64], mut cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Cumulative distribution tabulated on a sorted grid, interpolated
/// linearly. Used where evaluating a quadrature CDF per sample is too slow.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    xs: Vec<f64>,
    fs: Vec<f64>,
}

impl TabulatedCdf {
    /// `xs` sorted ascending, `fs` the CDF at those points.
    pub fn new(xs: Vec<f64>, fs: Vec<f64>) -> Self {
        assert_eq!(xs.len(), fs.len());
        Self { xs, fs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let j = self.xs.partition_point(|&g| g <= x);
        if j == 0 {
            return self.fs[0];
        }
        if j == self.xs.len() {
            return self.fs[j - 1];
        }
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let t = (x - x0) / (x1 - x0);
        self.fs[j - 1] + t * (self.fs[j] - self.fs[j - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_give_classic_standard_error() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = weighted_mean_se(&xs, &[1.0; 4]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(kish_ess(&[1.0; 4]), 4.0);
        assert!((kish_ess(&[1.0, 0.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ess_of_ar1_chain() {
        // AR(1) with coefficient φ has integrated time 1 + 2φ/(1 − φ).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let phi: f64 = 0.8;
        let mut x = 0.0;
        let chain: Vec<f64> = (0..200_000)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(rand_distr::StandardNormal);
                x
            })
            .collect();
        let tau = (1.0 + phi) / (1.0 - phi);
        let ess = chain_ess(&chain);
        let expected = chain.len() as f64 / tau;
        assert!((ess / expected - 1.0).abs() < 0.1, "{ess} vs {expected}");
    }

    #[test]
    fn ks_distances() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance(&mut xs, |x| x.clamp(0.0, 1.0)) <= 0.0005 + 1e-12);
        let mut a = vec![0.0, 1.0, 2.0];
        let mut b = vec![10.0, 11.0];
        assert_eq!(ks_two_sample(&mut a, &mut b), 1.0);
    }

    #[test]
    fn tabulated_cdf_interpolates() {
        let c = TabulatedCdf::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 1.0]);
        assert_eq!(c.eval(-1.0), 0.0);
        assert_eq!(c.eval(0.5), 0.25);
        assert_eq!(c.eval(3.0), 1.0);
    }
}
