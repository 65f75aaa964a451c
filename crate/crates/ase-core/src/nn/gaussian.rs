//! Diagonal Gaussian action heads with fixed, state-independent variance.

use super::{c, Mlp, MlpCache, Real};
use crate::error::Result;
use rand::Rng;
use rand_distr::StandardNormal;

/// Fixed diagonal covariance over a mean produced elsewhere.
#[derive(Debug, Clone)]
pub struct GaussianHead<T> {
    variance: Vec<T>,
}

impl<T: Real> GaussianHead<T> {
    pub fn uniform(dim: usize, variance: T) -> Self {
        assert!(variance > T::zero(), "variance must be positive");
        Self {
            variance: vec![variance; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[T] {
        &self.variance
    }

    /// Log-density of `x` under `N(mean, diag(variance))`.
    pub fn log_prob(&self, mean: &[T], x: &[T]) -> T {
        debug_assert_eq!(mean.len(), self.variance.len());
        debug_assert_eq!(x.len(), self.variance.len());
        let two_pi: T = c(std::f64::consts::TAU);
        let half: T = c(0.5);
        let mut lp = T::zero();
        for ((m, xi), var) in mean.iter().zip(x).zip(&self.variance) {
            let d = *xi - *m;
            lp = lp - half * (d * d / *var + (two_pi * *var).ln());
        }
        lp
    }

    /// `d log N(x; mean) / d mean = (x - mean) / variance`.
    pub fn dlogp_dmean(&self, mean: &[T], x: &[T]) -> Vec<T> {
        mean.iter()
            .zip(x)
            .zip(&self.variance)
            .map(|((m, xi), var)| (*xi - *m) / *var)
            .collect()
    }

    /// KL divergence between two Gaussians sharing this diagonal covariance:
    /// `sum_i (m1_i - m2_i)^2 / (2 var_i)`. Symmetric under the shared
    /// covariance and zero iff the means coincide.
    pub fn kl_between_means(&self, mean1: &[T], mean2: &[T]) -> T {
        debug_assert_eq!(mean1.len(), mean2.len());
        let half: T = c(0.5);
        mean1
            .iter()
            .zip(mean2)
            .zip(&self.variance)
            .map(|((a, b), var)| {
                let d = *a - *b;
                half * d * d / *var
            })
            .sum()
    }

    /// `d KL(m1, m2) / d m1 = (m1 - m2) / variance`.
    pub fn dkl_dmean1(&self, mean1: &[T], mean2: &[T]) -> Vec<T> {
        mean1
            .iter()
            .zip(mean2)
            .zip(&self.variance)
            .map(|((a, b), var)| (*a - *b) / *var)
            .collect()
    }

    pub fn sample<R: Rng>(&self, mean: &[T], rng: &mut R) -> Vec<T> {
        mean.iter()
            .zip(&self.variance)
            .map(|(m, var)| {
                let n: f64 = rng.sample(StandardNormal);
                *m + var.sqrt() * c(n)
            })
            .collect()
    }
}

/// A mean network plus a fixed-variance Gaussian head.
#[derive(Debug, Clone)]
pub struct GaussianPolicy<T> {
    pub net: Mlp<T>,
    pub head: GaussianHead<T>,
}

impl<T: Real> GaussianPolicy<T> {
    pub fn new(net: Mlp<T>, variance: T) -> Self {
        let dim = net.spec().output_dim;
        Self {
            net,
            head: GaussianHead::uniform(dim, variance),
        }
    }

    pub fn mean(&self, input: &[T]) -> Result<Vec<T>> {
        self.net.output(input)
    }

    pub fn mean_with_cache(&self, input: &[T]) -> Result<MlpCache<T>> {
        self.net.forward(input)
    }

    /// Samples an action and returns `(action, log_prob)`.
    pub fn act<R: Rng>(&self, input: &[T], rng: &mut R) -> Result<(Vec<T>, T)> {
        let mean = self.mean(input)?;
        let action = self.head.sample(&mean, rng);
        let lp = self.head.log_prob(&mean, &action);
        Ok((action, lp))
    }

    pub fn log_prob(&self, input: &[T], action: &[T]) -> Result<T> {
        let mean = self.mean(input)?;
        Ok(self.head.log_prob(&mean, action))
    }

    pub fn cast<U: Real>(&self) -> GaussianPolicy<U> {
        GaussianPolicy {
            net: self.net.cast(),
            head: GaussianHead {
                variance: self
                    .head
                    .variance
                    .iter()
                    .map(|v| U::from(*v).unwrap())
                    .collect(),
            },
        }
    }
}
