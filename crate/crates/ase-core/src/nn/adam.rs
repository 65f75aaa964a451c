//! Adam over named parameter sets.

use super::{c, ParamSet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig<T> {
    pub stepsize: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> AdamConfig<T> {
    pub fn with_stepsize(stepsize: T) -> Self {
        Self {
            stepsize,
            beta1: c(0.9),
            beta2: c(0.999),
            epsilon: c(1e-8),
        }
    }
}

/// Optimizer state: first/second moments shaped like the parameters, plus the
/// step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    pub first_moment: ParamSet<T>,
    pub second_moment: ParamSet<T>,
    pub step_count: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig<T>) -> Self {
        Self {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }

    /// One Adam update; deterministic and pure given `(params, grads, self)`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<()> {
        if params.arrays.len() != grads.arrays.len() {
            return Err(Error::config("gradient array count mismatch"));
        }
        for (p, g) in params.arrays.iter().zip(&grads.arrays) {
            if p.shape != g.shape {
                return Err(Error::config(format!(
                    "gradient shape mismatch for {}",
                    p.name
                )));
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("gradient for {}", p.name)));
            }
        }
        self.step_count += 1;
        let cfg = self.config;
        let t = self.step_count as i32;
        let bc1 = T::one() - cfg.beta1.powi(t);
        let bc2 = T::one() - cfg.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .arrays
            .iter_mut()
            .zip(&grads.arrays)
            .zip(
                self.first_moment
                    .arrays
                    .iter_mut()
                    .zip(&mut self.second_moment.arrays),
            )
        {
            for ((pv, gv), (mv, vv)) in p
                .values
                .iter_mut()
                .zip(&g.values)
                .zip(m.values.iter_mut().zip(&mut v.values))
            {
                *mv = cfg.beta1 * *mv + (T::one() - cfg.beta1) * *gv;
                *vv = cfg.beta2 * *vv + (T::one() - cfg.beta2) * *gv * *gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - cfg.stepsize * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
