//! The adversarial skill-embedding objective: a discriminator with gradient
//! penalty, a von Mises-Fisher skill encoder sharing the discriminator's
//! trunk, the pre-training reward, and the diversity penalty.

use crate::error::{Error, Result};
use crate::nn::{
    activation_deriv, c, dense_backward, dense_forward, normalize_backward, normalize_or_axis,
    sigmoid, Activation, GaussianPolicy, ParamArray, ParamSet, Real,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::StandardNormal;

/// Discriminator probabilities are clamped to `[EPS, 1 - EPS]` before any
/// logarithm so rewards and losses stay finite.
pub const DISC_CLAMP: f64 = 1e-4;

/// Objective weights for pre-training.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PretrainHyper {
    /// Skill-discovery reward weight.
    pub beta: f64,
    /// Gradient-penalty weight.
    pub w_gp: f64,
    /// Diversity-objective weight.
    pub w_div: f64,
    /// Encoder scaling factor.
    pub kappa: f64,
    /// Latent dimension.
    pub latent_dim: usize,
}

impl Default for PretrainHyper {
    fn default() -> Self {
        Self {
            beta: 0.5,
            w_gp: 5.0,
            w_div: 0.01,
            kappa: 1.0,
            latent_dim: 8,
        }
    }
}

/// Discriminator and encoder sharing one ReLU trunk, with separate linear
/// output layers: a single sigmoid unit for the discriminator and a
/// unit-normalized `latent_dim` head for the encoder mean.
#[derive(Debug, Clone)]
pub struct DiscEncNet<T> {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    latent_dim: usize,
    /// Trunk layer arrays, then `disc.{weight,bias}`, then `enc.{weight,bias}`.
    params: ParamSet<T>,
}

/// Forward cache for one transition input.
#[derive(Debug, Clone)]
pub struct DiscEncCache<T> {
    input: Vec<T>,
    /// Trunk pre-activations.
    zs: Vec<Vec<T>>,
    /// Trunk post-activations; the last entry feeds both heads.
    xs: Vec<Vec<T>>,
    disc_logit: T,
    enc_mean: Vec<T>,
    enc_norm: Option<T>,
}

impl<T: Real> DiscEncCache<T> {
    pub fn disc_logit(&self) -> T {
        self.disc_logit
    }

    pub fn enc_mean(&self) -> &[T] {
        &self.enc_mean
    }
}

impl<T: Real> DiscEncNet<T> {
    pub fn init<R: Rng>(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        latent_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || latent_dim < 2 || hidden_dims.is_empty() {
            return Err(Error::config(
                "disc/enc net needs input_dim >= 1, latent_dim >= 2, one hidden layer",
            ));
        }
        let mut arrays = Vec::new();
        let mut prev = input_dim;
        for (i, &h) in hidden_dims.iter().enumerate() {
            let limit = (6.0 / (prev + h) as f64).sqrt();
            let w: Vec<T> = (0..prev * h)
                .map(|_| c::<T>((rng.gen::<f64>() * 2.0 - 1.0) * limit))
                .collect();
            arrays.push(ParamArray::new(
                format!("trunk.layer{i}.weight"),
                vec![h, prev],
                w,
            )?);
            arrays.push(ParamArray::zeros(format!("trunk.layer{i}.bias"), vec![h]));
            prev = h;
        }
        for (head, out) in [("disc", 1), ("enc", latent_dim)] {
            let limit = (6.0 / (prev + out) as f64).sqrt();
            let w: Vec<T> = (0..prev * out)
                .map(|_| c::<T>((rng.gen::<f64>() * 2.0 - 1.0) * limit))
                .collect();
            arrays.push(ParamArray::new(
                format!("{head}.weight"),
                vec![out, prev],
                w,
            )?);
            arrays.push(ParamArray::zeros(format!("{head}.bias"), vec![out]));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            latent_dim,
            params: ParamSet::new(arrays),
        })
    }

    pub fn zeros(input_dim: usize, hidden_dims: Vec<usize>, latent_dim: usize) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = Self::init(input_dim, hidden_dims, latent_dim, &mut rng)?;
        net.params.zero();
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn from_params(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        latent_dim: usize,
        params: ParamSet<T>,
    ) -> Result<Self> {
        let proto = Self::zeros(input_dim, hidden_dims.clone(), latent_dim)?;
        if proto.params.arrays.len() != params.arrays.len() {
            return Err(Error::config("disc/enc parameter count mismatch"));
        }
        for (a, b) in proto.params.arrays.iter().zip(&params.arrays) {
            if a.shape != b.shape {
                return Err(Error::config(format!("disc/enc shape mismatch at {}", a.name)));
            }
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            latent_dim,
            params,
        })
    }

    fn n_trunk(&self) -> usize {
        self.hidden_dims.len()
    }

    fn trunk_w(&self, l: usize) -> &[T] {
        &self.params.arrays[2 * l].values
    }

    fn trunk_b(&self, l: usize) -> &[T] {
        &self.params.arrays[2 * l + 1].values
    }

    fn disc_w(&self) -> &[T] {
        &self.params.arrays[2 * self.n_trunk()].values
    }

    fn disc_b(&self) -> &[T] {
        &self.params.arrays[2 * self.n_trunk() + 1].values
    }

    fn enc_w(&self) -> &[T] {
        &self.params.arrays[2 * self.n_trunk() + 2].values
    }

    fn enc_b(&self) -> &[T] {
        &self.params.arrays[2 * self.n_trunk() + 3].values
    }

    pub fn forward(&self, input: &[T]) -> Result<DiscEncCache<T>> {
        if input.len() != self.input_dim {
            return Err(Error::config(format!(
                "disc/enc input length {} != {}",
                input.len(),
                self.input_dim
            )));
        }
        let n = self.n_trunk();
        let mut zs = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        let mut cur = input;
        for l in 0..n {
            let mut z = vec![T::zero(); self.hidden_dims[l]];
            dense_forward(self.trunk_w(l), self.trunk_b(l), cur, &mut z);
            let x: Vec<T> = z.iter().map(|v| v.max(T::zero())).collect();
            zs.push(z);
            xs.push(x);
            cur = &xs[l];
        }
        let feat = &xs[n - 1];
        let mut logit = [T::zero()];
        dense_forward(self.disc_w(), self.disc_b(), feat, &mut logit);
        let mut enc_raw = vec![T::zero(); self.latent_dim];
        dense_forward(self.enc_w(), self.enc_b(), feat, &mut enc_raw);
        let mut enc_mean = vec![T::zero(); self.latent_dim];
        let enc_norm = normalize_or_axis(&enc_raw, &mut enc_mean);
        Ok(DiscEncCache {
            input: input.to_vec(),
            zs,
            xs,
            disc_logit: logit[0],
            enc_mean,
            enc_norm,
        })
    }

    /// Discriminator probability, clamped to `[DISC_CLAMP, 1 - DISC_CLAMP]`.
    pub fn disc_prob(&self, input: &[T]) -> Result<T> {
        Ok(clamp_prob(sigmoid(self.forward(input)?.disc_logit)))
    }

    /// Encoder mean direction (unit vector).
    pub fn encoder_mean(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(input)?.enc_mean)
    }

    /// Style reward `-log(1 - D(s, s'))`.
    pub fn style_reward(&self, input: &[T]) -> Result<T> {
        let d = self.disc_prob(input)?;
        Ok(-(T::one() - d).ln())
    }

    /// Skill reward `beta * kappa * mu_q(s, s')^T z` (the von Mises-Fisher
    /// log-likelihood up to its constant normalizer).
    pub fn skill_reward(&self, input: &[T], z: &[T], beta: T, kappa: T) -> Result<T> {
        let mean = self.encoder_mean(input)?;
        let dot = mean.iter().zip(z).map(|(a, b)| *a * *b).sum::<T>();
        Ok(beta * kappa * dot)
    }

    /// Combined pre-training reward for one transition.
    pub fn pretrain_reward(&self, input: &[T], z: &[T], hyper: &PretrainHyper) -> Result<T> {
        let cache = self.forward(input)?;
        Ok(reward_from_cache(&cache, z, hyper))
    }

    /// Backpropagates `dfeat` (gradient at the trunk output) through the
    /// trunk, accumulating parameter gradients.
    fn trunk_backward(&self, cache: &DiscEncCache<T>, dfeat: &[T], grads: &mut ParamSet<T>) {
        let n = self.n_trunk();
        let mut g = dfeat.to_vec();
        for l in (0..n).rev() {
            for (gi, z) in g.iter_mut().zip(&cache.zs[l]) {
                *gi = *gi * activation_deriv(Activation::Relu, *z);
            }
            let input = if l == 0 { &cache.input } else { &cache.xs[l - 1] };
            let mut dx = vec![T::zero(); input.len()];
            let (head, tail) = grads.arrays.split_at_mut(2 * l + 1);
            dense_backward(
                self.trunk_w(l),
                input,
                &g,
                &mut head[2 * l].values,
                &mut tail[0].values,
                &mut dx,
            );
            g = dx;
        }
    }

    /// Accumulates gradients of `scale * logit` w.r.t. parameters.
    fn disc_logit_backward(&self, cache: &DiscEncCache<T>, scale: T, grads: &mut ParamSet<T>) {
        let n = self.n_trunk();
        let feat = &cache.xs[n - 1];
        let mut dfeat = vec![T::zero(); feat.len()];
        let (head, tail) = grads.arrays.split_at_mut(2 * n + 1);
        dense_backward(
            self.disc_w(),
            feat,
            &[scale],
            &mut head[2 * n].values,
            &mut tail[0].values,
            &mut dfeat,
        );
        self.trunk_backward(cache, &dfeat, grads);
    }

    /// Accumulates gradients of `sum(upstream . enc_mean)` w.r.t. parameters.
    fn enc_mean_backward(&self, cache: &DiscEncCache<T>, upstream: &[T], grads: &mut ParamSet<T>) {
        let n = self.n_trunk();
        let mut draw = vec![T::zero(); self.latent_dim];
        normalize_backward(&cache.enc_mean, cache.enc_norm, upstream, &mut draw);
        let feat = &cache.xs[n - 1];
        let mut dfeat = vec![T::zero(); feat.len()];
        let (head, tail) = grads.arrays.split_at_mut(2 * n + 3);
        dense_backward(
            self.enc_w(),
            feat,
            &draw,
            &mut head[2 * n + 2].values,
            &mut tail[0].values,
            &mut dfeat,
        );
        self.trunk_backward(cache, &dfeat, grads);
    }

    /// Gradient of the (unclamped) discriminator probability w.r.t. the
    /// network input, from a forward cache.
    pub fn disc_input_gradient(&self, cache: &DiscEncCache<T>) -> Vec<T> {
        let n = self.n_trunk();
        // First backward through the composite trunk + disc head + sigmoid.
        let mut v = vec![activation_deriv(Activation::Sigmoid, cache.disc_logit)];
        let mut u = mat_t_vec(self.disc_w(), &v, self.hidden_dims[n - 1]);
        for l in (0..n).rev() {
            for (ui, z) in u.iter_mut().zip(&cache.zs[l]) {
                *ui = *ui * activation_deriv(Activation::Relu, *z);
            }
            v = u;
            let in_dim = if l == 0 {
                self.input_dim
            } else {
                self.hidden_dims[l - 1]
            };
            u = mat_t_vec(self.trunk_w(l), &v, in_dim);
        }
        u
    }

    /// Squared input-gradient norm of the discriminator for one sample, with
    /// its parameter gradient (the second-order double-backward term)
    /// accumulated into `grads` scaled by `scale`. Returns the penalty value.
    pub fn penalty_double_backward(
        &self,
        cache: &DiscEncCache<T>,
        scale: T,
        grads: &mut ParamSet<T>,
    ) -> T {
        let n = self.n_trunk();
        let n_layers = n + 1;
        // Composite layer l: weights w(l), pre-activation z(l), input x(l).
        let weight = |l: usize| -> &[T] {
            if l < n {
                self.trunk_w(l)
            } else {
                self.disc_w()
            }
        };
        let act = |l: usize| -> Activation {
            if l < n {
                Activation::Relu
            } else {
                Activation::Sigmoid
            }
        };
        let z_of = |l: usize| -> &[T] {
            if l < n {
                &cache.zs[l]
            } else {
                std::slice::from_ref(&cache.disc_logit)
            }
        };
        let x_of = |l: usize| -> &[T] {
            if l == 0 {
                &cache.input
            } else {
                &cache.xs[l - 1]
            }
        };
        let in_dim_of = |l: usize| -> usize {
            if l == 0 {
                self.input_dim
            } else {
                self.hidden_dims[l - 1]
            }
        };
        let grad_idx = |l: usize| -> usize {
            if l < n {
                2 * l
            } else {
                2 * n
            }
        };

        // Phase 1: first backward, u[l] = dD/dx(l), v[l] = dD/dz(l).
        let mut v_saved: Vec<Vec<T>> = vec![Vec::new(); n_layers];
        let mut u_saved: Vec<Vec<T>> = vec![Vec::new(); n_layers + 1];
        u_saved[n_layers] = vec![T::one()];
        for l in (0..n_layers).rev() {
            let mut v: Vec<T> = u_saved[l + 1]
                .iter()
                .zip(z_of(l))
                .map(|(ui, z)| *ui * activation_deriv(act(l), *z))
                .collect();
            let u = mat_t_vec(weight(l), &v, in_dim_of(l));
            std::mem::swap(&mut v_saved[l], &mut v);
            u_saved[l] = u;
        }
        let g = &u_saved[0];
        let penalty = g.iter().map(|x| *x * *x).sum::<T>();

        // Phase 2: reverse the backward chain. u_hat[l] = dP/du[l].
        let two: T = c(2.0);
        let mut u_hat: Vec<T> = g.iter().map(|x| two * *x).collect();
        let mut z_hat_bb: Vec<Vec<T>> = vec![Vec::new(); n_layers];
        for l in 0..n_layers {
            // v_hat = W u_hat
            let out_dim = v_saved[l].len();
            let mut v_hat = vec![T::zero(); out_dim];
            dense_forward_no_bias(weight(l), &u_hat, &mut v_hat);
            // dP/dW from u[l] = W^T v[l]: outer(v[l], u_hat).
            let w_grad = &mut grads.arrays[grad_idx(l)].values;
            let in_dim = in_dim_of(l);
            for (i, vi) in v_saved[l].iter().enumerate() {
                let row = &mut w_grad[i * in_dim..(i + 1) * in_dim];
                for (wij, uj) in row.iter_mut().zip(&u_hat) {
                    *wij += scale * *vi * *uj;
                }
            }
            // z_hat from the phi'(z) factor (second derivative term).
            z_hat_bb[l] = v_hat
                .iter()
                .zip(&u_saved[l + 1])
                .zip(z_of(l))
                .map(|((vh, un), z)| *vh * *un * activation_second_deriv(act(l), *z))
                .collect();
            // u_hat for the next stage: dP/du[l+1] via v[l] = u[l+1] phi'(z).
            u_hat = v_hat
                .iter()
                .zip(z_of(l))
                .map(|(vh, z)| *vh * activation_deriv(act(l), *z))
                .collect();
        }

        // Phase 3: propagate z_hat through the forward graph.
        let mut x_hat: Vec<T> = Vec::new(); // x_hat[l+1], starts empty for l = L-1
        for l in (0..n_layers).rev() {
            let mut z_hat = z_hat_bb[l].clone();
            if !x_hat.is_empty() {
                for ((zh, xh), z) in z_hat.iter_mut().zip(&x_hat).zip(z_of(l)) {
                    *zh += *xh * activation_deriv(act(l), *z);
                }
            }
            let in_dim = in_dim_of(l);
            let x = x_of(l);
            let gi = grad_idx(l);
            {
                let (head, tail) = grads.arrays.split_at_mut(gi + 1);
                let w_grad = &mut head[gi].values;
                let b_grad = &mut tail[0].values;
                for (i, zh) in z_hat.iter().enumerate() {
                    b_grad[i] += scale * *zh;
                    let row = &mut w_grad[i * in_dim..(i + 1) * in_dim];
                    for (wij, xj) in row.iter_mut().zip(x) {
                        *wij += scale * *zh * *xj;
                    }
                }
            }
            x_hat = mat_t_vec(weight(l), &z_hat, in_dim);
        }
        penalty
    }

    pub fn cast<U: Real>(&self) -> DiscEncNet<U> {
        DiscEncNet {
            input_dim: self.input_dim,
            hidden_dims: self.hidden_dims.clone(),
            latent_dim: self.latent_dim,
            params: self.params.cast(),
        }
    }
}

#[inline]
fn clamp_prob<T: Real>(p: T) -> T {
    let eps: T = c(DISC_CLAMP);
    p.max(eps).min(T::one() - eps)
}

/// Second derivative of the element-wise activations (zero a.e. for ReLU).
#[inline]
fn activation_second_deriv<T: Real>(act: Activation, z: T) -> T {
    match act {
        Activation::Relu | Activation::Linear => T::zero(),
        Activation::Sigmoid => {
            let s = sigmoid(z);
            s * (T::one() - s) * (T::one() - c::<T>(2.0) * s)
        }
        Activation::UnitNormalize => unreachable!("vector-level activation"),
    }
}

/// `out = W x` without bias; shapes `(out_dim, in_dim)` x `(in_dim)`.
fn dense_forward_no_bias<T: Real>(w: &[T], x: &[T], out: &mut [T]) {
    let in_dim = x.len();
    for (o, v) in out.iter_mut().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut s = T::zero();
        for (a, b) in row.iter().zip(x) {
            s += *a * *b;
        }
        *v = s;
    }
}

/// `W^T v` for row-major `W` with `in_dim` columns.
fn mat_t_vec<T: Real>(w: &[T], v: &[T], in_dim: usize) -> Vec<T> {
    let mut out = vec![T::zero(); in_dim];
    for (o, vi) in v.iter().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        for (oi, wij) in out.iter_mut().zip(row) {
            *oi += *wij * *vi;
        }
    }
    out
}

fn reward_from_cache<T: Real>(cache: &DiscEncCache<T>, z: &[T], hyper: &PretrainHyper) -> T {
    let d = clamp_prob(sigmoid(cache.disc_logit));
    let style = -(T::one() - d).ln();
    let dot = cache.enc_mean.iter().zip(z).map(|(a, b)| *a * *b).sum::<T>();
    style + c::<T>(hyper.beta) * c::<T>(hyper.kappa) * dot
}

/// Loss, gradients, and classification accuracy for one discriminator update.
pub struct DiscLossReport<T> {
    pub loss: T,
    pub grads: ParamSet<T>,
    /// Mean of real-classified-real and fake-classified-fake rates.
    pub accuracy: T,
    pub mean_penalty: T,
}

/// Binary-cross-entropy discriminator loss with a gradient penalty on real
/// samples:
/// `-E_real[log D] - E_fake[log(1-D)] + w_gp E_real[ ||grad_x D||^2 ]`.
/// The penalty's parameter gradient goes through an explicit double-backward
/// pass (the penalty itself is a first-order gradient).
pub fn disc_loss_and_grads<T: Real>(
    net: &DiscEncNet<T>,
    real: &[Vec<T>],
    fake: &[Vec<T>],
    w_gp: T,
) -> Result<DiscLossReport<T>> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::usage("discriminator batches must be non-empty"));
    }
    let mut grads = net.params().zeros_like();
    let mut loss = T::zero();
    let mut penalty_sum = T::zero();
    let mut correct = 0usize;
    let half: T = c(0.5);
    let inv_r = T::one() / c::<T>(real.len() as f64);
    let inv_f = T::one() / c::<T>(fake.len() as f64);
    for (i, x) in real.iter().enumerate() {
        let cache = net.forward(x)?;
        let p_raw = sigmoid(cache.disc_logit);
        let p = clamp_prob(p_raw);
        loss = loss - p.ln() * inv_r;
        if p > half {
            correct += 1;
        }
        // d(-log sigmoid(l))/dl = -(1 - sigmoid(l)); zero in the clamp zone.
        if p_raw > c(DISC_CLAMP) && p_raw < T::one() - c(DISC_CLAMP) {
            net.disc_logit_backward(&cache, -(T::one() - p_raw) * inv_r, &mut grads);
        }
        if w_gp > T::zero() {
            let p_i = net.penalty_double_backward(&cache, w_gp * inv_r, &mut grads);
            penalty_sum += p_i;
            loss += w_gp * p_i * inv_r;
        }
        if !loss.is_finite() {
            return Err(Error::non_finite(format!("discriminator real sample {i}")));
        }
    }
    for (j, x) in fake.iter().enumerate() {
        let cache = net.forward(x)?;
        let p_raw = sigmoid(cache.disc_logit);
        let p = clamp_prob(p_raw);
        loss = loss - (T::one() - p).ln() * inv_f;
        if p < half {
            correct += 1;
        }
        // d(-log(1 - sigmoid(l)))/dl = sigmoid(l); zero in the clamp zone.
        if p_raw > c(DISC_CLAMP) && p_raw < T::one() - c(DISC_CLAMP) {
            net.disc_logit_backward(&cache, p_raw * inv_f, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::non_finite(format!("discriminator fake sample {j}")));
        }
    }
    Ok(DiscLossReport {
        loss,
        grads,
        accuracy: c::<T>(correct as f64 / (real.len() + fake.len()) as f64),
        mean_penalty: penalty_sum * inv_r,
    })
}

/// Loss and gradients for one encoder update.
pub struct EncoderLossReport<T> {
    pub loss: T,
    pub grads: ParamSet<T>,
    /// Mean `mu_q^T z` over the batch.
    pub mean_alignment: T,
}

/// Negative von Mises-Fisher log-likelihood (constant normalizer dropped):
/// `-E[ kappa * mu_q(s, s')^T z ]`.
pub fn encoder_loss_and_grads<T: Real>(
    net: &DiscEncNet<T>,
    batch: &[(Vec<T>, Vec<T>)],
    kappa: T,
) -> Result<EncoderLossReport<T>> {
    if batch.is_empty() {
        return Err(Error::usage("encoder batch must be non-empty"));
    }
    let mut grads = net.params().zeros_like();
    let inv_n = T::one() / c::<T>(batch.len() as f64);
    let mut alignment = T::zero();
    for (i, (input, z)) in batch.iter().enumerate() {
        let cache = net.forward(input)?;
        let dot = cache.enc_mean.iter().zip(z).map(|(a, b)| *a * *b).sum::<T>();
        alignment += dot * inv_n;
        // d(-kappa mu.z / n)/dmu = -kappa z / n
        let upstream: Vec<T> = z.iter().map(|zi| -kappa * *zi * inv_n).collect();
        net.enc_mean_backward(&cache, &upstream, &mut grads);
        if !alignment.is_finite() {
            return Err(Error::non_finite(format!("encoder sample {i}")));
        }
    }
    Ok(EncoderLossReport {
        loss: -kappa * alignment,
        grads,
        mean_alignment: alignment,
    })
}

/// Draws a fresh prior latent in the working scalar type.
fn sample_prior_vec<T: Real, R: Rng>(rng: &mut R, d: usize) -> Vec<T> {
    loop {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return raw.iter().map(|v| c(*v / norm)).collect();
        }
    }
}

/// Cosine distance between unit latents.
fn latent_distance_t<T: Real>(a: &[T], b: &[T]) -> T {
    let dot = a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
    (c::<T>(0.5) * (T::one() - dot)).max(T::zero()).min(T::one())
}

/// Diversity penalty tying policy-mean KL to latent distance:
/// `w_div * E_s[ (KL(pi(.|s,z1), pi(.|s,z2)) / D_z(z1,z2) - 1)^2 ]`
/// with two fresh prior latents per state (near-identical pairs redrawn).
/// Applied only during gradient updates, never in the reward.
pub fn diversity_loss_and_grads<T: Real, R: Rng>(
    policy: &GaussianPolicy<T>,
    obs_batch: &[Vec<T>],
    latent_dim: usize,
    rng: &mut R,
    w_div: T,
) -> Result<(T, ParamSet<T>)> {
    if obs_batch.is_empty() {
        return Err(Error::usage("diversity batch must be non-empty"));
    }
    let mut grads = policy.net.params().zeros_like();
    let inv_n = T::one() / c::<T>(obs_batch.len() as f64);
    let mut loss = T::zero();
    for obs in obs_batch {
        let (z1, z2) = loop {
            let z1 = sample_prior_vec::<T, R>(rng, latent_dim);
            let z2 = sample_prior_vec::<T, R>(rng, latent_dim);
            if latent_distance_t(&z1, &z2) >= c(1e-3) {
                break (z1, z2);
            }
        };
        let dz = latent_distance_t(&z1, &z2);
        let mut input1 = obs.clone();
        input1.extend_from_slice(&z1);
        let mut input2 = obs.clone();
        input2.extend_from_slice(&z2);
        let cache1 = policy.net.forward(&input1)?;
        let cache2 = policy.net.forward(&input2)?;
        let kl = policy
            .head
            .kl_between_means(cache1.output(), cache2.output());
        let ratio = kl / dz;
        let term = (ratio - T::one()) * (ratio - T::one());
        loss += w_div * term * inv_n;
        // d term / d mu1 = 2 (ratio - 1) / dz * dKL/dmu1
        let coeff = w_div * inv_n * c::<T>(2.0) * (ratio - T::one()) / dz;
        let dkl1 = policy.head.dkl_dmean1(cache1.output(), cache2.output());
        let up1: Vec<T> = dkl1.iter().map(|g| coeff * *g).collect();
        let up2: Vec<T> = dkl1.iter().map(|g| -coeff * *g).collect();
        policy.net.backward_into(&cache1, &up1, &mut grads)?;
        policy.net.backward_into(&cache2, &up2, &mut grads)?;
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("diversity loss"));
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{AdamConfig, AdamState, Mlp, MlpSpec};
    use crate::rng::stream;

    fn random_inputs(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, "obj-in", 0, 0);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect()
    }

    #[test]
    fn zero_net_outputs_half_probability() {
        let net = DiscEncNet::<f64>::zeros(4, vec![8], 3).unwrap();
        let p = net.disc_prob(&[0.1, 0.2, -0.4, 1.0]).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn saturating_logit_is_clamped() {
        let mut net = DiscEncNet::<f64>::zeros(2, vec![2], 2).unwrap();
        // Trunk passes input through; disc head amplifies massively.
        net.params_mut().arrays[0].values = vec![1.0, 0.0, 0.0, 1.0];
        net.params_mut().arrays[2].values = vec![1000.0, 0.0];
        let p = net.disc_prob(&[1.0, 0.0]).unwrap();
        assert_eq!(p, 1.0 - DISC_CLAMP);
    }

    #[test]
    fn disc_prob_matches_forward_composition() {
        let mut rng = stream(1, "obj", 0, 0);
        let net = DiscEncNet::<f64>::init(6, vec![10, 8], 4, &mut rng).unwrap();
        // Oracle: same trunk/heads as a pair of plain MLPs, composed by hand.
        for input in random_inputs(2, 20, 6) {
            let cache = net.forward(&input).unwrap();
            let mut x = input.clone();
            for l in 0..2 {
                let w = &net.params().arrays[2 * l].values;
                let b = &net.params().arrays[2 * l + 1].values;
                let mut y = vec![0.0; b.len()];
                for o in 0..b.len() {
                    let mut s = b[o];
                    for i in 0..x.len() {
                        s += w[o * x.len() + i] * x[i];
                    }
                    y[o] = s.max(0.0);
                }
                x = y;
            }
            let dw = &net.params().arrays[4].values;
            let db = &net.params().arrays[5].values;
            let logit: f64 = db[0] + x.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
            assert!((cache.disc_logit - logit).abs() < 1e-9);
            let p = net.disc_prob(&input).unwrap();
            assert!((p - clamp_prob(1.0 / (1.0 + (-logit).exp()))).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_mean_is_unit_and_guarded() {
        let mut rng = stream(3, "obj", 0, 0);
        let net = DiscEncNet::<f64>::init(6, vec![10], 4, &mut rng).unwrap();
        for input in random_inputs(4, 50, 6) {
            let m = net.encoder_mean(&input).unwrap();
            let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
        // Zero net: raw encoder output is exactly zero, guard returns e1.
        let zero = DiscEncNet::<f64>::zeros(6, vec![10], 4).unwrap();
        let m = zero.encoder_mean(&[0.5; 6]).unwrap();
        assert_eq!(m, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_half_discriminator_loss_is_two_ln_two() {
        let net = DiscEncNet::<f64>::zeros(4, vec![6], 3).unwrap();
        let real = random_inputs(5, 7, 4);
        let fake = random_inputs(6, 5, 4);
        let report = disc_loss_and_grads(&net, &real, &fake, 5.0).unwrap();
        assert!(
            (report.loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12,
            "loss {}",
            report.loss
        );
        assert_eq!(report.mean_penalty, 0.0);
    }

    #[test]
    fn saturated_separator_loss_is_clamp_arithmetic() {
        let mut net = DiscEncNet::<f64>::zeros(2, vec![2], 2).unwrap();
        net.params_mut().arrays[0].values = vec![30.0, 0.0, 0.0, 30.0];
        net.params_mut().arrays[2].values = vec![1.0, -1.0];
        let real = vec![vec![1.0, 0.0]];
        let fake = vec![vec![0.0, 1.0]];
        let report = disc_loss_and_grads(&net, &real, &fake, 0.0).unwrap();
        let expected = -2.0 * (1.0 - DISC_CLAMP).ln();
        assert!((report.loss - expected).abs() < 1e-9, "loss {}", report.loss);
        assert!((report.loss - 2.0e-4).abs() < 2e-8);
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn style_reward_fixed_points() {
        let zero = DiscEncNet::<f64>::zeros(4, vec![6], 3).unwrap();
        let x = vec![0.3, -0.2, 0.9, 0.0];
        let r = zero.style_reward(&x).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-12);

        // Bias-only logit ln(e - 1) gives D = 1 - 1/e and reward exactly 1.
        let mut mid = DiscEncNet::<f64>::zeros(4, vec![6], 3).unwrap();
        mid.params_mut().arrays[3].values[0] = (std::f64::consts::E - 1.0).ln();
        let r = mid.style_reward(&x).unwrap();
        assert!((r - 1.0).abs() < 1e-12);

        // Saturated-high D clamps at 1 - 1e-4: reward -ln(1e-4).
        let mut hot = DiscEncNet::<f64>::zeros(4, vec![6], 3).unwrap();
        hot.params_mut().arrays[3].values[0] = 100.0;
        let r = hot.style_reward(&x).unwrap();
        assert!((r - 9.210_340_371_976_184).abs() < 1e-9);
    }

    #[test]
    fn skill_reward_alignment_cases() {
        let mut rng = stream(7, "obj", 0, 0);
        let net = DiscEncNet::<f64>::init(4, vec![8], 3, &mut rng).unwrap();
        let x = vec![0.4, -0.1, 0.2, 0.8];
        let mu = net.encoder_mean(&x).unwrap();
        let r = net.skill_reward(&x, &mu, 0.5, 1.0).unwrap();
        assert!((r - 0.5).abs() < 1e-9);
        let anti: Vec<f64> = mu.iter().map(|v| -v).collect();
        let r = net.skill_reward(&x, &anti, 0.5, 1.0).unwrap();
        assert!((r + 0.5).abs() < 1e-9);
        // An orthogonal unit vector.
        let ortho = vec![-mu[1], mu[0], 0.0];
        let n = (ortho[0] * ortho[0] + ortho[1] * ortho[1]).sqrt();
        let ortho: Vec<f64> = ortho.iter().map(|v| v / n).collect();
        let r = net.skill_reward(&x, &ortho, 0.5, 1.0).unwrap();
        assert!(r.abs() < 1e-6 * (mu[2].abs() + 1.0));
    }

    #[test]
    fn pretrain_reward_is_sum_of_parts() {
        let mut rng = stream(8, "obj", 0, 0);
        let net = DiscEncNet::<f64>::init(4, vec![8], 3, &mut rng).unwrap();
        let hyper = PretrainHyper {
            beta: 0.5,
            kappa: 1.0,
            latent_dim: 3,
            ..Default::default()
        };
        for x in random_inputs(9, 20, 4) {
            let z = sample_prior_vec::<f64, _>(&mut rng, 3);
            let total = net.pretrain_reward(&x, &z, &hyper).unwrap();
            let style = net.style_reward(&x).unwrap();
            let skill = net.skill_reward(&x, &z, 0.5, 1.0).unwrap();
            assert!((total - (style + skill)).abs() < 1e-12);
            assert!(total.is_finite());
        }
        // Zero-weight net: D = 0.5 and mu = e1, so picking z = e1 gives
        // ln 2 + 0.5 exactly.
        let zero = DiscEncNet::<f64>::zeros(4, vec![8], 3).unwrap();
        let r = zero
            .pretrain_reward(&[0.0; 4], &[1.0, 0.0, 0.0], &hyper)
            .unwrap();
        assert!((r - (std::f64::consts::LN_2 + 0.5)).abs() < 1e-12);
        assert!((r - 1.193_147).abs() < 1e-6);
    }

    #[test]
    fn encoder_loss_fixed_points() {
        let mut rng = stream(10, "obj", 0, 0);
        let net = DiscEncNet::<f64>::init(4, vec![8], 3, &mut rng).unwrap();
        let xs = random_inputs(11, 6, 4);
        // z = mu for every sample: loss = -kappa.
        let batch: Vec<(Vec<f64>, Vec<f64>)> = xs
            .iter()
            .map(|x| (x.clone(), net.encoder_mean(x).unwrap()))
            .collect();
        let report = encoder_loss_and_grads(&net, &batch, 1.0).unwrap();
        assert!((report.loss + 1.0).abs() < 1e-9);
        assert!((report.mean_alignment - 1.0).abs() < 1e-9);
    }

    /// Central finite differences over the full discriminator loss including
    /// the gradient penalty (a second-order check of the double backward).
    #[test]
    fn disc_loss_gradients_match_finite_differences() {
        for seed in 0..8 {
            let mut rng = stream(100 + seed, "obj", 0, 0);
            let mut net = DiscEncNet::<f64>::init(5, vec![7, 6], 3, &mut rng).unwrap();
            for a in &mut net.params_mut().arrays {
                if a.name.ends_with("bias") {
                    for v in &mut a.values {
                        *v = rng.gen::<f64>() * 0.2 - 0.1;
                    }
                }
            }
            let real = random_inputs(200 + seed, 3, 5);
            let fake = random_inputs(300 + seed, 3, 5);
            let report = disc_loss_and_grads(&net, &real, &fake, 5.0).unwrap();
            let analytic = report.grads.flatten();
            let flat = net.params().flatten();
            let h = 1e-6;
            for p in 0..flat.len() {
                let mut fp = flat.clone();
                fp[p] += h;
                net.params_mut().assign_flat(&fp);
                let up = disc_loss_and_grads(&net, &real, &fake, 5.0).unwrap().loss;
                fp[p] -= 2.0 * h;
                net.params_mut().assign_flat(&fp);
                let dn = disc_loss_and_grads(&net, &real, &fake, 5.0).unwrap().loss;
                fp[p] += h;
                net.params_mut().assign_flat(&fp);
                let numeric = (up - dn) / (2.0 * h);
                let denom = analytic[p].abs().max(numeric.abs()).max(1e-3);
                assert!(
                    (analytic[p] - numeric).abs() / denom < 1e-4,
                    "seed {seed} param {p}: analytic {} vs numeric {numeric}",
                    analytic[p]
                );
            }
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        for seed in 0..8 {
            let mut rng = stream(400 + seed, "obj", 0, 0);
            let mut net = DiscEncNet::<f64>::init(5, vec![7, 6], 3, &mut rng).unwrap();
            for a in &mut net.params_mut().arrays {
                if a.name.ends_with("bias") {
                    for v in &mut a.values {
                        *v = rng.gen::<f64>() * 0.2 - 0.1;
                    }
                }
            }
            let batch: Vec<(Vec<f64>, Vec<f64>)> = random_inputs(500 + seed, 4, 5)
                .into_iter()
                .map(|x| (x, sample_prior_vec::<f64, _>(&mut rng, 3)))
                .collect();
            let report = encoder_loss_and_grads(&net, &batch, 1.3).unwrap();
            let analytic = report.grads.flatten();
            let flat = net.params().flatten();
            let h = 1e-6;
            for p in 0..flat.len() {
                let mut fp = flat.clone();
                fp[p] += h;
                net.params_mut().assign_flat(&fp);
                let up = encoder_loss_and_grads(&net, &batch, 1.3).unwrap().loss;
                fp[p] -= 2.0 * h;
                net.params_mut().assign_flat(&fp);
                let dn = encoder_loss_and_grads(&net, &batch, 1.3).unwrap().loss;
                fp[p] += h;
                net.params_mut().assign_flat(&fp);
                let numeric = (up - dn) / (2.0 * h);
                let denom = analytic[p].abs().max(numeric.abs()).max(1e-3);
                assert!(
                    (analytic[p] - numeric).abs() / denom < 1e-4,
                    "seed {seed} param {p}"
                );
            }
        }
    }

    #[test]
    fn diversity_loss_constant_policy_is_w_div() {
        // A zero network ignores z entirely: KL = 0, every term is 1.
        let spec = MlpSpec::new(6, vec![8], 2, Activation::Linear).unwrap();
        let policy = GaussianPolicy::new(Mlp::<f64>::zeros(spec, "p"), 0.0025);
        let obs = random_inputs(600, 5, 3);
        let mut rng = stream(601, "obj", 0, 0);
        let (loss, grads) = diversity_loss_and_grads(&policy, &obs, 3, &mut rng, 0.01).unwrap();
        assert!((loss - 0.01).abs() < 1e-12);
        // Constant policy also has zero gradient through ReLU of zeros.
        assert!(grads.max_abs() == 0.0);
    }

    #[test]
    fn diversity_gradients_match_finite_differences() {
        for seed in 0..6 {
            let spec = MlpSpec::new(5, vec![7], 2, Activation::Linear).unwrap();
            let mut init_rng = stream(700 + seed, "obj", 0, 0);
            let mut policy =
                GaussianPolicy::new(Mlp::<f64>::init(spec, "p", &mut init_rng), 0.0025);
            let obs = random_inputs(800 + seed, 4, 3);
            // Freeze the latent draws so the loss is a deterministic function
            // of the parameters.
            let loss_of = |p: &GaussianPolicy<f64>| {
                let mut rng = stream(900 + seed, "obj-div", 0, 0);
                diversity_loss_and_grads(p, &obs, 2, &mut rng, 0.01)
                    .unwrap()
                    .0
            };
            let mut rng = stream(900 + seed, "obj-div", 0, 0);
            let (_, grads) =
                diversity_loss_and_grads(&policy, &obs, 2, &mut rng, 0.01).unwrap();
            let analytic = grads.flatten();
            let flat = policy.net.params().flatten();
            // The 1/variance amplification makes f64 roundoff visible at
            // h = 1e-6; a larger step keeps the quotient clean.
            let h = 1e-5;
            for p in 0..flat.len() {
                let mut fp = flat.clone();
                fp[p] += h;
                policy.net.params_mut().assign_flat(&fp);
                let up = loss_of(&policy);
                fp[p] -= 2.0 * h;
                policy.net.params_mut().assign_flat(&fp);
                let dn = loss_of(&policy);
                fp[p] += h;
                policy.net.params_mut().assign_flat(&fp);
                let numeric = (up - dn) / (2.0 * h);
                let denom = analytic[p].abs().max(numeric.abs()).max(1e-3);
                assert!(
                    (analytic[p] - numeric).abs() / denom < 1e-4,
                    "seed {seed} param {p}: {} vs {numeric}",
                    analytic[p]
                );
            }
        }
    }

    /// A linearly separable toy set must be classified reliably after a few
    /// hundred Adam steps.
    #[test]
    fn discriminator_learns_separable_toy_set() {
        let mut rng = stream(1000, "obj", 0, 0);
        let mut net = DiscEncNet::<f64>::init(4, vec![16], 3, &mut rng).unwrap();
        let make = |rng: &mut rand_chacha::ChaCha8Rng, offset: f64, n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let mut v: Vec<f64> =
                        (0..4).map(|_| rng.gen::<f64>() * 0.6 - 0.3).collect();
                    v[0] += offset;
                    v
                })
                .collect()
        };
        let mut adam = AdamState::new(net.params(), AdamConfig::with_stepsize(1e-3));
        for _ in 0..500 {
            let real = make(&mut rng, 0.5, 16);
            let fake = make(&mut rng, -0.5, 16);
            let report = disc_loss_and_grads(&net, &real, &fake, 1.0).unwrap();
            adam.step(net.params_mut(), &report.grads).unwrap();
        }
        let real = make(&mut rng, 0.5, 200);
        let fake = make(&mut rng, -0.5, 200);
        let mut correct = 0;
        for x in &real {
            if net.disc_prob(x).unwrap() > 0.5 {
                correct += 1;
            }
        }
        for x in &fake {
            if net.disc_prob(x).unwrap() < 0.5 {
                correct += 1;
            }
        }
        let acc = correct as f64 / 400.0;
        assert!(acc >= 0.95, "held-out accuracy {acc}");
    }

    /// When the transition deterministically encodes the latent, the encoder
    /// must recover it.
    #[test]
    fn encoder_learns_synthetic_latent_code() {
        let d = 3;
        let obs_dim = 3;
        let mut rng = stream(1100, "obj", 0, 0);
        let mut net = DiscEncNet::<f64>::init(2 * obs_dim, vec![32], d, &mut rng).unwrap();
        let mut adam = AdamState::new(net.params(), AdamConfig::with_stepsize(1e-3));
        let mut batch_for = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<(Vec<f64>, Vec<f64>)> {
            (0..64)
                .map(|_| {
                    let s: Vec<f64> = (0..obs_dim).map(|_| rng.gen::<f64>() - 0.5).collect();
                    let z = sample_prior_vec::<f64, _>(rng, d);
                    let mut input = s.clone();
                    for i in 0..obs_dim {
                        input.push(s[i] + 0.1 * z[i]);
                    }
                    (input, z)
                })
                .collect()
        };
        let mut last_alignment = 0.0;
        for _ in 0..1000 {
            let batch = batch_for(&mut rng);
            let report = encoder_loss_and_grads(&net, &batch, 1.0).unwrap();
            adam.step(net.params_mut(), &report.grads).unwrap();
            last_alignment = report.mean_alignment;
        }
        assert!(
            last_alignment >= 0.9,
            "encoder alignment {last_alignment} after training"
        );
    }
}
