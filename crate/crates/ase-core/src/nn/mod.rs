//! Minimal dense network machinery: named parameter arrays, MLP forward and
//! exact backward (parameter and input gradients), Adam, Gaussian heads.
//!
//! Everything is generic over the scalar type so the training path runs in
//! `f32` while gradient-check tests instantiate the identical code in `f64`.

pub mod adam;
pub mod gaussian;

use crate::error::{Error, Result};
use rand::Rng;

pub use adam::{AdamConfig, AdamState};
pub use gaussian::{GaussianHead, GaussianPolicy};

/// Scalar type for network math.
pub trait Real:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for pulling an `f64` constant into the working scalar type.
#[inline]
pub fn c<T: Real>(x: f64) -> T {
    T::from(x).expect("constant must be representable")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
    /// Scale the output vector to unit Euclidean norm. Exactly-zero raw
    /// outputs fall back to the first basis axis so the result is always
    /// well defined.
    UnitNormalize,
}

impl Activation {
    fn is_output(self) -> bool {
        matches!(
            self,
            Activation::Linear | Activation::Sigmoid | Activation::UnitNormalize
        )
    }
}

/// A named, shaped parameter array.
#[derive(Debug, Clone)]
pub struct ParamArray<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> ParamArray<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::config(format!(
                "array {name}: {} values for shape {:?}",
                values.len(),
                shape
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("array {name}")));
        }
        Ok(Self {
            name,
            shape,
            values,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![T::zero(); n],
        }
    }
}

/// An ordered collection of parameter arrays; the unit that optimizers and
/// checkpoints operate on.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    pub arrays: Vec<ParamArray<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new(arrays: Vec<ParamArray<T>>) -> Self {
        Self { arrays }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray::zeros(a.name.clone(), a.shape.clone()))
                .collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.arrays.iter().map(|a| a.values.len()).sum()
    }

    pub fn zero(&mut self) {
        for a in &mut self.arrays {
            a.values.fill(T::zero());
        }
    }

    /// `self += scale * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &ParamSet<T>, scale: T) {
        debug_assert_eq!(self.arrays.len(), other.arrays.len());
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            debug_assert_eq!(a.values.len(), b.values.len());
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += scale * *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.arrays {
            for x in &mut a.values {
                *x *= s;
            }
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.total_len());
        for a in &self.arrays {
            out.extend_from_slice(&a.values);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.total_len(), "flat parameter length");
        let mut off = 0;
        for a in &mut self.arrays {
            let n = a.values.len();
            a.values.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    values: a.values.iter().map(|v| U::from(*v).unwrap()).collect(),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.arrays
            .iter()
            .flat_map(|a| a.values.iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Structure of a dense network: dims plus hidden/output activations.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        output_activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::config("all network dims must be >= 1"));
        }
        if !output_activation.is_output() {
            return Err(Error::config(format!(
                "{output_activation:?} is not an output activation"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation: Activation::Relu,
            output_activation,
        })
    }

    /// `(in_dim, out_dim)` of each dense layer, hidden layers then output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn n_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    /// Per-layer activation, element-wise only (unit-normalize is handled at
    /// the vector level and reported as Linear here).
    fn layer_activation(&self, layer: usize) -> Activation {
        if layer + 1 < self.n_layers() {
            self.hidden_activation
        } else if self.output_activation == Activation::UnitNormalize {
            Activation::Linear
        } else {
            self.output_activation
        }
    }
}

// ---------------------------------------------------------------------------
// Dense-layer primitives shared by Mlp and the discriminator/encoder net.
// ---------------------------------------------------------------------------

/// `out = W x + b`, `W` row-major with shape `(out_dim, in_dim)`.
pub(crate) fn dense_forward<T: Real>(w: &[T], b: &[T], input: &[T], out: &mut [T]) {
    let in_dim = input.len();
    debug_assert_eq!(w.len(), b.len() * in_dim);
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        // Fixed 4-lane accumulation: deterministic order, vectorizable.
        let mut acc = [T::zero(); 4];
        let mut chunks = row.chunks_exact(4).zip(input.chunks_exact(4));
        for (rw, rx) in &mut chunks {
            acc[0] += rw[0] * rx[0];
            acc[1] += rw[1] * rx[1];
            acc[2] += rw[2] * rx[2];
            acc[3] += rw[3] * rx[3];
        }
        let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        let tail = in_dim - in_dim % 4;
        for i in tail..in_dim {
            sum += row[i] * input[i];
        }
        *out_v = sum + b[o];
    }
}

/// Accumulates `dL/dW += dz xᵀ`, `dL/db += dz`, and writes `dL/dx = Wᵀ dz`.
pub(crate) fn dense_backward<T: Real>(
    w: &[T],
    input: &[T],
    dz: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: &mut [T],
) {
    let in_dim = input.len();
    dx.fill(T::zero());
    for (o, &g) in dz.iter().enumerate() {
        db[o] += g;
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let drow = &mut dw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            drow[i] += g * input[i];
            dx[i] += row[i] * g;
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

#[inline]
fn apply_activation<T: Real>(act: Activation, z: &mut [T]) {
    match act {
        Activation::Relu => {
            for v in z.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for v in z.iter_mut() {
                *v = sigmoid(*v);
            }
        }
        Activation::Linear => {}
        Activation::UnitNormalize => unreachable!("vector-level activation"),
    }
}

/// Derivative of the element-wise activation from its pre-activation `z`.
#[inline]
pub(crate) fn activation_deriv<T: Real>(act: Activation, z: T) -> T {
    match act {
        Activation::Relu => {
            if z > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Sigmoid => {
            let s = sigmoid(z);
            s * (T::one() - s)
        }
        Activation::Linear => T::one(),
        Activation::UnitNormalize => unreachable!("vector-level activation"),
    }
}

/// Normalizes `raw` to unit length; an all-but-zero vector falls back to the
/// first basis axis. Returns the norm when normalization was applied.
pub(crate) fn normalize_or_axis<T: Real>(raw: &[T], out: &mut [T]) -> Option<T> {
    let norm = raw.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if norm <= c(1e-8) {
        out.fill(T::zero());
        out[0] = T::one();
        return None;
    }
    for (o, r) in out.iter_mut().zip(raw) {
        *o = *r / norm;
    }
    Some(norm)
}

/// Backward of `y = r / ||r||`: `dr = (g - (g·y) y) / ||r||`.
/// A guarded (constant) output propagates no gradient.
pub(crate) fn normalize_backward<T: Real>(y: &[T], norm: Option<T>, g: &[T], dr: &mut [T]) {
    match norm {
        None => dr.fill(T::zero()),
        Some(n) => {
            let gy = g.iter().zip(y).map(|(a, b)| *a * *b).sum::<T>();
            for ((d, gi), yi) in dr.iter_mut().zip(g).zip(y) {
                *d = (*gi - gy * *yi) / n;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

/// Dense feed-forward network owning its parameters as named arrays
/// (`layer{i}.weight` with shape `[out, in]`, `layer{i}.bias`).
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    spec: MlpSpec,
    params: ParamSet<T>,
}

/// Activations cached by [`Mlp::forward`]; required by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    input: Vec<T>,
    /// Pre-activation of each layer.
    zs: Vec<Vec<T>>,
    /// Post-activation of each layer; the last entry is the network output.
    xs: Vec<Vec<T>>,
    /// Norm of the raw output when the output activation is unit-normalize.
    out_norm: Option<T>,
}

impl<T: Real> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.xs.last().expect("cache has layers")
    }
}

impl<T: Real> Mlp<T> {
    /// Hidden weights uniform in ±√(6/(fan_in+fan_out)), biases zero.
    pub fn init<R: Rng>(spec: MlpSpec, name: &str, rng: &mut R) -> Self {
        let mut arrays = Vec::new();
        for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<T> = (0..fan_in * fan_out)
                .map(|_| c::<T>((rng.gen::<f64>() * 2.0 - 1.0) * limit))
                .collect();
            arrays.push(
                ParamArray::new(format!("{name}.layer{i}.weight"), vec![fan_out, fan_in], w)
                    .expect("init shapes consistent"),
            );
            arrays.push(ParamArray::zeros(
                format!("{name}.layer{i}.bias"),
                vec![fan_out],
            ));
        }
        Self {
            spec,
            params: ParamSet::new(arrays),
        }
    }

    pub fn zeros(spec: MlpSpec, name: &str) -> Self {
        let mut arrays = Vec::new();
        for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            arrays.push(ParamArray::zeros(
                format!("{name}.layer{i}.weight"),
                vec![fan_out, fan_in],
            ));
            arrays.push(ParamArray::zeros(
                format!("{name}.layer{i}.bias"),
                vec![fan_out],
            ));
        }
        Self {
            spec,
            params: ParamSet::new(arrays),
        }
    }

    /// Scales the final layer's weights and biases, e.g. to start a policy
    /// mean near zero.
    pub fn scale_final_layer(&mut self, s: f64) {
        let n = self.params.arrays.len();
        for a in &mut self.params.arrays[n - 2..] {
            for v in &mut a.values {
                *v *= c(s);
            }
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn from_params(spec: MlpSpec, params: ParamSet<T>) -> Result<Self> {
        let dims = spec.layer_dims();
        if params.arrays.len() != dims.len() * 2 {
            return Err(Error::config("parameter array count mismatch"));
        }
        for (i, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            if params.arrays[2 * i].shape != [fan_out, fan_in]
                || params.arrays[2 * i + 1].shape != [fan_out]
            {
                return Err(Error::config(format!("layer {i} shape mismatch")));
            }
        }
        Ok(Self { spec, params })
    }

    fn layer_w(&self, i: usize) -> &[T] {
        &self.params.arrays[2 * i].values
    }

    fn layer_b(&self, i: usize) -> &[T] {
        &self.params.arrays[2 * i + 1].values
    }

    pub fn forward(&self, input: &[T]) -> Result<MlpCache<T>> {
        if input.len() != self.spec.input_dim {
            return Err(Error::config(format!(
                "input length {} != input_dim {}",
                input.len(),
                self.spec.input_dim
            )));
        }
        let n_layers = self.spec.n_layers();
        let mut zs = Vec::with_capacity(n_layers);
        let mut xs = Vec::with_capacity(n_layers);
        let mut cur = input;
        for l in 0..n_layers {
            let out_dim = self.layer_b(l).len();
            let mut z = vec![T::zero(); out_dim];
            dense_forward(self.layer_w(l), self.layer_b(l), cur, &mut z);
            let mut x = z.clone();
            apply_activation(self.spec.layer_activation(l), &mut x);
            zs.push(z);
            xs.push(x);
            cur = &xs[l];
        }
        let mut out_norm = None;
        if self.spec.output_activation == Activation::UnitNormalize {
            let raw = zs.last().expect("layers").clone();
            let mut y = vec![T::zero(); raw.len()];
            out_norm = normalize_or_axis(&raw, &mut y);
            *xs.last_mut().expect("layers") = y;
        }
        Ok(MlpCache {
            input: input.to_vec(),
            zs,
            xs,
            out_norm,
        })
    }

    /// Convenience forward that returns only the output vector.
    pub fn output(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(input)?.output().to_vec())
    }

    /// Accumulates parameter gradients into `grads` (shaped like `params()`)
    /// and returns the input gradient.
    pub fn backward_into(
        &self,
        cache: &MlpCache<T>,
        upstream: &[T],
        grads: &mut ParamSet<T>,
    ) -> Result<Vec<T>> {
        if upstream.len() != self.spec.output_dim {
            return Err(Error::usage("upstream gradient length mismatch"));
        }
        if cache.zs.len() != self.spec.n_layers() {
            return Err(Error::usage("forward cache does not match network"));
        }
        let n_layers = self.spec.n_layers();
        let mut g: Vec<T> = upstream.to_vec();
        if self.spec.output_activation == Activation::UnitNormalize {
            let raw = &cache.zs[n_layers - 1];
            let y = &cache.xs[n_layers - 1];
            let mut dr = vec![T::zero(); raw.len()];
            normalize_backward(y, cache.out_norm, &g, &mut dr);
            g = dr;
        } else {
            let act = self.spec.layer_activation(n_layers - 1);
            for (gi, z) in g.iter_mut().zip(&cache.zs[n_layers - 1]) {
                *gi = *gi * activation_deriv(act, *z);
            }
        }
        // g now holds dL/dz of the final layer.
        for l in (0..n_layers).rev() {
            let input = if l == 0 { &cache.input } else { &cache.xs[l - 1] };
            let mut dx = vec![T::zero(); input.len()];
            {
                let (dw_arr, db_arr) = {
                    let (a, b) = grads.arrays.split_at_mut(2 * l + 1);
                    (&mut a[2 * l], &mut b[0])
                };
                dense_backward(
                    self.layer_w(l),
                    input,
                    &g,
                    &mut dw_arr.values,
                    &mut db_arr.values,
                    &mut dx,
                );
            }
            if l > 0 {
                let act = self.spec.layer_activation(l - 1);
                for (d, z) in dx.iter_mut().zip(&cache.zs[l - 1]) {
                    *d = *d * activation_deriv(act, *z);
                }
            }
            g = dx;
        }
        Ok(g)
    }

    /// One-shot backward returning `(param_grads, input_grad)`.
    pub fn backward(&self, cache: &MlpCache<T>, upstream: &[T]) -> Result<(ParamSet<T>, Vec<T>)> {
        let mut grads = self.params.zeros_like();
        let input_grad = self.backward_into(cache, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            spec: self.spec.clone(),
            params: self.params.cast(),
        }
    }
}
