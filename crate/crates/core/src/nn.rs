//! Minimal dense-network engine.
//!
//! Row-major `f64` matrices, a feedforward stack of dense layers, exact
//! reverse-mode gradients and the Adam optimizer. Everything here is plain
//! data: models can be cloned, moved across threads and serialized.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        dim("matrix data", rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        dim("matvec input", self.cols, x.len())?;
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `selfᵀ * y`.
    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        dim("transposed matvec input", self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
        Ok(out)
    }

    /// Adds `scale * a bᵀ` in place.
    fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        for (r, &ar) in a.iter().enumerate() {
            let s = ar * scale;
            if s == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, &bc) in row.iter_mut().zip(b) {
                *w += s * bc;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &self.data).expect("matrix shape")
    }
}

/// Layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    /// Only legal on the final layer.
    Softmax,
    /// Only legal on the final layer.
    Sigmoid,
}

impl Activation {
    fn is_output_only(self) -> bool {
        matches!(self, Activation::Softmax | Activation::Sigmoid)
    }

    fn apply(self, pre: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Linear => pre.to_vec(),
            Activation::Softmax => softmax(pre),
            Activation::Sigmoid => pre.iter().map(|&v| sigmoid(v)).collect(),
        }
    }

    /// Maps dL/d(output) to dL/d(pre-activation).
    fn apply_rows(self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Linear => pre.clone(),
            Activation::Sigmoid => pre.mapv(sigmoid),
            Activation::Softmax => {
                let mut out = pre.clone();
                for mut row in out.rows_mut() {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                out
            }
        }
    }

    fn backprop_rows(self, pre: &Array2<f64>, out: &Array2<f64>, grad_out: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => {
                let mut g = grad_out;
                g.zip_mut_with(pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0
                    }
                });
                g
            }
            Activation::Linear => grad_out,
            Activation::Sigmoid => {
                let mut g = grad_out;
                g.zip_mut_with(out, |g, &s| *g *= s * (1.0 - s));
                g
            }
            Activation::Softmax => {
                let mut g = grad_out;
                for (mut gr, sr) in g.rows_mut().into_iter().zip(out.rows()) {
                    let dot = gr.dot(&sr);
                    gr.zip_mut_with(&sr, |g, &s| *g = s * (*g - dot));
                }
                g
            }
        }
    }

    fn backprop(self, pre: &[f64], out: &[f64], grad_out: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => pre
                .iter()
                .zip(grad_out)
                .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Linear => grad_out.to_vec(),
            Activation::Softmax => {
                let dot: f64 = out.iter().zip(grad_out).map(|(s, g)| s * g).sum();
                out.iter().zip(grad_out).map(|(s, g)| s * (g - dot)).collect()
            }
            Activation::Sigmoid => out
                .iter()
                .zip(grad_out)
                .map(|(s, g)| g * s * (1.0 - s))
                .collect(),
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One fully connected layer: `activation(W x + b)`, `W` is out × in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Per-layer intermediates recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Pre-activation of the final layer.
    pub fn logits(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Intermediates of [`Mlp::forward_batch`], one row per sample.
#[derive(Debug, Clone)]
pub struct BatchCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl BatchCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("cache of a non-empty network")
    }
}

/// Gradient (or moment) buffers shaped like one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for every parameter of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.data.iter_mut().zip(&b.weights.data) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.data.iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// All gradient entries in layer order (weights then bias per layer).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Feedforward stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DenseLayer>", into = "Vec<DenseLayer>")]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl TryFrom<Vec<DenseLayer>> for Mlp {
    type Error = Error;

    fn try_from(layers: Vec<DenseLayer>) -> Result<Self> {
        Mlp::new(layers)
    }
}

impl From<Mlp> for Vec<DenseLayer> {
    fn from(m: Mlp) -> Self {
        m.layers
    }
}

impl Mlp {
    /// Validates layer chaining and activation placement.
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        let last = layers.len() - 1;
        for (k, l) in layers.iter().enumerate() {
            dim("layer bias", l.out_dim(), l.bias.len())?;
            if l.out_dim() == 0 || l.in_dim() == 0 {
                return Err(Error::InvalidParameter(format!("layer {k} has zero width")));
            }
            if k < last && l.activation.is_output_only() {
                return Err(Error::InvalidParameter(format!(
                    "{:?} is only allowed on the final layer (found on layer {k})",
                    l.activation
                )));
            }
            if k > 0 {
                dim("layer chaining", layers[k - 1].out_dim(), l.in_dim())?;
            }
            if !l.weights.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} parameters")));
            }
        }
        Ok(Self { layers })
    }

    /// He-initialized network: weights `N(0, 2/fan_in)`, zero biases.
    ///
    /// `sizes` lists every width including the input, so it has one more
    /// entry than `activations`.
    pub fn init(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        let mut rng = crate::rng_from_seed(seed);
        Self::init_with_rng(sizes, activations, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        dim("activation count", sizes.len() - 1, activations.len())?;
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidParameter(format!("layer width {k} is zero")));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| {
                        let n: f64 = StandardNormal.sample(rng);
                        n * std
                    })
                    .collect();
                DenseLayer {
                    weights: Matrix {
                        rows: fan_out,
                        cols: fan_in,
                        data,
                    },
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data.len() + l.bias.len()).sum()
    }

    /// All parameters in the same order as [`Gradients::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter().chain(&l.bias).copied())
            .collect()
    }

    /// Overwrites all parameters from a flat vector (see [`Mlp::flatten`]).
    pub fn set_flat(&mut self, params: &[f64]) -> Result<()> {
        dim("flat parameters", self.num_params(), params.len())?;
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.data.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().unwrap_or_default();
            }
        }
        Ok(())
    }

    /// Runs the network, keeping what [`Mlp::backward`] needs.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        dim("network input", self.input_dim(), input.len())?;
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut x = input.to_vec();
        for l in &self.layers {
            let mut pre = l.weights.matvec(&x)?;
            for (p, b) in pre.iter_mut().zip(&l.bias) {
                *p += b;
            }
            let post = l.activation.apply(&pre);
            cache.inputs.push(std::mem::replace(&mut x, post.clone()));
            cache.pre.push(pre);
            cache.post.push(post);
        }
        Ok((x, cache))
    }

    /// Output only, no cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(y, _)| y)
    }

    /// Backpropagates dL/d(output).
    ///
    /// Returns parameter gradients and dL/d(input).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        self.check_cache(cache)?;
        let last = self.layers.len() - 1;
        dim("output gradient", self.output_dim(), grad_output.len())?;
        let grad_pre = self.layers[last]
            .activation
            .backprop(&cache.pre[last], &cache.post[last], grad_output);
        self.backward_from_pre(cache, grad_pre)
    }

    /// Backpropagates dL/d(final pre-activation), skipping the output
    /// nonlinearity. This is the fused softmax/sigmoid cross-entropy path,
    /// where the logit gradient is simply `ŷ − y`.
    pub fn backward_from_logits(&self, cache: &ForwardCache, grad_logits: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        self.check_cache(cache)?;
        dim("logit gradient", self.output_dim(), grad_logits.len())?;
        self.backward_from_pre(cache, grad_logits.to_vec())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        dim("forward cache depth", self.layers.len(), cache.pre.len())?;
        for (l, pre) in self.layers.iter().zip(&cache.pre) {
            dim("forward cache width", l.out_dim(), pre.len())?;
        }
        Ok(())
    }

    fn backward_from_pre(&self, cache: &ForwardCache, mut grad_pre: Vec<f64>) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            g.weights.add_outer(&grad_pre, &cache.inputs[k], 1.0);
            g.bias.copy_from_slice(&grad_pre);
            let grad_in = layer.weights.matvec_t(&grad_pre)?;
            grad_pre = if k > 0 {
                let below = &self.layers[k - 1];
                below.activation.backprop(&cache.pre[k - 1], &cache.post[k - 1], &grad_in)
            } else {
                grad_in
            };
        }
        Ok((grads, grad_pre))
    }
}

impl Mlp {
    /// Runs a batch (one sample per row) through the network.
    pub fn forward_batch(&self, input: Array2<f64>) -> Result<(Array2<f64>, BatchCache)> {
        dim("batch input width", self.input_dim(), input.ncols())?;
        let n = self.layers.len();
        let mut cache = BatchCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut x = input;
        for l in &self.layers {
            let mut pre = x.dot(&l.weights.view().t());
            for mut row in pre.rows_mut() {
                row.iter_mut().zip(&l.bias).for_each(|(p, b)| *p += b);
            }
            let post = l.activation.apply_rows(&pre);
            cache.inputs.push(std::mem::replace(&mut x, post.clone()));
            cache.pre.push(pre);
            cache.post.push(post);
        }
        Ok((x, cache))
    }

    /// Batched [`Mlp::backward`]; parameter gradients are summed over rows.
    pub fn backward_batch(&self, cache: &BatchCache, grad_output: Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        self.check_batch_cache(cache, &grad_output)?;
        let last = self.layers.len() - 1;
        let g = self.layers[last]
            .activation
            .backprop_rows(&cache.pre[last], &cache.post[last], grad_output);
        self.backward_batch_from_pre(cache, g)
    }

    /// Batched [`Mlp::backward_from_logits`]; parameter gradients are summed over rows.
    pub fn backward_batch_from_logits(
        &self,
        cache: &BatchCache,
        grad_logits: Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        self.check_batch_cache(cache, &grad_logits)?;
        self.backward_batch_from_pre(cache, grad_logits)
    }

    fn check_batch_cache(&self, cache: &BatchCache, grad: &Array2<f64>) -> Result<()> {
        dim("forward cache depth", self.layers.len(), cache.pre.len())?;
        for (l, pre) in self.layers.iter().zip(&cache.pre) {
            dim("forward cache width", l.out_dim(), pre.ncols())?;
        }
        dim("output gradient width", self.output_dim(), grad.ncols())?;
        dim("output gradient rows", cache.pre[0].nrows(), grad.nrows())
    }

    fn backward_batch_from_pre(&self, cache: &BatchCache, mut g: Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let gw = g.t().dot(&cache.inputs[k]);
            let out = &mut grads.layers[k];
            out.weights.data = gw.iter().copied().collect();
            out.bias = g.sum_axis(Axis(0)).to_vec();
            let grad_in = g.dot(&layer.weights.view());
            g = if k > 0 {
                let below = &self.layers[k - 1];
                below.activation.backprop_rows(&cache.pre[k - 1], &cache.post[k - 1], grad_in)
            } else {
                grad_in
            };
        }
        Ok((grads, g))
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    /// Learning rate 0.01, β1 = 0.99, β2 = 0.999, ε = 1e-8.
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.99,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m1: Gradients,
    m2: Gradients,
}

impl Adam {
    pub fn new(model: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m1: Gradients::zeros_like(model),
            m2: Gradients::zeros_like(model),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.m1
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.m2
    }

    /// Applies one bias-corrected Adam update.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) -> Result<()> {
        dim("gradient layers", model.layers.len(), grads.layers.len())?;
        dim("optimizer layers", model.layers.len(), self.m1.layers.len())?;
        for (k, (l, g)) in model.layers.iter().zip(&grads.layers).enumerate() {
            dim("weight gradient", l.weights.data.len(), g.weights.data.len())?;
            dim("bias gradient", l.bias.len(), g.bias.len())?;
            if !g.weights.is_finite() {
                return Err(Error::NonFinite(format!("gradient of layer {k} weights")));
            }
            if g.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of layer {k} bias")));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for (k, layer) in model.layers.iter_mut().enumerate() {
            let g = &grads.layers[k];
            let (m1, m2) = (&mut self.m1.layers[k], &mut self.m2.layers[k]);
            let params = layer.weights.data.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.data.iter().chain(&g.bias);
            let m1s = m1.weights.data.iter_mut().chain(m1.bias.iter_mut());
            let m2s = m2.weights.data.iter_mut().chain(m2.bias.iter_mut());
            for (((p, &gi), a), b) in params.zip(gs).zip(m1s).zip(m2s) {
                *a = beta1 * *a + (1.0 - beta1) * gi;
                *b = beta2 * *b + (1.0 - beta2) * gi * gi;
                let m_hat = *a / c1;
                let v_hat = *b / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_identity(n: usize) -> Mlp {
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            w.set(i, i, 1.0);
        }
        Mlp::new(vec![DenseLayer {
            weights: w,
            bias: vec![0.0; n],
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let net = Mlp::new(vec![DenseLayer {
            weights: Matrix::zeros(2, 3),
            bias: vec![0.0; 2],
            activation: Activation::Softmax,
        }])
        .unwrap();
        let (y, _) = net.forward(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn relu_clips_negatives() {
        let mut net = linear_identity(2);
        net.layers[0].activation = Activation::Relu;
        assert_eq!(net.predict(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn batch_matches_per_sample() {
        let acts = [Activation::Relu, Activation::Relu, Activation::Softmax];
        let net = Mlp::init(&[3, 5, 4, 3], &acts, 4).unwrap();
        let rows = [[0.3, -1.2, 0.8], [1.5, 0.1, -0.4], [-0.7, 0.9, 0.2]];
        let x = Array2::from_shape_fn((3, 3), |(r, c)| rows[r][c]);
        let (y, cache) = net.forward_batch(x).unwrap();
        let g = Array2::from_shape_fn((3, 3), |(r, c)| (r as f64 + 1.0) * (c as f64 - 1.0));
        let (gb, gx) = net.backward_batch(&cache, g.clone()).unwrap();
        let (gl, _) = net.backward_batch_from_logits(&cache, g.clone()).unwrap();

        let mut sum = Gradients::zeros_like(&net);
        let mut sum_l = Gradients::zeros_like(&net);
        for r in 0..3 {
            let (yr, c) = net.forward(&rows[r]).unwrap();
            for (a, b) in yr.iter().zip(y.row(r)) {
                assert!((a - b).abs() < 1e-14);
            }
            let gr = g.row(r).to_vec();
            let (p, xr) = net.backward(&c, &gr).unwrap();
            sum.accumulate(&p);
            for (a, b) in xr.iter().zip(gx.row(r)) {
                assert!((a - b).abs() < 1e-13);
            }
            sum_l.accumulate(&net.backward_from_logits(&c, &gr).unwrap().0);
        }
        for (a, b) in sum.flatten().iter().zip(gb.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in sum_l.flatten().iter().zip(gl.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let s = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((s[0] - 0.5).abs() < 1e-15 && s[2] == 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = linear_identity(3);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn softmax_only_on_last_layer() {
        let err = Mlp::init(&[2, 3, 2], &[Activation::Softmax, Activation::Linear], 1);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn zero_width_layer_is_rejected() {
        assert!(Mlp::init(&[2, 0, 2], &[Activation::Relu, Activation::Linear], 1).is_err());
    }

    #[test]
    fn identity_layer_input_gradient() {
        let net = linear_identity(4);
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let (_, gin) = net.backward(&cache, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(gin, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let net = Mlp::init(&[3, 5, 2], &[Activation::Relu, Activation::Softmax], 4).unwrap();
        let (_, cache) = net.forward(&[0.5, -0.2, 1.0]).unwrap();
        let (g, gin) = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let a = Mlp::init(&[3, 5, 2], &[Activation::Relu, Activation::Linear], 4).unwrap();
        let b = Mlp::init(&[3, 4, 2], &[Activation::Relu, Activation::Linear], 4).unwrap();
        let (_, cache) = a.forward(&[0.5, -0.2, 1.0]).unwrap();
        assert!(b.backward(&cache, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let acts = [Activation::Relu, Activation::Linear];
        let a = Mlp::init(&[4, 8, 2], &acts, 7).unwrap();
        let b = Mlp::init(&[4, 8, 2], &acts, 7).unwrap();
        let c = Mlp::init(&[4, 8, 2], &acts, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flatten(), c.flatten());
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn he_init_variance() {
        let net = Mlp::init(&[64, 64], &[Activation::Relu], 11).unwrap();
        let w = net.layers[0].weights.data();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        let target = 2.0 / 64.0;
        assert!((var - target).abs() < 0.2 * target, "var {var}");
    }

    #[test]
    fn adam_zero_grads_leave_params() {
        let mut net = Mlp::init(&[2, 3], &[Activation::Linear], 2).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, AdamConfig::default());
        let g = Gradients::zeros_like(&net);
        opt.step(&mut net, &g).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_first_step_is_minus_lr() {
        // one scalar weight, constant unit gradient:
        // m̂ = 1, v̂ = 1, update = lr / (1 + eps)
        let mut net = Mlp::new(vec![DenseLayer {
            weights: Matrix::from_vec(1, 1, vec![0.0]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Linear,
        }])
        .unwrap();
        let mut opt = Adam::new(&net, AdamConfig::default());
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights.set(0, 0, 1.0);
        opt.step(&mut net, &g).unwrap();
        let w = net.layers[0].weights.get(0, 0);
        assert!((w + 0.01 / (1.0 + 1e-8)).abs() < 1e-15, "w = {w}");
        // the untouched bias stays put
        assert_eq!(net.layers[0].bias[0], 0.0);
    }

    #[test]
    fn adam_symmetric_params_move_together() {
        let mut net = Mlp::new(vec![DenseLayer {
            weights: Matrix::from_vec(1, 2, vec![0.3, 0.3]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Linear,
        }])
        .unwrap();
        let mut opt = Adam::new(&net, AdamConfig::default());
        let mut g = Gradients::zeros_like(&net);
        for _ in 0..5 {
            g.layers[0].weights.data_mut().copy_from_slice(&[0.7, 0.7]);
            opt.step(&mut net, &g).unwrap();
        }
        let w = net.layers[0].weights.data();
        assert_eq!(w[0].to_bits(), w[1].to_bits());
    }

    #[test]
    fn adam_rejects_nan_and_names_block() {
        let mut net = Mlp::init(&[2, 3, 1], &[Activation::Relu, Activation::Linear], 3).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, AdamConfig::default());
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].bias[0] = f64::NAN;
        let err = opt.step(&mut net, &g).unwrap_err();
        assert!(err.to_string().contains("layer 1 bias"), "{err}");
        assert_eq!(net, before);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let net = Mlp::init(&[4, 6, 3], &[Activation::Relu, Activation::Softmax], 9).unwrap();
        let s = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&s).unwrap();
        assert_eq!(net, back);
    }
}
