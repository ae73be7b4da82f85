//! Minimal dense neural-network engine: forward, backward, SGD.
//!
//! Models are stacks of affine layers with relu or identity activations,
//! stored in 64-bit floats. Gradients are exact (no approximation), which
//! the test suite pins down against central finite differences.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer: `y = activation(x * W^T + b)`.
///
/// Weights have shape `(out_dim, in_dim)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(format!(
                "layer: weight rows {} vs bias length {}",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Architecture description: hidden layers are relu, the output layer is
/// linear. `hidden` may be empty for a single affine layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            output_dim,
        }
    }
}

/// A feed-forward network with at least one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

impl MlpModel {
    /// Builds from explicit layers; adjacent dimensions must chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("model needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer output {} does not chain into next input {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        Ok(MlpModel { layers })
    }

    /// Xavier-uniform initialization: weights in
    /// `[-sqrt(6/(in+out)), +sqrt(6/(in+out))]`, biases zero.
    pub fn from_spec(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        use rand::Rng;
        if spec.input_dim == 0 || spec.output_dim == 0 || spec.hidden.contains(&0) {
            return Err(Error::config("model dimensions must be positive"));
        }
        let mut dims = Vec::with_capacity(spec.hidden.len() + 2);
        dims.push(spec.input_dim);
        dims.extend_from_slice(&spec.hidden);
        dims.push(spec.output_dim);

        let depth = dims.len() - 1;
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in w.data_mut() {
                *v = limit * (2.0 * rng.random::<f64>() - 1.0);
            }
            let activation = if l + 1 == depth {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                weights: w,
                bias: vec![0.0; fan_out],
                activation,
            });
        }
        Ok(MlpModel { layers })
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// All parameters flattened (weights row-major, then bias, per layer).
    /// Used for drift and determinism checks.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Batched forward pass; the trace keeps every intermediate needed by
    /// [`MlpModel::backward`].
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "forward: input has {} columns but the model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.depth() + 1);
        let mut pre_activations = Vec::with_capacity(self.depth());
        activations.push(x.clone());
        for layer in &self.layers {
            let prev = activations.last().unwrap();
            let mut z = prev.mul_bt(&layer.weights);
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                for (v, b) in row.iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let mut a = z.clone();
            for v in a.data_mut() {
                *v = layer.activation.apply(*v);
            }
            pre_activations.push(z);
            activations.push(a);
        }
        let output = activations.last().unwrap().clone();
        Ok((
            output,
            ForwardTrace {
                activations,
                pre_activations,
            },
        ))
    }

    /// Backpropagation from `upstream = dL/d(output)`.
    ///
    /// Returns parameter gradients (summed over the batch, so any batch
    /// averaging must already live in `upstream`) and the gradient with
    /// respect to the forward input.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Matrix) -> Result<(ParamGrads, Matrix)> {
        if trace.pre_activations.len() != self.depth() {
            return Err(Error::state(format!(
                "backward: trace depth {} does not match model depth {}",
                trace.pre_activations.len(),
                self.depth()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if trace.activations[l].cols() != layer.in_dim()
                || trace.pre_activations[l].cols() != layer.out_dim()
            {
                return Err(Error::state(format!(
                    "backward: trace shapes do not match model at layer {l}"
                )));
            }
        }
        let last = self.depth() - 1;
        if upstream.rows() != trace.pre_activations[last].rows()
            || upstream.cols() != self.output_dim()
        {
            return Err(Error::shape(format!(
                "backward: upstream is {}x{} but the forward output was {}x{}",
                upstream.rows(),
                upstream.cols(),
                trace.pre_activations[last].rows(),
                self.output_dim()
            )));
        }

        let mut grads = Vec::with_capacity(self.depth());
        let mut delta = upstream.clone();
        for l in (0..self.depth()).rev() {
            let layer = &self.layers[l];
            let z = &trace.pre_activations[l];
            for (d, zv) in delta.data_mut().iter_mut().zip(z.data()) {
                *d *= layer.activation.grad(*zv);
            }
            let d_weights = delta.tmul(&trace.activations[l]);
            let mut d_bias = vec![0.0; layer.out_dim()];
            for r in 0..delta.rows() {
                for (b, v) in d_bias.iter_mut().zip(delta.row(r)) {
                    *b += v;
                }
            }
            let next_delta = delta.mul(&layer.weights);
            grads.push(LayerGrads { d_weights, d_bias });
            delta = next_delta;
        }
        grads.reverse();
        Ok((ParamGrads { layers: grads }, delta))
    }

    /// In-place SGD update: `p <- p - lr * g`.
    pub fn sgd_step(&mut self, grads: &ParamGrads, lr: f64) -> Result<()> {
        if grads.layers.len() != self.depth() {
            return Err(Error::state(format!(
                "sgd_step: gradient depth {} does not match model depth {}",
                grads.layers.len(),
                self.depth()
            )));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if g.d_weights.rows() != layer.weights.rows()
                || g.d_weights.cols() != layer.weights.cols()
                || g.d_bias.len() != layer.bias.len()
            {
                return Err(Error::state("sgd_step: gradient shape mismatch".to_string()));
            }
            for (w, dw) in layer.weights.data_mut().iter_mut().zip(g.d_weights.data()) {
                *w -= lr * dw;
            }
            for (b, db) in layer.bias.iter_mut().zip(&g.d_bias) {
                *b -= lr * db;
            }
        }
        Ok(())
    }
}

/// Per-layer intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l+1]` the output of layer `l`.
    activations: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardTrace {
    #[inline]
    pub fn depth(&self) -> usize {
        self.pre_activations.len()
    }

    #[inline]
    pub fn batch_rows(&self) -> usize {
        self.activations[0].rows()
    }
}

/// Gradients mirroring a model's parameter shapes.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
}

impl ParamGrads {
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for v in layer.d_weights.data_mut() {
                *v *= factor;
            }
            for v in &mut layer.d_bias {
                *v *= factor;
            }
        }
    }
}

/// Mini-batch SGD hyperparameters for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-softmax (shared by the loss below).
fn log_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v = *v - max - log_sum;
        }
    }
    out
}

/// Cross-entropy against per-row target distributions.
///
/// `loss = -mean_rows sum_c target * log softmax(logits)`;
/// `grad = (softmax(logits) - targets) / rows`.
pub fn cross_entropy_soft(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if logits.rows() != targets.rows() || logits.cols() != targets.cols() {
        return Err(Error::shape(format!(
            "cross_entropy_soft: logits {}x{} vs targets {}x{}",
            logits.rows(),
            logits.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    for r in 0..targets.rows() {
        let sum: f64 = targets.row(r).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "target row {r} sums to {sum}, expected 1"
            )));
        }
    }
    let n = logits.rows() as f64;
    let log_p = log_softmax(logits);
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        for (t, lp) in targets.row(r).iter().zip(log_p.row(r)) {
            if *t != 0.0 {
                loss -= t * lp;
            }
        }
    }
    loss /= n;
    let mut grad = softmax(logits);
    for (g, t) in grad.data_mut().iter_mut().zip(targets.data()) {
        *g = (*g - t) / n;
    }
    Ok((loss, grad))
}

/// One-hot rows for hard class labels.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(labels.len(), n_classes);
    for (r, &c) in labels.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::validation(format!(
                "label {c} out of range for {n_classes} classes"
            )));
        }
        out.set(r, c, 1.0);
    }
    Ok(out)
}

/// Plain mini-batch SGD fit against hard labels. Shared by the
/// distillation teacher and the attack inference heads.
pub fn train_classifier(
    model: &mut MlpModel,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    use rand::seq::SliceRandom;
    if x.rows() != y.len() {
        return Err(Error::shape(format!(
            "train_classifier: {} rows vs {} labels",
            x.rows(),
            y.len()
        )));
    }
    let targets = one_hot(y, n_classes)?;
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for batch in order.chunks(batch_size.max(1)) {
            let xb = x.select_rows(batch);
            let tb = targets.select_rows(batch);
            let (logits, trace) = model.forward(&xb)?;
            let (_, grad) = cross_entropy_soft(&logits, &tb)?;
            let (grads, _) = model.backward(&trace, &grad)?;
            model.sgd_step(&grads, lr)?;
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a single-logit head.
///
/// `targets[r]` is the probability of class 1 for row `r`;
/// `grad = (sigmoid(z) - target) / rows`.
pub fn logistic_cross_entropy(logits: &Matrix, targets: &[f64]) -> Result<(f64, Matrix)> {
    if logits.cols() != 1 {
        return Err(Error::shape(format!(
            "logistic_cross_entropy: expected a single-logit column, got {} columns",
            logits.cols()
        )));
    }
    if logits.rows() != targets.len() {
        return Err(Error::shape(format!(
            "logistic_cross_entropy: {} rows vs {} targets",
            logits.rows(),
            targets.len()
        )));
    }
    let n = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), 1);
    for r in 0..logits.rows() {
        let z = logits.get(r, 0);
        let t = targets[r];
        // log(1+e^-|z|) form avoids overflow for large |z|.
        let log1pe = (-z.abs()).exp().ln_1p();
        loss += z.max(0.0) - z * t + log1pe;
        grad.set(r, 0, (sigmoid(z) - t) / n);
    }
    Ok((loss / n, grad))
}
