//! Dense feed-forward networks: forward pass, softmax cross-entropy, exact
//! backpropagation and plain SGD.
//!
//! Gradients follow the batch-mean loss convention for weights and biases, but
//! the per-sample activation gradients in [`GradientSet`] are kept unreduced:
//! row `s` holds `d loss_s / d a` for sample `s` alone. That row is exactly what
//! a label party sends back across a cut for that sample, up to the uniform
//! `1/|B|` factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation. ReLU uses 0 at the kink.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One fully connected layer computing `act(x W^T + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weights.rows()
    }
}

/// Architecture and seed of a network. Hidden layers use `hidden_activations`,
/// the output layer is always linear (it produces logits).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input width first, class count last.
    pub layer_widths: Vec<usize>,
    /// One entry per hidden layer, i.e. `layer_widths.len() - 2` entries.
    pub hidden_activations: Vec<Activation>,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// ReLU on every hidden layer.
    pub fn relu(layer_widths: &[usize], init_seed: u64) -> Self {
        let hidden = layer_widths.len().saturating_sub(2);
        Self {
            layer_widths: layer_widths.to_vec(),
            hidden_activations: vec![Activation::Relu; hidden],
            init_seed,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len().saturating_sub(1)
    }

    pub fn classes(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output width, got {:?}",
                self.layer_widths
            )));
        }
        if let Some(i) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("width {i} is zero")));
        }
        if self.hidden_activations.len() != self.layer_widths.len() - 2 {
            return Err(Error::InvalidSpec(format!(
                "{} hidden activations for {} hidden layers",
                self.hidden_activations.len(),
                self.layer_widths.len() - 2
            )));
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// Pre-activations, one per layer.
    pub pre: Vec<Matrix>,
    /// Post-activations, one per layer. The last one is the network output.
    pub post: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }

    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    /// Input to layer `l`.
    pub fn layer_input(&self, l: usize) -> &Matrix {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct GradientSet {
    /// Batch-mean weight gradients, one per layer, `out x in`.
    pub weights: Vec<Matrix>,
    /// Batch-mean bias gradients, one per layer.
    pub biases: Vec<Vec<f64>>,
    /// Per-sample gradients of the loss w.r.t. each layer's output
    /// activation, unreduced, one row per sample. For the output layer this
    /// is the logits gradient.
    pub activations: Vec<Matrix>,
    /// Per-sample gradient w.r.t. the network input, when requested.
    pub input: Option<Matrix>,
    /// Per-sample gradient w.r.t. each layer's pre-activation.
    pub deltas: Vec<Matrix>,
}

impl GradientSet {
    /// Unreduced weight gradient of `layer` for one sample: the outer product
    /// of that sample's pre-activation gradient with the layer input.
    pub fn sample_weight_gradient(&self, trace: &ForwardTrace, layer: usize, sample: usize) -> Matrix {
        let delta = self.deltas[layer].row(sample);
        let input = trace.layer_input(layer).row(sample);
        let mut out = Matrix::zeros(delta.len(), input.len());
        for (i, d) in delta.iter().enumerate() {
            for (o, a) in out.row_mut(i).iter_mut().zip(input) {
                *o = d * a;
            }
        }
        out
    }

    pub fn logits(&self) -> &Matrix {
        self.activations.last().expect("gradient set has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
}

impl Network {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and zero biases,
    /// drawn layer by layer in row-major order from `spec.init_seed`.
    pub fn init(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let n = spec.num_layers();
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let activation = if l + 1 == n { Activation::Identity } else { spec.hidden_activations[l] };
            layers.push(DenseLayer {
                weights: Matrix::from_vec(fan_out, fan_in, data)?,
                bias: vec![0.0; fan_out],
                activation,
            });
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].input_width() != pair[0].output_width() {
                return Err(Error::InvalidSpec(format!(
                    "layer {} expects width {}, layer {l} produces {}",
                    l + 1,
                    pair[1].input_width(),
                    pair[0].output_width()
                )));
            }
        }
        if let Some(l) = layers.iter().position(|layer| layer.bias.len() != layer.output_width()) {
            return Err(Error::InvalidSpec(format!("layer {l} bias length mismatch")));
        }
        Ok(Self { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        if batch.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "batch has {} features, network expects {}",
                batch.cols(),
                self.input_width()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().unwrap_or(batch);
            let mut z = x.matmul_transb(&layer.weights)?;
            z.add_row_vector(&layer.bias)?;
            let mut a = z.clone();
            let act = layer.activation;
            a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace { input: batch.clone(), pre, post })
    }

    /// Class index with the largest output per row; ties go to the lower index.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        let trace = self.forward(batch)?;
        Ok(trace.output().row_iter().map(argmax).collect())
    }

    /// Backward pass for the softmax cross-entropy loss of `trace`'s logits.
    pub fn backward(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<GradientSet> {
        let (_, probs) = softmax_cross_entropy(trace.output(), labels)?;
        let logit_grad = logit_gradient(&probs, labels)?;
        self.backward_from(trace, &logit_grad, false)
    }

    /// Backpropagates an arbitrary per-sample gradient w.r.t. the network
    /// output. `output_grad` row `s` must be `d loss_s / d output_s`; weight and
    /// bias gradients are averaged over the batch.
    pub fn backward_from(
        &self,
        trace: &ForwardTrace,
        output_grad: &Matrix,
        want_input_grad: bool,
    ) -> Result<GradientSet> {
        let n = self.layers.len();
        if trace.pre.len() != n || trace.post.len() != n {
            return Err(Error::Shape(format!(
                "trace has {} layers, network has {n}",
                trace.pre.len()
            )));
        }
        let batch = trace.batch_size();
        if output_grad.shape() != (batch, self.output_width()) {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, expected {batch}x{}",
                output_grad.rows(),
                output_grad.cols(),
                self.output_width()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if trace.pre[l].shape() != (batch, layer.output_width()) {
                return Err(Error::Shape(format!("trace layer {l} does not match the network")));
            }
        }

        let inv_batch = 1.0 / batch.max(1) as f64;
        let mut weights = vec![Matrix::zeros(0, 0); n];
        let mut biases = vec![Vec::new(); n];
        let mut activations = vec![Matrix::zeros(0, 0); n];
        let mut deltas = vec![Matrix::zeros(0, 0); n];
        let mut input = None;

        let mut upstream = output_grad.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let act = layer.activation;
            let mut delta = upstream.clone();
            for (d, z) in delta.as_mut_slice().iter_mut().zip(trace.pre[l].as_slice()) {
                *d *= act.derivative(*z);
            }
            let mut gw = delta.matmul_transa(trace.layer_input(l))?;
            gw.scale(inv_batch);
            let mut gb = delta.column_sums();
            gb.iter_mut().for_each(|b| *b *= inv_batch);

            if l > 0 || want_input_grad {
                let down = delta.matmul(&layer.weights)?;
                if l == 0 {
                    input = Some(down.clone());
                }
                activations[l] = std::mem::replace(&mut upstream, down);
            } else {
                activations[l] = std::mem::replace(&mut upstream, Matrix::zeros(0, 0));
            }
            weights[l] = gw;
            biases[l] = gb;
            deltas[l] = delta;
        }
        Ok(GradientSet { weights, biases, activations, input, deltas })
    }

    /// `W <- W - lr * grad` for every weight and bias.
    pub fn sgd_step(&mut self, grads: &GradientSet, lr: f64) -> Result<()> {
        if grads.weights.len() != self.layers.len() || grads.biases.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} gradient layers for {} network layers",
                grads.weights.len(),
                self.layers.len()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if grads.weights[l].shape() != layer.weights.shape() || grads.biases[l].len() != layer.bias.len() {
                return Err(Error::Shape(format!("gradient for layer {l} has the wrong shape")));
            }
        }
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            layer.weights.axpy_sub(lr, gw)?;
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
        Ok(())
    }

    /// Mean softmax cross-entropy of the network on a labelled batch.
    pub fn loss(&self, batch: &Matrix, labels: &[usize]) -> Result<f64> {
        let trace = self.forward(batch)?;
        Ok(softmax_cross_entropy(trace.output(), labels)?.0)
    }
}

/// Row-wise softmax and the batch-mean cross-entropy against `labels`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let k = logits.cols();
    if let Some(&label) = labels.iter().find(|&&c| c >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let mut probs = logits.clone();
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = probs.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        // -log softmax_c = log(sum exp(z - max)) - (z_c - max)
        total += sum.ln() - (logits.get(r, label) - max);
        row.iter_mut().for_each(|v| *v /= sum);
    }
    if !total.is_finite() || !probs.all_finite() {
        return Err(Error::NonFinite("softmax cross-entropy".into()));
    }
    let loss = if labels.is_empty() { 0.0 } else { total / labels.len() as f64 };
    Ok((loss, probs))
}

/// Per-sample logits gradient `probs - onehot(labels)`.
pub fn logit_gradient(probs: &Matrix, labels: &[usize]) -> Result<Matrix> {
    if labels.len() != probs.rows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), probs.rows())));
    }
    let mut g = probs.clone();
    for (r, &c) in labels.iter().enumerate() {
        if c >= g.cols() {
            return Err(Error::LabelOutOfRange { label: c, classes: g.cols() });
        }
        g.row_mut(r)[c] -= 1.0;
    }
    Ok(g)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `predicted` equal to `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Network {
        Network::from_layers(vec![DenseLayer { weights, bias, activation }]).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let spec = NetworkSpec::relu(&[6, 5, 3], 11);
        assert_eq!(Network::init(&spec).unwrap(), Network::init(&spec).unwrap());
        let other = NetworkSpec::relu(&[6, 5, 3], 12);
        assert_ne!(Network::init(&spec).unwrap(), Network::init(&other).unwrap());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = Network::init(&NetworkSpec::relu(&[4, 3], 7)).unwrap();
        assert!(net.layers[0].weights.as_slice().iter().all(|w| *w > -0.5 && *w < 0.5));
        assert!(net.layers[0].bias.iter().all(|b| *b == 0.0));
        assert_eq!(net.layers[0].activation, Activation::Identity);
    }

    #[test]
    fn init_rejects_degenerate_specs() {
        assert!(Network::init(&NetworkSpec::relu(&[2], 0)).is_err());
        assert!(Network::init(&NetworkSpec::relu(&[3, 0, 2], 0)).is_err());
        let mut spec = NetworkSpec::relu(&[3, 4, 2], 0);
        spec.hidden_activations.clear();
        assert!(Network::init(&spec).is_err());
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(Matrix::identity(3), vec![0.0; 3], Activation::Identity);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(net.forward(&x).unwrap().output(), &x);
    }

    #[test]
    fn relu_zeroes_negative_preactivations() {
        let net = single(Matrix::identity(2), vec![-10.0, -10.0], Activation::Relu);
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(net.forward(&x).unwrap().output().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trace_has_one_entry_per_layer() {
        let net = Network::init(&NetworkSpec::relu(&[5, 4, 4, 3], 1)).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4, 0.5]]).unwrap();
        let trace = net.forward(&x).unwrap();
        assert_eq!(trace.post.len(), 3);
        assert_eq!(trace.output().shape(), (1, 3));
        assert!(net.forward(&Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let (loss, probs) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        assert!(probs.as_slice().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn saturated_logits_give_tiny_loss() {
        let logits = Matrix::from_rows(&[vec![10.0, 0.0]]).unwrap();
        assert!(softmax_cross_entropy(&logits, &[0]).unwrap().0 < 1e-4);
    }

    #[test]
    fn cross_entropy_matches_closed_form() {
        // ln(e + e^2 + e^3) - 3, evaluated independently in Python:
        // math.log(math.e + math.e**2 + math.e**3) - 3
        let expected = 0.40760596444438013;
        let logits = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let (loss, probs) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!((loss - expected).abs() < 1e-14, "{loss}");
        assert!((probs.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let logits = Matrix::from_rows(&[vec![1000.0, -1000.0, 999.0]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!((loss - (1.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let logits = Matrix::zeros(1, 3);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn logit_gradient_is_probs_minus_onehot() {
        let probs = Matrix::from_rows(&[vec![0.7, 0.2, 0.1]]).unwrap();
        let g = logit_gradient(&probs, &[0]).unwrap();
        let expect = [-0.3, 0.2, 0.1];
        for (a, b) in g.row(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let a = Network::init(&NetworkSpec::relu(&[3, 4, 2], 0)).unwrap();
        let b = Network::init(&NetworkSpec::relu(&[3, 5, 2], 0)).unwrap();
        let trace = a.forward(&Matrix::zeros(2, 3)).unwrap();
        assert!(b.backward(&trace, &[0, 1]).is_err());
    }

    #[test]
    fn sgd_step_arithmetic() {
        let mut net = single(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.0], Activation::Identity);
        let grads = GradientSet {
            weights: vec![Matrix::from_vec(1, 1, vec![0.5]).unwrap()],
            biases: vec![vec![0.0]],
            activations: vec![],
            input: None,
            deltas: vec![],
        };
        net.sgd_step(&grads, 0.1).unwrap();
        assert!((net.layers[0].weights.get(0, 0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_with_zero_rate_or_self_gradient() {
        let mut net = Network::init(&NetworkSpec::relu(&[3, 4, 2], 5)).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.2, 0.9], vec![0.1, 0.5, -0.4]]).unwrap();
        let trace = net.forward(&x).unwrap();
        let grads = net.backward(&trace, &[1, 0]).unwrap();
        let before = net.clone();
        net.sgd_step(&grads, 0.0).unwrap();
        assert_eq!(net, before);

        let own = GradientSet {
            weights: net.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: net.layers.iter().map(|l| l.bias.clone()).collect(),
            activations: vec![],
            input: None,
            deltas: vec![],
        };
        net.sgd_step(&own, 1.0).unwrap();
        assert!(net.layers.iter().all(|l| l.weights.as_slice().iter().all(|w| *w == 0.0)));
    }

    #[test]
    fn sgd_rejects_mismatched_gradients() {
        let mut net = Network::init(&NetworkSpec::relu(&[3, 4, 2], 5)).unwrap();
        let other = Network::init(&NetworkSpec::relu(&[3, 5, 2], 5)).unwrap();
        let trace = other.forward(&Matrix::zeros(1, 3)).unwrap();
        let grads = other.backward(&trace, &[0]).unwrap();
        assert!(net.sgd_step(&grads, 0.1).is_err());
    }
}
