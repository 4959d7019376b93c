//! From-scratch feed-forward ReLU network: forward pass, cross-entropy
//! loss, analytic backpropagation, Adam updates, and binary model
//! serialization. All math is f64.
//!
//! Class convention is fixed: output index 0 is benign, 1 is malicious.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurespace::FeatureVector;

pub const CLASS_BENIGN: usize = 0;
pub const CLASS_MALICIOUS: usize = 1;

/// Probability floor used when taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

const MODEL_MAGIC: &[u8; 8] = b"VDMLPM01";

pub type Result<T> = std::result::Result<T, MlpError>;

#[derive(Debug, thiserror::Error)]
pub enum MlpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite values encountered in the network")]
    NonFiniteWeights,
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// out x in
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Feed-forward ReLU network with a softmax output over two classes.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
}

/// Training hyperparameters. `hidden` fixes the architecture between the
/// input dimension and the two output classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 50,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            hidden: vec![200, 200],
        }
    }
}

impl MlpModel {
    /// Glorot-uniform initialization over the given layer dimensions
    /// (input first, output last), driven by the RNG for determinism.
    pub fn new_random(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weights = Array2::zeros((fan_out, fan_in));
            for v in weights.iter_mut() {
                *v = rng.random_range(-scale..=scale);
            }
            layers.push(DenseLayer {
                weights,
                bias: Array1::zeros(fan_out),
            });
        }
        MlpModel { layers }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Self {
        MlpModel { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weights.nrows()).unwrap_or(0)
    }

    pub fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Predicted class index with ties broken toward benign.
    pub fn predict(&self, x: &ArrayView1<f64>) -> Result<usize> {
        let (logits, _) = forward(self, x)?;
        Ok(if logits[CLASS_MALICIOUS] > logits[CLASS_BENIGN] {
            CLASS_MALICIOUS
        } else {
            CLASS_BENIGN
        })
    }

    pub fn predict_features(&self, x: &FeatureVector) -> Result<usize> {
        self.predict(&features_to_array(x).view())
    }
}

/// Feature vector as a 0.0/1.0 input array.
pub fn features_to_array(x: &FeatureVector) -> Array1<f64> {
    Array1::from_iter((0..x.len()).map(|i| if x.get(i) { 1.0 } else { 0.0 }))
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Forward pass: returns (logits, softmax probabilities).
pub fn forward(model: &MlpModel, x: &ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    model.check_input(x.len())?;
    let mut a = x.to_owned();
    for (i, layer) in model.layers.iter().enumerate() {
        let mut z = layer.weights.dot(&a) + &layer.bias;
        if i + 1 < model.layers.len() {
            z.mapv_inplace(|v| v.max(0.0));
        }
        a = z;
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(MlpError::NonFiniteWeights);
    }
    let probs = softmax(&a);
    Ok((a, probs))
}

/// Cross-entropy loss of a probability vector against the true class,
/// with the probability clamped at the floor.
pub fn loss_ce(probs: &ArrayView1<f64>, y: usize) -> f64 {
    -probs[y].max(PROB_FLOOR).ln()
}

/// Gradients of the cross-entropy loss for one or more samples.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Gradient w.r.t. the input of the first sample (per-sample use).
    pub input: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
            input: Array1::zeros(model.input_dim()),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
        self.input.mapv_inplace(|v| v * factor);
        self
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
        self.input += &other.input;
    }
}

/// Batched forward pass keeping intermediate activations for backprop.
/// `x` is (batch, in); activations are (batch, width) per layer.
pub struct BatchPass {
    pub pre: Vec<Array2<f64>>,
    pub post: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

pub fn forward_batch(model: &MlpModel, x: &ArrayView2<f64>) -> Result<BatchPass> {
    model.check_input(x.ncols())?;
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut post = Vec::with_capacity(model.layers.len());
    let mut a = x.to_owned();
    for (i, layer) in model.layers.iter().enumerate() {
        let z = a.dot(&layer.weights.t()) + &layer.bias;
        pre.push(z.clone());
        a = if i + 1 < model.layers.len() {
            z.mapv(|v| v.max(0.0))
        } else {
            z
        };
        post.push(a.clone());
    }
    let logits = a;
    let max = logits.map_axis(Axis(1), |row| {
        row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    });
    let mut probs = logits.clone();
    for (mut row, m) in probs.rows_mut().into_iter().zip(max.iter()) {
        row.mapv_inplace(|z| (z - m).exp());
        let s = row.sum();
        row.mapv_inplace(|z| z / s);
    }
    Ok(BatchPass {
        pre,
        post,
        logits,
        probs,
    })
}

/// Backprop from per-sample logit adjoints; returns summed parameter
/// gradients and the per-sample input gradients.
pub fn backward_batch_from(
    model: &MlpModel,
    x: &ArrayView2<f64>,
    pass: &BatchPass,
    dlogits: &Array2<f64>,
) -> (Gradients, Array2<f64>) {
    let n_layers = model.layers.len();
    let mut grads = Gradients::zeros_like(model);
    let mut delta = dlogits.clone(); // (batch, out)
    for l in (0..n_layers).rev() {
        let input_act: Array2<f64> = if l == 0 {
            x.to_owned()
        } else {
            pass.post[l - 1].clone()
        };
        grads.weights[l] = delta.t().dot(&input_act);
        grads.biases[l] = delta.sum_axis(Axis(0));
        let mut back = delta.dot(&model.layers[l].weights); // (batch, in)
        if l > 0 {
            let mask = pass.pre[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            back *= &mask;
        }
        delta = back;
    }
    let dx = delta;
    grads.input = dx.row(0).to_owned();
    (grads, dx)
}

/// Analytic gradients of cross-entropy(softmax(network(x))) for a single
/// sample: per-layer dL/dW, dL/db, and dL/dx.
pub fn backward(model: &MlpModel, x: &ArrayView1<f64>, y: usize) -> Result<(Gradients, f64)> {
    let xb = x.to_owned().insert_axis(Axis(0));
    let pass = forward_batch(model, &xb.view())?;
    let loss = loss_ce(&pass.probs.row(0), y);
    let mut dlogits = pass.probs.clone();
    dlogits[(0, y)] -= 1.0;
    let (grads, _) = backward_batch_from(model, &xb.view(), &pass, &dlogits);
    Ok((grads, loss))
}

/// Gradient of an arbitrary scalar of the logits w.r.t. the input, given
/// the scalar's logit adjoint. Used by gradient-guided attacks.
pub fn input_gradient(
    model: &MlpModel,
    x: &ArrayView1<f64>,
    dlogits: &[f64],
) -> Result<Array1<f64>> {
    let xb = x.to_owned().insert_axis(Axis(0));
    let pass = forward_batch(model, &xb.view())?;
    let d = Array2::from_shape_vec((1, dlogits.len()), dlogits.to_vec())
        .expect("adjoint shape");
    let (_, dx) = backward_batch_from(model, &xb.view(), &pass, &d);
    Ok(dx.row(0).to_owned())
}

/// Evolutionary-attack fitness: log(prob benign) - log(prob malicious),
/// which equals the benign-minus-malicious logit margin. The attack
/// succeeds when the score reaches zero.
pub fn fitness_score(model: &MlpModel, x: &ArrayView1<f64>) -> Result<f64> {
    let (logits, _) = forward(model, x)?;
    Ok(logits[CLASS_BENIGN] - logits[CLASS_MALICIOUS])
}

/// Adam optimizer state (first/second moments per parameter).
#[derive(Clone, Debug)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        AdamState {
            m_w: model
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            v_w: model
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            m_b: model
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
            v_b: model
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. Deterministic given inputs.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        ndarray::Zip::from(&mut state.m_w[l])
            .and(&grads.weights[l])
            .for_each(|m, g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
        ndarray::Zip::from(&mut state.v_w[l])
            .and(&grads.weights[l])
            .for_each(|v, g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
        ndarray::Zip::from(&mut layer.weights)
            .and(&state.m_w[l])
            .and(&state.v_w[l])
            .for_each(|w, m, v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            });
        ndarray::Zip::from(&mut state.m_b[l])
            .and(&grads.biases[l])
            .for_each(|m, g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
        ndarray::Zip::from(&mut state.v_b[l])
            .and(&grads.biases[l])
            .for_each(|v, g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
        ndarray::Zip::from(&mut layer.bias)
            .and(&state.m_b[l])
            .and(&state.v_b[l])
            .for_each(|b, m, v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *b -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            });
    }
}

/// Little-endian binary serialization: magic, layer count, per-layer
/// dims, row-major weights, then bias. Bit-exact round trip.
pub fn save_model(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        out.extend_from_slice(&(layer.weights.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.weights.ncols() as u32).to_le_bytes());
        for v in layer.weights.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.bias.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(MlpError::CorruptModelFile("unexpected end of file".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let magic = take(&mut pos, 8)?;
    if magic != MODEL_MAGIC {
        return Err(MlpError::CorruptModelFile(
            "bad magic or unsupported version".into(),
        ));
    }
    let n_layers = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(MlpError::CorruptModelFile(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    let mut prev_out: Option<usize> = None;
    for _ in 0..n_layers {
        let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        if let Some(prev) = prev_out {
            if prev != cols {
                return Err(MlpError::CorruptModelFile(
                    "layer dimensions do not chain".into(),
                ));
            }
        }
        prev_out = Some(rows);
        let mut wdata = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            wdata.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        let mut bdata = Vec::with_capacity(rows);
        for _ in 0..rows {
            bdata.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((rows, cols), wdata)
                .map_err(|e| MlpError::CorruptModelFile(e.to_string()))?,
            bias: Array1::from_vec(bdata),
        });
    }
    if pos != bytes.len() {
        return Err(MlpError::CorruptModelFile("trailing bytes".into()));
    }
    Ok(MlpModel { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;

    fn random_model(dims: &[usize], seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpModel::new_random(dims, &mut rng)
    }

    #[test]
    fn zero_weight_model_is_uniform() {
        let model = MlpModel::from_layers(vec![DenseLayer {
            weights: Array2::zeros((2, 3)),
            bias: Array1::zeros(2),
        }]);
        let x = array![1.0, 0.0, 1.0];
        let (_, probs) = forward(&model, &x.view()).unwrap();
        assert_relative_eq!(probs[0], 0.5);
        assert_relative_eq!(probs[1], 0.5);
    }

    #[test]
    fn single_layer_logits_are_affine() {
        let model = MlpModel::from_layers(vec![DenseLayer {
            weights: array![[1.0], [-1.0]],
            bias: Array1::zeros(2),
        }]);
        let (logits, probs) = forward(&model, &array![1.0].view()).unwrap();
        assert_eq!(logits, array![1.0, -1.0]);
        assert_relative_eq!(probs.sum(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn forward_matches_naive_loop_evaluation() {
        let model = random_model(&[5, 7, 4, 2], 3);
        let x = array![1.0, 0.0, 1.0, 1.0, 0.0];
        let (logits, _) = forward(&model, &x.view()).unwrap();
        // independent oracle: naive nested loops
        let mut a: Vec<f64> = x.to_vec();
        for (li, layer) in model.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.weights.nrows()];
            for (i, zi) in z.iter_mut().enumerate() {
                let mut acc = layer.bias[i];
                for (j, aj) in a.iter().enumerate() {
                    acc += layer.weights[(i, j)] * aj;
                }
                *zi = if li + 1 < model.layers.len() {
                    acc.max(0.0)
                } else {
                    acc
                };
            }
            a = z;
        }
        for (got, want) in logits.iter().zip(&a) {
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_dims() {
        let model = random_model(&[4, 3, 2], 0);
        assert!(matches!(
            forward(&model, &array![1.0].view()),
            Err(MlpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cross_entropy_values() {
        assert_relative_eq!(loss_ce(&array![0.5, 0.5].view(), 1), 2f64.ln());
        assert_relative_eq!(loss_ce(&array![0.0, 1.0].view(), 1), 0.0);
        // floor keeps the loss finite
        assert!(loss_ce(&array![1.0, 0.0].view(), 1).is_finite());
    }

    #[test]
    fn softmax_is_distribution_for_large_logits() {
        let model = MlpModel::from_layers(vec![DenseLayer {
            weights: array![[500.0], [-500.0]],
            bias: Array1::zeros(2),
        }]);
        let (_, probs) = forward(&model, &array![2.0].view()).unwrap();
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_relative_eq!(probs.sum(), 1.0, epsilon = 1e-12);
    }

    /// Central finite differences of the loss w.r.t. every parameter and
    /// the input, on a set of random small networks.
    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let dims: &[usize] = match seed % 3 {
                0 => &[5, 4, 2],
                1 => &[5, 6, 3, 2],
                _ => &[5, 2],
            };
            let model = random_model(dims, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let x = Array1::from_iter((0..5).map(|_| rng.random_range(-1.0..1.0)));
            let y = (seed % 2) as usize;
            let (grads, _) = backward(&model, &x.view(), y).unwrap();
            for l in 0..model.layers.len() {
                for idx in [(0usize, 0usize), (0, 1)] {
                    if idx.0 >= model.layers[l].weights.nrows()
                        || idx.1 >= model.layers[l].weights.ncols()
                    {
                        continue;
                    }
                    let mut plus = model.clone();
                    plus.layers[l].weights[idx] += h;
                    let mut minus = model.clone();
                    minus.layers[l].weights[idx] -= h;
                    let (_, p_plus) = forward(&plus, &x.view()).unwrap();
                    let (_, p_minus) = forward(&minus, &x.view()).unwrap();
                    let fd = (loss_ce(&p_plus.view(), y) - loss_ce(&p_minus.view(), y)) / (2.0 * h);
                    let an = grads.weights[l][idx];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        (an - fd).abs() / denom < 1e-4,
                        "seed {seed} layer {l} weight {idx:?}: {an} vs {fd}"
                    );
                }
                let mut plus = model.clone();
                plus.layers[l].bias[0] += h;
                let mut minus = model.clone();
                minus.layers[l].bias[0] -= h;
                let (_, p_plus) = forward(&plus, &x.view()).unwrap();
                let (_, p_minus) = forward(&minus, &x.view()).unwrap();
                let fd = (loss_ce(&p_plus.view(), y) - loss_ce(&p_minus.view(), y)) / (2.0 * h);
                let an = grads.biases[l][0];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!((an - fd).abs() / denom < 1e-4);
            }
            for j in 0..5 {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let (_, pp) = forward(&model, &xp.view()).unwrap();
                let (_, pm) = forward(&model, &xm.view()).unwrap();
                let fd = (loss_ce(&pp.view(), y) - loss_ce(&pm.view(), y)) / (2.0 * h);
                let an = grads.input[j];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!((an - fd).abs() / denom < 1e-4, "input grad {j}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn input_gradient_of_linear_net_is_closed_form() {
        // single affine layer: dL/dx = W^T (p - onehot(y))
        let model = random_model(&[4, 2], 9);
        let x = array![1.0, 0.0, 1.0, 0.5];
        let y = CLASS_MALICIOUS;
        let (grads, _) = backward(&model, &x.view(), y).unwrap();
        let (_, probs) = forward(&model, &x.view()).unwrap();
        let mut delta = probs.clone();
        delta[y] -= 1.0;
        let expect = model.layers[0].weights.t().dot(&delta);
        for (a, b) in grads.input.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_near_zero_at_a_loss_minimum() {
        // strongly saturated correct prediction -> tiny gradients
        let model = MlpModel::from_layers(vec![DenseLayer {
            weights: array![[-30.0], [30.0]],
            bias: Array1::zeros(2),
        }]);
        let (grads, loss) = backward(&model, &array![1.0].view(), CLASS_MALICIOUS).unwrap();
        assert!(loss < 1e-10);
        assert!(grads.weights[0].iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut model = random_model(&[3, 4, 2], 4);
        let before = model.clone();
        let grads = Gradients::zeros_like(&model);
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &grads, &mut state, &TrainConfig::default());
        assert_eq!(model, before);
    }

    #[test]
    fn adam_constant_gradient_matches_hand_unrolled_recurrence() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut model = MlpModel::from_layers(vec![DenseLayer {
            weights: array![[1.0], [2.0]],
            bias: array![0.0, 0.0],
        }]);
        let mut grads = Gradients::zeros_like(&model);
        grads.weights[0][(0, 0)] = 0.5;
        let mut state = AdamState::new(&model);
        // hand-unrolled Adam with constant gradient g
        let g: f64 = 0.5;
        let (mut m, mut v) = (0.0, 0.0);
        let mut w: f64 = 1.0;
        for t in 1..=5u32 {
            adam_step(&mut model, &grads, &mut state, &cfg);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t as i32));
            let v_hat = v / (1.0 - cfg.beta2.powi(t as i32));
            w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            assert_relative_eq!(model.layers[0].weights[(0, 0)], w, epsilon = 1e-12);
            // untouched weight stays put
            assert_relative_eq!(model.layers[0].weights[(1, 0)], 2.0);
        }
    }

    #[test]
    fn adam_runs_are_bitwise_deterministic() {
        let run = || {
            let mut model = random_model(&[4, 3, 2], 77);
            let mut state = AdamState::new(&model);
            let cfg = TrainConfig::default();
            for i in 0..10 {
                let x = array![1.0, 0.0, (i % 2) as f64, 0.5];
                let (grads, _) = backward(&model, &x.view(), i % 2).unwrap();
                adam_step(&mut model, &grads, &mut state, &cfg);
            }
            save_model(&model)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fitness_score_values_and_monotonicity() {
        let model = MlpModel::from_layers(vec![DenseLayer {
            weights: array![[0.0], [0.0]],
            bias: array![0.0, 0.0],
        }]);
        assert_relative_eq!(fitness_score(&model, &array![1.0].view()).unwrap(), 0.0);

        // probs (0.9, 0.1) -> ln 9
        let model = MlpModel::from_layers(vec![DenseLayer {
            weights: array![[0.0], [0.0]],
            bias: array![9f64.ln(), 0.0],
        }]);
        let (_, probs) = forward(&model, &array![0.0].view()).unwrap();
        assert_relative_eq!(probs[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(
            fitness_score(&model, &array![0.0].view()).unwrap(),
            9f64.ln(),
            epsilon = 1e-12
        );

        // pairwise: increasing the benign logit increases the score
        for seed in 0..10u64 {
            let model = random_model(&[3, 4, 2], seed);
            let x = array![1.0, 0.0, 1.0];
            let base = fitness_score(&model, &x.view()).unwrap();
            let mut boosted = model.clone();
            boosted.layers.last_mut().unwrap().bias[CLASS_BENIGN] += 1.0;
            let higher = fitness_score(&boosted, &x.view()).unwrap();
            assert!(higher > base);
        }
    }

    #[test]
    fn fitness_sign_matches_prediction() {
        for seed in 0..20u64 {
            let model = random_model(&[6, 5, 2], seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array1::from_iter((0..6).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }));
            let fit = fitness_score(&model, &x.view()).unwrap();
            let pred = model.predict(&x.view()).unwrap();
            assert_eq!(fit >= 0.0, pred == CLASS_BENIGN);
        }
    }

    #[test]
    fn model_serialization_round_trips_bitwise() {
        let model = random_model(&[7, 5, 3, 2], 21);
        let bytes = save_model(&model);
        let loaded = load_model(&bytes).unwrap();
        assert_eq!(loaded, model);
        let x = array![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let (l1, _) = forward(&model, &x.view()).unwrap();
        let (l2, _) = forward(&loaded, &x.view()).unwrap();
        assert_eq!(l1.to_vec(), l2.to_vec());
    }

    #[test]
    fn corrupt_model_files_are_rejected() {
        let model = random_model(&[3, 2], 1);
        let mut bytes = save_model(&model);
        bytes[0] ^= 0xff;
        assert!(matches!(
            load_model(&bytes),
            Err(MlpError::CorruptModelFile(_))
        ));
        let mut truncated = save_model(&model);
        truncated.truncate(truncated.len() - 3);
        assert!(load_model(&truncated).is_err());
        let mut padded = save_model(&model);
        padded.push(0);
        assert!(load_model(&padded).is_err());
    }
}
