//! Binary dementia classifiers over joint-space embeddings. Accuracy of
//! these classifiers is the privacy-leakage measurement for both the
//! input-space (text) and output-space (image) adversaries.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::tensor;
use crate::backends::EmbeddingVector;
use crate::corpus::Group;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Feedforward,
    MaxMarginLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BinaryCrossEntropy,
    Hinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Max-margin regularization constant (linear kind only).
    #[serde(default = "default_regularization")]
    pub regularization: f64,
}

fn default_hidden_layers() -> usize {
    3
}
fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    16
}
fn default_loss() -> LossKind {
    LossKind::BinaryCrossEntropy
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_regularization() -> f64 {
    1.0
}

impl ClassifierSpec {
    pub fn feedforward(seed: u64) -> ClassifierSpec {
        ClassifierSpec {
            kind: ClassifierKind::Feedforward,
            hidden_layers: default_hidden_layers(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            loss: default_loss(),
            seed,
            learning_rate: default_learning_rate(),
            regularization: default_regularization(),
        }
    }

    pub fn max_margin(seed: u64) -> ClassifierSpec {
        ClassifierSpec { kind: ClassifierKind::MaxMarginLinear, ..ClassifierSpec::feedforward(seed) }
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if self.kind == ClassifierKind::Feedforward
            && (self.hidden_layers < 1 || self.epochs < 1 || self.batch_size < 1)
        {
            return Err(Error::Validation(
                "feedforward requires hidden_layers, epochs, and batch_size >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One dense layer: row-major weights (out x in) plus biases.
#[derive(Debug, Clone, PartialEq)]
struct Layer {
    weights: Vec<f64>,
    biases: Vec<f64>,
    inputs: usize,
    outputs: usize,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.biases.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *out_v += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Params {
    Linear { weights: Vec<f64>, bias: f64 },
    Feedforward { layers: Vec<Layer> },
}

/// An immutable trained classifier. The decision value is a real score;
/// prediction thresholds at zero with ties resolving to CC.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    input_dim: usize,
    params: Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Confusion,
    pub n: usize,
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| *x as f64).collect()
}

impl TrainedClassifier {
    /// A linear classifier from explicit weights; also the load path for
    /// max-margin models.
    pub fn linear(weights: Vec<f64>, bias: f64) -> TrainedClassifier {
        let input_dim = weights.len();
        TrainedClassifier {
            spec: ClassifierSpec::max_margin(0),
            input_dim,
            params: Params::Linear { weights, bias },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Raw decision score; >= 0 leans AD, < 0 leans CC.
    pub fn decision(&self, values: &[f32]) -> f64 {
        let x = to_f64(values);
        match &self.params {
            Params::Linear { weights, bias } => {
                weights.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>() + bias
            }
            Params::Feedforward { layers } => {
                let mut a = x;
                for (i, layer) in layers.iter().enumerate() {
                    a = layer.forward(&a);
                    if i + 1 < layers.len() {
                        for v in a.iter_mut() {
                            *v = v.max(0.0);
                        }
                    }
                }
                a[0]
            }
        }
    }

    /// Score = 0 ties resolve to CC so prediction is total.
    pub fn predict(&self, values: &[f32]) -> Group {
        if self.decision(values) > 0.0 {
            Group::Ad
        } else {
            Group::Cc
        }
    }

    /// Gradient of the decision value with respect to the input features.
    pub fn decision_gradient(&self, values: &[f32]) -> Vec<f64> {
        match &self.params {
            Params::Linear { weights, .. } => weights.clone(),
            Params::Feedforward { layers } => {
                // forward pass keeping pre-activations
                let mut activations = vec![to_f64(values)];
                let mut pre = Vec::new();
                for (i, layer) in layers.iter().enumerate() {
                    let z = layer.forward(activations.last().unwrap());
                    pre.push(z.clone());
                    let a = if i + 1 < layers.len() {
                        z.iter().map(|v| v.max(0.0)).collect()
                    } else {
                        z
                    };
                    activations.push(a);
                }
                // backward pass
                let mut delta = vec![1.0f64];
                for (i, layer) in layers.iter().enumerate().rev() {
                    let mut prev = vec![0.0f64; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += delta[o] * w;
                        }
                    }
                    if i > 0 {
                        for (p, z) in prev.iter_mut().zip(&pre[i - 1]) {
                            if *z <= 0.0 {
                                *p = 0.0;
                            }
                        }
                    }
                    delta = prev;
                }
                delta
            }
        }
    }

    fn flat_params(&self) -> Vec<f32> {
        match &self.params {
            Params::Linear { weights, bias } => {
                let mut out: Vec<f32> = weights.iter().map(|w| *w as f32).collect();
                out.push(*bias as f32);
                out
            }
            Params::Feedforward { layers } => {
                let mut out = Vec::new();
                for layer in layers {
                    out.extend(layer.weights.iter().map(|w| *w as f32));
                    out.extend(layer.biases.iter().map(|b| *b as f32));
                }
                out
            }
        }
    }

    fn layer_dims(&self) -> Vec<usize> {
        match &self.params {
            Params::Linear { .. } => Vec::new(),
            Params::Feedforward { layers } => layers.iter().map(|l| l.outputs).collect(),
        }
    }

    /// Content hash of the trained parameters, used in cache keys.
    pub fn params_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for v in self.flat_params() {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({
            "spec": self.spec,
            "input_dim": self.input_dim,
            "layer_dims": self.layer_dims(),
        });
        let header_bytes = serde_json::to_vec(&header).expect("header serializes");
        let flat = self.flat_params();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&(header_bytes.len() as u64).to_le_bytes())
            .and_then(|_| file.write_all(&header_bytes))
            .map_err(|e| Error::io(path, e))?;
        let blob = tensor::encode_f32(&[flat.len()], &flat);
        file.write_all(&blob).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedClassifier> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes).map_err(|e| Error::io(path, e))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        file.read_exact(&mut header_bytes).map_err(|e| Error::io(path, e))?;
        let header: serde_json::Value = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Data(format!("bad model header in {}: {e}", path.display())))?;
        let spec: ClassifierSpec = serde_json::from_value(header["spec"].clone())
            .map_err(|e| Error::Data(format!("bad model spec: {e}")))?;
        let input_dim = header["input_dim"].as_u64().unwrap_or(0) as usize;
        let layer_dims: Vec<usize> = serde_json::from_value(header["layer_dims"].clone())
            .map_err(|e| Error::Data(format!("bad layer dims: {e}")))?;
        let mut rest = Vec::new();
        file.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
        let (_, flat) = tensor::decode_f32(&rest)?;
        let flat: Vec<f64> = flat.iter().map(|v| *v as f64).collect();

        let params = if layer_dims.is_empty() {
            if flat.len() != input_dim + 1 {
                return Err(Error::Data("model blob size mismatch".into()));
            }
            Params::Linear { weights: flat[..input_dim].to_vec(), bias: flat[input_dim] }
        } else {
            let mut layers = Vec::new();
            let mut offset = 0;
            let mut inputs = input_dim;
            for outputs in layer_dims {
                let w_len = outputs * inputs;
                if offset + w_len + outputs > flat.len() {
                    return Err(Error::Data("model blob size mismatch".into()));
                }
                layers.push(Layer {
                    weights: flat[offset..offset + w_len].to_vec(),
                    biases: flat[offset + w_len..offset + w_len + outputs].to_vec(),
                    inputs,
                    outputs,
                });
                offset += w_len + outputs;
                inputs = outputs;
            }
            Params::Feedforward { layers }
        };
        Ok(TrainedClassifier { spec, input_dim, params })
    }
}

fn check_dataset(embeddings: &[EmbeddingVector], labels: &[Group]) -> Result<usize> {
    if embeddings.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    if embeddings.len() < 2 {
        return Err(Error::Validation("need at least 2 training samples".into()));
    }
    if !labels.contains(&Group::Ad) || !labels.contains(&Group::Cc) {
        return Err(Error::Validation("training labels must contain both classes".into()));
    }
    let dim = embeddings[0].values.len();
    if embeddings.iter().any(|e| e.values.len() != dim) {
        return Err(Error::Validation("embedding dimension mismatch".into()));
    }
    Ok(dim)
}

/// Hidden widths: 256 halving per layer, floor 8.
fn hidden_widths(layers: usize) -> Vec<usize> {
    (0..layers).map(|i| (256usize >> i).max(8)).collect()
}

/// Train a classifier. Deterministic given `spec.seed` and the data order.
/// When `val` is provided, feedforward training keeps the parameters of the
/// best-validation-accuracy epoch.
pub fn train(
    embeddings: &[EmbeddingVector],
    labels: &[Group],
    spec: &ClassifierSpec,
    val: Option<(&[EmbeddingVector], &[Group])>,
) -> Result<TrainedClassifier> {
    spec.validate()?;
    let dim = check_dataset(embeddings, labels)?;
    if let Some((ve, vl)) = val {
        if ve.len() != vl.len() {
            return Err(Error::Validation("validation embedding/label length mismatch".into()));
        }
        if ve.iter().any(|e| e.values.len() != dim) {
            return Err(Error::Validation("validation embedding dimension mismatch".into()));
        }
    }
    match spec.kind {
        ClassifierKind::MaxMarginLinear => train_max_margin(embeddings, labels, spec, dim),
        ClassifierKind::Feedforward => train_feedforward(embeddings, labels, spec, val, dim),
    }
}

fn signed(label: Group) -> f64 {
    match label {
        Group::Ad => 1.0,
        Group::Cc => -1.0,
    }
}

/// Full-batch Pegasos-style subgradient descent on the hinge objective
/// lambda/2 |w|^2 + mean hinge, lambda = 1 / (C * n).
fn train_max_margin(
    embeddings: &[EmbeddingVector],
    labels: &[Group],
    spec: &ClassifierSpec,
    dim: usize,
) -> Result<TrainedClassifier> {
    let n = embeddings.len();
    let lambda = 1.0 / (spec.regularization.max(1e-9) * n as f64);
    let xs: Vec<Vec<f64>> = embeddings.iter().map(|e| to_f64(&e.values)).collect();
    let ys: Vec<f64> = labels.iter().map(|l| signed(*l)).collect();

    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let iterations = 2000usize;
    for t in 0..iterations {
        let eta = 1.0 / (lambda * (t + 1) as f64);
        let mut grad_w = vec![0.0f64; dim];
        let mut grad_b = 0.0f64;
        for (x, y) in xs.iter().zip(&ys) {
            let margin = y * (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b);
            if margin < 1.0 {
                for (g, xi) in grad_w.iter_mut().zip(x) {
                    *g += y * xi;
                }
                grad_b += y;
            }
        }
        let scale = 1.0 - eta * lambda;
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi = scale * *wi + eta * g / n as f64;
        }
        b += eta * grad_b / n as f64;
    }
    Ok(TrainedClassifier {
        spec: spec.clone(),
        input_dim: dim,
        params: Params::Linear { weights: w, bias: b },
    })
}

fn init_layers(dims: &[usize], input_dim: usize, rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let mut layers = Vec::new();
    let mut inputs = input_dim;
    for &outputs in dims {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..outputs * inputs).map(|_| rng.gen_range(-bound..bound)).collect();
        layers.push(Layer { weights, biases: vec![0.0; outputs], inputs, outputs });
        inputs = outputs;
    }
    layers
}

fn train_feedforward(
    embeddings: &[EmbeddingVector],
    labels: &[Group],
    spec: &ClassifierSpec,
    val: Option<(&[EmbeddingVector], &[Group])>,
    dim: usize,
) -> Result<TrainedClassifier> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut dims = hidden_widths(spec.hidden_layers);
    dims.push(1);
    let mut layers = init_layers(&dims, dim, &mut rng);

    let xs: Vec<Vec<f64>> = embeddings.iter().map(|e| to_f64(&e.values)).collect();
    let ys: Vec<f64> = labels.iter().map(|l| signed(*l)).collect();
    let n = xs.len();

    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Vec<Layer>)> = None;

    for _epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            let mut grads: Vec<(Vec<f64>, Vec<f64>)> = layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect();
            for &i in batch {
                backprop(&layers, &xs[i], ys[i], spec.loss, &mut grads);
            }
            let scale = spec.learning_rate / batch.len() as f64;
            for (layer, (gw, gb)) in layers.iter_mut().zip(&grads) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w -= scale * g;
                }
                for (b, g) in layer.biases.iter_mut().zip(gb) {
                    *b -= scale * g;
                }
            }
        }
        if let Some((ve, vl)) = val {
            let clf = TrainedClassifier {
                spec: spec.clone(),
                input_dim: dim,
                params: Params::Feedforward { layers: layers.clone() },
            };
            let acc = evaluate(&clf, ve, vl)?.accuracy;
            if best.as_ref().map_or(true, |(b_acc, _)| acc > *b_acc) {
                best = Some((acc, layers.clone()));
            }
        }
    }

    let final_layers = match best {
        Some((_, l)) => l,
        None => layers,
    };
    Ok(TrainedClassifier {
        spec: spec.clone(),
        input_dim: dim,
        params: Params::Feedforward { layers: final_layers },
    })
}

/// Accumulate loss gradients for one sample. `y` is +-1; BCE treats +1 as
/// class 1.
fn backprop(
    layers: &[Layer],
    x: &[f64],
    y: f64,
    loss: LossKind,
    grads: &mut [(Vec<f64>, Vec<f64>)],
) {
    let mut activations = vec![x.to_vec()];
    let mut pre = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        let z = layer.forward(activations.last().unwrap());
        pre.push(z.clone());
        let a = if i + 1 < layers.len() {
            z.iter().map(|v| v.max(0.0)).collect()
        } else {
            z
        };
        activations.push(a);
    }
    let logit = activations.last().unwrap()[0];
    let dloss = match loss {
        LossKind::BinaryCrossEntropy => {
            let target = if y > 0.0 { 1.0 } else { 0.0 };
            1.0 / (1.0 + (-logit).exp()) - target
        }
        LossKind::Hinge => {
            if 1.0 - y * logit > 0.0 {
                -y
            } else {
                0.0
            }
        }
    };
    let mut delta = vec![dloss];
    for (i, layer) in layers.iter().enumerate().rev() {
        let (gw, gb) = &mut grads[i];
        let a_in = &activations[i];
        for o in 0..layer.outputs {
            gb[o] += delta[o];
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (g, a) in row.iter_mut().zip(a_in) {
                *g += delta[o] * a;
            }
        }
        if i > 0 {
            let mut prev = vec![0.0f64; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += delta[o] * w;
                }
            }
            for (p, z) in prev.iter_mut().zip(&pre[i - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

pub fn evaluate(
    classifier: &TrainedClassifier,
    embeddings: &[EmbeddingVector],
    labels: &[Group],
) -> Result<EvalReport> {
    if embeddings.is_empty() || embeddings.len() != labels.len() {
        return Err(Error::Validation("evaluation set empty or length mismatch".into()));
    }
    if embeddings.iter().any(|e| e.values.len() != classifier.input_dim) {
        return Err(Error::Validation("evaluation embedding dimension mismatch".into()));
    }
    let mut confusion = Confusion { tp: 0, tn: 0, fp: 0, fn_: 0 };
    for (e, label) in embeddings.iter().zip(labels) {
        match (classifier.predict(&e.values), label) {
            (Group::Ad, Group::Ad) => confusion.tp += 1,
            (Group::Cc, Group::Cc) => confusion.tn += 1,
            (Group::Ad, Group::Cc) => confusion.fp += 1,
            (Group::Cc, Group::Ad) => confusion.fn_ += 1,
        }
    }
    let n = embeddings.len();
    Ok(EvalReport {
        accuracy: (confusion.tp + confusion.tn) as f64 / n as f64,
        confusion,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Modality;

    fn embedding(values: Vec<f32>) -> EmbeddingVector {
        EmbeddingVector { values, modality: Modality::Text }
    }

    /// Two deterministic separable clusters in 4-d.
    fn separable(n_per_class: usize, offset: f32) -> (Vec<EmbeddingVector>, Vec<Group>) {
        let mut embeddings = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per_class {
            let jitter = (i as f32 % 7.0) * 0.03;
            embeddings.push(embedding(vec![1.0 + jitter, 0.2, offset + jitter, 0.1]));
            labels.push(Group::Ad);
            embeddings.push(embedding(vec![-1.0 - jitter, 0.2, -offset - jitter, 0.1]));
            labels.push(Group::Cc);
        }
        (embeddings, labels)
    }

    #[test]
    fn both_kinds_fit_separable_data() {
        let (embeddings, labels) = separable(20, 0.5);
        for spec in [ClassifierSpec::max_margin(3), ClassifierSpec::feedforward(3)] {
            let clf = train(&embeddings, &labels, &spec, None).unwrap();
            let report = evaluate(&clf, &embeddings, &labels).unwrap();
            assert_eq!(report.accuracy, 1.0, "kind {:?}", spec.kind);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (embeddings, labels) = separable(10, 0.3);
        let spec = ClassifierSpec::feedforward(42);
        let a = train(&embeddings, &labels, &spec, None).unwrap();
        let b = train(&embeddings, &labels, &spec, None).unwrap();
        for e in &embeddings {
            assert_eq!(a.decision(&e.values), b.decision(&e.values));
        }
    }

    #[test]
    fn train_rejects_bad_input() {
        let (embeddings, _) = separable(3, 0.3);
        let one_class = vec![Group::Ad; embeddings.len()];
        assert!(train(&embeddings, &one_class, &ClassifierSpec::max_margin(0), None).is_err());

        let mut mixed_dims = embeddings.clone();
        mixed_dims[0] = embedding(vec![1.0, 2.0]);
        let labels: Vec<Group> = (0..mixed_dims.len())
            .map(|i| if i % 2 == 0 { Group::Ad } else { Group::Cc })
            .collect();
        assert!(train(&mixed_dims, &labels, &ClassifierSpec::max_margin(0), None).is_err());
    }

    #[test]
    fn evaluate_constant_classifier_on_balanced_set() {
        let clf = TrainedClassifier::linear(vec![0.0; 4], 1.0);
        let (embeddings, labels) = separable(24, 0.5);
        let report = evaluate(&clf, &embeddings, &labels).unwrap();
        assert_eq!(report.accuracy, 0.5);
        assert_eq!(report.confusion.total(), report.n);
    }

    #[test]
    fn zero_score_predicts_cc() {
        let clf = TrainedClassifier::linear(vec![0.0; 2], 0.0);
        assert_eq!(clf.predict(&[1.0, 1.0]), Group::Cc);
    }

    #[test]
    fn prediction_invariant_under_positive_scaling() {
        let clf = TrainedClassifier::linear(vec![0.7, -1.3], 0.2);
        let scaled = TrainedClassifier::linear(vec![7.0, -13.0], 2.0);
        for probe in [[0.3f32, 0.1], [-0.5, 0.9], [1.0, 1.0], [0.0, 0.0]] {
            assert_eq!(clf.predict(&probe), scaled.predict(&probe));
        }
    }

    #[test]
    fn accuracy_recomputes_from_confusion() {
        let (embeddings, labels) = separable(15, 0.4);
        let clf = train(&embeddings, &labels, &ClassifierSpec::max_margin(1), None).unwrap();
        let r = evaluate(&clf, &embeddings, &labels).unwrap();
        let recomputed = (r.confusion.tp + r.confusion.tn) as f64 / r.n as f64;
        assert_eq!(r.accuracy, recomputed);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (embeddings, labels) = separable(10, 0.3);
        let spec = ClassifierSpec {
            epochs: 5,
            ..ClassifierSpec::feedforward(9)
        };
        let clf = train(&embeddings, &labels, &spec, None).unwrap();
        let x = [0.3f32, -0.2, 0.5, 0.9];
        let grad = clf.decision_gradient(&x);
        let h = 1e-4f64;
        for k in 0..x.len() {
            let mut plus: Vec<f64> = x.iter().map(|v| *v as f64).collect();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let fp: Vec<f32> = plus.iter().map(|v| *v as f32).collect();
            let fm: Vec<f32> = minus.iter().map(|v| *v as f32).collect();
            let fd = (clf.decision(&fp) - clf.decision(&fm)) / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() < 1e-2,
                "dim {k}: analytic {} vs fd {}",
                grad[k],
                fd
            );
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (embeddings, labels) = separable(10, 0.3);
        for spec in [ClassifierSpec::max_margin(5), ClassifierSpec::feedforward(5)] {
            let clf = train(&embeddings, &labels, &spec, None).unwrap();
            let path = dir.path().join("model.bin");
            clf.save(&path).unwrap();
            let loaded = TrainedClassifier::load(&path).unwrap();
            assert_eq!(loaded.input_dim(), clf.input_dim());
            for e in &embeddings {
                assert!((loaded.decision(&e.values) - clf.decision(&e.values)).abs() < 1e-3);
                assert_eq!(loaded.predict(&e.values), clf.predict(&e.values));
            }
        }
    }

    #[test]
    fn early_stopping_keeps_best_validation_epoch() {
        let (train_e, train_l) = separable(10, 0.3);
        let (val_e, val_l) = separable(5, 0.3);
        let spec = ClassifierSpec::feedforward(11);
        let clf = train(&train_e, &train_l, &spec, Some((&val_e, &val_l))).unwrap();
        let r = evaluate(&clf, &val_e, &val_l).unwrap();
        assert!(r.accuracy >= 0.9);
    }
}
