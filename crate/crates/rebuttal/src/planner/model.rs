//! The feed-forward scorer and its checkpoint format.
//!
//! Layers run input (2 x encoder dim) through the hidden widths to one
//! scalar; hidden layers use the configured activation, the output layer
//! is always linear. Weights use fan-in-scaled uniform init from a seeded
//! generator; biases start at zero.
//!
//! # Checkpoint layout
//!
//! ```text
//! bytes 0..8    magic "RBTPLNR1"
//! bytes 8..12   u32 little-endian header length H
//! bytes 12..12+H  header JSON:
//!     {"encoder_dim":N,"hidden":[..],"activation":"relu","seed":S,"encoder_name":".."}
//! remainder     f64 little-endian parameters, for each layer in order:
//!               weights row-major (in x out), then biases
//! ```
//!
//! Load rejects wrong magic, malformed headers, and files whose parameter
//! section is not exactly the expected length. Save then load restores
//! every parameter bit-for-bit.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::EmbeddingVector;

/// Hidden widths used with the production 1024-wide encoder.
pub const DEFAULT_HIDDEN: [usize; 3] = [2048, 1024, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// Derivative evaluated at the pre-activation; rectifier uses 0 at
    /// the kink.
    fn derivative(&self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Identity => Array2::ones(z.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerModel {
    /// Layer l maps width dims[l] to dims[l+1]; stored (in x out).
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
    seed: u64,
    encoder_name: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    encoder_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    seed: u64,
    encoder_name: String,
}

const MAGIC: &[u8; 8] = b"RBTPLNR1";

fn layer_dims(encoder_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = vec![2 * encoder_dim];
    dims.extend_from_slice(hidden);
    dims.push(1);
    dims
}

impl PlannerModel {
    /// Seeded fan-in-scaled uniform init: U(-1/sqrt(in), 1/sqrt(in)),
    /// zero biases.
    pub fn new(encoder_dim: usize, hidden: &[usize], seed: u64, encoder_name: &str) -> Self {
        assert!(encoder_dim >= 1, "encoder_dim must be >= 1");
        assert!(hidden.iter().all(|w| *w >= 1), "hidden widths must be >= 1");
        let dims = layer_dims(encoder_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (rows, cols) = (pair[0], pair[1]);
            let bound = 1.0 / (rows as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
                .collect();
            weights.push(Array2::from_shape_vec((rows, cols), data).unwrap());
            biases.push(Array1::zeros(cols));
        }
        PlannerModel {
            weights,
            biases,
            activation: Activation::Relu,
            seed,
            encoder_name: encoder_name.to_string(),
        }
    }

    /// The production architecture for a given encoder width.
    pub fn default_for_encoder(encoder_dim: usize, seed: u64, encoder_name: &str) -> Self {
        Self::new(encoder_dim, &DEFAULT_HIDDEN, seed, encoder_name)
    }

    /// All parameters zero; forward maps everything to 0.0.
    pub fn zeros(encoder_dim: usize, hidden: &[usize], encoder_name: &str) -> Self {
        let dims = layer_dims(encoder_dim, hidden);
        let weights = dims
            .windows(2)
            .map(|p| Array2::zeros((p[0], p[1])))
            .collect();
        let biases = dims.windows(2).map(|p| Array1::zeros(p[1])).collect();
        PlannerModel {
            weights,
            biases,
            activation: Activation::Relu,
            seed: 0,
            encoder_name: encoder_name.to_string(),
        }
    }

    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activation: Activation,
        seed: u64,
        encoder_name: &str,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Config("model needs matching weight/bias layers".into()));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != b.len() {
                return Err(Error::Config(format!("layer {i}: bias width mismatch")));
            }
            if i + 1 < weights.len() && w.ncols() != weights[i + 1].nrows() {
                return Err(Error::Config(format!("layer {i}: width chain broken")));
            }
        }
        if !weights[0].nrows().is_multiple_of(2) {
            return Err(Error::Config("input width must be twice the encoder dim".into()));
        }
        if weights.last().unwrap().ncols() != 1 {
            return Err(Error::Config("output layer must be scalar".into()));
        }
        Ok(PlannerModel {
            weights,
            biases,
            activation,
            seed,
            encoder_name: encoder_name.to_string(),
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn encoder_dim(&self) -> usize {
        self.weights[0].nrows() / 2
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.weights[..self.weights.len() - 1]
            .iter()
            .map(Array2::ncols)
            .collect()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder_name
    }

    /// Scorer output for one (perspective, paragraph) pair.
    pub fn forward(&self, pers: &EmbeddingVector, para: &EmbeddingVector) -> Result<f64> {
        for v in [pers, para] {
            if v.dim() != self.encoder_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.encoder_dim(),
                    actual: v.dim(),
                });
            }
        }
        let mut row = Vec::with_capacity(self.input_dim());
        row.extend_from_slice(&pers.values);
        row.extend_from_slice(&para.values);
        let x = Array2::from_shape_vec((1, self.input_dim()), row).unwrap();
        Ok(self.forward_rows(&x)[0])
    }

    /// Batched forward: one output per input row.
    pub fn forward_rows(&self, x: &Array2<f64>) -> Array1<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "input width mismatch");
        let mut a = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(w) + b;
            a = if l < last { self.activation.apply(&z) } else { z };
        }
        a.column(0).to_owned()
    }

    /// Forward keeping per-layer activations and pre-activations for
    /// backprop. `acts[0]` is the input; `acts[l+1]` the output of layer l.
    pub(crate) fn forward_cached(&self, x: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut acts = vec![x.clone()];
        let mut preacts = Vec::new();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = acts.last().unwrap().dot(w) + b;
            let a = if l < last { self.activation.apply(&z) } else { z.clone() };
            preacts.push(z);
            acts.push(a);
        }
        (acts, preacts)
    }

    /// Exact parameter gradients given d(loss)/d(output) per row.
    pub(crate) fn backprop(
        &self,
        acts: &[Array2<f64>],
        preacts: &[Array2<f64>],
        delta_out: Array2<f64>,
    ) -> Gradients {
        let layers = self.weights.len();
        let mut d_weights = vec![Array2::zeros((0, 0)); layers];
        let mut d_biases = vec![Array1::zeros(0); layers];
        let mut delta = delta_out;
        for l in (0..layers).rev() {
            // dot on a transposed view may yield a column-major array;
            // force row-major so flat parameter indexing stays valid.
            let dw = acts[l].t().dot(&delta);
            d_weights[l] = if dw.is_standard_layout() {
                dw
            } else {
                dw.as_standard_layout().into_owned()
            };
            d_biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&self.weights[l].t()) * self.activation.derivative(&preacts[l - 1]);
            }
        }
        Gradients {
            weights: d_weights,
            biases: d_biases,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Flat parameter order: per layer, weights row-major then biases.
    /// Shared by the checkpoint format and finite-difference checks.
    pub fn get_param(&self, index: usize) -> f64 {
        let mut i = index;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if i < w.len() {
                return w.as_slice().unwrap()[i];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            if i < w.len() {
                w.as_slice_mut().unwrap()[i] = value;
                return;
            }
            i -= w.len();
            if i < b.len() {
                b[i] = value;
                return;
            }
            i -= b.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// One descent step: p -= lr * g for every parameter.
    pub(crate) fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, g);
        }
    }

    pub(crate) fn weights_mut(&mut self) -> (&mut Vec<Array2<f64>>, &mut Vec<Array1<f64>>) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let header = CheckpointHeader {
            encoder_dim: self.encoder_dim(),
            hidden: self.hidden_dims(),
            activation: self.activation,
            seed: self.seed,
            encoder_name: self.encoder_name.clone(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::Config(format!("checkpoint header: {e}")))?;
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let io = |e| Error::io(path, e);
        file.write_all(MAGIC).map_err(io)?;
        file.write_all(&(header_bytes.len() as u32).to_le_bytes())
            .map_err(io)?;
        file.write_all(&header_bytes).map_err(io)?;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.iter().chain(b.iter()) {
                file.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Parse(format!(
                "{} is not a planner checkpoint",
                path.display()
            )));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body_start = 12 + header_len;
        if bytes.len() < body_start {
            return Err(Error::Parse("checkpoint header truncated".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[12..body_start])
            .map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
        let dims = layer_dims(header.encoder_dim, &header.hidden);
        let param_count: usize = dims.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        let body = &bytes[body_start..];
        if body.len() != param_count * 8 {
            return Err(Error::Parse(format!(
                "checkpoint parameter section is {} bytes, expected {}",
                body.len(),
                param_count * 8
            )));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (rows, cols) = (pair[0], pair[1]);
            let data: Vec<f64> = values.by_ref().take(rows * cols).collect();
            weights.push(Array2::from_shape_vec((rows, cols), data).unwrap());
            biases.push(Array1::from_iter(values.by_ref().take(cols)));
        }
        Ok(PlannerModel {
            weights,
            biases,
            activation: header.activation,
            seed: header.seed,
            encoder_name: header.encoder_name,
        })
    }
}

/// Parameter gradients mirroring the model's layer layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &PlannerModel) -> Self {
        Gradients {
            weights: model
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: model
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for b in &mut self.biases {
            *b *= factor;
        }
    }

    /// Same flat order as [`PlannerModel::get_param`].
    pub fn get(&self, index: usize) -> f64 {
        let mut i = index;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if i < w.len() {
                return w.as_slice().unwrap()[i];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("gradient index {index} out of range");
    }
}
