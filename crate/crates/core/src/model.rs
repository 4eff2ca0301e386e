//! Minimal decoder-only transformer with gated (GLU) feed-forward blocks.
//!
//! Each layer is pre-norm: `x += attn(norm(x))`, then `x += ffn(norm(x))`.
//! The feed-forward block computes `(silu(ĥ·W1) ⊙ (ĥ·W3))·W2`, where column
//! `i` of `W1` followed by the nonlinearity is neuron `i` of that layer.
//! Observers see the gate vector before any overlay touches it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NptiError, Result};
use crate::tensor::{dot, rms_norm, silu, softmax_in_place, Matrix};

pub type TokenId = u32;

const NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Silu => silu(x),
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Silu => 0,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Silu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    /// Byte-level toy model sized for the bundled sample corpus.
    fn default() -> Self {
        Self {
            n_layers: 4,
            d_model: 32,
            d_ff: 64,
            n_heads: 4,
            vocab_size: crate::tokenizer::VOCAB_SIZE,
            max_seq_len: 1024,
            activation: Activation::Silu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 {
            return Err(NptiError::config("n_layers must be >= 1"));
        }
        if self.d_model < 1 {
            return Err(NptiError::config("d_model must be >= 1"));
        }
        if self.d_ff < 1 {
            return Err(NptiError::config("d_ff must be >= 1"));
        }
        if self.n_heads < 1 {
            return Err(NptiError::config("n_heads must be >= 1"));
        }
        if self.vocab_size < 2 {
            return Err(NptiError::config("vocab_size must be >= 2"));
        }
        if self.max_seq_len < 1 {
            return Err(NptiError::config("max_seq_len must be >= 1"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(NptiError::config("d_model not divisible by n_heads"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn n_neurons(&self) -> usize {
        self.n_layers * self.d_ff
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        id.layer < self.n_layers && id.index < self.d_ff
    }

    /// All neuron ids in canonical `(layer, index)` order.
    pub fn neuron_ids(&self) -> impl Iterator<Item = NeuronId> + '_ {
        (0..self.n_layers).flat_map(move |layer| (0..self.d_ff).map(move |index| NeuronId { layer, index }))
    }
}

/// Column `index` of layer `layer`'s gate projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }
}

impl std::fmt::Display for NeuronId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.layer, self.index)
    }
}

impl std::str::FromStr for NeuronId {
    type Err = NptiError;

    fn from_str(s: &str) -> Result<Self> {
        let (l, i) = s
            .split_once(':')
            .ok_or_else(|| NptiError::input(format!("neuron id {s:?} is not LAYER:INDEX")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| NptiError::input(format!("neuron id {s:?} is not LAYER:INDEX")))
        };
        Ok(Self::new(parse(l)?, parse(i)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub attn_norm: Vec<f32>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ffn_norm: Vec<f32>,
    /// Gate projection `[d_model × d_ff]`.
    pub w1: Matrix,
    /// Down projection `[d_ff × d_model]`.
    pub w2: Matrix,
    /// Up projection `[d_model × d_ff]`.
    pub w3: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    config: ModelConfig,
    pub(crate) token_embedding: Matrix,
    pub(crate) position_embedding: Matrix,
    pub(crate) layers: Vec<Layer>,
    pub(crate) final_norm: Vec<f32>,
    pub(crate) lm_head: Matrix,
}

/// A runtime transformation of gate activations, applied between the
/// nonlinearity and the elementwise product with the up projection.
pub trait GateOverlay: Send + Sync {
    fn apply(&self, layer: usize, gate: &mut [f32]);
}

/// What an observer sees for one `(layer, position)` during a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LayerObservation<'a> {
    pub layer: usize,
    pub position: usize,
    /// Normalized feed-forward input ĥ.
    pub input: &'a [f32],
    /// `σ(ĥ·W1)` before steering.
    pub gate: &'a [f32],
    /// `ĥ·W3`.
    pub up: &'a [f32],
}

pub trait Observer {
    fn observe(&mut self, obs: &LayerObservation<'_>);
}

impl<F: FnMut(&LayerObservation<'_>)> Observer for F {
    fn observe(&mut self, obs: &LayerObservation<'_>) {
        self(obs)
    }
}

struct NoopObserver;

impl Observer for NoopObserver {
    fn observe(&mut self, _: &LayerObservation<'_>) {}
}

/// Result of one feed-forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnOutput {
    pub output: Vec<f32>,
    /// Gate vector before steering.
    pub gate: Vec<f32>,
    pub up: Vec<f32>,
}

impl ToyModel {
    /// Deterministic random model: every matrix is drawn from
    /// `N(0, 1/sqrt(d_model))` with a ChaCha8 stream seeded by `seed`,
    /// and all norm gains start at one.
    pub fn new_random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / (config.d_model as f32).sqrt();
        let d = config.d_model;
        let ff = config.d_ff;
        let token_embedding = Matrix::random_normal(config.vocab_size, d, std, &mut rng);
        let position_embedding = Matrix::random_normal(config.max_seq_len, d, std, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| Layer {
                attn_norm: vec![1.0; d],
                wq: Matrix::random_normal(d, d, std, &mut rng),
                wk: Matrix::random_normal(d, d, std, &mut rng),
                wv: Matrix::random_normal(d, d, std, &mut rng),
                wo: Matrix::random_normal(d, d, std, &mut rng),
                ffn_norm: vec![1.0; d],
                w1: Matrix::random_normal(d, ff, std, &mut rng),
                w2: Matrix::random_normal(ff, d, std, &mut rng),
                w3: Matrix::random_normal(d, ff, std, &mut rng),
            })
            .collect();
        let lm_head = Matrix::random_normal(d, config.vocab_size, std, &mut rng);
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            layers,
            final_norm: vec![1.0; d],
            lm_head,
        })
    }

    /// Assembles a model from explicit parts, checking every shape and that
    /// all values are finite.
    pub fn from_parts(
        config: ModelConfig,
        token_embedding: Matrix,
        position_embedding: Matrix,
        layers: Vec<Layer>,
        final_norm: Vec<f32>,
        lm_head: Matrix,
    ) -> Result<Self> {
        config.validate()?;
        let model = Self {
            config,
            token_embedding,
            position_embedding,
            layers,
            final_norm,
            lm_head,
        };
        model.check_tensors()?;
        Ok(model)
    }

    /// All-zero model with the given config; useful for hand-wiring tests.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let ff = config.d_ff;
        Ok(Self {
            config,
            token_embedding: Matrix::zeros(config.vocab_size, d),
            position_embedding: Matrix::zeros(config.max_seq_len, d),
            layers: (0..config.n_layers)
                .map(|_| Layer {
                    attn_norm: vec![1.0; d],
                    wq: Matrix::zeros(d, d),
                    wk: Matrix::zeros(d, d),
                    wv: Matrix::zeros(d, d),
                    wo: Matrix::zeros(d, d),
                    ffn_norm: vec![1.0; d],
                    w1: Matrix::zeros(d, ff),
                    w2: Matrix::zeros(ff, d),
                    w3: Matrix::zeros(d, ff),
                })
                .collect(),
            final_norm: vec![1.0; d],
            lm_head: Matrix::zeros(d, config.vocab_size),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }

    pub fn token_embedding(&self) -> &Matrix {
        &self.token_embedding
    }

    pub fn position_embedding(&self) -> &Matrix {
        &self.position_embedding
    }

    pub fn final_norm(&self) -> &[f32] {
        &self.final_norm
    }

    pub fn lm_head(&self) -> &Matrix {
        &self.lm_head
    }

    /// Every tensor with its canonical name and shape, in file order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut out = Vec::with_capacity(4 + self.layers.len() * 9);
        fn mat(name: String, m: &Matrix) -> (String, Vec<usize>, &[f32]) {
            (name, vec![m.rows(), m.cols()], m.as_slice())
        }
        out.push(mat("token_embedding".into(), &self.token_embedding));
        out.push(mat("position_embedding".into(), &self.position_embedding));
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.attn_norm"), vec![l.attn_norm.len()], &l.attn_norm[..]));
            out.push(mat(format!("layers.{i}.wq"), &l.wq));
            out.push(mat(format!("layers.{i}.wk"), &l.wk));
            out.push(mat(format!("layers.{i}.wv"), &l.wv));
            out.push(mat(format!("layers.{i}.wo"), &l.wo));
            out.push((format!("layers.{i}.ffn_norm"), vec![l.ffn_norm.len()], &l.ffn_norm[..]));
            out.push(mat(format!("layers.{i}.w1"), &l.w1));
            out.push(mat(format!("layers.{i}.w2"), &l.w2));
            out.push(mat(format!("layers.{i}.w3"), &l.w3));
        }
        out.push(("final_norm".into(), vec![self.final_norm.len()], &self.final_norm[..]));
        out.push(mat("lm_head".into(), &self.lm_head));
        out
    }

    /// Expected `(name, shape)` list for a config, in file order.
    pub fn expected_tensor_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let d = config.d_model;
        let ff = config.d_ff;
        let mut out = vec![
            ("token_embedding".to_string(), vec![config.vocab_size, d]),
            ("position_embedding".to_string(), vec![config.max_seq_len, d]),
        ];
        for i in 0..config.n_layers {
            out.push((format!("layers.{i}.attn_norm"), vec![d]));
            out.push((format!("layers.{i}.wq"), vec![d, d]));
            out.push((format!("layers.{i}.wk"), vec![d, d]));
            out.push((format!("layers.{i}.wv"), vec![d, d]));
            out.push((format!("layers.{i}.wo"), vec![d, d]));
            out.push((format!("layers.{i}.ffn_norm"), vec![d]));
            out.push((format!("layers.{i}.w1"), vec![d, ff]));
            out.push((format!("layers.{i}.w2"), vec![ff, d]));
            out.push((format!("layers.{i}.w3"), vec![d, ff]));
        }
        out.push(("final_norm".to_string(), vec![d]));
        out.push(("lm_head".to_string(), vec![d, config.vocab_size]));
        out
    }

    fn check_tensors(&self) -> Result<()> {
        if self.layers.len() != self.config.n_layers {
            return Err(NptiError::config(format!(
                "expected {} layers, got {}",
                self.config.n_layers,
                self.layers.len()
            )));
        }
        let expected = Self::expected_tensor_shapes(&self.config);
        for ((name, shape, data), (_, want)) in self.named_tensors().into_iter().zip(expected) {
            let actual_len: usize = shape.iter().product();
            if shape != want || data.len() != actual_len {
                return Err(NptiError::config(format!(
                    "tensor {name} has shape {shape:?}, expected {want:?}"
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(NptiError::Numeric(format!("tensor {name} contains non-finite values")));
            }
        }
        Ok(())
    }

    /// SHA-256 over the config and every tensor's little-endian bytes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for (name, shape, data) in self.named_tensors() {
            hasher.update(name.as_bytes());
            for s in shape {
                hasher.update((s as u64).to_le_bytes());
            }
            for v in data {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Evaluates one layer's feed-forward block on a single ĥ.
    pub fn ffn_forward(
        &self,
        layer: usize,
        h_hat: &[f32],
        overlay: Option<&dyn GateOverlay>,
    ) -> Result<FfnOutput> {
        if layer >= self.config.n_layers {
            return Err(NptiError::input(format!(
                "layer {layer} out of range (n_layers = {})",
                self.config.n_layers
            )));
        }
        if h_hat.len() != self.config.d_model {
            return Err(NptiError::input(format!(
                "ffn input has length {}, expected d_model = {}",
                h_hat.len(),
                self.config.d_model
            )));
        }
        if h_hat.iter().any(|v| !v.is_finite()) {
            return Err(NptiError::Numeric("non-finite ffn input".into()));
        }
        let (output, gate, up) = self.ffn_core(layer, h_hat, overlay);
        if output.iter().any(|v| !v.is_finite()) {
            return Err(NptiError::Numeric(format!("non-finite ffn output in layer {layer}")));
        }
        Ok(FfnOutput { output, gate, up })
    }

    fn ffn_core(&self, layer: usize, h_hat: &[f32], overlay: Option<&dyn GateOverlay>) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let l = &self.layers[layer];
        let act = self.config.activation;
        let gate: Vec<f32> = l.w1.left_mul(h_hat).into_iter().map(|v| act.apply(v)).collect();
        let up = l.w3.left_mul(h_hat);
        let mut steered = gate.clone();
        if let Some(overlay) = overlay {
            overlay.apply(layer, &mut steered);
        }
        for (g, u) in steered.iter_mut().zip(&up) {
            *g *= u;
        }
        (l.w2.left_mul(&steered), gate, up)
    }

    /// Logits `[len × vocab_size]` for a full token sequence.
    pub fn forward(
        &self,
        tokens: &[TokenId],
        overlay: Option<&dyn GateOverlay>,
        observer: Option<&mut dyn Observer>,
    ) -> Result<Matrix> {
        self.check_tokens(tokens)?;
        let mut noop = NoopObserver;
        let observer: &mut dyn Observer = match observer {
            Some(o) => o,
            None => &mut noop,
        };
        let mut session = self.session(overlay);
        let mut logits = Matrix::zeros(tokens.len(), self.config.vocab_size);
        for (pos, &tok) in tokens.iter().enumerate() {
            let row = session.step_observed(tok, observer)?;
            logits.row_mut(pos).copy_from_slice(&row);
        }
        Ok(logits)
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.len() > self.config.max_seq_len {
            return Err(NptiError::input(format!(
                "sequence length {} exceeds max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        if let Some((pos, tok)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &t)| t as usize >= self.config.vocab_size)
        {
            return Err(NptiError::input(format!(
                "token id {tok} at position {pos} is out of range (vocab_size = {})",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Starts an incremental decoding session with a key/value cache.
    pub fn session<'m>(&'m self, overlay: Option<&'m dyn GateOverlay>) -> Session<'m> {
        Session {
            model: self,
            overlay,
            keys: vec![Vec::new(); self.config.n_layers],
            values: vec![Vec::new(); self.config.n_layers],
            len: 0,
        }
    }
}

/// Incremental forward state. Feeding tokens one at a time produces exactly
/// the rows a full [`ToyModel::forward`] would.
pub struct Session<'m> {
    model: &'m ToyModel,
    overlay: Option<&'m dyn GateOverlay>,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

impl Session<'_> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len >= self.model.config.max_seq_len
    }

    pub fn step(&mut self, token: TokenId) -> Result<Vec<f32>> {
        self.step_observed(token, &mut NoopObserver)
    }

    /// Appends one token and returns the logits at its position.
    pub fn step_observed(&mut self, token: TokenId, observer: &mut dyn Observer) -> Result<Vec<f32>> {
        let model = self.model;
        let cfg = &model.config;
        if token as usize >= cfg.vocab_size {
            return Err(NptiError::input(format!(
                "token id {token} is out of range (vocab_size = {})",
                cfg.vocab_size
            )));
        }
        if self.is_full() {
            return Err(NptiError::input(format!(
                "sequence length exceeds max_seq_len {}",
                cfg.max_seq_len
            )));
        }
        let pos = self.len;
        let d = cfg.d_model;
        let n_heads = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f32).sqrt();

        let mut x: Vec<f32> = model
            .token_embedding
            .row(token as usize)
            .iter()
            .zip(model.position_embedding.row(pos))
            .map(|(a, b)| a + b)
            .collect();

        let mut scores = vec![0.0f32; pos + 1];
        for (li, layer) in model.layers.iter().enumerate() {
            let a_in = rms_norm(&x, &layer.attn_norm, NORM_EPS);
            let q = layer.wq.left_mul(&a_in);
            self.keys[li].extend(layer.wk.left_mul(&a_in));
            self.values[li].extend(layer.wv.left_mul(&a_in));
            let keys = &self.keys[li];
            let values = &self.values[li];

            let mut attn = vec![0.0f32; d];
            for h in 0..n_heads {
                let qh = &q[h * hd..(h + 1) * hd];
                for (t, s) in scores.iter_mut().enumerate() {
                    *s = dot(qh, &keys[t * d + h * hd..t * d + (h + 1) * hd]) * scale;
                }
                softmax_in_place(&mut scores);
                let out = &mut attn[h * hd..(h + 1) * hd];
                for (t, &w) in scores.iter().enumerate() {
                    for (o, &v) in out.iter_mut().zip(&values[t * d + h * hd..t * d + (h + 1) * hd]) {
                        *o += w * v;
                    }
                }
            }
            for (xi, a) in x.iter_mut().zip(layer.wo.left_mul(&attn)) {
                *xi += a;
            }

            let h_hat = rms_norm(&x, &layer.ffn_norm, NORM_EPS);
            let (h, gate, up) = model.ffn_core(li, &h_hat, self.overlay);
            observer.observe(&LayerObservation {
                layer: li,
                position: pos,
                input: &h_hat,
                gate: &gate,
                up: &up,
            });
            for (xi, hi) in x.iter_mut().zip(h) {
                *xi += hi;
            }
        }

        let normed = rms_norm(&x, &model.final_norm, NORM_EPS);
        let logits = model.lm_head.left_mul(&normed);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NptiError::Numeric(format!("non-finite logits at position {pos}")));
        }
        self.len += 1;
        Ok(logits)
    }
}
