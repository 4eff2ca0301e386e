//! Per-neuron activation statistics gathered while the unsteered model
//! answers a trait corpus.
//!
//! Only positions holding *generated* tokens are counted. After greedy
//! decoding finishes, the prompt plus generated tokens are replayed through
//! one observed forward pass; causal masking makes the gate values at those
//! positions identical to the ones seen during decoding.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Aspect, PromptTemplate, Trait, TraitCorpus};
use crate::decoding::{greedy_decode, GenerationParams};
use crate::error::{NptiError, Result};
use crate::model::{LayerObservation, ModelConfig, NeuronId, TokenId, ToyModel};
use crate::tokenizer::tokenize;

pub const DEFAULT_RESERVOIR_CAPACITY: usize = 4096;
pub const PROFILE_SCHEMA: &str = "nptiprofile/1";

/// Uniform reservoir sample (algorithm R) of a value stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    capacity: usize,
    seen: u64,
    samples: Vec<f32>,
}

impl Reservoir {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        Self {
            capacity,
            seen: 0,
            samples: Vec::new(),
        }
    }

    /// Rebuilds a reservoir from persisted parts.
    pub fn from_parts(capacity: usize, seen: u64, samples: Vec<f32>) -> Result<Self> {
        if capacity == 0 || samples.len() > capacity || samples.len() as u64 > seen {
            return Err(NptiError::format(format!(
                "inconsistent reservoir: capacity {capacity}, seen {seen}, {} samples",
                samples.len()
            )));
        }
        if (seen as usize) <= capacity && samples.len() as u64 != seen {
            return Err(NptiError::format("reservoir below capacity must hold every value seen"));
        }
        Ok(Self {
            capacity,
            seen,
            samples,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// True while every value seen is still held.
    pub fn is_exact(&self) -> bool {
        self.samples.len() as u64 == self.seen
    }

    pub fn push<R: Rng + ?Sized>(&mut self, value: f32, rng: &mut R) {
        self.seen += 1;
        if self.samples.len() < self.capacity {
            self.samples.push(value);
        } else {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.samples[j as usize] = value;
            }
        }
    }

    /// Combines two samples of disjoint streams. Exact while the union fits;
    /// otherwise each slot is drawn from a side with probability proportional
    /// to the number of stream values that side still represents.
    pub fn merge<R: Rng + ?Sized>(&self, other: &Reservoir, rng: &mut R) -> Reservoir {
        let capacity = self.capacity.max(other.capacity);
        let seen = self.seen + other.seen;
        if self.samples.len() + other.samples.len() <= capacity {
            let mut samples = self.samples.clone();
            samples.extend_from_slice(&other.samples);
            return Reservoir {
                capacity,
                seen,
                samples,
            };
        }
        // each held sample stands for seen/len values of its stream
        let per_left = self.seen as f64 / self.samples.len().max(1) as f64;
        let per_right = other.seen as f64 / other.samples.len().max(1) as f64;
        let mut left = self.samples.clone();
        let mut right = other.samples.clone();
        let mut samples = Vec::with_capacity(capacity);
        while samples.len() < capacity && !(left.is_empty() && right.is_empty()) {
            let w_left = left.len() as f64 * per_left;
            let w_right = right.len() as f64 * per_right;
            let pool = if rng.random::<f64>() * (w_left + w_right) < w_left {
                &mut left
            } else {
                &mut right
            };
            let k = rng.random_range(0..pool.len());
            samples.push(pool.swap_remove(k));
        }
        Reservoir {
            capacity,
            seen,
            samples,
        }
    }

    pub fn percentile(&self, p: f64) -> Result<f32> {
        percentile(&self.samples, p)
    }
}

/// Nearest-rank percentile: the `ceil(p·n)`-th smallest sample.
pub fn percentile(samples: &[f32], p: f64) -> Result<f32> {
    if samples.is_empty() {
        return Err(NptiError::input("percentile of an empty sample"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(NptiError::input(format!("percentile fraction {p} outside (0, 1]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len();
    let raw = p * n as f64;
    // p·n that is integral up to rounding (0.95·100) must not ceil upward
    let rank = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    let rank = (rank as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

/// Streaming positive/total counts and value reservoirs for every neuron.
#[derive(Debug, Clone)]
pub struct ActivationStats {
    n_layers: usize,
    d_ff: usize,
    positive: Vec<u64>,
    totals: Vec<u64>,
    reservoirs: Vec<Reservoir>,
    rng: ChaCha8Rng,
}

impl PartialEq for ActivationStats {
    fn eq(&self, other: &Self) -> bool {
        self.n_layers == other.n_layers
            && self.d_ff == other.d_ff
            && self.positive == other.positive
            && self.totals == other.totals
            && self.reservoirs == other.reservoirs
    }
}

impl ActivationStats {
    pub fn new(config: &ModelConfig, reservoir_capacity: usize, seed: u64) -> Self {
        Self::with_shape(config.n_layers, config.d_ff, reservoir_capacity, seed)
    }

    pub fn with_shape(n_layers: usize, d_ff: usize, reservoir_capacity: usize, seed: u64) -> Self {
        Self {
            n_layers,
            d_ff,
            positive: vec![0; n_layers * d_ff],
            totals: vec![0; n_layers],
            reservoirs: vec![Reservoir::new(reservoir_capacity); n_layers * d_ff],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn d_ff(&self) -> usize {
        self.d_ff
    }

    fn slot(&self, id: NeuronId) -> usize {
        assert!(id.layer < self.n_layers && id.index < self.d_ff, "neuron {id} out of range");
        id.layer * self.d_ff + id.index
    }

    /// Records one token position's gate vector for `layer`.
    pub fn record(&mut self, layer: usize, gate: &[f32]) {
        assert_eq!(gate.len(), self.d_ff, "gate length must equal d_ff");
        self.totals[layer] += 1;
        let base = layer * self.d_ff;
        for (i, &g) in gate.iter().enumerate() {
            if g > 0.0 {
                self.positive[base + i] += 1;
            }
            self.reservoirs[base + i].push(g, &mut self.rng);
        }
    }

    /// Number of observed token positions. Errors if layers disagree.
    pub fn total_count(&self) -> Result<u64> {
        let first = self.totals.first().copied().unwrap_or(0);
        if self.totals.iter().any(|&t| t != first) {
            return Err(NptiError::Consistency(format!(
                "per-layer token counts differ: {:?}",
                self.totals
            )));
        }
        Ok(first)
    }

    pub fn positive_count(&self, id: NeuronId) -> u64 {
        self.positive[self.slot(id)]
    }

    pub fn reservoir(&self, id: NeuronId) -> &Reservoir {
        &self.reservoirs[self.slot(id)]
    }

    pub fn neuron_ids(&self) -> impl Iterator<Item = NeuronId> + '_ {
        (0..self.n_layers).flat_map(move |layer| (0..self.d_ff).map(move |index| NeuronId { layer, index }))
    }

    /// Adds another run's counts and folds its reservoirs into this one's.
    pub fn merge(&mut self, other: &ActivationStats) -> Result<()> {
        if (self.n_layers, self.d_ff) != (other.n_layers, other.d_ff) {
            return Err(NptiError::Consistency(format!(
                "cannot merge stats of shape {}x{} with {}x{}",
                self.n_layers, self.d_ff, other.n_layers, other.d_ff
            )));
        }
        for (a, b) in self.positive.iter_mut().zip(&other.positive) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        for i in 0..self.reservoirs.len() {
            self.reservoirs[i] = self.reservoirs[i].merge(&other.reservoirs[i], &mut self.rng);
        }
        Ok(())
    }

    pub fn activation_probability(&self) -> Result<BTreeMap<NeuronId, f64>> {
        activation_probability(self)
    }

    /// 95th percentile of each neuron's sampled gate values.
    pub fn a95(&self) -> Result<BTreeMap<NeuronId, f32>> {
        self.neuron_ids()
            .map(|id| Ok((id, self.reservoir(id).percentile(0.95)?)))
            .collect()
    }
}

/// `Pr_i = positive_i / total` for every neuron.
pub fn activation_probability(stats: &ActivationStats) -> Result<BTreeMap<NeuronId, f64>> {
    let total = stats.total_count()?;
    if total == 0 {
        return Err(NptiError::input("activation probability undefined: total token count is 0"));
    }
    Ok(stats
        .neuron_ids()
        .map(|id| (id, stats.positive_count(id) as f64 / total as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub reservoir_capacity: usize,
    pub seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            reservoir_capacity: DEFAULT_RESERVOIR_CAPACITY,
            seed: 0,
        }
    }
}

fn instance_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Prompt tokens (with BOS) and the generated continuation for one instance.
pub fn generate_for_prompt(
    model: &ToyModel,
    prompt_text: &str,
    gen: &GenerationParams,
) -> Result<(Vec<TokenId>, Vec<TokenId>)> {
    let prompt = tokenize(prompt_text, true);
    let generation = greedy_decode(model, &prompt, gen, None)?;
    Ok((prompt, generation.tokens))
}

/// Replays prompt + generation and hands every generated position's
/// observation to `sink`.
fn observe_generated(
    model: &ToyModel,
    prompt: &[TokenId],
    generated: &[TokenId],
    sink: &mut dyn FnMut(&LayerObservation<'_>),
) -> Result<()> {
    let mut full = prompt.to_vec();
    full.extend_from_slice(generated);
    full.truncate(model.config().max_seq_len);
    let start = prompt.len();
    let mut observer = |obs: &LayerObservation<'_>| {
        if obs.position >= start {
            sink(obs);
        }
    };
    model.forward(&full, None, Some(&mut observer))?;
    Ok(())
}

/// Unsteered generation over every corpus instance, accumulating
/// activation statistics at generated positions.
pub fn profile(
    model: &ToyModel,
    corpus: &TraitCorpus,
    template: &PromptTemplate,
    gen: &GenerationParams,
    options: &ProfileOptions,
) -> Result<ActivationStats> {
    if corpus.instances.is_empty() {
        return Err(NptiError::input("cannot profile an empty corpus"));
    }
    if options.reservoir_capacity == 0 {
        return Err(NptiError::config("reservoir capacity must be positive"));
    }
    gen.validate()?;
    let cfg = model.config();
    let parts: Vec<ActivationStats> = corpus
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let (prompt, generated) = generate_for_prompt(model, &template.render_instance(inst), gen)?;
            let mut stats = ActivationStats::new(cfg, options.reservoir_capacity, instance_seed(options.seed, i));
            observe_generated(model, &prompt, &generated, &mut |obs| stats.record(obs.layer, obs.gate))?;
            Ok(stats)
        })
        .collect::<Result<_>>()?;

    let mut stats = ActivationStats::new(cfg, options.reservoir_capacity, options.seed);
    for part in &parts {
        stats.merge(part)?;
    }
    if stats.total_count()? == 0 {
        return Err(NptiError::input("no tokens generated"));
    }
    Ok(stats)
}

/// One neuron's gate value at every generated position of the corpus run,
/// in instance order.
pub fn collect_gate_values(
    model: &ToyModel,
    corpus: &TraitCorpus,
    template: &PromptTemplate,
    gen: &GenerationParams,
    neuron: NeuronId,
) -> Result<Vec<f32>> {
    if !model.config().contains(neuron) {
        return Err(NptiError::input(format!(
            "neuron {neuron} is outside the model ({} layers x {} neurons)",
            model.config().n_layers,
            model.config().d_ff
        )));
    }
    gen.validate()?;
    let per_instance: Vec<Vec<f32>> = corpus
        .instances
        .par_iter()
        .map(|inst| {
            let (prompt, generated) = generate_for_prompt(model, &template.render_instance(inst), gen)?;
            let mut values = Vec::new();
            observe_generated(model, &prompt, &generated, &mut |obs| {
                if obs.layer == neuron.layer {
                    values.push(obs.gate[neuron.index]);
                }
            })?;
            Ok(values)
        })
        .collect::<Result<_>>()?;
    Ok(per_instance.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileFingerprints {
    pub model: String,
    pub corpus: String,
    pub generation: String,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub layer: usize,
    pub index: usize,
    pub seen: u64,
    pub values: Vec<f32>,
}

/// Serialized result of one profiling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub schema: String,
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub aspect: Aspect,
    pub n_tokens: u64,
    pub n_layers: usize,
    pub d_ff: usize,
    /// `[layer, index, Pr]` triples in canonical order.
    pub pr: Vec<(usize, usize, f64)>,
    pub a95: Vec<(usize, usize, f32)>,
    pub fingerprints: ProfileFingerprints,
    pub reservoir_capacity: usize,
    /// Reservoir contents, kept so a95 can be re-estimated over the union
    /// of both aspects' runs.
    pub samples: Vec<SampleEntry>,
}

impl ProfileReport {
    pub fn from_stats(
        stats: &ActivationStats,
        trait_: Trait,
        aspect: Aspect,
        fingerprints: ProfileFingerprints,
    ) -> Result<Self> {
        let pr = activation_probability(stats)?;
        let a95 = stats.a95()?;
        Ok(Self {
            schema: PROFILE_SCHEMA.to_string(),
            trait_,
            aspect,
            n_tokens: stats.total_count()?,
            n_layers: stats.n_layers,
            d_ff: stats.d_ff,
            pr: pr.into_iter().map(|(id, p)| (id.layer, id.index, p)).collect(),
            a95: a95.into_iter().map(|(id, v)| (id.layer, id.index, v)).collect(),
            fingerprints,
            reservoir_capacity: stats.reservoirs.first().map(Reservoir::capacity).unwrap_or(1),
            samples: stats
                .neuron_ids()
                .map(|id| {
                    let r = stats.reservoir(id);
                    SampleEntry {
                        layer: id.layer,
                        index: id.index,
                        seen: r.seen(),
                        values: r.samples().to_vec(),
                    }
                })
                .collect(),
        })
    }

    pub fn pr_map(&self) -> BTreeMap<NeuronId, f64> {
        self.pr.iter().map(|&(l, i, p)| (NeuronId::new(l, i), p)).collect()
    }

    pub fn a95_map(&self) -> BTreeMap<NeuronId, f32> {
        self.a95.iter().map(|&(l, i, v)| (NeuronId::new(l, i), v)).collect()
    }

    pub fn reservoirs(&self) -> Result<BTreeMap<NeuronId, Reservoir>> {
        self.samples
            .iter()
            .map(|s| {
                Ok((
                    NeuronId::new(s.layer, s.index),
                    Reservoir::from_parts(self.reservoir_capacity, s.seen, s.values.clone())?,
                ))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != PROFILE_SCHEMA {
            return Err(NptiError::format(format!(
                "unsupported profile schema {:?}, expected {PROFILE_SCHEMA}",
                self.schema
            )));
        }
        let expected = self.n_layers * self.d_ff;
        if self.pr.len() != expected {
            return Err(NptiError::format(format!(
                "profile lists {} Pr values for {expected} neurons",
                self.pr.len()
            )));
        }
        for &(l, i, p) in &self.pr {
            if l >= self.n_layers || i >= self.d_ff {
                return Err(NptiError::format(format!("Pr entry for out-of-range neuron {l}:{i}")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(NptiError::format(format!("Pr of neuron {l}:{i} is {p}, outside [0, 1]")));
            }
        }
        if let Some(&(l, i, _)) = self.a95.iter().find(|(_, _, v)| !v.is_finite()) {
            return Err(NptiError::format(format!("a95 of neuron {l}:{i} is not finite")));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let report: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        report.validate()?;
        Ok(report)
    }
}

/// Profiles a corpus and packages the result with provenance fingerprints.
pub fn profile_report(
    model: &ToyModel,
    corpus: &TraitCorpus,
    template: &PromptTemplate,
    gen: &GenerationParams,
    options: &ProfileOptions,
) -> Result<ProfileReport> {
    let stats = profile(model, corpus, template, gen, options)?;
    ProfileReport::from_stats(
        &stats,
        corpus.trait_,
        corpus.aspect,
        ProfileFingerprints {
            model: model.fingerprint(),
            corpus: corpus.fingerprint(),
            generation: gen.fingerprint(),
            template: hex::encode(<sha2::Sha256 as sha2::Digest>::digest(template.body().as_bytes())),
        },
    )
}
