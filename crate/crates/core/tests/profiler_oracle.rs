use std::collections::BTreeMap;

use npti::corpus::{Aspect, Instance, PromptTemplate, Trait, TraitCorpus};
use npti::decoding::{greedy_decode, GenerationParams};
use npti::model::{Activation, LayerObservation, ModelConfig, NeuronId, ToyModel};
use npti::profiler::{profile, ActivationStats, ProfileOptions};
use npti::tokenizer::{tokenize, VOCAB_SIZE};

fn model() -> ToyModel {
    let cfg = ModelConfig {
        n_layers: 2,
        d_model: 8,
        d_ff: 8,
        n_heads: 2,
        vocab_size: VOCAB_SIZE,
        max_seq_len: 256,
        activation: Activation::Silu,
    };
    ToyModel::new_random(cfg, 42).unwrap()
}

fn corpus(n: usize) -> TraitCorpus {
    let instances = (0..n)
        .map(|i| Instance {
            description: format!("You enjoy company, variant {i}."),
            question: format!("What would you do at event number {i}?"),
            facet: None,
            topic: None,
        })
        .collect();
    TraitCorpus::new(Trait::E, Aspect::Positive, instances).unwrap()
}

/// Records every observation of the full prompt+generation replay and
/// counts positives at generated positions by hand.
fn brute_force(model: &ToyModel, corpus: &TraitCorpus, gen: &GenerationParams) -> (BTreeMap<NeuronId, u64>, u64) {
    let template = PromptTemplate::plain();
    let mut positive = BTreeMap::new();
    let mut total = 0u64;
    for inst in &corpus.instances {
        let prompt = tokenize(&template.render_instance(inst), true);
        let generated = greedy_decode(model, &prompt, gen, None).unwrap().tokens;
        let mut full = prompt.clone();
        full.extend(&generated);
        let mut log: Vec<(usize, usize, Vec<f32>)> = Vec::new();
        let mut obs = |o: &LayerObservation<'_>| log.push((o.layer, o.position, o.gate.to_vec()));
        model.forward(&full, None, Some(&mut obs)).unwrap();
        for (layer, position, gate) in log {
            if position < prompt.len() {
                continue;
            }
            if layer == 0 {
                total += 1;
            }
            for (i, g) in gate.iter().enumerate() {
                let c = positive.entry(NeuronId::new(layer, i)).or_insert(0u64);
                if *g > 0.0 {
                    *c += 1;
                }
            }
        }
    }
    (positive, total)
}

#[test]
fn streaming_counts_equal_brute_force_recount() {
    let m = model();
    let c = corpus(5);
    let gen = GenerationParams::with_max_tokens(12);
    let stats = profile(&m, &c, &PromptTemplate::plain(), &gen, &ProfileOptions::default()).unwrap();
    let (positive, total) = brute_force(&m, &c, &gen);
    assert_eq!(stats.total_count().unwrap(), total);
    for (id, count) in positive {
        assert_eq!(stats.positive_count(id), count, "neuron {id}");
    }
}

#[test]
fn two_prompt_run_equals_merge_of_singles() {
    let m = model();
    let c = corpus(2);
    let gen = GenerationParams::with_max_tokens(8);
    let opts = ProfileOptions::default();
    let t = PromptTemplate::plain();
    let both = profile(&m, &c, &t, &gen, &opts).unwrap();
    let first = TraitCorpus::new(Trait::E, Aspect::Positive, vec![c.instances[0].clone()]).unwrap();
    let second = TraitCorpus::new(Trait::E, Aspect::Positive, vec![c.instances[1].clone()]).unwrap();
    let mut merged: ActivationStats = profile(&m, &first, &t, &gen, &opts).unwrap();
    merged.merge(&profile(&m, &second, &t, &gen, &opts).unwrap()).unwrap();
    assert_eq!(merged.total_count().unwrap(), both.total_count().unwrap());
    for id in both.neuron_ids() {
        assert_eq!(merged.positive_count(id), both.positive_count(id));
    }
}

#[test]
fn zero_gate_column_never_counts() {
    let base = model();
    let mut layers: Vec<_> = (0..2).map(|i| base.layer(i).clone()).collect();
    for r in 0..8 {
        layers[1].w1.set(r, 3, 0.0);
    }
    let m = ToyModel::from_parts(
        *base.config(),
        base.token_embedding().clone(),
        base.position_embedding().clone(),
        layers,
        base.final_norm().to_vec(),
        base.lm_head().clone(),
    )
    .unwrap();
    let stats = profile(&m, &corpus(2), &PromptTemplate::plain(), &GenerationParams::with_max_tokens(6), &ProfileOptions::default()).unwrap();
    assert_eq!(stats.activation_probability().unwrap()[&NeuronId::new(1, 3)], 0.0);
}

#[test]
fn profiling_is_reproducible() {
    let m = model();
    let c = corpus(3);
    let gen = GenerationParams::with_max_tokens(6);
    let a = npti::profile_report(&m, &c, &PromptTemplate::plain(), &gen, &ProfileOptions::default()).unwrap();
    let b = npti::profile_report(&m, &c, &PromptTemplate::plain(), &gen, &ProfileOptions::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
