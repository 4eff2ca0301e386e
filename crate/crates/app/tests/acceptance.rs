//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use npti::corpus::{Aspect, Instance, PromptTemplate, Trait, TraitCorpus};
use npti::decoding::{apply_repetition_penalty, argmax, greedy_decode, GenerationParams};
use npti::identifier::{classify, delta, DeltaMap, IdentifierConfig, LayerHistogram, NeuronClass, NeuronEntry, NeuronMap};
use npti::model::{Activation, GateOverlay, Layer, LayerObservation, ModelConfig, NeuronId, ToyModel};
use npti::profiler::{percentile, profile, ActivationStats, ProfileOptions, ProfileReport, Reservoir};
use npti::steering::{apply_steering, weight_fn, BoundSteering, Direction, SteeringSpec, WeightFnParams};
use npti::tensor::Matrix;
use npti::tokenizer::{tokenize, VOCAB_SIZE};
use npti_app::manifest::load_manifest;
use npti_app::registry::MapRegistry;
use npti_app::server::{AppState, GenerateResponse};
use npti_eval::{aggregate, parse_rating, ScoreRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("A1", "weight function exactness", a1),
        ("A2", "profiler equals brute-force recount", a2),
        ("A3", "zero gate counts as inactive", a3),
        ("A4", "delta antisymmetry and strict thresholds", a4),
        ("A5", "empty steering is bit-identical", a5),
        ("A6", "boost and clamp exactness", a6),
        ("A7", "reversal equals swapped map", a7),
        ("A8", "directional effect on wired model", a8),
        ("A9", "decode determinism and penalty", a9),
        ("A10", "nearest-rank percentile and reservoir band", a10),
        ("A11", "aggregation and rating parser", a11),
        ("A12", "CLI pipeline smoke run", a12),
        ("A13", "service isolation under concurrency", a13),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("{id:<4} PASS  {name} ({detail}; {ms} ms)"),
            Err(why) => {
                failed += 1;
                println!("{id:<4} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn a1() -> Outcome {
    let p = WeightFnParams::default();
    let at_mid = weight_fn(0.15, &p);
    ensure((at_mid - 0.5).abs() <= 1e-12, || format!("f(0.15) = {at_mid}"))?;
    // 10·(0.25 − 0.15) = 1, so f(0.25) is the logistic function at 1
    let want = 1.0 / (1.0 + (-1.0f64).exp());
    let at_quarter = weight_fn(0.25, &p);
    ensure((at_quarter - want).abs() <= 1e-9, || format!("f(0.25) = {at_quarter}, want {want}"))?;
    let mut prev = weight_fn(0.0, &p);
    for k in 1..=1000 {
        let d = k as f64 * 1e-3;
        let v = weight_fn(d, &p);
        ensure(v > prev, || format!("not increasing at |δ| = {d}"))?;
        ensure(weight_fn(-d, &p) == v, || format!("f(-{d}) != f({d})"))?;
        prev = v;
    }
    Ok("f(0.15)=0.5, f(0.25)=0.7310585786, 1001 samples increasing".into())
}

fn seeded_model(n_layers: usize, d_model: usize, d_ff: usize, vocab: usize, max_seq: usize, seed: u64) -> ToyModel {
    let cfg = ModelConfig {
        n_layers,
        d_model,
        d_ff,
        n_heads: 2,
        vocab_size: vocab,
        max_seq_len: max_seq,
        activation: Activation::Silu,
    };
    ToyModel::new_random(cfg, seed).unwrap()
}

fn a2() -> Outcome {
    let start = Instant::now();
    let model = seeded_model(2, 8, 8, VOCAB_SIZE, 256, 42);
    let instances = (0..5)
        .map(|i| Instance {
            description: format!("You like meeting people, version {i}."),
            question: format!("How do you spend evening {i}?"),
            facet: None,
            topic: None,
        })
        .collect();
    let corpus = TraitCorpus::new(Trait::E, Aspect::Positive, instances).unwrap();
    let template = PromptTemplate::plain();
    let gen = GenerationParams::with_max_tokens(16);
    let stats = profile(&model, &corpus, &template, &gen, &ProfileOptions::default()).map_err(|e| e.to_string())?;

    // Full observation log of prompt + generation, recounted by hand.
    let mut positive: BTreeMap<NeuronId, u64> = BTreeMap::new();
    let mut total = 0u64;
    for inst in &corpus.instances {
        let prompt = tokenize(&template.render_instance(inst), true);
        let generated = greedy_decode(&model, &prompt, &gen, None).unwrap().tokens;
        let mut full = prompt.clone();
        full.extend(&generated);
        let mut log: Vec<(usize, usize, Vec<f32>)> = Vec::new();
        let mut obs = |o: &LayerObservation<'_>| log.push((o.layer, o.position, o.gate.to_vec()));
        model.forward(&full, None, Some(&mut obs)).unwrap();
        for (layer, position, gate) in log {
            if position < prompt.len() {
                continue;
            }
            total += (layer == 0) as u64;
            for (i, g) in gate.iter().enumerate() {
                *positive.entry(NeuronId::new(layer, i)).or_insert(0) += (*g > 0.0) as u64;
            }
        }
    }
    let streamed_total = stats.total_count().map_err(|e| e.to_string())?;
    ensure(streamed_total == total, || format!("token count {streamed_total} vs {total}"))?;
    for (id, count) in &positive {
        let got = stats.positive_count(*id);
        ensure(got == *count, || format!("neuron {id}: {got} vs {count}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("{} neurons over {total} generated tokens", positive.len()))
}

fn a3() -> Outcome {
    let mut stats = ActivationStats::with_shape(1, 1, 16, 0);
    for g in [0.5f32, -0.2, 0.0, 1.1] {
        stats.record(0, &[g]);
    }
    let pr = stats.activation_probability().map_err(|e| e.to_string())?[&NeuronId::new(0, 0)];
    ensure(pr == 0.5, || format!("Pr = {pr}"))?;
    Ok("Pr = 0.5".into())
}

fn a4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for round in 0..50 {
        let ids: Vec<NeuronId> = (0..3).flat_map(|l| (0..20).map(move |i| NeuronId::new(l, i))).collect();
        let a: BTreeMap<NeuronId, f64> = ids.iter().map(|&id| (id, rng.random::<f64>())).collect();
        let b: BTreeMap<NeuronId, f64> = ids.iter().map(|&id| (id, rng.random::<f64>())).collect();
        let ab = delta(&a, &b).map_err(|e| e.to_string())?;
        let ba = delta(&b, &a).map_err(|e| e.to_string())?;
        for &id in &ids {
            let (x, y) = (ab.get(id).unwrap(), ba.get(id).unwrap());
            ensure(x == -y, || format!("round {round}, {id}: {x} vs {y}"))?;
        }
    }
    let crafted = DeltaMap(
        [(0, 0.10), (1, 0.14), (2, -0.11), (3, -0.10)]
            .into_iter()
            .map(|(i, d)| (NeuronId::new(0, i), d))
            .collect(),
    );
    let c = classify(&crafted, &IdentifierConfig::default());
    let n = |i| NeuronId::new(0, i);
    ensure(!c.pos.contains(&n(0)) && !c.neg.contains(&n(0)), || "0.10 was classified".into())?;
    ensure(c.pos.contains(&n(1)), || "0.14 not pos".into())?;
    ensure(c.neg.contains(&n(2)), || "-0.11 not neg".into())?;
    ensure(!c.neg.contains(&n(3)), || "-0.10 was classified".into())?;
    ensure(c.pos.len() == 1 && c.neg.len() == 1, || format!("{c:?}"))?;
    Ok("50 random profile pairs; 0.10 unclassified, 0.14 pos, -0.11 neg".into())
}

fn a5() -> Outcome {
    let model = seeded_model(3, 16, 32, VOCAB_SIZE, 64, 5);
    let bound = SteeringSpec::empty().bind(model.config()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for k in 0..100 {
        let len = rng.random_range(1..=48);
        let prompt: Vec<u32> = (0..len).map(|_| rng.random_range(0..VOCAB_SIZE as u32)).collect();
        let plain = model.forward(&prompt, None, None).unwrap();
        let steered = model.forward(&prompt, Some(&bound), None).unwrap();
        let same = plain
            .as_slice()
            .iter()
            .zip(steered.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("prompt {k} differs"))?;
    }
    Ok("100 random prompts".into())
}

/// Wraps an overlay and logs each gate vector before and after it.
struct Recording {
    inner: BoundSteering,
    log: Mutex<Vec<(usize, Vec<f32>, Vec<f32>)>>,
}

impl GateOverlay for Recording {
    fn apply(&self, layer: usize, gate: &mut [f32]) {
        let before = gate.to_vec();
        self.inner.apply(layer, gate);
        self.log.lock().unwrap().push((layer, before, gate.to_vec()));
    }
}

fn a6() -> Outcome {
    let model = common::small_model(6);
    let map = common::random_map(&model, Trait::A, 66);
    let gamma = 1.4;
    let rec = Recording {
        inner: SteeringSpec::single(map.clone(), Direction::Positive, gamma)
            .bind(model.config())
            .map_err(|e| e.to_string())?,
        log: Mutex::new(Vec::new()),
    };
    model.forward(&tokenize("Tell me about your weekend.", true), Some(&rec), None).unwrap();
    let params = WeightFnParams::default();
    let (mut boosts, mut clamps) = (0, 0);
    for (layer, before, after) in rec.log.into_inner().unwrap() {
        for e in map.entries.iter().filter(|e| e.layer == layer) {
            let (pre, post) = (before[e.index], after[e.index]);
            match e.class {
                NeuronClass::Pos => {
                    let want = gamma * e.a95 * weight_fn(e.delta, &params);
                    let got = (post - pre) as f64;
                    ensure((got - want).abs() <= 1e-6, || format!("{}: {got} vs {want}", e.id()))?;
                    boosts += 1;
                }
                NeuronClass::Neg => {
                    ensure(post <= 0.0, || format!("{}: {post} > 0", e.id()))?;
                    clamps += 1;
                }
            }
        }
    }

    let cfg = ModelConfig {
        n_layers: 1,
        d_model: 2,
        d_ff: 1,
        n_heads: 1,
        vocab_size: 4,
        max_seq_len: 4,
        activation: Activation::Silu,
    };
    let mut spot = NeuronMap::empty(Trait::E, &IdentifierConfig::default());
    spot.entries.push(NeuronEntry {
        layer: 0,
        index: 0,
        delta: 0.15,
        a95: 2.0,
        class: NeuronClass::Pos,
    });
    let bound = SteeringSpec::single(spot, Direction::Positive, 1.4).bind(&cfg).map_err(|e| e.to_string())?;
    let v = apply_steering(&[1.0], 0, &bound)[0];
    ensure((v - 2.4).abs() <= 1e-6, || format!("spot value {v}"))?;
    Ok(format!("{boosts} boosts and {clamps} clamps checked; spot value {v}"))
}

fn a7() -> Outcome {
    let model = common::small_model(7);
    let map = common::random_map(&model, Trait::C, 77);
    let neg = SteeringSpec::single(map.clone(), Direction::Negative, 1.4).bind(model.config()).map_err(|e| e.to_string())?;
    let swapped = SteeringSpec::single(map.swapped(), Direction::Positive, 1.4)
        .bind(model.config())
        .map_err(|e| e.to_string())?;
    let toks = tokenize("What do you do when plans change?", true);
    let a = model.forward(&toks, Some(&neg), None).unwrap();
    let b = model.forward(&toks, Some(&swapped), None).unwrap();
    let worst = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max);
    ensure(worst <= 1e-6, || format!("max logit difference {worst}"))?;
    Ok(format!("max logit difference {worst:e}"))
}

// Hand-built single-layer model: every token embeds to e0, attention is
// zero, neuron K reads e0 and writes C·e1, and token "A" reads e1.
const K: usize = 1;
const W1: f32 = 0.5;
const W3: f32 = 1.0;
const C: f32 = 0.8;
const EPS: f64 = 1e-5;
const TOKEN_A: usize = b'A' as usize + 2;
const TOKEN_B: usize = b'B' as usize + 2;

fn wired_model() -> ToyModel {
    let cfg = ModelConfig {
        n_layers: 1,
        d_model: 2,
        d_ff: 2,
        n_heads: 1,
        vocab_size: VOCAB_SIZE,
        max_seq_len: 16,
        activation: Activation::Silu,
    };
    let mut tok = Matrix::zeros(VOCAB_SIZE, 2);
    for r in 0..VOCAB_SIZE {
        tok.set(r, 0, 1.0);
    }
    let (mut w1, mut w2, mut w3) = (Matrix::zeros(2, 2), Matrix::zeros(2, 2), Matrix::zeros(2, 2));
    w1.set(0, K, W1);
    w3.set(0, K, W3);
    w2.set(K, 1, C);
    let mut head = Matrix::zeros(2, VOCAB_SIZE);
    head.set(1, TOKEN_A, 1.0);
    head.set(0, TOKEN_B, 1.0);
    let layer = Layer {
        attn_norm: vec![1.0; 2],
        wq: Matrix::zeros(2, 2),
        wk: Matrix::zeros(2, 2),
        wv: Matrix::zeros(2, 2),
        wo: Matrix::zeros(2, 2),
        ffn_norm: vec![1.0; 2],
        w1,
        w2,
        w3,
    };
    ToyModel::from_parts(cfg, tok, Matrix::zeros(16, 2), vec![layer], vec![1.0; 2], head).unwrap()
}

fn oracle_gate() -> f64 {
    let a = W1 as f64 / (0.5 + EPS).sqrt();
    a / (1.0 + (-a).exp())
}

fn oracle_p_a(gate: f64) -> f64 {
    let h0 = 1.0 / (0.5 + EPS).sqrt();
    let x1 = gate * W3 as f64 * h0 * C as f64;
    let r = ((1.0 + x1 * x1) / 2.0 + EPS).sqrt();
    let (la, lb) = (x1 / r, 1.0 / r);
    la.exp() / (la.exp() + lb.exp() + (VOCAB_SIZE - 2) as f64)
}

fn model_p_a(model: &ToyModel, overlay: Option<&dyn GateOverlay>) -> f64 {
    let logits = model.forward(&[0, 40, 41], overlay, None).unwrap();
    let row: Vec<f64> = logits.row(2).iter().map(|&v| v as f64).collect();
    row[TOKEN_A].exp() / row.iter().map(|v| v.exp()).sum::<f64>()
}

fn wired_map(class: NeuronClass, delta: f64) -> NeuronMap {
    let mut m = NeuronMap::empty(Trait::E, &IdentifierConfig::default());
    m.entries.push(NeuronEntry {
        layer: 0,
        index: K,
        delta,
        a95: 1.0,
        class,
    });
    m
}

fn a8() -> Outcome {
    let model = wired_model();
    let g = oracle_gate();
    ensure(g > 0.0, || "unsteered gate not positive".into())?;
    let base = model_p_a(&model, None);
    ensure((base - oracle_p_a(g)).abs() < 1e-6, || format!("unsteered P(A) {base} vs oracle {}", oracle_p_a(g)))?;
    let map = Arc::new(wired_map(NeuronClass::Pos, 0.3));
    let f = weight_fn(0.3, &WeightFnParams::default());
    let mut last = base;
    let mut trail = vec![format!("{base:.6}")];
    for gamma in [0.5, 1.0, 2.0] {
        let bound = SteeringSpec::single(Arc::clone(&map), Direction::Positive, gamma)
            .bind(model.config())
            .map_err(|e| e.to_string())?;
        let p = model_p_a(&model, Some(&bound));
        let want = oracle_p_a(g + gamma * f);
        ensure((p - want).abs() < 1e-6, || format!("gamma {gamma}: {p} vs oracle {want}"))?;
        ensure(p > last, || format!("gamma {gamma}: {p} <= {last}"))?;
        trail.push(format!("{p:.6}"));
        last = p;
    }
    let clamp = SteeringSpec::single(wired_map(NeuronClass::Neg, -0.3), Direction::Positive, 1.4)
        .bind(model.config())
        .map_err(|e| e.to_string())?;
    let p = model_p_a(&model, Some(&clamp));
    ensure(p < base, || format!("clamped {p} >= {base}"))?;
    ensure((p - oracle_p_a(0.0)).abs() < 1e-6, || format!("clamped {p} vs oracle {}", oracle_p_a(0.0)))?;
    Ok(format!("P(A) {} ; clamped {p:.6}", trail.join(" < ")))
}

fn a9() -> Outcome {
    let model = seeded_model(2, 16, 32, VOCAB_SIZE, 128, 9);
    let prompt = tokenize("Describe a quiet afternoon.", true);
    let params = GenerationParams::with_max_tokens(24);
    let a = greedy_decode(&model, &prompt, &params, None).map_err(|e| e.to_string())?;
    let b = greedy_decode(&model, &prompt, &params, None).map_err(|e| e.to_string())?;
    ensure(a == b, || "two decodes differ".into())?;

    let plain = GenerationParams {
        repetition_penalty: 1.0,
        ..GenerationParams::with_max_tokens(24)
    };
    let got = greedy_decode(&model, &prompt, &plain, None).map_err(|e| e.to_string())?.tokens;
    let mut ctx = prompt.clone();
    let mut want = Vec::new();
    for _ in 0..24 {
        let logits = model.forward(&ctx, None, None).unwrap();
        let t = argmax(logits.row(ctx.len() - 1)) as u32;
        want.push(t);
        if t == npti::tokenizer::EOS {
            break;
        }
        ctx.push(t);
    }
    ensure(got == want, || format!("penalty 1.0 decode {got:?} vs argmax {want:?}"))?;

    let mut logits = vec![2.2f32, -2.0, 0.7];
    apply_repetition_penalty(&mut logits, &[0, 1, 0], 1.1);
    ensure((logits[0] - 2.0).abs() < 1e-6, || format!("2.2 -> {}", logits[0]))?;
    ensure((logits[1] + 2.2).abs() < 1e-6, || format!("-2.0 -> {}", logits[1]))?;
    ensure(logits[2] == 0.7, || "unseen token changed".into())?;
    Ok(format!("{} tokens reproduced; 2.2->{:.6}, -2.0->{:.6}", a.tokens.len(), logits[0], logits[1]))
}

fn a10() -> Outcome {
    let hundred: Vec<f32> = (1..=100).map(|v| v as f32).collect();
    let p = percentile(&hundred, 0.95).map_err(|e| e.to_string())?;
    ensure(p == 95.0, || format!("{{1..100}} -> {p}"))?;
    let tens: Vec<f32> = (1..=10).map(|v| 10.0 * v as f32).collect();
    let p = percentile(&tens, 0.95).map_err(|e| e.to_string())?;
    ensure(p == 100.0, || format!("{{10..100}} -> {p}"))?;

    // Gate-like stream: silu of a normal, longer than the reservoir.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let normal = Normal::new(0.0f32, 1.5).unwrap();
    let stream: Vec<f32> = (0..40_000)
        .map(|_| {
            let x = normal.sample(&mut rng);
            x / (1.0 + (-x).exp())
        })
        .collect();
    let exact = percentile(&stream, 0.95).unwrap();
    let mut estimates = Vec::with_capacity(100);
    for seed in 0..100 {
        let mut r = Reservoir::new(4096);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for &v in &stream {
            r.push(v, &mut rng);
        }
        estimates.push(r.percentile(0.95).unwrap());
    }
    let lo = percentile(&estimates, 0.025).unwrap();
    let hi = percentile(&estimates, 0.975).unwrap();
    ensure(lo <= exact && exact <= hi, || format!("exact {exact} outside [{lo}, {hi}]"))?;
    Ok(format!("exact a95 {exact:.4} within reservoir band [{lo:.4}, {hi:.4}]"))
}

fn score(id: usize, aspect: Aspect, p: u8) -> ScoreRecord {
    ScoreRecord {
        question_id: format!("q{id}"),
        trait_: Trait::O,
        aspect,
        personality_score: p,
        fluency_score: 4,
        raw_personality: format!("[[{p}]]"),
        raw_fluency: "[[4]]".into(),
    }
}

fn a11() -> Outcome {
    let mut recs = Vec::new();
    for i in 0..10 {
        recs.push(score(i, Aspect::Positive, if i < 8 { 5 } else { 4 }));
        recs.push(score(100 + i, Aspect::Negative, if i < 9 { 5 } else { 4 }));
    }
    let s = aggregate(&recs).map_err(|e| e.to_string())?[&Trait::O].clone();
    ensure((s.mean - 9.7).abs() < 1e-12, || format!("mean {}", s.mean))?;

    let mut recs = Vec::new();
    for (i, p) in [4, 5, 5].into_iter().enumerate() {
        recs.push(score(i, Aspect::Positive, p));
    }
    for (i, p) in [3, 4, 5].into_iter().enumerate() {
        recs.push(score(10 + i, Aspect::Negative, p));
    }
    let s = aggregate(&recs).map_err(|e| e.to_string())?[&Trait::O].clone();
    // {4,5,5}: mean 14/3, squared deviations 4/9+1/9+1/9, so 2/9.
    // {3,4,5}: mean 4, squared deviations 1+0+1, so 2/3.
    let want = 2.0 / 9.0 + 2.0 / 3.0;
    ensure((s.variance - want).abs() < 1e-12, || format!("variance {} vs {want}", s.variance))?;

    let r = parse_rating("Rating: [[5]]").map_err(|e| e.to_string())?;
    ensure(r == 5, || format!("parsed {r}"))?;
    ensure(parse_rating("I would rate this a five.").is_err(), || "pattern-free text accepted".into())?;
    Ok(format!("9.7 and variance {want:.6}; parser ok"))
}

fn npti(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_npti"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`npti {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn a12() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let root = common::workspace_root();
    let pos = root.join("data/corpus/E_positive.jsonl");
    let neg = root.join("data/corpus/E_negative.jsonl");
    let (pos, neg) = (pos.to_str().unwrap(), neg.to_str().unwrap());

    npti(dir, &["make-model", "--out", "model.npti", "--seed", "7"])?;
    npti(dir, &["profile", "--model", "model.npti", "--corpus", pos, "--out", "pos.json"])?;
    npti(dir, &["profile", "--model", "model.npti", "--corpus", neg, "--out", "neg.json"])?;
    npti(dir, &["identify", "--pos", "pos.json", "--neg", "neg.json", "--out", "E.map.json"])?;
    let text = npti(
        dir,
        &["generate", "--model", "model.npti", "--map", "E.map.json", "--prompt", "What do you do on a free evening?", "--neutral", "--max-tokens", "24", "--manifest", "gen.manifest.json"],
    )?;

    for p in ["pos.json", "neg.json"] {
        ProfileReport::load(dir.join(p)).and_then(|r| r.validate()).map_err(|e| format!("{p}: {e}"))?;
    }
    let map = NeuronMap::load(dir.join("E.map.json")).map_err(|e| e.to_string())?;
    map.validate().map_err(|e| e.to_string())?;
    let neuron = map.entries.first().map(|e| format!("{}:{}", e.layer, e.index)).unwrap_or_else(|| "0:0".into());
    npti(
        dir,
        &["analyze", "--map", "E.map.json", "--out", "layers.csv", "--neuron", &neuron, "--model", "model.npti", "--corpus", pos, "--values-out", "values.csv"],
    )?;
    let csv = std::fs::read_to_string(dir.join("layers.csv")).map_err(|e| e.to_string())?;
    let hist = LayerHistogram::from_csv(&csv).map_err(|e| e.to_string())?;
    ensure(hist.totals().iter().sum::<usize>() == map.len(), || "layer histogram total differs from map".into())?;
    ensure(dir.join("values.csv").is_file(), || "no value histogram".into())?;
    for m in ["model.npti", "pos.json", "neg.json", "E.map.json", "layers.csv"] {
        load_manifest(&dir.join(format!("{m}.manifest.json"))).map_err(|e| format!("{m}: {e}"))?;
    }
    load_manifest(&dir.join("gen.manifest.json")).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} pos / {} neg neurons, generated {} chars",
        map.count(NeuronClass::Pos),
        map.count(NeuronClass::Neg),
        text.trim_end_matches('\n').len()
    ))
}

fn a13() -> Outcome {
    let model = common::small_model(13);
    let mut reg = MapRegistry::new();
    reg.insert(common::random_map(&model, Trait::E, 1), "E.json".into()).map_err(|e| e.to_string())?;
    reg.insert(common::random_map(&model, Trait::N, 2), "N.json".into()).map_err(|e| e.to_string())?;
    let params = GenerationParams::with_max_tokens(32);
    let base = common::spawn_server(Arc::new(AppState::new(model, reg, params, 8)));
    let url = format!("{base}/v1/generate");
    let requests = [
        serde_json::json!({
            "prompt": "How do you feel before a big party?",
            "steering": [{"trait": "E", "direction": "positive", "gamma": 2.0}],
        }),
        serde_json::json!({
            "prompt": "How do you feel before a big party?",
            "steering": [
                {"trait": "N", "direction": "negative", "gamma": 3.0},
                {"trait": "E", "direction": "negative", "gamma": 1.0}
            ],
        }),
    ];
    let run = |body: &serde_json::Value| -> Result<String, String> {
        let (status, text) = common::post_json(&url, body);
        ensure(status == 200, || format!("HTTP {status}: {text}"))?;
        let resp: GenerateResponse = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        Ok(resp.text)
    };
    let solo: Vec<String> = requests.iter().map(&run).collect::<Result<_, _>>()?;

    for round in 0..5 {
        let barrier = Barrier::new(2);
        let results: Vec<Result<String, String>> = std::thread::scope(|s| {
            let handles: Vec<_> = requests
                .iter()
                .map(|body| {
                    let (barrier, run) = (&barrier, &run);
                    s.spawn(move || {
                        barrier.wait();
                        run(body)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            let text = r?;
            ensure(text == solo[i], || format!("round {round}, request {i}: {text:?} vs solo {:?}", solo[i]))?;
        }
    }
    let distinct = if solo[0] != solo[1] { "distinct" } else { "identical" };
    Ok(format!("5 concurrent rounds match solo runs ({distinct} texts)"))
}
