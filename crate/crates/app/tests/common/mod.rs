#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use npti::corpus::Trait;
use npti::identifier::{IdentifierConfig, NeuronClass, NeuronEntry, NeuronMap};
use npti::model::{Activation, ModelConfig, ToyModel};
use npti::tokenizer::VOCAB_SIZE;
use npti_app::server::{router, AppState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn small_model(seed: u64) -> ToyModel {
    let cfg = ModelConfig {
        n_layers: 2,
        d_model: 16,
        d_ff: 32,
        n_heads: 2,
        vocab_size: VOCAB_SIZE,
        max_seq_len: 256,
        activation: Activation::Silu,
    };
    ToyModel::new_random(cfg, seed).unwrap()
}

/// A map that marks roughly a third of the neurons in each class.
pub fn random_map(model: &ToyModel, t: Trait, seed: u64) -> NeuronMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = NeuronMap::empty(t, &IdentifierConfig::default());
    map.provenance.model = Some(model.fingerprint());
    for id in model.config().neuron_ids() {
        let r: f64 = rng.random();
        let class = if r < 0.3 {
            NeuronClass::Pos
        } else if r < 0.6 {
            NeuronClass::Neg
        } else {
            continue;
        };
        let mag = rng.random_range(0.11..0.7);
        map.entries.push(NeuronEntry {
            layer: id.layer,
            index: id.index,
            delta: if class == NeuronClass::Pos { mag } else { -mag },
            a95: rng.random_range(0.2..3.0),
            class,
        });
    }
    map
}

/// Serves `state` on an ephemeral port from a background runtime and
/// returns the base URL. The server lives until the test process exits.
pub fn spawn_server(state: Arc<AppState>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(state)).await.unwrap();
        });
    });
    let addr = rx.recv_timeout(Duration::from_secs(10)).unwrap();
    format!("http://{addr}")
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into()
}

pub fn get(url: &str) -> (u16, String) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

pub fn post_json(url: &str, body: &serde_json::Value) -> (u16, String) {
    let mut resp = agent()
        .post(url)
        .header("Content-Type", "application/json")
        .send(&body.to_string())
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}
