//! Greedy decoding with a repetition penalty.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NptiError, Result};
use crate::model::{GateOverlay, TokenId, ToyModel};
use crate::tokenizer::EOS;

pub const DEFAULT_REPETITION_PENALTY: f32 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: usize,
    pub repetition_penalty: f32,
    /// Generation ends after this token is produced.
    pub stop: TokenId,
    #[serde(default)]
    pub strategy: Strategy,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 32,
            repetition_penalty: DEFAULT_REPETITION_PENALTY,
            stop: EOS,
            strategy: Strategy::Greedy,
        }
    }
}

impl GenerationParams {
    pub fn with_max_tokens(max_tokens: usize) -> Self {
        Self {
            max_tokens,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_tokens < 1 {
            return Err(NptiError::config("max_tokens must be >= 1"));
        }
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return Err(NptiError::config("repetition_penalty must be a finite value >= 1"));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("params serialize")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Eos,
    MaxTokens,
    /// The context reached `max_seq_len` before either of the above.
    ContextFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Generated tokens only (the prompt is not repeated).
    pub tokens: Vec<TokenId>,
    /// Post-penalty logit of each chosen token.
    pub chosen_logits: Vec<f32>,
    pub stop_reason: StopReason,
}

impl Generation {
    pub fn truncated(&self) -> bool {
        self.stop_reason == StopReason::ContextFull
    }
}

/// Divides positive logits and multiplies non-positive logits of every
/// token in `context` by `penalty`. Each distinct token is penalized once.
pub fn apply_repetition_penalty(logits: &mut [f32], context: &[TokenId], penalty: f32) {
    if penalty == 1.0 {
        return;
    }
    let mut seen = vec![false; logits.len()];
    for &t in context {
        let t = t as usize;
        if t < logits.len() && !seen[t] {
            seen[t] = true;
            let v = &mut logits[t];
            *v = if *v > 0.0 { *v / penalty } else { *v * penalty };
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_decode(
    model: &ToyModel,
    prompt: &[TokenId],
    params: &GenerationParams,
    overlay: Option<&dyn GateOverlay>,
) -> Result<Generation> {
    greedy_decode_streaming(model, prompt, params, overlay, &mut |_| {})
}

/// Same as [`greedy_decode`], calling `on_token` as each token is chosen.
pub fn greedy_decode_streaming(
    model: &ToyModel,
    prompt: &[TokenId],
    params: &GenerationParams,
    overlay: Option<&dyn GateOverlay>,
    on_token: &mut dyn FnMut(TokenId),
) -> Result<Generation> {
    params.validate()?;
    if prompt.is_empty() {
        return Err(NptiError::input("prompt is empty"));
    }
    let max_len = model.config().max_seq_len;
    if prompt.len() > max_len {
        return Err(NptiError::input(format!(
            "prompt length {} exceeds max_seq_len {max_len}",
            prompt.len()
        )));
    }

    let mut session = model.session(overlay);
    let mut logits = Vec::new();
    for &t in prompt {
        logits = session.step(t)?;
    }

    let mut context: Vec<TokenId> = prompt.to_vec();
    let mut tokens = Vec::new();
    let mut chosen_logits = Vec::new();
    let mut stop_reason = StopReason::MaxTokens;
    for step in 0..params.max_tokens {
        apply_repetition_penalty(&mut logits, &context, params.repetition_penalty);
        let next = argmax(&logits) as TokenId;
        chosen_logits.push(logits[next as usize]);
        tokens.push(next);
        context.push(next);
        on_token(next);
        if next == params.stop {
            stop_reason = StopReason::Eos;
            break;
        }
        if step + 1 == params.max_tokens {
            break;
        }
        if session.is_full() {
            stop_reason = StopReason::ContextFull;
            break;
        }
        logits = session.step(next)?;
    }
    Ok(Generation {
        tokens,
        chosen_logits,
        stop_reason,
    })
}
