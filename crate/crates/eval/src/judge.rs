//! Scoring answers for trait expression and fluency.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;
use std::thread;
use std::time::Duration;

use npti::corpus::{Aspect, Trait};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{EvalError, Result};
use crate::parse::parse_rating;
use crate::prompts::{fluency_prompt, personality_prompt};
use crate::record::ScoreRecord;

pub const ENV_BASE_URL: &str = "JUDGE_BASE_URL";
pub const ENV_API_KEY: &str = "JUDGE_API_KEY";
pub const ENV_MODEL: &str = "JUDGE_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    Remote,
    Mock,
}

#[derive(Clone, PartialEq)]
pub struct JudgeConfig {
    pub mode: JudgeMode,
    pub base_url: Option<String>,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl fmt::Debug for JudgeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JudgeConfig")
            .field("mode", &self.mode)
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff", &self.backoff)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl JudgeConfig {
    pub fn mock() -> Self {
        Self {
            mode: JudgeMode::Mock,
            base_url: None,
            model: "lexicon".into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 0,
            backoff: Duration::from_millis(0),
            max_in_flight: 4,
        }
    }

    pub fn remote(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            mode: JudgeMode::Remote,
            base_url: Some(base_url.into()),
            model: model.into(),
            api_key: Some(api_key.into()),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    /// Remote settings from `JUDGE_BASE_URL`, `JUDGE_API_KEY` and
    /// `JUDGE_MODEL`.
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let missing = |k: &str| EvalError::Config(format!("remote judge needs {k} to be set"));
        let base = lookup(ENV_BASE_URL).filter(|v| !v.is_empty()).ok_or_else(|| missing(ENV_BASE_URL))?;
        let key = lookup(ENV_API_KEY).filter(|v| !v.is_empty()).ok_or_else(|| missing(ENV_API_KEY))?;
        let model = lookup(ENV_MODEL).filter(|v| !v.is_empty()).ok_or_else(|| missing(ENV_MODEL))?;
        Ok(Self::remote(base, key, model))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(EvalError::Config("max_in_flight must be at least 1".into()));
        }
        if self.mode == JudgeMode::Remote {
            if self.base_url.as_deref().is_none_or(str::is_empty) {
                return Err(EvalError::Config("remote judge needs a base URL".into()));
            }
            if self.api_key.as_deref().is_none_or(str::is_empty) {
                return Err(EvalError::Config("remote judge needs an API key".into()));
            }
        }
        Ok(())
    }
}

/// One answer to be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeItem {
    pub question_id: String,
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub aspect: Aspect,
    pub question: String,
    pub answer: String,
}

pub enum Judge {
    Remote(RemoteJudge),
    Mock(MockJudge),
}

impl Judge {
    pub fn new(config: &JudgeConfig) -> Result<Self> {
        config.validate()?;
        Ok(match config.mode {
            JudgeMode::Mock => Judge::Mock(MockJudge::new()),
            JudgeMode::Remote => Judge::Remote(RemoteJudge::new(config.clone())),
        })
    }

    pub fn judge(&self, item: &JudgeItem) -> Result<ScoreRecord> {
        match self {
            Judge::Mock(m) => Ok(m.judge(item)),
            Judge::Remote(r) => r.judge(item),
        }
    }
}

/// Scores every item with at most `max_in_flight` requests outstanding.
/// Results come back in input order.
pub fn judge_all(judge: &Judge, items: &[JudgeItem], max_in_flight: usize) -> Result<Vec<ScoreRecord>> {
    if max_in_flight == 0 {
        return Err(EvalError::Config("max_in_flight must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight)
        .build()
        .map_err(|e| EvalError::Config(format!("cannot start judge workers: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        items.par_iter().map(|item| judge.judge(item)).collect()
    })
}

/// Chat-completions client for an external judge model.
pub struct RemoteJudge {
    config: JudgeConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(String),
    Retry(String),
}

impl RemoteJudge {
    pub fn new(config: JudgeConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        let base = self.config.base_url.as_deref().unwrap_or_default().trim_end_matches('/');
        format!("{base}/chat/completions")
    }

    fn send_once(&self, prompt: &str) -> Result<Attempt> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let key = self.config.api_key.as_deref().unwrap_or_default();
        let mut resp = match self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(&body.to_string())
        {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| EvalError::Transport(format!("reading judge response: {e}")))?;
        if status == 429 || status >= 500 {
            return Ok(Attempt::Retry(format!("judge returned HTTP {status}")));
        }
        if status >= 400 {
            return Err(EvalError::Transport(format!("judge returned HTTP {status}: {text}")));
        }
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| EvalError::Transport(format!("judge response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(|s| Attempt::Done(s.to_string()))
            .ok_or_else(|| EvalError::Transport("judge response has no choices[0].message.content".into()))
    }

    /// Sends one prompt and reads a rating, retrying transport failures and
    /// unparseable replies with exponential backoff.
    pub fn rate(&self, prompt: &str) -> Result<(u8, String)> {
        let mut delay = self.config.backoff;
        let mut last_transport = None;
        let mut last_reply = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
            match self.send_once(prompt)? {
                Attempt::Retry(msg) => last_transport = Some(msg),
                Attempt::Done(reply) => match parse_rating(&reply) {
                    Ok(k) => return Ok((k, reply)),
                    Err(_) => {
                        last_transport = None;
                        last_reply = Some(reply);
                    }
                },
            }
        }
        match (last_transport, last_reply) {
            (Some(msg), _) => Err(EvalError::Transport(format!(
                "{msg} (after {} attempts)",
                self.config.max_retries + 1
            ))),
            (None, Some(raw)) => Err(EvalError::Scoring { raw }),
            (None, None) => unreachable!("at least one attempt is made"),
        }
    }

    pub fn judge(&self, item: &JudgeItem) -> Result<ScoreRecord> {
        if item.answer.trim().is_empty() {
            return Err(EvalError::Input(format!("empty answer for question {}", item.question_id)));
        }
        let (p, raw_p) = self.rate(&personality_prompt(item.trait_, item.aspect, &item.question, &item.answer))?;
        let (f, raw_f) = self.rate(&fluency_prompt(&item.answer))?;
        Ok(ScoreRecord {
            question_id: item.question_id.clone(),
            trait_: item.trait_,
            aspect: item.aspect,
            personality_score: p,
            fluency_score: f,
            raw_personality: raw_p,
            raw_fluency: raw_f,
        })
    }
}

#[derive(Debug, Deserialize)]
struct AspectWords {
    positive: Vec<String>,
    negative: Vec<String>,
}

static LEXICON: LazyLock<BTreeMap<Trait, AspectWords>> = LazyLock::new(|| {
    serde_json::from_str(include_str!("../data/lexicon.json")).expect("bundled lexicon parses")
});

/// Offline keyword scorer. Personality is the share of words found in the
/// aspect's lexicon; fluency rewards word-like, non-repetitive text.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockJudge;

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

impl MockJudge {
    pub fn new() -> Self {
        MockJudge
    }

    pub fn lexicon(t: Trait, aspect: Aspect) -> &'static [String] {
        let entry = &LEXICON[&t];
        match aspect {
            Aspect::Positive => &entry.positive,
            Aspect::Negative => &entry.negative,
        }
    }

    pub fn personality_score(answer: &str, t: Trait, aspect: Aspect) -> u8 {
        let ws = words(answer);
        if ws.is_empty() {
            return 1;
        }
        let lex = Self::lexicon(t, aspect);
        let hits = ws.iter().filter(|w| lex.iter().any(|l| l == *w)).count();
        // 1 with no hits, +1 per 5% density, capped at 5 from 20% upward
        let steps = (hits * 20).div_ceil(ws.len()).min(4);
        1 + steps as u8
    }

    pub fn fluency_score(answer: &str) -> u8 {
        let pieces: Vec<&str> = answer.split_whitespace().collect();
        if pieces.is_empty() {
            return 1;
        }
        let wordlike = pieces
            .iter()
            .filter(|p| {
                let core = p.trim_matches(|c: char| c.is_ascii_punctuation());
                !core.is_empty() && core.len() <= 20 && core.chars().all(|c| c.is_alphabetic() || c == '\'' || c == '-')
            })
            .count();
        let ws = words(answer);
        let distinct = ws.iter().collect::<std::collections::BTreeSet<_>>().len();
        let variety = if ws.is_empty() { 0.0 } else { distinct as f64 / ws.len() as f64 };
        let quality = (wordlike as f64 / pieces.len() as f64) * variety;
        1 + (quality * 4.0).round().clamp(0.0, 4.0) as u8
    }

    pub fn judge(&self, item: &JudgeItem) -> ScoreRecord {
        let p = Self::personality_score(&item.answer, item.trait_, item.aspect);
        let f = Self::fluency_score(&item.answer);
        ScoreRecord {
            question_id: item.question_id.clone(),
            trait_: item.trait_,
            aspect: item.aspect,
            personality_score: p,
            fluency_score: f,
            raw_personality: format!("lexicon match density score. Rating: [[{p}]]"),
            raw_fluency: format!("word-likeness and variety score. Rating: [[{f}]]"),
        }
    }
}

/// Mock scoring as a free function.
pub fn mock_judge(answer: &str, t: Trait, aspect: Aspect) -> ScoreRecord {
    MockJudge.judge(&JudgeItem {
        question_id: String::new(),
        trait_: t,
        aspect,
        question: String::new(),
        answer: answer.to_string(),
    })
}
