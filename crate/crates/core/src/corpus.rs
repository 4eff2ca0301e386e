//! Trait corpora (personality description + situational question instances)
//! and prompt templates.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{NptiError, Result};

pub const CORPUS_SCHEMA: &str = "nptibench/1";

/// One of the Big Five personality traits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Trait {
    O,
    C,
    E,
    A,
    N,
}

impl Trait {
    pub const ALL: [Trait; 5] = [Trait::O, Trait::C, Trait::E, Trait::A, Trait::N];

    pub fn letter(self) -> &'static str {
        match self {
            Trait::O => "O",
            Trait::C => "C",
            Trait::E => "E",
            Trait::A => "A",
            Trait::N => "N",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Trait::O => "openness",
            Trait::C => "conscientiousness",
            Trait::E => "extraversion",
            Trait::A => "agreeableness",
            Trait::N => "neuroticism",
        }
    }

    /// Single-adjective form used by the simple-prompt baseline.
    pub fn adjective(self, aspect: Aspect) -> &'static str {
        match (self, aspect) {
            (Trait::E, Aspect::Positive) => "extraverted",
            (Trait::E, Aspect::Negative) => "introverted",
            (Trait::O, Aspect::Positive) => "open",
            (Trait::O, Aspect::Negative) => "closed",
            (Trait::C, Aspect::Positive) => "conscientious",
            (Trait::C, Aspect::Negative) => "unconscientious",
            (Trait::A, Aspect::Positive) => "agreeable",
            (Trait::A, Aspect::Negative) => "disagreeable",
            (Trait::N, Aspect::Positive) => "neurotic",
            (Trait::N, Aspect::Negative) => "calm",
        }
    }

    /// The adjective with its indefinite article, e.g. "an extraverted".
    pub fn simple_description(self, aspect: Aspect) -> String {
        let adj = self.adjective(aspect);
        let article = if adj.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
        format!("{article} {adj}")
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl FromStr for Trait {
    type Err = NptiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "O" | "OPENNESS" => Ok(Trait::O),
            "C" | "CONSCIENTIOUSNESS" => Ok(Trait::C),
            "E" | "EXTRAVERSION" | "EXTROVERSION" => Ok(Trait::E),
            "A" | "AGREEABLENESS" => Ok(Trait::A),
            "N" | "NEUROTICISM" => Ok(Trait::N),
            _ => Err(NptiError::input(format!("unknown trait {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Positive,
    Negative,
}

impl Aspect {
    pub fn as_str(self) -> &'static str {
        match self {
            Aspect::Positive => "positive",
            Aspect::Negative => "negative",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Aspect::Positive => Aspect::Negative,
            Aspect::Negative => Aspect::Positive,
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aspect {
    type Err = NptiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Aspect::Positive),
            "negative" | "neg" | "-" => Ok(Aspect::Negative),
            _ => Err(NptiError::input(format!("unknown aspect {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub description: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facet: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraitCorpus {
    pub trait_: Trait,
    pub aspect: Aspect,
    pub instances: Vec<Instance>,
}

#[derive(Serialize)]
struct Header<'a> {
    schema: &'a str,
    #[serde(rename = "trait")]
    trait_: Trait,
    aspect: Aspect,
}

impl TraitCorpus {
    pub fn new(trait_: Trait, aspect: Aspect, instances: Vec<Instance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(NptiError::input("corpus has no instances"));
        }
        for (i, inst) in instances.iter().enumerate() {
            if inst.description.trim().is_empty() || inst.question.trim().is_empty() {
                return Err(NptiError::input(format!(
                    "instance {i}: description and question must be non-empty"
                )));
            }
        }
        Ok(Self {
            trait_,
            aspect,
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Normalized JSONL: header line, then one compact object per instance.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header {
            schema: CORPUS_SCHEMA,
            trait_: self.trait_,
            aspect: self.aspect,
        })
        .expect("header serializes");
        out.push('\n');
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// SHA-256 of the normalized serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<TraitCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| NptiError::input(format!("cannot read corpus {}: {e}", path.display())))?;
    parse_corpus(&text)
}

fn field_str(obj: &Map<String, Value>, key: &str, line: usize, required: bool) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) if required => {
            Err(NptiError::input(format!("line {line}: missing field {key}")))
        }
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(NptiError::input(format!("line {line}: field {key} must be a string"))),
    }
}

pub fn parse_corpus(text: &str) -> Result<TraitCorpus> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| NptiError::input("empty corpus file"))?;
    let header: Value = serde_json::from_str(header)
        .map_err(|e| NptiError::input(format!("line {hline}: malformed JSON: {e}")))?;
    let header = header
        .as_object()
        .ok_or_else(|| NptiError::input(format!("line {hline}: header must be a JSON object")))?;
    let schema = field_str(header, "schema", hline, true)?.unwrap_or_default();
    if schema != CORPUS_SCHEMA {
        return Err(NptiError::input(format!(
            "line {hline}: unsupported schema {schema:?}, expected {CORPUS_SCHEMA}"
        )));
    }
    let trait_: Trait = field_str(header, "trait", hline, true)?
        .unwrap_or_default()
        .parse()
        .map_err(|e| NptiError::input(format!("line {hline}: {e}")))?;
    let aspect: Aspect = field_str(header, "aspect", hline, true)?
        .unwrap_or_default()
        .parse()
        .map_err(|e| NptiError::input(format!("line {hline}: {e}")))?;

    let mut instances = Vec::new();
    for (line, raw) in lines {
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| NptiError::input(format!("line {line}: malformed JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| NptiError::input(format!("line {line}: instance must be a JSON object")))?;
        if obj.contains_key("schema") {
            return Err(NptiError::input(format!("line {line}: unexpected second header")));
        }
        // instances may restate their trait/aspect, but must agree with the header
        if let Some(t) = field_str(obj, "trait", line, false)? {
            let t: Trait = t.parse().map_err(|e| NptiError::input(format!("line {line}: {e}")))?;
            if t != trait_ {
                return Err(NptiError::Consistency(format!(
                    "line {line}: trait {t} differs from header trait {trait_}"
                )));
            }
        }
        if let Some(a) = field_str(obj, "aspect", line, false)? {
            let a: Aspect = a.parse().map_err(|e| NptiError::input(format!("line {line}: {e}")))?;
            if a != aspect {
                return Err(NptiError::Consistency(format!(
                    "line {line}: aspect {a} differs from header aspect {aspect}"
                )));
            }
        }
        let description = field_str(obj, "description", line, true)?.unwrap_or_default();
        let question = field_str(obj, "question", line, true)?.unwrap_or_default();
        if description.trim().is_empty() {
            return Err(NptiError::input(format!("line {line}: field description is empty")));
        }
        if question.trim().is_empty() {
            return Err(NptiError::input(format!("line {line}: field question is empty")));
        }
        instances.push(Instance {
            description,
            question,
            facet: field_str(obj, "facet", line, false)?,
            topic: field_str(obj, "topic", line, false)?,
        });
    }
    if instances.is_empty() {
        return Err(NptiError::input("corpus has a header but no instances"));
    }
    TraitCorpus::new(trait_, aspect, instances)
}

const DESCRIPTION: &str = "{description}";
const QUESTION: &str = "{question}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    name: String,
    body: String,
}

/// Description-conditioned prompt (the bench instance's description fills
/// `{description}`).
pub const P2_TEMPLATE: &str = "Imagine you are a real person rather than a language model. {description}. Now you're asked by the following question. Write your response based on your authentic thoughts and emotions.\nDo not overthink your answer\u{2014}let your thoughts flow naturally as you write. Focus on expressing your genuine feelings and reactions. Aim to write no more than 300 words.\n### Question:\n{question}\n### Response:\n";

/// Single-adjective prompt; `{description}` takes e.g. "an extraverted".
pub const SIMPLE_TEMPLATE: &str = "Imagine you are {description} person rather than a language model, and you're asked the following question. Write your response based on your authentic thoughts and emotions.\nDo not overthink your answer\u{2014}let your thoughts flow naturally as you write. Focus on expressing your genuine feelings and reactions. Aim to write no more than 300 words.\n### Question:\n{question}\n### Response:\n";

/// Compact template for fast toy runs.
pub const PLAIN_TEMPLATE: &str = "{description}\n{question}\n";

/// Question-only prompt with no personality induction; used when steering
/// alone is responsible for the trait.
pub const NEUTRAL_PROMPT: &str = "Imagine you are a real person rather than a language model, and you're asked by the following question. Write your response based on your authentic thoughts and emotions.\n\nDo not overthink your answer\u{2014}let your thoughts flow naturally as you write. Focus on expressing your genuine feelings and reactions. Aim to write no more than 300 words.\n\n### Question:\n{question}\n\n### Response:\n";

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let body = body.into();
        for ph in [DESCRIPTION, QUESTION] {
            let n = body.matches(ph).count();
            if n != 1 {
                return Err(NptiError::input(format!(
                    "template {name:?} must contain {ph} exactly once (found {n})"
                )));
            }
        }
        Ok(Self { name, body })
    }

    pub fn p2() -> Self {
        Self::new("p2", P2_TEMPLATE).expect("builtin template")
    }

    pub fn simple() -> Self {
        Self::new("simple", SIMPLE_TEMPLATE).expect("builtin template")
    }

    pub fn plain() -> Self {
        Self::new("plain", PLAIN_TEMPLATE).expect("builtin template")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "p2" => Some(Self::p2()),
            "simple" => Some(Self::simple()),
            "plain" => Some(Self::plain()),
            _ => None,
        }
    }

    /// A builtin name, or a path to a text file holding the body (the file
    /// stem becomes the template name).
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(t) = Self::builtin(spec) {
            return Ok(t);
        }
        let path = Path::new(spec);
        let body = fs::read_to_string(path)
            .map_err(|e| NptiError::input(format!("template {spec:?} is not a builtin and cannot be read: {e}")))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        Self::new(name, body)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Single-pass substitution: placeholder text inside the substituted
    /// values is left verbatim.
    pub fn render(&self, description: &str, question: &str) -> String {
        let mut out = String::with_capacity(self.body.len() + description.len() + question.len());
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find('{') {
            let tail = &rest[start..];
            let (ph_len, value) = if tail.starts_with(DESCRIPTION) {
                (DESCRIPTION.len(), description)
            } else if tail.starts_with(QUESTION) {
                (QUESTION.len(), question)
            } else {
                out.push_str(&rest[..=start]);
                rest = &rest[start + 1..];
                continue;
            };
            out.push_str(&rest[..start]);
            out.push_str(value);
            rest = &rest[start + ph_len..];
        }
        out.push_str(rest);
        out
    }

    pub fn render_instance(&self, instance: &Instance) -> String {
        self.render(&instance.description, &instance.question)
    }
}

/// The question-only prompt with no personality induction.
pub fn render_question(question: &str) -> String {
    NEUTRAL_PROMPT.replacen(QUESTION, question, 1)
}
