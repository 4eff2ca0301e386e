use std::fs;
use std::io::Write;
use std::path::Path;

use npti::corpus::{Aspect, Trait};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub question_id: String,
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub aspect: Aspect,
    pub personality_score: u8,
    pub fluency_score: u8,
    pub raw_personality: String,
    pub raw_fluency: String,
}

impl ScoreRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("personality_score", self.personality_score), ("fluency_score", self.fluency_score)] {
            if !(1..=5).contains(&v) {
                return Err(EvalError::Input(format!(
                    "question {}: {name} {v} is outside 1..=5",
                    self.question_id
                )));
            }
        }
        Ok(())
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ScoreRecord = serde_json::from_str(line)
            .map_err(|e| EvalError::Input(format!("line {}: {e}", i + 1)))?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}
