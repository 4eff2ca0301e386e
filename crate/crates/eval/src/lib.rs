//! Scoring generated answers with an LLM judge (or an offline lexicon
//! stand-in) and summarizing the scores per trait.

pub mod aggregate;
pub mod error;
pub mod judge;
pub mod parse;
pub mod prompts;
pub mod record;

pub use aggregate::{aggregate, AspectStats, TraitSummary};
pub use error::{EvalError, Result};
pub use judge::{judge_all, mock_judge, Judge, JudgeConfig, JudgeItem, JudgeMode, MockJudge, RemoteJudge};
pub use parse::parse_rating;
pub use record::{read_records, write_records, ScoreRecord};
