use std::sync::LazyLock;

use regex::Regex;

use crate::error::{EvalError, Result};

static RATING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\[([1-5])\]\]").expect("valid regex"));

/// Reads the last `[[k]]` with `k` in 1..=5. Anything else, including
/// `[[0]]`, `[[6]]` or `[[4.5]]`, is not a rating.
pub fn parse_rating(reply: &str) -> Result<u8> {
    RATING
        .captures_iter(reply)
        .last()
        .map(|c| c[1].parse::<u8>().expect("single digit"))
        .ok_or_else(|| EvalError::Scoring { raw: reply.to_string() })
}
