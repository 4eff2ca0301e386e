//! Per-trait summaries: the positive-aspect and negative-aspect results are
//! added together, so a trait mean lies in [2, 10].

use std::collections::BTreeMap;

use npti::corpus::{Aspect, Trait};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::record::ScoreRecord;

/// Mean and population variance of a score list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

impl AspectStats {
    /// Computed from integer sums so the result does not depend on the
    /// order of the scores.
    pub fn from_scores(scores: &[u8]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let n = scores.len() as u64;
        let s: u64 = scores.iter().map(|&v| v as u64).sum();
        let s2: u64 = scores.iter().map(|&v| (v as u64) * (v as u64)).sum();
        let mean = s as f64 / n as f64;
        let variance = (n * s2 - s * s) as f64 / (n * n) as f64;
        Some(Self {
            n: scores.len(),
            mean,
            variance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitSummary {
    pub mean: f64,
    pub variance: f64,
    pub fluency_mean: f64,
    pub fluency_variance: f64,
    pub positive: AspectStats,
    pub negative: AspectStats,
}

/// Groups records by trait. Every trait present must have records for both
/// aspects.
pub fn aggregate(records: &[ScoreRecord]) -> Result<BTreeMap<Trait, TraitSummary>> {
    let mut by: BTreeMap<(Trait, Aspect), (Vec<u8>, Vec<u8>)> = BTreeMap::new();
    for r in records {
        r.validate()?;
        let e = by.entry((r.trait_, r.aspect)).or_default();
        e.0.push(r.personality_score);
        e.1.push(r.fluency_score);
    }
    let traits: Vec<Trait> = by.keys().map(|(t, _)| *t).collect();
    let mut out = BTreeMap::new();
    for t in traits {
        if out.contains_key(&t) {
            continue;
        }
        let side = |a: Aspect| {
            by.get(&(t, a))
                .ok_or_else(|| EvalError::Completeness(format!("trait {t} has no {a}-aspect records")))
        };
        let (pos_p, pos_f) = side(Aspect::Positive)?;
        let (neg_p, neg_f) = side(Aspect::Negative)?;
        let positive = AspectStats::from_scores(pos_p).expect("non-empty group");
        let negative = AspectStats::from_scores(neg_p).expect("non-empty group");
        let fp = AspectStats::from_scores(pos_f).expect("non-empty group");
        let fneg = AspectStats::from_scores(neg_f).expect("non-empty group");
        out.insert(
            t,
            TraitSummary {
                mean: positive.mean + negative.mean,
                variance: positive.variance + negative.variance,
                fluency_mean: fp.mean + fneg.mean,
                fluency_variance: fp.variance + fneg.variance,
                positive,
                negative,
            },
        );
    }
    Ok(out)
}
