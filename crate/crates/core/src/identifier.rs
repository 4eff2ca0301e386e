//! Activation differences between opposing-aspect profiles, threshold
//! classification into trait neurons, persisted neuron maps, and the
//! layer/value histograms used for analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Aspect, PromptTemplate, Trait, TraitCorpus};
use crate::decoding::GenerationParams;
use crate::error::{NptiError, Result};
use crate::model::{NeuronId, ToyModel};
use crate::profiler::{collect_gate_values, ProfileReport};

pub const MAP_SCHEMA: &str = "nptimap/1";
pub const DEFAULT_THRESHOLD: f64 = 0.10;

/// `δ = Pr⁺ − Pr⁻` per neuron.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeltaMap(pub BTreeMap<NeuronId, f64>);

impl DeltaMap {
    pub fn get(&self, id: NeuronId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, f64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }
}

pub fn delta(pr_pos: &BTreeMap<NeuronId, f64>, pr_neg: &BTreeMap<NeuronId, f64>) -> Result<DeltaMap> {
    let missing_neg: Vec<String> = pr_pos.keys().filter(|k| !pr_neg.contains_key(k)).map(|k| k.to_string()).collect();
    let missing_pos: Vec<String> = pr_neg.keys().filter(|k| !pr_pos.contains_key(k)).map(|k| k.to_string()).collect();
    if !missing_neg.is_empty() || !missing_pos.is_empty() {
        let mut msg = String::from("profiles cover different neurons;");
        if !missing_neg.is_empty() {
            let _ = write!(msg, " missing from negative: [{}]", missing_neg.join(", "));
        }
        if !missing_pos.is_empty() {
            let _ = write!(msg, " missing from positive: [{}]", missing_pos.join(", "));
        }
        return Err(NptiError::Input(msg));
    }
    Ok(DeltaMap(pr_pos.iter().map(|(&id, &p)| (id, p - pr_neg[&id])).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifierConfig {
    /// A neuron is positive when `δ > pos_threshold`.
    pub pos_threshold: f64,
    /// A neuron is negative when `δ < −neg_threshold`.
    pub neg_threshold: f64,
}

impl Default for IdentifierConfig {
    fn default() -> Self {
        Self::symmetric(DEFAULT_THRESHOLD)
    }
}

impl IdentifierConfig {
    pub fn symmetric(threshold: f64) -> Self {
        Self {
            pos_threshold: threshold,
            neg_threshold: threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("positive", self.pos_threshold), ("negative", self.neg_threshold)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(NptiError::config(format!("{name} threshold {t} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronClass {
    Pos,
    Neg,
}

impl NeuronClass {
    pub fn flipped(self) -> Self {
        match self {
            NeuronClass::Pos => NeuronClass::Neg,
            NeuronClass::Neg => NeuronClass::Pos,
        }
    }

    /// The aspect this class of neuron governs.
    pub fn aspect(self) -> Aspect {
        match self {
            NeuronClass::Pos => Aspect::Positive,
            NeuronClass::Neg => Aspect::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub pos: BTreeSet<NeuronId>,
    pub neg: BTreeSet<NeuronId>,
}

/// Strict-threshold split; `δ` equal to a threshold stays unclassified.
pub fn classify(delta_map: &DeltaMap, config: &IdentifierConfig) -> Classification {
    let mut out = Classification::default();
    for (id, d) in delta_map.iter() {
        if d > config.pos_threshold {
            out.pos.insert(id);
        } else if d < -config.neg_threshold {
            out.neg.insert(id);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronEntry {
    pub layer: usize,
    pub index: usize,
    pub delta: f64,
    pub a95: f64,
    pub class: NeuronClass,
}

impl NeuronEntry {
    pub fn id(&self) -> NeuronId {
        NeuronId::new(self.layer, self.index)
    }
}

/// Fingerprints of the inputs a map was built from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_pos: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_neg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronMap {
    pub schema: String,
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub threshold: f64,
    /// Present only when the negative threshold differs from `threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neg_threshold: Option<f64>,
    /// Layer count of the profiled model, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_layers: Option<usize>,
    pub entries: Vec<NeuronEntry>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl NeuronMap {
    pub fn empty(trait_: Trait, config: &IdentifierConfig) -> Self {
        Self {
            schema: MAP_SCHEMA.into(),
            trait_,
            threshold: config.pos_threshold,
            neg_threshold: (config.neg_threshold != config.pos_threshold).then_some(config.neg_threshold),
            n_layers: None,
            entries: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn identifier_config(&self) -> IdentifierConfig {
        IdentifierConfig {
            pos_threshold: self.threshold,
            neg_threshold: self.neg_threshold.unwrap_or(self.threshold),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, class: NeuronClass) -> usize {
        self.entries.iter().filter(|e| e.class == class).count()
    }

    pub fn class_of(&self, id: NeuronId) -> Option<NeuronClass> {
        self.entries.iter().find(|e| e.id() == id).map(|e| e.class)
    }

    /// The same neurons with classes exchanged and `δ` negated.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.class = e.class.flipped();
            e.delta = -e.delta;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != MAP_SCHEMA {
            return Err(NptiError::format(format!(
                "unsupported map schema {:?}, expected {MAP_SCHEMA}",
                self.schema
            )));
        }
        self.identifier_config()
            .validate()
            .map_err(|e| NptiError::format(e.to_string()))?;
        let cfg = self.identifier_config();
        let mut seen = BTreeSet::new();
        let mut prev: Option<NeuronId> = None;
        for e in &self.entries {
            let id = e.id();
            if !seen.insert(id) {
                return Err(NptiError::format(format!("neuron {id} listed twice")));
            }
            if prev.is_some_and(|p| p > id) {
                return Err(NptiError::format("entries are not in (layer, index) order"));
            }
            prev = Some(id);
            let ok = match e.class {
                NeuronClass::Pos => e.delta > cfg.pos_threshold,
                NeuronClass::Neg => e.delta < -cfg.neg_threshold,
            };
            if !ok || !e.delta.is_finite() || e.delta.abs() > 1.0 {
                return Err(NptiError::format(format!(
                    "neuron {id}: delta {} inconsistent with class {:?}",
                    e.delta, e.class
                )));
            }
            if !e.a95.is_finite() {
                return Err(NptiError::format(format!("neuron {id}: a95 is not finite")));
            }
            if let Some(n) = self.n_layers {
                if e.layer >= n {
                    return Err(NptiError::format(format!("neuron {id} beyond the map's {n} layers")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Keeps only classified neurons, attaching their δ and a95.
pub fn build_neuron_map(
    delta_map: &DeltaMap,
    a95: &BTreeMap<NeuronId, f32>,
    trait_: Trait,
    config: &IdentifierConfig,
    provenance: Provenance,
) -> Result<NeuronMap> {
    config.validate()?;
    let classes = classify(delta_map, config);
    let mut entries = Vec::with_capacity(classes.pos.len() + classes.neg.len());
    for (id, d) in delta_map.iter() {
        let class = if classes.pos.contains(&id) {
            NeuronClass::Pos
        } else if classes.neg.contains(&id) {
            NeuronClass::Neg
        } else {
            continue;
        };
        let a = a95
            .get(&id)
            .ok_or_else(|| NptiError::Completeness(format!("no a95 value for classified neuron {id}")))?;
        entries.push(NeuronEntry {
            layer: id.layer,
            index: id.index,
            delta: d,
            a95: *a as f64,
            class,
        });
    }
    let mut map = NeuronMap::empty(trait_, config);
    map.entries = entries;
    map.provenance = provenance;
    Ok(map)
}

/// Full identification from a positive- and a negative-aspect profile of
/// one trait. a95 comes from the union of both runs' samples.
pub fn identify(pos: &ProfileReport, neg: &ProfileReport, config: &IdentifierConfig) -> Result<NeuronMap> {
    if pos.trait_ != neg.trait_ {
        return Err(NptiError::Consistency(format!(
            "profiles are for different traits ({} vs {})",
            pos.trait_, neg.trait_
        )));
    }
    if pos.aspect != Aspect::Positive || neg.aspect != Aspect::Negative {
        return Err(NptiError::Consistency(format!(
            "expected positive and negative profiles, got {} and {}",
            pos.aspect, neg.aspect
        )));
    }
    if pos.fingerprints.model != neg.fingerprints.model {
        return Err(NptiError::Consistency("profiles come from different models".into()));
    }
    let deltas = delta(&pos.pr_map(), &neg.pr_map())?;

    let pos_res = pos.reservoirs()?;
    let neg_res = neg.reservoirs()?;
    let classes = classify(&deltas, config);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut a95 = BTreeMap::new();
    for id in classes.pos.iter().chain(&classes.neg) {
        let union = match (pos_res.get(id), neg_res.get(id)) {
            (Some(a), Some(b)) => a.merge(b, &mut rng),
            (Some(a), None) | (None, Some(a)) => a.clone(),
            (None, None) => continue,
        };
        if !union.samples().is_empty() {
            a95.insert(*id, union.percentile(0.95)?);
        }
    }

    let mut map = build_neuron_map(
        &deltas,
        &a95,
        pos.trait_,
        config,
        Provenance {
            model: Some(pos.fingerprints.model.clone()),
            corpus_pos: Some(pos.fingerprints.corpus.clone()),
            corpus_neg: Some(neg.fingerprints.corpus.clone()),
            generation: Some(pos.fingerprints.generation.clone()),
            template: Some(pos.fingerprints.template.clone()),
        },
    )?;
    map.n_layers = Some(pos.n_layers);
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerHistogram {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl LayerHistogram {
    pub fn totals(&self) -> Vec<usize> {
        self.pos.iter().zip(&self.neg).map(|(a, b)| a + b).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,pos,neg,total\n");
        for (layer, (p, n)) in self.pos.iter().zip(&self.neg).enumerate() {
            let _ = writeln!(out, "{layer},{p},{n},{}", p + n);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("layer,pos,neg,total") {
            return Err(NptiError::format("layer histogram CSV has an unexpected header"));
        }
        let mut hist = Self::default();
        for (row, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| NptiError::format(format!("row {}: bad count {s:?}", row + 1)))
            };
            if cols.len() != 4 || parse(cols[0])? != row {
                return Err(NptiError::format(format!("row {}: malformed", row + 1)));
            }
            let (p, n) = (parse(cols[1])?, parse(cols[2])?);
            if parse(cols[3])? != p + n {
                return Err(NptiError::format(format!("row {}: total mismatch", row + 1)));
            }
            hist.pos.push(p);
            hist.neg.push(n);
        }
        Ok(hist)
    }
}

/// Classified-neuron counts per layer. Uses the map's recorded layer count
/// when present, otherwise spans up to the deepest listed layer.
pub fn layer_histogram(map: &NeuronMap) -> LayerHistogram {
    let deepest = map.entries.iter().map(|e| e.layer + 1).max().unwrap_or(0);
    let n = map.n_layers.unwrap_or(0).max(deepest);
    let mut hist = LayerHistogram {
        pos: vec![0; n],
        neg: vec![0; n],
    };
    for e in &map.entries {
        match e.class {
            NeuronClass::Pos => hist.pos[e.layer] += 1,
            NeuronClass::Neg => hist.neg[e.layer] += 1,
        }
    }
    hist
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueHistogram {
    pub lo: f32,
    pub hi: f32,
    pub counts: Vec<usize>,
}

impl ValueHistogram {
    /// Equal-width bins over `[min, max]`; a degenerate range is widened by
    /// 0.5 on each side so the single value lands inside a bin.
    pub fn from_values(values: &[f32], bins: usize) -> Result<Self> {
        if bins < 1 {
            return Err(NptiError::input("histogram needs at least one bin"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NptiError::Numeric("non-finite value in histogram input".into()));
        }
        let (mut lo, mut hi) = values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if values.is_empty() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo <= f32::EPSILON * lo.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        let mut counts = vec![0; bins];
        for &v in values {
            counts[Self::bin_index(lo, hi, bins, v)] += 1;
        }
        Ok(Self { lo, hi, counts })
    }

    fn bin_index(lo: f32, hi: f32, bins: usize, v: f32) -> usize {
        let t = ((v - lo) / (hi - lo)) as f64 * bins as f64;
        (t.floor().max(0.0) as usize).min(bins - 1)
    }

    pub fn bin_of(&self, v: f32) -> usize {
        Self::bin_index(self.lo, self.hi, self.counts.len(), v)
    }

    pub fn edges(&self, bin: usize) -> (f32, f32) {
        let w = (self.hi - self.lo) / self.counts.len() as f32;
        (self.lo + w * bin as f32, self.lo + w * (bin + 1) as f32)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lo,hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let (a, b) = self.edges(i);
            let _ = writeln!(out, "{i},{a},{b},{c}");
        }
        out
    }
}

/// Histogram of one neuron's gate value over every generated token of an
/// unsteered corpus run.
pub fn value_histogram(
    model: &ToyModel,
    corpus: &TraitCorpus,
    template: &PromptTemplate,
    gen: &GenerationParams,
    neuron: NeuronId,
    bins: usize,
) -> Result<ValueHistogram> {
    if bins < 1 {
        return Err(NptiError::input("histogram needs at least one bin"));
    }
    let values = collect_gate_values(model, corpus, template, gen, neuron)?;
    ValueHistogram::from_values(&values, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<NeuronId> {
        (0..n).map(|i| NeuronId::new(i / 4, i % 4)).collect()
    }

    fn pr(values: &[f64]) -> BTreeMap<NeuronId, f64> {
        ids(values.len()).into_iter().zip(values.iter().copied()).collect()
    }

    #[test]
    fn delta_arithmetic() {
        let d = delta(&pr(&[0.62]), &pr(&[0.48])).unwrap();
        assert!((d.get(NeuronId::new(0, 0)).unwrap() - 0.14).abs() < 1e-12);
        let same = delta(&pr(&[0.3, 0.7]), &pr(&[0.3, 0.7])).unwrap();
        assert!(same.iter().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn delta_universe_mismatch_lists_ids() {
        let err = delta(&pr(&[0.1, 0.2]), &pr(&[0.1])).unwrap_err();
        assert!(err.to_string().contains("0:1"), "{err}");
    }

    #[test]
    fn classification_boundaries() {
        let cfg = IdentifierConfig::default();
        let d = DeltaMap(pr(&[0.14, 0.10, -0.11, -0.10, 0.0]));
        let c = classify(&d, &cfg);
        assert_eq!(c.pos.iter().copied().collect::<Vec<_>>(), vec![NeuronId::new(0, 0)]);
        assert_eq!(c.neg.iter().copied().collect::<Vec<_>>(), vec![NeuronId::new(0, 2)]);
    }

    #[test]
    fn asymmetric_thresholds() {
        let cfg = IdentifierConfig {
            pos_threshold: 0.2,
            neg_threshold: 0.05,
        };
        let c = classify(&DeltaMap(pr(&[0.15, -0.06])), &cfg);
        assert!(c.pos.is_empty());
        assert_eq!(c.neg.len(), 1);
    }

    #[test]
    fn threshold_validation() {
        assert!(IdentifierConfig::symmetric(0.0).validate().is_err());
        assert!(IdentifierConfig::symmetric(1.0).validate().is_err());
        assert!(IdentifierConfig::symmetric(0.5).validate().is_ok());
    }

    fn a95_all(n: usize) -> BTreeMap<NeuronId, f32> {
        ids(n).into_iter().map(|id| (id, 1.5)).collect()
    }

    #[test]
    fn map_keeps_only_classified() {
        let mut values = vec![0.0; 32];
        values[3] = 0.2;
        values[17] = -0.3;
        values[30] = 0.11;
        let m = build_neuron_map(
            &DeltaMap(pr(&values)),
            &a95_all(32),
            Trait::E,
            &IdentifierConfig::default(),
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.count(NeuronClass::Pos), 2);
        assert_eq!(m.entries[1].id(), NeuronId::new(4, 1));
        m.validate().unwrap();
        let back = NeuronMap::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn empty_map_is_valid() {
        let m = build_neuron_map(
            &DeltaMap(pr(&[0.0; 8])),
            &BTreeMap::new(),
            Trait::O,
            &IdentifierConfig::default(),
            Provenance::default(),
        )
        .unwrap();
        assert!(m.is_empty());
        m.validate().unwrap();
    }

    #[test]
    fn missing_a95_is_completeness_error() {
        let err = build_neuron_map(
            &DeltaMap(pr(&[0.5])),
            &BTreeMap::new(),
            Trait::O,
            &IdentifierConfig::default(),
            Provenance::default(),
        )
        .unwrap_err();
        assert!(matches!(err, NptiError::Completeness(_)));
    }

    #[test]
    fn map_json_field_names() {
        let m = build_neuron_map(
            &DeltaMap(pr(&[0.5])),
            &a95_all(1),
            Trait::E,
            &IdentifierConfig::default(),
            Provenance::default(),
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["schema"], "nptimap/1");
        assert_eq!(v["trait"], "E");
        assert_eq!(v["threshold"], 0.10);
        assert_eq!(v["entries"][0]["class"], "pos");
        assert_eq!(v["entries"][0]["a95"], 1.5);
    }

    #[test]
    fn validate_rejects_inconsistent_class() {
        let mut m = NeuronMap::empty(Trait::E, &IdentifierConfig::default());
        m.entries.push(NeuronEntry {
            layer: 0,
            index: 0,
            delta: 0.05,
            a95: 1.0,
            class: NeuronClass::Pos,
        });
        assert!(m.validate().is_err());
    }

    #[test]
    fn layer_histogram_counts() {
        let mut m = NeuronMap::empty(Trait::E, &IdentifierConfig::default());
        for (layer, index, class, delta) in [
            (0, 1, NeuronClass::Pos, 0.2),
            (1, 0, NeuronClass::Neg, -0.2),
            (1, 3, NeuronClass::Pos, 0.3),
        ] {
            m.entries.push(NeuronEntry {
                layer,
                index,
                delta,
                a95: 1.0,
                class,
            });
        }
        let h = layer_histogram(&m);
        assert_eq!(h.totals(), vec![1, 2]);
        assert_eq!(h.pos, vec![1, 1]);
        assert_eq!(LayerHistogram::from_csv(&h.to_csv()).unwrap(), h);

        let mut empty = NeuronMap::empty(Trait::E, &IdentifierConfig::default());
        empty.n_layers = Some(3);
        assert_eq!(layer_histogram(&empty).totals(), vec![0, 0, 0]);
    }

    #[test]
    fn value_histogram_conservation_and_zero_case() {
        let h = ValueHistogram::from_values(&[0.1, 0.5, -0.2, 2.0, 2.0], 4).unwrap();
        assert_eq!(h.total(), 5);
        assert_eq!(h.counts[3], 2);
        let z = ValueHistogram::from_values(&[0.0; 7], 5).unwrap();
        let (lo, hi) = z.edges(z.bin_of(0.0));
        assert!(lo <= 0.0 && 0.0 < hi);
        assert_eq!(z.counts[z.bin_of(0.0)], 7);
        assert!(ValueHistogram::from_values(&[1.0], 0).is_err());
        assert!(z.to_csv().starts_with("bin,lo,hi,count\n"));
    }

    proptest! {
        #[test]
        fn antisymmetric(values in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..24)) {
            let a = pr(&values.iter().map(|v| v.0).collect::<Vec<_>>());
            let b = pr(&values.iter().map(|v| v.1).collect::<Vec<_>>());
            let ab = delta(&a, &b).unwrap();
            let ba = delta(&b, &a).unwrap();
            for (id, d) in ab.iter() {
                prop_assert_eq!(d, -ba.get(id).unwrap());
                prop_assert!(d.abs() <= 1.0);
            }
        }

        #[test]
        fn classes_disjoint_and_threshold_monotone(
            values in proptest::collection::vec(-1.0f64..=1.0, 1..24),
            t1 in 0.01f64..0.9, t2 in 0.01f64..0.9,
        ) {
            let d = DeltaMap(pr(&values));
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let loose = classify(&d, &IdentifierConfig::symmetric(lo));
            let strict = classify(&d, &IdentifierConfig::symmetric(hi));
            prop_assert!(loose.pos.is_disjoint(&loose.neg));
            prop_assert!(strict.pos.is_subset(&loose.pos));
            prop_assert!(strict.neg.is_subset(&loose.neg));
        }
    }
}
