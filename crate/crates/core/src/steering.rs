//! Inference-time manipulation of trait neurons.
//!
//! For a positive shift of trait `t`, neurons governing the positive aspect
//! get `value + γ·a95·f(δ)` and neurons governing the negative aspect get
//! `min(0, value)`; everything else passes through. A negative shift swaps
//! the two roles. The overlay acts on gate activations at forward time, so
//! model weights are never touched.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Aspect, Trait};
use crate::error::{NptiError, Result};
use crate::identifier::{NeuronClass, NeuronMap};
use crate::model::{GateOverlay, ModelConfig};

pub const DEFAULT_GAMMA: f64 = 1.4;

/// Sigmoid weighting `f(δ) = 1 / (1 + exp(−slope·(|δ| − midpoint)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFnParams {
    pub slope: f64,
    pub midpoint: f64,
}

impl Default for WeightFnParams {
    fn default() -> Self {
        Self {
            slope: 10.0,
            midpoint: 0.15,
        }
    }
}

impl WeightFnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(NptiError::config(format!("weight slope {} must be > 0", self.slope)));
        }
        if !(self.midpoint > 0.0 && self.midpoint < 1.0) {
            return Err(NptiError::config(format!(
                "weight midpoint {} must lie in (0, 1)",
                self.midpoint
            )));
        }
        Ok(())
    }
}

pub fn weight_fn(delta: f64, params: &WeightFnParams) -> f64 {
    1.0 / (1.0 + (-params.slope * (delta.abs() - params.midpoint)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Positive => Direction::Negative,
            Direction::Negative => Direction::Positive,
        }
    }

    /// Which neuron class gets boosted under this direction.
    pub fn boosted_class(self) -> NeuronClass {
        match self {
            Direction::Positive => NeuronClass::Pos,
            Direction::Negative => NeuronClass::Neg,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }
}

impl From<Aspect> for Direction {
    fn from(a: Aspect) -> Self {
        match a {
            Aspect::Positive => Direction::Positive,
            Aspect::Negative => Direction::Negative,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = NptiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Direction::Positive),
            "negative" | "neg" | "-" => Ok(Direction::Negative),
            _ => Err(NptiError::input(format!("unknown direction {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringItem {
    pub map: Arc<NeuronMap>,
    pub direction: Direction,
    pub gamma: f64,
}

impl SteeringItem {
    pub fn new(map: impl Into<Arc<NeuronMap>>, direction: Direction, gamma: f64) -> Self {
        Self {
            map: map.into(),
            direction,
            gamma,
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            map: Arc::clone(&self.map),
            direction: self.direction.reversed(),
            gamma: self.gamma,
        }
    }

    /// `(boosted, deactivated)` neuron counts under this item's direction.
    pub fn active_counts(&self) -> ActiveCounts {
        let boosted_class = self.direction.boosted_class();
        ActiveCounts {
            boosted: self.map.count(boosted_class),
            deactivated: self.map.count(boosted_class.flipped()),
        }
    }
}

pub fn reverse(item: &SteeringItem) -> SteeringItem {
    item.reversed()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActiveCounts {
    pub boosted: usize,
    pub deactivated: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SteeringSpec {
    pub items: Vec<SteeringItem>,
    pub weight_fn: WeightFnParams,
}

impl SteeringSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(map: impl Into<Arc<NeuronMap>>, direction: Direction, gamma: f64) -> Self {
        Self {
            items: vec![SteeringItem::new(map, direction, gamma)],
            weight_fn: WeightFnParams::default(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.weight_fn.validate()?;
        for (i, item) in self.items.iter().enumerate() {
            if !(item.gamma >= 0.0 && item.gamma.is_finite()) {
                return Err(NptiError::config(format!(
                    "item {i}: gamma {} must be finite and >= 0",
                    item.gamma
                )));
            }
        }
        Ok(())
    }

    /// Resolves the spec against a model's shape into per-layer boost and
    /// clamp lists. Out-of-range neurons are reported here, once.
    pub fn bind(&self, config: &ModelConfig) -> Result<BoundSteering> {
        self.validate()?;
        let mut boosts = vec![Vec::new(); config.n_layers];
        let mut clamps = vec![Vec::new(); config.n_layers];
        for (i, item) in self.items.iter().enumerate() {
            let boosted_class = item.direction.boosted_class();
            for e in &item.map.entries {
                let id = e.id();
                if !config.contains(id) {
                    return Err(NptiError::Mismatch(format!(
                        "item {i} ({} map) references neuron {id}, model has {} layers x {} neurons",
                        item.map.trait_, config.n_layers, config.d_ff
                    )));
                }
                if e.class == boosted_class {
                    let amount = item.gamma * e.a95 * weight_fn(e.delta, &self.weight_fn);
                    boosts[id.layer].push((id.index, amount as f32));
                } else {
                    clamps[id.layer].push(id.index);
                }
            }
        }
        for c in &mut clamps {
            c.sort_unstable();
            c.dedup();
        }
        Ok(BoundSteering {
            d_ff: config.d_ff,
            boosts,
            clamps,
        })
    }
}

/// A spec resolved for one model shape; applied per layer during forward.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSteering {
    d_ff: usize,
    boosts: Vec<Vec<(usize, f32)>>,
    clamps: Vec<Vec<usize>>,
}

impl BoundSteering {
    pub fn identity(config: &ModelConfig) -> Self {
        Self {
            d_ff: config.d_ff,
            boosts: vec![Vec::new(); config.n_layers],
            clamps: vec![Vec::new(); config.n_layers],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.boosts.iter().all(Vec::is_empty) && self.clamps.iter().all(Vec::is_empty)
    }

    /// Boosts in item order, then clamps; a neuron both boosted and clamped
    /// ends up clamped.
    pub fn apply_in_place(&self, layer: usize, gate: &mut [f32]) {
        debug_assert_eq!(gate.len(), self.d_ff);
        if let Some(boosts) = self.boosts.get(layer) {
            for &(i, amount) in boosts {
                gate[i] += amount;
            }
        }
        if let Some(clamps) = self.clamps.get(layer) {
            for &i in clamps {
                gate[i] = gate[i].min(0.0);
            }
        }
    }
}

impl GateOverlay for BoundSteering {
    fn apply(&self, layer: usize, gate: &mut [f32]) {
        self.apply_in_place(layer, gate);
    }
}

/// Pure form of the overlay for one layer's gate vector.
pub fn apply_steering(gate: &[f32], layer: usize, steering: &BoundSteering) -> Vec<f32> {
    let mut out = gate.to_vec();
    steering.apply_in_place(layer, &mut out);
    out
}

/// Per-trait target scores on the 1–5 questionnaire scale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlignmentTarget(pub BTreeMap<Trait, f64>);

impl AlignmentTarget {
    pub fn validate(&self) -> Result<()> {
        for (t, s) in &self.0 {
            if !(1.0..=5.0).contains(s) {
                return Err(NptiError::input(format!("target score {s} for {t} is outside [1, 5]")));
            }
        }
        Ok(())
    }
}

/// Maps target scores to steering: scores at or above the scale midpoint
/// steer positively, below it negatively, with `γ` growing linearly in the
/// distance from 3 (`γ = gamma_base` at the scale ends).
pub fn alignment_spec(
    maps: &BTreeMap<Trait, Arc<NeuronMap>>,
    target: &AlignmentTarget,
    gamma_base: f64,
) -> Result<SteeringSpec> {
    target.validate()?;
    if !(gamma_base >= 0.0 && gamma_base.is_finite()) {
        return Err(NptiError::config(format!("gamma base {gamma_base} must be finite and >= 0")));
    }
    let mut items = Vec::with_capacity(target.0.len());
    for (&t, &score) in &target.0 {
        let map = maps
            .get(&t)
            .ok_or_else(|| NptiError::Completeness(format!("no neuron map for trait {t}")))?;
        let direction = if score >= 3.0 { Direction::Positive } else { Direction::Negative };
        items.push(SteeringItem::new(Arc::clone(map), direction, gamma_base * (score - 3.0).abs() / 2.0));
    }
    Ok(SteeringSpec {
        items,
        weight_fn: WeightFnParams::default(),
    })
}

/// JSON form of one spec item; `map_ref` names a loaded map (by trait).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecItemFile {
    pub map_ref: String,
    pub direction: Direction,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SpecFile {
    pub items: Vec<SpecItemFile>,
    #[serde(default)]
    pub weight_fn: WeightFnParams,
}

impl SpecFile {
    pub fn from_spec(spec: &SteeringSpec) -> Self {
        Self {
            items: spec
                .items
                .iter()
                .map(|i| SpecItemFile {
                    map_ref: i.map.trait_.letter().to_string(),
                    direction: i.direction,
                    gamma: i.gamma,
                })
                .collect(),
            weight_fn: spec.weight_fn,
        }
    }

    /// Resolves map references through `lookup`.
    pub fn resolve(&self, lookup: impl Fn(&str) -> Option<Arc<NeuronMap>>) -> Result<SteeringSpec> {
        let items = self
            .items
            .iter()
            .map(|i| {
                let map = lookup(&i.map_ref)
                    .ok_or_else(|| NptiError::input(format!("unknown map reference {:?}", i.map_ref)))?;
                Ok(SteeringItem::new(map, i.direction, i.gamma))
            })
            .collect::<Result<_>>()?;
        let spec = SteeringSpec {
            items,
            weight_fn: self.weight_fn,
        };
        spec.validate()?;
        Ok(spec)
    }
}
