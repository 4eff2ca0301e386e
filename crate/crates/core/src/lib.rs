//! Trait-neuron profiling, identification and steering for small GLU
//! transformers.
//!
//! The pipeline is: profile per-neuron activation probabilities on two
//! contrasting corpora ([`profiler`]), classify neurons by the difference
//! ([`identifier`]), then shift gate activations at inference time
//! ([`steering`]) while decoding greedily ([`decoding`]).

pub mod corpus;
pub mod decoding;
pub mod error;
pub mod identifier;
pub mod model;
pub mod profiler;
pub mod steering;
pub mod tensor;
pub mod tokenizer;
pub mod weights;

pub use corpus::{Aspect, Instance, PromptTemplate, Trait, TraitCorpus};
pub use decoding::{greedy_decode, Generation, GenerationParams, StopReason};
pub use error::{NptiError, Result};
pub use identifier::{identify, IdentifierConfig, NeuronClass, NeuronMap};
pub use model::{GateOverlay, LayerObservation, ModelConfig, NeuronId, Observer, TokenId, ToyModel};
pub use profiler::{profile_report, ActivationStats, ProfileOptions, ProfileReport};
pub use steering::{BoundSteering, Direction, SteeringItem, SteeringSpec, WeightFnParams};
