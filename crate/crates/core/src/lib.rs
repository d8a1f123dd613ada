//! Recurrent generative models of discrete sequences and gap filling.
//!
//! Unidirectional and bidirectional tanh RNNs are trained with BPTT and
//! normalized SGD, then used to fill contiguous gaps with several
//! strategies: Gibbs-style resampling from the bidirectional conditional
//! (GSN), a single pass of a missing-token-aware model (NADE), Bayesian MCMC
//! on a unidirectional model, plain left-to-right completion and a unigram
//! baseline. Small exact oracles are provided for testing the samplers.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod models;
pub mod numerics;
pub mod rng;
pub mod training;

pub use corpus::{Alphabet, Burnin, Corpus, GapSpec, Minibatch, Sequence};
pub use error::{Error, Result};
pub use models::{
    load_checkpoint, save_checkpoint, BiRnnParams, Model, ModelKind, OutputFamily, Parameters,
    StepDistribution, UniRnnParams,
};
pub use numerics::{Matrix, Vector};
pub use training::{train, Regime, TrainConfig};
