//! Entity linking for community question answering (CQA) texts.
//!
//! A base ranker cross-encodes the mention context with each candidate
//! entity description and combines that score with the anchor-link prior.
//! An auxiliary-data module selects the texts most similar to the mention
//! context from parallel answers, topic meta-data and user meta-data, and
//! cross-encodes them with the description in a single windowed-attention
//! pass. The five features are fused by an affine layer and normalized over
//! the candidate set with a softmax.

pub mod anchors;
pub mod candidates;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod index;
pub mod params;
pub mod pipeline;
pub mod ranker;
pub mod selection;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
