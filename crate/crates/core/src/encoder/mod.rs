//! Cross-encoders for the context similarity and the auxiliary-data
//! similarity features.

pub mod attention;
pub mod layout;
pub mod tokenizer;
pub mod transformer;

pub use attention::AttentionPattern;
pub use layout::{aux_sequence, context_pair, mention_context, mention_window, Limits, MentionWindow};
pub use tokenizer::{Special, Tokenizer};
pub use transformer::{EncoderConfig, EncoderParams, ForwardCache, Sequence};
