//! Neural-field dataset codec and distillation toolkit.
//!
//! The crate is organised around dense grid tensors ([`grid`]), a small
//! reverse-mode autodiff engine ([`autograd`]), sine-activated coordinate
//! networks ([`field`]) together with fitting and decoding ([`codec`]),
//! matching-based dataset distillation ([`distill`]), competing
//! parameterizations under shared budget accounting ([`baselines`]), and the
//! harmonic analysis that connects coordinate networks to cosine dictionaries
//! ([`harmonic`]).

pub mod autograd;
pub mod baselines;
pub mod codec;
pub mod datagen;
pub mod distill;
pub mod error;
pub mod field;
pub mod grid;
pub mod harmonic;
pub mod stream;

pub use error::{Error, Result};
