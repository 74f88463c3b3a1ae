//! Dynamic graph representation learning with structural and temporal
//! self-attention.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: dense tensors and a reverse-mode gradient tape.
//! - [`graph`]: snapshot sequences over a shared node set.
//! - [`layers`]: structural attention, causal temporal attention and the
//!   full forward pass.
//! - [`sampling`]: random-walk co-occurrence pairs and negative sampling.
//! - [`training`]: the context loss, Adam and the training loops.
//! - [`evaluation`]: dynamic link-prediction protocol and AUC reporting.

pub mod evaluation;
pub mod graph;
pub mod layers;
pub mod numeric;
pub mod sampling;
pub mod seed;
pub mod training;
