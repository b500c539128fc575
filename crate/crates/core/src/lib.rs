//! Spatially coupled sparse superposition codes decoded by SC-VAMP.
//!
//! The crate covers code construction ([`code_spec`]), the design operators
//! ([`design`]), encoding and the channel ([`codec`]), the decoder
//! ([`decoder`]), its state evolution ([`state_evolution`]), and an
//! experiment harness ([`harness`]).

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod code_spec;
pub mod codec;
pub mod decoder;
pub mod denoisers;
pub mod design;
pub mod error;
pub mod harness;
pub mod instance;
pub mod quadrature;
pub mod spectrum;
pub mod state_evolution;

pub use error::{Error, Result};
