//! Inverse identification of plastic properties from indentation imprints.
//!
//! The crate is organised bottom-up: constitutive laws and curve fitting,
//! a bounded quasi-Newton optimiser, imprint feature extraction, a
//! multi-fidelity indentation surrogate, a small multilayer perceptron, the
//! uniqueness study and the multi-fidelity calibration pipeline.

pub mod constitutive;
pub mod numopt;
pub mod profile;
pub mod surrogate;
pub mod neural;
pub mod uniqueness;
pub mod mfnn;
