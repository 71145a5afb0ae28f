#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Quantum state tomography from informationally incomplete data.

pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod quantum;
pub mod sdp;
