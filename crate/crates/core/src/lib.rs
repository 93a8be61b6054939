//! Lazy sensor-to-controller transmission for linear cascades.
//!
//! The crate designs synchronous and asynchronous transmission policies from
//! Lyapunov certificates, simulates the resulting hybrid closed loop and
//! audits recorded solutions.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod batch;
pub mod hybridsim;
pub mod matlib;
pub mod policy;
pub mod system;
