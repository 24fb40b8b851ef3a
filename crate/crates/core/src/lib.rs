// SPDX-License-Identifier: Apache-2.0
//! Simulation of photon-mediated CZ gates between qudits coupled through
//! cascaded cavities, using time-bin photonic qubits.

// `!(x > 0.0)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fidelity;
pub mod lindblad;
pub mod protocol;
pub mod quadrature;
pub mod scaling;
pub mod pulse;
pub mod tensor;
pub mod tls;

pub use error::{Error, Result};
