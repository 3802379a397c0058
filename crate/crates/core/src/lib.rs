//! Simulation and training of quantum neuron Born machines (QNBMs).
//!
//! A QNBM is a layered network of qubits in which every non-input neuron is
//! driven by a repeat-until-success quantum neuron. This crate provides:
//!
//! - [`statevector`]: the dense simulation substrate,
//! - [`neuron`]: the RUS neuron map, exact post-selection and stochastic RUS,
//! - [`network`]: model assembly and exact / shot-based forward passes,
//! - [`linearized`]: the rotation-only variant and its equivalent Bayesian
//!   network,
//! - [`distributions`]: benchmark target distributions,
//! - [`training`]: KL loss, finite-difference gradient descent and multi-seed
//!   trials,
//! - [`cli`]: the `qnbm` experiment runner.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod linearized;
pub mod network;
pub mod neuron;
pub mod rng;
pub mod statevector;
pub mod training;

pub use distributions::{Counts, DiscreteDistribution};
pub use error::{Error, Result};
pub use network::{NetworkTopology, Parameters};
pub use statevector::{QubitSet, StateVector};
