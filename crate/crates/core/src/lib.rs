//! Hamiltonian learning for multi-dimensional time series.
//!
//! A discretised series is summarised by its k-step transition matrices. The
//! crate learns a parameterised unitary `V(α, t) = W(θ) D(γ, t) W(θ)†` on a
//! register holding one subspace per series dimension plus an environment, such
//! that evolving a basis state for time `k` and tracing out everything but one
//! dimension reproduces those transition matrices. The learned model is then
//! used as a generative sampler and analysed (trace-distance non-Markovianity,
//! CPTP and unistochasticity certificates).

pub mod ansatz;
pub mod cli;
pub mod config;
pub mod error;
pub mod generator;
pub mod json;
pub mod learner;
pub mod nonmarkov;
pub mod optim;
pub mod qcore;
pub mod rng;
pub mod timeseries;
pub mod verify;

pub use error::{Error, Result};
