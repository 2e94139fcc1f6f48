//! Dense complex linear algebra and quantum-state primitives, sized for
//! registers of at most [`MAX_QUBITS`] qubits.

mod eig;
mod layout;
mod matrix;
mod state;

pub use eig::{eigh, eigvalsh, expm_i_hermitian, recompose, HermitianEigen};
pub use layout::{SubspaceLayout, MAX_QUBITS};
pub use matrix::{gates, kron, matrix_power, ComplexMatrix, C64, ONE, ZERO};
pub use state::{
    partial_trace, partial_trace_range, project_prob, random_density, random_unitary,
    trace_distance, DensityMatrix, StateVector,
};
