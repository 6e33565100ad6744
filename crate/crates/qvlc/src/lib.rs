//! Universal variable-length compression of quantum i.i.d. sources at desk scale.
//!
//! The crate builds the full pipeline from representation theory to code
//! evaluation, for local dimension `d` in {2, 3} and block lengths `n <= 8`:
//!
//! - [`linalg`]: dense complex Hermitian primitives — density matrices,
//!   ensembles, von Neumann entropy, fidelity and Bures distance, tensor
//!   powers, partial traces.
//! - [`schur`]: Young diagrams, symmetric-group characters, isotypic
//!   projectors on `(C^d)^{⊗n}`, and the entropy-selected rate projectors
//!   that form the universal coding subspaces.
//! - [`exponents`]: classical entropy/divergence machinery — the constrained
//!   overflow exponent `inf { D(b‖a) : H(b) >= R }`, the curvature constant
//!   `C(a)`, the grid overhead `f(n, δ)`, and the finite-`n` bound formulas.
//! - [`fixed`]: the universal fixed-length encoder/decoder at rate `R` with
//!   exact average-error evaluation and the error bound chain.
//! - [`varlen`]: rate grids, the naive partition code, the randomized
//!   ("smeared") grid code, outcome distributions, coding lengths, overflow
//!   probabilities, and the boundary-demolition probe.
//! - [`entangled`]: the same codes applied to Alice's half of shared
//!   bipartite states.
//! - [`harness`]: configuration, deterministic seeded execution, sweeps, and
//!   CSV/JSON reports; the `qvlc` binary is a thin CLI over it.
//!
//! All rates, entropies and coding lengths are in nats; the CLI offers a
//! display-only bits conversion. Everything is a pure function of immutable
//! inputs and safe to share across threads.

#![forbid(unsafe_code)]

pub mod entangled;
pub mod exponents;
pub mod fixed;
pub mod harness;
pub mod linalg;
pub mod schur;
pub mod varlen;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("trace must be 1, got {0}")]
    InvalidTrace(f64),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("dimension {0} exceeds the configured cap {1}")]
    CapExceeded(usize, usize),

    #[error("rate {0} outside [0, ln d] = [0, {1}]")]
    InvalidRate(f64, f64),

    #[error("invalid rate grid: {0}")]
    InvalidGrid(String),

    #[error("infeasible smearing parameters: {0}")]
    InfeasibleDelta(String),

    #[error("outcome ({0}, {1}) has rank 0 and occurs with probability 0")]
    ZeroRankOutcome(usize, usize),

    #[error("state leaks outside the coding subspace by {0:.3e}")]
    SupportLeakage(f64),

    #[error("purity {0} too low: input must be a pure state")]
    NotPure(f64),

    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
