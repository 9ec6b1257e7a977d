//! Simulation and optimization of bang-bang (BB) and adiabatic-preparation (AP)
//! quantum circuits on the infinite square lattice, using an iPEPS with
//! neighborhood tensor update (NTU) truncation. Expectation values come from a
//! tangent-space boundary-MPS contraction of the double-layer network.
//!
//! Module map:
//! - [`tensor`]: dense complex tensor algebra (contraction, SVD, QR, polar,
//!   dominant eigenpairs),
//! - [`ipeps`]: the two-sublattice checkerboard state and exact gate absorption,
//! - [`ntu`]: bond truncation in the neighborhood metric, error accounting,
//! - [`boundary`]: boundary-MPS power method with tangent-space compression,
//! - [`observables`]: fixed-point sandwiches for energies and correlators,
//! - [`sequences`]: AP/BB gate-angle sequences for both protocol variants,
//! - [`optimize`]: Δt scans, Nelder-Mead, pattern search, BB pipelines,
//! - [`oracle`]: exact causal-cone statevector cross-checks,
//! - [`container`]: on-disk tensor container format,
//! - [`config`]: run configuration shared with the CLI.

pub mod boundary;
pub mod config;
pub mod container;
pub mod ipeps;
pub mod ntu;
pub mod observables;
pub mod optimize;
pub mod oracle;
pub mod sequences;
pub mod tensor;

pub use tensor::{Tensor, C64};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contraction axis pair ({ax1}, {ax2}): extents {ext1} != {ext2}")]
    AxisMismatch {
        ax1: usize,
        ax2: usize,
        ext1: usize,
        ext2: usize,
    },
    #[error("invalid axis specification: {0}")]
    BadAxes(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite entries in tensor")]
    NonFinite,
    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdFailed { rows: usize, cols: usize },
    #[error("linear algebra backend error: {0}")]
    Lapack(String),
    #[error("eigen iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    EigenStalled { iters: usize, residual: f64 },
    #[error("non-unitary one-site gate (deviation {0:.3e})")]
    NonUnitary(f64),
    #[error("memory estimate {estimate} bytes exceeds budget {budget} bytes")]
    MemoryBudget { estimate: usize, budget: usize },
    #[error("cone of {sites} sites exceeds the {cap}-qubit cap (N={depth})")]
    ConeTooLarge {
        sites: usize,
        cap: usize,
        depth: usize,
    },
    #[error("boundary did not converge: {0}")]
    BoundaryStalled(String),
    #[error("degenerate norm network (|<I>| = {0:.3e})")]
    DegenerateNorm(f64),
    #[error("invalid sequence: {0}")]
    Sequence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported format version {found} (supported major {major})")]
    FormatVersion { found: String, major: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
