//! Error types shared by all simulator layers.

use alloc::string::String;

/// Errors produced by the simulator.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (dimension mismatch, value out of
    /// range, malformed input).
    #[error("domain error: {0}")]
    Domain(String),
    /// A register would exceed the amplitude budget.
    #[error("resource error: register needs {required} amplitudes, budget is {budget}")]
    Resource { required: u128, budget: usize },
    /// A caller drove the protocol state machine out of order or violated
    /// particle ownership. Indicates a bug in the driving code, not an attack.
    #[error("protocol logic error: {0}")]
    ProtocolLogic(String),
    /// Numerical state corruption detected mid-run (e.g. a near-zero-norm
    /// measurement branch was selected).
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;
