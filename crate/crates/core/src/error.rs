use thiserror::Error;

/// Errors produced by the simulation, sizing and generation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The device does not conduct at the requested gate drive.
    #[error("no conduction: |vgs| = {vgs} V does not exceed |vth| = {vth} V")]
    NoConduction { vgs: f64, vth: f64 },

    /// The nonlinear solver did not reach the residual tolerance.
    #[error("no convergence at code {code} after {iterations} iterations (best residual {residual:e} A)")]
    NoConvergence {
        code: u32,
        iterations: usize,
        residual: f64,
    },

    /// The caller violated a precondition of the operation.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Parameter extraction could not find what it needs in the curve.
    #[error("extraction failed: {0}")]
    Extraction(String),

    /// A resistor sizing request has no solution.
    #[error("sizing infeasible ({constraint}): {detail}")]
    Infeasible {
        constraint: &'static str,
        detail: String,
    },

    /// The transfer curve spans zero volts, so no LSB can be defined.
    #[error("zero output span: vdac(d_max) == vdac(0)")]
    ZeroSpan,

    /// HDL generation rejected the specification.
    #[error("hdl generation: {0}")]
    Hdl(String),

    /// A solver failure raised while replaying a transient event.
    #[error("at t = {time:e} s: {source}")]
    Transient { time: f64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
