//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("field gradient matrix violates {what}: magnitude {value:.3e} exceeds tolerance {tolerance:.1e}")]
    InvalidGradient {
        what: &'static str,
        value: f64,
        tolerance: f64,
    },

    #[error("gauge function matrix must be symmetric: asymmetry {0:.3e}")]
    AsymmetricGauge(f64),

    #[error("{operation} requires a uniform field model")]
    RequiresUniformField { operation: &'static str },

    #[error("{operation} requires a linear field model")]
    RequiresLinearField { operation: &'static str },

    #[error("singular configuration: coincident charges with softening disabled")]
    SingularConfiguration,

    #[error("singular configuration at t = {time}: charge separation {separation:.3e} with softening disabled")]
    Singularity { time: f64, separation: f64 },

    #[error("non-finite state encountered at t = {time} (likely a close encounter; enable softening)")]
    NonFiniteState { time: f64 },

    #[error("adaptive step underflow at t = {time}: step {step:.3e} below minimum {minimum:.3e}")]
    StepUnderflow { time: f64, step: f64, minimum: f64 },

    #[error("invalid integrator spec: {0}")]
    InvalidIntegratorSpec(String),

    #[error("invalid ensemble spec: {0}")]
    InvalidEnsembleSpec(String),

    #[error(
        "ensemble run invalid: {failed} of {total} atoms failed (> {limit:.1}% failure budget)"
    )]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: f64,
    },

    #[error("positronium scenario requires equal masses, got m_p = {m_p}, m_e = {m_e}")]
    UnequalMasses { m_p: f64, m_e: f64 },

    #[error("observation point inside validity region: |x - R| = {distance:.3e} <= {factor} * |r| = {bound:.3e}")]
    ValidityRegion {
        distance: f64,
        bound: f64,
        factor: f64,
    },

    #[error("time {time} outside the interior of the trajectory [{start}, {end}]")]
    TimeOutOfRange { time: f64, start: f64, end: f64 },

    #[error("trajectory covers {covered:.3} internal periods; need at least {needed}")]
    InsufficientPeriods { covered: f64, needed: f64 },

    #[error("time averaging requires the atom at rest: max |Rdot| = {max_com_speed:.3e} vs internal speed scale {internal_speed:.3e}")]
    ComNotAtRest {
        max_com_speed: f64,
        internal_speed: f64,
    },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
