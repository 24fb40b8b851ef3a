// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("layouts do not match")]
    LayoutMismatch,
    #[error("partial trace needs at least one kept subsystem")]
    EmptyKeepSet,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("time grid too short: normalization deficit {0:e} exceeds 1e-6")]
    GridTooShort(f64),
    #[error("waveforms live on different time grids")]
    GridMismatch,
    #[error("regime violation: kappa*tau = {0} < 1")]
    RegimeViolation(f64),
    #[error("integration unstable at t = {0:e}")]
    IntegrationUnstable(f64),
    #[error("trace drift {drift:e} persists after {halvings} step halvings")]
    StepInstability { drift: f64, halvings: u32 },
    #[error("time {0:e} outside the gate window")]
    TimeOutOfWindow(f64),
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("negative branch probability {0:e}")]
    NegativeProbability(f64),
    #[error("success probability is zero")]
    ZeroSuccessProbability,
    #[error("{name} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("wrong photon register kind: {0}")]
    WrongRegister(&'static str),
    #[error("|C| = {0} exceeds 1")]
    CoherenceTooLarge(f64),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("power-law fit needs positive data, got ({0}, {1})")]
    NonPositiveData(f64, f64),
    #[error("no interior minimum in bracket (argmin at grid index {0})")]
    NoInteriorMinimum(usize),

    #[error("spectral density: {0}")]
    SpectralDensity(String),
    #[error("extrapolation of tabulated J at omega = {0:e} is not allowed")]
    Extrapolation(f64),
    #[error("photon spectrum not normalized (integral {0})")]
    SpectrumNotNormalized(f64),
    #[error("quadrature failed to converge (error estimate {0:e})")]
    Quadrature(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationUnstable(_)
                | Error::StepInstability { .. }
                | Error::NegativeProbability(_)
                | Error::ZeroSuccessProbability
                | Error::NoInteriorMinimum(_)
                | Error::Quadrature(_)
                | Error::NotHermitian(_)
        )
    }
}
