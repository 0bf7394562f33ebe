use crate::cell::Electrode;
use crate::identify::FilmState;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{electrode} electrode stoichiometry {value} is outside [0, 1]")]
    Domain { electrode: Electrode, value: f64 },

    #[error("{electrode} particle saturated: concentration {value:.3} mol/m³ outside [0, {c_max}]")]
    Saturation {
        electrode: Electrode,
        value: f64,
        c_max: f64,
    },

    #[error("{electrode} electrode kinetics singular: zero exchange current density with nonzero current")]
    KineticsSingular { electrode: Electrode },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cell dead: {0} electrode capacity driven to zero")]
    CellDead(Electrode),

    #[error("protocol step {step} stalled: no termination reached after {elapsed:.0} s")]
    ProtocolStall { step: usize, elapsed: f64 },

    #[error("invalid protocol step {step}: {reason}")]
    InvalidProtocol { step: usize, reason: String },

    #[error("eSOH estimation failed: {reason} (residual RMS {residual_rms:.3e} V)")]
    EstimationFailed { reason: String, residual_rms: f64 },

    #[error("two admissible film states satisfy the measurements: {0} and {1}")]
    AmbiguousRoots(FilmState, FilmState),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input (files, parameters, protocol
    /// definitions) as opposed to failures inside the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidProtocol { .. }
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Domain { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
