//! Battery degradation-state ("deepSOH") modelling.
//!
//! The crate couples a single-particle electrochemical cell model with
//! SEI growth, lithium plating and fatigue-driven loss of active material,
//! and exposes the three output models used to observe the degradation
//! state: electrode-specific SOH (eSOH) from a pseudo-OCV curve,
//! instantaneous resistance, and irreversible expansion.
//!
//! On top of the forward model sit the identification routines: inverting
//! `[C_p, C_n, LLI, R_s]` yields a one-parameter family of film states,
//! while adding the irreversible-expansion reading pins the state down
//! (or proves the measurement vector infeasible). Remaining useful life is
//! predicted by forward-simulating an identified state through a cycling
//! campaign.
//!
//! Sign convention: discharge current is positive throughout.

pub mod cell;
pub mod config;
pub mod degradation;
pub mod error;
pub mod identify;
pub mod io;
pub mod measurement;
pub mod model;
pub mod protocol;
pub mod rootfind;

pub use cell::{CellParameters, Electrode, ElectrodeParameters, OcpTable, ParticleProfile, ParticleState};
pub use degradation::{DeepSOH, DegradationParameters, LamParameters, PlatingParameters, SeiParameters};
pub use error::{Error, Result};
pub use identify::{IdentificationResult, InversionOptions, MeasurementVector};
pub use measurement::{ESOHRecord, ExpansionParameters, VoltageCurve};
pub use model::{CellState, Model, ModelParameters, NominalCell, Numerics};
pub use protocol::{Campaign, ProtocolStep, Trajectory};

/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96_485.332_12;
/// Molar gas constant, J/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314_462_618;
/// Seconds per hour; converts Ah to coulombs.
pub const SECONDS_PER_HOUR: f64 = 3600.0;
