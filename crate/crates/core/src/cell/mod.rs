//! Single-particle cell description: geometry, transport, kinetics and
//! open-circuit potentials of the two electrodes.

pub mod kinetics;
mod ocp;
mod particle;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ocp::{OcpTable, MIN_TABLE_ROWS};
pub use particle::{ParticleProfile, ParticleState};

use crate::error::{Error, Result};
use crate::{FARADAY, GAS_CONSTANT, SECONDS_PER_HOUR};

/// Graphite OCP shipped with the crate (illustrative, not fitted).
pub const GRAPHITE_OCP: &str = include_str!("../../data/ocp_graphite.txt");
/// NMC OCP shipped with the crate (illustrative, not fitted).
pub const NMC_OCP: &str = include_str!("../../data/ocp_nmc.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Electrode {
    Positive,
    Negative,
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Electrode::Positive => "positive",
            Electrode::Negative => "negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeParameters {
    /// Electrode thickness, m.
    pub thickness: f64,
    /// Particle radius, m.
    pub particle_radius: f64,
    /// Maximum solid concentration, mol/m³.
    pub c_max: f64,
    /// Solid diffusivity, m²/s.
    pub diffusivity: f64,
    /// Intercalation rate constant; scaled so that `i0` is in A/m².
    pub rate_constant: f64,
    pub ocp: OcpTable,
}

impl ElectrodeParameters {
    /// Active-material volume fraction implied by a capacity in Ah:
    /// `ε = 3600·C / (A·F·l·c_max)`.
    pub fn volume_fraction(&self, area: f64, capacity_ah: f64) -> f64 {
        SECONDS_PER_HOUR * capacity_ah / (area * FARADAY * self.thickness * self.c_max)
    }

    /// Specific interfacial area `a_s = 3ε/r_p`, 1/m.
    pub fn specific_area(&self, area: f64, capacity_ah: f64) -> f64 {
        3.0 * self.volume_fraction(area, capacity_ah) / self.particle_radius
    }

    /// Total particle surface area `A·l·a_s`, m².
    pub fn interfacial_area(&self, area: f64, capacity_ah: f64) -> f64 {
        area * self.thickness * self.specific_area(area, capacity_ah)
    }

    fn validate(&self, which: Electrode) -> Result<()> {
        let fields = [
            ("thickness", self.thickness),
            ("particle_radius", self.particle_radius),
            ("c_max", self.c_max),
            ("diffusivity", self.diffusivity),
            ("rate_constant", self.rate_constant),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{which} electrode {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParameters {
    /// Electrode (current-collector) area, m².
    pub area: f64,
    pub positive: ElectrodeParameters,
    pub negative: ElectrodeParameters,
    /// Charge-transfer symmetry factor.
    pub alpha: f64,
    /// Nominal electrolyte concentration, mol/m³.
    pub electrolyte_concentration: f64,
    /// Temperature, K.
    pub temperature: f64,
    /// Upper voltage limit, V.
    pub v_max: f64,
    /// Lower voltage limit, V.
    pub v_min: f64,
}

impl CellParameters {
    pub fn validate(&self) -> Result<()> {
        self.positive.validate(Electrode::Positive)?;
        self.negative.validate(Electrode::Negative)?;
        for (name, v) in [
            ("area", self.area),
            ("electrolyte_concentration", self.electrolyte_concentration),
            ("temperature", self.temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.v_min < self.v_max) {
            return Err(Error::InvalidParameter(format!(
                "v_min ({}) must be below v_max ({})",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    pub fn electrode(&self, electrode: Electrode) -> &ElectrodeParameters {
        match electrode {
            Electrode::Positive => &self.positive,
            Electrode::Negative => &self.negative,
        }
    }

    /// Open-circuit potential of one electrode at a stoichiometry in `[0, 1]`.
    pub fn ocp(&self, electrode: Electrode, stoichiometry: f64) -> Result<f64> {
        self.electrode(electrode)
            .ocp
            .eval(stoichiometry)
            .ok_or(Error::Domain {
                electrode,
                value: stoichiometry,
            })
    }

    /// Full-cell open-circuit voltage `U+(y) − U−(x)`.
    pub fn ocv(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.ocp(Electrode::Positive, y)? - self.ocp(Electrode::Negative, x)?)
    }

    /// `R·T/F`, V.
    pub fn thermal_voltage(&self) -> f64 {
        GAS_CONSTANT * self.temperature / FARADAY
    }

    pub fn exchange_current_density(&self, electrode: Electrode, c_ss: f64) -> Result<f64> {
        let e = self.electrode(electrode);
        if !(0.0..=e.c_max).contains(&c_ss) {
            return Err(Error::Saturation {
                electrode,
                value: c_ss,
                c_max: e.c_max,
            });
        }
        Ok(kinetics::exchange_current_density(
            e.rate_constant,
            self.electrolyte_concentration,
            e.c_max,
            c_ss,
            self.alpha,
        ))
    }

    /// The demo NMC/graphite pouch cell (illustrative parameters).
    pub fn demo() -> Self {
        Self {
            area: 0.1805,
            positive: ElectrodeParameters {
                thickness: 40e-6,
                particle_radius: 3.5e-6,
                c_max: 51_765.0,
                diffusivity: 5e-14,
                rate_constant: 1.2e-6,
                ocp: OcpTable::parse(NMC_OCP).expect("shipped NMC table is valid"),
            },
            negative: ElectrodeParameters {
                thickness: 62e-6,
                particle_radius: 5e-6,
                c_max: 30_555.0,
                diffusivity: 1e-13,
                rate_constant: 2e-6,
                ocp: OcpTable::parse(GRAPHITE_OCP).expect("shipped graphite table is valid"),
            },
            alpha: 0.5,
            electrolyte_concentration: 1000.0,
            temperature: 298.15,
            v_max: 4.2,
            v_min: 3.0,
        }
    }
}
