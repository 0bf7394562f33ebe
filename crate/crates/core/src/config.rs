//! Flat TOML configuration for the model.
//!
//! Every key is optional and defaults to the demo cell; unknown keys are
//! rejected. All values are SI (lengths in m, concentrations in mol/m³,
//! capacities in Ah). Discharge current is positive.
//!
//! OCP tables are two-column text files (stoichiometry, volts), read
//! relative to the config file; omit `pos_ocp`/`neg_ocp` to use the
//! shipped NMC and graphite tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell::{CellParameters, ElectrodeParameters, OcpTable, GRAPHITE_OCP, NMC_OCP};
use crate::degradation::{DegradationParameters, LamParameters, PlatingParameters, SeiParameters};
use crate::error::{Error, Result};
use crate::measurement::ExpansionParameters;
use crate::model::{ModelParameters, NominalCell, Numerics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    pub seed: u64,

    pub area: f64,
    pub alpha: f64,
    pub electrolyte_concentration: f64,
    pub temperature: f64,
    pub v_max: f64,
    pub v_min: f64,

    pub pos_thickness: f64,
    pub pos_particle_radius: f64,
    pub pos_c_max: f64,
    pub pos_diffusivity: f64,
    pub pos_rate_constant: f64,
    pub pos_ocp: Option<PathBuf>,
    pub neg_thickness: f64,
    pub neg_particle_radius: f64,
    pub neg_c_max: f64,
    pub neg_diffusivity: f64,
    pub neg_rate_constant: f64,
    pub neg_ocp: Option<PathBuf>,

    pub nominal_capacity_pos: f64,
    pub nominal_capacity_neg: f64,
    pub nominal_x_100: f64,

    pub sei_rate_constant: f64,
    pub sei_alpha: f64,
    pub sei_potential: f64,
    pub sei_solvent_concentration: f64,
    pub sei_diffusivity: f64,
    pub sei_molar_volume: f64,
    pub sei_conductivity: f64,

    pub plating_rate_constant: f64,
    pub plating_alpha: f64,
    pub plating_molar_volume: f64,
    pub plating_conductivity: f64,

    pub lam_beta1_pos: f64,
    pub lam_beta2_pos: f64,
    pub lam_beta1_neg: f64,
    pub lam_beta2_neg: f64,
    pub lam_sigma_crit_pos: f64,
    pub lam_sigma_crit_neg: f64,
    pub lam_exponent: f64,
    pub lam_stress_gain_pos: f64,
    pub lam_stress_gain_neg: f64,

    pub expansion_sei: f64,
    pub expansion_plating: f64,
    pub expansion_lam_pos: f64,
    pub expansion_lam_neg: f64,

    pub shells: usize,
    pub dt_active: f64,
    pub dt_rest_max: f64,
    pub step_time_cap: f64,
}

impl Default for FlatConfig {
    fn default() -> Self {
        let p = ModelParameters::demo();
        let (c, d, e, n, num) = (&p.cell, &p.degradation, &p.expansion, &p.nominal, &p.numerics);
        Self {
            seed: 0,
            area: c.area,
            alpha: c.alpha,
            electrolyte_concentration: c.electrolyte_concentration,
            temperature: c.temperature,
            v_max: c.v_max,
            v_min: c.v_min,
            pos_thickness: c.positive.thickness,
            pos_particle_radius: c.positive.particle_radius,
            pos_c_max: c.positive.c_max,
            pos_diffusivity: c.positive.diffusivity,
            pos_rate_constant: c.positive.rate_constant,
            pos_ocp: None,
            neg_thickness: c.negative.thickness,
            neg_particle_radius: c.negative.particle_radius,
            neg_c_max: c.negative.c_max,
            neg_diffusivity: c.negative.diffusivity,
            neg_rate_constant: c.negative.rate_constant,
            neg_ocp: None,
            nominal_capacity_pos: n.capacity_pos,
            nominal_capacity_neg: n.capacity_neg,
            nominal_x_100: n.x_100,
            sei_rate_constant: d.sei.rate_constant,
            sei_alpha: d.sei.alpha,
            sei_potential: d.sei.potential,
            sei_solvent_concentration: d.sei.solvent_concentration,
            sei_diffusivity: d.sei.diffusivity,
            sei_molar_volume: d.sei.molar_volume,
            sei_conductivity: d.sei.conductivity,
            plating_rate_constant: d.plating.rate_constant,
            plating_alpha: d.plating.alpha,
            plating_molar_volume: d.plating.molar_volume,
            plating_conductivity: d.plating.conductivity,
            lam_beta1_pos: d.lam.beta1_pos,
            lam_beta2_pos: d.lam.beta2_pos,
            lam_beta1_neg: d.lam.beta1_neg,
            lam_beta2_neg: d.lam.beta2_neg,
            lam_sigma_crit_pos: d.lam.sigma_crit_pos,
            lam_sigma_crit_neg: d.lam.sigma_crit_neg,
            lam_exponent: d.lam.exponent,
            lam_stress_gain_pos: d.lam.stress_gain_pos,
            lam_stress_gain_neg: d.lam.stress_gain_neg,
            expansion_sei: e.sei,
            expansion_plating: e.plating,
            expansion_lam_pos: e.lam_pos,
            expansion_lam_neg: e.lam_neg,
            shells: num.shells,
            dt_active: num.dt_active,
            dt_rest_max: num.dt_rest_max,
            step_time_cap: num.step_time_cap,
        }
    }
}

/// Parsed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ModelParameters,
    pub seed: u64,
}

impl FlatConfig {
    /// Builds model parameters, reading OCP tables relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Config> {
        let table = |path: &Option<PathBuf>, shipped: &str| -> Result<OcpTable> {
            match path {
                None => OcpTable::parse(shipped),
                Some(p) => {
                    let full = base_dir.join(p);
                    let text = std::fs::read_to_string(&full).map_err(|e| {
                        Error::InvalidParameter(format!("cannot read OCP table {}: {e}", full.display()))
                    })?;
                    OcpTable::parse(&text).map_err(|e| Error::InvalidParameter(format!("{}: {e}", full.display())))
                }
            }
        };
        let params = ModelParameters {
            cell: CellParameters {
                area: self.area,
                positive: ElectrodeParameters {
                    thickness: self.pos_thickness,
                    particle_radius: self.pos_particle_radius,
                    c_max: self.pos_c_max,
                    diffusivity: self.pos_diffusivity,
                    rate_constant: self.pos_rate_constant,
                    ocp: table(&self.pos_ocp, NMC_OCP)?,
                },
                negative: ElectrodeParameters {
                    thickness: self.neg_thickness,
                    particle_radius: self.neg_particle_radius,
                    c_max: self.neg_c_max,
                    diffusivity: self.neg_diffusivity,
                    rate_constant: self.neg_rate_constant,
                    ocp: table(&self.neg_ocp, GRAPHITE_OCP)?,
                },
                alpha: self.alpha,
                electrolyte_concentration: self.electrolyte_concentration,
                temperature: self.temperature,
                v_max: self.v_max,
                v_min: self.v_min,
            },
            degradation: DegradationParameters {
                sei: SeiParameters {
                    rate_constant: self.sei_rate_constant,
                    alpha: self.sei_alpha,
                    potential: self.sei_potential,
                    solvent_concentration: self.sei_solvent_concentration,
                    diffusivity: self.sei_diffusivity,
                    molar_volume: self.sei_molar_volume,
                    conductivity: self.sei_conductivity,
                },
                plating: PlatingParameters {
                    rate_constant: self.plating_rate_constant,
                    alpha: self.plating_alpha,
                    molar_volume: self.plating_molar_volume,
                    conductivity: self.plating_conductivity,
                },
                lam: LamParameters {
                    beta1_pos: self.lam_beta1_pos,
                    beta2_pos: self.lam_beta2_pos,
                    beta1_neg: self.lam_beta1_neg,
                    beta2_neg: self.lam_beta2_neg,
                    sigma_crit_pos: self.lam_sigma_crit_pos,
                    sigma_crit_neg: self.lam_sigma_crit_neg,
                    exponent: self.lam_exponent,
                    stress_gain_pos: self.lam_stress_gain_pos,
                    stress_gain_neg: self.lam_stress_gain_neg,
                },
            },
            expansion: ExpansionParameters {
                sei: self.expansion_sei,
                plating: self.expansion_plating,
                lam_pos: self.expansion_lam_pos,
                lam_neg: self.expansion_lam_neg,
            },
            nominal: NominalCell {
                capacity_pos: self.nominal_capacity_pos,
                capacity_neg: self.nominal_capacity_neg,
                x_100: self.nominal_x_100,
            },
            numerics: Numerics {
                shells: self.shells,
                dt_active: self.dt_active,
                dt_rest_max: self.dt_rest_max,
                step_time_cap: self.step_time_cap,
            },
        };
        params.validate()?;
        Ok(Config { params, seed: self.seed })
    }
}

/// Parses config text; OCP paths are resolved against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<Config> {
    let flat: FlatConfig = toml::from_str(text).map_err(|e| crate::protocol::toml_error(text, &e))?;
    flat.resolve(base_dir)
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_demo() {
        let c = parse_config("", Path::new(".")).unwrap();
        assert_eq!(c.params, ModelParameters::demo());
    }

    #[test]
    fn overrides_and_rejects_unknown() {
        let c = parse_config("sei_rate_constant = 0.0\nshells = 40\n", Path::new(".")).unwrap();
        assert_eq!(c.params.degradation.sei.rate_constant, 0.0);
        assert_eq!(c.params.numerics.shells, 40);
        match parse_config("area = 0.1\n\nbogus = 1\n", Path::new(".")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_ocp_table_is_input_error() {
        let err = parse_config("neg_ocp = \"nope.txt\"\n", Path::new("/nonexistent")).unwrap_err();
        assert!(err.is_input_error());
        assert!(err.to_string().contains("nope.txt"));
    }

    #[test]
    fn shipped_files_match_defaults() {
        let c = parse_config(include_str!("../../../configs/demo.toml"), Path::new(".")).unwrap();
        assert_eq!(c.params, ModelParameters::demo());
        let p = crate::protocol::parse_protocol(include_str!("../../../configs/second_life.toml")).unwrap();
        assert_eq!(p, crate::protocol::Campaign::second_life());
    }

    #[test]
    fn invalid_value_rejected() {
        assert!(parse_config("alpha = 1.5\n", Path::new(".")).is_err());
    }
}
