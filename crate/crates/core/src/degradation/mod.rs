//! Degradation mechanisms and the deepSOH state they evolve.
//!
//! Each mechanism is written as a plain function of its local driving
//! quantities so it can be tested in isolation; [`crate::Model`] wires them
//! to the particle model.
//!
//! Film thicknesses are referenced to the pristine negative-electrode
//! interfacial area (`film_area`), so the lithium held in a film is a fixed
//! multiple of its thickness.

use serde::{Deserialize, Serialize};

use crate::cell::{CellParameters, Electrode};
use crate::error::{Error, Result};
use crate::{FARADAY, GAS_CONSTANT, SECONDS_PER_HOUR};

/// The degradation state vector `[δ_SEI, δ_pl, C_p, C_n, LLI]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepSOH {
    /// SEI thickness, m.
    pub delta_sei: f64,
    /// Plated-lithium film thickness, m.
    pub delta_pl: f64,
    /// Positive electrode capacity, Ah.
    pub capacity_pos: f64,
    /// Negative electrode capacity, Ah.
    pub capacity_neg: f64,
    /// Loss of lithium inventory, fraction of the pristine inventory.
    pub lli: f64,
}

impl DeepSOH {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta_sei >= 0.0
            && self.delta_pl >= 0.0
            && self.capacity_pos > 0.0
            && self.capacity_neg > 0.0
            && (0.0..1.0).contains(&self.lli)
            && self.as_array().iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid deepSOH state {self:?}")))
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.delta_sei,
            self.delta_pl,
            self.capacity_pos,
            self.capacity_neg,
            self.lli,
        ]
    }

    pub fn capacity(&self, electrode: Electrode) -> f64 {
        match electrode {
            Electrode::Positive => self.capacity_pos,
            Electrode::Negative => self.capacity_neg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeiParameters {
    /// Kinetic rate constant, m/s. Zero disables SEI growth.
    pub rate_constant: f64,
    pub alpha: f64,
    /// Equilibrium potential of the SEI reaction, V.
    pub potential: f64,
    /// Bulk solvent (EC) concentration, mol/m³.
    pub solvent_concentration: f64,
    /// Solvent diffusivity through the SEI, m²/s.
    pub diffusivity: f64,
    /// SEI partial molar volume, m³/mol.
    pub molar_volume: f64,
    /// SEI ionic conductivity, S/m.
    pub conductivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatingParameters {
    /// Plating rate constant, m/s. Zero disables plating.
    pub rate_constant: f64,
    pub alpha: f64,
    /// Lithium metal molar volume, m³/mol.
    pub molar_volume: f64,
    /// Ionic conductivity of the plated layer, S/m.
    pub conductivity: f64,
}

/// Fatigue loss of active material; coefficients are volume-fraction loss
/// per cycle at `|σ| = σ_crit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LamParameters {
    pub beta1_pos: f64,
    pub beta2_pos: f64,
    pub beta1_neg: f64,
    pub beta2_neg: f64,
    /// Critical stress, Pa.
    pub sigma_crit_pos: f64,
    pub sigma_crit_neg: f64,
    /// Fatigue exponent `m_LAM`.
    pub exponent: f64,
    /// Hydrostatic stress per unit normalised concentration difference, Pa.
    pub stress_gain_pos: f64,
    pub stress_gain_neg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationParameters {
    pub sei: SeiParameters,
    pub plating: PlatingParameters,
    pub lam: LamParameters,
}

impl DegradationParameters {
    pub fn demo() -> Self {
        Self {
            sei: SeiParameters {
                rate_constant: 2.0e-16,
                alpha: 0.5,
                potential: 0.4,
                solvent_concentration: 4541.0,
                diffusivity: 1.2e-20,
                molar_volume: 9.585e-5,
                conductivity: 5.0e-6,
            },
            plating: PlatingParameters {
                rate_constant: 1.0e-9,
                alpha: 0.5,
                molar_volume: 1.3e-5,
                conductivity: 2.0e-6,
            },
            lam: LamParameters {
                beta1_pos: 2.0e-5,
                beta2_pos: 2.0e-5,
                beta1_neg: 2.0e-5,
                beta2_neg: 2.0e-5,
                sigma_crit_pos: 6.0e7,
                sigma_crit_neg: 6.0e7,
                exponent: 2.0,
                stress_gain_pos: 3.5e10,
                stress_gain_neg: 3.5e10,
            },
        }
    }

    /// Same parameters with every degradation rate set to zero.
    pub fn disabled(&self) -> Self {
        let mut p = self.clone();
        p.sei.rate_constant = 0.0;
        p.plating.rate_constant = 0.0;
        p.lam.beta1_pos = 0.0;
        p.lam.beta2_pos = 0.0;
        p.lam.beta1_neg = 0.0;
        p.lam.beta2_neg = 0.0;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sei alpha", self.sei.alpha),
            ("sei solvent_concentration", self.sei.solvent_concentration),
            ("sei diffusivity", self.sei.diffusivity),
            ("sei molar_volume", self.sei.molar_volume),
            ("sei conductivity", self.sei.conductivity),
            ("plating alpha", self.plating.alpha),
            ("plating molar_volume", self.plating.molar_volume),
            ("plating conductivity", self.plating.conductivity),
            ("lam sigma_crit_pos", self.lam.sigma_crit_pos),
            ("lam sigma_crit_neg", self.lam.sigma_crit_neg),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("sei rate_constant", self.sei.rate_constant),
            ("plating rate_constant", self.plating.rate_constant),
            ("lam beta1_pos", self.lam.beta1_pos),
            ("lam beta2_pos", self.lam.beta2_pos),
            ("lam beta1_neg", self.lam.beta1_neg),
            ("lam beta2_neg", self.lam.beta2_neg),
            ("lam stress_gain_pos", self.lam.stress_gain_pos),
            ("lam stress_gain_neg", self.lam.stress_gain_neg),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.sei.alpha < 1.0 && self.plating.alpha < 1.0) {
            return Err(Error::InvalidParameter("transfer coefficients must be below 1".into()));
        }
        if !(self.lam.exponent >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lam exponent must be >= 1, got {}",
                self.lam.exponent
            )));
        }
        Ok(())
    }
}

fn f_over_rt(temperature: f64) -> f64 {
    FARADAY / (GAS_CONSTANT * temperature)
}

/// Effective kinetic rate constant `k·exp(−α·F·η/(R·T))`, m/s.
fn sei_kinetic_rate(p: &SeiParameters, eta_sei: f64, temperature: f64) -> f64 {
    p.rate_constant * (-p.alpha * f_over_rt(temperature) * eta_sei).exp()
}

/// SEI molar flux, mol/(m²·s), always `<= 0`:
/// `j = −c_EC0 / (1/k_eff + δ/D)`.
///
/// The two denominators are the kinetic and the solvent-diffusion
/// resistances in series.
pub fn sei_flux(p: &SeiParameters, delta_sei: f64, eta_sei: f64, temperature: f64) -> f64 {
    let k_eff = sei_kinetic_rate(p, eta_sei, temperature);
    if k_eff == 0.0 {
        return 0.0;
    }
    -p.solvent_concentration / (1.0 / k_eff + delta_sei / p.diffusivity)
}

/// Closed-form `∂j_SEI/∂δ_SEI` at fixed overpotential.
pub fn sei_flux_derivative(p: &SeiParameters, delta_sei: f64, eta_sei: f64, temperature: f64) -> f64 {
    let k_eff = sei_kinetic_rate(p, eta_sei, temperature);
    if k_eff == 0.0 {
        return 0.0;
    }
    let denom = 1.0 / k_eff + delta_sei / p.diffusivity;
    p.solvent_concentration / (p.diffusivity * denom * denom)
}

/// `δ̇_SEI = −Ω_SEI·j_SEI/2`, m/s.
pub fn sei_growth_rate(p: &SeiParameters, flux: f64) -> f64 {
    -p.molar_volume * flux / 2.0
}

/// Lithium consumed by an SEI of thickness `δ`: `2·S·δ/Ω_SEI`, mol.
pub fn sei_lithium_moles(p: &SeiParameters, delta_sei: f64, film_area: f64) -> f64 {
    2.0 * film_area * delta_sei / p.molar_volume
}

/// Backward-Euler thickness increment over `dt` at a frozen overpotential.
///
/// Solves `Δ·(1/k_eff + (δ + Δ)/D) = dt·Ω·c_EC0/2` for `Δ >= 0` with the
/// cancellation-free root of the quadratic.
pub fn sei_implicit_increment(p: &SeiParameters, delta_sei: f64, eta_sei: f64, temperature: f64, dt: f64) -> f64 {
    let k_eff = sei_kinetic_rate(p, eta_sei, temperature);
    if k_eff == 0.0 {
        return 0.0;
    }
    let g = dt * p.molar_volume * p.solvent_concentration / 2.0;
    let a = 1.0 / k_eff + delta_sei / p.diffusivity;
    let b = 1.0 / p.diffusivity;
    2.0 * g / (a + (a * a + 4.0 * b * g).sqrt())
}

/// Plating molar flux, mol/(m²·s):
/// `j_pl = −k_pl·c_e·(c_ss − c_avg)/c_max · exp(−α_pl·F·η_pl/(R·T))`.
///
/// Negative values deposit lithium. Positive values (surface depleted
/// below the mean) would strip, which this model does not represent; see
/// [`plating_growth_rate`].
pub fn plating_flux(
    p: &PlatingParameters,
    c_e: f64,
    c_ss: f64,
    c_avg: f64,
    c_max: f64,
    eta_pl: f64,
    temperature: f64,
) -> f64 {
    if p.rate_constant == 0.0 {
        return 0.0;
    }
    -p.rate_constant * c_e * (c_ss - c_avg) / c_max * (-p.alpha * f_over_rt(temperature) * guard_eta(eta_pl)).exp()
}

// exp overflow guard for pathological inputs; physical η_pl is O(0.1 V).
fn guard_eta(eta: f64) -> f64 {
    eta.clamp(-5.0, 5.0)
}

/// `δ̇_pl = Ω_pl·|j_pl|` while depositing, zero otherwise (no stripping).
pub fn plating_growth_rate(p: &PlatingParameters, flux: f64) -> f64 {
    p.molar_volume * (-flux).max(0.0)
}

/// Lithium held in the plated film: `S·δ_pl/Ω_pl`, mol.
pub fn plated_lithium_moles(p: &PlatingParameters, delta_pl: f64, film_area: f64) -> f64 {
    film_area * delta_pl / p.molar_volume
}

/// Surface hydrostatic stress closure `σ_h = gain·(c_avg − c_ss)/c_max`, Pa.
/// Positive (tensile) when the surface is depleted below the mean.
pub fn hydrostatic_stress(gain: f64, c_avg: f64, c_ss: f64, c_max: f64) -> f64 {
    gain * (c_avg - c_ss) / c_max
}

/// Running per-cycle stress extrema for both electrodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressExtrema {
    pub pos_max: f64,
    pub pos_min: f64,
    pub neg_max: f64,
    pub neg_min: f64,
}

impl Default for StressExtrema {
    fn default() -> Self {
        Self {
            pos_max: 0.0,
            pos_min: 0.0,
            neg_max: 0.0,
            neg_min: 0.0,
        }
    }
}

impl StressExtrema {
    pub fn observe(&mut self, electrode: Electrode, sigma: f64) {
        let (max, min) = match electrode {
            Electrode::Positive => (&mut self.pos_max, &mut self.pos_min),
            Electrode::Negative => (&mut self.neg_max, &mut self.neg_min),
        };
        *max = max.max(sigma);
        *min = min.min(sigma);
    }

    pub fn extrema(&self, electrode: Electrode) -> (f64, f64) {
        match electrode {
            Electrode::Positive => (self.pos_max, self.pos_min),
            Electrode::Negative => (self.neg_max, self.neg_min),
        }
    }
}

/// Volume-fraction loss over one cycle:
/// `β1·(|σ_max|/σ_crit)^m + β2·(|σ_min|/σ_crit)^m`.
pub fn lam_volume_fraction_loss(p: &LamParameters, electrode: Electrode, extrema: &StressExtrema) -> f64 {
    let (max, min) = extrema.extrema(electrode);
    let (b1, b2, crit) = match electrode {
        Electrode::Positive => (p.beta1_pos, p.beta2_pos, p.sigma_crit_pos),
        Electrode::Negative => (p.beta1_neg, p.beta2_neg, p.sigma_crit_neg),
    };
    b1 * (max.abs() / crit).powf(p.exponent) + b2 * (min.abs() / crit).powf(p.exponent)
}

/// Instantaneous rates of the state components entering the LLI balance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComponentRates {
    pub delta_sei: f64,
    pub delta_pl: f64,
    pub capacity_pos: f64,
    pub capacity_neg: f64,
}

/// Rate of change of LLI, 1/s:
/// `[S·(2·δ̇_SEI/Ω_SEI + δ̇_pl/Ω_pl) − (3600/F)·(y·Ċ_p + x·Ċ_n)] / n_Li,0`.
///
/// Every term is non-negative for a degrading cell.
pub fn lli_rate(
    n_li_0: f64,
    film_area: f64,
    sei: &SeiParameters,
    plating: &PlatingParameters,
    rates: &ComponentRates,
    x: f64,
    y: f64,
) -> f64 {
    let films = film_area * (2.0 * rates.delta_sei / sei.molar_volume + rates.delta_pl / plating.molar_volume);
    let lam = -SECONDS_PER_HOUR / FARADAY * (y * rates.capacity_pos + x * rates.capacity_neg);
    (films + lam) / n_li_0
}

/// Lithium stranded in active material lost while at stoichiometries
/// `(x, y)`: `−(3600/F)·(y·ΔC_p + x·ΔC_n)`, mol.
pub fn lam_lithium_moles(x: f64, y: f64, d_capacity_pos: f64, d_capacity_neg: f64) -> f64 {
    -SECONDS_PER_HOUR / FARADAY * (y * d_capacity_pos + x * d_capacity_neg)
}

/// Separately accumulated lithium lost with detached active material, so
/// that LLI can be rebuilt from the film thicknesses plus this term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LithiumLedger {
    pub lam_moles: f64,
}

/// Result of applying one cycle of fatigue LAM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LamUpdate {
    pub state: DeepSOH,
    pub lithium_moles: f64,
}

/// Applies one cycle's fatigue loss to both electrode capacities. `C ∝ ε`,
/// so a volume-fraction loss `Δε` removes `Δε·A·F·l·c_max/3600` Ah.
/// The lithium stranded in the lost material at `(x, y)` is added to LLI.
pub fn lam_cycle_update(
    lam: &LamParameters,
    cell: &CellParameters,
    state: &DeepSOH,
    extrema: &StressExtrema,
    x: f64,
    y: f64,
    n_li_0: f64,
) -> Result<LamUpdate> {
    let loss = |e: Electrode| {
        let p = cell.electrode(e);
        lam_volume_fraction_loss(lam, e, extrema) * cell.area * FARADAY * p.thickness * p.c_max / SECONDS_PER_HOUR
    };
    let d_pos = -loss(Electrode::Positive);
    let d_neg = -loss(Electrode::Negative);
    let mut next = *state;
    next.capacity_pos += d_pos;
    next.capacity_neg += d_neg;
    if next.capacity_pos <= 0.0 {
        return Err(Error::CellDead(Electrode::Positive));
    }
    if next.capacity_neg <= 0.0 {
        return Err(Error::CellDead(Electrode::Negative));
    }
    let lithium_moles = lam_lithium_moles(x, y, d_pos, d_neg);
    next.lli += lithium_moles / n_li_0;
    Ok(LamUpdate {
        state: next,
        lithium_moles,
    })
}
