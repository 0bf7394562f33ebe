//! The coupled cell + degradation model advanced one timestep at a time.

use serde::{Deserialize, Serialize};

use crate::cell::{kinetics, CellParameters, Electrode, ParticleProfile, ParticleState};
use crate::degradation::{
    self, ComponentRates, DeepSOH, DegradationParameters, LithiumLedger, StressExtrema,
};
use crate::error::{Error, Result};
use crate::measurement::{self, lithium_inventory, solve_esoh, ESOHRecord, ExpansionParameters};
use crate::rootfind;
use crate::FARADAY;

/// Pristine electrode capacities and the negative stoichiometry at 100% SOC.
/// Together with `V_max` these fix the pristine lithium inventory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalCell {
    pub capacity_pos: f64,
    pub capacity_neg: f64,
    pub x_100: f64,
}

impl NominalCell {
    pub fn demo() -> Self {
        Self {
            capacity_pos: 4.52,
            capacity_neg: 5.5,
            x_100: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    /// Radial shells per particle.
    pub shells: usize,
    /// Timestep under load, s.
    pub dt_active: f64,
    /// Largest timestep during rests, s.
    pub dt_rest_max: f64,
    /// A step that has not terminated after this long is a stall, s.
    pub step_time_cap: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            shells: 20,
            dt_active: 10.0,
            dt_rest_max: 60.0,
            step_time_cap: 72.0 * 3600.0,
        }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        if self.shells < 3 {
            return Err(Error::InvalidParameter(format!("need at least 3 shells, got {}", self.shells)));
        }
        for (name, v) in [
            ("dt_active", self.dt_active),
            ("dt_rest_max", self.dt_rest_max),
            ("step_time_cap", self.step_time_cap),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub cell: CellParameters,
    pub degradation: DegradationParameters,
    pub expansion: ExpansionParameters,
    pub nominal: NominalCell,
    pub numerics: Numerics,
}

impl ModelParameters {
    pub fn demo() -> Self {
        Self {
            cell: CellParameters::demo(),
            degradation: DegradationParameters::demo(),
            expansion: ExpansionParameters::demo(),
            nominal: NominalCell::demo(),
            numerics: Numerics::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        self.degradation.validate()?;
        self.expansion.validate()?;
        self.numerics.validate()?;
        let n = &self.nominal;
        if !(n.capacity_pos > 0.0 && n.capacity_neg > 0.0 && n.x_100 > 0.0 && n.x_100 < 1.0) {
            return Err(Error::InvalidParameter(format!("invalid nominal cell {n:?}")));
        }
        Ok(())
    }
}

/// Full dynamic state of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub particles: ParticleState,
    pub deep: DeepSOH,
    pub ledger: LithiumLedger,
    /// Stress extrema of the cycle in progress.
    pub stress: StressExtrema,
}

/// Electrical quantities at the end of a timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operating {
    pub voltage: f64,
    pub current: f64,
    pub eta_pos: f64,
    pub eta_neg: f64,
    /// Mean stoichiometries.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    params: ModelParameters,
    pristine: ESOHRecord,
    film_area: f64,
}

impl Model {
    pub fn new(params: ModelParameters) -> Result<Self> {
        params.validate()?;
        let cell = &params.cell;
        let n = params.nominal;
        let u_neg = cell.ocp(Electrode::Negative, n.x_100)?;
        let y_100 = rootfind::bracketed(
            |y| Ok(cell.ocp(Electrode::Positive, y)? - u_neg - cell.v_max),
            0.0,
            1.0,
            1e-13,
            1e-15,
        )
        .map_err(|_| {
            Error::InvalidParameter(format!(
                "no positive stoichiometry reaches {} V with x_100 = {}",
                cell.v_max, n.x_100
            ))
        })?;
        let n_li = lithium_inventory(n.x_100, y_100, n.capacity_neg, n.capacity_pos);
        let pristine = solve_esoh(cell, n.capacity_pos, n.capacity_neg, n_li)?;
        let film_area = cell.negative.interfacial_area(cell.area, n.capacity_neg);
        Ok(Self {
            params,
            pristine,
            film_area,
        })
    }

    pub fn demo() -> Self {
        Self::new(ModelParameters::demo()).expect("demo parameters are valid")
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn cell(&self) -> &CellParameters {
        &self.params.cell
    }

    pub fn pristine(&self) -> &ESOHRecord {
        &self.pristine
    }

    /// Pristine negative interfacial area that film thicknesses refer to, m².
    pub fn film_area(&self) -> f64 {
        self.film_area
    }

    pub fn n_li_0(&self) -> f64 {
        self.pristine.n_li
    }

    /// Pristine full-cell capacity, Ah. C-rates refer to this.
    pub fn nominal_capacity(&self) -> f64 {
        self.pristine.capacity
    }

    pub fn pristine_deep(&self) -> DeepSOH {
        DeepSOH {
            delta_sei: 0.0,
            delta_pl: 0.0,
            capacity_pos: self.pristine.capacity_pos,
            capacity_neg: self.pristine.capacity_neg,
            lli: 0.0,
        }
    }

    /// eSOH implied by a degradation state.
    pub fn esoh(&self, deep: &DeepSOH) -> Result<ESOHRecord> {
        deep.validate()?;
        solve_esoh(&self.params.cell, deep.capacity_pos, deep.capacity_neg, self.n_li_0() * (1.0 - deep.lli))
    }

    /// Equilibrated cell at a state of charge in `[0, 1]`. Lithium loss not
    /// explained by the film thicknesses is booked against active material.
    pub fn cell_at(&self, deep: DeepSOH, soc: f64) -> Result<CellState> {
        let esoh = self.esoh(&deep)?;
        let (x, y) = esoh.stoichiometry_at(soc.clamp(0.0, 1.0));
        let shells = self.params.numerics.shells;
        let cell = &self.params.cell;
        let lam_moles = deep.lli * self.n_li_0() - self.film_lithium(&deep);
        Ok(CellState {
            particles: ParticleState {
                positive: ParticleProfile::uniform(shells, y * cell.positive.c_max),
                negative: ParticleProfile::uniform(shells, x * cell.negative.c_max),
            },
            deep,
            ledger: LithiumLedger { lam_moles },
            stress: StressExtrema::default(),
        })
    }

    pub fn pristine_cell(&self, soc: f64) -> Result<CellState> {
        self.cell_at(self.pristine_deep(), soc)
    }

    /// Lithium held in the SEI and plated films, mol.
    pub fn film_lithium(&self, deep: &DeepSOH) -> f64 {
        let d = &self.params.degradation;
        degradation::sei_lithium_moles(&d.sei, deep.delta_sei, self.film_area)
            + degradation::plated_lithium_moles(&d.plating, deep.delta_pl, self.film_area)
    }

    /// LLI rebuilt from film thicknesses plus the LAM ledger.
    pub fn reconstructed_lli(&self, state: &CellState) -> f64 {
        (self.film_lithium(&state.deep) + state.ledger.lam_moles) / self.n_li_0()
    }

    /// Cell-level film resistance, Ω.
    pub fn film_resistance(&self, deep: &DeepSOH) -> f64 {
        let d = &self.params.degradation;
        measurement::film_resistance_area(deep, &d.sei, &d.plating) / self.film_area
    }

    pub fn interfacial_area(&self, electrode: Electrode, deep: &DeepSOH) -> f64 {
        let cell = &self.params.cell;
        cell.electrode(electrode).interfacial_area(cell.area, deep.capacity(electrode))
    }

    /// Mean stoichiometries `(x, y)`.
    pub fn stoichiometry(&self, particles: &ParticleState) -> (f64, f64) {
        let cell = &self.params.cell;
        (
            particles.negative.average() / cell.negative.c_max,
            particles.positive.average() / cell.positive.c_max,
        )
    }

    /// Intercalation overpotential for cell current `current` (discharge
    /// positive). Dissipative: `η−` has the sign of the current, `η+` the
    /// opposite sign.
    pub fn intercalation_overpotential(
        &self,
        electrode: Electrode,
        current: f64,
        particles: &ParticleState,
        deep: &DeepSOH,
    ) -> Result<f64> {
        let cell = &self.params.cell;
        let c_ss = particles.profile(electrode).surface;
        let i0 = cell.exchange_current_density(electrode, c_ss)?;
        let sign = match electrode {
            Electrode::Negative => 1.0,
            Electrode::Positive => -1.0,
        };
        let i = sign * current / self.interfacial_area(electrode, deep);
        kinetics::overpotential(i, i0, cell.temperature, cell.alpha).ok_or(Error::KineticsSingular { electrode })
    }

    pub fn operating(&self, particles: &ParticleState, deep: &DeepSOH, current: f64) -> Result<Operating> {
        let cell = &self.params.cell;
        let y_ss = particles.positive.surface / cell.positive.c_max;
        let x_ss = particles.negative.surface / cell.negative.c_max;
        let eta_pos = self.intercalation_overpotential(Electrode::Positive, current, particles, deep)?;
        let eta_neg = self.intercalation_overpotential(Electrode::Negative, current, particles, deep)?;
        let voltage = cell.ocp(Electrode::Positive, y_ss)? - cell.ocp(Electrode::Negative, x_ss)? + eta_pos
            - eta_neg
            - current * self.film_resistance(deep);
        let (x, y) = self.stoichiometry(particles);
        Ok(Operating {
            voltage,
            current,
            eta_pos,
            eta_neg,
            x,
            y,
        })
    }

    /// `V_T = U+(c_ss+) − U−(c_ss−) + η+ − η− − I·R_film`.
    pub fn terminal_voltage(&self, particles: &ParticleState, deep: &DeepSOH, current: f64) -> Result<f64> {
        Ok(self.operating(particles, deep, current)?.voltage)
    }

    /// Negative-electrode overpotential including the film drop.
    fn negative_drive(&self, particles: &ParticleState, deep: &DeepSOH, current: f64) -> Result<f64> {
        let cell = &self.params.cell;
        let eta = self.intercalation_overpotential(Electrode::Negative, current, particles, deep)?;
        let u = cell.ocp(Electrode::Negative, particles.negative.surface / cell.negative.c_max)?;
        Ok(eta + current * self.film_resistance(deep) + u)
    }

    /// `η_SEI = η− + U−(c_ss−) − U_SEI`, with the film drop counted in `η−`.
    pub fn sei_overpotential(&self, particles: &ParticleState, deep: &DeepSOH, current: f64) -> Result<f64> {
        Ok(self.negative_drive(particles, deep, current)? - self.params.degradation.sei.potential)
    }

    /// `η_pl = η− + U−(c_ss−)`.
    pub fn plating_overpotential(&self, particles: &ParticleState, deep: &DeepSOH, current: f64) -> Result<f64> {
        self.negative_drive(particles, deep, current)
    }

    pub fn plating_flux(&self, particles: &ParticleState, deep: &DeepSOH, current: f64) -> Result<f64> {
        let cell = &self.params.cell;
        let neg = &particles.negative;
        Ok(degradation::plating_flux(
            &self.params.degradation.plating,
            cell.electrolyte_concentration,
            neg.surface,
            neg.average(),
            cell.negative.c_max,
            self.plating_overpotential(particles, deep, current)?,
            cell.temperature,
        ))
    }

    pub fn hydrostatic_stress(&self, electrode: Electrode, particles: &ParticleState) -> f64 {
        let lam = &self.params.degradation.lam;
        let gain = match electrode {
            Electrode::Positive => lam.stress_gain_pos,
            Electrode::Negative => lam.stress_gain_neg,
        };
        let p = particles.profile(electrode);
        degradation::hydrostatic_stress(gain, p.average(), p.surface, self.params.cell.electrode(electrode).c_max)
    }

    fn diffuse(&self, electrode: Electrode, profile: &ParticleProfile, flux: f64, dt: f64) -> Result<ParticleProfile> {
        let e = self.params.cell.electrode(electrode);
        profile.diffuse(electrode, e.particle_radius, e.diffusivity, e.c_max, flux, dt)
    }

    /// Advances the cell by `dt` at constant current.
    ///
    /// Particles are stepped with backward Euler. When `degrade` is set, the
    /// side reactions are evaluated at the end-of-step surface state, the
    /// lithium they consume is withdrawn from the negative particle, and
    /// the film thicknesses, LLI and stress extrema are updated. LAM is
    /// applied separately by [`complete_cycle`](Self::complete_cycle).
    pub fn advance(&self, state: &CellState, current: f64, dt: f64, degrade: bool) -> Result<(CellState, Operating)> {
        let deep = &state.deep;
        let s_p = self.interfacial_area(Electrode::Positive, deep);
        let s_n = self.interfacial_area(Electrode::Negative, deep);
        let flux_n = current / (FARADAY * s_n);
        let flux_p = -current / (FARADAY * s_p);
        let positive = self.diffuse(Electrode::Positive, &state.particles.positive, flux_p, dt)?;
        let negative = self.diffuse(Electrode::Negative, &state.particles.negative, flux_n, dt)?;
        let mut next = CellState {
            particles: ParticleState { positive, negative },
            deep: *deep,
            ledger: state.ledger,
            stress: state.stress,
        };
        if degrade {
            self.degrade(state, &mut next, current, dt, flux_n, s_n)?;
        }
        let op = self.operating(&next.particles, &next.deep, current)?;
        Ok((next, op))
    }

    fn degrade(&self, start: &CellState, next: &mut CellState, current: f64, dt: f64, flux_n: f64, s_n: f64) -> Result<()> {
        let d = &self.params.degradation;
        let t = self.params.cell.temperature;
        let eta_sei = self.sei_overpotential(&next.particles, &next.deep, current)?;
        let d_sei = degradation::sei_implicit_increment(&d.sei, next.deep.delta_sei, eta_sei, t, dt);
        let j_pl = self.plating_flux(&next.particles, &next.deep, current)?;
        let d_pl = degradation::plating_growth_rate(&d.plating, j_pl) * dt;
        let side = degradation::sei_lithium_moles(&d.sei, d_sei, self.film_area)
            + degradation::plated_lithium_moles(&d.plating, d_pl, self.film_area);
        if side > 0.0 {
            let flux = flux_n + side / (dt * s_n);
            next.particles.negative = self.diffuse(Electrode::Negative, &start.particles.negative, flux, dt)?;
        }
        let (x, y) = self.stoichiometry(&next.particles);
        let rates = ComponentRates {
            delta_sei: d_sei / dt,
            delta_pl: d_pl / dt,
            ..Default::default()
        };
        next.deep.lli += degradation::lli_rate(self.n_li_0(), self.film_area, &d.sei, &d.plating, &rates, x, y) * dt;
        next.deep.delta_sei += d_sei;
        next.deep.delta_pl += d_pl;
        if next.deep.lli >= 1.0 {
            return Err(Error::Numerical("lithium inventory exhausted".into()));
        }
        for e in [Electrode::Positive, Electrode::Negative] {
            let sigma = self.hydrostatic_stress(e, &next.particles);
            next.stress.observe(e, sigma);
        }
        Ok(())
    }

    /// Closes a cycle: applies fatigue LAM from the recorded stress extrema
    /// at the current mean stoichiometries and resets the extrema.
    pub fn complete_cycle(&self, state: &mut CellState) -> Result<()> {
        let (x, y) = self.stoichiometry(&state.particles);
        let update = degradation::lam_cycle_update(
            &self.params.degradation.lam,
            &self.params.cell,
            &state.deep,
            &state.stress,
            x,
            y,
            self.n_li_0(),
        )?;
        state.deep = update.state;
        state.ledger.lam_moles += update.lithium_moles;
        state.stress = StressExtrema::default();
        Ok(())
    }

    /// Irreversible expansion of a state, m.
    pub fn expansion(&self, deep: &DeepSOH) -> f64 {
        measurement::irreversible_expansion(
            &self.params.expansion,
            deep,
            self.pristine.capacity_pos,
            self.pristine.capacity_neg,
        )
    }

    /// `h5`: the active-material part of the expansion, m.
    pub fn lam_expansion(&self, capacity_pos: f64, capacity_neg: f64) -> f64 {
        measurement::lam_expansion(
            &self.params.expansion,
            capacity_pos,
            capacity_neg,
            self.pristine.capacity_pos,
            self.pristine.capacity_neg,
        )
    }

    /// Mid-SOC mean stoichiometries of a state.
    pub fn mid_soc(&self, deep: &DeepSOH) -> Result<(f64, f64)> {
        Ok(self.esoh(deep)?.stoichiometry_at(0.5))
    }

    /// Closed-form instantaneous resistance at mid-SOC, Ω.
    pub fn instantaneous_resistance(&self, deep: &DeepSOH, current: f64) -> Result<f64> {
        let (x, y) = self.mid_soc(deep)?;
        measurement::instantaneous_resistance(self, deep, x, y, current)
    }

    /// `h4`: the film-independent (kinetic) part of `R_s` at mid-SOC and
    /// zero current, Ω.
    pub fn kinetic_resistance(&self, deep: &DeepSOH) -> Result<f64> {
        let (x, y) = self.mid_soc(deep)?;
        measurement::kinetic_resistance(&self.params.cell, deep, x, y, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_window() {
        let m = Model::demo();
        let p = m.pristine();
        assert!((p.x_100 - 0.8).abs() < 1e-9);
        assert!(p.capacity > 3.5 && p.capacity < p.capacity_pos);
        assert!(m.n_li_0() > 0.1);
    }

    #[test]
    fn rest_voltage_is_ocv() {
        let m = Model::demo();
        let s = m.pristine_cell(0.5).unwrap();
        let (x, y) = m.stoichiometry(&s.particles);
        let v = m.terminal_voltage(&s.particles, &s.deep, 0.0).unwrap();
        assert!((v - m.cell().ocv(x, y).unwrap()).abs() < 1e-12);
        assert!(m.terminal_voltage(&s.particles, &s.deep, 1.0).unwrap() < v);
        assert!(m.terminal_voltage(&s.particles, &s.deep, -1.0).unwrap() > v);
    }

    #[test]
    fn overpotential_slope_matches_linearisation() {
        let m = Model::demo();
        let s = m.pristine_cell(0.5).unwrap();
        let cell = m.cell();
        let h = 1e-4;
        for e in [Electrode::Positive, Electrode::Negative] {
            let fd = (m.intercalation_overpotential(e, h, &s.particles, &s.deep).unwrap()
                - m.intercalation_overpotential(e, -h, &s.particles, &s.deep).unwrap())
                / (2.0 * h);
            let i0 = cell.exchange_current_density(e, s.particles.profile(e).surface).unwrap();
            let gamma = 1.0 / (2.0 * i0 * m.interfacial_area(e, &s.deep));
            let expected = kinetics::kinetic_voltage_scale(cell.temperature, cell.alpha) * gamma;
            assert!((fd.abs() - expected).abs() < 1e-6 * expected, "{e}");
        }
    }

    #[test]
    fn sei_overpotential_cases() {
        let m = Model::demo();
        let s = m.pristine_cell(0.5).unwrap();
        let u = m.cell().ocp(Electrode::Negative, s.particles.negative.surface / m.cell().negative.c_max).unwrap();
        let rest = m.sei_overpotential(&s.particles, &s.deep, 0.0).unwrap();
        assert!((rest - (u - m.params().degradation.sei.potential)).abs() < 1e-14);
        let charge = m.sei_overpotential(&s.particles, &s.deep, -m.nominal_capacity()).unwrap();
        assert!(charge < rest);
    }

    #[test]
    fn advance_books_side_lithium() {
        let m = Model::demo();
        let s = m.pristine_cell(0.9).unwrap();
        let (x0, _) = m.stoichiometry(&s.particles);
        let before = s.particles.negative.average();
        let (n, _) = m.advance(&s, 0.0, 3600.0, true).unwrap();
        assert!(n.deep.delta_sei > 0.0);
        let lost = (before - n.particles.negative.average()) / m.cell().negative.c_max
            * m.pristine().capacity_neg
            * crate::SECONDS_PER_HOUR
            / FARADAY;
        assert!(((lost - n.deep.lli * m.n_li_0()) / lost).abs() < 1e-9);
        assert!((m.reconstructed_lli(&n) - n.deep.lli).abs() < 1e-15);
        assert!(m.stoichiometry(&n.particles).0 < x0);
    }

    #[test]
    fn cell_at_books_unexplained_lithium_as_lam() {
        let m = Model::demo();
        let deep = DeepSOH {
            delta_sei: 5e-8,
            lli: 0.1,
            ..m.pristine_deep()
        };
        let s = m.cell_at(deep, 1.0).unwrap();
        assert!((m.reconstructed_lli(&s) - 0.1).abs() < 1e-14);
        assert!(s.ledger.lam_moles > 0.0);
    }
}
