//! Output models: eSOH, instantaneous resistance and irreversible expansion.

mod fit;

use serde::{Deserialize, Serialize};

pub use fit::{add_voltage_noise, extract_esoh, EsohFit, SPAN_TOLERANCE};

use crate::cell::{kinetics, CellParameters, Electrode};
use crate::degradation::{DeepSOH, PlatingParameters, SeiParameters};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rootfind;
use crate::{FARADAY, SECONDS_PER_HOUR};

/// Electrode-specific state of health.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ESOHRecord {
    /// Full-cell capacity between the voltage limits, Ah.
    pub capacity: f64,
    pub capacity_pos: f64,
    pub capacity_neg: f64,
    pub x_0: f64,
    pub x_100: f64,
    pub y_0: f64,
    pub y_100: f64,
    /// Cyclable lithium, mol.
    pub n_li: f64,
}

impl ESOHRecord {
    /// Stoichiometries at a state of charge between the two limits.
    pub fn stoichiometry_at(&self, soc: f64) -> (f64, f64) {
        (
            self.x_0 + soc * (self.x_100 - self.x_0),
            self.y_0 + soc * (self.y_100 - self.y_0),
        )
    }
}

/// Cyclable lithium `n_Li = (3600/F)·(x·C_n + y·C_p)`, mol.
pub fn lithium_inventory(x: f64, y: f64, capacity_neg: f64, capacity_pos: f64) -> f64 {
    SECONDS_PER_HOUR / FARADAY * (x * capacity_neg + y * capacity_pos)
}

/// Solves the voltage-window equations
/// `V_max = U+(y_100) − U−(x_100)`, `V_min = U+(y_0) − U−(x_0)` together
/// with lithium conservation for given electrode capacities and inventory.
pub fn solve_esoh(cell: &CellParameters, capacity_pos: f64, capacity_neg: f64, n_li: f64) -> Result<ESOHRecord> {
    if !(capacity_pos > 0.0 && capacity_neg > 0.0 && n_li > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eSOH needs positive capacities and inventory (C_p={capacity_pos}, C_n={capacity_neg}, n_Li={n_li})"
        )));
    }
    let q_li = n_li * FARADAY / SECONDS_PER_HOUR;
    let lo = ((q_li - capacity_pos) / capacity_neg).max(0.0);
    let hi = (q_li / capacity_neg).min(1.0);
    if lo >= hi {
        return Err(Error::InvalidParameter(format!(
            "lithium inventory {n_li} mol does not fit the electrodes"
        )));
    }
    let y_of = |x: f64| ((q_li - x * capacity_neg) / capacity_pos).clamp(0.0, 1.0);
    let solve = |target: f64| {
        rootfind::bracketed(
            |x| Ok(cell.ocv(x, y_of(x))? - target),
            lo,
            hi,
            1e-12,
            1e-15,
        )
        .map_err(|_| {
            Error::InvalidParameter(format!(
                "voltage limit {target} V unreachable with C_p={capacity_pos}, C_n={capacity_neg}, n_Li={n_li}"
            ))
        })
    };
    let x_100 = solve(cell.v_max)?;
    let x_0 = solve(cell.v_min)?;
    let (y_100, y_0) = (y_of(x_100), y_of(x_0));
    Ok(ESOHRecord {
        capacity: capacity_neg * (x_100 - x_0),
        capacity_pos,
        capacity_neg,
        x_0,
        x_100,
        y_0,
        y_100,
        n_li,
    })
}

/// Voltage against discharged capacity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VoltageCurve {
    /// Capacity discharged since the first point, Ah (non-decreasing).
    pub capacity: Vec<f64>,
    pub voltage: Vec<f64>,
}

impl VoltageCurve {
    pub fn len(&self) -> usize {
        self.capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty()
    }

    pub fn total_capacity(&self) -> f64 {
        self.capacity.last().copied().unwrap_or(0.0) - self.capacity.first().copied().unwrap_or(0.0)
    }

    /// Linear interpolation at capacity `q`, `None` outside the curve.
    pub fn voltage_at(&self, q: f64) -> Option<f64> {
        let n = self.capacity.len();
        if n == 0 || q < self.capacity[0] || q > self.capacity[n - 1] {
            return None;
        }
        let k = self.capacity.partition_point(|&c| c <= q).clamp(1, n - 1) - 1;
        let (q0, q1) = (self.capacity[k], self.capacity[k + 1]);
        if q1 == q0 {
            return Some(self.voltage[k]);
        }
        let t = (q - q0) / (q1 - q0);
        Some(self.voltage[k] + t * (self.voltage[k + 1] - self.voltage[k]))
    }

    /// Largest pointwise voltage difference over the shared capacity range,
    /// sampled at the knots of both curves.
    pub fn max_gap(&self, other: &VoltageCurve) -> f64 {
        self.capacity
            .iter()
            .chain(&other.capacity)
            .filter_map(|&q| Some((self.voltage_at(q)? - other.voltage_at(q)?).abs()))
            .fold(0.0, f64::max)
    }
}

/// Open-circuit discharge curve from `V_max` to `V_min` implied by an eSOH.
pub fn ocv_curve(cell: &CellParameters, esoh: &ESOHRecord, points: usize) -> Result<VoltageCurve> {
    let points = points.max(2);
    let mut curve = VoltageCurve::default();
    for i in 0..points {
        let q = esoh.capacity * i as f64 / (points - 1) as f64;
        let x = (esoh.x_100 - q / esoh.capacity_neg).max(esoh.x_0);
        let y = (esoh.y_100 + q / esoh.capacity_pos).min(esoh.y_0);
        curve.capacity.push(q);
        curve.voltage.push(cell.ocv(x, y)?);
    }
    Ok(curve)
}

/// Area-specific film resistance `δ_SEI/κ_SEI + δ_pl/κ_pl`, Ω·m².
pub fn film_resistance_area(state: &DeepSOH, sei: &SeiParameters, plating: &PlatingParameters) -> f64 {
    state.delta_sei / sei.conductivity + state.delta_pl / plating.conductivity
}

/// Small-signal kinetic resistance of both electrodes, Ω:
/// `R·T/((1−α)F)·Σ γ/√((I·γ)² + 1)` with `γ = 1/(2·i0·S)`, using the mean
/// stoichiometries as surface values.
pub fn kinetic_resistance(cell: &CellParameters, state: &DeepSOH, x: f64, y: f64, current: f64) -> Result<f64> {
    let scale = kinetics::kinetic_voltage_scale(cell.temperature, cell.alpha);
    let mut total = 0.0;
    for (electrode, sto) in [(Electrode::Positive, y), (Electrode::Negative, x)] {
        let p = cell.electrode(electrode);
        if !(sto > 0.0 && sto < 1.0) {
            return Err(Error::KineticsSingular { electrode });
        }
        let i0 = cell.exchange_current_density(electrode, sto * p.c_max)?;
        let gamma = 1.0 / (2.0 * i0 * p.interfacial_area(cell.area, state.capacity(electrode)));
        total += gamma / ((current * gamma).powi(2) + 1.0).sqrt();
    }
    Ok(scale * total)
}

/// Instantaneous resistance `R_s = R_film + h4(C_p, C_n)` at stoichiometry
/// `(x, y)` and current `I`, cell-level ohms.
pub fn instantaneous_resistance(model: &Model, state: &DeepSOH, x: f64, y: f64, current: f64) -> Result<f64> {
    Ok(model.film_resistance(state) + kinetic_resistance(&model.params().cell, state, x, y, current)?)
}

/// Scaling coefficients of the irreversible-expansion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionParameters {
    /// Expansion per metre of SEI, m/m.
    pub sei: f64,
    /// Expansion per square metre of plated film, 1/m.
    pub plating: f64,
    /// Expansion at full loss of positive active material, m.
    pub lam_pos: f64,
    /// Expansion at full loss of negative active material, m.
    pub lam_neg: f64,
}

impl ExpansionParameters {
    pub fn demo() -> Self {
        Self {
            sei: 20.0,
            plating: 1.0e8,
            lam_pos: 2.0e-6,
            lam_neg: 4.0e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("expansion sei", self.sei),
            ("expansion plating", self.plating),
            ("expansion lam_pos", self.lam_pos),
            ("expansion lam_neg", self.lam_neg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Contribution of active-material loss to expansion, `h5(C_p, C_n)`, m.
pub fn lam_expansion(p: &ExpansionParameters, capacity_pos: f64, capacity_neg: f64, nominal_pos: f64, nominal_neg: f64) -> f64 {
    p.lam_pos * (1.0 - capacity_pos / nominal_pos) + p.lam_neg * (1.0 - capacity_neg / nominal_neg)
}

/// Irreversible expansion
/// `δ_irr = b_SEI·δ_SEI + b_pl·δ_pl² + b+·LAM+ + b−·LAM−`, m.
pub fn irreversible_expansion(p: &ExpansionParameters, state: &DeepSOH, nominal_pos: f64, nominal_neg: f64) -> f64 {
    p.sei * state.delta_sei
        + p.plating * state.delta_pl * state.delta_pl
        + lam_expansion(p, state.capacity_pos, state.capacity_neg, nominal_pos, nominal_neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::DegradationParameters;

    fn pristine() -> DeepSOH {
        DeepSOH {
            delta_sei: 0.0,
            delta_pl: 0.0,
            capacity_pos: 4.52,
            capacity_neg: 5.5,
            lli: 0.0,
        }
    }

    #[test]
    fn esoh_window_equations_hold() {
        let cell = CellParameters::demo();
        let n = lithium_inventory(0.8, 0.03, 5.5, 4.52);
        let r = solve_esoh(&cell, 4.52, 5.5, n).unwrap();
        assert!((cell.ocv(r.x_100, r.y_100).unwrap() - cell.v_max).abs() < 1e-10);
        assert!((cell.ocv(r.x_0, r.y_0).unwrap() - cell.v_min).abs() < 1e-10);
        let c_pos = r.capacity_pos * (r.y_0 - r.y_100);
        assert!((r.capacity - c_pos).abs() < 1e-9);
        assert!(r.x_0 < r.x_100 && r.y_100 < r.y_0);
        let n100 = lithium_inventory(r.x_100, r.y_100, 5.5, 4.52);
        let n0 = lithium_inventory(r.x_0, r.y_0, 5.5, 4.52);
        assert!((n100 - n).abs() < 1e-12 && (n0 - n).abs() < 1e-12);
    }

    #[test]
    fn esoh_rejects_oversized_inventory() {
        let cell = CellParameters::demo();
        assert!(solve_esoh(&cell, 4.52, 5.5, 10.0).is_err());
    }

    #[test]
    fn film_resistance_linear() {
        let d = DegradationParameters::demo();
        let mut s = pristine();
        assert_eq!(film_resistance_area(&s, &d.sei, &d.plating), 0.0);
        s.delta_sei = 3e-8;
        s.delta_pl = 1e-8;
        let r1 = film_resistance_area(&s, &d.sei, &d.plating);
        s.delta_sei *= 2.0;
        s.delta_pl *= 2.0;
        assert!((film_resistance_area(&s, &d.sei, &d.plating) - 2.0 * r1).abs() < 1e-15);
        // iso-resistance: all SEI vs all plating
        let a = DeepSOH { delta_sei: 4e-8, ..pristine() };
        let b = DeepSOH {
            delta_pl: 4e-8 * d.plating.conductivity / d.sei.conductivity,
            ..pristine()
        };
        let (ra, rb) = (film_resistance_area(&a, &d.sei, &d.plating), film_resistance_area(&b, &d.sei, &d.plating));
        assert!((ra - rb).abs() < 1e-15 * ra);
    }

    #[test]
    fn kinetic_resistance_decreases_with_current() {
        let cell = CellParameters::demo();
        let s = pristine();
        let r0 = kinetic_resistance(&cell, &s, 0.5, 0.5, 0.0).unwrap();
        let r1 = kinetic_resistance(&cell, &s, 0.5, 0.5, 2.0).unwrap();
        let r2 = kinetic_resistance(&cell, &s, 0.5, 0.5, -5.0).unwrap();
        assert!(r0 > r1 && r1 > r2);
        assert!(matches!(
            kinetic_resistance(&cell, &s, 0.0, 0.5, 0.0),
            Err(Error::KineticsSingular { electrode: Electrode::Negative })
        ));
    }

    #[test]
    fn expansion_terms_isolate() {
        let p = ExpansionParameters::demo();
        assert_eq!(irreversible_expansion(&p, &pristine(), 4.52, 5.5), 0.0);
        let s = DeepSOH { delta_sei: 5e-8, ..pristine() };
        assert_eq!(irreversible_expansion(&p, &s, 4.52, 5.5), p.sei * 5e-8);
        let a = DeepSOH { delta_pl: 1e-8, ..pristine() };
        let b = DeepSOH { delta_pl: 2e-8, ..pristine() };
        let ea = irreversible_expansion(&p, &a, 4.52, 5.5);
        let eb = irreversible_expansion(&p, &b, 4.52, 5.5);
        assert!((eb / ea - 4.0).abs() < 1e-12);
    }

    #[test]
    fn curve_gap() {
        let a = VoltageCurve {
            capacity: vec![0.0, 1.0, 2.0],
            voltage: vec![4.0, 3.8, 3.5],
        };
        let mut b = a.clone();
        b.voltage[1] += 0.003;
        assert!((a.max_gap(&b) - 0.003).abs() < 1e-12);
        assert_eq!(a.max_gap(&a), 0.0);
    }
}
