//! Butler–Volmer intercalation kinetics.

use crate::{FARADAY, GAS_CONSTANT};

/// Exchange current density, A/m²:
/// `i0 = k0 · c_e^(1−α) · (c_max − c_ss)^(1−α) · c_ss^α`.
pub fn exchange_current_density(rate_constant: f64, c_e: f64, c_max: f64, c_ss: f64, alpha: f64) -> f64 {
    if c_ss <= 0.0 || c_ss >= c_max {
        return 0.0;
    }
    rate_constant * (c_e * (c_max - c_ss)).powf(1.0 - alpha) * c_ss.powf(alpha)
}

/// Prefactor `R·T/((1−α)·F)` shared by the overpotential and the
/// small-signal resistance.
pub fn kinetic_voltage_scale(temperature: f64, alpha: f64) -> f64 {
    GAS_CONSTANT * temperature / ((1.0 - alpha) * FARADAY)
}

/// Overpotential for an interfacial current density `i` (A/m², anodic
/// positive): `η = R·T/((1−α)·F) · asinh(i / (2·i0))`.
///
/// At α = 0.5 this is the inverse of the symmetric Butler–Volmer relation.
/// Returns `None` when `i0 = 0` and the current is nonzero.
pub fn overpotential(current_density: f64, i0: f64, temperature: f64, alpha: f64) -> Option<f64> {
    if current_density == 0.0 {
        return Some(0.0);
    }
    if i0 <= 0.0 {
        return None;
    }
    Some(kinetic_voltage_scale(temperature, alpha) * (current_density / (2.0 * i0)).asinh())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_at_concentration_limits() {
        assert_eq!(exchange_current_density(2e-6, 1000.0, 30_000.0, 0.0, 0.5), 0.0);
        assert_eq!(exchange_current_density(2e-6, 1000.0, 30_000.0, 30_000.0, 0.5), 0.0);
    }

    #[test]
    fn half_filled_closed_form() {
        let (k0, ce, cmax) = (2e-6, 1000.0, 30_000.0);
        let got = exchange_current_density(k0, ce, cmax, cmax / 2.0, 0.5);
        let expected = k0 * (ce * cmax / 2.0 * cmax / 2.0).sqrt();
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn overpotential_is_odd() {
        let a = overpotential(3.0, 1.2, 298.15, 0.5).unwrap();
        let b = overpotential(-3.0, 1.2, 298.15, 0.5).unwrap();
        assert_eq!(a, -b);
        assert_eq!(overpotential(0.0, 0.0, 298.15, 0.5), Some(0.0));
        assert_eq!(overpotential(1.0, 0.0, 298.15, 0.5), None);
    }
}
