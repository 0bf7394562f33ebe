//! Radial solid diffusion in a spherical particle.
//!
//! Finite volumes on equal-width shells, backward Euler in time. The
//! scheme conserves moles exactly: the only source term is the surface
//! flux, applied to the outermost shell.

use serde::{Deserialize, Serialize};

use super::Electrode;
use crate::error::{Error, Result};

/// Concentration profile of one representative particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleProfile {
    /// Shell-average concentrations from the centre outwards, mol/m³.
    pub conc: Vec<f64>,
    /// Surface concentration, mol/m³, consistent with the last applied flux.
    pub surface: f64,
}

impl ParticleProfile {
    pub fn uniform(shells: usize, c: f64) -> Self {
        Self {
            conc: vec![c; shells],
            surface: c,
        }
    }

    pub fn shells(&self) -> usize {
        self.conc.len()
    }

    /// Volume-weighted mean concentration.
    pub fn average(&self) -> f64 {
        let n = self.conc.len() as f64;
        self.conc
            .iter()
            .enumerate()
            .map(|(i, c)| shell_volume(i, n) * c)
            .sum::<f64>()
            * 3.0
    }

    /// Total moles held in a particle of radius `radius`.
    pub fn moles(&self, radius: f64) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * radius.powi(3) * self.average()
    }

    /// Advances the profile by `dt` with a constant outward molar flux
    /// (`flux_out` > 0 removes lithium through the surface).
    pub fn diffuse(
        &self,
        electrode: Electrode,
        radius: f64,
        diffusivity: f64,
        c_max: f64,
        flux_out: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) || !flux_out.is_finite() {
            return Err(Error::Numerical(format!(
                "particle step needs dt > 0 and finite flux (dt={dt}, flux={flux_out})"
            )));
        }
        let n = self.conc.len();
        let nf = n as f64;
        let dr = 1.0 / nf;
        // Normalised radius: volumes scale with R³, face areas with R².
        let k = dt * diffusivity / (radius * radius * dr);
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let vol = shell_volume(i, nf);
            let inner = if i == 0 { 0.0 } else { (i as f64 * dr).powi(2) };
            let outer = if i == n - 1 { 0.0 } else { ((i + 1) as f64 * dr).powi(2) };
            lower[i] = -k * inner;
            upper[i] = -k * outer;
            diag[i] = vol + k * (inner + outer);
            rhs[i] = vol * self.conc[i];
        }
        rhs[n - 1] -= dt * flux_out / radius;
        let conc = solve_tridiagonal(&lower, &diag, &upper, rhs);
        let surface = conc[n - 1] - flux_out * 0.5 * dr * radius / diffusivity;

        let check = |value: f64| {
            if !(0.0..=c_max).contains(&value) {
                Err(Error::Saturation {
                    electrode,
                    value,
                    c_max,
                })
            } else {
                Ok(())
            }
        };
        for &c in &conc {
            check(c)?;
        }
        check(surface)?;
        Ok(Self { conc, surface })
    }
}

/// Normalised shell volume `(r_{i+1}³ − r_i³)/3` on the unit sphere.
fn shell_volume(i: usize, n: f64) -> f64 {
    let a = i as f64 / n;
    let b = (i + 1) as f64 / n;
    (b * b * b - a * a * a) / 3.0
}

/// Thomas algorithm; the diffusion matrix is diagonally dominant so no
/// pivoting is needed.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], mut rhs: Vec<f64>) -> Vec<f64> {
    let n = diag.len();
    let mut c_prime = vec![0.0; n];
    let mut denom = diag[0];
    c_prime[0] = upper[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c_prime[i - 1];
        c_prime[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_prime[i] * rhs[i + 1];
    }
    rhs
}

/// Both particles of the single-particle model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub positive: ParticleProfile,
    pub negative: ParticleProfile,
}

impl ParticleState {
    pub fn profile(&self, electrode: Electrode) -> &ParticleProfile {
        match electrode {
            Electrode::Positive => &self.positive,
            Electrode::Negative => &self.negative,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: f64 = 5e-6;
    const D: f64 = 1e-13;
    const CMAX: f64 = 30_000.0;

    fn step(p: &ParticleProfile, flux: f64, dt: f64) -> ParticleProfile {
        p.diffuse(Electrode::Negative, R, D, CMAX, flux, dt).unwrap()
    }

    #[test]
    fn zero_flux_keeps_uniform_profile() {
        let p = ParticleProfile::uniform(20, 12_000.0);
        let q = step(&p, 0.0, 1234.0);
        for c in &q.conc {
            assert!((c - 12_000.0).abs() < 1e-9);
        }
        assert!((q.surface - 12_000.0).abs() < 1e-9);
    }

    #[test]
    fn average_change_matches_divergence_theorem() {
        let p = ParticleProfile::uniform(20, 12_000.0);
        let f = 2e-6;
        let dt = 5.0;
        let q = step(&p, f, dt);
        let expected = -3.0 * f * dt / R;
        let got = q.average() - p.average();
        assert!(((got - expected) / expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn mass_conserved_over_many_steps() {
        let mut p = ParticleProfile::uniform(20, 15_000.0);
        let m0 = p.moles(R);
        let mut removed = 0.0;
        let area = 4.0 * std::f64::consts::PI * R * R;
        for k in 0..1000 {
            let f = 1e-6 * ((k as f64) * 0.05).sin();
            let dt = 3.0 + (k % 7) as f64;
            p = step(&p, f, dt);
            removed += f * area * dt;
        }
        let drift = (p.moles(R) + removed - m0) / m0;
        assert!(drift.abs() < 1e-6, "drift {drift}");
    }

    #[test]
    fn surface_matches_ten_times_finer_mesh() {
        let f = 3e-6;
        let run = |shells: usize, dt: f64| {
            let mut p = ParticleProfile::uniform(shells, 15_000.0);
            let steps = (600.0 / dt).round() as usize;
            for _ in 0..steps {
                p = p.diffuse(Electrode::Negative, R, D, CMAX, f, dt).unwrap();
            }
            p.surface
        };
        let coarse = run(20, 10.0);
        let fine = run(200, 1.0);
        let rel = ((coarse - fine) / fine).abs();
        assert!(rel < 5e-3, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn saturation_is_an_error_not_a_clamp() {
        let p = ParticleProfile::uniform(20, 100.0);
        match p.diffuse(Electrode::Negative, R, D, CMAX, 1e-3, 100.0) {
            Err(Error::Saturation { electrode, .. }) => assert_eq!(electrode, Electrode::Negative),
            other => panic!("expected saturation, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_positive_dt() {
        let p = ParticleProfile::uniform(20, 100.0);
        assert!(p.diffuse(Electrode::Negative, R, D, CMAX, 0.0, 0.0).is_err());
    }
}
