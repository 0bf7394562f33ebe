//! Least-squares eSOH extraction from a pseudo-OCV discharge curve.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, OMatrix, OVector, U4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{lithium_inventory, solve_esoh, ESOHRecord, VoltageCurve};
use crate::cell::CellParameters;
use crate::error::{Error, Result};

/// How far (V) the curve ends may sit inside the voltage window and still
/// count as spanning it.
pub const SPAN_TOLERANCE: f64 = 0.05;

/// Fits with an RMS residual above this are rejected.
const MAX_RESIDUAL_RMS: f64 = 0.02;

/// Points used in the fit; longer curves are resampled.
const FIT_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct EsohFit {
    pub record: ESOHRecord,
    /// RMS voltage residual of the fitted curve, V.
    pub residual_rms: f64,
    pub points: usize,
}

struct CurveProblem<'a> {
    cell: &'a CellParameters,
    q: Vec<f64>,
    v: Vec<f64>,
    /// `[C_p, C_n, x_100, y_100]`
    p: OVector<f64, U4>,
}

impl CurveProblem<'_> {
    fn stoichiometry(&self, q: f64) -> (f64, f64) {
        (self.p[2] - q / self.p[1], self.p[3] + q / self.p[0])
    }
}

impl LeastSquaresProblem<f64, Dyn, U4> for CurveProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, p: &OVector<f64, U4>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> OVector<f64, U4> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        if !(self.p[0] > 0.0 && self.p[1] > 0.0) {
            return None;
        }
        let (pos, neg) = (&self.cell.positive.ocp, &self.cell.negative.ocp);
        Some(DVector::from_iterator(
            self.q.len(),
            self.q.iter().zip(&self.v).map(|(&q, &v)| {
                let (x, y) = self.stoichiometry(q);
                pos.eval_extrapolated(y) - neg.eval_extrapolated(x) - v
            }),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        if !(self.p[0] > 0.0 && self.p[1] > 0.0) {
            return None;
        }
        let (pos, neg) = (&self.cell.positive.ocp, &self.cell.negative.ocp);
        let (cp, cn) = (self.p[0], self.p[1]);
        let mut jac = OMatrix::<f64, Dyn, U4>::zeros(self.q.len());
        for (i, &q) in self.q.iter().enumerate() {
            let (x, y) = self.stoichiometry(q);
            let du_pos = pos.derivative(y);
            let du_neg = neg.derivative(x);
            jac[(i, 0)] = -du_pos * q / (cp * cp);
            jac[(i, 1)] = -du_neg * q / (cn * cn);
            jac[(i, 2)] = -du_neg;
            jac[(i, 3)] = du_pos;
        }
        Some(jac)
    }
}

/// Resamples a curve to `n` points evenly spaced in capacity.
fn resample(curve: &VoltageCurve, n: usize) -> (Vec<f64>, Vec<f64>) {
    if curve.len() <= n {
        return (curve.capacity.clone(), curve.voltage.clone());
    }
    let q0 = curve.capacity[0];
    let total = curve.total_capacity();
    (0..n)
        .map(|i| {
            let q = q0 + total * i as f64 / (n - 1) as f64;
            (q - q0, curve.voltage_at(q).unwrap_or(curve.voltage[curve.len() - 1]))
        })
        .unzip()
}

/// Extracts `(C_p, C_n, x, y)` from a discharge pseudo-OCV curve running
/// from `V_max` down to `V_min`.
///
/// The whole curve shape is fitted with Levenberg–Marquardt from several
/// starts derived from `guess` (typically the nominal eSOH). The window
/// endpoints are then re-solved exactly from the fitted capacities and
/// lithium inventory.
pub fn extract_esoh(cell: &CellParameters, curve: &VoltageCurve, guess: &ESOHRecord) -> Result<EsohFit> {
    if curve.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "pseudo-OCV curve needs at least 10 points, got {}",
            curve.len()
        )));
    }
    if curve.capacity.windows(2).any(|w| w[1] < w[0]) || curve.voltage.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "pseudo-OCV capacity must be non-decreasing and voltages finite".into(),
        ));
    }
    let (v_first, v_last) = (curve.voltage[0], curve.voltage[curve.len() - 1]);
    if v_first < cell.v_max - SPAN_TOLERANCE || v_last > cell.v_min + SPAN_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "pseudo-OCV curve runs {v_first:.4} V to {v_last:.4} V and does not span the window {} V to {} V",
            cell.v_max, cell.v_min
        )));
    }

    let (q, v) = resample(curve, FIT_POINTS);
    let scale = curve.total_capacity() / guess.capacity;
    let mut best: Option<(OVector<f64, U4>, f64)> = None;
    for (dx, dy) in [(0.0, 0.0), (-0.05, 0.0), (0.05, 0.0), (0.0, 0.03), (-0.05, 0.03), (0.05, -0.01)] {
        let start = OVector::<f64, U4>::new(
            guess.capacity_pos * scale,
            guess.capacity_neg * scale,
            (guess.x_100 + dx).clamp(0.05, 0.99),
            (guess.y_100 + dy).clamp(0.0, 0.9),
        );
        let problem = CurveProblem {
            cell,
            q: q.clone(),
            v: v.clone(),
            p: start,
        };
        let (solved, _report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
        let Some(r) = solved.residuals() else { continue };
        let rms = (r.norm_squared() / r.len() as f64).sqrt();
        if best.as_ref().is_none_or(|(_, b)| rms < *b) {
            best = Some((solved.p, rms));
        }
    }
    let (p, rms) = best.ok_or_else(|| Error::EstimationFailed {
        reason: "no start produced a finite fit".into(),
        residual_rms: f64::NAN,
    })?;
    if !(rms <= MAX_RESIDUAL_RMS) {
        return Err(Error::EstimationFailed {
            reason: "fit did not reproduce the curve".into(),
            residual_rms: rms,
        });
    }
    let (c_p, c_n, x_100, y_100) = (p[0], p[1], p[2], p[3]);
    let n_li = lithium_inventory(x_100, y_100, c_n, c_p);
    let record = solve_esoh(cell, c_p, c_n, n_li).map_err(|e| Error::EstimationFailed {
        reason: format!("fitted parameters inconsistent with the voltage window: {e}"),
        residual_rms: rms,
    })?;
    Ok(EsohFit {
        record,
        residual_rms: rms,
        points: q.len(),
    })
}

/// Copy of `curve` with i.i.d. Gaussian voltage noise of standard deviation
/// `sigma` (V). Deterministic for a given seed.
pub fn add_voltage_noise(curve: &VoltageCurve, sigma: f64, seed: u64) -> Result<VoltageCurve> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(VoltageCurve {
        capacity: curve.capacity.clone(),
        voltage: curve.voltage.iter().map(|v| v + normal.sample(&mut rng)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::ocv_curve;

    fn nominal(cell: &CellParameters) -> ESOHRecord {
        solve_esoh(cell, 4.52, 5.5, lithium_inventory(0.8, 0.03, 5.5, 4.52)).unwrap()
    }

    #[test]
    fn recovers_synthetic_cell() {
        let cell = CellParameters::demo();
        let truth = solve_esoh(&cell, 4.2, 5.1, lithium_inventory(0.74, 0.05, 5.1, 4.2)).unwrap();
        let curve = ocv_curve(&cell, &truth, 300).unwrap();
        let fit = extract_esoh(&cell, &curve, &nominal(&cell)).unwrap();
        for (a, b) in [
            (fit.record.capacity_pos, truth.capacity_pos),
            (fit.record.capacity_neg, truth.capacity_neg),
            (fit.record.x_0, truth.x_0),
            (fit.record.y_0, truth.y_0),
        ] {
            assert!(((a - b) / b).abs() < 5e-3, "{a} vs {b}");
        }
        assert!(fit.residual_rms < 1e-4);
    }

    #[test]
    fn rejects_partial_curve() {
        let cell = CellParameters::demo();
        let nom = nominal(&cell);
        let mut curve = ocv_curve(&cell, &nom, 200).unwrap();
        curve.capacity.truncate(100);
        curve.voltage.truncate(100);
        assert!(matches!(extract_esoh(&cell, &curve, &nom), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn noise_is_seeded() {
        let cell = CellParameters::demo();
        let curve = ocv_curve(&cell, &nominal(&cell), 50).unwrap();
        let a = add_voltage_noise(&curve, 1e-3, 7).unwrap();
        let b = add_voltage_noise(&curve, 1e-3, 7).unwrap();
        let c = add_voltage_noise(&curve, 1e-3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
