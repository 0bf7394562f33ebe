//! Open-circuit potential tables with shape-preserving interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of rows accepted from a table file.
pub const MIN_TABLE_ROWS: usize = 20;

/// Voltage-vs-stoichiometry table covering `[0, 1]`, strictly decreasing.
///
/// Evaluation uses piecewise cubic Hermite interpolation with
/// Fritsch–Carlson slopes, which is exact at the knots and never leaves the
/// bracket of adjacent knot voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct OcpTable {
    sto: Vec<f64>,
    volts: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    stoichiometry: Vec<f64>,
    volts: Vec<f64>,
}

impl TryFrom<RawTable> for OcpTable {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        OcpTable::new(raw.stoichiometry, raw.volts)
    }
}

impl From<OcpTable> for RawTable {
    fn from(t: OcpTable) -> Self {
        RawTable {
            stoichiometry: t.sto,
            volts: t.volts,
        }
    }
}

impl OcpTable {
    pub fn new(sto: Vec<f64>, volts: Vec<f64>) -> Result<Self> {
        if sto.len() != volts.len() {
            return Err(Error::InvalidParameter(
                "OCP table columns differ in length".into(),
            ));
        }
        if sto.len() < 2 {
            return Err(Error::InvalidParameter("OCP table needs at least two rows".into()));
        }
        if sto.iter().chain(&volts).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("OCP table contains non-finite values".into()));
        }
        if sto.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "OCP table stoichiometry must be strictly increasing".into(),
            ));
        }
        if volts.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter(
                "OCP table voltage must be strictly decreasing in stoichiometry".into(),
            ));
        }
        if sto[0].abs() > 1e-9 || (sto[sto.len() - 1] - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "OCP table must span stoichiometry 0 to 1".into(),
            ));
        }
        let slopes = pchip_slopes(&sto, &volts);
        Ok(Self { sto, volts, slopes })
    }

    /// Parses the two-column text format: `stoichiometry volts` per line,
    /// whitespace or comma separated, `#` comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sto = Vec::new();
        let mut volts = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected two columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number {s:?}: {e}"),
                })
            };
            sto.push(parse(fields[0])?);
            volts.push(parse(fields[1])?);
        }
        if sto.len() < MIN_TABLE_ROWS {
            return Err(Error::Parse {
                line: text.lines().count(),
                message: format!(
                    "OCP table has {} rows, at least {MIN_TABLE_ROWS} required",
                    sto.len()
                ),
            });
        }
        Self::new(sto, volts)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.sto.iter().copied().zip(self.volts.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.sto.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sto.is_empty()
    }

    /// Interpolated voltage, `None` outside `[0, 1]`.
    pub fn eval(&self, s: f64) -> Option<f64> {
        if !(0.0..=1.0).contains(&s) {
            return None;
        }
        Some(self.hermite(s))
    }

    /// Same as [`eval`](Self::eval) inside the table, extended linearly with
    /// the end slopes outside it. Used by fitting routines whose trial
    /// points may wander past the physical range.
    pub fn eval_extrapolated(&self, s: f64) -> f64 {
        let n = self.sto.len();
        if s < self.sto[0] {
            self.volts[0] + self.slopes[0] * (s - self.sto[0])
        } else if s > self.sto[n - 1] {
            self.volts[n - 1] + self.slopes[n - 1] * (s - self.sto[n - 1])
        } else {
            self.hermite(s)
        }
    }

    /// dU/ds of the interpolant.
    pub fn derivative(&self, s: f64) -> f64 {
        let s = s.clamp(self.sto[0], self.sto[self.sto.len() - 1]);
        let k = self.interval(s);
        let h = self.sto[k + 1] - self.sto[k];
        let t = (s - self.sto[k]) / h;
        let (y0, y1) = (self.volts[k], self.volts[k + 1]);
        let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
        let dh00 = 6.0 * t * t - 6.0 * t;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * t * t - 2.0 * t;
        (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
    }

    fn interval(&self, s: f64) -> usize {
        let n = self.sto.len();
        self.sto.partition_point(|&k| k <= s).clamp(1, n - 1) - 1
    }

    fn hermite(&self, s: f64) -> f64 {
        let k = self.interval(s);
        let h = self.sto[k + 1] - self.sto[k];
        let t = (s - self.sto[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.volts[k] + h10 * h * self.slopes[k] + h01 * self.volts[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

// One-sided three-point estimate, limited to keep the end interval monotone.
fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> OcpTable {
        let sto: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let volts = sto.iter().map(|s| 4.2 - 1.2 * s - 0.1 * (10.0 * s).sin() * 0.01).collect();
        OcpTable::new(sto, volts).unwrap()
    }

    #[test]
    fn exact_at_knots() {
        let t = table();
        for (s, v) in t.knots() {
            assert_eq!(t.eval(s).unwrap(), v);
        }
    }

    #[test]
    fn between_knots_bracketed() {
        let t = table();
        let v = t.eval(0.5 + 0.025).unwrap();
        let lo = t.eval(0.55).unwrap();
        let hi = t.eval(0.5).unwrap();
        assert!(v < hi && v > lo);
    }

    #[test]
    fn out_of_range() {
        let t = table();
        assert!(t.eval(1.05).is_none());
        assert!(t.eval(-1e-9).is_none());
    }

    #[test]
    fn rejects_non_monotone() {
        let err = OcpTable::new(vec![0.0, 0.5, 1.0], vec![1.0, 1.1, 0.5]).unwrap_err();
        assert!(err.to_string().contains("strictly decreasing"));
    }

    #[test]
    fn parse_reports_line() {
        let mut text = String::from("# header\n");
        for i in 0..25 {
            text.push_str(&format!("{} {}\n", i as f64 / 24.0, 1.0 - i as f64 / 48.0));
        }
        text.push_str("0.5 abc\n");
        match OcpTable::parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 27),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_requires_twenty_rows() {
        let text = "0 1\n0.5 0.8\n1 0.2\n";
        assert!(matches!(OcpTable::parse(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let t = table();
        for &s in &[0.13, 0.41, 0.77] {
            let h = 1e-6;
            let fd = (t.eval(s + h).unwrap() - t.eval(s - h).unwrap()) / (2.0 * h);
            assert!((fd - t.derivative(s)).abs() < 1e-5);
        }
    }

    #[test]
    fn shipped_tables_are_monotone_everywhere() {
        for text in [crate::cell::GRAPHITE_OCP, crate::cell::NMC_OCP] {
            let t = OcpTable::parse(text).unwrap();
            let mut prev = f64::INFINITY;
            for i in 0..=20_000 {
                let v = t.eval(i as f64 / 20_000.0).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }
}
