//! File formats: versioned JSON state files and CSV series.
//!
//! Floats are written in Rust's shortest round-trip form (`{:?}`), so
//! output is full precision and locale independent.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::VoltageCurve;
use crate::model::CellState;
use crate::protocol::{CycleRecord, Sample};

pub const STATE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub version: u32,
    pub state: CellState,
}

pub fn write_state(path: &Path, state: &CellState) -> Result<()> {
    let file = StateFile {
        version: STATE_FORMAT_VERSION,
        state: state.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

pub fn read_state(path: &Path) -> Result<CellState> {
    let text = std::fs::read_to_string(path)?;
    let file: StateFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })?;
    if file.version != STATE_FORMAT_VERSION {
        return Err(Error::InvalidParameter(format!(
            "{}: state format version {} is not supported (expected {STATE_FORMAT_VERSION})",
            path.display(),
            file.version
        )));
    }
    file.state.deep.validate()?;
    Ok(file.state)
}

pub const SAMPLE_HEADER: &str = "time_s,cycle,step,current_a,voltage_v,x,y";

pub fn write_samples(w: &mut impl Write, samples: &[Sample]) -> Result<()> {
    writeln!(w, "{SAMPLE_HEADER}")?;
    for s in samples {
        writeln!(w, "{:?},{},{},{:?},{:?},{:?},{:?}", s.time, s.cycle, s.step, s.current, s.voltage, s.x, s.y)?;
    }
    Ok(())
}

pub const CYCLE_HEADER: &str = "cycle,time_s,capacity_ah,resistance_ohm,expansion_m,delta_sei_m,delta_pl_m,capacity_pos_ah,capacity_neg_ah,lli,lli_reconstructed";

pub fn write_cycles(w: &mut impl Write, cycles: &[CycleRecord]) -> Result<()> {
    writeln!(w, "{CYCLE_HEADER}")?;
    for c in cycles {
        let d = &c.deep;
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            c.cycle,
            c.time,
            c.capacity,
            c.resistance,
            c.expansion,
            d.delta_sei,
            d.delta_pl,
            d.capacity_pos,
            d.capacity_neg,
            d.lli,
            c.lli_reconstructed
        )?;
    }
    Ok(())
}

pub const CURVE_HEADER: &str = "capacity_ah,voltage_v";

pub fn write_curve(w: &mut impl Write, curve: &VoltageCurve) -> Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for (q, v) in curve.capacity.iter().zip(&curve.voltage) {
        writeln!(w, "{q:?},{v:?}")?;
    }
    Ok(())
}

/// Reads a two-column `capacity,voltage` CSV. A non-numeric first line is
/// taken as a header; `#` lines are comments.
pub fn read_curve(r: impl BufRead) -> Result<VoltageCurve> {
    let mut curve = VoltageCurve::default();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => {
                curve.capacity.push(v[0]);
                curve.voltage.push(v[1]);
            }
            None if curve.is_empty() && k == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("expected `capacity,voltage`, got `{t}`"),
                })
            }
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    #[test]
    fn state_round_trip() {
        let m = Model::demo();
        let s = m.pristine_cell(0.3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        write_state(&p, &s).unwrap();
        assert_eq!(read_state(&p).unwrap(), s);
    }

    #[test]
    fn state_version_checked() {
        let m = Model::demo();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        write_state(&p, &m.pristine_cell(0.3).unwrap()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replace("\"version\": 1", "\"version\": 9");
        std::fs::write(&p, text).unwrap();
        assert!(read_state(&p).unwrap_err().is_input_error());
    }

    #[test]
    fn curve_round_trip_exact() {
        let c = VoltageCurve {
            capacity: vec![0.0, 0.1, 1.0 / 3.0],
            voltage: vec![4.2, 4.1234567890123, 3.0],
        };
        let mut buf = Vec::new();
        write_curve(&mut buf, &c).unwrap();
        assert_eq!(read_curve(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn curve_error_has_line() {
        let text = "capacity_ah,voltage_v\n0,4.2\n0.1,abc\n";
        match read_curve(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
