//! TOML protocol files.
//!
//! ```toml
//! [campaign]
//! rpt_every = 50
//! eol_capacity_fraction = 0.7
//! max_cycles = 500
//!
//! [[step]]
//! mode = "discharge"        # discharge | charge | cv | rest
//! current = "C/5"           # "C/5", "0.5C" or amps as a number
//! until = ["voltage <= 3.0"]
//!
//! [[step]]
//! mode = "cv"
//! voltage = 4.2
//! until = ["current <= C/100", "time >= 4h"]
//! ```
//!
//! Times accept `s`, `min` and `h` suffixes (seconds when bare).

use serde::Deserialize;

use super::{Campaign, Comparator, Level, ProtocolStep, Quantity, StepMode, Termination};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignSection {
    #[serde(default = "default_rpt_every")]
    rpt_every: usize,
    #[serde(default = "default_eol")]
    eol_capacity_fraction: f64,
    #[serde(default = "default_max_cycles")]
    max_cycles: usize,
    #[serde(default)]
    record_every: usize,
}

fn default_rpt_every() -> usize {
    50
}
fn default_eol() -> f64 {
    0.7
}
fn default_max_cycles() -> usize {
    500
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawLevel {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    mode: String,
    current: Option<RawLevel>,
    voltage: Option<f64>,
    #[serde(default)]
    until: Vec<String>,
}

/// Raw contents of a protocol file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFile {
    campaign: Option<CampaignSection>,
    #[serde(default)]
    step: Vec<RawStep>,
}

/// Parses and validates a protocol file. Syntax errors carry the line
/// number; semantic errors name the offending step.
pub fn parse_protocol(text: &str) -> Result<Campaign> {
    let file: ProtocolFile = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    let c = file.campaign.unwrap_or(CampaignSection {
        rpt_every: default_rpt_every(),
        eol_capacity_fraction: default_eol(),
        max_cycles: default_max_cycles(),
        record_every: 0,
    });
    let cycle = file
        .step
        .iter()
        .enumerate()
        .map(|(k, raw)| convert_step(k + 1, raw))
        .collect::<Result<Vec<_>>>()?;
    let campaign = Campaign {
        cycle,
        rpt_every: c.rpt_every,
        eol_capacity_fraction: c.eol_capacity_fraction,
        max_cycles: c.max_cycles,
        record_every: c.record_every,
    };
    campaign.validate()?;
    Ok(campaign)
}

/// Maps a TOML error to a line-numbered parse error.
pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        line,
        message: e.message().to_string(),
    }
}

fn convert_step(step: usize, raw: &RawStep) -> Result<ProtocolStep> {
    let fail = |reason: String| Error::InvalidProtocol { step, reason };
    let until = raw
        .until
        .iter()
        .map(|t| parse_termination(t).map_err(|r| fail(format!("termination `{t}`: {r}"))))
        .collect::<Result<Vec<_>>>()?;
    let current = || -> Result<Level> {
        match &raw.current {
            None => Err(fail(format!("{} step needs `current`", raw.mode))),
            Some(RawLevel::Number(a)) => Ok(Level::Absolute(*a)),
            Some(RawLevel::Text(s)) => parse_level(s).map_err(|r| fail(format!("current `{s}`: {r}"))),
        }
    };
    let mode = match raw.mode.as_str() {
        "discharge" => StepMode::Discharge(current()?),
        "charge" => StepMode::Charge(current()?),
        "cv" => StepMode::ConstantVoltage(raw.voltage.ok_or_else(|| fail("cv step needs `voltage`".into()))?),
        "rest" => StepMode::Rest,
        other => {
            return Err(fail(format!(
                "unknown mode `{other}` (expected discharge, charge, cv or rest)"
            )))
        }
    };
    if raw.voltage.is_some() && !matches!(mode, StepMode::ConstantVoltage(_)) {
        return Err(fail(format!("`voltage` is only valid on cv steps, not {}", raw.mode)));
    }
    if raw.current.is_some() && !matches!(mode, StepMode::Discharge(_) | StepMode::Charge(_)) {
        return Err(fail(format!("`current` is not valid on {} steps", raw.mode)));
    }
    let s = ProtocolStep { mode, until };
    s.validate(step)?;
    Ok(s)
}

/// `"C/5"`, `"0.5C"`, `"2 A"` or a bare number of amps.
fn parse_level(s: &str) -> std::result::Result<Level, String> {
    let t = s.trim();
    let number = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("cannot read `{v}` as a number"));
    if let Some(d) = t.strip_prefix("C/") {
        return Ok(Level::CRate(1.0 / number(d)?));
    }
    if let Some(c) = t.strip_suffix('C') {
        return Ok(Level::CRate(number(c)?));
    }
    if let Some(a) = t.strip_suffix('A') {
        return Ok(Level::Absolute(number(a)?));
    }
    Ok(Level::Absolute(number(t)?))
}

fn parse_seconds(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let (value, scale) = if let Some(v) = t.strip_suffix("min") {
        (v, 60.0)
    } else if let Some(v) = t.strip_suffix('h') {
        (v, 3600.0)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        (t, 1.0)
    };
    value
        .trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| format!("cannot read `{t}` as a duration"))
}

/// `"<quantity> <op> <value>"` with op one of `<=`, `>=`, `<`, `>`.
fn parse_termination(s: &str) -> std::result::Result<Termination, String> {
    let mut parts = s.split_whitespace();
    let (Some(q), Some(op)) = (parts.next(), parts.next()) else {
        return Err("expected `<quantity> <op> <value>`".into());
    };
    let value: String = parts.collect::<Vec<_>>().join(" ");
    if value.is_empty() {
        return Err("missing threshold".into());
    }
    let comparator = match op {
        "<=" | "<" => Comparator::AtMost,
        ">=" | ">" => Comparator::AtLeast,
        _ => return Err(format!("unknown comparator `{op}`")),
    };
    let (quantity, threshold) = match q {
        "voltage" | "v" => (
            Quantity::Voltage,
            Level::Absolute(value.trim_end_matches('V').trim().parse().map_err(|_| format!("bad voltage `{value}`"))?),
        ),
        "current" | "i" => (Quantity::Current, parse_level(&value)?),
        "time" | "t" => (Quantity::Time, Level::Absolute(parse_seconds(&value)?)),
        _ => return Err(format!("unknown quantity `{q}` (expected voltage, current or time)")),
    };
    Ok(Termination {
        quantity,
        comparator,
        threshold,
    })
}
