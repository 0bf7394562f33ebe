//! Browser bindings. Every export returns a JSON string; errors surface as
//! JS exceptions carrying the message.

use deepsoh::identify::{ambiguity_experiment, invert_with_expansion, invert_without_expansion, AmbiguityConfig};
use deepsoh::measurement::ocv_curve;
use deepsoh::protocol::Campaign;
use deepsoh::{DeepSOH, InversionOptions, MeasurementVector, Model, ModelParameters};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn demo() -> Model {
    Model::demo()
}

/// Demo model with a coarse grid and long steps, for in-browser campaigns.
fn coarse() -> Model {
    let mut p = ModelParameters::demo();
    p.numerics.shells = 10;
    p.numerics.dt_active = 30.0;
    p.numerics.dt_rest_max = 900.0;
    Model::new(p).expect("coarse demo parameters are valid")
}

fn curve_json(model: &Model, deep: &DeepSOH) -> deepsoh::Result<Value> {
    let esoh = model.esoh(deep)?;
    let c = ocv_curve(model.cell(), &esoh, 120)?;
    Ok(json!({ "esoh": esoh, "capacity": c.capacity, "voltage": c.voltage }))
}

/// OCV curve of a cell with the given active-material and lithium losses
/// (fractions), next to the pristine curve.
pub fn pseudo_ocv_json(lam_pos: f64, lam_neg: f64, lli: f64) -> deepsoh::Result<Value> {
    let m = demo();
    let mut d = m.pristine_deep();
    d.capacity_pos *= 1.0 - lam_pos;
    d.capacity_neg *= 1.0 - lam_neg;
    d.lli = lli;
    Ok(json!({
        "pristine": curve_json(&m, &m.pristine_deep())?,
        "aged": curve_json(&m, &d)?,
    }))
}

/// Identifies film states. A non-finite or negative `expansion` means no
/// expansion reading.
pub fn identify_json(
    capacity_pos: f64,
    capacity_neg: f64,
    lli: f64,
    resistance: f64,
    expansion: f64,
) -> deepsoh::Result<Value> {
    let m = demo();
    let y = MeasurementVector {
        capacity_pos,
        capacity_neg,
        lli,
        resistance,
        expansion: (expansion.is_finite() && expansion >= 0.0).then_some(expansion),
    };
    let opts = InversionOptions::default();
    let family = invert_without_expansion(&m, &y.without_expansion(), &opts)?;
    let unique = match y.expansion {
        Some(_) => Some(match invert_with_expansion(&m, &y, &opts) {
            Ok(r) => serde_json::to_value(r)?,
            Err(e) => json!({ "kind": "error", "reason": e.to_string() }),
        }),
        None => None,
    };
    Ok(json!({
        "family": family,
        "with_expansion": unique,
        "kinetic_resistance": family.family().map(|f| f.kinetic_resistance),
    }))
}

/// Coarse ambiguity experiment: capacity fade of `members` cells sharing
/// eSOH and resistance.
pub fn ambiguity_json(members: usize, lli: f64, film_resistance: f64, max_cycles: usize) -> deepsoh::Result<Value> {
    let m = coarse();
    let config = AmbiguityConfig {
        members,
        lli,
        film_resistance,
        jobs: 1,
        campaign: Campaign {
            max_cycles,
            rpt_every: max_cycles.max(1),
            ..Campaign::second_life()
        },
        ..AmbiguityConfig::demo()
    };
    let report = ambiguity_experiment(&m, &config)?;
    let members: Vec<Value> = report
        .members
        .iter()
        .map(|mem| {
            json!({
                "delta_sei": mem.film.delta_sei,
                "delta_pl": mem.film.delta_pl,
                "expansion": mem.initial_rpt.expansion,
                "resistance": mem.initial_rpt.resistance,
                "rul": mem.rul_cycles,
                "reached_eol": mem.reached_eol,
                "cycle": mem.cycles.iter().map(|c| c.cycle).collect::<Vec<_>>(),
                "capacity": mem.cycles.iter().map(|c| c.capacity).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({
        "members": members,
        "checks": report.checks,
        "eol_capacity": config.campaign.eol_capacity_fraction * m.nominal_capacity(),
    }))
}

fn to_js(r: deepsoh::Result<Value>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn pseudo_ocv(lam_pos: f64, lam_neg: f64, lli: f64) -> Result<String, JsError> {
    to_js(pseudo_ocv_json(lam_pos, lam_neg, lli))
}

#[wasm_bindgen]
pub fn identify(capacity_pos: f64, capacity_neg: f64, lli: f64, resistance: f64, expansion: f64) -> Result<String, JsError> {
    to_js(identify_json(capacity_pos, capacity_neg, lli, resistance, expansion))
}

#[wasm_bindgen]
pub fn ambiguity(members: usize, lli: f64, film_resistance: f64, max_cycles: usize) -> Result<String, JsError> {
    to_js(ambiguity_json(members, lli, film_resistance, max_cycles))
}
