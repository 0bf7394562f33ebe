//! Cycling protocols: CC/CV/rest steps with termination conditions,
//! reference performance tests and multi-cycle aging campaigns.

mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

pub(crate) use parse::toml_error;
pub use parse::{parse_protocol, ProtocolFile};

use crate::degradation::DeepSOH;
use crate::error::{Error, Result};
use crate::measurement::{extract_esoh, ESOHRecord, VoltageCurve};
use crate::model::{CellState, Model, Operating};
use crate::rootfind;
use crate::SECONDS_PER_HOUR;

/// A current or threshold given either in amps or as a C-rate of the
/// nominal capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Absolute(f64),
    CRate(f64),
}

impl Level {
    pub fn resolve(&self, nominal_capacity: f64) -> f64 {
        match *self {
            Level::Absolute(v) => v,
            Level::CRate(c) => c * nominal_capacity,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Level::Absolute(v) | Level::CRate(v) => v,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Level::Absolute(v) => write!(f, "{v}"),
            Level::CRate(c) if c > 0.0 && (1.0 / c).fract() == 0.0 && c < 1.0 => write!(f, "C/{}", 1.0 / c),
            Level::CRate(c) => write!(f, "{c}C"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Constant current out of the cell; magnitude given.
    Discharge(Level),
    /// Constant current into the cell; magnitude given.
    Charge(Level),
    /// Constant voltage hold, V.
    ConstantVoltage(f64),
    Rest,
}

impl StepMode {
    pub fn name(&self) -> &'static str {
        match self {
            StepMode::Discharge(_) => "discharge",
            StepMode::Charge(_) => "charge",
            StepMode::ConstantVoltage(_) => "cv",
            StepMode::Rest => "rest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Voltage,
    /// Current magnitude.
    Current,
    /// Time since the start of the step.
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub quantity: Quantity,
    pub comparator: Comparator,
    pub threshold: Level,
}

impl Termination {
    pub fn new(quantity: Quantity, comparator: Comparator, threshold: f64) -> Self {
        Self {
            quantity,
            comparator,
            threshold: Level::Absolute(threshold),
        }
    }

    fn reading(&self, elapsed: f64, op: &Operating) -> f64 {
        match self.quantity {
            Quantity::Voltage => op.voltage,
            Quantity::Current => op.current.abs(),
            Quantity::Time => elapsed,
        }
    }

    /// Signed distance past the threshold; `>= 0` once fired.
    fn excess(&self, elapsed: f64, op: &Operating, nominal: f64) -> f64 {
        let r = self.reading(elapsed, op);
        let t = self.threshold.resolve(nominal);
        match self.comparator {
            Comparator::AtMost => t - r,
            Comparator::AtLeast => r - t,
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = match self.quantity {
            Quantity::Voltage => "voltage",
            Quantity::Current => "current",
            Quantity::Time => "time",
        };
        let c = match self.comparator {
            Comparator::AtMost => "<=",
            Comparator::AtLeast => ">=",
        };
        write!(f, "{q} {c} {}", self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStep {
    pub mode: StepMode,
    pub until: Vec<Termination>,
}

impl ProtocolStep {
    pub fn discharge(current: Level, until: Vec<Termination>) -> Self {
        Self {
            mode: StepMode::Discharge(current),
            until,
        }
    }

    pub fn charge(current: Level, until: Vec<Termination>) -> Self {
        Self {
            mode: StepMode::Charge(current),
            until,
        }
    }

    pub fn hold(voltage: f64, until: Vec<Termination>) -> Self {
        Self {
            mode: StepMode::ConstantVoltage(voltage),
            until,
        }
    }

    pub fn rest(seconds: f64) -> Self {
        Self {
            mode: StepMode::Rest,
            until: vec![Termination::new(Quantity::Time, Comparator::AtLeast, seconds)],
        }
    }

    /// `step` is the 1-based position used in error messages.
    pub fn validate(&self, step: usize) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidProtocol { step, reason });
        if self.until.is_empty() {
            return fail(format!("{} step has no termination", self.mode.name()));
        }
        match self.mode {
            StepMode::Discharge(l) | StepMode::Charge(l) if !(l.value().is_finite() && l.value() > 0.0) => {
                return fail(format!("{} current must be positive, got {l}", self.mode.name()));
            }
            StepMode::ConstantVoltage(v) => {
                if !(v.is_finite() && v > 0.0) {
                    return fail(format!("cv voltage must be positive, got {v}"));
                }
                if !self
                    .until
                    .iter()
                    .any(|t| matches!(t.quantity, Quantity::Current | Quantity::Time))
                {
                    return fail("cv step needs a current or time termination".into());
                }
            }
            _ => {}
        }
        for t in &self.until {
            if !t.threshold.value().is_finite() {
                return fail(format!("termination `{t}` has a non-finite threshold"));
            }
            if t.quantity != Quantity::Current && matches!(t.threshold, Level::CRate(_)) {
                return fail(format!("C-rate threshold only applies to current, got `{t}`"));
            }
            if t.quantity == Quantity::Time && !(t.threshold.value() > 0.0) {
                return fail(format!("time termination must be positive, got `{t}`"));
            }
        }
        Ok(())
    }

    fn signed_current(&self, nominal: f64) -> Option<f64> {
        match self.mode {
            StepMode::Discharge(l) => Some(l.resolve(nominal)),
            StepMode::Charge(l) => Some(-l.resolve(nominal)),
            StepMode::Rest => Some(0.0),
            StepMode::ConstantVoltage(_) => None,
        }
    }

    fn time_limit(&self) -> f64 {
        self.until
            .iter()
            .filter(|t| t.quantity == Quantity::Time && t.comparator == Comparator::AtLeast)
            .map(|t| t.threshold.value())
            .fold(f64::INFINITY, f64::min)
    }
}

/// The second-life cycle: C/5 discharge to 3 V, 10 s rest, C/5 charge to
/// 4.2 V, hold 4.2 V to C/100, rest 18 h.
pub fn second_life_cycle() -> Vec<ProtocolStep> {
    use Comparator::*;
    use Quantity::*;
    vec![
        ProtocolStep::discharge(Level::CRate(0.2), vec![Termination::new(Voltage, AtMost, 3.0)]),
        ProtocolStep::rest(10.0),
        ProtocolStep::charge(Level::CRate(0.2), vec![Termination::new(Voltage, AtLeast, 4.2)]),
        ProtocolStep::hold(
            4.2,
            vec![Termination {
                quantity: Current,
                comparator: AtMost,
                threshold: Level::CRate(0.01),
            }],
        ),
        ProtocolStep::rest(18.0 * SECONDS_PER_HOUR),
    ]
}

/// Voltage overshoot accepted when a voltage termination fires, V.
const VOLTAGE_TOLERANCE: f64 = 5e-4;
/// CV current solve tolerance on voltage, V.
const CV_TOLERANCE: f64 = 1e-4;
const MIN_DT: f64 = 1e-4;

/// End state of one protocol step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: CellState,
    /// Index into `until` of the termination that fired.
    pub fired: usize,
    pub elapsed: f64,
    /// Net charge delivered by the cell, Ah (negative when charging).
    pub throughput: f64,
    pub last: Operating,
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::Saturation { .. } | Error::KineticsSingular { .. } | Error::Domain { .. })
}

/// Runs one step until its first termination fires.
///
/// `warm_current` seeds the CV current solve (usually the last current of
/// the previous step). `observe` receives the elapsed time and operating
/// point after every accepted timestep.
pub fn run_step(
    model: &Model,
    state: &CellState,
    step: &ProtocolStep,
    index: usize,
    warm_current: f64,
    degrade: bool,
    observe: &mut dyn FnMut(f64, &Operating),
) -> Result<StepOutcome> {
    step.validate(index)?;
    let numerics = model.params().numerics;
    let nominal = model.nominal_capacity();
    let time_limit = step.time_limit();
    let resting = step.mode == StepMode::Rest;
    let mut state = state.clone();
    let mut t = 0.0;
    let mut throughput = 0.0;
    let mut dt_nom = numerics.dt_active;
    let mut current = warm_current;

    loop {
        if t >= numerics.step_time_cap {
            return Err(Error::ProtocolStall { step: index, elapsed: t });
        }
        let dt = dt_nom.min(time_limit - t);
        let attempt = match step.signed_current(nominal) {
            Some(i) => model.advance(&state, i, dt, degrade),
            None => {
                let StepMode::ConstantVoltage(v) = step.mode else { unreachable!() };
                cv_current(model, &state, v, current, dt).and_then(|i| model.advance(&state, i, dt, degrade))
            }
        };
        let (next, op) = match attempt {
            Ok(r) => r,
            Err(e) if recoverable(&e) && dt > MIN_DT => {
                dt_nom = dt / 4.0;
                continue;
            }
            Err(e) => return Err(e),
        };

        let elapsed = t + dt;
        let hit = step
            .until
            .iter()
            .enumerate()
            .find(|(_, term)| term.excess(elapsed, &op, nominal) >= 0.0);
        if let Some((k, term)) = hit {
            let (next, op, dt) = if term.quantity == Quantity::Voltage
                && term.excess(elapsed, &op, nominal) > VOLTAGE_TOLERANCE
                && step.signed_current(nominal).is_some()
            {
                refine_crossing(model, &state, step, term, t, dt, degrade, (next, op))?
            } else {
                (next, op, dt)
            };
            let elapsed = t + dt;
            throughput += op.current * dt / SECONDS_PER_HOUR;
            observe(elapsed, &op);
            return Ok(StepOutcome {
                state: next,
                fired: k,
                elapsed,
                throughput,
                last: op,
            });
        }

        throughput += op.current * dt / SECONDS_PER_HOUR;
        observe(elapsed, &op);
        state = next;
        current = op.current;
        t = elapsed;
        dt_nom = if resting {
            (dt_nom * 1.5).min(numerics.dt_rest_max)
        } else {
            (dt_nom * 2.0).min(numerics.dt_active)
        };
    }
}

/// Bisects the timestep of a constant-current step so that a voltage
/// termination fires within [`VOLTAGE_TOLERANCE`] of its threshold.
#[allow(clippy::too_many_arguments)]
fn refine_crossing(
    model: &Model,
    start: &CellState,
    step: &ProtocolStep,
    term: &Termination,
    t: f64,
    dt: f64,
    degrade: bool,
    fired: (CellState, Operating),
) -> Result<(CellState, Operating, f64)> {
    let nominal = model.nominal_capacity();
    let current = step.signed_current(nominal).unwrap_or(0.0);
    let (mut lo, mut hi) = (0.0, dt);
    let mut best = fired;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match model.advance(start, current, mid, degrade) {
            Ok((s, op)) => {
                let excess = term.excess(t + mid, &op, nominal);
                if excess >= 0.0 {
                    hi = mid;
                    best = (s, op);
                    if excess <= VOLTAGE_TOLERANCE {
                        break;
                    }
                } else {
                    lo = mid;
                }
            }
            Err(e) if recoverable(&e) => hi = mid,
            Err(e) => return Err(e),
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok((best.0, best.1, hi))
}

/// Current that holds the terminal voltage at `target` at the end of a
/// timestep of length `dt`.
fn cv_current(model: &Model, state: &CellState, target: f64, warm: f64, dt: f64) -> Result<f64> {
    let g = |i: f64| -> Result<f64> {
        match model.advance(state, i, dt, false) {
            Ok((_, op)) => Ok(op.voltage - target),
            // Saturated particle: the voltage has run off in the
            // direction of the current.
            Err(e) if recoverable(&e) => Ok(if i < 0.0 { 1.0 } else { -1.0 }),
            Err(e) => Err(e),
        }
    };
    let floor = model.nominal_capacity() * 1e-3;
    let mut span = warm.abs().max(floor) * 0.25;
    let (mut lo, mut hi) = (warm - span, warm + span);
    let mut g_lo = g(lo)?;
    let mut tries = 0;
    while g_lo < 0.0 {
        hi = lo;
        span *= 2.0;
        lo -= span;
        g_lo = g(lo)?;
        tries += 1;
        if tries > 60 {
            return Err(Error::Numerical(format!("cannot bracket CV current for {target} V")));
        }
    }
    let mut g_hi = g(hi)?;
    while g_hi > 0.0 {
        lo = hi;
        span *= 2.0;
        hi += span;
        g_hi = g(hi)?;
        tries += 1;
        if tries > 60 {
            return Err(Error::Numerical(format!("cannot bracket CV current for {target} V")));
        }
    }
    rootfind::bracketed(g, lo, hi, CV_TOLERANCE, 1e-12)
}

/// One sample of a per-step time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Campaign time, s.
    pub time: f64,
    pub cycle: usize,
    /// 1-based step index within the cycle.
    pub step: usize,
    pub current: f64,
    pub voltage: f64,
    pub x: f64,
    pub y: f64,
}

/// Outcome of a reference performance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RptReport {
    /// C/20 discharge from 100% SOC to `V_min`.
    pub discharge: VoltageCurve,
    /// C/20 charge back to `V_max`, indexed by capacity below full.
    pub charge: VoltageCurve,
    /// Mean of the two curves at matched state of charge.
    pub pseudo_ocv: VoltageCurve,
    /// Coulomb-counted C/20 discharge capacity, Ah.
    pub capacity: f64,
    pub esoh: ESOHRecord,
    pub esoh_residual_rms: f64,
    /// Resistance from a short current pulse at mid-SOC, Ω.
    pub resistance: f64,
    pub pulse_current: f64,
    /// Irreversible expansion, m.
    pub expansion: f64,
}

fn rpt_curve(model: &Model, state: &CellState, step: &ProtocolStep) -> Result<(StepOutcome, VoltageCurve)> {
    let current = step.signed_current(model.nominal_capacity()).unwrap_or(0.0);
    let start = model.operating(&state.particles, &state.deep, current)?;
    let mut curve = VoltageCurve {
        capacity: vec![0.0],
        voltage: vec![start.voltage],
    };
    let outcome = run_step(model, state, step, 0, current, false, &mut |t, op| {
        curve.capacity.push(t * current.abs() / SECONDS_PER_HOUR);
        curve.voltage.push(op.voltage);
    })?;
    Ok((outcome, curve))
}

/// Runs an RPT on a copy of `deep` with degradation frozen: C/20 discharge
/// from an equilibrated full cell, C/20 charge, eSOH fit of the averaged
/// curve, and a short pulse at mid-SOC for the resistance.
pub fn run_rpt(model: &Model, deep: &DeepSOH) -> Result<RptReport> {
    let cell = model.cell();
    let full = model.cell_at(*deep, 1.0)?;
    let (dis, discharge) = rpt_curve(
        model,
        &full,
        &ProtocolStep::discharge(
            Level::CRate(0.05),
            vec![Termination::new(Quantity::Voltage, Comparator::AtMost, cell.v_min)],
        ),
    )?;
    let (_, charge_up) = rpt_curve(
        model,
        &dis.state,
        &ProtocolStep::charge(
            Level::CRate(0.05),
            vec![Termination::new(Quantity::Voltage, Comparator::AtLeast, cell.v_max)],
        ),
    )?;
    let q_dis = dis.throughput;
    let charge = VoltageCurve {
        capacity: charge_up.capacity.iter().rev().map(|q| q_dis - q).collect(),
        voltage: charge_up.voltage.iter().rev().copied().collect(),
    };
    let pseudo_ocv = average_curves(&discharge, &charge);
    let fit = extract_esoh(cell, &pseudo_ocv, model.pristine())?;

    let pulse_current = model.nominal_capacity() / 20.0;
    let mid = model.cell_at(*deep, 0.5)?;
    let v0 = model.terminal_voltage(&mid.particles, &mid.deep, 0.0)?;
    let (_, op) = model.advance(&mid, pulse_current, 0.01, false)?;
    let resistance = (v0 - op.voltage) / pulse_current;

    Ok(RptReport {
        discharge,
        charge,
        pseudo_ocv,
        capacity: q_dis,
        esoh: fit.record,
        esoh_residual_rms: fit.residual_rms,
        resistance,
        pulse_current,
        expansion: model.expansion(deep),
    })
}

/// Pointwise mean of two curves on the knots of `a` inside their common
/// capacity range, re-zeroed to start at capacity 0.
fn average_curves(a: &VoltageCurve, b: &VoltageCurve) -> VoltageCurve {
    let mut out = VoltageCurve::default();
    let mut origin = None;
    for (&q, &v) in a.capacity.iter().zip(&a.voltage) {
        if let Some(w) = b.voltage_at(q) {
            let q0 = *origin.get_or_insert(q);
            if out.capacity.last().is_some_and(|&last| q - q0 <= last) {
                continue;
            }
            out.capacity.push(q - q0);
            out.voltage.push(0.5 * (v + w));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub cycle: Vec<ProtocolStep>,
    /// Run an RPT at cycle 0 and every `rpt_every` cycles.
    pub rpt_every: usize,
    /// End of life once the discharge capacity falls below this fraction
    /// of nominal.
    pub eol_capacity_fraction: f64,
    pub max_cycles: usize,
    /// Keep the per-step series of cycle 1 and every `record_every`-th
    /// cycle; 0 keeps none.
    pub record_every: usize,
}

impl Campaign {
    pub fn second_life() -> Self {
        Self {
            cycle: second_life_cycle(),
            rpt_every: 50,
            eol_capacity_fraction: 0.7,
            max_cycles: 500,
            record_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycle.is_empty() {
            return Err(Error::InvalidProtocol {
                step: 0,
                reason: "cycle has no steps".into(),
            });
        }
        for (k, s) in self.cycle.iter().enumerate() {
            s.validate(k + 1)?;
        }
        if !self.cycle.iter().any(|s| matches!(s.mode, StepMode::Discharge(_))) {
            return Err(Error::InvalidProtocol {
                step: 0,
                reason: "cycle has no discharge step to measure capacity".into(),
            });
        }
        if self.rpt_every == 0 {
            return Err(Error::InvalidParameter("rpt_every must be at least 1".into()));
        }
        if !(self.eol_capacity_fraction > 0.0 && self.eol_capacity_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eol_capacity_fraction must lie in (0, 1], got {}",
                self.eol_capacity_fraction
            )));
        }
        Ok(())
    }

    fn records(&self, cycle: usize) -> bool {
        self.record_every > 0 && (cycle == 1 || cycle % self.record_every == 0)
    }
}

/// Per-cycle record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 0 is the initial state before cycling.
    pub cycle: usize,
    /// Campaign time at the end of the cycle, s.
    pub time: f64,
    pub deep: DeepSOH,
    /// Coulomb-counted discharge capacity of the cycle, Ah (eSOH capacity
    /// for cycle 0).
    pub capacity: f64,
    /// Closed-form instantaneous resistance at mid-SOC, Ω.
    pub resistance: f64,
    pub expansion: f64,
    /// LLI rebuilt from the film thicknesses and the LAM ledger.
    pub lli_reconstructed: f64,
    pub rpt: Option<RptSummary>,
}

/// The part of an RPT kept in a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RptSummary {
    pub capacity: f64,
    pub esoh: ESOHRecord,
    pub resistance: f64,
    pub expansion: f64,
}

impl From<&RptReport> for RptSummary {
    fn from(r: &RptReport) -> Self {
        Self {
            capacity: r.capacity,
            esoh: r.esoh,
            resistance: r.resistance,
            expansion: r.expansion,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub cycles: Vec<CycleRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub trajectory: Trajectory,
    /// Cycles completed before end of life (or `max_cycles`).
    pub rul_cycles: usize,
    pub reached_eol: bool,
    pub final_state: CellState,
    /// Full RPT of the starting state.
    pub initial_rpt: RptReport,
}

/// Cycles a cell until its discharge capacity drops below the end-of-life
/// threshold or `max_cycles` is reached. The cell starts from `state` as
/// given (normally an equilibrated full cell).
pub fn run_campaign(model: &Model, state: CellState, campaign: &Campaign) -> Result<CampaignResult> {
    campaign.validate()?;
    let threshold = campaign.eol_capacity_fraction * model.nominal_capacity();
    let mut trajectory = Trajectory::default();
    let esoh = model.esoh(&state.deep)?;
    let rpt = run_rpt(model, &state.deep)?;
    trajectory.cycles.push(cycle_record(model, &state, 0, 0.0, esoh.capacity, Some(&rpt))?);
    if esoh.capacity < threshold {
        return Ok(CampaignResult {
            trajectory,
            rul_cycles: 0,
            reached_eol: true,
            final_state: state,
            initial_rpt: rpt,
        });
    }

    let rpt0 = rpt;
    let mut state = state;
    let mut time = 0.0;
    let mut current = 0.0;
    for cycle in 1..=campaign.max_cycles {
        let mut capacity = 0.0;
        let record = campaign.records(cycle);
        for (k, step) in campaign.cycle.iter().enumerate() {
            let t0 = time;
            let samples = &mut trajectory.samples;
            let outcome = run_step(model, &state, step, k + 1, current, true, &mut |t, op| {
                if record {
                    samples.push(Sample {
                        time: t0 + t,
                        cycle,
                        step: k + 1,
                        current: op.current,
                        voltage: op.voltage,
                        x: op.x,
                        y: op.y,
                    });
                }
            })?;
            if matches!(step.mode, StepMode::Discharge(_)) {
                capacity += outcome.throughput;
            }
            time += outcome.elapsed;
            current = outcome.last.current;
            state = outcome.state;
        }
        model.complete_cycle(&mut state)?;
        let rpt = if cycle % campaign.rpt_every == 0 {
            Some(run_rpt(model, &state.deep)?)
        } else {
            None
        };
        trajectory.cycles.push(cycle_record(model, &state, cycle, time, capacity, rpt.as_ref())?);
        if capacity < threshold {
            return Ok(CampaignResult {
                trajectory,
                rul_cycles: cycle - 1,
                reached_eol: true,
                final_state: state,
                initial_rpt: rpt0,
            });
        }
    }
    Ok(CampaignResult {
        trajectory,
        rul_cycles: campaign.max_cycles,
        reached_eol: false,
        final_state: state,
        initial_rpt: rpt0,
    })
}

fn cycle_record(
    model: &Model,
    state: &CellState,
    cycle: usize,
    time: f64,
    capacity: f64,
    rpt: Option<&RptReport>,
) -> Result<CycleRecord> {
    Ok(CycleRecord {
        cycle,
        time,
        deep: state.deep,
        capacity,
        resistance: model.instantaneous_resistance(&state.deep, 0.0)?,
        expansion: model.expansion(&state.deep),
        lli_reconstructed: model.reconstructed_lli(state),
        rpt: rpt.map(RptSummary::from),
    })
}
