use deepsoh::cell::Electrode;
use deepsoh::protocol::{
    parse_protocol, run_campaign, run_rpt, run_step, Campaign, Comparator, Level, ProtocolStep,
    Quantity, Termination,
};
use deepsoh::{Error, Model, ModelParameters};

fn run(model: &Model, state: &deepsoh::CellState, step: &ProtocolStep) -> (deepsoh::protocol::StepOutcome, Vec<(f64, f64, f64)>) {
    let mut trace = Vec::new();
    let out = run_step(model, state, step, 1, 0.0, false, &mut |t, op| trace.push((t, op.current, op.voltage))).unwrap();
    (out, trace)
}

#[test]
fn rest_lasts_exactly_ten_seconds() {
    let m = Model::demo();
    let s = m.pristine_cell(0.5).unwrap();
    let (out, trace) = run(&m, &s, &ProtocolStep::rest(10.0));
    assert_eq!(out.elapsed, 10.0);
    assert_eq!(trace.last().unwrap().0, 10.0);
    assert!(trace.iter().all(|&(_, i, _)| i == 0.0));
}

#[test]
fn cc_discharge_stops_at_cutoff() {
    let m = Model::demo();
    let s = m.pristine_cell(1.0).unwrap();
    let step = ProtocolStep::discharge(Level::CRate(0.2), vec![Termination::new(Quantity::Voltage, Comparator::AtMost, 3.0)]);
    let (out, trace) = run(&m, &s, &step);
    assert!((out.last.voltage - 3.0).abs() < 1e-3, "{}", out.last.voltage);
    assert!(trace.windows(2).all(|w| w[1].0 > w[0].0));
    // C/5 from full delivers close to the nominal capacity.
    assert!(out.throughput > 0.95 * m.nominal_capacity() && out.throughput < m.nominal_capacity());
}

#[test]
fn cv_hold_reaches_current_floor_at_set_voltage() {
    let m = Model::demo();
    let s = m.pristine_cell(0.6).unwrap();
    let charge = ProtocolStep::charge(Level::CRate(0.2), vec![Termination::new(Quantity::Voltage, Comparator::AtLeast, 4.2)]);
    let (charged, _) = run(&m, &s, &charge);
    let hold = ProtocolStep::hold(
        4.2,
        vec![Termination {
            quantity: Quantity::Current,
            comparator: Comparator::AtMost,
            threshold: Level::CRate(0.01),
        }],
    );
    let out = run_step(&m, &charged.state, &hold, 2, charged.last.current, false, &mut |_, op| {
        assert!((op.voltage - 4.2).abs() < 1e-3, "{}", op.voltage);
    })
    .unwrap();
    assert!(out.last.current.abs() <= m.nominal_capacity() / 100.0 + 1e-12);
    assert!((out.last.voltage - 4.2).abs() < 1e-3);
}

#[test]
fn unreachable_termination_stalls() {
    let mut p = ModelParameters::demo();
    p.numerics.step_time_cap = 3600.0;
    let m = Model::new(p).unwrap();
    let s = m.pristine_cell(0.5).unwrap();
    let step = ProtocolStep {
        until: vec![Termination::new(Quantity::Voltage, Comparator::AtLeast, 5.0)],
        ..ProtocolStep::rest(1.0)
    };
    let err = run_step(&m, &s, &step, 3, 0.0, false, &mut |_, _| {}).unwrap_err();
    assert!(matches!(err, Error::ProtocolStall { step: 3, .. }), "{err}");
}

#[test]
fn pristine_rpt_matches_construction() {
    let m = Model::demo();
    let r = run_rpt(&m, &m.pristine_deep()).unwrap();
    let nom = m.pristine();
    assert!((r.capacity / m.nominal_capacity() - 1.0).abs() < 0.01);
    for (a, b) in [
        (r.esoh.capacity_pos, nom.capacity_pos),
        (r.esoh.capacity_neg, nom.capacity_neg),
        (r.esoh.x_100, nom.x_100),
        (r.esoh.y_100, nom.y_100),
    ] {
        assert!(((a - b) / b).abs() < 5e-3, "{a} vs {b}");
    }
    assert_eq!(r.expansion, 0.0);
    let closed = m.instantaneous_resistance(&m.pristine_deep(), r.pulse_current).unwrap();
    assert!(((r.resistance - closed) / closed).abs() < 0.02);
}

#[test]
fn c20_curve_converges_under_refinement() {
    let coarse = Model::demo();
    let mut p = ModelParameters::demo();
    p.numerics.shells = 60;
    p.numerics.dt_active = 2.0;
    let fine = Model::new(p).unwrap();
    let a = run_rpt(&coarse, &coarse.pristine_deep()).unwrap();
    let b = run_rpt(&fine, &fine.pristine_deep()).unwrap();
    let gap = a.discharge.max_gap(&b.discharge);
    assert!(gap < 5e-3, "gap {gap}");
}

#[test]
fn equal_esoh_and_film_resistance_give_overlapping_curves() {
    let m = Model::demo();
    let p = &m.params().degradation;
    let mut a = m.pristine_deep();
    a.capacity_neg *= 0.96;
    a.delta_sei = 6e-8;
    let mut b = a;
    b.delta_sei = 0.0;
    b.delta_pl = a.delta_sei / p.sei.conductivity * p.plating.conductivity;
    for d in [&mut a, &mut b] {
        d.lli = 0.12;
    }
    let ra = run_rpt(&m, &a).unwrap();
    let rb = run_rpt(&m, &b).unwrap();
    assert!(ra.discharge.max_gap(&rb.discharge) < 5e-3);
    assert_ne!(ra.expansion, rb.expansion);
}

fn short(max_cycles: usize) -> Campaign {
    Campaign {
        max_cycles,
        rpt_every: 2,
        record_every: 1,
        ..Campaign::second_life()
    }
}

#[test]
fn campaign_records_are_consistent() {
    let m = Model::demo();
    let r = run_campaign(&m, m.pristine_cell(1.0).unwrap(), &short(2)).unwrap();
    let samples = &r.trajectory.samples;
    assert!(samples.windows(2).all(|w| w[1].time > w[0].time));
    for cycle in 1..=2 {
        let mut prev = if cycle == 1 {
            0.0
        } else {
            r.trajectory.cycles[cycle - 1].time
        };
        let mut q = 0.0;
        for s in samples.iter().filter(|s| s.cycle == cycle) {
            if s.step == 1 {
                q += s.current * (s.time - prev) / 3600.0;
            }
            prev = s.time;
        }
        let cap = r.trajectory.cycles[cycle].capacity;
        assert!(((q - cap) / cap).abs() < 1e-3, "{q} vs {cap}");
    }
    assert!(r.trajectory.cycles[2].rpt.is_some());
    assert!(r.trajectory.cycles[1].rpt.is_none());
}

#[test]
fn full_threshold_is_immediate_end_of_life() {
    let m = Model::demo();
    let c = Campaign {
        eol_capacity_fraction: 1.0,
        ..short(5)
    };
    let r = run_campaign(&m, m.pristine_cell(1.0).unwrap(), &c).unwrap();
    assert_eq!(r.rul_cycles, 0);
    assert!(r.reached_eol);
}

#[test]
fn no_degradation_runs_to_max_cycles() {
    let mut p = ModelParameters::demo();
    p.degradation = p.degradation.disabled();
    let m = Model::new(p).unwrap();
    let c = Campaign {
        record_every: 0,
        ..short(6)
    };
    let r = run_campaign(&m, m.pristine_cell(1.0).unwrap(), &c).unwrap();
    assert!(!r.reached_eol);
    assert_eq!(r.rul_cycles, 6);
    assert_eq!(r.final_state.deep, m.pristine_deep());
}

#[test]
fn campaign_is_bit_reproducible() {
    let m = Model::demo();
    let a = run_campaign(&m, m.pristine_cell(1.0).unwrap(), &short(2)).unwrap();
    let b = run_campaign(&m, m.pristine_cell(1.0).unwrap(), &short(2)).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
}

#[test]
fn parsed_protocol_runs() {
    let text = r#"
[campaign]
max_cycles = 1
rpt_every = 1

[[step]]
mode = "discharge"
current = "C/2"
until = ["voltage <= 3.2", "time >= 1h"]

[[step]]
mode = "charge"
current = 1.0
until = ["voltage >= 4.1"]

[[step]]
mode = "cv"
voltage = 4.1
until = ["current <= C/50", "time >= 30min"]
"#;
    let c = parse_protocol(text).unwrap();
    let m = Model::demo();
    let r = run_campaign(&m, m.pristine_cell(1.0).unwrap(), &c).unwrap();
    assert_eq!(r.trajectory.cycles.len(), 2);
    assert!(r.trajectory.cycles[1].capacity > 0.0);
}

#[test]
fn charging_lowers_sei_overpotential_and_fast_charge_plates_more() {
    let m = Model::demo();
    let s = m.pristine_cell(0.8).unwrap();
    let i = m.nominal_capacity();
    let rest = m.sei_overpotential(&s.particles, &s.deep, 0.0).unwrap();
    let charging = m.sei_overpotential(&s.particles, &s.deep, -i).unwrap();
    assert!(charging < rest);

    let charge_for = |current: f64, until_x: f64| {
        let mut st = m.pristine_cell(0.3).unwrap();
        while m.stoichiometry(&st.particles).0 < until_x {
            st = m.advance(&st, current, 5.0, false).unwrap().0;
        }
        st
    };
    let slow = charge_for(-0.2 * i, 0.7);
    let fast = charge_for(-1.0 * i, 0.7);
    let j_slow = m.plating_flux(&slow.particles, &slow.deep, -0.2 * i).unwrap().abs();
    let j_fast = m.plating_flux(&fast.particles, &fast.deep, -1.0 * i).unwrap().abs();
    assert!(j_fast > j_slow, "{j_fast} vs {j_slow}");
}

#[test]
fn stress_scales_with_current() {
    let m = Model::demo();
    let sigma = |current: f64| {
        let mut s = m.pristine_cell(0.5).unwrap();
        for _ in 0..30 {
            s = m.advance(&s, current, 2.0, false).unwrap().0;
        }
        m.hydrostatic_stress(Electrode::Negative, &s.particles)
    };
    let i = m.nominal_capacity() * 0.1;
    let (a, b) = (sigma(i), sigma(2.0 * i));
    assert!(a > 0.0);
    assert!((b / a / 2.0 - 1.0).abs() < 0.05, "{}", b / a);
}

#[test]
fn equilibrated_rest_barely_drifts() {
    let m = Model::demo();
    let mut d = m.pristine_deep();
    d.delta_sei = 2e-7;
    d.lli = m.film_lithium(&d) / m.n_li_0();
    let mut s = m.cell_at(d, 0.5).unwrap();
    for _ in 0..60 {
        s = m.advance(&s, 0.0, 60.0, true).unwrap().0;
    }
    // Only rounding in the shell average separates c_ss from c_avg here.
    assert!(s.deep.delta_pl < 1e-18, "{}", s.deep.delta_pl);
    assert!((s.deep.delta_sei - d.delta_sei) / d.delta_sei < 1e-3);
    assert!(s.deep.lli - d.lli < 1e-4);
}
