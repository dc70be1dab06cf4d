//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::Instant;

use motorlink::dynamics::{center_of_mass, kinetic_energy, simulate_observed, spring_energy};
use motorlink::harness::{has_reversal_pattern, DEFAULT_DAMPING_ETA};
use motorlink::model::{flexural_rigidity, neutral_axis};
use motorlink::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome, HarnessError> {
    Ok(Outcome { pass, detail })
}

/// Transformed-section reference computed from scratch: every layer is
/// rescaled to the steel modulus and the composite treated as one material.
fn transformed_section(layers: &[(f64, f64)], width: f64) -> (f64, f64) {
    let e_ref = layers[0].0;
    let mut bottom = 0.0;
    let mut area = 0.0;
    let mut first_moment = 0.0;
    let mut parts = Vec::new();
    for &(e, t) in layers {
        let b = width * e / e_ref;
        let centroid = bottom + 0.5 * t;
        area += b * t;
        first_moment += b * t * centroid;
        parts.push((b, t, centroid));
        bottom += t;
    }
    let zbar = first_moment / area;
    let inertia: f64 = parts
        .iter()
        .map(|(b, t, c)| b * t.powi(3) / 12.0 + b * t * (c - zbar).powi(2))
        .sum();
    (zbar, e_ref * inertia)
}

fn c1() -> Result<Outcome, HarnessError> {
    let section = CrossSection::steel_piezo_unimorph(0.020)?;
    let zbar = neutral_axis(&section);
    let ei = flexural_rigidity(&section);
    let (z_ref, ei_ref) = transformed_section(&[(200e9, 50e-6), (30e9, 300e-6)], 0.020);
    let rz = ((zbar - z_ref) / z_ref).abs();
    let re = ((ei - ei_ref) / ei_ref).abs();
    let pass = rz < 1e-9 && re < 1e-9 && (zbar - 107.9e-6).abs() < 0.05e-6 && (ei - 4.29e-3).abs() < 0.005e-3;
    outcome(
        pass,
        format!(
            "z = {:.4} um, EI = {:.5e} N m^2, relative mismatch {rz:.1e} / {re:.1e}",
            zbar * 1e6,
            ei
        ),
    )
}

fn arc_error(m: usize) -> Result<(f64, f64, f64), HarnessError> {
    let r = run_cantilever_static(&Setup::cantilever(), &[-1000.0], m)?;
    Ok((
        r.metric("tip_deflection_m").unwrap(),
        r.metric("tip_error_m").unwrap(),
        r.metric("shape_error_m").unwrap(),
    ))
}

fn c2() -> Result<Outcome, HarnessError> {
    let t = Instant::now();
    let (tip, _, shape) = arc_error(3)?;
    let l = 0.1;
    let pass = (tip + 0.020).abs() <= 0.5e-3 && shape < 0.01 * l;
    outcome(
        pass,
        format!(
            "tip {:.3} mm, max shape deviation {:.3}% of L, {:.2} s",
            tip * 1e3,
            shape / l * 100.0,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c3() -> Result<Outcome, HarnessError> {
    let ms = [1, 2, 3, 5];
    let errs = ms.iter().map(|&m| arc_error(m).map(|e| e.1)).collect::<Result<Vec<_>, _>>()?;
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let small = ms.iter().zip(&errs).filter(|(m, _)| **m >= 3).all(|(_, e)| *e < 0.01 * 0.1);
    let list: Vec<String> = ms
        .iter()
        .zip(&errs)
        .map(|(m, e)| format!("m={m}: {:.3} mm", e * 1e3))
        .collect();
    outcome(monotone && small, format!("tip error {}", list.join(", ")))
}

fn c4() -> Result<Outcome, HarnessError> {
    let setup = Setup {
        parallel: true,
        ..Setup::cantilever()
    };
    let mut freqs = vec![1.0, 2.0, 5.0, 10.0, 15.0];
    freqs.extend((18..=32).map(f64::from));
    freqs.extend([35.0, 40.0]);
    let r = run_cantilever_ac(&setup, &freqs, SineDrive::default(), 3, 10, 3)?;
    let peak = r.metric("resonance_frequency_Hz").unwrap();
    let f1 = r.metric("analytic_first_mode_Hz").unwrap();
    let amp = r.series("amplitude").unwrap();
    let at = |f: f64| amp.rows.iter().find(|row| row[0] == f).map(|row| row[1] * 1e3).unwrap();
    outcome(
        (peak - 25.0).abs() <= 2.0 && (f1 - 23.0).abs() <= 1.0,
        format!(
            "amplitude peak at {peak} Hz (1 Hz: {:.2} mm, 25 Hz: {:.2} mm, 40 Hz: {:.2} mm), analytic f1 {f1:.2} Hz, first-mode damping ratio {:.2}",
            at(1.0),
            at(25.0),
            at(40.0),
            r.metric("first_mode_damping_ratio").unwrap()
        ),
    )
}

fn c5() -> Result<Outcome, HarnessError> {
    let fit = calibrate_damping(&Setup::cantilever(), -1000.0, 3)?;
    let rel = (fit.eta - DEFAULT_DAMPING_ETA) / DEFAULT_DAMPING_ETA;
    outcome(
        rel.abs() <= 0.10,
        format!("fitted eta {:.5} s ({:+.2}%), {:?}", fit.eta, rel * 100.0, fit.method),
    )
}

fn c6() -> Result<Outcome, HarnessError> {
    let setup = Setup::default();
    let a = run_static_shape(&setup, &[0.0, 300.0, -960.0, 300.0, 0.0])?;
    let b = run_static_shape(&setup, &[300.0, 300.0, -960.0, 300.0, 0.0])?;
    let flag = |r: &ExperimentReport, k: &str| r.metric(k).unwrap() == 1.0;
    let peak = a.metric("peak_node_index").unwrap();
    let a_ok = flag(&a, "left_end_touching")
        && flag(&a, "right_end_touching")
        && flag(&a, "arch_monotone")
        && a.metric("max_height_m").unwrap() > 1e-3
        && (8.0..=12.0).contains(&peak);
    let b_ok = !flag(&b, "left_end_touching")
        && flag(&b, "right_end_touching")
        && b.metric("left_end_height_m").unwrap() > 1e-3;
    outcome(
        a_ok && b_ok,
        format!(
            "(a) arch {:.2} mm at node {peak}, ends touching {}/{}; (b) left end {:.2} mm, right end touching {}",
            a.metric("max_height_m").unwrap() * 1e3,
            flag(&a, "left_end_touching"),
            flag(&a, "right_end_touching"),
            b.metric("left_end_height_m").unwrap() * 1e3,
            flag(&b, "right_end_touching"),
        ),
    )
}

fn c7() -> Result<Outcome, HarnessError> {
    let setup = Setup::default();
    let std = run_inchworm(&setup, 1.0, 10, &INCHWORM_VOLTAGES, InchwormPattern::Standard)?;
    let sym = run_inchworm(&setup, 1.0, 10, &INCHWORM_VOLTAGES, InchwormPattern::Symmetric)?;
    let s = std.metric("stride_m_per_cycle").unwrap();
    let c = sym.metric("stride_m_per_cycle").unwrap();
    outcome(
        (0.95e-3..=2.85e-3).contains(&s) && c.abs() < 0.2e-3,
        format!("stride {:.3} mm/cycle, symmetric control {:.2e} mm/cycle", s * 1e3, c * 1e3),
    )
}

fn c8() -> Result<Outcome, HarnessError> {
    let r = run_jump(&Setup::default(), 14.0, 3.0, JUMP_VOLTAGES)?;
    let airborne = r.metric("airborne_intervals").unwrap();
    let ratio = r.metric("period_ratio").unwrap_or(f64::NAN);
    let phase = r.metric("phase_shift_cycles").unwrap_or(f64::NAN);
    let height = r.metric("jump_height_m").unwrap();
    let a = airborne >= 1.0;
    let b = (ratio - 2.0).abs() <= 0.1;
    let c = phase.abs() > 0.02;
    let d = (3e-3..=16e-3).contains(&height);
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    outcome(
        a && b && c && d,
        format!(
            "(a) {airborne} airborne intervals {}; (b) period ratio {ratio:.3} {}; (c) phase shift {phase:.3} cycles {}; (d) jump height {:.3} mm {}",
            mark(a),
            mark(b),
            mark(c),
            height * 1e3,
            mark(d)
        ),
    )
}

fn c9() -> Result<Outcome, HarnessError> {
    let setup = Setup {
        parallel: true,
        ..Setup::default()
    };
    let freqs: Vec<f64> = (1..=12).chain([14, 16, 18, 20]).map(f64::from).collect();
    let r = run_speed_sweep(&setup, &freqs, 10, &INCHWORM_VOLTAGES)?;
    let speeds = r.series("speed").unwrap().column("speed_m_per_s").unwrap();
    let pass = has_reversal_pattern(&freqs, &speeds, 3.0, (6.0, 10.0));
    let list: Vec<String> = freqs
        .iter()
        .zip(&speeds)
        .map(|(f, v)| format!("{f}:{:+.2}", v * 1e3))
        .collect();
    outcome(pass, format!("speed mm/s by Hz {}", list.join(" ")))
}

fn c10() -> Result<Outcome, HarnessError> {
    let mut notes = Vec::new();
    let mut pass = true;

    // Ballistic flight of a bent, spinning chain.
    let chain = discretize_robot(&RobotSpec::five_actuator(), 3, DEFAULT_DAMPING_ETA)?;
    let cfg = SimConfig::default();
    let mut s0 = State::straight(&chain, [0.0, 0.2], 0.3);
    for (i, a) in s0.joint_angles.iter_mut().enumerate() {
        *a = 0.05 * (i as f64).sin();
    }
    s0.base_velocity = [0.3, 1.0];
    s0.base_angular_velocity = 2.0;
    let c0 = center_of_mass(&chain, &s0);
    let v0 = motorlink::dynamics::linear_momentum(&chain, &s0).map(|p| p / chain.total_mass());
    let volts = [200.0, -400.0, 0.0, 100.0, -50.0];
    let traj = simulate(&chain, &Waveform::constant(&volts), None, &s0, 0.2, &cfg)?;
    let (dt, g) = (cfg.timestep, cfg.gravity);
    let mut worst_discrete: f64 = 0.0;
    let mut worst_continuous: f64 = 0.0;
    for s in &traj.samples {
        let t = s.time;
        let c = center_of_mass(&chain, &s.state);
        // Semi-implicit Euler advances a constant acceleration exactly as
        // y = y0 + v0 t - g t (t + dt) / 2.
        let discrete = [c0[0] + v0[0] * t, c0[1] + v0[1] * t - 0.5 * g * t * (t + dt)];
        let continuous = [c0[0] + v0[0] * t, c0[1] + v0[1] * t - 0.5 * g * t * t];
        worst_discrete = worst_discrete.max((c[0] - discrete[0]).hypot(c[1] - discrete[1]));
        worst_continuous = worst_continuous.max((c[0] - continuous[0]).hypot(c[1] - continuous[1]));
    }
    pass &= worst_discrete < 1e-6;
    notes.push(format!(
        "ballistic deviation {worst_discrete:.1e} m (from the continuous parabola {worst_continuous:.1e} m, the integrator's g t dt / 2)"
    ));

    // Energy never increases without drive. Once the flexible modes have
    // decayed the total is almost all rigid-body kinetic energy, and
    // summing it rounds at the 1e-16 relative level.
    let free = SimConfig { gravity: 0.0, ..cfg };
    let zeros = [0.0; 5];
    let mut last = f64::INFINITY;
    let mut rises = 0usize;
    let mut worst_rise: f64 = 0.0;
    const ROUNDOFF: f64 = 1e-13;
    let mut observe = |s: &State, _: Option<&[Vec2]>| {
        let e = kinetic_energy(&chain, s) + spring_energy(&chain, s, &zeros);
        if e > last * (1.0 + ROUNDOFF) {
            rises += 1;
        }
        if e > last {
            worst_rise = worst_rise.max((e - last) / last);
        }
        last = e;
    };
    simulate_observed(&chain, &Waveform::zero(5), None, &s0, 0.5, &free, &mut observe)?;
    pass &= rises == 0;
    notes.push(format!(
        "energy rises beyond {ROUNDOFF:.0e} relative round-off {rises} (largest relative rise {worst_rise:.1e})"
    ));

    // Friction cone at every step of an inchworm run.
    let setup = Setup::default();
    let rest = motorlink::harness::rest_state(&setup, &chain)?;
    let mu = chain.node_friction();
    let mut violations = 0usize;
    let mut contacts = 0usize;
    let mut check = |_: &State, f: Option<&[Vec2]>| {
        for (k, force) in f.unwrap().iter().enumerate() {
            if force[1] > 0.0 {
                contacts += 1;
            }
            if force[0].abs() > mu[k] * force[1] * (1.0 + 1e-12) || force[1] < 0.0 {
                violations += 1;
            }
        }
    };
    let w = build_inchworm(&INCHWORM_VOLTAGES, 1.0)?;
    simulate_observed(&chain, &w, Some(&setup.ground), &rest, 2.0, &setup.sim, &mut check)?;
    pass &= violations == 0 && contacts > 0;
    notes.push(format!("friction cone violations {violations} of {contacts} contacts"));

    // Bit-identical reruns.
    let a = run_inchworm(&setup, 0.5, 2, &INCHWORM_VOLTAGES, InchwormPattern::Standard)?;
    let b = run_inchworm(&setup, 0.5, 2, &INCHWORM_VOLTAGES, InchwormPattern::Standard)?;
    let bits = |r: &ExperimentReport| -> Vec<u64> {
        r.series
            .iter()
            .flat_map(|s| s.rows.iter().flatten().map(|x| x.to_bits()))
            .chain(r.metrics.values().map(|m| m.value.to_bits()))
            .collect()
    };
    let identical = bits(&a) == bits(&b);
    pass &= identical;
    notes.push(format!("reruns bit-identical {identical}"));

    outcome(pass, notes.join("; "))
}

type Criterion = fn() -> Result<Outcome, HarnessError>;

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("composite beam oracle", c1),
        ("static cantilever", c2),
        ("m-convergence", c3),
        ("AC resonance", c4),
        ("damping round-trip", c5),
        ("static robot shapes", c6),
        ("inchworm stride", c7),
        ("jump structure at 14 Hz", c8),
        ("speed-frequency reversal", c9),
        ("numerics properties", c10),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {n:>2} {}: {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: {} of 10 criteria fail: {failed:?}", failed.len());
        std::process::exit(1);
    }
}
