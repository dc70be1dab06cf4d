//! Behaviour of each experiment against its quasi-static, symmetry and
//! scaling expectations.

use std::sync::OnceLock;

use motorlink::harness::{has_reversal_pattern, DampingFitMethod};
use motorlink::*;

fn cantilever_eta(eta: f64) -> Setup {
    Setup {
        damping_eta: eta,
        ..Setup::cantilever()
    }
}

fn parallel() -> Setup {
    Setup {
        parallel: true,
        ..Setup::default()
    }
}

const AC: SineDrive = SineDrive {
    offset: -750.0,
    amplitude: 750.0,
};

fn ac_amplitudes(setup: &Setup, freqs: &[f64], m: usize) -> ExperimentReport {
    run_cantilever_ac(setup, freqs, AC, m, 10, 3).unwrap()
}

fn check_report(r: &ExperimentReport) {
    for (k, m) in &r.metrics {
        assert!(!m.unit.is_empty(), "{k} has no unit");
        assert!(m.value.is_finite(), "{k} = {}", m.value);
    }
    for s in &r.series {
        assert!(s.rows.iter().all(|row| row.len() == s.columns.len()));
        if s.columns[0] == "time_s" || s.columns[0] == "frequency_Hz" {
            assert!(s.rows.windows(2).all(|w| w[1][0] > w[0][0]), "{} abscissa not increasing", s.name);
        }
    }
}

// Cantilever statics

#[test]
fn zero_voltage_cantilever_is_flat() {
    let r = run_cantilever_static(&Setup::cantilever(), &[0.0], 3).unwrap();
    assert!(r.metric("tip_deflection_m").unwrap().abs() < 1e-12);
    check_report(&r);
}

#[test]
fn cantilever_bend_is_linear_in_voltage() {
    let r = run_cantilever_static(&Setup::cantilever(), &[-1000.0, 500.0], 3).unwrap();
    let full = r.metric("tip_deflection_m@-1000V").unwrap();
    let half = r.metric("tip_deflection_m@500V").unwrap();
    assert!((full + 0.020).abs() < 0.5e-3, "{full}");
    assert!(half > 0.0);
    assert!((half / -full - 0.5).abs() < 0.05 * 0.5, "{half} vs {full}");
    check_report(&r);
}

// Cantilever AC response

#[test]
fn slow_drive_follows_the_static_bend() {
    let r = ac_amplitudes(&Setup::cantilever(), &[1.0], 3);
    let a = r.metric("peak_amplitude_m").unwrap();
    let q = r.metric("quasi_static_amplitude_m").unwrap();
    assert!((a - q).abs() < 0.10 * q, "{a} vs {q}");
    check_report(&r);
}

#[test]
fn drive_at_resonance_amplifies_the_tip() {
    let r = ac_amplitudes(&Setup::cantilever(), &[5.0, 25.0], 3);
    let a = r.series("amplitude").unwrap().column("amplitude_m").unwrap();
    assert!(a[1] > 3.0 * a[0], "25 Hz {} m vs 5 Hz {} m", a[1], a[0]);
}

#[test]
fn resonance_converges_with_motor_count() {
    let freqs: Vec<f64> = (14..=34).step_by(2).map(f64::from).collect();
    let setup = Setup {
        parallel: true,
        ..Setup::cantilever()
    };
    let res = |m| ac_amplitudes(&setup, &freqs, m).metric("resonance_frequency_Hz").unwrap();
    let (r1, r3, r5) = (res(1), res(3), res(5));
    assert!((r1 - r5).abs() > (r3 - r5).abs(), "m=1 {r1} Hz, m=3 {r3} Hz, m=5 {r5} Hz");
}

#[test]
fn linear_first_mode_converges_with_motor_count() {
    let f = |m| {
        ac_amplitudes(&Setup::cantilever(), &[1.0], m)
            .metric("linear_first_mode_Hz")
            .unwrap()
    };
    let analytic = ac_amplitudes(&Setup::cantilever(), &[1.0], 1)
        .metric("analytic_first_mode_Hz")
        .unwrap();
    let (e1, e3, e5) = ((f(1) - analytic).abs(), (f(3) - analytic).abs(), (f(5) - analytic).abs());
    assert!(e1 > e3 && e3 > e5, "{e1} {e3} {e5}");
    assert!((analytic - 23.0).abs() < 1.0);
}

// Damping

#[test]
fn damping_round_trip() {
    let fit = calibrate_damping(&Setup::cantilever(), -1000.0, 3).unwrap();
    assert!((fit.eta - 0.03).abs() < 0.003, "{}", fit.eta);
}

#[test]
fn undamped_step_rings_without_decay() {
    let fit = calibrate_damping(&cantilever_eta(0.0), -1000.0, 3).unwrap();
    assert_eq!(fit.method, DampingFitMethod::LogDecrement);
    assert!(fit.decrement.abs() < 0.1, "{}", fit.decrement);
    assert!(fit.overshoot_peaks.len() >= 2);
}

#[test]
fn more_damping_leaves_fewer_visible_peaks() {
    let peaks = |eta| calibrate_damping(&cantilever_eta(eta), -1000.0, 3).unwrap().peaks_above(0.01);
    let (lo, hi) = (peaks(0.002), peaks(0.004));
    let ratio = lo as f64 / hi as f64;
    assert!((1.6..=2.4).contains(&ratio), "{lo} peaks at 0.002 s, {hi} at 0.004 s");
}

// Static shapes on the ground

#[test]
fn unpowered_robot_lies_flat() {
    let r = run_static_shape(&Setup::default(), &[0.0; 5]).unwrap();
    assert!(r.metric("max_height_m").unwrap() < 0.2e-3);
    check_report(&r);
}

#[test]
fn centre_drive_arches_with_both_ends_down() {
    let r = run_static_shape(&Setup::default(), &[0.0, 300.0, -960.0, 300.0, 0.0]).unwrap();
    assert!(r.metric("left_end_height_m").unwrap() < 0.2e-3);
    assert!(r.metric("right_end_height_m").unwrap() < 0.2e-3);
    assert!(r.metric("mid_height_m").unwrap() > 1e-3);
}

#[test]
fn lifting_drive_raises_only_the_left_end() {
    let r = run_static_shape(&Setup::default(), &[300.0, 300.0, -960.0, 300.0, 0.0]).unwrap();
    assert!(r.metric("left_end_height_m").unwrap() > 1e-3);
    assert!(r.metric("right_end_height_m").unwrap() < 0.2e-3);
}

// Inchworm

#[test]
fn inchworm_stride_is_in_band() {
    let r = run_inchworm(&Setup::default(), 1.0, 8, &INCHWORM_VOLTAGES, InchwormPattern::Standard).unwrap();
    let stride = r.metric("stride_m_per_cycle").unwrap();
    assert!((0.95e-3..=2.85e-3).contains(&stride), "{stride} m/cycle");
    check_report(&r);
}

#[test]
fn symmetric_inchworm_goes_nowhere() {
    let r = run_inchworm(&Setup::default(), 1.0, 6, &INCHWORM_VOLTAGES, InchwormPattern::Symmetric).unwrap();
    assert!(r.metric("stride_m_per_cycle").unwrap().abs() < 0.2e-3);
}

#[test]
fn slow_inchworm_stride_is_rate_independent() {
    let stride = |p| {
        run_inchworm(&Setup::default(), p, 6, &INCHWORM_VOLTAGES, InchwormPattern::Standard)
            .unwrap()
            .metric("stride_m_per_cycle")
            .unwrap()
    };
    let (a, b) = (stride(1.0), stride(2.0));
    assert!((a - b).abs() < 0.10 * a.abs(), "1 s {a} m, 2 s {b} m");
}

// Jumping

fn jump14() -> &'static ExperimentReport {
    static R: OnceLock<ExperimentReport> = OnceLock::new();
    R.get_or_init(|| run_jump(&Setup::default(), 14.0, 3.0, JUMP_VOLTAGES).unwrap())
}

#[test]
fn jump_has_airborne_phases() {
    let r = jump14();
    assert!(r.metric("airborne_intervals").unwrap() >= 1.0);
    check_report(r);
}

#[test]
fn jump_height_is_in_band() {
    let h = jump14().metric("jump_height_m").unwrap();
    assert!((3e-3..=16e-3).contains(&h), "{h} m");
}

#[test]
fn jump_motion_doubles_the_drive_period() {
    let ratio = jump14().metric("period_ratio").unwrap();
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
}

#[test]
fn jump_midpoint_and_endpoint_peak_out_of_phase() {
    let phase = jump14().metric("phase_shift_cycles").unwrap();
    assert!(phase.abs() > 0.02, "{phase}");
}

#[test]
fn symmetric_jump_has_no_net_drift() {
    let r = run_jump(&Setup::default(), 14.0, 20.0 / 14.0, JUMP_VOLTAGES).unwrap();
    let net = r.metric("net_displacement_m").unwrap();
    assert!(net.abs() < 1e-3, "{net} m");
}

#[test]
fn slow_jump_drive_stays_grounded() {
    let r = run_jump(&Setup::default(), 1.0, 10.0, JUMP_VOLTAGES).unwrap();
    assert_eq!(r.metric("airborne_intervals").unwrap(), 0.0);
    assert!(r.metric("jump_height_m").unwrap() < 0.2e-3);
}

// Speed sweep

const SWEEP: [f64; 11] = [1.0, 2.0, 3.0, 6.0, 7.0, 8.0, 9.0, 10.0, 12.0, 14.0, 16.0];

fn sweep() -> &'static ExperimentReport {
    static R: OnceLock<ExperimentReport> = OnceLock::new();
    R.get_or_init(|| run_speed_sweep(&parallel(), &SWEEP, 8, &INCHWORM_VOLTAGES).unwrap())
}

fn speeds(r: &ExperimentReport) -> Vec<f64> {
    r.series("speed").unwrap().column("speed_m_per_s").unwrap()
}

#[test]
fn slow_sweep_moves_forward() {
    let v = speeds(sweep());
    assert!(v[..3].iter().all(|s| *s > 0.0), "{v:?}");
    check_report(sweep());
}

#[test]
fn sweep_reverses_then_recovers() {
    assert!(has_reversal_pattern(&SWEEP, &speeds(sweep()), 3.0, (6.0, 10.0)));
}

#[test]
fn fast_gait_visits_every_contact_class() {
    let table = sweep().series("contact_classes").unwrap();
    let row = table.rows.iter().find(|r| r[0] == 14.0).unwrap();
    assert!(row[1] > 0.0, "no body-touching instant");
    assert!(row[2] > 0.0, "no end-touching instant");
    assert!(row[3] > 0.0, "no aerial instant");
}

#[test]
fn null_drive_sweep_has_zero_speed() {
    let r = run_speed_sweep(&Setup::default(), &[2.0, 8.0, 14.0], 4, &[0.0; 5]).unwrap();
    assert!(speeds(&r).iter().all(|v| v.abs() < 1e-6), "{:?}", speeds(&r));
}

#[test]
fn parallel_sweep_matches_serial() {
    let freqs = [3.0, 9.0, 14.0];
    let a = run_speed_sweep(&Setup::default(), &freqs, 3, &INCHWORM_VOLTAGES).unwrap();
    let b = run_speed_sweep(&parallel(), &freqs, 3, &INCHWORM_VOLTAGES).unwrap();
    assert_eq!(a, b);
    let c = run_cantilever_ac(&Setup::cantilever(), &freqs, AC, 3, 2, 1).unwrap();
    let d = run_cantilever_ac(
        &Setup {
            parallel: true,
            ..Setup::cantilever()
        },
        &freqs,
        AC,
        3,
        2,
        1,
    )
    .unwrap();
    assert_eq!(c, d);
}
