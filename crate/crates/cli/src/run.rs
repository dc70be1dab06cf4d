//! Dispatch from a validated config to the harness.

use std::collections::BTreeMap;

use motorlink::dynamics::{center_of_mass, simulate};
use motorlink::harness::{rest_state, DampingFitMethod};
use motorlink::{
    calibrate_damping, run_cantilever_ac, run_cantilever_static, run_inchworm, run_jump, run_speed_sweep,
    run_static_shape, Anchor, ExperimentReport, HarnessError, Metric, Series, ShapeSnapshot, SimConfig, SineDrive,
    State, Waveform,
};

use crate::config::{Experiment, RunConfig, SimulateAnchor};

/// Number of evenly spaced shape snapshots kept by `simulate`.
const SIMULATE_SNAPSHOTS: usize = 10;

pub fn execute(cfg: &RunConfig) -> Result<ExperimentReport, HarnessError> {
    let setup = cfg
        .setup()
        .map_err(|e| HarnessError::InvalidInput(e.to_string()))?;
    let m = cfg.discretization.m;
    match &cfg.experiment {
        Experiment::CantileverStatic(e) => run_cantilever_static(&setup, &e.voltages, m),
        Experiment::CantileverAc(e) => run_cantilever_ac(
            &setup,
            &e.frequencies,
            SineDrive {
                offset: e.offset,
                amplitude: e.amplitude,
            },
            m,
            e.settle_cycles,
            e.measure_cycles,
        ),
        Experiment::DampingCalibration(e) => {
            let fit = calibrate_damping(&setup, e.step_voltage, m)?;
            let mut metrics = BTreeMap::new();
            let mut set = |k: &str, value: f64, unit: &str| {
                metrics.insert(k.to_string(), Metric { value, unit: unit.into() });
            };
            set("eta_s", fit.eta, "s");
            set("configured_eta_s", setup.damping_eta, "s");
            set("relative_error", (fit.eta - setup.damping_eta) / setup.damping_eta, "1");
            set("log_decrement", fit.decrement, "1");
            set("first_mode_Hz", fit.first_mode / std::f64::consts::TAU, "Hz");
            set("overshoot_peaks", fit.overshoot_peaks.len() as f64, "1");
            set("peaks_above_1pct", fit.peaks_above(0.01) as f64, "1");
            set(
                "overdamped_fit",
                f64::from(u8::from(fit.method == DampingFitMethod::OverdampedTail)),
                "1",
            );
            if let Some(p) = fit.tail_rate {
                set("tail_rate_per_s", p, "1/s");
            }
            let series = vec![
                Series {
                    name: "step_response".into(),
                    columns: vec!["time_s".into(), "tip_y_m".into()],
                    rows: fit.tip_response.iter().map(|(t, y)| vec![*t, *y]).collect(),
                },
                Series {
                    name: "overshoot_peaks".into(),
                    columns: vec!["peak_time_s".into(), "modal_amplitude_sqrt_kg_m".into()],
                    rows: fit.overshoot_peaks.iter().map(|(t, a)| vec![*t, *a]).collect(),
                },
            ];
            Ok(ExperimentReport {
                experiment: "damping-calibration".into(),
                metrics,
                series,
                shapes: Vec::new(),
            })
        }
        Experiment::StaticShape(e) => run_static_shape(&setup, &e.voltages),
        Experiment::Inchworm(e) => run_inchworm(&setup, e.cycle_period, e.cycles, &e.on_voltages, e.pattern),
        Experiment::Jump(e) => run_jump(
            &setup,
            e.frequency,
            cfg.simulation.duration.unwrap_or_default(),
            e.on_voltages,
        ),
        Experiment::SpeedSweep(e) => run_speed_sweep(&setup, &e.frequencies, e.cycles_per_frequency, &e.on_voltages),
        Experiment::Simulate(e) => {
            let drive = cfg
                .drive
                .as_ref()
                .ok_or_else(|| HarnessError::InvalidInput("simulate needs a drive block".into()))?;
            let waveform = Waveform::new(drive.channels.clone())?;
            let chain = setup.chain()?;
            let duration = cfg.simulation.duration.unwrap_or_default();
            let (sim, ground, initial) = match e.anchor {
                SimulateAnchor::Ground => (setup.sim, Some(setup.ground), rest_state(&setup, &chain)?),
                SimulateAnchor::Clamped => (
                    SimConfig {
                        anchor: Anchor::Clamped {
                            position: [0.0, 0.0],
                            orientation: 0.0,
                        },
                        ..setup.sim
                    },
                    None,
                    State::straight(&chain, [0.0, 0.0], 0.0),
                ),
            };
            let traj = simulate(&chain, &waveform, ground.as_ref(), &initial, duration, &sim)?;
            let mut series = Series {
                name: "trajectory".into(),
                columns: ["time_s", "com_x_m", "com_y_m", "tip_x_m", "tip_y_m", "clearance_m"]
                    .iter()
                    .take(if ground.is_some() { 6 } else { 5 })
                    .map(|c| c.to_string())
                    .collect(),
                rows: Vec::with_capacity(traj.samples.len()),
            };
            let height = setup.ground.height;
            for s in &traj.samples {
                let com = center_of_mass(&chain, &s.state);
                let tip = *s.nodes.last().unwrap();
                let mut row = vec![s.time, com[0], com[1], tip[0], tip[1]];
                if ground.is_some() {
                    row.push(s.nodes.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - height);
                }
                series.rows.push(row);
            }
            let first = &series.rows[0];
            let last = series.rows.last().unwrap();
            let mut metrics = BTreeMap::new();
            let mut set = |k: &str, value: f64, unit: &str| {
                metrics.insert(k.to_string(), Metric { value, unit: unit.into() });
            };
            set("duration_s", duration, "s");
            set("net_displacement_m", last[1] - first[1], "m");
            set("final_tip_y_m", last[4], "m");
            if ground.is_some() {
                set(
                    "max_clearance_m",
                    series.rows.iter().map(|r| r[5]).fold(f64::NEG_INFINITY, f64::max),
                    "m",
                );
            }
            let n = traj.samples.len();
            let shapes = (0..SIMULATE_SNAPSHOTS)
                .map(|q| {
                    let s = &traj.samples[q * (n - 1) / (SIMULATE_SNAPSHOTS - 1)];
                    ShapeSnapshot {
                        tag: format!("t = {} s", s.time),
                        time: s.time,
                        nodes: s.nodes.clone(),
                    }
                })
                .collect();
            Ok(ExperimentReport {
                experiment: "simulate".into(),
                metrics,
                series: vec![series],
                shapes,
            })
        }
    }
}
