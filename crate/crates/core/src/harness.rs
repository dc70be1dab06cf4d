//! Scripted experiments with metric extraction: cantilever statics and AC
//! response, damping identification, robot static shapes, inchworm and jump
//! gaits, and drive-frequency sweeps.
//!
//! Every dynamic run discards its first quarter as start-up transient before
//! metrics are taken.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{discretize_robot, ChainError, MotorLinkChain};
use crate::contact::{contact_forces, GroundModel};
use crate::drive::{build_inchworm, build_inchworm_symmetric, build_jump, build_sine, build_step, DriveError, Waveform};
use crate::dynamics::{
    self, forward_kinematics, simulate, simulate_observed, solve_static, Anchor, DynamicsError, Kinematics, SimConfig,
    State, StaticAnchor, Trajectory, Vec2,
};
use crate::model::{ModelError, RobotSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error("invalid experiment input: {0}")]
    InvalidInput(String),
    #[error("step response shows no usable decay: {0}")]
    Overdamped(String),
    #[error("no dominant period: {0}")]
    NoPeriod(String),
}

/// Motor damping used unless configured otherwise (s).
pub const DEFAULT_DAMPING_ETA: f64 = 0.03;
/// Leading fraction of every dynamic run treated as start-up transient.
pub const TRANSIENT_FRACTION: f64 = 0.25;
/// Minimum length of an airborne interval counted by [`run_jump`] (s).
pub const MIN_AIRBORNE_INTERVAL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub unit: String,
}

/// A table whose first column is the abscissa. Column names carry their unit
/// as a suffix (`time_s`, `com_x_m`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSnapshot {
    pub tag: String,
    pub time: f64,
    pub nodes: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub metrics: BTreeMap<String, Metric>,
    pub series: Vec<Series>,
    pub shapes: Vec<ShapeSnapshot>,
}

impl ExperimentReport {
    fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.into(),
            metrics: BTreeMap::new(),
            series: Vec::new(),
            shapes: Vec::new(),
        }
    }

    fn set(&mut self, name: impl Into<String>, value: f64, unit: &str) {
        self.metrics.insert(
            name.into(),
            Metric {
                value,
                unit: unit.into(),
            },
        );
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }
}

/// Physical setup shared by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub robot: RobotSpec,
    pub motors_per_actuator: usize,
    /// s
    pub damping_eta: f64,
    pub sim: SimConfig,
    pub ground: GroundModel,
    /// Run independent per-frequency simulations on a thread pool.
    pub parallel: bool,
}

impl Default for Setup {
    /// Five-actuator robot under gravity on the default ground.
    fn default() -> Self {
        Self {
            robot: RobotSpec::five_actuator(),
            motors_per_actuator: 3,
            damping_eta: DEFAULT_DAMPING_ETA,
            sim: SimConfig::default(),
            ground: GroundModel::default(),
            parallel: false,
        }
    }
}

impl Setup {
    /// Single clamped actuator with gravity off, so the voltage-driven bend
    /// alone sets the shape.
    pub fn cantilever() -> Self {
        Self {
            robot: RobotSpec::single_actuator(),
            sim: SimConfig {
                gravity: 0.0,
                ..SimConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn chain(&self) -> Result<MotorLinkChain, HarnessError> {
        self.chain_with(self.motors_per_actuator)
    }

    pub fn chain_with(&self, m: usize) -> Result<MotorLinkChain, HarnessError> {
        Ok(discretize_robot(&self.robot, m, self.damping_eta)?)
    }

    fn map_ordered<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>, HarnessError>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R, HarnessError> + Sync + Send,
    {
        if self.parallel {
            items.par_iter().map(f).collect()
        } else {
            items.iter().map(f).collect()
        }
    }
}

const CLAMP: StaticAnchor = StaticAnchor::Clamp {
    position: [0.0, 0.0],
    orientation: 0.0,
};

fn clamped(sim: &SimConfig) -> SimConfig {
    SimConfig {
        anchor: Anchor::Clamped {
            position: [0.0, 0.0],
            orientation: 0.0,
        },
        ..*sim
    }
}

fn metric_key(base: &str, voltage: f64, many: bool) -> String {
    if many {
        format!("{base}@{voltage}V")
    } else {
        base.to_string()
    }
}

/// Point at arc length `s` on the continuous clamped strip whose actuators
/// bend with uniform curvature `γ·V` each (clamped at the origin along +x).
pub fn arc_point(robot: &RobotSpec, voltages: &[f64], s: f64) -> Result<Vec2, HarnessError> {
    let mut p = [0.0, 0.0];
    let mut phi = 0.0_f64;
    let mut start = 0.0;
    for (a, act) in robot.actuators.iter().enumerate() {
        let kappa = act.gamma()? * voltages.get(a).copied().unwrap_or(0.0);
        let ds = (s - start).clamp(0.0, act.length);
        if kappa.abs() < 1e-300 {
            p = [p[0] + ds * phi.cos(), p[1] + ds * phi.sin()];
        } else {
            let end = phi + kappa * ds;
            p = [
                p[0] + (end.sin() - phi.sin()) / kappa,
                p[1] + (phi.cos() - end.cos()) / kappa,
            ];
            phi = end;
        }
        start += act.length;
        if s <= start {
            break;
        }
    }
    Ok(p)
}

fn node_arc_lengths(chain: &MotorLinkChain) -> Vec<f64> {
    let mut s = vec![0.0];
    for l in &chain.links {
        s.push(s.last().unwrap() + l.length);
    }
    s
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Clamped static shapes for each voltage (applied to every actuator).
/// Reports the tip deflection and the deviation of the discrete shape from
/// the continuous uniform-curvature arc.
pub fn run_cantilever_static(setup: &Setup, voltages: &[f64], m: usize) -> Result<ExperimentReport, HarnessError> {
    if voltages.is_empty() {
        return Err(HarnessError::InvalidInput("no voltages given".into()));
    }
    let chain = setup.chain_with(m)?;
    let s_nodes = node_arc_lengths(&chain);
    let length = chain.total_length();
    let n_act = setup.robot.actuators.len();
    let many = voltages.len() > 1;
    let mut report = ExperimentReport::new("cantilever-static");
    let mut table = Series::new(
        "cantilever_static",
        &[
            "voltage_V",
            "tip_x_m",
            "tip_deflection_m",
            "arc_tip_deflection_m",
            "tip_error_m",
            "shape_error_m",
        ],
    );
    for &v in voltages {
        let volts = vec![v; n_act];
        let sol = solve_static(&chain, &volts, &CLAMP, &setup.sim, None)?;
        let nodes = forward_kinematics(&chain, &sol.state);
        let tip = *nodes.last().unwrap();
        let arc_tip = arc_point(&setup.robot, &volts, length)?;
        let mut shape_error: f64 = 0.0;
        for (p, s) in nodes.iter().zip(&s_nodes) {
            shape_error = shape_error.max(dist(*p, arc_point(&setup.robot, &volts, *s)?));
        }
        let tip_error = dist(tip, arc_tip);
        let angles = &sol.state.joint_angles;
        let (lo, hi) = angles
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        table.rows.push(vec![v, tip[0], tip[1], arc_tip[1], tip_error, shape_error]);
        report.set(metric_key("tip_deflection_m", v, many), tip[1], "m");
        report.set(metric_key("arc_tip_deflection_m", v, many), arc_tip[1], "m");
        report.set(metric_key("tip_error_m", v, many), tip_error, "m");
        report.set(metric_key("shape_error_m", v, many), shape_error, "m");
        report.set(
            metric_key("motor_angle_spread_rad", v, many),
            if angles.is_empty() { 0.0 } else { hi - lo },
            "rad",
        );
        report.shapes.push(ShapeSnapshot {
            tag: format!("{v} V"),
            time: 0.0,
            nodes,
        });
    }
    report.set("length_m", length, "m");
    report.series.push(table);
    Ok(report)
}

/// Sinusoidal drive `offset + amplitude·sin(2πft)` applied to every actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineDrive {
    /// V
    pub offset: f64,
    /// V
    pub amplitude: f64,
}

impl Default for SineDrive {
    /// Sweeps between 0 V and −1500 V.
    fn default() -> Self {
        Self {
            offset: -750.0,
            amplitude: 750.0,
        }
    }
}

/// Analytic first bending frequency of a uniform clamped-free strip (Hz),
/// `(1.875²/2π)·√(EI/μL⁴)`.
pub fn analytic_first_mode(flexural_rigidity: f64, linear_density: f64, length: f64) -> f64 {
    1.875_f64.powi(2) / std::f64::consts::TAU * (flexural_rigidity / (linear_density * length.powi(4))).sqrt()
}

/// Steady tip oscillation amplitude of the clamped chain over a grid of
/// drive frequencies. The resonance is the grid frequency with the largest
/// amplitude.
pub fn run_cantilever_ac(
    setup: &Setup,
    freqs: &[f64],
    drive: SineDrive,
    m: usize,
    settle_cycles: usize,
    measure_cycles: usize,
) -> Result<ExperimentReport, HarnessError> {
    if freqs.is_empty() || freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(HarnessError::InvalidInput("frequencies must be positive (Hz)".into()));
    }
    if measure_cycles == 0 {
        return Err(HarnessError::InvalidInput("measure_cycles must be >= 1".into()));
    }
    let chain = setup.chain_with(m)?;
    let cfg = clamped(&setup.sim);
    let n_act = setup.robot.actuators.len();
    let rest = State::straight(&chain, [0.0, 0.0], 0.0);

    let amplitudes = setup.map_ordered(freqs, |&f| {
        let mut w = build_sine(drive.offset, drive.amplitude, f)?;
        w.channels = vec![w.channels[0].clone(); n_act];
        let t_settle = settle_cycles as f64 / f;
        let duration = (settle_cycles + measure_cycles) as f64 / f;
        let mut kin = Kinematics::default();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut observe = |s: &State, _: Option<&[Vec2]>| {
            if s.time >= t_settle {
                kin.update(&chain, s);
                let y = kin.nodes.last().unwrap()[1];
                lo = lo.min(y);
                hi = hi.max(y);
            }
        };
        simulate_observed(&chain, &w, None, &rest, duration, &cfg, &mut observe)?;
        Ok(0.5 * (hi - lo))
    })?;

    let mut report = ExperimentReport::new("cantilever-ac");
    let mut table = Series::new("amplitude", &["frequency_Hz", "amplitude_m"]);
    for (f, a) in freqs.iter().zip(&amplitudes) {
        table.rows.push(vec![*f, *a]);
    }
    let (peak_i, peak) = amplitudes
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, b), (i, a)| if *a > b { (i, *a) } else { (bi, b) });
    report.set("resonance_frequency_Hz", freqs[peak_i], "Hz");
    report.set("peak_amplitude_m", peak, "m");

    // Quasi-static reference: half the tip travel between the drive extremes.
    let lo_v = vec![drive.offset - drive.amplitude.abs(); n_act];
    let hi_v = vec![drive.offset + drive.amplitude.abs(); n_act];
    let tip = |v: &[f64]| -> Result<f64, HarnessError> {
        let s = solve_static(&chain, v, &CLAMP, &setup.sim, None)?;
        Ok(forward_kinematics(&chain, &s.state).last().unwrap()[1])
    };
    report.set("quasi_static_amplitude_m", 0.5 * (tip(&hi_v)? - tip(&lo_v)?).abs(), "m");

    let beam = setup.robot.actuators[0].beam();
    report.set(
        "analytic_first_mode_Hz",
        analytic_first_mode(beam.flexural_rigidity, beam.linear_density, chain.total_length()),
        "Hz",
    );
    let modes = dynamics::linear_modes(&chain, &rest, cfg.anchor)?;
    report.set("linear_first_mode_Hz", modes.frequencies[0] / std::f64::consts::TAU, "Hz");
    let eta = setup.damping_eta;
    report.set("first_mode_damping_ratio", 0.5 * eta * modes.frequencies[0], "1");
    report.series.push(table);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingFitMethod {
    /// Logarithmic decrement of successive overshoot peaks.
    LogDecrement,
    /// Non-oscillatory response: decay rate of the exponential tail,
    /// inverted through the overdamped pole relation.
    OverdampedTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingFit {
    /// s
    pub eta: f64,
    pub method: DampingFitMethod,
    /// Per-cycle logarithmic decrement (0 when not oscillating).
    pub decrement: f64,
    /// `(time s, |amplitude|)` of each overshoot lobe of the first-mode
    /// coordinate.
    pub overshoot_peaks: Vec<(f64, f64)>,
    /// Fitted exponential decay rate of the tail (1/s), overdamped fits only.
    pub tail_rate: Option<f64>,
    /// Undamped first-mode angular frequency about the final shape (rad/s).
    pub first_mode: f64,
    /// First-mode coordinate at the instant of the step.
    pub initial_amplitude: f64,
    /// Tip height versus time.
    pub tip_response: Vec<(f64, f64)>,
}

impl DampingFit {
    /// Number of overshoot peaks whose amplitude exceeds `fraction` of the
    /// initial step.
    pub fn peaks_above(&self, fraction: f64) -> usize {
        let initial = self.initial_amplitude;
        self.overshoot_peaks.iter().filter(|(_, a)| *a > fraction * initial).count()
    }
}

/// Identifies the motor damping η from the clamped cantilever's response to
/// a voltage step.
///
/// The ring-down is projected on the first linear mode about the final shape
/// (with stiffness-proportional damping the modes decouple). If it overshoots
/// at least twice, η follows from the logarithmic decrement; otherwise from
/// the decay rate of the exponential tail.
pub fn calibrate_damping(setup: &Setup, step_voltage: f64, m: usize) -> Result<DampingFit, HarnessError> {
    if !(step_voltage.is_finite() && step_voltage != 0.0) {
        return Err(HarnessError::InvalidInput("step voltage must be nonzero".into()));
    }
    let chain = setup.chain_with(m)?;
    let n_act = setup.robot.actuators.len();
    let volts = vec![step_voltage; n_act];
    let cfg = SimConfig {
        sample_every: 1,
        ..clamped(&setup.sim)
    };
    let fin = solve_static(&chain, &volts, &CLAMP, &setup.sim, None)?.state;
    let modes = dynamics::linear_modes(&chain, &fin, cfg.anchor)?;
    let w1 = modes.frequencies[0];
    let shape = &modes.shapes[0];
    let mass = dynamics::mass_matrix(&chain, &fin, cfg.anchor)?;
    // Modal coordinate: a = φᵀ M (θ − θ∞).
    let weights: Vec<f64> = (0..shape.len())
        .map(|j| (0..shape.len()).map(|i| shape[i] * mass[(i, j)]).sum())
        .collect();
    let modal = |s: &State| -> f64 {
        s.joint_angles
            .iter()
            .zip(&fin.joint_angles)
            .zip(&weights)
            .map(|((a, b), w)| w * (a - b))
            .sum()
    };

    let eta = setup.damping_eta;
    // Long enough for 20 first-mode periods and 15 damping time constants.
    let duration = (20.0 * std::f64::consts::TAU / w1).max(15.0 * eta);
    let mut w = build_step(step_voltage, 0.0)?;
    w.channels = vec![w.channels[0].clone(); n_act];
    let rest = State::straight(&chain, [0.0, 0.0], 0.0);
    let traj = simulate(&chain, &w, None, &rest, duration, &cfg)?;

    let series: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.time, modal(&s.state))).collect();
    let tip_response = traj.samples.iter().map(|s| (s.time, s.nodes.last().unwrap()[1])).collect();
    let e0 = series[0].1;
    if e0 == 0.0 {
        return Err(HarnessError::Overdamped("the step does not move the first mode".into()));
    }

    // Lobes between sign changes; the first is the initial approach.
    let mut lobes: Vec<(f64, f64)> = Vec::new();
    let mut sign = e0.signum();
    let mut current: Option<(f64, f64)> = None;
    for &(t, e) in &series[1..] {
        if e.signum() != sign && e != 0.0 {
            if let Some(l) = current.take() {
                lobes.push(l);
            }
            sign = e.signum();
            current = Some((t, e.abs()));
        } else if let Some(l) = current.as_mut() {
            if e.abs() > l.1 {
                *l = (t, e.abs());
            }
        }
    }
    // Ignore ripples at the level of the static-solve tolerance.
    let floor = 1e-7 * e0.abs();
    lobes.retain(|l| l.1 > floor);

    let mut fit = DampingFit {
        eta: f64::NAN,
        method: DampingFitMethod::LogDecrement,
        decrement: 0.0,
        overshoot_peaks: lobes.clone(),
        tail_rate: None,
        first_mode: w1,
        initial_amplitude: e0.abs(),
        tip_response,
    };

    if lobes.len() >= 2 {
        let n = lobes.len() - 1;
        let half: f64 = lobes.windows(2).map(|p| (p[0].1 / p[1].1).ln()).sum::<f64>() / n as f64;
        let spacing = (lobes[n].0 - lobes[0].0) / n as f64;
        let delta = 2.0 * half;
        let zeta = delta / (4.0 * std::f64::consts::PI.powi(2) + delta * delta).sqrt();
        let wd = std::f64::consts::PI / spacing;
        let wn = wd / (1.0 - zeta * zeta).sqrt();
        fit.decrement = delta;
        fit.eta = 2.0 * zeta / wn;
        return Ok(fit);
    }

    // Exponential tail: |a| from 1e-2 down to 1e-5 of the initial value.
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, e)| e.signum() == e0.signum() && e.abs() <= 1e-2 * e0.abs() && e.abs() >= 1e-5 * e0.abs())
        .map(|(t, e)| (*t, e.abs().ln()))
        .collect();
    if pts.len() < 10 {
        return Err(HarnessError::Overdamped(format!(
            "{} overshoot peaks and only {} tail samples within the fit window",
            lobes.len(),
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    let p = -sxy / sxx;
    if !(p > 0.0) {
        return Err(HarnessError::Overdamped("response does not decay".into()));
    }
    // Slow pole of s² + ηω²s + ω² = 0 equals p.
    fit.method = DampingFitMethod::OverdampedTail;
    fit.tail_rate = Some(p);
    fit.eta = (p * p + w1 * w1) / (p * w1 * w1);
    Ok(fit)
}

/// Static equilibrium of the robot resting on the ground at zero volts, left
/// end at `x = 0`.
pub fn rest_state(setup: &Setup, chain: &MotorLinkChain) -> Result<State, HarnessError> {
    let zeros = vec![0.0; setup.robot.actuators.len()];
    let mut s = solve_static(chain, &zeros, &StaticAnchor::Ground(setup.ground), &setup.sim, None)?.state;
    s.time = 0.0;
    Ok(s)
}

/// Which parts of the chain touch the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactClass {
    /// An interior node touches and is at least as low as both ends.
    BodyTouching,
    /// Only the two end nodes (either or both) touch.
    EndTouching,
    /// Nothing touches.
    Aerial,
    /// Ends and interior touch, with an end lowest.
    Mixed,
}

pub fn classify_contact(nodes: &[Vec2], ground_height: f64) -> ContactClass {
    let last = nodes.len() - 1;
    let touching: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k][1] < ground_height).collect();
    if touching.is_empty() {
        return ContactClass::Aerial;
    }
    if touching.iter().all(|&k| k == 0 || k == last) {
        return ContactClass::EndTouching;
    }
    // Ties go to the body, so a chain lying flat counts as body-touching.
    let interior = nodes[1..last].iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    if interior <= nodes[0][1].min(nodes[last][1]) {
        ContactClass::BodyTouching
    } else {
        ContactClass::Mixed
    }
}

/// Robot static shape on the ground under gravity.
pub fn run_static_shape(setup: &Setup, voltages: &[f64]) -> Result<ExperimentReport, HarnessError> {
    if voltages.len() != setup.robot.actuators.len() {
        return Err(HarnessError::InvalidInput(format!(
            "{} voltages for {} actuators",
            voltages.len(),
            setup.robot.actuators.len()
        )));
    }
    let chain = setup.chain()?;
    let g = setup.ground;
    let sol = solve_static(&chain, voltages, &StaticAnchor::Ground(g), &setup.sim, None)?;
    let nodes = forward_kinematics(&chain, &sol.state);
    let forces = contact_forces(&chain, &sol.state, &g);
    let s_nodes = node_arc_lengths(&chain);
    let h: Vec<f64> = nodes.iter().map(|p| p[1] - g.height).collect();
    let last = nodes.len() - 1;
    let mid = last / 2;

    let mut report = ExperimentReport::new("static-shape");
    let mut profile = Series::new(
        "profile",
        &["arc_length_m", "node_index", "x_m", "height_m", "normal_force_N"],
    );
    for k in 0..nodes.len() {
        profile.rows.push(vec![s_nodes[k], k as f64, nodes[k][0], h[k], forces[k][1]]);
    }
    let touching: Vec<usize> = (0..nodes.len()).filter(|&k| forces[k][1] > 0.0).collect();
    let peak = (0..nodes.len()).max_by(|&a, &b| h[a].total_cmp(&h[b])).unwrap();
    // Heights rise monotonically from the nearest touching node on each side
    // up to the highest node.
    let left_foot = touching.iter().copied().filter(|&k| k < peak).max();
    let right_foot = touching.iter().copied().filter(|&k| k > peak).min();
    let rising = left_foot.is_none_or(|a| (a..peak).all(|k| h[k + 1] >= h[k]));
    let falling = right_foot.is_none_or(|b| (peak..b).all(|k| h[k + 1] <= h[k]));

    report.set("left_end_height_m", h[0], "m");
    report.set("right_end_height_m", h[last], "m");
    report.set("mid_height_m", h[mid], "m");
    report.set("max_height_m", h[peak], "m");
    report.set("peak_node_index", peak as f64, "1");
    report.set("touching_nodes", touching.len() as f64, "1");
    report.set("left_end_touching", f64::from(u8::from(forces[0][1] > 0.0)), "1");
    report.set("right_end_touching", f64::from(u8::from(forces[last][1] > 0.0)), "1");
    report.set("arch_monotone", f64::from(u8::from(rising && falling)), "1");
    report.set("relaxation_steps", sol.steps as f64, "1");
    report.series.push(profile);
    report.shapes.push(ShapeSnapshot {
        tag: "static".into(),
        time: 0.0,
        nodes,
    });
    Ok(report)
}

/// Which inchworm schedule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InchwormPattern {
    #[default]
    Standard,
    /// Actuator 5 follows actuator 1, removing the end asymmetry.
    Symmetric,
}

fn centers_of_mass(chain: &MotorLinkChain, traj: &Trajectory) -> Vec<Vec2> {
    let m = chain.total_mass();
    let mut kin = Kinematics::default();
    traj.samples
        .iter()
        .map(|s| {
            kin.update(chain, &s.state);
            let c = chain
                .links
                .iter()
                .zip(&kin.centers)
                .fold([0.0; 2], |a, (l, x)| [a[0] + l.mass * x[0], a[1] + l.mass * x[1]]);
            [c[0] / m, c[1] / m]
        })
        .collect()
}

/// Index of the sample nearest to `t`.
fn sample_at(traj: &Trajectory, t: f64) -> usize {
    let t0 = traj.samples[0].time;
    (((t - t0) / traj.sample_interval).round() as usize).min(traj.samples.len() - 1)
}

/// First whole cycle after the transient fraction, and at least cycle 1.
fn first_steady_cycle(cycles: usize) -> usize {
    ((TRANSIENT_FRACTION * cycles as f64).ceil() as usize).max(1)
}

struct GaitRun {
    traj: Trajectory,
    com: Vec<Vec2>,
}

fn run_gait(setup: &Setup, chain: &MotorLinkChain, waveform: &Waveform, duration: f64) -> Result<GaitRun, HarnessError> {
    let rest = rest_state(setup, chain)?;
    let traj = simulate(chain, waveform, Some(&setup.ground), &rest, duration, &setup.sim)?;
    let com = centers_of_mass(chain, &traj);
    Ok(GaitRun { traj, com })
}

/// Inchworm gait from flat rest. Stride is the steady per-cycle advance of
/// the center of mass.
pub fn run_inchworm(
    setup: &Setup,
    cycle_period: f64,
    cycles: usize,
    on_voltages: &[f64],
    pattern: InchwormPattern,
) -> Result<ExperimentReport, HarnessError> {
    if cycles < 2 {
        return Err(HarnessError::InvalidInput("inchworm needs at least 2 cycles".into()));
    }
    let chain = setup.chain()?;
    let waveform = match pattern {
        InchwormPattern::Standard => build_inchworm(on_voltages, cycle_period)?,
        InchwormPattern::Symmetric => build_inchworm_symmetric(on_voltages, cycle_period)?,
    };
    let run = run_gait(setup, &chain, &waveform, cycles as f64 * cycle_period)?;
    let traj = &run.traj;

    let mut report = ExperimentReport::new("inchworm");
    let mut motion = Series::new(
        "motion",
        &["time_s", "com_x_m", "com_y_m", "left_end_x_m", "right_end_x_m"],
    );
    for (s, c) in traj.samples.iter().zip(&run.com) {
        motion
            .rows
            .push(vec![s.time, c[0], c[1], s.nodes[0][0], s.nodes.last().unwrap()[0]]);
    }
    let boundary: Vec<f64> = (0..=cycles)
        .map(|k| run.com[sample_at(traj, k as f64 * cycle_period)][0])
        .collect();
    let mut strides = Series::new("strides", &["cycle_index", "stride_m"]);
    for k in 0..cycles {
        strides.rows.push(vec![k as f64, boundary[k + 1] - boundary[k]]);
    }
    let skip = first_steady_cycle(cycles);
    let stride = (boundary[cycles] - boundary[skip]) / (cycles - skip) as f64;
    report.set("stride_m_per_cycle", stride, "m/cycle");
    report.set("mean_speed_m_per_s", stride / cycle_period, "m/s");
    report.set("net_displacement_m", boundary[cycles] - boundary[0], "m");
    report.set("cycle_period_s", cycle_period, "s");
    report.set("steady_cycles", (cycles - skip) as f64, "1");
    report.series.push(motion);
    report.series.push(strides);
    // One cycle of shapes at each sub-step midpoint, from the last cycle.
    for q in 0..4 {
        let t = (cycles - 1) as f64 * cycle_period + (q as f64 + 0.5) * 0.25 * cycle_period;
        let s = &traj.samples[sample_at(traj, t)];
        report.shapes.push(ShapeSnapshot {
            tag: format!("step {}", q + 1),
            time: s.time,
            nodes: s.nodes.clone(),
        });
    }
    Ok(report)
}

/// Period (s) of the strongest autocorrelation peak of a uniformly sampled
/// series, searched over lags `[T/4, 8T]` with `T` the drive period, refined
/// by a parabola through the peak and its neighbours.
pub fn detect_dominant_period(series: &[(f64, f64)], drive_period: f64) -> Result<f64, HarnessError> {
    if !(drive_period.is_finite() && drive_period > 0.0) {
        return Err(HarnessError::InvalidInput("drive period must be positive (s)".into()));
    }
    let n = series.len();
    if n < 4 {
        return Err(HarnessError::NoPeriod(format!("{n} samples")));
    }
    let dt = (series[n - 1].0 - series[0].0) / (n - 1) as f64;
    if !(dt > 0.0) || series.windows(2).any(|w| ((w[1].0 - w[0].0) - dt).abs() > 1e-6 * dt) {
        return Err(HarnessError::InvalidInput("series must be uniformly sampled".into()));
    }
    let mean = series.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|p| p.1 - mean).collect();
    let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var < 1e-18 {
        return Err(HarnessError::NoPeriod("series is flat".into()));
    }
    let lag_min = ((0.25 * drive_period / dt).ceil() as usize).max(1);
    let lag_max = ((8.0 * drive_period / dt).floor() as usize).min(n - 2);
    if lag_min + 2 > lag_max {
        return Err(HarnessError::NoPeriod("series too short for the lag window".into()));
    }
    let r = |k: usize| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let ac: Vec<f64> = (lag_min - 1..=lag_max + 1).map(r).collect();
    let mut best: Option<(usize, f64)> = None;
    for i in 1..ac.len() - 1 {
        if ac[i] > ac[i - 1] && ac[i] >= ac[i + 1] && ac[i] > 0.0 && best.is_none_or(|(_, b)| ac[i] > b) {
            best = Some((i, ac[i]));
        }
    }
    let (i, _) = best.ok_or_else(|| HarnessError::NoPeriod("no autocorrelation peak in the lag window".into()))?;
    let (a, b, c) = (ac[i - 1], ac[i], ac[i + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let lag = (i + lag_min - 1) as f64 + shift;
    Ok(lag * dt)
}

/// Count and total length of maximal runs where `flag` holds for at least
/// `min_len` samples.
fn runs(flags: &[bool], min_len: usize) -> usize {
    let mut count = 0;
    let mut len = 0;
    for &f in flags.iter().chain(std::iter::once(&false)) {
        if f {
            len += 1;
        } else {
            if len >= min_len && len > 0 {
                count += 1;
            }
            len = 0;
        }
    }
    count
}

/// Jump gait: the central actuators switch on and off as a square wave.
pub fn run_jump(
    setup: &Setup,
    frequency: f64,
    duration: f64,
    on_voltages: [f64; 3],
) -> Result<ExperimentReport, HarnessError> {
    let chain = setup.chain()?;
    let waveform = build_jump(frequency, on_voltages)?;
    let period = 1.0 / frequency;
    if !(duration >= 10.0 * period) {
        return Err(HarnessError::InvalidInput(format!(
            "duration must cover at least 10 drive periods ({:.4} s)",
            10.0 * period
        )));
    }
    let run = run_gait(setup, &chain, &waveform, duration)?;
    let traj = &run.traj;
    let g = setup.ground.height;
    let last = chain.links.len();
    let mid = last / 2;

    let mut series = Series::new(
        "jump",
        &["time_s", "clearance_m", "midpoint_height_m", "endpoint_height_m", "com_x_m"],
    );
    for (s, c) in traj.samples.iter().zip(&run.com) {
        let clearance = s.nodes.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - g;
        series
            .rows
            .push(vec![s.time, clearance, s.nodes[mid][1] - g, s.nodes[0][1] - g, c[0]]);
    }
    let start = sample_at(traj, TRANSIENT_FRACTION * duration);
    let steady = &series.rows[start..];
    let clearance: Vec<f64> = steady.iter().map(|r| r[1]).collect();

    let mut report = ExperimentReport::new("jump");
    report.set("drive_period_s", period, "s");
    report.set("jump_height_m", clearance.iter().copied().fold(f64::NEG_INFINITY, f64::max), "m");
    let airborne: Vec<bool> = clearance.iter().map(|c| *c > 0.0).collect();
    let min_len = ((MIN_AIRBORNE_INTERVAL / traj.sample_interval).ceil() as usize).max(1);
    report.set("airborne_intervals", runs(&airborne, min_len) as f64, "1");
    report.set(
        "airborne_fraction",
        airborne.iter().filter(|a| **a).count() as f64 / airborne.len() as f64,
        "1",
    );
    let net = steady.last().unwrap()[4] - steady[0][4];
    report.set("net_displacement_m", net, "m");

    let mid_series: Vec<(f64, f64)> = steady.iter().map(|r| (r[0], r[2])).collect();
    if let Ok(p) = detect_dominant_period(&mid_series, period) {
        report.set("dominant_period_s", p, "s");
        report.set("period_ratio", p / period, "1");
        if let Some(phase) = peak_phase_shift(steady, p) {
            report.set("phase_shift_cycles", phase, "cycles");
        }
        // Shapes through the last dominant period.
        let t_end = traj.samples.last().unwrap().time;
        for q in 0..8 {
            let s = &traj.samples[sample_at(traj, t_end - p + q as f64 * p / 8.0)];
            report.shapes.push(ShapeSnapshot {
                tag: format!("phase {q}/8"),
                time: s.time,
                nodes: s.nodes.clone(),
            });
        }
    }
    report.series.push(series);
    Ok(report)
}

/// Circular mean, in cycles within [−0.5, 0.5), of the lag from the endpoint
/// height maximum to the midpoint height maximum in each window of length
/// `period`.
fn peak_phase_shift(rows: &[Vec<f64>], period: f64) -> Option<f64> {
    let t0 = rows.first()?[0];
    let (mut c, mut s) = (0.0, 0.0);
    let mut windows = 0;
    let mut i = 0;
    while i < rows.len() {
        let w_start = t0 + windows as f64 * period;
        let j = rows[i..].iter().position(|r| r[0] >= w_start + period).map_or(rows.len(), |p| i + p);
        if j == rows.len() && rows[rows.len() - 1][0] < w_start + period - 1.5 * (rows[1][0] - rows[0][0]) {
            break;
        }
        let win = &rows[i..j];
        let argmax = |col: usize| win.iter().max_by(|a, b| a[col].total_cmp(&b[col])).map(|r| r[0]);
        let (tm, te) = (argmax(2)?, argmax(3)?);
        let angle = std::f64::consts::TAU * (tm - te) / period;
        c += angle.cos();
        s += angle.sin();
        windows += 1;
        i = j;
    }
    if windows == 0 || (c == 0.0 && s == 0.0) {
        return None;
    }
    let phase = s.atan2(c) / std::f64::consts::TAU;
    Some(if phase >= 0.5 { phase - 1.0 } else { phase })
}

/// Steady inchworm speed over a grid of drive frequencies (cycle period 1/f).
pub fn run_speed_sweep(
    setup: &Setup,
    freqs: &[f64],
    cycles_per_freq: usize,
    on_voltages: &[f64],
) -> Result<ExperimentReport, HarnessError> {
    if freqs.is_empty() || freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(HarnessError::InvalidInput("frequencies must be positive (Hz)".into()));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::InvalidInput("frequencies must be ascending".into()));
    }
    if cycles_per_freq < 2 {
        return Err(HarnessError::InvalidInput("cycles_per_freq must be >= 2".into()));
    }
    let chain = setup.chain()?;
    let g = setup.ground.height;

    struct Point {
        speed: f64,
        classes: [f64; 4],
        shapes: Vec<ShapeSnapshot>,
    }

    let points = setup.map_ordered(freqs, |&f| {
        let period = 1.0 / f;
        let waveform = build_inchworm(on_voltages, period)?;
        let run = run_gait(setup, &chain, &waveform, cycles_per_freq as f64 * period)?;
        let traj = &run.traj;
        let skip = first_steady_cycle(cycles_per_freq);
        let (a, b) = (
            sample_at(traj, skip as f64 * period),
            sample_at(traj, cycles_per_freq as f64 * period),
        );
        let dt = traj.samples[b].time - traj.samples[a].time;
        let speed = (run.com[b][0] - run.com[a][0]) / dt;
        let mut classes = [0.0; 4];
        for s in &traj.samples[a..=b] {
            let i = match classify_contact(&s.nodes, g) {
                ContactClass::BodyTouching => 0,
                ContactClass::EndTouching => 1,
                ContactClass::Aerial => 2,
                ContactClass::Mixed => 3,
            };
            classes[i] += 1.0;
        }
        let total = (b - a + 1) as f64;
        classes.iter_mut().for_each(|c| *c /= total);
        let shapes = (0..8)
            .map(|q| {
                let t = (cycles_per_freq - 1) as f64 * period + q as f64 * period / 8.0;
                let s = &traj.samples[sample_at(traj, t)];
                ShapeSnapshot {
                    tag: format!("{f} Hz phase {q}/8"),
                    time: s.time,
                    nodes: s.nodes.clone(),
                }
            })
            .collect();
        Ok(Point { speed, classes, shapes })
    })?;

    let mut report = ExperimentReport::new("speed-sweep");
    let mut speed = Series::new("speed", &["frequency_Hz", "speed_m_per_s"]);
    let mut contact = Series::new(
        "contact_classes",
        &[
            "frequency_Hz",
            "body_touching_fraction",
            "end_touching_fraction",
            "aerial_fraction",
            "mixed_fraction",
        ],
    );
    for (f, p) in freqs.iter().zip(points) {
        speed.rows.push(vec![*f, p.speed]);
        let mut row = vec![*f];
        row.extend(p.classes);
        contact.rows.push(row);
        report.shapes.extend(p.shapes);
    }
    let speeds: Vec<f64> = speed.rows.iter().map(|r| r[1]).collect();
    let imax = (0..speeds.len()).max_by(|&a, &b| speeds[a].total_cmp(&speeds[b])).unwrap();
    let imin = (0..speeds.len()).min_by(|&a, &b| speeds[a].total_cmp(&speeds[b])).unwrap();
    report.set("max_speed_m_per_s", speeds[imax], "m/s");
    report.set("max_speed_frequency_Hz", freqs[imax], "Hz");
    report.set("min_speed_m_per_s", speeds[imin], "m/s");
    report.set("min_speed_frequency_Hz", freqs[imin], "Hz");
    if let Some(i) = speeds.iter().position(|v| *v < 0.0) {
        report.set("first_reversal_frequency_Hz", freqs[i], "Hz");
    }
    report.series.push(speed);
    report.series.push(contact);
    Ok(report)
}

/// Whether a speed-versus-frequency curve shows the gait reversal pattern:
/// positive at every `f ≤ low_max`, negative somewhere in `band`, and a
/// positive maximum above that band.
pub fn has_reversal_pattern(freqs: &[f64], speeds: &[f64], low_max: f64, band: (f64, f64)) -> bool {
    let low_ok = freqs
        .iter()
        .zip(speeds)
        .filter(|(f, _)| **f <= low_max)
        .all(|(_, v)| *v > 0.0)
        && freqs.iter().any(|f| *f <= low_max);
    let neg: Vec<f64> = freqs
        .iter()
        .zip(speeds)
        .filter(|(f, v)| **f >= band.0 && **f <= band.1 && **v < 0.0)
        .map(|(f, _)| *f)
        .collect();
    let Some(&last_neg) = neg.last() else {
        return false;
    };
    let above = freqs
        .iter()
        .zip(speeds)
        .filter(|(f, _)| **f > last_neg)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    low_ok && above > 0.0
}
