//! Run configuration: strict TOML parsing, `--override` patches and
//! validation with key-qualified errors.

use std::path::Path;

use motorlink::model::{PIEZO_DENSITY, PIEZO_MODULUS, PIEZO_THICKNESS, STEEL_DENSITY, STEEL_MODULUS, STEEL_THICKNESS};
use motorlink::{
    calibrate_gamma, ActuatorSpec, Anchor, Channel, CrossSection, FrictionPatch, GroundModel, InchwormPattern,
    Layer, PiezoCoupling, RobotSpec, Setup, SimConfig, INCHWORM_VOLTAGES, JUMP_VOLTAGES,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A configuration problem, tied to the dotted key that caused it.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

/// One-line description of each experiment kind, in listing order.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    ("cantilever-static", "clamped static tip deflection against the uniform-curvature arc"),
    ("cantilever-ac", "clamped tip amplitude over a sinusoidal drive-frequency grid"),
    ("damping-calibration", "motor damping identified from a clamped step response"),
    ("static-shape", "robot equilibrium on the ground under fixed voltages"),
    ("inchworm", "four-step crawling gait, stride per cycle"),
    ("jump", "central-arch square-wave drive, clearance and dominant period"),
    ("speed-sweep", "inchworm speed and contact classes over a frequency grid"),
    ("simulate", "free run of an arbitrary per-actuator waveform"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    FiveActuator,
    SingleActuator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerBlock {
    pub label: String,
    /// Pa
    pub youngs_modulus: f64,
    /// m
    pub thickness: f64,
    /// kg/m³
    pub density: f64,
}

fn default_layers() -> Vec<LayerBlock> {
    vec![
        LayerBlock {
            label: "steel".into(),
            youngs_modulus: STEEL_MODULUS,
            thickness: STEEL_THICKNESS,
            density: STEEL_DENSITY,
        },
        LayerBlock {
            label: "piezo".into(),
            youngs_modulus: PIEZO_MODULUS,
            thickness: PIEZO_THICKNESS,
            density: PIEZO_DENSITY,
        },
    ]
}

/// Robot geometry. Unset entries come from the preset, which itself defaults
/// by experiment (single actuator for the cantilever kinds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotBlock {
    pub preset: Option<Preset>,
    pub actuator_count: Option<usize>,
    /// m
    pub actuator_length: f64,
    /// m
    pub width: f64,
    /// m, high-friction film under each end (0 for none)
    pub end_patch_length: Option<f64>,
    /// 1/(m·V); calibrated to 20 mm at −1000 V on a 100 mm strip when unset
    pub gamma: Option<f64>,
    /// Bottom to top.
    pub layers: Vec<LayerBlock>,
}

impl Default for RobotBlock {
    fn default() -> Self {
        Self {
            preset: None,
            actuator_count: None,
            actuator_length: motorlink::model::ACTUATOR_LENGTH,
            width: motorlink::model::STRIP_WIDTH,
            end_patch_length: None,
            gamma: None,
            layers: default_layers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationBlock {
    /// Motors per actuator.
    pub m: usize,
    /// Motor damping time constant (s).
    pub eta: f64,
}

impl Default for DiscretizationBlock {
    fn default() -> Self {
        Self {
            m: 3,
            eta: motorlink::harness::DEFAULT_DAMPING_ETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    /// s
    pub timestep: f64,
    /// m/s²; 0 for the cantilever kinds and 9.81 otherwise when unset
    pub gravity: Option<f64>,
    /// s; used by `jump` and `simulate`
    pub duration: Option<f64>,
    pub max_steps: u64,
    /// Integration steps per recorded sample.
    pub sample_every: usize,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            timestep: d.timestep,
            gravity: None,
            duration: None,
            max_steps: d.max_steps,
            sample_every: d.sample_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundBlock {
    /// m
    pub height: f64,
    /// N/m
    pub normal_stiffness: f64,
    /// N·s/m
    pub normal_damping: f64,
    /// m/s
    pub stick_velocity: f64,
    pub body_friction: f64,
    pub patch_friction: f64,
}

impl Default for GroundBlock {
    fn default() -> Self {
        let g = GroundModel::default();
        Self {
            height: g.height,
            normal_stiffness: g.normal_stiffness,
            normal_damping: g.normal_damping,
            stick_velocity: g.stick_velocity,
            body_friction: motorlink::model::BODY_FRICTION,
            patch_friction: motorlink::model::PATCH_FRICTION,
        }
    }
}

impl GroundBlock {
    pub fn model(&self) -> GroundModel {
        GroundModel {
            height: self.height,
            normal_stiffness: self.normal_stiffness,
            normal_damping: self.normal_damping,
            stick_velocity: self.stick_velocity,
        }
    }
}

/// Per-actuator waveform for the `simulate` experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveBlock {
    pub channels: Vec<Channel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: String,
    /// Keep every n-th row of time series.
    pub decimation: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            decimation: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CantileverStatic {
    /// V, one static solve each
    pub voltages: Vec<f64>,
}

impl Default for CantileverStatic {
    fn default() -> Self {
        Self {
            voltages: vec![-1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CantileverAc {
    /// Hz
    pub frequencies: Vec<f64>,
    /// V
    pub offset: f64,
    /// V
    pub amplitude: f64,
    pub settle_cycles: usize,
    pub measure_cycles: usize,
}

impl Default for CantileverAc {
    fn default() -> Self {
        Self {
            frequencies: vec![1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 23.0, 25.0, 30.0, 40.0],
            offset: -750.0,
            amplitude: 750.0,
            settle_cycles: 10,
            measure_cycles: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DampingCalibration {
    /// V
    pub step_voltage: f64,
}

impl Default for DampingCalibration {
    fn default() -> Self {
        Self { step_voltage: -1000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaticShape {
    /// V per actuator
    pub voltages: Vec<f64>,
}

impl Default for StaticShape {
    fn default() -> Self {
        Self {
            voltages: vec![0.0, 300.0, -960.0, 300.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inchworm {
    /// s
    pub cycle_period: f64,
    pub cycles: usize,
    /// V per actuator when on
    pub on_voltages: Vec<f64>,
    pub pattern: InchwormPattern,
}

impl Default for Inchworm {
    fn default() -> Self {
        Self {
            cycle_period: 1.0,
            cycles: 10,
            on_voltages: INCHWORM_VOLTAGES.to_vec(),
            pattern: InchwormPattern::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Jump {
    /// Hz
    pub frequency: f64,
    /// V for actuators 2 to 4 when on
    pub on_voltages: [f64; 3],
}

impl Default for Jump {
    fn default() -> Self {
        Self {
            frequency: 14.0,
            on_voltages: JUMP_VOLTAGES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedSweep {
    /// Hz, ascending
    pub frequencies: Vec<f64>,
    pub cycles_per_frequency: usize,
    /// V per actuator when on
    pub on_voltages: Vec<f64>,
}

impl Default for SpeedSweep {
    fn default() -> Self {
        Self {
            frequencies: vec![
                1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 14.0, 16.0, 18.0, 20.0,
            ],
            cycles_per_frequency: 10,
            on_voltages: INCHWORM_VOLTAGES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateAnchor {
    /// Free robot on the ground, starting from its rest equilibrium.
    #[default]
    Ground,
    /// First link clamped at the origin, starting straight, no ground.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulate {
    pub anchor: SimulateAnchor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    CantileverStatic(CantileverStatic),
    CantileverAc(CantileverAc),
    DampingCalibration(DampingCalibration),
    StaticShape(StaticShape),
    Inchworm(Inchworm),
    Jump(Jump),
    SpeedSweep(SpeedSweep),
    Simulate(Simulate),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::CantileverStatic(_) => "cantilever-static",
            Experiment::CantileverAc(_) => "cantilever-ac",
            Experiment::DampingCalibration(_) => "damping-calibration",
            Experiment::StaticShape(_) => "static-shape",
            Experiment::Inchworm(_) => "inchworm",
            Experiment::Jump(_) => "jump",
            Experiment::SpeedSweep(_) => "speed-sweep",
            Experiment::Simulate(_) => "simulate",
        }
    }

    fn is_cantilever(&self) -> bool {
        matches!(
            self,
            Experiment::CantileverStatic(_) | Experiment::CantileverAc(_) | Experiment::DampingCalibration(_)
        )
    }
}

/// Top level as written in the file; the experiment table is decoded in a
/// second pass once its kind is known.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    parallel: bool,
    experiment: toml::Table,
    #[serde(default)]
    robot: RobotBlock,
    #[serde(default)]
    discretization: DiscretizationBlock,
    #[serde(default)]
    simulation: SimulationBlock,
    #[serde(default)]
    ground: GroundBlock,
    drive: Option<DriveBlock>,
    #[serde(default)]
    output: OutputBlock,
}

/// Fully resolved and validated configuration. Serializes as the config echo
/// written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub robot: RobotBlock,
    pub discretization: DiscretizationBlock,
    pub simulation: SimulationBlock,
    pub ground: GroundBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveBlock>,
    pub output: OutputBlock,
    /// Execution option only; results do not depend on it, so it stays out
    /// of the echo.
    #[serde(skip)]
    pub parallel: bool,
}

fn decode<T: DeserializeOwned>(table: toml::Table, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let key = match (prefix.is_empty(), path.as_str()) {
            (true, _) => path.clone(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        ConfigError::new(if key.is_empty() || key == "." { "config".into() } else { key }, e.into_inner().to_string())
    })
}

/// Reads a config file, applies `key=value` overrides and validates.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("config", e.to_string().trim_end().to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let raw: RawConfig = decode(table, "")?;
    let experiment = decode_experiment(raw.experiment)?;
    let mut cfg = RunConfig {
        experiment,
        robot: raw.robot,
        discretization: raw.discretization,
        simulation: raw.simulation,
        ground: raw.ground,
        drive: raw.drive,
        output: raw.output,
        parallel: raw.parallel,
    };
    cfg.resolve_defaults()?;
    cfg.validate()?;
    Ok(cfg)
}

fn decode_experiment(mut table: toml::Table) -> Result<Experiment> {
    let kind = match table.remove("kind") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(ConfigError::new("experiment.kind", "must be a string")),
        None => return Err(ConfigError::new("experiment.kind", "missing; see `list-experiments`")),
    };
    let p = "experiment";
    Ok(match kind.as_str() {
        "cantilever-static" => Experiment::CantileverStatic(decode(table, p)?),
        "cantilever-ac" => Experiment::CantileverAc(decode(table, p)?),
        "damping-calibration" => Experiment::DampingCalibration(decode(table, p)?),
        "static-shape" => Experiment::StaticShape(decode(table, p)?),
        "inchworm" => Experiment::Inchworm(decode(table, p)?),
        "jump" => Experiment::Jump(decode(table, p)?),
        "speed-sweep" => Experiment::SpeedSweep(decode(table, p)?),
        "simulate" => Experiment::Simulate(decode(table, p)?),
        other => {
            let known: Vec<&str> = EXPERIMENTS.iter().map(|e| e.0).collect();
            return Err(ConfigError::new(
                "experiment.kind",
                format!("unknown experiment `{other}`, expected one of {}", known.join(", ")),
            ));
        }
    })
}

/// Sets a dotted key to a TOML value; values that do not parse as TOML are
/// taken as strings.
pub fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::new(spec, "override must have the form key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "malformed override key"));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut node = root;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(parts[..=i].join("."), "is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn positive(key: &str, v: f64, unit: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be positive ({unit}), got {v}")))
    }
}

fn non_negative(key: &str, v: f64, unit: &str) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be >= 0 ({unit}), got {v}")))
    }
}

fn finite_all(key: &str, vs: &[f64], unit: &str) -> Result<()> {
    match vs.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(ConfigError::new(format!("{key}[{i}]"), format!("must be finite ({unit})"))),
        None => Ok(()),
    }
}

fn frequency_grid(key: &str, fs: &[f64]) -> Result<()> {
    if fs.is_empty() {
        return Err(ConfigError::new(key, "needs at least one frequency (Hz)"));
    }
    for (i, f) in fs.iter().enumerate() {
        positive(&format!("{key}[{i}]"), *f, "Hz")?;
    }
    if fs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::new(key, "must be strictly ascending (Hz)"));
    }
    Ok(())
}

fn at_least(key: &str, v: usize, min: usize, what: &str) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be at least {min} ({what}), got {v}")))
    }
}

impl RunConfig {
    fn resolve_defaults(&mut self) -> Result<()> {
        let cantilever = self.experiment.is_cantilever();
        let preset = *self.robot.preset.get_or_insert(if cantilever {
            Preset::SingleActuator
        } else {
            Preset::FiveActuator
        });
        let (count, patch) = match preset {
            Preset::FiveActuator => (5, motorlink::model::PATCH_LENGTH),
            Preset::SingleActuator => (1, 0.0),
        };
        self.robot.actuator_count.get_or_insert(count);
        self.robot.end_patch_length.get_or_insert(patch);
        if self.robot.gamma.is_none() {
            let g = calibrate_gamma(
                motorlink::model::ACTUATOR_LENGTH,
                motorlink::model::ANCHOR_VOLTAGE,
                motorlink::model::ANCHOR_TIP_DEFLECTION,
            )
            .map_err(|e| ConfigError::new("robot.gamma", e.to_string()))?;
            self.robot.gamma = Some(g);
        }
        self.simulation.gravity.get_or_insert(if cantilever { 0.0 } else { 9.81 });
        if matches!(self.experiment, Experiment::Jump(_)) {
            self.simulation.duration.get_or_insert(2.0);
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let r = &self.robot;
        let count = r.actuator_count.unwrap_or(0);
        at_least("robot.actuator_count", count, 1, "actuators")?;
        positive("robot.actuator_length", r.actuator_length, "m")?;
        positive("robot.width", r.width, "m")?;
        let patch = r.end_patch_length.unwrap_or(0.0);
        non_negative("robot.end_patch_length", patch, "m")?;
        if 2.0 * patch > count as f64 * r.actuator_length {
            return Err(ConfigError::new(
                "robot.end_patch_length",
                "the two end patches overlap (m)",
            ));
        }
        if !r.gamma.is_some_and(f64::is_finite) {
            return Err(ConfigError::new("robot.gamma", "must be finite (1/(m·V))"));
        }
        if r.layers.is_empty() {
            return Err(ConfigError::new("robot.layers", "needs at least one layer"));
        }
        for (i, l) in r.layers.iter().enumerate() {
            positive(&format!("robot.layers[{i}].youngs_modulus"), l.youngs_modulus, "Pa")?;
            positive(&format!("robot.layers[{i}].thickness"), l.thickness, "m")?;
            positive(&format!("robot.layers[{i}].density"), l.density, "kg/m^3")?;
        }

        at_least("discretization.m", self.discretization.m, 1, "motors per actuator")?;
        non_negative("discretization.eta", self.discretization.eta, "s")?;

        let s = &self.simulation;
        positive("simulation.timestep", s.timestep, "s")?;
        if !s.gravity.is_some_and(f64::is_finite) {
            return Err(ConfigError::new("simulation.gravity", "must be finite (m/s^2)"));
        }
        if s.max_steps == 0 {
            return Err(ConfigError::new("simulation.max_steps", "must be at least 1 (steps)"));
        }
        at_least("simulation.sample_every", s.sample_every, 1, "steps")?;
        let uses_duration = matches!(self.experiment, Experiment::Jump(_) | Experiment::Simulate(_));
        match (s.duration, uses_duration) {
            (Some(d), true) => positive("simulation.duration", d, "s")?,
            (None, true) => return Err(ConfigError::new("simulation.duration", "required for this experiment (s)")),
            (Some(_), false) => {
                return Err(ConfigError::new(
                    "simulation.duration",
                    format!("not used by the {} experiment", self.experiment.kind()),
                ))
            }
            (None, false) => {}
        }

        let g = &self.ground;
        if !g.height.is_finite() {
            return Err(ConfigError::new("ground.height", "must be finite (m)"));
        }
        positive("ground.normal_stiffness", g.normal_stiffness, "N/m")?;
        non_negative("ground.normal_damping", g.normal_damping, "N·s/m")?;
        positive("ground.stick_velocity", g.stick_velocity, "m/s")?;
        non_negative("ground.body_friction", g.body_friction, "dimensionless")?;
        non_negative("ground.patch_friction", g.patch_friction, "dimensionless")?;

        at_least("output.decimation", self.output.decimation, 1, "rows")?;
        if self.output.directory.is_empty() {
            return Err(ConfigError::new("output.directory", "must not be empty"));
        }

        self.validate_experiment(count)?;
        // Building the model catches anything the per-key checks let through.
        let setup = self.setup()?;
        setup
            .chain()
            .map_err(|e| ConfigError::new("robot", e.to_string()))?;
        Ok(())
    }

    fn validate_experiment(&self, count: usize) -> Result<()> {
        let needs_five = |kind: &str| -> Result<()> {
            if count == 5 {
                Ok(())
            } else {
                Err(ConfigError::new(
                    "robot.actuator_count",
                    format!("the {kind} experiment needs 5 actuators, got {count}"),
                ))
            }
        };
        if self.drive.is_some() && !matches!(self.experiment, Experiment::Simulate(_)) {
            return Err(ConfigError::new(
                "drive",
                format!("only used by the simulate experiment, not {}", self.experiment.kind()),
            ));
        }
        match &self.experiment {
            Experiment::CantileverStatic(e) => {
                if e.voltages.is_empty() {
                    return Err(ConfigError::new("experiment.voltages", "needs at least one voltage (V)"));
                }
                finite_all("experiment.voltages", &e.voltages, "V")?;
            }
            Experiment::CantileverAc(e) => {
                frequency_grid("experiment.frequencies", &e.frequencies)?;
                finite_all("experiment.offset", &[e.offset], "V")?;
                finite_all("experiment.amplitude", &[e.amplitude], "V")?;
                at_least("experiment.measure_cycles", e.measure_cycles, 1, "cycles")?;
            }
            Experiment::DampingCalibration(e) => {
                if !(e.step_voltage.is_finite() && e.step_voltage != 0.0) {
                    return Err(ConfigError::new("experiment.step_voltage", "must be finite and nonzero (V)"));
                }
            }
            Experiment::StaticShape(e) => {
                if e.voltages.len() != count {
                    return Err(ConfigError::new(
                        "experiment.voltages",
                        format!("expected {count} values (V), one per actuator, got {}", e.voltages.len()),
                    ));
                }
                finite_all("experiment.voltages", &e.voltages, "V")?;
            }
            Experiment::Inchworm(e) => {
                needs_five("inchworm")?;
                positive("experiment.cycle_period", e.cycle_period, "s")?;
                at_least("experiment.cycles", e.cycles, 2, "cycles")?;
                on_voltages(&e.on_voltages)?;
            }
            Experiment::Jump(e) => {
                needs_five("jump")?;
                positive("experiment.frequency", e.frequency, "Hz")?;
                finite_all("experiment.on_voltages", &e.on_voltages, "V")?;
                let d = self.simulation.duration.unwrap_or(0.0);
                if d < 10.0 / e.frequency {
                    return Err(ConfigError::new(
                        "simulation.duration",
                        format!("must cover at least 10 drive periods ({} s)", 10.0 / e.frequency),
                    ));
                }
            }
            Experiment::SpeedSweep(e) => {
                needs_five("speed-sweep")?;
                frequency_grid("experiment.frequencies", &e.frequencies)?;
                at_least("experiment.cycles_per_frequency", e.cycles_per_frequency, 2, "cycles")?;
                on_voltages(&e.on_voltages)?;
            }
            Experiment::Simulate(_) => {
                let drive = self
                    .drive
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("drive", "required by the simulate experiment"))?;
                if drive.channels.len() != count {
                    return Err(ConfigError::new(
                        "drive.channels",
                        format!("expected {count} channels, one per actuator, got {}", drive.channels.len()),
                    ));
                }
                for (i, c) in drive.channels.iter().enumerate() {
                    c.validate()
                        .map_err(|e| ConfigError::new(format!("drive.channels[{i}]"), e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    /// Robot and solver setup described by this config.
    pub fn setup(&self) -> Result<Setup> {
        let r = &self.robot;
        let layers = r
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Layer::new(l.label.clone(), l.youngs_modulus, l.thickness, l.density)
                    .map_err(|e| ConfigError::new(format!("robot.layers[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let section = CrossSection::new(layers, r.width).map_err(|e| ConfigError::new("robot.layers", e.to_string()))?;
        let gamma = r.gamma.unwrap_or(f64::NAN);
        let actuator = ActuatorSpec::new(r.actuator_length, section, PiezoCoupling::Calibrated { gamma })
            .map_err(|e| ConfigError::new("robot.actuator_length", e.to_string()))?;
        let count = r.actuator_count.unwrap_or(1);
        let total = count as f64 * r.actuator_length;
        let patch = r.end_patch_length.unwrap_or(0.0);
        let patches = if patch > 0.0 {
            vec![
                FrictionPatch {
                    start: 0.0,
                    end: patch,
                    coefficient: self.ground.patch_friction,
                },
                FrictionPatch {
                    start: total - patch,
                    end: total,
                    coefficient: self.ground.patch_friction,
                },
            ]
        } else {
            Vec::new()
        };
        let robot = RobotSpec::new(vec![actuator; count], patches, self.ground.body_friction)
            .map_err(|e| ConfigError::new("robot", e.to_string()))?;
        let sim = SimConfig {
            timestep: self.simulation.timestep,
            gravity: self.simulation.gravity.unwrap_or(0.0),
            max_steps: self.simulation.max_steps,
            anchor: Anchor::Free,
            sample_every: self.simulation.sample_every,
        };
        Ok(Setup {
            robot,
            motors_per_actuator: self.discretization.m,
            damping_eta: self.discretization.eta,
            sim,
            ground: self.ground.model(),
            parallel: self.parallel,
        })
    }
}

fn on_voltages(v: &[f64]) -> Result<()> {
    if v.len() != 5 {
        return Err(ConfigError::new(
            "experiment.on_voltages",
            format!("expected 5 values (V), got {}", v.len()),
        ));
    }
    finite_all("experiment.on_voltages", v, "V")
}
