//! Composite cross-section analysis for layered piezoelectric benders.
//!
//! Layers are stacked bottom to top with `z = 0` at the bottom face. The
//! transformed-section formulas here give the neutral axis, flexural rigidity
//! and mass per unit length that parameterize the discrete motor-link chain,
//! plus the curvature produced per volt of drive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Steel foil modulus (Pa).
pub const STEEL_MODULUS: f64 = 200e9;
/// Steel foil thickness (m).
pub const STEEL_THICKNESS: f64 = 50e-6;
/// Steel density (kg/m³).
pub const STEEL_DENSITY: f64 = 7850.0;
/// Piezoelectric composite modulus (Pa).
pub const PIEZO_MODULUS: f64 = 30e9;
/// Piezoelectric composite thickness (m).
pub const PIEZO_THICKNESS: f64 = 300e-6;
/// Piezoelectric composite density (kg/m³). Chosen so the clamped first
/// bending mode of one actuator sits near 23 Hz.
pub const PIEZO_DENSITY: f64 = 2900.0;
/// Width of the actuator strip (m).
pub const STRIP_WIDTH: f64 = 0.020;
/// Length of one actuator (m).
pub const ACTUATOR_LENGTH: f64 = 0.100;
/// Calibration anchor: a clamped actuator at this voltage...
pub const ANCHOR_VOLTAGE: f64 = -1000.0;
/// ...bends its free end by this much (m).
pub const ANCHOR_TIP_DEFLECTION: f64 = -0.020;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid layer `{label}`: {reason}")]
    InvalidLayer { label: String, reason: String },
    #[error("invalid cross-section: {0}")]
    InvalidCrossSection(String),
    #[error("piezoelectric coupling unresolved: {0}")]
    CouplingUnresolved(String),
    #[error("gamma calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("invalid actuator: {0}")]
    InvalidActuator(String),
    #[error("invalid robot: {0}")]
    InvalidRobot(String),
}

/// One homogeneous material layer of the bender stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub label: String,
    /// Pa
    pub youngs_modulus: f64,
    /// m
    pub thickness: f64,
    /// kg/m³
    pub density: f64,
}

impl Layer {
    pub fn new(
        label: impl Into<String>,
        youngs_modulus: f64,
        thickness: f64,
        density: f64,
    ) -> Result<Self, ModelError> {
        let layer = Self {
            label: label.into(),
            youngs_modulus,
            thickness,
            density,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::InvalidLayer {
                label: self.label.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.youngs_modulus.is_finite() && self.youngs_modulus > 0.0) {
            return bad("youngs_modulus must be positive (Pa)");
        }
        if !(self.thickness.is_finite() && self.thickness > 0.0) {
            return bad("thickness must be positive (m)");
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return bad("density must be positive (kg/m^3)");
        }
        Ok(())
    }
}

/// Layer stack, bottom to top, of a strip of the given width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    layers: Vec<Layer>,
    width: f64,
}

impl CrossSection {
    pub fn new(layers: Vec<Layer>, width: f64) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::InvalidCrossSection(
                "at least one layer is required".into(),
            ));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(ModelError::InvalidCrossSection(
                "width must be positive (m)".into(),
            ));
        }
        for layer in &layers {
            layer.validate()?;
        }
        Ok(Self { layers, width })
    }

    /// Steel foil under a piezoelectric composite layer, at the default
    /// densities and the given width.
    pub fn steel_piezo_unimorph(width: f64) -> Result<Self, ModelError> {
        Self::new(
            vec![
                Layer::new("steel", STEEL_MODULUS, STEEL_THICKNESS, STEEL_DENSITY)?,
                Layer::new("piezo", PIEZO_MODULUS, PIEZO_THICKNESS, PIEZO_DENSITY)?,
            ],
            width,
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    /// Centroid height of every layer, measured from the bottom face.
    pub fn layer_centroids(&self) -> Vec<f64> {
        let mut z = 0.0;
        self.layers
            .iter()
            .map(|l| {
                let c = z + 0.5 * l.thickness;
                z += l.thickness;
                c
            })
            .collect()
    }

    pub fn properties(&self) -> BeamProperties {
        BeamProperties {
            neutral_axis: neutral_axis(self),
            flexural_rigidity: flexural_rigidity(self),
            linear_density: linear_density(self),
        }
    }
}

/// Derived section quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamProperties {
    /// m, from the bottom face
    pub neutral_axis: f64,
    /// N·m²
    pub flexural_rigidity: f64,
    /// kg/m
    pub linear_density: f64,
}

/// Modulus-weighted centroid of the stack.
pub fn neutral_axis(section: &CrossSection) -> f64 {
    let (num, den) = section
        .layers
        .iter()
        .zip(section.layer_centroids())
        .fold((0.0, 0.0), |(num, den), (l, z)| {
            let eh = l.youngs_modulus * l.thickness;
            (num + eh * z, den + eh)
        });
    num / den
}

/// Bending stiffness about the neutral axis (parallel-axis sum over layers).
pub fn flexural_rigidity(section: &CrossSection) -> f64 {
    let zbar = neutral_axis(section);
    let per_width: f64 = section
        .layers
        .iter()
        .zip(section.layer_centroids())
        .map(|(l, z)| {
            let h = l.thickness;
            l.youngs_modulus * (h.powi(3) / 12.0 + h * (z - zbar).powi(2))
        })
        .sum();
    section.width * per_width
}

pub fn linear_density(section: &CrossSection) -> f64 {
    section.width
        * section
            .layers
            .iter()
            .map(|l| l.density * l.thickness)
            .sum::<f64>()
}

/// How an actuator turns voltage into curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PiezoCoupling {
    /// From material constants: strain constant `d31` (m/V), electrode pitch
    /// (m), and the index of the active layer in the stack.
    Explicit {
        d31: f64,
        electrode_pitch: f64,
        #[serde(default)]
        active_layer: Option<usize>,
    },
    /// Curvature per volt fixed directly, usually from [`calibrate_gamma`].
    Calibrated { gamma: f64 },
}

impl PiezoCoupling {
    /// Coupling calibrated against the 20 mm at -1000 V cantilever anchor.
    pub fn anchored(length: f64) -> Result<Self, ModelError> {
        Ok(Self::Calibrated {
            gamma: calibrate_gamma(length, ANCHOR_VOLTAGE, ANCHOR_TIP_DEFLECTION)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSpec {
    /// m
    pub length: f64,
    pub cross_section: CrossSection,
    pub coupling: PiezoCoupling,
}

impl ActuatorSpec {
    pub fn new(
        length: f64,
        cross_section: CrossSection,
        coupling: PiezoCoupling,
    ) -> Result<Self, ModelError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(ModelError::InvalidActuator(
                "length must be positive (m)".into(),
            ));
        }
        Ok(Self {
            length,
            cross_section,
            coupling,
        })
    }

    /// The 100 mm steel/piezo unimorph with anchored coupling.
    pub fn unimorph_default() -> Self {
        Self {
            length: ACTUATOR_LENGTH,
            cross_section: CrossSection::steel_piezo_unimorph(STRIP_WIDTH)
                .expect("default section is valid"),
            coupling: PiezoCoupling::anchored(ACTUATOR_LENGTH).expect("anchor calibrates"),
        }
    }

    pub fn beam(&self) -> BeamProperties {
        self.cross_section.properties()
    }

    /// γ (1/(m·V)) for this actuator regardless of coupling mode.
    pub fn gamma(&self) -> Result<f64, ModelError> {
        curvature_per_volt(self, &self.beam())
    }

    /// β = γL (rad/V): total unloaded bend angle per volt.
    pub fn beta(&self) -> Result<f64, ModelError> {
        Ok(self.gamma()? * self.length)
    }
}

/// Curvature per volt. Explicit couplings evaluate
/// `γ = (d31 / pitch) · z1 E1 h1 / EI`, where `z1` is the active layer's
/// centerline height above the neutral axis; calibrated couplings return their
/// stored value.
pub fn curvature_per_volt(actuator: &ActuatorSpec, beam: &BeamProperties) -> Result<f64, ModelError> {
    match &actuator.coupling {
        PiezoCoupling::Calibrated { gamma } => {
            if gamma.is_finite() {
                Ok(*gamma)
            } else {
                Err(ModelError::CouplingUnresolved("gamma is not finite".into()))
            }
        }
        PiezoCoupling::Explicit {
            d31,
            electrode_pitch,
            active_layer,
        } => {
            if !d31.is_finite() {
                return Err(ModelError::CouplingUnresolved("d31 is not finite".into()));
            }
            if !(electrode_pitch.is_finite() && *electrode_pitch > 0.0) {
                return Err(ModelError::CouplingUnresolved(
                    "electrode_pitch must be positive (m)".into(),
                ));
            }
            let layers = actuator.cross_section.layers();
            let idx = active_layer.unwrap_or(layers.len() - 1);
            let layer = layers.get(idx).ok_or_else(|| {
                ModelError::CouplingUnresolved(format!(
                    "active_layer {idx} out of range for {} layers",
                    layers.len()
                ))
            })?;
            let z1 = actuator.cross_section.layer_centroids()[idx] - beam.neutral_axis;
            Ok(d31 / electrode_pitch * z1 * layer.youngs_modulus * layer.thickness
                / beam.flexural_rigidity)
        }
    }
}

// (1 - cos x)/x peaks here; beyond it the arc relation is not invertible.
const ARC_PEAK: f64 = 2.331_122_370_414_423;

/// Curvature per volt that makes a clamped strip of `length` deflect its tip
/// by `tip_deflection` under `voltage`, assuming uniform curvature
/// (`δ = (1 − cos κL)/κ`).
pub fn calibrate_gamma(length: f64, voltage: f64, tip_deflection: f64) -> Result<f64, ModelError> {
    if !(length.is_finite() && length > 0.0) {
        return Err(ModelError::CalibrationFailed("length must be positive".into()));
    }
    if !(voltage.is_finite() && voltage != 0.0) {
        return Err(ModelError::CalibrationFailed("voltage must be nonzero".into()));
    }
    if !tip_deflection.is_finite() || tip_deflection.abs() >= length {
        return Err(ModelError::CalibrationFailed(
            "|tip_deflection| must be below the strip length".into(),
        ));
    }
    if tip_deflection == 0.0 {
        return Ok(0.0);
    }
    // Solve in x = κL: g(x) = (1 - cos x)/x - |δ|/L on (0, ARC_PEAK].
    let target = tip_deflection.abs() / length;
    let g = |x: f64| 2.0 * (0.5 * x).sin().powi(2) / x - target;
    let (mut lo, mut hi) = (0.0_f64, ARC_PEAK);
    if g(hi) < 0.0 {
        return Err(ModelError::CalibrationFailed(format!(
            "deflection {tip_deflection} m exceeds the largest uniform-curvature tip drop"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // g(0+) = -target < 0
        let gm = if mid == 0.0 { -target } else { g(mid) };
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let kappa = 0.5 * (lo + hi) / length * tip_deflection.signum();
    Ok(kappa / voltage)
}

/// Span of the robot underside carrying a different friction coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionPatch {
    /// m along the robot from its first end
    pub start: f64,
    pub end: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub actuators: Vec<ActuatorSpec>,
    pub friction_patches: Vec<FrictionPatch>,
    pub body_friction: f64,
}

/// Friction of the bare underside.
pub const BODY_FRICTION: f64 = 0.3;
/// Friction of the end films.
pub const PATCH_FRICTION: f64 = 1.0;
/// Length of each end film (m).
pub const PATCH_LENGTH: f64 = 0.050;

impl RobotSpec {
    pub fn new(
        actuators: Vec<ActuatorSpec>,
        friction_patches: Vec<FrictionPatch>,
        body_friction: f64,
    ) -> Result<Self, ModelError> {
        let robot = Self {
            actuators,
            friction_patches,
            body_friction,
        };
        robot.validate()?;
        Ok(robot)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.actuators.is_empty() {
            return Err(ModelError::InvalidRobot("no actuators".into()));
        }
        for a in &self.actuators {
            if !(a.length.is_finite() && a.length > 0.0) {
                return Err(ModelError::InvalidActuator("length must be positive (m)".into()));
            }
        }
        if !(self.body_friction.is_finite() && self.body_friction >= 0.0) {
            return Err(ModelError::InvalidRobot("body_friction must be >= 0".into()));
        }
        let total = self.total_length();
        for p in &self.friction_patches {
            let inside = p.start >= 0.0 && p.end <= total * (1.0 + 1e-12) && p.start <= p.end;
            if !inside {
                return Err(ModelError::InvalidRobot(format!(
                    "friction patch [{}, {}] m outside [0, {total}] m",
                    p.start, p.end
                )));
            }
            if !(p.coefficient.is_finite() && p.coefficient >= 0.0) {
                return Err(ModelError::InvalidRobot(
                    "friction coefficients must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.actuators.iter().map(|a| a.length).sum()
    }

    /// One clamped actuator, no friction films.
    pub fn single_actuator() -> Self {
        Self {
            actuators: vec![ActuatorSpec::unimorph_default()],
            friction_patches: Vec::new(),
            body_friction: BODY_FRICTION,
        }
    }

    /// Five 100 mm actuators in a row with 50 mm high-friction films under
    /// both ends.
    pub fn five_actuator() -> Self {
        let actuators = vec![ActuatorSpec::unimorph_default(); 5];
        let total: f64 = actuators.iter().map(|a| a.length).sum();
        Self {
            actuators,
            friction_patches: vec![
                FrictionPatch {
                    start: 0.0,
                    end: PATCH_LENGTH,
                    coefficient: PATCH_FRICTION,
                },
                FrictionPatch {
                    start: total - PATCH_LENGTH,
                    end: total,
                    coefficient: PATCH_FRICTION,
                },
            ],
            body_friction: BODY_FRICTION,
        }
    }

    /// Friction coefficient at a position along the robot.
    pub fn friction_at(&self, s: f64) -> f64 {
        self.friction_patches
            .iter()
            .find(|p| s >= p.start && s <= p.end)
            .map_or(self.body_friction, |p| p.coefficient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_stack() -> CrossSection {
        CrossSection::steel_piezo_unimorph(STRIP_WIDTH).unwrap()
    }

    #[test]
    fn homogeneous_layer_neutral_axis_is_mid_height() {
        let s = CrossSection::new(vec![Layer::new("a", 70e9, 1e-3, 2700.0).unwrap()], 0.01).unwrap();
        assert_relative_eq!(neutral_axis(&s), 0.5e-3, max_relative = 1e-15);
        assert_relative_eq!(
            flexural_rigidity(&s),
            70e9 * 0.01 * 1e-9 / 12.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn identical_layers_put_axis_at_interface() {
        let l = Layer::new("a", 10e9, 2e-4, 1000.0).unwrap();
        let s = CrossSection::new(vec![l.clone(), l], 0.02).unwrap();
        assert_relative_eq!(neutral_axis(&s), 2e-4, max_relative = 1e-15);
    }

    // Hand evaluation of the transformed section:
    //   ΣEh   = 200e9·50e-6 + 30e9·300e-6 = 1.9e7
    //   ΣEhz  = 1e7·25e-6 + 9e6·200e-6   = 2050
    //   z̄     = 2050 / 1.9e7
    #[test]
    fn paper_stack_section() {
        let s = paper_stack();
        let zbar = 2050.0 / 1.9e7;
        assert_relative_eq!(neutral_axis(&s), zbar, max_relative = 1e-12);
        assert!((neutral_axis(&s) - 1.079e-4).abs() < 1e-7);
        let ei = flexural_rigidity(&s);
        assert!((ei - 4.29e-3).abs() < 0.01e-3, "EI = {ei}");
    }

    #[test]
    fn width_scales_rigidity_linearly() {
        let a = CrossSection::steel_piezo_unimorph(0.02).unwrap();
        let b = CrossSection::steel_piezo_unimorph(0.04).unwrap();
        assert_relative_eq!(
            2.0 * flexural_rigidity(&a),
            flexural_rigidity(&b),
            max_relative = 1e-14
        );
    }

    #[test]
    fn linear_density_values() {
        let steel = CrossSection::new(
            vec![Layer::new("steel", STEEL_MODULUS, 50e-6, 7850.0).unwrap()],
            0.02,
        )
        .unwrap();
        assert_relative_eq!(linear_density(&steel), 7.85e-3, max_relative = 1e-12);
        let mu = linear_density(&paper_stack());
        assert!((mu - 2.53e-2).abs() < 0.01e-2, "mu = {mu}");
    }

    #[test]
    fn rejects_degenerate_sections() {
        let l = Layer::new("a", 1e9, 1e-4, 1000.0).unwrap();
        assert!(CrossSection::new(vec![l.clone()], 0.0).is_err());
        assert!(CrossSection::new(vec![], 0.01).is_err());
        assert!(Layer::new("bad", -1.0, 1e-4, 1000.0).is_err());
        assert!(Layer::new("bad", 1e9, 0.0, 1000.0).is_err());
    }

    #[test]
    fn clamped_first_mode_near_23_hz() {
        let p = paper_stack().properties();
        let l = ACTUATOR_LENGTH;
        let f1 = 1.875_f64.powi(2) / (2.0 * std::f64::consts::PI)
            * (p.flexural_rigidity / (p.linear_density * l.powi(4))).sqrt();
        assert!((f1 - 23.0).abs() <= 1.0, "f1 = {f1}");
    }

    fn explicit(d31: f64, pitch: f64) -> ActuatorSpec {
        ActuatorSpec::new(
            0.1,
            paper_stack(),
            PiezoCoupling::Explicit {
                d31,
                electrode_pitch: pitch,
                active_layer: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn explicit_coupling_matches_direct_formula() {
        let a = explicit(-1.7e-10, 0.5e-3);
        let beam = a.beam();
        // Direct evaluation with the piezo layer centerline at 50 + 150 µm.
        let z1 = 200e-6 - 2050.0 / 1.9e7;
        let ei = flexural_rigidity(&paper_stack());
        let expected = (-1.7e-10 / 0.5e-3) * z1 * 30e9 * 300e-6 / ei;
        assert_relative_eq!(
            curvature_per_volt(&a, &beam).unwrap(),
            expected,
            max_relative = 1e-12
        );
        assert_eq!(curvature_per_volt(&explicit(0.0, 1e-3), &beam).unwrap(), 0.0);
    }

    #[test]
    fn centered_active_layer_has_no_moment_arm() {
        let l = Layer::new("p", 30e9, 1e-4, 2900.0).unwrap();
        let a = ActuatorSpec::new(
            0.1,
            CrossSection::new(vec![l.clone(), l.clone(), l], 0.02).unwrap(),
            PiezoCoupling::Explicit {
                d31: 1e-10,
                electrode_pitch: 1e-3,
                active_layer: Some(1),
            },
        )
        .unwrap();
        let mut top = a.clone();
        top.coupling = PiezoCoupling::Explicit {
            d31: 1e-10,
            electrode_pitch: 1e-3,
            active_layer: Some(2),
        };
        assert!(a.gamma().unwrap().abs() < 1e-12 * top.gamma().unwrap().abs());
    }

    #[test]
    fn explicit_coupling_requires_pitch() {
        let a = explicit(1e-10, 0.0);
        assert!(matches!(a.gamma(), Err(ModelError::CouplingUnresolved(_))));
    }

    #[test]
    fn calibrated_anchor_value() {
        let g = calibrate_gamma(0.1, -1000.0, -0.020).unwrap();
        assert!((g - 4.05e-3).abs() < 0.01e-3, "gamma = {g}");
        // Residual of the arc relation at the returned curvature.
        let k = g * -1000.0;
        let d = (1.0 - (k * 0.1).cos()) / k;
        assert_relative_eq!(d, -0.020, max_relative = 1e-10);
    }

    #[test]
    fn calibration_small_angle_limit() {
        let (l, v, d) = (0.1, 200.0, 1e-7);
        let g = calibrate_gamma(l, v, d).unwrap();
        assert_relative_eq!(g, 2.0 * d / (l * l * v), max_relative = 1e-6);
    }

    #[test]
    fn calibration_sign_symmetry() {
        let a = calibrate_gamma(0.1, 500.0, 0.01).unwrap();
        let b = calibrate_gamma(0.1, -500.0, -0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_rejects_unreachable_deflection() {
        assert!(calibrate_gamma(0.1, 100.0, 0.09).is_err());
        assert!(calibrate_gamma(0.1, 0.0, 0.01).is_err());
        assert!(calibrate_gamma(0.1, 100.0, 0.2).is_err());
    }

    #[test]
    fn five_actuator_geometry() {
        let r = RobotSpec::five_actuator();
        r.validate().unwrap();
        assert_relative_eq!(r.total_length(), 0.5, max_relative = 1e-12);
        assert_eq!(r.friction_at(0.01), PATCH_FRICTION);
        assert_eq!(r.friction_at(0.25), BODY_FRICTION);
        assert_eq!(r.friction_at(0.49), PATCH_FRICTION);
    }

    #[test]
    fn patch_outside_robot_rejected() {
        let mut r = RobotSpec::five_actuator();
        r.friction_patches.push(FrictionPatch {
            start: 0.4,
            end: 0.6,
            coefficient: 1.0,
        });
        assert!(r.validate().is_err());
    }
}
