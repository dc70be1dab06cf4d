//! Discretization of a robot into rigid links joined by torsional motors.
//!
//! Every actuator of length `L` becomes `m` motor-link units: an end link of
//! length `l = L/2m`, `m - 1` interior links of length `2l`, and another end
//! link of length `l`, with a motor of stiffness `k = EI/2l` at each of the `m`
//! interior vertices. Neighbouring actuators are welded end link to end link,
//! so the junction carries no degree of freedom.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BeamProperties, ModelError, RobotSpec};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkElement {
    /// m
    pub length: f64,
    /// kg
    pub mass: f64,
    /// kg·m², slender rod about its own center
    pub rotational_inertia: f64,
    pub actuator_index: usize,
    pub underside_friction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorElement {
    /// N·m/rad
    pub stiffness_k: f64,
    /// s
    pub damping_eta: f64,
    /// rad/V, equal to β/m of the owning actuator
    pub voltage_gain: f64,
    pub actuator_index: usize,
}

impl MotorElement {
    /// Unloaded target angle `θ_V = (β/m)·V`.
    pub fn target_angle(&self, voltage: f64) -> f64 {
        target_angle(self, voltage)
    }
}

/// Connection between link `i` and link `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Joint {
    /// Torsional motor, by index into [`MotorLinkChain::motors`].
    Motor(usize),
    /// Actuator junction, welded rigidly.
    Rigid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorLinkChain {
    pub links: Vec<LinkElement>,
    pub motors: Vec<MotorElement>,
    /// `joints[i]` joins `links[i]` and `links[i + 1]`.
    pub joints: Vec<Joint>,
    /// Link indices at which a new actuator starts (every entry is preceded
    /// by a rigid joint).
    pub actuator_boundaries: Vec<usize>,
    pub actuator_count: usize,
}

impl MotorLinkChain {
    pub fn total_length(&self) -> f64 {
        self.links.iter().map(|l| l.length).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Number of link-endpoint nodes (links + 1).
    pub fn node_count(&self) -> usize {
        self.links.len() + 1
    }

    /// Node index at which each motor sits (the node shared by the two links
    /// it joins).
    pub fn motor_nodes(&self) -> Vec<usize> {
        let mut nodes = vec![0; self.motors.len()];
        for (i, j) in self.joints.iter().enumerate() {
            if let Joint::Motor(m) = *j {
                nodes[m] = i + 1;
            }
        }
        nodes
    }

    /// Friction coefficient used at each node: the larger of the links that
    /// meet there.
    pub fn node_friction(&self) -> Vec<f64> {
        let n = self.links.len();
        (0..=n)
            .map(|k| {
                let left = k.checked_sub(1).map(|i| self.links[i].underside_friction);
                let right = self.links.get(k).map(|l| l.underside_friction);
                match (left, right) {
                    (Some(a), Some(b)) => a.max(b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => 0.0,
                }
            })
            .collect()
    }

    /// Target angle of every motor for the given per-actuator voltages.
    pub fn target_angles(&self, voltages: &[f64]) -> Vec<f64> {
        self.motors
            .iter()
            .map(|m| m.target_angle(voltages.get(m.actuator_index).copied().unwrap_or(0.0)))
            .collect()
    }
}

pub fn target_angle(motor: &MotorElement, voltage: f64) -> f64 {
    motor.voltage_gain * voltage
}

/// Builds the motor-link chain with `m` motors per actuator and motor damping
/// `eta` (s). `beams` gives the section properties of each actuator.
pub fn discretize(
    robot: &RobotSpec,
    beams: &[BeamProperties],
    m: usize,
    eta: f64,
) -> Result<MotorLinkChain, ChainError> {
    if m == 0 {
        return Err(ChainError::InvalidDiscretization(
            "motors per actuator must be at least 1".into(),
        ));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(ChainError::InvalidDiscretization(
            "motor damping eta must be >= 0 (s)".into(),
        ));
    }
    if beams.len() != robot.actuators.len() {
        return Err(ChainError::InvalidDiscretization(format!(
            "{} beam property sets for {} actuators",
            beams.len(),
            robot.actuators.len()
        )));
    }
    robot.validate()?;

    let mut links = Vec::new();
    let mut motors = Vec::new();
    let mut joints = Vec::new();
    let mut boundaries = Vec::new();
    let mut s = 0.0;

    for (a, (actuator, beam)) in robot.actuators.iter().zip(beams).enumerate() {
        let l = actuator.length / (2.0 * m as f64);
        let k = beam.flexural_rigidity / (2.0 * l);
        let gain = actuator.beta()? / m as f64;
        if a > 0 {
            joints.push(Joint::Rigid);
            boundaries.push(links.len());
        }
        for unit in 0..=m {
            let length = if unit == 0 || unit == m { l } else { 2.0 * l };
            let mass = beam.linear_density * length;
            let mid = s + 0.5 * length;
            links.push(LinkElement {
                length,
                mass,
                rotational_inertia: mass * length * length / 12.0,
                actuator_index: a,
                underside_friction: robot.friction_at(mid),
            });
            s += length;
            if unit < m {
                joints.push(Joint::Motor(motors.len()));
                motors.push(MotorElement {
                    stiffness_k: k,
                    damping_eta: eta,
                    voltage_gain: gain,
                    actuator_index: a,
                });
            }
        }
    }

    Ok(MotorLinkChain {
        links,
        motors,
        joints,
        actuator_boundaries: boundaries,
        actuator_count: robot.actuators.len(),
    })
}

/// Convenience: section properties taken from each actuator's own stack.
pub fn discretize_robot(robot: &RobotSpec, m: usize, eta: f64) -> Result<MotorLinkChain, ChainError> {
    let beams: Vec<_> = robot.actuators.iter().map(|a| a.beam()).collect();
    discretize(robot, &beams, m, eta)
}
