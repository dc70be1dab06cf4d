//! Node-ground contact: penalty normal force and regularized Coulomb friction.

use serde::{Deserialize, Serialize};

use crate::chain::{Joint, MotorLinkChain};
use crate::dynamics::{Kinematics, State, Vec2};

/// A flat ground at `y = height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundModel {
    /// m
    pub height: f64,
    /// N/m per node
    pub normal_stiffness: f64,
    /// N·s/m per node
    pub normal_damping: f64,
    /// Sliding speed (m/s) at which friction saturates to its Coulomb value.
    pub stick_velocity: f64,
}

impl Default for GroundModel {
    fn default() -> Self {
        Self {
            height: 0.0,
            normal_stiffness: 2.0e4,
            normal_damping: 2.0,
            stick_velocity: 1.0e-3,
        }
    }
}

impl GroundModel {
    pub fn validate(&self) -> Result<(), String> {
        if !self.height.is_finite() {
            return Err("ground.height must be finite".into());
        }
        if !(self.normal_stiffness.is_finite() && self.normal_stiffness > 0.0) {
            return Err("ground.normal_stiffness must be positive (N/m)".into());
        }
        if !(self.normal_damping.is_finite() && self.normal_damping >= 0.0) {
            return Err("ground.normal_damping must be >= 0 (N·s/m)".into());
        }
        if !(self.stick_velocity.is_finite() && self.stick_velocity > 0.0) {
            return Err("ground.stick_velocity must be positive (m/s)".into());
        }
        Ok(())
    }

    /// Contact force on one node given its position, velocity and friction
    /// coefficient. Zero when the node is above ground; never pulls down.
    pub fn node_force(&self, position: Vec2, velocity: Vec2, friction: f64) -> Vec2 {
        let depth = self.height - position[1];
        if depth <= 0.0 {
            return [0.0; 2];
        }
        let normal = (self.normal_stiffness * depth - self.normal_damping * velocity[1]).max(0.0);
        let slip = (velocity[0] / self.stick_velocity).clamp(-1.0, 1.0);
        [-friction * normal * slip, normal]
    }
}

/// Contact force on every node of the chain (zero at welded junctions).
pub fn contact_forces(chain: &MotorLinkChain, state: &State, ground: &GroundModel) -> Vec<Vec2> {
    contact_forces_from(chain, &Kinematics::new(chain, state), ground)
}

pub(crate) fn contact_forces_from(chain: &MotorLinkChain, kin: &Kinematics, ground: &GroundModel) -> Vec<Vec2> {
    let mut out = Vec::new();
    contact_forces_into(chain, kin, ground, &mut out);
    out
}

pub(crate) fn contact_forces_into(
    chain: &MotorLinkChain,
    kin: &Kinematics,
    ground: &GroundModel,
    out: &mut Vec<Vec2>,
) {
    out.clear();
    let n = chain.links.len();
    for k in 0..=n {
        // A welded junction is the midpoint of one rigid link, not a contact
        // point.
        if k > 0 && k < n && chain.joints[k - 1] == Joint::Rigid {
            out.push([0.0; 2]);
            continue;
        }
        let left = k.checked_sub(1).map(|i| chain.links[i].underside_friction);
        let right = chain.links.get(k).map(|l| l.underside_friction);
        let mu = left.unwrap_or(0.0).max(right.unwrap_or(0.0));
        out.push(ground.node_force(kin.nodes[k], kin.node_velocities[k], mu));
    }
}
