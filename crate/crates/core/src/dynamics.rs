//! Reduced-coordinate planar dynamics of a motor-link chain.
//!
//! Generalized coordinates are the base pose (position of the first node and
//! orientation of the first link) plus one relative angle per motor. Welded
//! actuator junctions carry no coordinate, so joints never drift.
//!
//! Each step assembles the mass matrix from composite (subtree) inertias,
//! collects gravity, external node forces and velocity-product terms, and
//! advances with semi-implicit Euler: velocities first, then positions from
//! the new velocities. The motor law `τ = −k(θ − θ_V + ηθ̇)` is taken at the
//! end of the step (linearly implicit), which keeps the stiff, heavily damped
//! short links stable at millisecond-scale steps.
//!
//! For a free chain the translational coordinates are integrated at the center
//! of mass, where they decouple from the shape: the center of mass then moves
//! exactly as a point mass under the summed external force.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Joint, MotorLinkChain};
use crate::contact::{self, GroundModel};
use crate::drive::Waveform;

pub type Vec2 = [f64; 2];

#[inline]
fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Rotated by +90°.
#[inline]
fn perp(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(
        "simulation diverged at step {step} (t = {time:.6} s): non-finite state; \
         try a smaller timestep (currently {timestep} s)"
    )]
    Divergence { step: u64, time: f64, timestep: f64 },
    #[error(
        "static relaxation did not converge in {steps} steps: kinetic energy {kinetic_energy:.3e} J, \
         max residual generalized force {residual:.3e}"
    )]
    RelaxationFailed {
        steps: u64,
        kinetic_energy: f64,
        residual: f64,
    },
    #[error("state does not match chain: {0}")]
    Dimension(String),
    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),
}

/// Generalized coordinates and rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Position of the first node (m).
    pub base_position: Vec2,
    /// Orientation of the first link (rad, counter-clockwise from +x).
    pub base_orientation: f64,
    /// One per motor; angle of the following link relative to the preceding
    /// one, 0 when collinear.
    pub joint_angles: Vec<f64>,
    pub base_velocity: Vec2,
    pub base_angular_velocity: f64,
    pub joint_rates: Vec<f64>,
    pub time: f64,
}

impl State {
    /// Straight chain at rest with its first node at `position`.
    pub fn straight(chain: &MotorLinkChain, position: Vec2, orientation: f64) -> Self {
        let n = chain.motors.len();
        Self {
            base_position: position,
            base_orientation: orientation,
            joint_angles: vec![0.0; n],
            base_velocity: [0.0; 2],
            base_angular_velocity: 0.0,
            joint_rates: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|x| x.is_finite())
            && self.base_orientation.is_finite()
            && self.base_velocity.iter().all(|x| x.is_finite())
            && self.base_angular_velocity.is_finite()
            && self.joint_angles.iter().all(|x| x.is_finite())
            && self.joint_rates.iter().all(|x| x.is_finite())
            && self.time.is_finite()
    }

    fn check(&self, chain: &MotorLinkChain) -> Result<(), DynamicsError> {
        let n = chain.motors.len();
        if self.joint_angles.len() != n || self.joint_rates.len() != n {
            return Err(DynamicsError::Dimension(format!(
                "{} joint angles / {} joint rates for {n} motors",
                self.joint_angles.len(),
                self.joint_rates.len()
            )));
        }
        Ok(())
    }
}

/// How the chain is held.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Anchor {
    /// Floating base: the whole chain moves freely in the plane.
    #[default]
    Free,
    /// First link fixed at the given pose (cantilever clamp).
    Clamped { position: Vec2, orientation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// s
    pub timestep: f64,
    /// m/s², acting along −y
    pub gravity: f64,
    pub max_steps: u64,
    pub anchor: Anchor,
    /// Record every n-th step in trajectories.
    pub sample_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            timestep: 1e-4,
            gravity: 9.81,
            max_steps: 200_000_000,
            anchor: Anchor::Free,
            sample_every: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.timestep.is_finite() && self.timestep > 0.0) {
            return Err(DynamicsError::InvalidConfig("timestep must be positive (s)".into()));
        }
        if !self.gravity.is_finite() {
            return Err(DynamicsError::InvalidConfig("gravity must be finite".into()));
        }
        if self.sample_every == 0 {
            return Err(DynamicsError::InvalidConfig("sample_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub state: State,
    pub nodes: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// s
    pub sample_interval: f64,
    pub samples: Vec<Sample>,
}

/// `τ = −k(θ − θ_V + η·θ̇)`
pub fn motor_torque(theta: f64, theta_rate: f64, theta_target: f64, k: f64, eta: f64) -> f64 {
    -k * (theta - theta_target + eta * theta_rate)
}

/// Positions and rates of every link and node of a chain in one state.
#[derive(Debug, Clone, Default)]
pub struct Kinematics {
    /// Link orientations.
    pub phi: Vec<f64>,
    /// Link angular velocities.
    pub omega: Vec<f64>,
    /// `links + 1` node positions.
    pub nodes: Vec<Vec2>,
    pub node_velocities: Vec<Vec2>,
    /// Link centers.
    pub centers: Vec<Vec2>,
    pub center_velocities: Vec<Vec2>,
    /// Velocity-product acceleration of each link center with the base
    /// translation held fixed.
    center_bias: Vec<Vec2>,
}

impl Kinematics {
    pub fn new(chain: &MotorLinkChain, state: &State) -> Self {
        let mut k = Self::default();
        k.update(chain, state);
        k
    }

    pub fn update(&mut self, chain: &MotorLinkChain, state: &State) {
        let n = chain.links.len();
        self.phi.resize(n, 0.0);
        self.omega.resize(n, 0.0);
        self.nodes.resize(n + 1, [0.0; 2]);
        self.node_velocities.resize(n + 1, [0.0; 2]);
        self.centers.resize(n, [0.0; 2]);
        self.center_velocities.resize(n, [0.0; 2]);
        self.center_bias.resize(n, [0.0; 2]);

        let mut phi = state.base_orientation;
        let mut omega = state.base_angular_velocity;
        let mut p = state.base_position;
        let mut v = state.base_velocity;
        let mut a = [0.0; 2];
        self.nodes[0] = p;
        self.node_velocities[0] = v;
        for (k, link) in chain.links.iter().enumerate() {
            if k > 0 {
                if let Joint::Motor(m) = chain.joints[k - 1] {
                    phi += state.joint_angles[m];
                    omega += state.joint_rates[m];
                }
            }
            let (s, c) = phi.sin_cos();
            let e = [c, s];
            let l = link.length;
            let h = 0.5 * l;
            let w2 = omega * omega;
            self.phi[k] = phi;
            self.omega[k] = omega;
            self.centers[k] = [p[0] + h * c, p[1] + h * s];
            self.center_velocities[k] = [v[0] - h * omega * s, v[1] + h * omega * c];
            self.center_bias[k] = [a[0] - h * w2 * e[0], a[1] - h * w2 * e[1]];
            p = [p[0] + l * c, p[1] + l * s];
            v = [v[0] - l * omega * s, v[1] + l * omega * c];
            a = [a[0] - l * w2 * e[0], a[1] - l * w2 * e[1]];
            self.nodes[k + 1] = p;
            self.node_velocities[k + 1] = v;
        }
    }
}

/// Node positions (first node, then the far end of every link).
pub fn forward_kinematics(chain: &MotorLinkChain, state: &State) -> Vec<Vec2> {
    Kinematics::new(chain, state).nodes
}

pub fn center_of_mass(chain: &MotorLinkChain, state: &State) -> Vec2 {
    let kin = Kinematics::new(chain, state);
    let m = chain.total_mass();
    let mut c = [0.0; 2];
    for (link, x) in chain.links.iter().zip(&kin.centers) {
        c[0] += link.mass * x[0];
        c[1] += link.mass * x[1];
    }
    [c[0] / m, c[1] / m]
}

pub fn linear_momentum(chain: &MotorLinkChain, state: &State) -> Vec2 {
    let kin = Kinematics::new(chain, state);
    chain
        .links
        .iter()
        .zip(&kin.center_velocities)
        .fold([0.0; 2], |p, (l, v)| [p[0] + l.mass * v[0], p[1] + l.mass * v[1]])
}

pub fn kinetic_energy(chain: &MotorLinkChain, state: &State) -> f64 {
    let kin = Kinematics::new(chain, state);
    kinetic_energy_of(chain, &kin)
}

fn kinetic_energy_of(chain: &MotorLinkChain, kin: &Kinematics) -> f64 {
    chain
        .links
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let v = kin.center_velocities[k];
            0.5 * l.mass * dot(v, v) + 0.5 * l.rotational_inertia * kin.omega[k].powi(2)
        })
        .sum()
}

/// Energy stored in the motor springs, `Σ ½k(θ − θ_V)²`.
pub fn spring_energy(chain: &MotorLinkChain, state: &State, voltages: &[f64]) -> f64 {
    chain
        .motors
        .iter()
        .zip(&state.joint_angles)
        .map(|(m, th)| {
            let d = th - m.target_angle(voltages.get(m.actuator_index).copied().unwrap_or(0.0));
            0.5 * m.stiffness_k * d * d
        })
        .sum()
}

/// Reusable stepping machinery for one chain and anchor.
pub struct Stepper<'a> {
    chain: &'a MotorLinkChain,
    anchor: Anchor,
    motor_nodes: Vec<usize>,
    /// Node at which each rotational coordinate pivots (base first when free).
    pivots: Vec<usize>,
    total_mass: f64,
    kin: Kinematics,
    // Subtree sums per node index.
    sub_mass: Vec<f64>,
    sub_moment: Vec<Vec2>,
    sub_inertia: Vec<f64>,
    sub_force: Vec<Vec2>,
    sub_torque: Vec<f64>,
    targets: Vec<f64>,
    mass: DMatrix<f64>,
    system: DMatrix<f64>,
    rhs: DVector<f64>,
    velocity: DVector<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(chain: &'a MotorLinkChain, anchor: Anchor) -> Self {
        let motor_nodes = chain.motor_nodes();
        let pivots: Vec<usize> = match anchor {
            Anchor::Free => std::iter::once(0).chain(motor_nodes.iter().copied()).collect(),
            Anchor::Clamped { .. } => motor_nodes.clone(),
        };
        let dof = match anchor {
            Anchor::Free => 2 + pivots.len(),
            Anchor::Clamped { .. } => pivots.len(),
        };
        let n = chain.links.len();
        Self {
            chain,
            anchor,
            motor_nodes,
            pivots,
            total_mass: chain.total_mass(),
            kin: Kinematics::default(),
            sub_mass: vec![0.0; n + 1],
            sub_moment: vec![[0.0; 2]; n + 1],
            sub_inertia: vec![0.0; n + 1],
            sub_force: vec![[0.0; 2]; n + 1],
            sub_torque: vec![0.0; n + 1],
            targets: vec![0.0; chain.motors.len()],
            mass: DMatrix::zeros(dof, dof),
            system: DMatrix::zeros(dof, dof),
            rhs: DVector::zeros(dof),
            velocity: DVector::zeros(dof),
        }
    }

    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }

    fn translational(&self) -> usize {
        match self.anchor {
            Anchor::Free => 2,
            Anchor::Clamped { .. } => 0,
        }
    }

    /// Pins a clamped state to its anchor.
    fn apply_anchor(&self, state: &mut State) {
        if let Anchor::Clamped {
            position,
            orientation,
        } = self.anchor
        {
            state.base_position = position;
            state.base_orientation = orientation;
            state.base_velocity = [0.0; 2];
            state.base_angular_velocity = 0.0;
        }
    }

    /// Subtree mass, first mass moment about the subtree's pivot node, and
    /// rotational inertia about that node, for every node index.
    fn composite_inertias(&mut self) {
        let links = &self.chain.links;
        let n = links.len();
        let kin = &self.kin;
        self.sub_mass[n] = 0.0;
        self.sub_moment[n] = [0.0; 2];
        self.sub_inertia[n] = 0.0;
        for k in (0..n).rev() {
            let p = kin.nodes[k];
            let d = sub(kin.nodes[k + 1], p);
            let r = sub(kin.centers[k], p);
            let (m_out, a_out, i_out) = (self.sub_mass[k + 1], self.sub_moment[k + 1], self.sub_inertia[k + 1]);
            let m = links[k].mass;
            self.sub_mass[k] = m + m_out;
            self.sub_moment[k] = [
                m * r[0] + a_out[0] + m_out * d[0],
                m * r[1] + a_out[1] + m_out * d[1],
            ];
            self.sub_inertia[k] = links[k].rotational_inertia
                + m * dot(r, r)
                + i_out
                + 2.0 * dot(d, a_out)
                + m_out * dot(d, d);
        }
    }

    /// Rate of change of the total mass moment per unit rate of the
    /// rotational coordinate pivoting at `node`.
    #[inline]
    fn coupling(&self, node: usize) -> Vec2 {
        perp(self.sub_moment[node])
    }

    fn assemble_mass(&mut self) {
        self.composite_inertias();
        let t = self.translational();
        let np = self.pivots.len();
        self.mass.fill(0.0);
        for a in 0..np {
            for b in a..np {
                let (sa, sb) = (self.pivots[a], self.pivots[b]);
                // sa <= sb since pivots are increasing
                let shift = sub(self.kin.nodes[sb], self.kin.nodes[sa]);
                let mut h = self.sub_inertia[sb] + dot(shift, self.sub_moment[sb]);
                if t == 2 {
                    h -= dot(self.coupling(sa), self.coupling(sb)) / self.total_mass;
                }
                self.mass[(t + a, t + b)] = h;
                self.mass[(t + b, t + a)] = h;
            }
        }
        if t == 2 {
            self.mass[(0, 0)] = self.total_mass;
            self.mass[(1, 1)] = self.total_mass;
        }
    }

    /// Generalized forces from gravity, node forces and velocity-product
    /// terms, written into `rhs`. Motor torques are not included.
    fn assemble_forces(&mut self, node_forces: Option<&[Vec2]>, gravity: f64) {
        let links = &self.chain.links;
        let n = links.len();
        let kin = &self.kin;
        let node_force = |k: usize| node_forces.map_or([0.0; 2], |f| f[k]);

        let mut real_total = node_force(n);
        self.sub_force[n] = node_force(n);
        self.sub_torque[n] = 0.0;
        for k in (0..n).rev() {
            let p = kin.nodes[k];
            let m = links[k].mass;
            let bias = kin.center_bias[k];
            let f_link = [-m * bias[0], -m * bias[1] - m * gravity];
            let f_node = node_force(k);
            real_total[0] += f_node[0];
            real_total[1] += f_node[1] - m * gravity;
            let outer = self.sub_force[k + 1];
            self.sub_force[k] = [f_link[0] + f_node[0] + outer[0], f_link[1] + f_node[1] + outer[1]];
            self.sub_torque[k] = cross(sub(kin.centers[k], p), f_link)
                + self.sub_torque[k + 1]
                + cross(sub(kin.nodes[k + 1], p), outer);
        }

        let t = self.translational();
        let all_total = self.sub_force[0];
        for (a, &s) in self.pivots.iter().enumerate() {
            let mut q = self.sub_torque[s];
            if t == 2 {
                q -= dot(self.coupling(s), all_total) / self.total_mass;
            }
            self.rhs[t + a] = q;
        }
        if t == 2 {
            self.rhs[0] = real_total[0];
            self.rhs[1] = real_total[1];
        }
    }

    /// Generalized velocity vector of `state` in the stepper's coordinates.
    fn load_velocity(&mut self, state: &State) {
        let t = self.translational();
        let base_rot = usize::from(t == 2);
        if t == 2 {
            // Center-of-mass velocity from the first-node velocity.
            let mut v = state.base_velocity;
            let scale = 1.0 / self.total_mass;
            for (a, &s) in self.pivots.iter().enumerate() {
                let rate = if a == 0 {
                    state.base_angular_velocity
                } else {
                    state.joint_rates[a - 1]
                };
                let h = self.coupling(s);
                v[0] += h[0] * rate * scale;
                v[1] += h[1] * rate * scale;
            }
            self.velocity[0] = v[0];
            self.velocity[1] = v[1];
            self.velocity[2] = state.base_angular_velocity;
        }
        for (j, rate) in state.joint_rates.iter().enumerate() {
            self.velocity[t + base_rot + j] = *rate;
        }
    }

    fn motor_offset(&self) -> usize {
        match self.anchor {
            Anchor::Free => 3,
            Anchor::Clamped { .. } => 0,
        }
    }

    /// Max-norm of the generalized force at the current configuration with
    /// all rates zeroed: gravity, motor springs, and (when given) ground
    /// contact at rest.
    pub fn static_residual(
        &mut self,
        state: &State,
        voltages: &[f64],
        ground: Option<&GroundModel>,
        gravity: f64,
    ) -> f64 {
        let mut rest = state.clone();
        rest.base_velocity = [0.0; 2];
        rest.base_angular_velocity = 0.0;
        rest.joint_rates.iter_mut().for_each(|r| *r = 0.0);
        self.apply_anchor(&mut rest);
        self.kin.update(self.chain, &rest);
        let forces = ground.map(|g| contact::contact_forces_from(self.chain, &self.kin, g));
        self.composite_inertias();
        self.assemble_forces(forces.as_deref(), gravity);
        let off = self.motor_offset();
        for (j, motor) in self.chain.motors.iter().enumerate() {
            let v = voltages.get(motor.actuator_index).copied().unwrap_or(0.0);
            self.rhs[off + j] += motor_torque(rest.joint_angles[j], 0.0, motor.target_angle(v), motor.stiffness_k, 0.0);
        }
        self.rhs.amax()
    }

    /// Advances `state` by one timestep in place.
    ///
    /// `extra_damping` (1/s) adds mass-proportional damping, used by static
    /// relaxation; it is 0 for physical simulation.
    pub fn advance(
        &mut self,
        state: &mut State,
        voltages: &[f64],
        node_forces: Option<&[Vec2]>,
        config: &SimConfig,
        extra_damping: f64,
    ) -> Result<(), DynamicsError> {
        let dt = config.timestep;
        self.apply_anchor(state);
        self.kin.update(self.chain, state);
        self.assemble_mass();
        self.assemble_forces(node_forces, config.gravity);
        self.load_velocity(state);

        // (M(1 + dt·c) + dt(kη + dt·k)) v⁺ = M v + dt(Q − k(θ − θ_V))
        self.system.copy_from(&self.mass);
        if extra_damping > 0.0 {
            self.system *= 1.0 + dt * extra_damping;
        }
        let mut rhs = &self.mass * &self.velocity;
        let off = self.motor_offset();
        for (j, motor) in self.chain.motors.iter().enumerate() {
            let v = voltages.get(motor.actuator_index).copied().unwrap_or(0.0);
            self.targets[j] = motor.target_angle(v);
            let k = motor.stiffness_k;
            self.system[(off + j, off + j)] += dt * k * (motor.damping_eta + dt);
            self.rhs[off + j] -= k * (state.joint_angles[j] - self.targets[j]);
        }
        rhs.axpy(dt, &self.rhs, 1.0);

        let chol = nalgebra::Cholesky::new(self.system.clone()).ok_or(DynamicsError::Divergence {
            step: 0,
            time: state.time,
            timestep: dt,
        })?;
        let v_new = chol.solve(&rhs);

        // Positions from the new velocities.
        let t = self.translational();
        let mut com = [0.0; 2];
        if t == 2 {
            com = self.center_offset();
            com[0] += state.base_position[0] + dt * v_new[0];
            com[1] += state.base_position[1] + dt * v_new[1];
            state.base_angular_velocity = v_new[2];
            state.base_orientation += dt * v_new[2];
        }
        for j in 0..self.chain.motors.len() {
            state.joint_rates[j] = v_new[off + j];
            state.joint_angles[j] += dt * v_new[off + j];
        }
        state.time += dt;

        if t == 2 {
            // Recover the first node from the new center of mass.
            state.base_position = [0.0; 2];
            state.base_velocity = [0.0; 2];
            self.kin.update(self.chain, state);
            self.composite_inertias();
            let offset = self.center_offset();
            state.base_position = [com[0] - offset[0], com[1] - offset[1]];
            let mut v = [v_new[0], v_new[1]];
            let scale = 1.0 / self.total_mass;
            for (a, &s) in self.pivots.iter().enumerate() {
                let h = self.coupling(s);
                let rate = v_new[2 + a];
                v[0] -= h[0] * rate * scale;
                v[1] -= h[1] * rate * scale;
            }
            state.base_velocity = v;
        }

        if !state.is_finite() {
            return Err(DynamicsError::Divergence {
                step: 0,
                time: state.time,
                timestep: dt,
            });
        }
        Ok(())
    }

    /// Center of mass relative to the first node, from the current subtree
    /// sums.
    fn center_offset(&self) -> Vec2 {
        let a = self.sub_moment[0];
        [a[0] / self.total_mass, a[1] / self.total_mass]
    }

    pub fn kinematics(&self) -> &Kinematics {
        &self.kin
    }

    pub fn motor_nodes(&self) -> &[usize] {
        &self.motor_nodes
    }
}

/// One timestep from `state` under the given per-actuator voltages and
/// per-node external forces.
pub fn step(
    state: &State,
    chain: &MotorLinkChain,
    voltages: &[f64],
    external_forces: &[Vec2],
    config: &SimConfig,
) -> Result<State, DynamicsError> {
    config.validate()?;
    state.check(chain)?;
    if !external_forces.is_empty() && external_forces.len() != chain.node_count() {
        return Err(DynamicsError::Dimension(format!(
            "{} node forces for {} nodes",
            external_forces.len(),
            chain.node_count()
        )));
    }
    let mut next = state.clone();
    let forces = (!external_forces.is_empty()).then_some(external_forces);
    Stepper::new(chain, config.anchor).advance(&mut next, voltages, forces, config, 0.0)?;
    Ok(next)
}

/// Per-step hook receiving the state about to be advanced and the contact
/// forces applied during that step.
pub trait StepObserver {
    fn observe(&mut self, state: &State, contact_forces: Option<&[Vec2]>);
}

impl<F: FnMut(&State, Option<&[Vec2]>)> StepObserver for F {
    fn observe(&mut self, state: &State, contact_forces: Option<&[Vec2]>) {
        self(state, contact_forces)
    }
}

struct NoObserver;

impl StepObserver for NoObserver {
    fn observe(&mut self, _: &State, _: Option<&[Vec2]>) {}
}

pub fn simulate(
    chain: &MotorLinkChain,
    waveform: &Waveform,
    ground: Option<&GroundModel>,
    initial: &State,
    duration: f64,
    config: &SimConfig,
) -> Result<Trajectory, DynamicsError> {
    simulate_observed(chain, waveform, ground, initial, duration, config, &mut NoObserver)
}

/// [`simulate`] with a hook called before every step.
pub fn simulate_observed(
    chain: &MotorLinkChain,
    waveform: &Waveform,
    ground: Option<&GroundModel>,
    initial: &State,
    duration: f64,
    config: &SimConfig,
    observer: &mut dyn StepObserver,
) -> Result<Trajectory, DynamicsError> {
    config.validate()?;
    initial.check(chain)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(DynamicsError::InvalidConfig("duration must be positive (s)".into()));
    }
    let dt = config.timestep;
    let steps = ((duration / dt).round() as u64).max(1);
    if steps > config.max_steps {
        return Err(DynamicsError::InvalidConfig(format!(
            "{steps} steps exceed max_steps = {}",
            config.max_steps
        )));
    }

    let mut stepper = Stepper::new(chain, config.anchor);
    let mut state = initial.clone();
    stepper.apply_anchor(&mut state);
    let t0 = state.time;
    let every = config.sample_every as u64;
    let mut samples = Vec::with_capacity((steps / every + 2) as usize);
    samples.push(Sample {
        time: state.time,
        nodes: forward_kinematics(chain, &state),
        state: state.clone(),
    });
    let mut voltages = Vec::with_capacity(waveform.channels.len());
    let mut kin = Kinematics::default();
    let mut forces: Vec<Vec2> = Vec::new();

    for i in 0..steps {
        waveform.sample_into(state.time, &mut voltages);
        let applied = match ground {
            Some(g) => {
                kin.update(chain, &state);
                contact::contact_forces_into(chain, &kin, g, &mut forces);
                Some(forces.as_slice())
            }
            None => None,
        };
        observer.observe(&state, applied);
        stepper
            .advance(&mut state, &voltages, applied, config, 0.0)
            .map_err(|e| match e {
                DynamicsError::Divergence { time, timestep, .. } => DynamicsError::Divergence {
                    step: i + 1,
                    time,
                    timestep,
                },
                other => other,
            })?;
        state.time = t0 + (i + 1) as f64 * dt;
        if (i + 1) % every == 0 || i + 1 == steps {
            samples.push(Sample {
                time: state.time,
                nodes: stepper_nodes(&mut kin, chain, &state),
                state: state.clone(),
            });
        }
    }

    Ok(Trajectory {
        sample_interval: dt * every as f64,
        samples,
    })
}

fn stepper_nodes(kin: &mut Kinematics, chain: &MotorLinkChain, state: &State) -> Vec<Vec2> {
    kin.update(chain, state);
    kin.nodes.clone()
}

/// What holds the chain while solving for static equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StaticAnchor {
    Clamp { position: Vec2, orientation: f64 },
    Ground(GroundModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticSolution {
    pub state: State,
    pub steps: u64,
    pub kinetic_energy: f64,
    pub residual: f64,
}

/// Kinetic energy threshold for static convergence (J).
pub const STATIC_KINETIC_TOL: f64 = 1e-12;
/// Residual generalized force threshold for static convergence.
pub const STATIC_RESIDUAL_TOL: f64 = 1e-9;

/// Static equilibrium by damped dynamic relaxation. `initial` seeds the
/// search; by default the chain starts straight (on the ground, resting at
/// its unloaded contact depth, when anchored by ground).
pub fn solve_static(
    chain: &MotorLinkChain,
    voltages: &[f64],
    anchor: &StaticAnchor,
    config: &SimConfig,
    initial: Option<&State>,
) -> Result<StaticSolution, DynamicsError> {
    config.validate()?;
    let (sim_anchor, ground) = match anchor {
        StaticAnchor::Clamp {
            position,
            orientation,
        } => (
            Anchor::Clamped {
                position: *position,
                orientation: *orientation,
            },
            None,
        ),
        StaticAnchor::Ground(g) => (Anchor::Free, Some(g)),
    };
    let mut state = match initial {
        Some(s) => {
            s.check(chain)?;
            s.clone()
        }
        None => match anchor {
            StaticAnchor::Clamp {
                position,
                orientation,
            } => State::straight(chain, *position, *orientation),
            StaticAnchor::Ground(g) => {
                let per_node = chain.total_mass() * config.gravity / chain.node_count() as f64;
                State::straight(chain, [0.0, g.height - per_node / g.normal_stiffness], 0.0)
            }
        },
    };
    let cfg = SimConfig {
        anchor: sim_anchor,
        ..*config
    };
    let mut stepper = Stepper::new(chain, sim_anchor);
    stepper.apply_anchor(&mut state);
    let mut kin = Kinematics::default();
    let mut forces = Vec::new();
    // Mass-proportional damping near critical for the slowest flexible modes.
    let damping = RELAXATION_DAMPING;
    let mut ke = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let limit = ((RELAXATION_TIME / config.timestep).ceil() as u64).min(config.max_steps);
    for i in 0..limit {
        if i % 16 == 0 {
            kin.update(chain, &state);
            ke = kinetic_energy_of(chain, &kin);
            if ke < STATIC_KINETIC_TOL {
                residual = stepper.static_residual(&state, voltages, ground, config.gravity);
                if residual < STATIC_RESIDUAL_TOL {
                    state.time = 0.0;
                    return Ok(StaticSolution {
                        state,
                        steps: i,
                        kinetic_energy: ke,
                        residual,
                    });
                }
            }
        }
        let applied = match ground {
            Some(g) => {
                kin.update(chain, &state);
                contact::contact_forces_into(chain, &kin, g, &mut forces);
                Some(forces.as_slice())
            }
            None => None,
        };
        stepper.advance(&mut state, voltages, applied, &cfg, damping)?;
    }
    Err(DynamicsError::RelaxationFailed {
        steps: limit,
        kinetic_energy: ke,
        residual,
    })
}

/// Mass-proportional damping rate used by static relaxation (1/s).
pub const RELAXATION_DAMPING: f64 = 60.0;
/// Pseudo-time after which relaxation gives up (s). The damped transient
/// decays by `exp(-60 t)`, so a healthy solve settles orders of magnitude
/// sooner.
pub const RELAXATION_TIME: f64 = 20.0;

/// Small-motion modes about a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModes {
    /// Undamped natural angular frequencies (rad/s), ascending.
    pub frequencies: Vec<f64>,
    /// Mass-normalized shapes (`φᵀMφ = 1`) in the stepper's generalized
    /// coordinates: joint angles when clamped; center of mass, base angle,
    /// then joint angles when free.
    pub shapes: Vec<Vec<f64>>,
}

/// Generalized mass matrix at `state` (see [`LinearModes::shapes`] for the
/// coordinate order).
pub fn mass_matrix(chain: &MotorLinkChain, state: &State, anchor: Anchor) -> Result<DMatrix<f64>, DynamicsError> {
    state.check(chain)?;
    let mut stepper = Stepper::new(chain, anchor);
    let mut s = state.clone();
    stepper.apply_anchor(&mut s);
    stepper.kin.update(chain, &s);
    stepper.assemble_mass();
    Ok(stepper.mass)
}

/// Modes of `K φ = ω² M φ` about `state`, with `K` the motor stiffnesses.
/// Free chains include three zero rigid-body modes.
pub fn linear_modes(chain: &MotorLinkChain, state: &State, anchor: Anchor) -> Result<LinearModes, DynamicsError> {
    let mass = mass_matrix(chain, state, anchor)?;
    let n = mass.nrows();
    let off = match anchor {
        Anchor::Free => 3,
        Anchor::Clamped { .. } => 0,
    };
    let chol = nalgebra::Cholesky::new(mass)
        .ok_or_else(|| DynamicsError::Dimension("mass matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| DynamicsError::Dimension("singular mass factor".into()))?;
    let mut stiffness = DMatrix::zeros(n, n);
    for (j, motor) in chain.motors.iter().enumerate() {
        stiffness[(off + j, off + j)] = motor.stiffness_k;
    }
    let eig = nalgebra::SymmetricEigen::new(&l_inv * stiffness * l_inv.transpose());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let back = l_inv.transpose();
    Ok(LinearModes {
        frequencies: order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect(),
        shapes: order
            .iter()
            .map(|&i| (&back * eig.eigenvectors.column(i)).iter().copied().collect())
            .collect(),
    })
}
