//! Planar motor-link simulation of chain-type piezoelectric soft robots.
//!
//! A robot is a chain of laminated piezoelectric bending actuators. Each
//! actuator is discretized into rigid links joined by torsional motors whose
//! rest angle follows the applied voltage. The chain is integrated in reduced
//! coordinates against a penalty ground with regularized Coulomb friction.

pub mod chain;
pub mod contact;
pub mod drive;
pub mod dynamics;
pub mod harness;
pub mod model;

pub use chain::{discretize, discretize_robot, ChainError, Joint, LinkElement, MotorElement, MotorLinkChain};
pub use contact::{contact_forces, GroundModel};
pub use drive::{
    build_inchworm, build_inchworm_symmetric, build_jump, build_sine, build_step, Channel, DriveError, Waveform, INCHWORM_VOLTAGES,
    JUMP_VOLTAGES,
};
pub use dynamics::{
    forward_kinematics, motor_torque, simulate, solve_static, step, Anchor, DynamicsError, SimConfig, State,
    StaticAnchor, StaticSolution, Trajectory, Vec2,
};
pub use harness::{
    calibrate_damping, detect_dominant_period, run_cantilever_ac, run_cantilever_static, run_inchworm, run_jump,
    run_speed_sweep, run_static_shape, ExperimentReport, HarnessError, InchwormPattern, Metric, Series, Setup,
    ShapeSnapshot, SineDrive,
};
pub use model::{
    calibrate_gamma, ActuatorSpec, BeamProperties, CrossSection, FrictionPatch, Layer, ModelError, PiezoCoupling,
    RobotSpec,
};
