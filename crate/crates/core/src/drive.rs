//! Per-actuator voltage schedules.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriveError {
    #[error("channel {index} out of range ({count} channels)")]
    Channel { index: usize, count: usize },
    #[error("waveform build error: {0}")]
    Build(String),
}

/// Voltage schedule of one actuator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Channel {
    /// Holds the voltage of the latest breakpoint. With a period the schedule
    /// repeats; without one it holds the last value forever.
    PiecewiseConstant {
        /// `(start_time s, voltage V)`, strictly increasing in time.
        breakpoints: Vec<(f64, f64)>,
        period: Option<f64>,
    },
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Channel {
    pub fn constant(voltage: f64) -> Self {
        Channel::PiecewiseConstant {
            breakpoints: vec![(0.0, voltage)],
            period: None,
        }
    }

    pub fn validate(&self) -> Result<(), DriveError> {
        match self {
            Channel::PiecewiseConstant { breakpoints, period } => {
                if breakpoints.is_empty() {
                    return Err(DriveError::Build("no breakpoints".into()));
                }
                if breakpoints.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(DriveError::Build("non-finite breakpoint".into()));
                }
                if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(DriveError::Build(
                        "breakpoint times must be strictly increasing".into(),
                    ));
                }
                if let Some(p) = period {
                    if !(p.is_finite() && *p > 0.0) {
                        return Err(DriveError::Build("period must be positive (s)".into()));
                    }
                    if breakpoints.last().is_some_and(|b| b.0 >= *p) {
                        return Err(DriveError::Build(
                            "breakpoints must lie within one period".into(),
                        ));
                    }
                }
                Ok(())
            }
            Channel::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                if !(frequency.is_finite() && *frequency > 0.0) {
                    return Err(DriveError::Build("frequency must be positive (Hz)".into()));
                }
                if ![offset, amplitude, phase].iter().all(|x| x.is_finite()) {
                    return Err(DriveError::Build("non-finite sinusoid parameter".into()));
                }
                Ok(())
            }
        }
    }

    pub fn voltage_at(&self, t: f64) -> f64 {
        match self {
            Channel::PiecewiseConstant { breakpoints, period } => {
                let local = match period {
                    Some(p) => t.rem_euclid(*p),
                    None => t,
                };
                // Before the first breakpoint the cycle wraps to its last value.
                let idx = breakpoints.partition_point(|(start, _)| *start <= local);
                match idx {
                    0 if period.is_some() => breakpoints[breakpoints.len() - 1].1,
                    0 => 0.0,
                    i => breakpoints[i - 1].1,
                }
            }
            Channel::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (TAU * frequency * t + phase).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub channels: Vec<Channel>,
}

impl Waveform {
    pub fn new(channels: Vec<Channel>) -> Result<Self, DriveError> {
        for c in &channels {
            c.validate()?;
        }
        Ok(Self { channels })
    }

    /// All channels at zero volts.
    pub fn zero(channels: usize) -> Self {
        Self {
            channels: vec![Channel::constant(0.0); channels],
        }
    }

    pub fn constant(voltages: &[f64]) -> Self {
        Self {
            channels: voltages.iter().map(|&v| Channel::constant(v)).collect(),
        }
    }

    pub fn voltage_at(&self, channel: usize, t: f64) -> Result<f64, DriveError> {
        voltage_at(self, channel, t)
    }

    /// Voltages of every channel at `t`, written into `out`.
    pub fn sample_into(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.channels.iter().map(|c| c.voltage_at(t)));
    }

    pub fn sample(&self, t: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.channels.len());
        self.sample_into(t, &mut v);
        v
    }
}

pub fn voltage_at(waveform: &Waveform, channel: usize, t: f64) -> Result<f64, DriveError> {
    waveform
        .channels
        .get(channel)
        .map(|c| c.voltage_at(t))
        .ok_or(DriveError::Channel {
            index: channel,
            count: waveform.channels.len(),
        })
}

/// Default on-voltages of the inchworm gait, actuators 1 to 5.
pub const INCHWORM_VOLTAGES: [f64; 5] = [300.0, 300.0, -1500.0, 300.0, 300.0];
/// Default on-state of the jump cycle for actuators 2 to 4 (the centre-arch
/// static pattern).
pub const JUMP_VOLTAGES: [f64; 3] = [300.0, -960.0, 300.0];

/// Four-step inchworm cycle with equal sub-steps.
///
/// 1. actuator 1 on (lifts the left film)
/// 2. actuators 1–4 on (the raised end slides in while the body arches)
/// 3. actuators 2–5 on (films swap: left end down, right end up)
/// 4. actuator 5 on (the body flattens and pushes the raised right end out)
pub fn build_inchworm(on_voltages: &[f64], cycle_period: f64) -> Result<Waveform, DriveError> {
    build_inchworm_with_steps(on_voltages, cycle_period, [0.25; 4])
}

/// [`build_inchworm`] with explicit sub-step fractions (summing to 1).
pub fn build_inchworm_with_steps(
    on_voltages: &[f64],
    cycle_period: f64,
    fractions: [f64; 4],
) -> Result<Waveform, DriveError> {
    if on_voltages.len() != 5 {
        return Err(DriveError::Build(format!(
            "inchworm needs 5 channels, got {}",
            on_voltages.len()
        )));
    }
    if !(cycle_period.is_finite() && cycle_period > 0.0) {
        return Err(DriveError::Build("cycle period must be positive (s)".into()));
    }
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DriveError::Build(
            "step fractions must be positive and sum to 1".into(),
        ));
    }
    // Step start times.
    let t1 = fractions[0] * cycle_period;
    let t2 = t1 + fractions[1] * cycle_period;
    let t3 = t2 + fractions[2] * cycle_period;
    let sched = |on: &[(f64, f64)]| Channel::PiecewiseConstant {
        breakpoints: on.to_vec(),
        period: Some(cycle_period),
    };
    let v = on_voltages;
    let channels = vec![
        sched(&[(0.0, v[0]), (t2, 0.0)]),
        sched(&[(0.0, 0.0), (t1, v[1]), (t3, 0.0)]),
        sched(&[(0.0, 0.0), (t1, v[2]), (t3, 0.0)]),
        sched(&[(0.0, 0.0), (t1, v[3]), (t3, 0.0)]),
        sched(&[(0.0, 0.0), (t2, v[4])]),
    ];
    Waveform::new(channels)
}

/// Control variant of the inchworm cycle in which actuator 5 follows
/// actuator 1's schedule, so both ends are always treated alike.
pub fn build_inchworm_symmetric(on_voltages: &[f64], cycle_period: f64) -> Result<Waveform, DriveError> {
    let mut w = build_inchworm(on_voltages, cycle_period)?;
    w.channels[4] = Channel::PiecewiseConstant {
        breakpoints: vec![(0.0, on_voltages[4]), (0.5 * cycle_period, 0.0)],
        period: Some(cycle_period),
    };
    Ok(w)
}

/// Two-phase jump cycle: actuators 2–4 at `on_voltages` for the first half
/// period, everything off for the second; actuators 1 and 5 stay at 0 V.
pub fn build_jump(frequency: f64, on_voltages: [f64; 3]) -> Result<Waveform, DriveError> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(DriveError::Build("frequency must be positive (Hz)".into()));
    }
    let period = 1.0 / frequency;
    let square = |v: f64| Channel::PiecewiseConstant {
        breakpoints: vec![(0.0, v), (0.5 * period, 0.0)],
        period: Some(period),
    };
    Waveform::new(vec![
        Channel::constant(0.0),
        square(on_voltages[0]),
        square(on_voltages[1]),
        square(on_voltages[2]),
        Channel::constant(0.0),
    ])
}

/// Single-channel sinusoid `offset + amplitude·sin(2πft)`.
pub fn build_sine(offset: f64, amplitude: f64, frequency: f64) -> Result<Waveform, DriveError> {
    Waveform::new(vec![Channel::Sinusoid {
        offset,
        amplitude,
        frequency,
        phase: 0.0,
    }])
}

/// Single-channel step: 0 V before `at`, `voltage` from `at` on.
pub fn build_step(voltage: f64, at: f64) -> Result<Waveform, DriveError> {
    if !at.is_finite() {
        return Err(DriveError::Build("step time must be finite".into()));
    }
    let breakpoints = if at <= 0.0 {
        vec![(0.0, voltage)]
    } else {
        vec![(0.0, 0.0), (at, voltage)]
    };
    Waveform::new(vec![Channel::PiecewiseConstant {
        breakpoints,
        period: None,
    }])
}
