//! Simplified car driving on a constant-curvature road.
//!
//! The road is an arc of an annulus centred at the origin; the car starts on
//! the centre line at polar angle 0 heading counter-clockwise and must reach
//! the end angle. Unicycle kinematics: heading changes with steering, the
//! position moves along the heading, speed changes with the clipped
//! acceleration. Four range sensors at `-π/4, -π/6, π/6, π/4` from the heading
//! measure the distance to the nearest road edge, normalised by their range.
//!
//! State: `[speed, sensor₁..₄, x, y, heading]`, speed normalised to `[0, 1]`.
//! The policy reads the first five entries.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_config_len, ConfMdp, Step};
use crate::error::{Error, Result};
use crate::policies::{Action, NeuralGaussianPolicy, PolicyModel};
use crate::stats::SeededRng;

pub const SENSOR_ANGLES: [f64; 4] = [-PI / 4.0, -PI / 6.0, PI / 6.0, PI / 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarParams {
    pub horizon: usize,
    pub gamma: f64,
    pub radius: f64,
    pub width: f64,
    /// Polar angle at which the track ends.
    pub track_angle: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    pub max_yaw_rate: f64,
    pub sensor_range: f64,
    pub policy_variance: f64,
    /// Half-widths of the uniform initial perturbations.
    pub init_lateral: f64,
    pub init_heading: f64,
    pub init_speed: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            horizon: 250,
            gamma: 0.996,
            radius: 20.0,
            width: 4.0,
            track_angle: 0.75 * PI,
            dt: 0.1,
            max_speed: 10.0,
            max_accel: 5.0,
            max_yaw_rate: 1.0,
            sensor_range: 10.0,
            policy_variance: 0.1,
            init_lateral: 0.5,
            init_heading: 0.05,
            init_speed: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CarDriving {
    pub params: CarParams,
}

impl CarDriving {
    pub fn new(params: CarParams) -> Self {
        Self { params }
    }

    fn edges(&self) -> (f64, f64) {
        let p = &self.params;
        (p.radius - 0.5 * p.width, p.radius + 0.5 * p.width)
    }

    fn on_road(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.edges();
        let r = (x * x + y * y).sqrt();
        (lo..=hi).contains(&r)
    }

    /// Distance along a ray to the first road edge, normalised and capped at 1.
    pub fn sensor(&self, x: f64, y: f64, angle: f64) -> f64 {
        let (ux, uy) = (angle.cos(), angle.sin());
        let b = x * ux + y * uy;
        let rr = x * x + y * y;
        let (lo, hi) = self.edges();
        let mut best = f64::INFINITY;
        for r in [lo, hi] {
            let disc = b * b - (rr - r * r);
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            for t in [-b - sq, -b + sq] {
                if t > 1e-12 && t < best {
                    best = t;
                }
            }
        }
        (best / self.params.sensor_range).min(1.0)
    }

    fn observe(&self, speed: f64, x: f64, y: f64, heading: f64) -> Vec<f64> {
        let mut s = Vec::with_capacity(8);
        s.push(speed / self.params.max_speed);
        for a in SENSOR_ANGLES {
            s.push(self.sensor(x, y, heading + a));
        }
        s.extend_from_slice(&[x, y, heading]);
        s
    }
}

impl ConfMdp for CarDriving {
    fn name(&self) -> &'static str {
        "car"
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    fn config_dim(&self) -> usize {
        0
    }

    fn default_config(&self) -> Vec<f64> {
        Vec::new()
    }

    fn validate_config(&self, omega: &[f64]) -> Result<()> {
        check_config_len(omega, 0)
    }

    fn reset(&self, omega: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        self.validate_config(omega)?;
        let p = &self.params;
        let lateral = rng.uniform_range(-p.init_lateral, p.init_lateral);
        let heading = 0.5 * PI + rng.uniform_range(-p.init_heading, p.init_heading);
        let speed = rng.uniform_range(0.0, p.init_speed) * p.max_speed;
        Ok(self.observe(speed, p.radius + lateral, 0.0, heading))
    }

    fn step(&self, _omega: &[f64], s: &[f64], a: &Action, _rng: &mut SeededRng) -> Result<Step> {
        let u = match a {
            Action::Continuous(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => v,
            _ => return Err(Error::InvalidArgument("car actions are finite (acceleration, steering) pairs".into())),
        };
        if s.len() < 8 {
            return Err(Error::DimensionMismatch { expected: 8, got: s.len() });
        }
        let p = &self.params;
        let accel = u[0].clamp(-1.0, 1.0) * p.max_accel;
        let steer = u[1].clamp(-1.0, 1.0) * p.max_yaw_rate;
        let speed = (s[0] * p.max_speed + accel * p.dt).clamp(0.0, p.max_speed);
        let heading = s[7] + steer * p.dt;
        let x = s[5] + speed * heading.cos() * p.dt;
        let y = s[6] + speed * heading.sin() * p.dt;
        let next = self.observe(speed, x, y, heading);
        if !self.on_road(x, y) {
            return Ok(Step { state: next, reward: -1.0, done: true });
        }
        let progress = y.atan2(x);
        let reward = speed / p.max_speed;
        let done = progress >= p.track_angle;
        Ok(Step { state: next, reward, done })
    }

    fn log_init_density(&self, omega: &[f64], s0: &[f64]) -> Result<f64> {
        self.validate_config(omega)?;
        let p = &self.params;
        if s0.len() < 8 {
            return Err(Error::OutOfSupport);
        }
        let lateral = s0[5] - p.radius;
        let dheading = s0[7] - 0.5 * PI;
        let speed = s0[0];
        let inside = s0[6] == 0.0
            && lateral.abs() <= p.init_lateral
            && dheading.abs() <= p.init_heading
            && (0.0..=p.init_speed).contains(&speed);
        if !inside {
            return Err(Error::OutOfSupport);
        }
        Ok(-(2.0 * p.init_lateral).ln() - (2.0 * p.init_heading).ln() - p.init_speed.ln())
    }

    fn transition_depends_on_config(&self) -> bool {
        false
    }

    fn policy_space(&self) -> PolicyModel {
        NeuralGaussianPolicy::new(5, 2, self.params.policy_variance)
            .expect("valid sizes")
            .into()
    }
}
