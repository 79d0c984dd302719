//! Minigolf: one putt per step towards a hole at distance `x` on a green
//! with friction `f`.
//!
//! The putter length `ω` scales the applied force into the ball's initial
//! speed `v = ω · force`; the ball decelerates at `(5/7) f g` and travels
//! `v² / (2a)`. It drops into the hole when it reaches it slowly enough,
//! i.e. when its speed there is below the capture speed
//! `√((2h − r)² g / (2r))` for hole radius `h` and ball radius `r`. Sinking
//! the ball ends the episode with reward 0, rolling past the hole ends it
//! with a large penalty, and a short putt costs 1.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_config_len, ConfMdp, Step};
use crate::error::{Error, Result};
use crate::policies::{Action, FeatureMap, GaussianLinearPolicy, PolicyModel};
use crate::stats::SeededRng;

const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinigolfParams {
    pub horizon: usize,
    pub gamma: f64,
    pub hole_size: f64,
    pub ball_radius: f64,
    pub max_distance: f64,
    pub friction_range: (f64, f64),
    pub putter_range: (f64, f64),
    /// Applied force is clipped to `[0, max_force]`.
    pub max_force: f64,
    pub overshoot_penalty: f64,
    pub policy_variance: f64,
    pub default_putter: f64,
}

impl Default for MinigolfParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            gamma: 0.99,
            hole_size: 0.1,
            ball_radius: 0.02135,
            max_distance: 20.0,
            friction_range: (0.065, 0.196),
            putter_range: (1.0, 15.0),
            max_force: 1.0,
            overshoot_penalty: 100.0,
            policy_variance: 0.01,
            default_putter: 5.0,
        }
    }
}

/// `(1, x, f, √x, √f, √(x f))`.
#[derive(Debug, Clone)]
pub struct MinigolfFeatures {
    bound: f64,
}

impl MinigolfFeatures {
    pub fn new(max_distance: f64, max_friction: f64) -> Self {
        let (x, f) = (max_distance, max_friction);
        Self { bound: (1.0 + x * x + f * f + x + f + x * f).sqrt() }
    }
}

impl FeatureMap for MinigolfFeatures {
    fn dim(&self) -> usize {
        6
    }

    fn evaluate_into(&self, s: &[f64], out: &mut [f64]) {
        let (x, f) = (s[0].max(0.0), s[1].max(0.0));
        out.copy_from_slice(&[1.0, x, f, x.sqrt(), f.sqrt(), (x * f).sqrt()]);
    }

    fn bound(&self) -> Option<f64> {
        Some(self.bound)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Minigolf {
    pub params: MinigolfParams,
}

impl Minigolf {
    pub fn new(params: MinigolfParams) -> Self {
        Self { params }
    }

    /// Distance travelled by a putt of the given force.
    pub fn travel(&self, omega: f64, friction: f64, force: f64) -> f64 {
        let v = omega * force.clamp(0.0, self.params.max_force);
        let decel = 5.0 / 7.0 * friction * GRAVITY;
        v * v / (2.0 * decel)
    }

    /// Extra distance beyond the hole that still ends in the hole.
    pub fn capture_length(&self, friction: f64) -> f64 {
        let p = &self.params;
        let v2 = (2.0 * p.hole_size - p.ball_radius).powi(2) * GRAVITY / (2.0 * p.ball_radius);
        v2 / (2.0 * 5.0 / 7.0 * friction * GRAVITY)
    }

    pub fn features(&self) -> MinigolfFeatures {
        MinigolfFeatures::new(self.params.max_distance, self.params.friction_range.1)
    }
}

impl ConfMdp for Minigolf {
    fn name(&self) -> &'static str {
        "minigolf"
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    fn config_dim(&self) -> usize {
        1
    }

    fn default_config(&self) -> Vec<f64> {
        vec![self.params.default_putter]
    }

    fn validate_config(&self, omega: &[f64]) -> Result<()> {
        check_config_len(omega, 1)?;
        let (lo, hi) = self.params.putter_range;
        if !(lo..=hi).contains(&omega[0]) {
            return Err(Error::ConfigOutOfRange(format!("putter length {} outside [{lo}, {hi}]", omega[0])));
        }
        Ok(())
    }

    fn project_config(&self, omega: &mut [f64]) {
        let (lo, hi) = self.params.putter_range;
        omega.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    }

    fn reset(&self, omega: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        self.validate_config(omega)?;
        let x = rng.uniform_range(0.0, self.params.max_distance);
        let (flo, fhi) = self.params.friction_range;
        let f = rng.uniform_range(flo, fhi);
        Ok(vec![x, f])
    }

    fn step(&self, omega: &[f64], s: &[f64], a: &Action, _rng: &mut SeededRng) -> Result<Step> {
        self.validate_config(omega)?;
        let force = match a {
            Action::Continuous(v) if v.len() == 1 && v[0].is_finite() => v[0],
            _ => return Err(Error::InvalidArgument("minigolf actions are a finite scalar force".into())),
        };
        let (x, f) = (s[0], s[1]);
        let d = self.travel(omega[0], f, force);
        if d < x {
            Ok(Step { state: vec![x - d, f], reward: -1.0, done: false })
        } else if d <= x + self.capture_length(f) {
            Ok(Step { state: vec![0.0, f], reward: 0.0, done: true })
        } else {
            Ok(Step { state: vec![0.0, f], reward: -self.params.overshoot_penalty, done: true })
        }
    }

    fn log_init_density(&self, omega: &[f64], s0: &[f64]) -> Result<f64> {
        self.validate_config(omega)?;
        let (flo, fhi) = self.params.friction_range;
        if s0.len() < 2 || !(0.0..=self.params.max_distance).contains(&s0[0]) || !(flo..=fhi).contains(&s0[1]) {
            return Err(Error::OutOfSupport);
        }
        Ok(-(self.params.max_distance.ln()) - (fhi - flo).ln())
    }

    fn transition_depends_on_config(&self) -> bool {
        true
    }

    fn policy_space(&self) -> PolicyModel {
        let cov = DMatrix::from_element(1, 1, self.params.policy_variance);
        GaussianLinearPolicy::new(Arc::new(self.features()), cov)
            .expect("positive variance")
            .into()
    }
}
