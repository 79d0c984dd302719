//! Bias-corrected Adam.

use nalgebra::DVector;

use crate::error::{ensure_dim, Result};

/// Whether an update climbs or descends the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: DVector<f64>,
    pub second_moment: DVector<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            first_moment: DVector::zeros(dim),
            second_moment: DVector::zeros(dim),
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn dim(&self) -> usize {
        self.first_moment.len()
    }

    /// In-place step. Coordinates with zero gradient and zero history do not move.
    pub fn step(
        &mut self,
        params: &mut DVector<f64>,
        grad: &DVector<f64>,
        direction: Direction,
    ) -> Result<()> {
        ensure_dim(self.dim(), params.len())?;
        ensure_dim(self.dim(), grad.len())?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let sign = direction.sign();
        for i in 0..params.len() {
            let g = grad[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            if m == 0.0 {
                continue;
            }
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] += sign * self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_update(
    state: &AdamState,
    params: &DVector<f64>,
    grad: &DVector<f64>,
    direction: Direction,
) -> Result<(AdamState, DVector<f64>)> {
    let mut next = state.clone();
    let mut out = params.clone();
    next.step(&mut out, grad, direction)?;
    Ok((next, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let s = AdamState::new(3, 0.1);
        let p = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (s2, p2) = adam_update(&s, &p, &DVector::zeros(3), Direction::Descend).unwrap();
        assert_eq!(p2, p);
        assert_eq!(s2.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let s = AdamState::new(1, 0.1);
        let p = DVector::zeros(1);
        let g = DVector::from_vec(vec![1.0]);
        let (_, p2) = adam_update(&s, &p, &g, Direction::Descend).unwrap();
        assert!((p2[0] + 0.1).abs() < 1e-8);
        let (_, p3) = adam_update(&s, &p, &g, Direction::Ascend).unwrap();
        assert!((p3[0] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let s = AdamState::new(2, 0.03);
        let p = DVector::from_vec(vec![0.3, 0.1]);
        let g = DVector::from_vec(vec![-0.7, 2.0]);
        let a = adam_update(&s, &p, &g, Direction::Ascend).unwrap();
        let b = adam_update(&s, &p, &g, Direction::Ascend).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_count_increments_once() {
        let mut s = AdamState::new(2, 0.01);
        let mut p = DVector::zeros(2);
        for k in 1..=5u64 {
            s.step(&mut p, &DVector::from_vec(vec![1.0, 1.0]), Direction::Descend).unwrap();
            assert_eq!(s.step_count, k);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let s = AdamState::new(2, 0.01);
        assert!(adam_update(&s, &DVector::zeros(3), &DVector::zeros(3), Direction::Ascend).is_err());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = AdamState::new(2, 0.05);
        let mut p = DVector::from_vec(vec![3.0, -4.0]);
        for _ in 0..2000 {
            let g = p.clone();
            s.step(&mut p, &g, Direction::Descend).unwrap();
        }
        assert!(p.norm() < 1e-2);
    }
}
