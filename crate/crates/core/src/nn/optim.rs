use super::tensor::TensorGrad;
use crate::error::{Error, Result};

/// Learning rate as a function of the 1-based epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// `initial * factor^floor((epoch - 1) / step)`.
    Step { initial: f64, factor: f64, step: usize },
    /// Constant for `hold` epochs, then multiplied by `factor` every `step`
    /// epochs starting at epoch `hold + 1`.
    DelayedStep {
        initial: f64,
        hold: usize,
        factor: f64,
        step: usize,
    },
}

impl LrSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        let e = epoch.max(1);
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::Step {
                initial,
                factor,
                step,
            } => initial * factor.powi(((e - 1) / step.max(1)) as i32),
            LrSchedule::DelayedStep {
                initial,
                hold,
                factor,
                step,
            } => {
                if e <= hold {
                    initial
                } else {
                    initial * factor.powi(((e - hold - 1) / step.max(1) + 1) as i32)
                }
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every parameter from its accumulated gradient, then
    /// zeroes the gradients. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut TensorGrad], lr: f64) -> Result<()> {
        for p in params.iter() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        let shapes_match =
            self.m.len() == params.len() && self.m.iter().zip(params.iter()).all(|(m, p)| m.len() == p.len());
        if !shapes_match {
            return Err(Error::Invalid("optimizer state does not match parameter list".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.value[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = TensorGrad::new("p", vec![3], vec![1.0, -2.0, 0.5]);
        let before = p.value.clone();
        let mut adam = Adam::new();
        adam.step(&mut [&mut p], 0.1).unwrap();
        assert_eq!(p.value, before);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [0.5, -3.0, 1e-3] {
            let mut p = TensorGrad::new("p", vec![1], vec![0.0]);
            p.grad[0] = g;
            Adam::new().step(&mut [&mut p], 0.01).unwrap();
            // t = 1: mhat = g, vhat = g^2, step = lr g / (|g| + eps)
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p.value[0] - expected).abs() < 1e-15);
            assert!((p.value[0].abs() - 0.01).abs() < 1e-6);
            assert!(p.grad[0] == 0.0);
        }
    }

    #[test]
    fn two_steps_shrink_quadratic() {
        // loss x^2 from x = 1 with lr 0.1: steps of ~0.1 each by hand
        let mut p = TensorGrad::new("x", vec![1], vec![1.0]);
        let mut adam = Adam::new();
        let mut xs = vec![1.0];
        for _ in 0..2 {
            p.grad[0] = 2.0 * p.value[0];
            adam.step(&mut [&mut p], 0.1).unwrap();
            xs.push(p.value[0]);
        }
        assert!((xs[1] - 0.9).abs() < 1e-6);
        // t = 2: m = 0.1*0.9*2 + 0.1*1.8 ... evaluated in closed form
        let g1: f64 = 2.0;
        let g2 = 2.0 * xs[1];
        let m2 = 0.9 * 0.1 * g1 + 0.1 * g2;
        let v2 = 0.999 * 0.001 * g1 * g1 + 0.001 * g2 * g2;
        let x2 = xs[1] - 0.1 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((xs[2] - x2).abs() < 1e-12);
        assert!(xs[2] * xs[2] < xs[1] * xs[1] && xs[1] * xs[1] < 1.0);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = TensorGrad::new("layer3.weight", vec![2], vec![0.0, 0.0]);
        p.grad[1] = f64::NAN;
        match Adam::new().step(&mut [&mut p], 0.1) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "layer3.weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schedules() {
        let fusion = LrSchedule::DelayedStep { initial: 0.01, hold: 50, factor: 0.6, step: 30 };
        assert_eq!(fusion.lr(1), 0.01);
        assert_eq!(fusion.lr(50), 0.01);
        assert!((fusion.lr(51) - 0.006).abs() < 1e-15);
        assert!((fusion.lr(80) - 0.006).abs() < 1e-15);
        assert!((fusion.lr(81) - 0.0036).abs() < 1e-15);
        assert!((fusion.lr(100) - 0.0036).abs() < 1e-15);

        let halving = LrSchedule::Step { initial: 1e-3, factor: 0.5, step: 10 };
        assert_eq!(halving.lr(10), 1e-3);
        assert_eq!(halving.lr(11), 5e-4);
        assert_eq!(halving.lr(50), 1e-3 / 16.0);
    }
}
