use super::params::ParamSet;

/// Step learning rate: `base * decay^floor(epoch / step)`.
pub fn step_lr(base: f64, decay: f64, step: usize, epoch: usize) -> f64 {
    base * decay.powi((epoch / step.max(1)) as i32)
}

/// Stochastic gradient descent with heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<ParamSet>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: None,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) {
        let velocity = self.velocity.get_or_insert_with(|| params.zeros_like());
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.slice(id);
            let v = velocity.slice_mut(id);
            let p = params.slice_mut(id);
            for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = self.momentum * *v + g + self.weight_decay * *p;
                *p -= lr * *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn schedule() {
        assert_eq!(step_lr(0.01, 0.1, 10, 0), 0.01);
        assert_eq!(step_lr(0.01, 0.1, 10, 9), 0.01);
        assert!((step_lr(0.01, 0.1, 10, 10) - 0.001).abs() < 1e-18);
        assert!((step_lr(0.01, 0.1, 10, 25) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = ParamSet::new();
        p.add("w", ArrayD::from_elem(IxDyn(&[2]), 1.0));
        let mut g = p.zeros_like();
        g.slice_mut(super::super::params::ParamId(0))
            .copy_from_slice(&[0.5, -1.0]);
        let mut opt = Sgd::new(0.0, 0.0);
        opt.step(&mut p, &g, 0.1);
        assert_eq!(p.slice(super::super::params::ParamId(0)), &[0.95, 1.1]);
    }
}
