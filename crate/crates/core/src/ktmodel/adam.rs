//! Adaptive-moment optimizer and global gradient-norm clipping, operating
//! on the model's tensor views.

use super::TensorViewMut;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    /// first/second moment per tensor, aligned with the view order
    state: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            state: Vec::new(),
        }
    }

    pub fn step(&mut self, views: &mut [TensorViewMut<'_>]) {
        if self.state.is_empty() {
            self.state = views
                .iter()
                .map(|v| (vec![0.0; v.data.len()], vec![0.0; v.data.len()]))
                .collect();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (view, (m, v)) in views.iter_mut().zip(&mut self.state) {
            if !view.trainable {
                continue;
            }
            for k in 0..view.data.len() {
                let g = view.grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                view.data[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Scale all trainable gradients so their global L2 norm is at most
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(views: &mut [TensorViewMut<'_>], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for view in views.iter() {
        if view.trainable {
            sq += view.grad.iter().map(|g| g * g).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for view in views.iter_mut() {
            if view.trainable {
                for g in view.grad.iter_mut() {
                    *g *= scale;
                }
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize (x - 3)^2
        let mut data = vec![0.0];
        let mut grad = vec![0.0];
        let mut opt = Adam::new(0.1);
        for _ in 0..200 {
            grad[0] = 2.0 * (data[0] - 3.0);
            let mut views = vec![TensorViewMut {
                name: "x",
                data: &mut data,
                grad: &mut grad,
                trainable: true,
            }];
            opt.step(&mut views);
        }
        assert!((data[0] - 3.0).abs() < 0.05, "x = {}", data[0]);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut data = vec![0.0, 0.0];
        let mut grad = vec![3.0, 4.0];
        let mut views = vec![TensorViewMut {
            name: "x",
            data: &mut data,
            grad: &mut grad,
            trainable: true,
        }];
        let norm = clip_global_norm(&mut views, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped: f64 = views[0].grad.iter().map(|g| g * g).sum::<f64>();
        assert!((clipped.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_tensors_are_left_alone() {
        let mut data = vec![1.0];
        let mut grad = vec![10.0];
        let mut opt = Adam::new(0.1);
        let mut views = vec![TensorViewMut {
            name: "frozen",
            data: &mut data,
            grad: &mut grad,
            trainable: false,
        }];
        opt.step(&mut views);
        assert_eq!(data[0], 1.0);
    }
}
