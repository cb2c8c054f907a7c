use super::head::{HeadGrad, LinearHead};

/// Adam with decoupled weight decay. Decay applies to weights, not biases.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    m: HeadGrad,
    v: HeadGrad,
}

impl AdamW {
    pub fn new(head: &LinearHead, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: head.zero_grad(),
            v: head.zero_grad(),
        }
    }

    pub fn step(&mut self, head: &mut LinearHead, grad: &HeadGrad) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.learning_rate);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], decay: f64| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * (decay * p[i] + mhat / (vhat.sqrt() + eps));
            }
        };
        update(
            &mut head.weights,
            &grad.weights,
            &mut self.m.weights,
            &mut self.v.weights,
            self.weight_decay,
        );
        update(
            &mut head.bias,
            &grad.bias,
            &mut self.m.bias,
            &mut self.v.bias,
            0.0,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut head = LinearHead::zeros(2, 1);
        let mut opt = AdamW::new(&head, 0.1, 0.0);
        let grad = HeadGrad {
            weights: vec![3.0, -0.5],
            bias: vec![0.0],
        };
        opt.step(&mut head, &grad);
        assert!((head.weights[0] + 0.1).abs() < 1e-6);
        assert!((head.weights[1] - 0.1).abs() < 1e-6);
        assert_eq!(head.bias[0], 0.0);
    }

    #[test]
    fn decay_shrinks_weights_only() {
        let mut head = LinearHead::from_parts(1, 1, vec![1.0], vec![1.0]).unwrap();
        let mut opt = AdamW::new(&head, 0.1, 0.5);
        let grad = head.zero_grad();
        opt.step(&mut head, &grad);
        assert!((head.weights[0] - 0.95).abs() < 1e-12);
        assert_eq!(head.bias[0], 1.0);
    }
}
