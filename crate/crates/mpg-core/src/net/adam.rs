//! Adam optimizer with L2 weight decay folded into the gradient.

use super::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHp {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHp {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 2e-5,
        }
    }
}

/// In-place Adam update of one tensor. Bias correction uses the tensor's
/// own step count so frozen tensors resume cleanly.
pub fn adam_update(param: &mut Param, grad: &[f64], hp: &AdamHp) {
    debug_assert_eq!(param.len(), grad.len());
    param.steps += 1;
    let t = param.steps as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..param.value.len() {
        let g = grad[i] + hp.weight_decay * param.value[i];
        param.m[i] = hp.beta1 * param.m[i] + (1.0 - hp.beta1) * g;
        param.v[i] = hp.beta2 * param.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = param.m[i] / bc1;
        let v_hat = param.v[i] / bc2;
        param.value[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_moves_against_gradient() {
        let mut p = Param::zeros(vec![2]);
        p.value = vec![1.0, -1.0];
        let hp = AdamHp {
            weight_decay: 0.0,
            ..AdamHp::default()
        };
        adam_update(&mut p, &[0.5, -0.5], &hp);
        assert!(p.value[0] < 1.0);
        assert!(p.value[1] > -1.0);
        assert_eq!(p.steps, 1);
        // first step size is ~lr regardless of gradient scale
        assert!((1.0 - p.value[0] - hp.lr).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_with_decay_still_shrinks_weights() {
        let mut p = Param::zeros(vec![1]);
        p.value = vec![2.0];
        adam_update(&mut p, &[0.0], &AdamHp::default());
        assert!(p.value[0] < 2.0);
    }
}
