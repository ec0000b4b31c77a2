pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter / gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "parameter / state length mismatch");
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -7.0, 1e-3];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &g, &mut st, 1e-3);
        for ((after, before), gi) in p.iter().zip([1.0, -2.0, 0.5]).zip(g) {
            let step = before - after;
            assert!((step - 1e-3 * gi.signum()).abs() < 1e-3 * 1e-4, "{step}");
        }
    }

    #[test]
    fn zero_gradient_from_fresh_state() {
        let mut p = vec![0.25, 4.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1);
        assert_eq!(p, vec![0.25, 4.0]);
        assert_eq!(st.step, 1);
    }
}
