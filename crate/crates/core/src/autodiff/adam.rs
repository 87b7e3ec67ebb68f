use super::{AutodiffError, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment estimates, aligned with the store's entry order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

pub fn adam_step(
    params: &mut ParamStore,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), AutodiffError> {
    adam_step_by(params, state, cfg, |_| cfg.lr)
}

/// Adam with bias correction and decoupled weight decay; `lr_for` picks the
/// learning rate per parameter name. Gradients are zeroed afterwards.
pub fn adam_step_by(
    params: &mut ParamStore,
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr_for: impl Fn(&str) -> f64,
) -> Result<(), AutodiffError> {
    if state.m.len() != params.len() {
        return Err(AutodiffError::InvalidArgument(format!(
            "optimizer state tracks {} entries, store has {}",
            state.m.len(),
            params.len()
        )));
    }
    let lrs: Vec<f64> = params.names().map(&lr_for).collect();
    if let Some(bad) = lrs.iter().find(|lr| !(**lr > 0.0)) {
        return Err(AutodiffError::InvalidArgument(format!(
            "learning rate must be positive, got {bad}"
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (idx, lr) in lrs.into_iter().enumerate() {
        let p = params.entry_mut(idx);
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        let g = p.grad.data();
        let w = p.value.data_mut();
        for i in 0..w.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= lr * cfg.weight_decay * w[i];
            w[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.grad.fill_zero();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64, grad: f64) -> ParamStore {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![value]));
        store.entry_mut(0).grad.data_mut()[0] = grad;
        store
    }

    #[test]
    fn zero_gradient_without_decay_is_a_noop() {
        let mut store = one_param(1.5, 0.0);
        let mut state = AdamState::new(&store);
        adam_step(&mut store, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(store.value("w").unwrap().item(), 1.5);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [0.3, -7.0, 1e-3] {
            let mut store = one_param(0.0, g);
            let mut state = AdamState::new(&store);
            let cfg = AdamConfig {
                lr: 0.01,
                ..Default::default()
            };
            adam_step(&mut store, &mut state, &cfg).unwrap();
            let w = store.value("w").unwrap().item();
            assert!((w.abs() - 0.01).abs() < 1e-6, "g={g} w={w}");
            assert_eq!(w.signum(), -g.signum());
            assert_eq!(store.grad("w").unwrap().item(), 0.0);
        }
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut store = one_param(0.0, 1.0);
        let mut state = AdamState::new(&store);
        let cfg = AdamConfig {
            lr: 0.0,
            ..Default::default()
        };
        assert!(adam_step(&mut store, &mut state, &cfg).is_err());
        assert_eq!(state.t, 0);
    }

    #[test]
    fn three_steps_on_quadratic_match_hand_recurrence() {
        // f(w) = (w - 3)^2, grad 2(w - 3), starting at w = 0.
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        };
        // Hand-stepped recurrence, written out independently of the optimizer.
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w = w - 0.1 * 0.01 * w;
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            expected.push(w);
        }
        // The first steps are sign steps of size lr, shrunk slightly by decay.
        assert!((expected[0] - 0.1).abs() < 1e-6);
        assert!((expected[1] - 0.1999).abs() < 1e-3);

        let mut store = one_param(0.0, 0.0);
        let mut state = AdamState::new(&store);
        for want in expected {
            let w = store.value("w").unwrap().item();
            store.entry_mut(0).grad.data_mut()[0] = 2.0 * (w - 3.0);
            adam_step(&mut store, &mut state, &cfg).unwrap();
            assert!((store.value("w").unwrap().item() - want).abs() < 1e-15);
        }
    }
}
