use super::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-parameter Adam moment buffers.
#[derive(Clone, Debug)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            first: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_update(
    state: &mut AdamState,
    params: &mut [Tensor],
    grads: &[Tensor],
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Dim(format!(
            "adam: {} params, {} grads, {} state buffers",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        if p.numel() != g.numel() {
            return Err(Error::Dim(format!(
                "adam: parameter {} elements vs gradient {}",
                p.numel(),
                g.numel()
            )));
        }
        for ((pv, gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![Tensor::new(vec![1], vec![1.0]).unwrap()];
        let grads = vec![Tensor::new(vec![1], vec![2.0]).unwrap()];
        let mut state = AdamState::new(&params);
        adam_update(&mut state, &mut params, &grads, &cfg()).unwrap();
        // bias-corrected first step is -lr * g / (|g| + eps) ~ -lr
        let delta = params[0].data()[0] - 1.0;
        assert!((delta + cfg().lr).abs() < 1e-10, "delta {delta}");
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut params = vec![Tensor::new(vec![2], vec![0.5, -0.25]).unwrap()];
        let grads = vec![Tensor::zeros(vec![2])];
        let mut state = AdamState::new(&params);
        for _ in 0..5 {
            adam_update(&mut state, &mut params, &grads, &cfg()).unwrap();
        }
        assert_eq!(params[0].data(), &[0.5, -0.25]);
    }

    #[test]
    fn matches_hand_unrolled_recurrence() {
        let c = cfg();
        let g = 0.7;
        let mut params = vec![Tensor::new(vec![1], vec![0.1]).unwrap()];
        let grads = vec![Tensor::new(vec![1], vec![g]).unwrap()];
        let mut state = AdamState::new(&params);
        // hand recurrence
        let (mut m, mut v, mut x) = (0.0, 0.0, 0.1);
        for t in 1..=2 {
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let mh = m / (1.0 - c.beta1.powi(t));
            let vh = v / (1.0 - c.beta2.powi(t));
            x -= c.lr * mh / (vh.sqrt() + c.eps);
            adam_update(&mut state, &mut params, &grads, &c).unwrap();
        }
        assert!((params[0].data()[0] - x).abs() < 1e-12);
    }
}
