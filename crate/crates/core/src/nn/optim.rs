use super::network::NetParams;
use super::train::TrainConfig;
use crate::error::{Result, RomError};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Step schedule `lr₀ · decay^⌊epoch / step⌋` (epochs counted from zero).
pub fn learning_rate_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.learning_rate * cfg.scheduler_decay.powi((epoch / cfg.scheduler_step) as i32)
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: NetParams,
    pub second_moment: NetParams,
}

impl AdamState {
    pub fn new(params: &NetParams) -> Self {
        AdamState {
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }
}

/// Adam with L2 weight decay folded into the gradient (`g ← g + wd·θ`),
/// matching the coupled form of `torch.optim.Adam(weight_decay=…)`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub state: AdamState,
    pub weight_decay: f64,
}

impl Adam {
    pub fn new(params: &NetParams, weight_decay: f64) -> Self {
        Adam {
            state: AdamState::new(params),
            weight_decay,
        }
    }

    pub fn step(&mut self, params: &mut NetParams, grads: &NetParams, lr: f64) -> Result<()> {
        if !grads.all_finite() {
            return Err(RomError::NonFinite("gradient passed to Adam"));
        }
        self.state.step += 1;
        let t = self.state.step as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2_sqrt = (1.0 - BETA2.powi(t)).sqrt();
        let step_size = lr / bias1;
        let wd = self.weight_decay;
        let AdamState {
            first_moment,
            second_moment,
            ..
        } = &mut self.state;
        for (((theta, g), m), v) in params
            .slices_mut()
            .zip(grads.slices())
            .zip(first_moment.slices_mut())
            .zip(second_moment.slices_mut())
        {
            for i in 0..theta.len() {
                let gi = g[i] + wd * theta[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let denom = v[i].sqrt() / bias2_sqrt + EPS;
                theta[i] -= step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::layer::LayerParams;
    use super::*;

    fn scalar(v: f64) -> NetParams {
        NetParams {
            layers: vec![LayerParams {
                weight: vec![v],
                bias: vec![],
            }],
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = scalar(0.7);
        let mut adam = Adam::new(&p, 0.0);
        for _ in 0..5 {
            adam.step(&mut p, &scalar(0.0), 1e-3).unwrap();
        }
        assert_eq!(p.layers[0].weight[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 ⇒ Δ = -lr / (1 + 1e-8)
        let mut p = scalar(0.0);
        let mut adam = Adam::new(&p, 0.0);
        adam.step(&mut p, &scalar(1.0), 1e-3).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.layers[0].weight[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_is_coupled() {
        let mut p = scalar(2.0);
        let mut adam = Adam::new(&p, 0.5);
        adam.step(&mut p, &scalar(0.0), 1e-3).unwrap();
        // effective gradient 1.0 > 0 ⇒ parameter decreases by ≈ lr
        assert!((p.layers[0].weight[0] - (2.0 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonfinite_gradient() {
        let mut p = scalar(0.0);
        let mut adam = Adam::new(&p, 0.0);
        assert!(adam.step(&mut p, &scalar(f64::NAN), 1e-3).is_err());
    }

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(learning_rate_at(&cfg, 0), 0.001);
        assert_eq!(learning_rate_at(&cfg, 49), 0.001);
        assert_eq!(learning_rate_at(&cfg, 50), 0.001 * 0.95);
        assert_eq!(learning_rate_at(&cfg, 125), 0.001 * 0.95f64.powi(2));
    }
}
