use super::{Real, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[Shape]) -> Self {
        AdamState {
            step: 0,
            m: shapes.iter().map(|&s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Tensor::zeros(s)).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, shapes: &[Shape]) -> Result<Self> {
        if !(config.lr >= 0.0) {
            return Err(Error::invalid(format!("learning rate {} must be >= 0", config.lr)));
        }
        Ok(Adam { config, state: AdamState::new(shapes) })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One bias-corrected Adam update. Every gradient is checked before any
    /// parameter is touched, so a rejected step leaves the model unchanged.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], names: &[String]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.state.m.len() {
            return Err(Error::shape(format!(
                "adam: {} params, {} grads, {} slots",
                params.len(),
                grads.len(),
                self.state.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).map(String::as_str).unwrap_or("?");
            if p.shape() != g.shape() || p.shape() != self.state.m[i].shape() {
                return Err(Error::shape(format!(
                    "adam: parameter {name} {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {name}")));
            }
        }

        self.state.step += 1;
        let t = self.state.step as i32;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::cast(beta1), T::cast(beta2));
        let (nb1, nb2) = (T::cast(1.0 - beta1), T::cast(1.0 - beta2));
        let (c1, c2, lr, eps) = (T::cast(c1), T::cast(c2), T::cast(lr), T::cast(eps));

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.state.m[i].data_mut();
            let v = self.state.v[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + nb1 * gv;
                *vv = b2 * *vv + nb2 * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut params = vec![Tensor::full([1, 1, 1, 2], 0.75f64)];
        let mut adam = Adam::new(AdamConfig::default(), &[[1, 1, 1, 2]]).unwrap();
        adam.state.m[0] = Tensor::full([1, 1, 1, 2], 0.5);
        adam.state.v[0] = Tensor::full([1, 1, 1, 2], 0.25);
        adam.step(&mut params, &[Tensor::zeros([1, 1, 1, 2])], &names(1)).unwrap();
        assert_eq!(adam.state.m[0].data(), &[0.45, 0.45]);
        assert!((adam.state.v[0].data()[0] - 0.24975).abs() < 1e-15);
        // bias-corrected moments are non-zero here, so the parameter does move
        // unless both moments start at zero:
        let mut fresh = Adam::new(AdamConfig::default(), &[[1, 1, 1, 2]]).unwrap();
        let mut p2 = vec![Tensor::full([1, 1, 1, 2], 0.75f64)];
        fresh.step(&mut p2, &[Tensor::zeros([1, 1, 1, 2])], &names(1)).unwrap();
        assert_eq!(p2[0].data(), &[0.75, 0.75]);
        assert_eq!(fresh.state.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m = 0.1, v = 0.001; mhat = 1, vhat = 1; update = lr·1/(1+1e-8).
        let mut p = vec![Tensor::scalar(0.0f64)];
        let mut adam = Adam::new(AdamConfig::default(), &[[1, 1, 1, 1]]).unwrap();
        adam.step(&mut p, &[Tensor::scalar(1.0)], &names(1)).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((p[0].item() - expected).abs() < 1e-18);
    }

    #[test]
    fn nan_gradient_is_rejected_with_name() {
        let mut p = vec![Tensor::scalar(1.0f32), Tensor::scalar(2.0)];
        let mut adam = Adam::new(AdamConfig::default(), &[[1, 1, 1, 1]; 2]).unwrap();
        let err = adam
            .step(&mut p, &[Tensor::scalar(0.0), Tensor::scalar(f32::NAN)], &names(2))
            .unwrap_err();
        assert!(err.to_string().contains("p1"), "{err}");
        assert_eq!(p[0].item(), 1.0);
        assert_eq!(adam.state.step, 0);
    }
}
