//! Adam with decoupled multiplicative weight decay.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::math;
use crate::nn::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Each step first scales parameters by `1 - lr * weight_decay`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-4 }
    }
}

/// First and second moments of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
}

/// Optimizer over a fixed set of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    params: Vec<ParamId>,
    t: u64,
    slots: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore, params: Vec<ParamId>) -> Self {
        let slots = params
            .iter()
            .map(|&id| {
                let shape = store.value(id).shape();
                Moments { m: Tensor::zeros(shape), v: Tensor::zeros(shape) }
            })
            .collect();
        Adam { config, params, t: 0, slots }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn slots(&self) -> &[Moments] {
        &self.slots
    }

    /// Restores state saved from [`Adam::steps`] and [`Adam::slots`].
    pub fn restore(&mut self, t: u64, slots: Vec<Moments>) -> Result<()> {
        if slots.len() != self.slots.len()
            || slots.iter().zip(&self.slots).any(|(a, b)| a.m.shape() != b.m.shape() || a.v.shape() != b.v.shape())
        {
            return Err(Error::domain("optimizer state does not match its parameters"));
        }
        self.t = t;
        self.slots = slots;
        Ok(())
    }

    /// One update of every managed parameter; missing gradients count as zero.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        self.t += 1;
        let c = self.config;
        let t = self.t as f64;
        let bc1 = 1.0 - math::powf(c.beta1, t);
        let bc2 = 1.0 - math::powf(c.beta2, t);
        let decay = 1.0 - c.lr * c.weight_decay;
        for (&id, slot) in self.params.iter().zip(&mut self.slots) {
            let p = store.value_mut(id);
            let g = grads.get(id);
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(Error::Shape {
                        context: "adam gradient",
                        expected: p.shape().to_vec(),
                        actual: g.shape().to_vec(),
                    });
                }
            }
            let (m, v) = (slot.m.data_mut(), slot.v.data_mut());
            for (k, pk) in p.data_mut().iter_mut().enumerate() {
                let gk = g.map_or(0.0, |g| g.data()[k]);
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *pk = *pk * decay - c.lr * mhat / (math::sqrt(vhat) + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Mode};
    use crate::nn::{Init, Owners, ParamKind};
    use alloc::string::String;

    fn scalar_store(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add(String::from("p"), &[1], ParamKind::Weight, Owners::E1, Init::Zeros);
        s.value_mut(id).data_mut()[0] = v;
        (s, id)
    }

    fn grad_of(store: &ParamStore, id: ParamId, scale: f64) -> Gradients {
        // loss = scale * p, gradient = scale
        let mut g = Graph::with_trainable(store, Mode::Train, &[id]);
        let p = g.param(id);
        let l = g.scale(p, scale).unwrap();
        let l = g.reshape(l, &[1]).unwrap();
        g.backward(l).unwrap()
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        let (mut s, id) = scalar_store(0.7);
        let mut opt = Adam::new(AdamConfig { weight_decay: 0.0, ..Default::default() }, &s, alloc::vec![id]);
        for _ in 0..5 {
            opt.step(&mut s, &Gradients::default()).unwrap();
        }
        assert_eq!(s.value(id).data()[0], 0.7);
    }

    #[test]
    fn scalar_step_matches_hand_computation() {
        let (mut s, id) = scalar_store(1.0);
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg, &s, alloc::vec![id]);
        let g = grad_of(&s, id, 0.5);
        opt.step(&mut s, &g).unwrap();
        // m = 0.05, v = 0.00025; mhat = 0.5, vhat = 0.25
        let expected = 1.0 * (1.0 - 1e-4 * 5e-4) - 1e-4 * 0.5 / (0.5 + 1e-8);
        assert!((s.value(id).data()[0] - expected).abs() < 1e-12);
        // second step with the same gradient
        let g = grad_of(&s, id, 0.5);
        opt.step(&mut s, &g).unwrap();
        let m: f64 = 0.9 * 0.05 + 0.1 * 0.5;
        let v: f64 = 0.999 * 0.00025 + 0.001 * 0.25;
        let mhat = m / (1.0 - 0.81);
        let vhat = v / (1.0 - 0.999f64 * 0.999);
        let expected2 = expected * (1.0 - 1e-4 * 5e-4) - 1e-4 * mhat / (vhat.sqrt() + 1e-8);
        assert!((s.value(id).data()[0] - expected2).abs() < 1e-12);
    }

    #[test]
    fn decay_only_is_geometric() {
        let (mut s, id) = scalar_store(3.0);
        let mut opt = Adam::new(AdamConfig::default(), &s, alloc::vec![id]);
        for _ in 0..10 {
            opt.step(&mut s, &Gradients::default()).unwrap();
        }
        let expected = 3.0 * (1.0f64 - 1e-4 * 5e-4).powi(10);
        assert!((s.value(id).data()[0] - expected).abs() < 1e-15);
    }
}
