//! Adam and Adadelta over a [`ParamStore`].

use super::graph::{Gradients, ParamStore};

pub trait Optimizer {
    fn step(&mut self, params: &mut ParamStore, grads: &Gradients);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
        Adam {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for id in params.ids().collect::<Vec<_>>() {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = params.get_mut(id).data_mut();
            let g = grads.param(id).map(|t| t.data());
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig { rho: 0.95, eps: 1e-6 }
    }
}

/// Adadelta: step sizes from running RMS of updates over running RMS of
/// gradients; no learning rate.
#[derive(Debug, Clone)]
pub struct Adadelta {
    pub config: AdadeltaConfig,
    sq_grad: Vec<Vec<f64>>,
    sq_update: Vec<Vec<f64>>,
}

impl Adadelta {
    pub fn new(config: AdadeltaConfig, params: &ParamStore) -> Self {
        let zeros = || params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
        Adadelta {
            config,
            sq_grad: zeros(),
            sq_update: zeros(),
        }
    }
}

impl Optimizer for Adadelta {
    fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        let AdadeltaConfig { rho, eps } = self.config;
        for id in params.ids().collect::<Vec<_>>() {
            let Some(g) = grads.param(id).map(|t| t.data()) else {
                // Zero gradient: accumulators decay, parameters stay.
                for a in self.sq_grad[id.0].iter_mut().chain(self.sq_update[id.0].iter_mut()) {
                    *a *= rho;
                }
                continue;
            };
            let (eg, ex) = (&mut self.sq_grad[id.0], &mut self.sq_update[id.0]);
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
                let dx = -((ex[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g[i];
                ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
                p[i] += dx;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Graph, Tensor};

    fn bowl_grads(params: &ParamStore) -> (f64, Gradients) {
        // loss = (x - 1)^2 + 10 (y + 2)^2
        let mut g = Graph::new(params);
        let w = g.param(params.find("w").unwrap());
        let shift = g.constant(Tensor::matrix(1, 2, vec![-1.0, 2.0]).unwrap());
        let d = g.add(w, shift).unwrap();
        let sq = g.mul(d, d).unwrap();
        let scale = g.constant(Tensor::matrix(2, 1, vec![1.0, 10.0]).unwrap());
        let l = g.matmul(sq, scale).unwrap();
        let grads = g.backward(l).unwrap();
        (g.value(l).item(), grads)
    }

    fn run(opt: &mut dyn Optimizer, params: &mut ParamStore) -> Vec<f64> {
        (0..100)
            .map(|_| {
                let (loss, grads) = bowl_grads(params);
                opt.step(params, &grads);
                loss
            })
            .collect()
    }

    fn bowl() -> ParamStore {
        let mut p = ParamStore::new();
        p.add("w", Tensor::matrix(1, 2, vec![3.0, 1.0]).unwrap());
        p
    }

    #[test]
    fn adam_first_step_is_bounded_by_lr() {
        let mut p = bowl();
        let before = p.get(p.find("w").unwrap()).clone();
        let (_, grads) = bowl_grads(&p);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &grads);
        let after = p.get(p.find("w").unwrap());
        for (a, b) in after.data().iter().zip(before.data()) {
            let delta = (a - b).abs();
            assert!(delta <= 1e-4 * (1.0 + 1e-9));
            assert!(delta > 0.99e-4);
        }
    }

    #[test]
    fn zero_gradient_means_zero_update() {
        let mut p = ParamStore::new();
        let id = p.add("w", Tensor::matrix(1, 2, vec![0.25, -0.5]).unwrap());
        let before = p.get(id).clone();
        let grads = {
            let mut g = Graph::new(&p);
            let w = g.param(id);
            let z = g.constant(Tensor::zeros(&[1, 2]));
            let prod = g.mul(w, z).unwrap();
            let s = g.sum(prod).unwrap();
            g.backward(s).unwrap()
        };
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &grads);
        assert_eq!(p.get(id), &before);
        let mut ada = Adadelta::new(AdadeltaConfig::default(), &p);
        ada.step(&mut p, &grads);
        assert_eq!(p.get(id), &before);
    }

    #[test]
    fn both_descend_a_quadratic_bowl_monotonically() {
        let mut p = bowl();
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            &p,
        );
        let losses = run(&mut adam, &mut p);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");

        let mut p = bowl();
        let mut ada = Adadelta::new(AdadeltaConfig::default(), &p);
        let losses = run(&mut ada, &mut p);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }
}
