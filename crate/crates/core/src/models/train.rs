use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{elbo_graph, noise, LatentModel};
use crate::error::{Error, Result};
use crate::ndkernel::{adam_step, AdamConfig, AdamState, Graph, NodeId, ParamStore};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub iters: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch == 0 {
            return Err(Error::Config(format!(
                "learning rate and batch size must be positive (lr {}, batch {})",
                self.lr, self.batch
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Loss at every iteration, before that iteration's update.
    pub trace: Vec<f64>,
}

impl TrainOutcome {
    /// Mean loss over the first and the last `frac` of iterations.
    pub fn head_tail_means(&self, frac: f64) -> Option<(f64, f64)> {
        let k = ((self.trace.len() as f64 * frac).round() as usize).max(1);
        if self.trace.len() < 2 * k {
            return None;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&self.trace[..k]), mean(&self.trace[self.trace.len() - k..])))
    }
}

/// Shuffled passes over `0..n`, yielding `batch` indices at a time.
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: Rng,
}

impl BatchSampler {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            pos: n,
            batch: batch.min(n).max(1),
            rng: rng::seeded(seed),
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos + self.batch > self.order.len() {
            self.reshuffle();
        }
        let out = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub iters: usize,
}

/// Adam on `params` for `iters` steps; `build` records the scalar loss of one step.
///
/// A non-finite loss or gradient stops the run with the trace so far.
pub fn optimize(
    params: &mut ParamStore,
    cfg: OptimConfig,
    mut build: impl FnMut(&mut Graph, &ParamStore, usize) -> Result<NodeId>,
) -> Result<Vec<f64>> {
    let mut state = AdamState::new(params, AdamConfig::default());
    let mut trace = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let mut g = Graph::for_store(params);
        let loss = match build(&mut g, params, it) {
            Ok(l) => l,
            Err(Error::Kernel(e)) => {
                return Err(diverged(it, f64::NAN, trace, e.to_string()));
            }
            Err(e) => return Err(e),
        };
        let value = g.value(loss).item().expect("scalar loss");
        trace.push(value);
        if !value.is_finite() {
            return Err(diverged(it, value, trace, "non-finite loss".into()));
        }
        let grads = g.backward(loss)?;
        drop(g);
        if let Err(e) = adam_step(params, &grads, &mut state, cfg.lr) {
            return Err(diverged(it, value, trace, e.to_string()));
        }
    }
    Ok(trace)
}

fn diverged(iteration: usize, loss: f64, trace: Vec<f64>, reason: String) -> Error {
    Error::Diverged {
        iteration,
        loss,
        reason,
        trace,
    }
}

/// Unsupervised ELBO training on `data` (labels are not used).
pub fn train<M: LatentModel>(model: &mut M, data: &[&crate::ndkernel::Tensor], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let mut sampler = BatchSampler::new(data.len(), cfg.batch, rng::derive_seed(cfg.seed, "batches", 0));
    let latent = model.latent_len();
    let mut params = std::mem::take(model.params_mut());
    let result = optimize(&mut params, OptimConfig { lr: cfg.lr, iters: cfg.iters }, |g, p, it| {
        let idx = sampler.next_batch();
        let batch: Vec<_> = idx.iter().map(|&i| data[i]).collect();
        let eps = noise(batch.len(), latent, rng::derive_seed(cfg.seed, "noise", it as u64));
        Ok(elbo_graph(&*model, g, p, &batch, &eps)?.loss)
    });
    *model.params_mut() = params;
    Ok(TrainOutcome { trace: result? })
}
