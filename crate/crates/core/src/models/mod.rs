//! Image VAE and directed-graph VAE, their ELBO objectives and training.

mod checkpoint;
mod gvae;
mod rank;
mod train;
mod vae;

pub use checkpoint::{load_checkpoint, save_checkpoint, AnyModel, Checkpoint, CheckpointManifest, ModelSpec, ParamEntry};
pub use gvae::{gcn_propagation, GvaeConfig, GvaeModel};
pub use rank::{mean_singular_values, singular_values};
pub use train::{optimize, train, BatchSampler, OptimConfig, TrainConfig, TrainOutcome};
pub use vae::{VaeConfig, VaeModel};

use crate::error::Result;
use crate::interp::InterpGraphError;
use crate::metrics::kl_gaussian_std;
use crate::ndkernel::{Graph, NodeId, ParamStore, Tensor};
use crate::rng;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

impl From<InterpGraphError> for crate::Error {
    fn from(e: InterpGraphError) -> Self {
        match e {
            InterpGraphError::Interp(e) => e.into(),
            InterpGraphError::Kernel(e) => e.into(),
        }
    }
}

/// Diagonal Gaussian posterior for a batch: one row per input.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// Common surface of the image and graph models.
///
/// Graph-building methods read parameters from `p` rather than from the
/// model itself so callers can differentiate through perturbed copies or
/// through a store that also holds other modules' parameters.
pub trait LatentModel: Send + Sync {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Length of the flattened latent code.
    fn latent_len(&self) -> usize;
    /// Length of one latent block (the whole code for images, one node for graphs).
    fn latent_block(&self) -> usize;
    /// Posterior means and log-variances, both `[batch, latent_len]`.
    fn encode_graph(&self, g: &mut Graph, p: &ParamStore, batch: &[&Tensor]) -> Result<(NodeId, NodeId)>;
    /// Negative log-likelihood of `targets` given codes `z`, summed over the batch
    /// and without additive constants.
    fn nll_graph(&self, g: &mut Graph, p: &ParamStore, z: NodeId, targets: &[&Tensor]) -> Result<NodeId>;
    /// Most likely sample for a single code.
    fn decode(&self, z: &[f64]) -> Result<Tensor>;

    fn encode(&self, batch: &[&Tensor]) -> Result<Posterior> {
        let p = self.params();
        let mut g = Graph::for_store(p);
        let (mu, lv) = self.encode_graph(&mut g, p, batch)?;
        Ok(Posterior {
            mu: g.value(mu).clone(),
            logvar: g.value(lv).clone(),
        })
    }

    /// Posterior mean, the point encoding used for interpolation.
    fn encode_map(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.encode(&[x])?.mu.into_data())
    }

    /// Posterior means for many inputs, computed in batches.
    fn encode_means(&self, xs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(64) {
            let post = self.encode(chunk)?;
            let (rows, _) = post.mu.dims2().expect("matrix");
            out.extend((0..rows).map(|r| post.mu.row(r).to_vec()));
        }
        Ok(out)
    }
}

/// `mu + exp(logvar / 2) * eps` with `eps ~ N(0, I)` drawn from `seed`.
pub fn reparameterize(post: &Posterior, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let eps = rng::normals(&mut r, post.mu.len());
    let data = post
        .mu
        .data()
        .iter()
        .zip(post.logvar.data())
        .zip(eps)
        .map(|((&m, &lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::new(post.mu.shape().to_vec(), data).expect("same shape")
}

/// Standard-normal noise shaped like a `[batch, latent_len]` code.
pub fn noise(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::matrix(rows, cols, rng::normals(&mut r, rows * cols)).expect("shape")
}

/// ELBO loss nodes; all values are batch means.
#[derive(Clone, Copy, Debug)]
pub struct ElboNodes {
    pub loss: NodeId,
    pub recon: NodeId,
    pub kl: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboParts {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Batch-mean negative ELBO with reparameterisation noise `eps` (`[batch, latent_len]`).
pub fn elbo_graph<M: LatentModel + ?Sized>(
    model: &M,
    g: &mut Graph,
    p: &ParamStore,
    batch: &[&Tensor],
    eps: &Tensor,
) -> Result<ElboNodes> {
    let (mu, logvar) = model.encode_graph(g, p, batch)?;
    let half = g.scale(logvar, 0.5)?;
    let std = g.exp(half)?;
    let e = g.input(eps.clone());
    let spread = g.mul(std, e)?;
    let z = g.add(mu, spread)?;
    let nll = model.nll_graph(g, p, z, batch)?;
    let kl = kl_graph(g, mu, logvar)?;
    let inv_b = 1.0 / batch.len() as f64;
    let recon = g.scale(nll, inv_b)?;
    let kl = g.scale(kl, inv_b)?;
    let loss = g.add(recon, kl)?;
    Ok(ElboNodes { loss, recon, kl })
}

/// `0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)` over all entries.
pub fn kl_graph(g: &mut Graph, mu: NodeId, logvar: NodeId) -> Result<NodeId> {
    let m2 = g.square(mu)?;
    let ev = g.exp(logvar)?;
    let t = g.add(m2, ev)?;
    let t = g.sub(t, logvar)?;
    let t = g.add_scalar(t, -1.0)?;
    let s = g.sum(t)?;
    Ok(g.scale(s, 0.5)?)
}

/// Loss value and parts for one batch with noise drawn from `seed`.
pub fn elbo<M: LatentModel + ?Sized>(model: &M, batch: &[&Tensor], seed: u64) -> Result<ElboParts> {
    let p = model.params();
    let mut g = Graph::for_store(p);
    let eps = noise(batch.len(), model.latent_len(), seed);
    let nodes = elbo_graph(model, &mut g, p, batch, &eps)?;
    let v = |n: NodeId| g.value(n).item().expect("scalar");
    Ok(ElboParts {
        loss: v(nodes.loss),
        recon: v(nodes.recon),
        kl: v(nodes.kl),
    })
}

/// Closed-form KL of a posterior batch, summed over rows.
pub fn posterior_kl(post: &Posterior) -> f64 {
    kl_gaussian_std(post.mu.data(), post.logvar.data())
}

/// `N(0, 1/fan_in)` initialisation for a `[fan_in, fan_out]` weight.
pub(crate) fn init_weight(seed: u64, name: &str, fan_in: usize, fan_out: usize) -> Tensor {
    let mut r = rng::child(seed, name, 0);
    let std = 1.0 / (fan_in as f64).sqrt();
    let data = rng::normals(&mut r, fan_in * fan_out).into_iter().map(|v| v * std).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("shape")
}

/// Stacks rank-2 samples as rows of a `[batch, numel]` matrix.
pub(crate) fn flatten_batch(batch: &[&Tensor]) -> Result<Tensor> {
    let n = batch.first().map(|t| t.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(n * batch.len());
    for t in batch {
        if t.len() != n {
            return Err(crate::ndkernel::KernelError::ShapeMismatch {
                op: "flatten_batch",
                left: batch[0].shape().to_vec(),
                right: t.shape().to_vec(),
            }
            .into());
        }
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::matrix(batch.len(), n, data)?)
}
