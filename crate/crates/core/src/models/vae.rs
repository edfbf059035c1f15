use serde::{Deserialize, Serialize};

use super::{flatten_batch, init_weight, LatentModel, LOGVAR_MAX, LOGVAR_MIN};
use crate::error::{Error, Result};
use crate::ndkernel::{Graph, KernelError, NodeId, ParamStore, Tensor};

/// Fully connected image VAE: two LeakyReLU layers on each side, Tanh output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// Images are `side x side`.
    pub side: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    /// Factor the mean head as `[hidden, rank] x [rank, latent_dim]`.
    pub rank: Option<usize>,
    /// Fixed scale of the Gaussian likelihood.
    pub sigma_x: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            side: 32,
            hidden: 256,
            latent_dim: 32,
            rank: None,
            sigma_x: 1.0,
        }
    }
}

impl VaeConfig {
    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.hidden == 0 || self.latent_dim == 0 {
            return Err(Error::Config("image VAE sizes must be positive".into()));
        }
        if self.rank == Some(0) {
            return Err(Error::Config("rank must be positive".into()));
        }
        if !(self.sigma_x > 0.0) {
            return Err(Error::Config("sigma_x must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub params: ParamStore,
}

impl VaeModel {
    /// Fresh model; weights `N(0, 1/fan_in)`, biases zero.
    pub fn new(config: VaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (px, h, d) = (config.pixels(), config.hidden, config.latent_dim);
        let mut p = ParamStore::new();
        let layer = |p: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias: bool| {
            p.insert(&format!("{name}.w"), init_weight(seed, name, fan_in, fan_out));
            if bias {
                p.insert(&format!("{name}.b"), Tensor::zeros(&[fan_out]));
            }
        };
        layer(&mut p, "enc.fc1", px, h, true);
        layer(&mut p, "enc.fc2", h, h, true);
        match config.rank {
            None => layer(&mut p, "mean", h, d, true),
            Some(r) => {
                p.insert("mean.w1", init_weight(seed, "mean.w1", h, r));
                p.insert("mean.w2", init_weight(seed, "mean.w2", r, d));
            }
        }
        layer(&mut p, "logvar", h, d, true);
        layer(&mut p, "dec.fc1", d, h, true);
        layer(&mut p, "dec.fc2", h, h, true);
        layer(&mut p, "dec.out", h, px, true);
        Ok(Self { config, params: p })
    }

    fn dense(g: &mut Graph, p: &ParamStore, name: &str, x: NodeId) -> Result<NodeId> {
        let w = g.param_named(p, &format!("{name}.w"));
        let b = g.param_named(p, &format!("{name}.b"));
        Ok(g.affine(x, w, Some(b))?)
    }

    /// Decoder output `[batch, pixels]` in [-1, 1].
    pub fn decode_graph(&self, g: &mut Graph, p: &ParamStore, z: NodeId) -> Result<NodeId> {
        let d = self.config.latent_dim;
        if g.shape(z).len() != 2 || g.shape(z)[1] != d {
            return Err(KernelError::ShapeMismatch {
                op: "decode",
                left: g.shape(z).to_vec(),
                right: vec![0, d],
            }
            .into());
        }
        let h = Self::dense(g, p, "dec.fc1", z)?;
        let h = g.leaky_relu(h)?;
        let h = Self::dense(g, p, "dec.fc2", h)?;
        let h = g.leaky_relu(h)?;
        let o = Self::dense(g, p, "dec.out", h)?;
        Ok(g.tanh(o)?)
    }

    /// Row space basis of the factored mean head (`None` for a full head).
    pub fn mean_row_space(&self) -> Option<&Tensor> {
        self.params.by_name("mean.w2")
    }
}

impl LatentModel for VaeModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn latent_len(&self) -> usize {
        self.config.latent_dim
    }

    fn latent_block(&self) -> usize {
        self.config.latent_dim
    }

    fn encode_graph(&self, g: &mut Graph, p: &ParamStore, batch: &[&Tensor]) -> Result<(NodeId, NodeId)> {
        let s = self.config.side;
        if let Some(bad) = batch.iter().find(|x| x.shape() != [s, s]) {
            return Err(KernelError::ShapeMismatch {
                op: "encode",
                left: bad.shape().to_vec(),
                right: vec![s, s],
            }
            .into());
        }
        let x = g.input(flatten_batch(batch)?);
        let h = Self::dense(g, p, "enc.fc1", x)?;
        let h = g.leaky_relu(h)?;
        let h = Self::dense(g, p, "enc.fc2", h)?;
        let h = g.leaky_relu(h)?;
        let mu = match self.config.rank {
            None => Self::dense(g, p, "mean", h)?,
            Some(_) => {
                let w1 = g.param_named(p, "mean.w1");
                let w2 = g.param_named(p, "mean.w2");
                let low = g.matmul(h, w1)?;
                g.matmul(low, w2)?
            }
        };
        let lv = Self::dense(g, p, "logvar", h)?;
        let lv = g.clamp(lv, LOGVAR_MIN, LOGVAR_MAX)?;
        Ok((mu, lv))
    }

    fn nll_graph(&self, g: &mut Graph, p: &ParamStore, z: NodeId, targets: &[&Tensor]) -> Result<NodeId> {
        let out = self.decode_graph(g, p, z)?;
        let x = g.input(flatten_batch(targets)?);
        let diff = g.sub(out, x)?;
        let sq = g.square(diff)?;
        let s = g.sum(sq)?;
        let sigma = self.config.sigma_x;
        Ok(g.scale(s, 1.0 / (2.0 * sigma * sigma))?)
    }

    fn decode(&self, z: &[f64]) -> Result<Tensor> {
        let p = &self.params;
        let mut g = Graph::for_store(p);
        let zn = g.input(Tensor::matrix(1, z.len(), z.to_vec())?);
        let out = self.decode_graph(&mut g, p, zn)?;
        let s = self.config.side;
        Ok(g.value(out).clone().reshaped(&[s, s])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{elbo, elbo_graph, noise, reparameterize, Posterior};
    use crate::ndkernel::{finite_difference_gradient, max_relative_error, DEFAULT_FD_EPS};
    use crate::rng;

    fn small(rank: Option<usize>) -> VaeModel {
        VaeModel::new(
            VaeConfig {
                side: 8,
                hidden: 16,
                latent_dim: 4,
                rank,
                sigma_x: 1.0,
            },
            11,
        )
        .unwrap()
    }

    fn image(seed: u64, side: usize) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::matrix(side, side, rng::normals(&mut r, side * side).into_iter().map(|v| v.tanh()).collect()).unwrap()
    }

    #[test]
    fn encode_smoke_and_determinism() {
        let m = small(None);
        let zero = Tensor::zeros(&[8, 8]);
        let post = m.encode(&[&zero]).unwrap();
        assert!(post.mu.is_finite() && post.logvar.is_finite());
        // zero input and zero biases: the mean is exactly zero at init
        assert!(post.mu.data().iter().all(|v| v.abs() < 1e-12));
        let x = image(1, 8);
        assert_eq!(m.encode(&[&x]).unwrap(), m.encode(&[&x]).unwrap());
        assert_eq!(m.encode_map(&x).unwrap(), m.encode(&[&x]).unwrap().mu.into_data());
        assert!(m.encode(&[&Tensor::zeros(&[4, 4])]).is_err());
    }

    #[test]
    fn decode_range_and_dim_check() {
        let m = small(None);
        let out = m.decode(&[5.0, -3.0, 0.1, 8.0]).unwrap();
        assert_eq!(out.shape(), &[8, 8]);
        assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(out, m.decode(&[5.0, -3.0, 0.1, 8.0]).unwrap());
        assert!(m.decode(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rank_head_means_lie_in_row_space() {
        let m = small(Some(2));
        let w2 = m.mean_row_space().unwrap().clone();
        let x = image(5, 8);
        let mu = m.encode_map(&x).unwrap();
        // least-squares projection of mu onto the rows of w2
        let basis = nalgebra::DMatrix::from_row_slice(2, 4, w2.data()).transpose();
        let target = nalgebra::DVector::from_vec(mu.clone());
        let coef = basis.clone().svd(true, true).solve(&target, 1e-14).unwrap();
        let residual = (basis * coef - target).norm();
        assert!(residual < 1e-9 * (1.0 + mu.iter().map(|v| v * v).sum::<f64>().sqrt()), "{residual}");
    }

    #[test]
    fn reparameterize_vanishing_noise() {
        let mu = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let post = Posterior {
            mu: mu.clone(),
            logvar: Tensor::full(&[1, 3], -10.0),
        };
        let z = reparameterize(&post, 3);
        let err: f64 = z.data().iter().zip(mu.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 0.01 * 5.25f64.sqrt() + 0.01);
        assert_eq!(z, reparameterize(&post, 3));
        assert_ne!(z, reparameterize(&post, 4));
    }

    #[test]
    fn elbo_parts_and_forced_zero_kl() {
        let mut m = small(None);
        let x = image(2, 8);
        let parts = elbo(&m, &[&x], 9).unwrap();
        assert!(parts.recon >= 0.0 && parts.kl >= 0.0);
        assert!((parts.loss - parts.recon - parts.kl).abs() < 1e-12);
        // zero the mean and log-variance heads: posterior is exactly N(0, I)
        for name in ["mean.w", "mean.b", "logvar.w", "logvar.b"] {
            let id = m.params.id(name).unwrap();
            m.params.get_mut(id).data_mut().fill(0.0);
        }
        assert_eq!(elbo(&m, &[&x], 9).unwrap().kl, 0.0);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        for rank in [None, Some(2)] {
            let m = small(rank);
            let batch = [image(3, 8), image(4, 8)];
            let refs: Vec<&Tensor> = batch.iter().collect();
            let eps = noise(2, 4, 17);
            let run = |p: &ParamStore| -> Result<(Graph, NodeId)> {
                let mut g = Graph::for_store(p);
                let n = elbo_graph(&m, &mut g, p, &refs, &eps)?;
                Ok((g, n.loss))
            };
            let (g, loss) = run(&m.params).unwrap();
            let analytic = g.backward(loss).unwrap();
            let numeric = finite_difference_gradient(
                |p| run(p).map(|(g, l)| g.value(l).item().unwrap()),
                &m.params,
                DEFAULT_FD_EPS,
            )
            .unwrap();
            let (err, at) = max_relative_error(&m.params, &analytic, &numeric, 1e-6);
            assert!(err < 1e-4, "rank {rank:?}: {err} at {at}");
        }
    }
}
