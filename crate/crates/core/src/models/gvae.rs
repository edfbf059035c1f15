use serde::{Deserialize, Serialize};

use super::{init_weight, LatentModel, LOGVAR_MAX, LOGVAR_MIN};
use crate::error::{Error, Result};
use crate::ndkernel::{Graph, KernelError, NodeId, ParamStore, Tensor};

/// Directed-graph VAE: two-layer GCN encoder with one-hot node features and
/// an MLP + half-split inner-product decoder with a learned bias.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GvaeConfig {
    pub nodes: usize,
    pub gcn_hidden: usize,
    /// Per-node latent size; must be even.
    pub latent_dim: usize,
}

impl Default for GvaeConfig {
    fn default() -> Self {
        Self {
            nodes: 120,
            gcn_hidden: 32,
            latent_dim: 16,
        }
    }
}

impl GvaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.gcn_hidden == 0 || self.latent_dim == 0 {
            return Err(Error::Config("graph VAE sizes must be positive".into()));
        }
        if !self.latent_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "graph VAE latent dimension must be even, got {}",
                self.latent_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GvaeModel {
    pub config: GvaeConfig,
    pub params: ParamStore,
}

/// `D^-1/2 (A + A^T + I) D^-1/2` for a square 0/1 adjacency.
pub fn gcn_propagation(a: &Tensor) -> Result<Tensor> {
    let n = match a.dims2() {
        Some((r, c)) if r == c => r,
        _ => return Err(Error::Data(format!("adjacency must be square, got {:?}", a.shape()))),
    };
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[i * n + j] = a.get2(i, j) + a.get2(j, i) + if i == j { 1.0 } else { 0.0 };
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / t[i * n..(i + 1) * n].iter().sum::<f64>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            t[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(Tensor::matrix(n, n, t)?)
}

impl GvaeModel {
    pub fn new(config: GvaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (n, h, d) = (config.nodes, config.gcn_hidden, config.latent_dim);
        let mut p = ParamStore::new();
        p.insert("gcn.w0", init_weight(seed, "gcn.w0", n, h));
        p.insert("gcn.w_mu", init_weight(seed, "gcn.w_mu", h, d));
        p.insert("gcn.w_sigma", init_weight(seed, "gcn.w_sigma", h, d));
        for name in ["enc_mu.fc1", "enc_mu.fc2", "dec.fc1", "dec.fc2"] {
            p.insert(&format!("{name}.w"), init_weight(seed, name, d, d));
            p.insert(&format!("{name}.b"), Tensor::zeros(&[d]));
        }
        p.insert("dec.bias", Tensor::scalar(0.0));
        Ok(Self { config, params: p })
    }

    fn mlp(g: &mut Graph, p: &ParamStore, prefix: &str, x: NodeId) -> Result<NodeId> {
        let w1 = g.param_named(p, &format!("{prefix}.fc1.w"));
        let b1 = g.param_named(p, &format!("{prefix}.fc1.b"));
        let w2 = g.param_named(p, &format!("{prefix}.fc2.w"));
        let b2 = g.param_named(p, &format!("{prefix}.fc2.b"));
        let h = g.affine(x, w1, Some(b1))?;
        let h = g.relu(h)?;
        Ok(g.affine(h, w2, Some(b2))?)
    }

    /// GCN embeddings `(e_mu, e_sigma)`, each `[nodes, latent_dim]`.
    pub fn gcn_graph(&self, g: &mut Graph, p: &ParamStore, x: &Tensor, a: &Tensor) -> Result<(NodeId, NodeId)> {
        let n = self.config.nodes;
        if a.shape() != [n, n] || x.shape() != [n, n] {
            return Err(KernelError::ShapeMismatch {
                op: "gcn",
                left: a.shape().to_vec(),
                right: vec![n, n],
            }
            .into());
        }
        let prop = gcn_propagation(a)?;
        let prop_x = crate::ndkernel::gemm(&prop, false, x, false)?;
        let prop = g.input(prop);
        let prop_x = g.input(prop_x);
        let w0 = g.param_named(p, "gcn.w0");
        let h = g.matmul(prop_x, w0)?;
        let h = g.relu(h)?;
        let agg = g.matmul(prop, h)?;
        let w_mu = g.param_named(p, "gcn.w_mu");
        let w_sigma = g.param_named(p, "gcn.w_sigma");
        Ok((g.matmul(agg, w_mu)?, g.matmul(agg, w_sigma)?))
    }

    /// Values of the GCN embeddings for a feature matrix and adjacency.
    pub fn gcn_forward(&self, x: &Tensor, a: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::for_store(&self.params);
        let (m, s) = self.gcn_graph(&mut g, &self.params, x, a)?;
        Ok((g.value(m).clone(), g.value(s).clone()))
    }

    /// Edge logits `[nodes, nodes]` for one flattened code `[1, nodes * latent_dim]`.
    pub fn logits_graph(&self, g: &mut Graph, p: &ParamStore, z_row: NodeId) -> Result<NodeId> {
        let (n, d) = (self.config.nodes, self.config.latent_dim);
        let z = g.reshape(z_row, &[n, d])?;
        let zp = Self::mlp(g, p, "dec", z)?;
        let src = g.slice(zp, 1, 0, d / 2)?;
        let dst = g.slice(zp, 1, d / 2, d / 2)?;
        let logits = g.matmul_t(src, false, dst, true)?;
        let b = g.param_named(p, "dec.bias");
        let b = g.reshape(b, &[1, 1])?;
        let b = g.broadcast(b, &[n, n])?;
        Ok(g.add(logits, b)?)
    }

    /// Edge probabilities for a `[nodes, latent_dim]` (or flattened) code.
    pub fn decode_probs(&self, z: &[f64]) -> Result<Tensor> {
        let (n, d) = (self.config.nodes, self.config.latent_dim);
        if z.len() != n * d {
            return Err(KernelError::ShapeMismatch {
                op: "gvae_decode",
                left: vec![z.len()],
                right: vec![n * d],
            }
            .into());
        }
        let p = &self.params;
        let mut g = Graph::for_store(p);
        let zn = g.input(Tensor::matrix(1, n * d, z.to_vec())?);
        let l = self.logits_graph(&mut g, p, zn)?;
        let probs = g.sigmoid(l)?;
        Ok(g.value(probs).clone())
    }
}

impl LatentModel for GvaeModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn latent_len(&self) -> usize {
        self.config.nodes * self.config.latent_dim
    }

    fn latent_block(&self) -> usize {
        self.config.latent_dim
    }

    fn encode_graph(&self, g: &mut Graph, p: &ParamStore, batch: &[&Tensor]) -> Result<(NodeId, NodeId)> {
        let (n, d) = (self.config.nodes, self.config.latent_dim);
        let features = Tensor::identity(n);
        let (mut mus, mut lvs) = (Vec::new(), Vec::new());
        for a in batch {
            let (e_mu, e_sigma) = self.gcn_graph(g, p, &features, a)?;
            let mu = Self::mlp(g, p, "enc_mu", e_mu)?;
            let lv = g.clamp(e_sigma, LOGVAR_MIN, LOGVAR_MAX)?;
            mus.push(g.reshape(mu, &[1, n * d])?);
            lvs.push(g.reshape(lv, &[1, n * d])?);
        }
        Ok((g.concat(&mus, 0)?, g.concat(&lvs, 0)?))
    }

    fn nll_graph(&self, g: &mut Graph, p: &ParamStore, z: NodeId, targets: &[&Tensor]) -> Result<NodeId> {
        let width = self.latent_len();
        let mut terms = Vec::with_capacity(targets.len());
        for (b, a) in targets.iter().enumerate() {
            let row = g.slice(z, 0, b, 1)?;
            debug_assert_eq!(g.shape(row), [1, width]);
            let l = self.logits_graph(g, p, row)?;
            // log p(A | Z) = A log s(l) + (1 - A) log s(-l)
            let pos = g.log_sigmoid(l)?;
            let neg_l = g.scale(l, -1.0)?;
            let neg = g.log_sigmoid(neg_l)?;
            let edges = g.input((*a).clone());
            let non_edges = g.input(a.map(|v| 1.0 - v));
            let t1 = g.mul(edges, pos)?;
            let t0 = g.mul(non_edges, neg)?;
            let ll = g.add(t1, t0)?;
            terms.push(g.sum(ll)?);
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        Ok(g.scale(total, -1.0)?)
    }

    fn decode(&self, z: &[f64]) -> Result<Tensor> {
        self.decode_probs(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::bce;
    use crate::models::{elbo, elbo_graph, noise};
    use crate::ndkernel::{finite_difference_gradient, max_relative_error, DEFAULT_FD_EPS};
    use crate::rng;
    use rand::Rng as _;
    use rand::seq::SliceRandom;

    fn small() -> GvaeModel {
        GvaeModel::new(
            GvaeConfig {
                nodes: 6,
                gcn_hidden: 5,
                latent_dim: 4,
            },
            3,
        )
        .unwrap()
    }

    fn random_adj(n: usize, seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..i {
                if r.random_bool(0.35) {
                    t.data_mut()[i * n + j] = 1.0;
                }
            }
        }
        t
    }

    #[test]
    fn empty_graph_propagation_is_identity() {
        assert_eq!(gcn_propagation(&Tensor::zeros(&[4, 4])).unwrap(), Tensor::identity(4));
        assert!(gcn_propagation(&Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn gcn_is_permutation_equivariant() {
        let m = small();
        let n = 6;
        let a = random_adj(n, 1);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::seeded(2));
        // (P M)[i] = M[perm[i]]
        let permute_rows = |t: &Tensor| {
            let c = t.shape()[1];
            Tensor::matrix(n, c, perm.iter().flat_map(|&r| t.row(r).to_vec()).collect()).unwrap()
        };
        let mut pa = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                pa.data_mut()[i * n + j] = a.get2(perm[i], perm[j]);
            }
        }
        let x = Tensor::identity(n);
        let px = permute_rows(&x);
        let (mu, sigma) = m.gcn_forward(&x, &a).unwrap();
        let (pmu, psigma) = m.gcn_forward(&px, &pa).unwrap();
        for (got, want) in [(pmu, permute_rows(&mu)), (psigma, permute_rows(&sigma))] {
            assert!(got.data().iter().zip(want.data()).all(|(u, v)| (u - v).abs() < 1e-12));
        }
        assert_eq!(m.gcn_forward(&x, &a).unwrap().0, mu);
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let m = small();
        let a = random_adj(6, 4);
        let post = m.encode(&[&a]).unwrap();
        assert_eq!(post.mu.shape(), &[1, 24]);
        assert_eq!(post.logvar.shape(), &[1, 24]);
        assert!(post.mu.is_finite());
        assert_eq!(post, m.encode(&[&a]).unwrap());
    }

    #[test]
    fn decoder_bias_and_asymmetry() {
        let mut m = small();
        // all-zero decoder: logits equal the bias
        for id in m.params.ids().collect::<Vec<_>>() {
            if m.params.name(id).starts_with("dec.") {
                m.params.get_mut(id).data_mut().fill(0.0);
            }
        }
        let z = vec![0.3; 24];
        assert!(m.decode(&z).unwrap().data().iter().all(|&v| v == 0.5));
        let bias = m.params.id("dec.bias").unwrap();
        m.params.get_mut(bias).data_mut()[0] = -20.0;
        assert!(m.decode(&z).unwrap().data().iter().all(|&v| v < 1e-8 && v > 0.0));

        let fresh = small();
        let mut r = rng::seeded(5);
        let z = rng::normals(&mut r, 24);
        let p = fresh.decode(&z).unwrap();
        let asym = (0..6).any(|i| (0..6).any(|j| (p.get2(i, j) - p.get2(j, i)).abs() > 1e-6));
        assert!(asym);
        assert!(fresh.decode(&z[..20]).is_err());
        assert!(GvaeModel::new(GvaeConfig { nodes: 4, gcn_hidden: 3, latent_dim: 3 }, 1).is_err());
    }

    #[test]
    fn reconstruction_term_is_summed_bce() {
        let m = small();
        let a = random_adj(6, 6);
        let z = m.encode_map(&a).unwrap();
        let probs = m.decode(&z).unwrap();
        let mut g = Graph::for_store(&m.params);
        let zn = g.input(Tensor::matrix(1, 24, z).unwrap());
        let nll = m.nll_graph(&mut g, &m.params, zn, &[&a]).unwrap();
        let mean_bce = bce(&probs, &a).unwrap();
        assert!((g.value(nll).item().unwrap() - 36.0 * mean_bce).abs() < 1e-9);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let m = small();
        let graphs = [random_adj(6, 7), random_adj(6, 8)];
        let refs: Vec<&Tensor> = graphs.iter().collect();
        let eps = noise(2, 24, 19);
        let run = |p: &ParamStore| -> Result<(Graph, NodeId)> {
            let mut g = Graph::for_store(p);
            let nodes = elbo_graph(&m, &mut g, p, &refs, &eps)?;
            Ok((g, nodes.loss))
        };
        let (g, loss) = run(&m.params).unwrap();
        let analytic = g.backward(loss).unwrap();
        let numeric =
            finite_difference_gradient(|p| run(p).map(|(g, l)| g.value(l).item().unwrap()), &m.params, DEFAULT_FD_EPS)
                .unwrap();
        let (err, at) = max_relative_error(&m.params, &analytic, &numeric, 1e-6);
        assert!(err < 1e-4, "{err} at {at}");
        let parts = elbo(&m, &refs, 1).unwrap();
        assert!(parts.kl >= 0.0 && parts.recon >= 0.0);
    }
}
