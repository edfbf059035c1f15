//! Interpolation-aware training: supervised losses that pull the
//! interpolant of two encodings towards the encoding (or the sample) at the
//! intermediate attribute value, the learned MLP interpolator, and the joint
//! objective with the ELBO.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Split, Triplet};
use crate::error::{Error, Result};
use crate::interp::{interpolate_rows, lambda_from_times, InterpolationKind, InterpolationWeight};
use crate::models::{elbo_graph, init_weight, noise, optimize, train, BatchSampler, LatentModel, OptimConfig, TrainConfig};
use crate::ndkernel::{Graph, NodeId, ParamStore, Tensor};
use crate::rng;

/// Name prefix of the learned interpolator's parameters in joint stores and checkpoints.
pub const INTERP_PREFIX: &str = "interp.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IatVariant {
    Latent,
    Decode,
    MlpLatent,
    MlpDecode,
}

impl IatVariant {
    pub const ALL: [IatVariant; 4] = [Self::Latent, Self::Decode, Self::MlpLatent, Self::MlpDecode];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Latent => "latent",
            Self::Decode => "decode",
            Self::MlpLatent => "mlp_latent",
            Self::MlpDecode => "mlp_decode",
        }
    }

    pub fn uses_mlp(self) -> bool {
        matches!(self, Self::MlpLatent | Self::MlpDecode)
    }

    pub fn on_decoder(self) -> bool {
        matches!(self, Self::Decode | Self::MlpDecode)
    }
}

impl fmt::Display for IatVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IatVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown IAT variant {s:?}")))
    }
}

/// IAT settings recorded alongside a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IatInfo {
    pub variant: IatVariant,
    pub kind: InterpolationKind,
    pub lambda_iat: f64,
    pub labeled_budget: Option<usize>,
    pub pretrain_iters: usize,
}

/// Three-layer MLP `[z1, z3, z_inter] -> z` acting on one latent block.
///
/// Graph codes are `nodes` blocks of `latent_dim`; the same MLP is applied
/// to every node.
pub struct InterpMlp;

impl InterpMlp {
    /// Fresh parameters, already carrying [`INTERP_PREFIX`].
    pub fn init(block: usize, seed: u64) -> ParamStore {
        let mut p = ParamStore::new();
        for (name, fan_in) in [("fc1", 3 * block), ("fc2", block), ("fc3", block)] {
            let full = format!("{INTERP_PREFIX}{name}");
            p.insert(&format!("{full}.w"), init_weight(seed, &full, fan_in, block));
            p.insert(&format!("{full}.b"), Tensor::zeros(&[block]));
        }
        p
    }

    /// Hand-set weights that return the third input block unchanged for
    /// inputs with entries above `-offset`: shift up, pass through both
    /// ReLUs, shift back down.
    pub fn passthrough(block: usize, offset: f64) -> ParamStore {
        let mut p = ParamStore::new();
        let mut w1 = Tensor::zeros(&[3 * block, block]);
        for i in 0..block {
            w1.data_mut()[(2 * block + i) * block + i] = 1.0;
        }
        p.insert(&format!("{INTERP_PREFIX}fc1.w"), w1);
        p.insert(&format!("{INTERP_PREFIX}fc1.b"), Tensor::full(&[block], offset));
        p.insert(&format!("{INTERP_PREFIX}fc2.w"), Tensor::identity(block));
        p.insert(&format!("{INTERP_PREFIX}fc2.b"), Tensor::zeros(&[block]));
        p.insert(&format!("{INTERP_PREFIX}fc3.w"), Tensor::identity(block));
        p.insert(&format!("{INTERP_PREFIX}fc3.b"), Tensor::full(&[block], -offset));
        p
    }

    /// Output for `[rows, len]` inputs with `len` a multiple of `block`.
    pub fn graph(g: &mut Graph, p: &ParamStore, block: usize, z1: NodeId, z3: NodeId, zi: NodeId) -> Result<NodeId> {
        let shape = g.shape(z1).to_vec();
        let (rows, len) = (shape[0], shape[1]);
        if len % block != 0 {
            return Err(Error::Config(format!("latent length {len} is not a multiple of block {block}")));
        }
        let flat = rows * len / block;
        let parts = [z1, z3, zi]
            .into_iter()
            .map(|z| g.reshape(z, &[flat, block]))
            .collect::<Result<Vec<_>, _>>()?;
        let x = g.concat(&parts, 1)?;
        let mut h = x;
        for (k, name) in ["fc1", "fc2", "fc3"].into_iter().enumerate() {
            let w = g.param_named(p, &format!("{INTERP_PREFIX}{name}.w"));
            let b = g.param_named(p, &format!("{INTERP_PREFIX}{name}.b"));
            h = g.affine(h, w, Some(b))?;
            if k < 2 {
                h = g.relu(h)?;
            }
        }
        Ok(g.reshape(h, &[rows, len])?)
    }

    pub fn apply(p: &ParamStore, block: usize, z1: &[f64], z3: &[f64], zi: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::for_store(p);
        let mut row = |z: &[f64]| Tensor::matrix(1, z.len(), z.to_vec()).map(|t| g.input(t));
        let (a, b, c) = (row(z1)?, row(z3)?, row(zi)?);
        let out = Self::graph(&mut g, p, block, a, b, c)?;
        Ok(g.value(out).data().to_vec())
    }
}

/// Resolved triplets: samples at `t1`, `t2`, `t3` plus the interpolation weights.
pub struct TripletBatch<'a> {
    pub x1: Vec<&'a Tensor>,
    pub x2: Vec<&'a Tensor>,
    pub x3: Vec<&'a Tensor>,
    pub weights: Vec<InterpolationWeight>,
}

impl<'a> TripletBatch<'a> {
    pub fn from_dataset(data: &'a Dataset, triplets: &[Triplet]) -> Result<Self> {
        let mut b = Self {
            x1: Vec::with_capacity(triplets.len()),
            x2: Vec::with_capacity(triplets.len()),
            x3: Vec::with_capacity(triplets.len()),
            weights: Vec::with_capacity(triplets.len()),
        };
        for tr in triplets {
            let [s1, s2, s3] = data.triplet_samples(tr);
            b.weights.push(lambda_from_times(s1.t, s2.t, s3.t)?);
            b.x1.push(&s1.x);
            b.x2.push(&s2.x);
            b.x3.push(&s3.x);
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Batch-mean IAT loss of `variant`.
///
/// Encodings are posterior means; gradients flow into the encoder, the
/// decoder and (for the MLP variants) the interpolator, whose parameters
/// must be present in `p` under [`INTERP_PREFIX`].
pub fn iat_loss_graph<M: LatentModel + ?Sized>(
    model: &M,
    g: &mut Graph,
    p: &ParamStore,
    batch: &TripletBatch,
    variant: IatVariant,
    kind: InterpolationKind,
) -> Result<NodeId> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Data("empty triplet batch".into()));
    }
    let all: Vec<&Tensor> = batch.x1.iter().chain(&batch.x3).chain(&batch.x2).copied().collect();
    let (mu, _) = model.encode_graph(g, p, &all)?;
    let z1 = g.slice(mu, 0, 0, n)?;
    let z3 = g.slice(mu, 0, n, n)?;
    let z2 = g.slice(mu, 0, 2 * n, n)?;
    let mut pred = interpolate_rows(g, kind, z1, z3, &batch.weights)?;
    if variant.uses_mlp() {
        pred = InterpMlp::graph(g, p, model.latent_block(), z1, z3, pred)?;
    }
    let total = if variant.on_decoder() {
        model.nll_graph(g, p, pred, &batch.x2)?
    } else {
        let d = g.sub(z2, pred)?;
        let d = g.square(d)?;
        g.sum(d)?
    };
    Ok(g.scale(total, 1.0 / n as f64)?)
}

pub fn iat_loss<M: LatentModel + ?Sized>(
    model: &M,
    p: &ParamStore,
    batch: &TripletBatch,
    variant: IatVariant,
    kind: InterpolationKind,
) -> Result<f64> {
    let mut g = Graph::for_store(p);
    let l = iat_loss_graph(model, &mut g, p, batch, variant, kind)?;
    Ok(g.value(l).item().expect("scalar loss"))
}

/// ELBO on `data_batch` plus `lambda_iat` times the IAT loss on `triplets`.
///
/// With `lambda_iat == 0` the returned node is the ELBO node itself.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss_graph<M: LatentModel + ?Sized>(
    model: &M,
    g: &mut Graph,
    p: &ParamStore,
    data_batch: &[&Tensor],
    eps: &Tensor,
    triplets: &TripletBatch,
    variant: IatVariant,
    kind: InterpolationKind,
    lambda_iat: f64,
) -> Result<NodeId> {
    if !(lambda_iat >= 0.0) {
        return Err(Error::Config(format!("lambda_iat must be non-negative, got {lambda_iat}")));
    }
    let elbo = elbo_graph(model, g, p, data_batch, eps)?.loss;
    if lambda_iat == 0.0 {
        return Ok(elbo);
    }
    let iat = iat_loss_graph(model, g, p, triplets, variant, kind)?;
    let iat = g.scale(iat, lambda_iat)?;
    Ok(g.add(elbo, iat)?)
}

/// Per-sequence indices usable as labels: the whole split, or a fixed
/// random subset of `budget` of them. Subsets for growing budgets are nested.
pub fn labeled_pool(data: &Dataset, split: Split, budget: Option<usize>) -> Result<Vec<Vec<usize>>> {
    if let Some(b) = budget {
        if b < 3 {
            return Err(Error::Config(format!("labeled budget {b} is below 3")));
        }
    }
    Ok(data
        .sequences
        .iter()
        .map(|seq| {
            let mut idx = seq.indices(split);
            if let Some(b) = budget {
                idx.shuffle(&mut rng::child(data.master_seed, "labels", seq.id as u64));
                idx.truncate(b);
                idx.sort_unstable();
            }
            idx
        })
        .collect())
}

/// `n` triplets uniform over all ordered same-sequence triples of the pool.
pub fn sample_triplet_batch(
    data: &Dataset,
    split: Split,
    n: usize,
    seed: u64,
    labeled_budget: Option<usize>,
) -> Result<Vec<Triplet>> {
    let pool = labeled_pool(data, split, labeled_budget)?;
    sample_from_pool(&pool, n, seed)
}

pub(crate) fn sample_from_pool(pool: &[Vec<usize>], n: usize, seed: u64) -> Result<Vec<Triplet>> {
    let choose3 = |m: usize| if m < 3 { 0.0 } else { (m * (m - 1) * (m - 2)) as f64 / 6.0 };
    let weights: Vec<f64> = pool.iter().map(|p| choose3(p.len())).collect();
    let pick_seq =
        WeightedIndex::new(&weights).map_err(|_| Error::Data("no sequence has three labeled samples".into()))?;
    let mut r = rng::seeded(seed);
    Ok((0..n)
        .map(|_| {
            let s = pick_seq.sample(&mut r);
            let mut idx = rand::seq::index::sample(&mut r, pool[s].len(), 3).into_vec();
            idx.sort_unstable();
            Triplet {
                sequence: s,
                idx: [pool[s][idx[0]], pool[s][idx[1]], pool[s][idx[2]]],
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IatConfig {
    pub variant: IatVariant,
    pub kind: InterpolationKind,
    pub lambda_iat: f64,
    pub triplet_batch: usize,
    pub labeled_budget: Option<usize>,
    /// Plain ELBO iterations before the joint objective starts.
    pub pretrain_iters: usize,
}

impl IatConfig {
    pub fn info(&self) -> IatInfo {
        IatInfo {
            variant: self.variant,
            kind: self.kind,
            lambda_iat: self.lambda_iat,
            labeled_budget: self.labeled_budget,
            pretrain_iters: self.pretrain_iters,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IatOutcome {
    pub trace: Vec<f64>,
    /// Interpolator parameters (with prefix); empty for non-MLP variants.
    pub interp: ParamStore,
}

/// Joint training: every iteration sums the ELBO of one data minibatch and
/// the weighted IAT loss of one triplet minibatch from the training split.
///
/// The ELBO side draws exactly the batches and noise of [`train`], so
/// `lambda_iat == 0` reproduces unsupervised training.
pub fn train_iat<M: LatentModel>(model: &mut M, data: &Dataset, tc: &TrainConfig, ic: &IatConfig) -> Result<IatOutcome> {
    tc.validate()?;
    if ic.triplet_batch == 0 {
        return Err(Error::Config("triplet batch must be positive".into()));
    }
    let xs: Vec<&Tensor> = data.split_samples(Split::Train).into_iter().map(|s| &s.x).collect();
    if xs.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let pool = labeled_pool(data, Split::Train, ic.labeled_budget)?;
    let mut trace = Vec::new();
    if ic.pretrain_iters > 0 {
        let pre = TrainConfig {
            iters: ic.pretrain_iters,
            seed: rng::derive_seed(tc.seed, "pretrain", 0),
            ..*tc
        };
        trace.extend(train(model, &xs, &pre)?.trace);
    }

    let mut store = model.params().clone();
    if ic.variant.uses_mlp() {
        store.extend_prefixed("", &InterpMlp::init(model.latent_block(), rng::derive_seed(tc.seed, "interp", 0)));
    }
    let mut sampler = BatchSampler::new(xs.len(), tc.batch, rng::derive_seed(tc.seed, "batches", 0));
    let latent = model.latent_len();
    let result = optimize(&mut store, OptimConfig { lr: tc.lr, iters: tc.iters }, |g, p, it| {
        let batch: Vec<&Tensor> = sampler.next_batch().into_iter().map(|i| xs[i]).collect();
        let eps = noise(batch.len(), latent, rng::derive_seed(tc.seed, "noise", it as u64));
        let triplets = sample_from_pool(&pool, ic.triplet_batch, rng::derive_seed(tc.seed, "triplets", it as u64))?;
        let tb = TripletBatch::from_dataset(data, &triplets)?;
        joint_loss_graph(&*model, g, p, &batch, &eps, &tb, ic.variant, ic.kind, ic.lambda_iat)
    });
    let model_params = model.params_mut();
    for id in model_params.ids().collect::<Vec<_>>() {
        let name = model_params.name(id).to_owned();
        *model_params.get_mut(id) = store.by_name(&name).expect("joint store holds model params").clone();
    }
    let mut interp = ParamStore::new();
    for id in store.ids().filter(|&id| store.name(id).starts_with(INTERP_PREFIX)) {
        interp.insert(store.name(id), store.get(id).clone());
    }
    let steps = result.map_err(|e| match e {
        Error::Diverged { iteration, loss, reason, trace: t } => Error::Diverged {
            iteration: iteration + ic.pretrain_iters,
            loss,
            reason,
            trace: trace.iter().copied().chain(t).collect(),
        },
        other => other,
    })?;
    trace.extend(steps);
    Ok(IatOutcome { trace, interp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_image_dataset, Sample, Sequence};
    use crate::exec::Exec;
    use crate::models::{elbo, VaeConfig, VaeModel};
    use crate::ndkernel::{finite_difference_gradient, max_relative_error, DEFAULT_FD_EPS};

    fn tiny_model() -> VaeModel {
        VaeModel::new(
            VaeConfig {
                side: 8,
                hidden: 5,
                latent_dim: 4,
                rank: None,
                sigma_x: 1.0,
            },
            11,
        )
        .unwrap()
    }

    fn tiny_data() -> Dataset {
        generate_image_dataset(2, 9, 16, 5, Exec::Sequential)
            .map(|mut d| {
                // Downsample to 8x8 by taking every other pixel.
                for s in d.sequences.iter_mut().flat_map(|s| s.samples.iter_mut()) {
                    let v: Vec<f64> = (0..64).map(|k| s.x.data()[(k / 8) * 32 + (k % 8) * 2]).collect();
                    s.x = Tensor::matrix(8, 8, v).unwrap();
                }
                d
            })
            .unwrap()
    }

    fn triplets(d: &Dataset) -> Vec<Triplet> {
        vec![
            Triplet { sequence: 0, idx: [0, 3, 7] },
            Triplet { sequence: 1, idx: [1, 2, 8] },
        ]
        .into_iter()
        .filter(|t| t.idx[2] < d.sequences[t.sequence].samples.len())
        .collect()
    }

    #[test]
    fn variant_names() {
        for v in IatVariant::ALL {
            assert_eq!(v.as_str().parse::<IatVariant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        assert!("mlp".parse::<IatVariant>().is_err());
    }

    #[test]
    fn losses_match_finite_differences() {
        let model = tiny_model();
        let data = tiny_data();
        let trs = triplets(&data);
        let tb = TripletBatch::from_dataset(&data, &trs).unwrap();
        for variant in IatVariant::ALL {
            for kind in [InterpolationKind::Norm, InterpolationKind::Slerp] {
                let mut p = model.params().clone();
                if variant.uses_mlp() {
                    p.extend_prefixed("", &InterpMlp::init(4, 2));
                }
                let mut g = Graph::for_store(&p);
                let l = iat_loss_graph(&model, &mut g, &p, &tb, variant, kind).unwrap();
                let analytic = g.backward(l).unwrap();
                let numeric =
                    finite_difference_gradient(|q| iat_loss(&model, q, &tb, variant, kind), &p, DEFAULT_FD_EPS).unwrap();
                let (err, at) = max_relative_error(&p, &analytic, &numeric, 1e-6);
                assert!(err < 1e-4, "{variant}/{kind}: {err} at {at}");
            }
        }
    }

    #[test]
    fn losses_sit_at_or_above_their_floor() {
        let model = tiny_model();
        let data = tiny_data();
        let tb = TripletBatch::from_dataset(&data, &triplets(&data)).unwrap();
        let mut p = model.params().clone();
        p.extend_prefixed("", &InterpMlp::init(4, 2));
        for v in IatVariant::ALL {
            assert!(iat_loss(&model, &p, &tb, v, InterpolationKind::Linear).unwrap() >= 0.0);
        }
    }

    #[test]
    fn latent_loss_vanishes_on_the_interpolant() {
        // Same sample at all three positions: the interpolant of two equal
        // codes under the linear kind is the code itself.
        let model = tiny_model();
        let x = Tensor::full(&[8, 8], 0.3);
        let tb = TripletBatch {
            x1: vec![&x],
            x2: vec![&x],
            x3: vec![&x],
            weights: vec![InterpolationWeight::new(0.4).unwrap()],
        };
        let l = iat_loss(&model, model.params(), &tb, IatVariant::Latent, InterpolationKind::Linear).unwrap();
        assert!(l.abs() < 1e-20);
    }

    #[test]
    fn passthrough_mlp_reproduces_plain_decode_loss() {
        let model = tiny_model();
        let data = tiny_data();
        let tb = TripletBatch::from_dataset(&data, &triplets(&data)).unwrap();
        let mut p = model.params().clone();
        p.extend_prefixed("", &InterpMlp::passthrough(4, 100.0));
        for kind in InterpolationKind::ALL {
            let plain = iat_loss(&model, &p, &tb, IatVariant::Decode, kind).unwrap();
            let mlp = iat_loss(&model, &p, &tb, IatVariant::MlpDecode, kind).unwrap();
            assert!((plain - mlp).abs() <= 1e-9 * plain.abs().max(1.0), "{kind}: {plain} vs {mlp}");
        }
    }

    #[test]
    fn decode_loss_falls_as_the_target_approaches_the_output() {
        let model = tiny_model();
        let x1 = Tensor::full(&[8, 8], -0.2);
        let x3 = Tensor::full(&[8, 8], 0.4);
        let w = InterpolationWeight::new(0.5).unwrap();
        let z1 = model.encode_map(&x1).unwrap();
        let z3 = model.encode_map(&x3).unwrap();
        let out = model.decode(&crate::interp::lerp(&z1, &z3, w).unwrap()).unwrap();
        let dir = Tensor::full(&[8, 8], 0.5);
        let mut last = f64::INFINITY;
        for s in [1.0, 0.75, 0.5, 0.25, 0.0] {
            let target = out.zip_map(&dir, |o, d| o + s * d);
            let tb = TripletBatch {
                x1: vec![&x1],
                x2: vec![&target],
                x3: vec![&x3],
                weights: vec![w],
            };
            let l = iat_loss(&model, model.params(), &tb, IatVariant::Decode, InterpolationKind::Linear).unwrap();
            assert!(l < last, "loss {l} did not fall below {last}");
            last = l;
        }
        assert!(last.abs() < 1e-20);
    }

    #[test]
    fn joint_loss_is_linear_in_lambda() {
        let model = tiny_model();
        let data = tiny_data();
        let tb = TripletBatch::from_dataset(&data, &triplets(&data)).unwrap();
        let xs: Vec<&Tensor> = data.sequences[0].samples.iter().take(3).map(|s| &s.x).collect();
        let eps = noise(3, 4, 9);
        let p = model.params();
        let value = |lambda: f64| {
            let mut g = Graph::for_store(p);
            let l = joint_loss_graph(&model, &mut g, p, &xs, &eps, &tb, IatVariant::Decode, InterpolationKind::Norm, lambda)
                .unwrap();
            g.value(l).item().unwrap()
        };
        let plain = {
            let mut g = Graph::for_store(p);
            let n = elbo_graph(&model, &mut g, p, &xs, &eps).unwrap();
            g.value(n.loss).item().unwrap()
        };
        let iat = iat_loss(&model, p, &tb, IatVariant::Decode, InterpolationKind::Norm).unwrap();
        assert_eq!(value(0.0).to_bits(), plain.to_bits());
        assert_eq!(value(1.0), plain + iat);
        assert!(value(2.0) > value(1.0) && value(1.0) > value(0.0));
        let mut g = Graph::for_store(p);
        assert!(joint_loss_graph(&model, &mut g, p, &xs, &eps, &tb, IatVariant::Decode, InterpolationKind::Norm, -1.0).is_err());
    }

    #[test]
    fn sampled_triplets_are_ordered_and_reproducible() {
        let data = tiny_data();
        let a = sample_triplet_batch(&data, Split::Train, 200, 3, None).unwrap();
        assert_eq!(a, sample_triplet_batch(&data, Split::Train, 200, 3, None).unwrap());
        for tr in &a {
            let [s1, s2, s3] = data.triplet_samples(tr);
            assert!(s1.t < s2.t && s2.t < s3.t);
            assert!([s1, s2, s3].iter().all(|s| s.split == Split::Train));
        }
        assert!(sample_triplet_batch(&data, Split::Train, 5, 3, Some(2)).is_err());
    }

    #[test]
    fn budgets_restrict_and_nest() {
        let data = tiny_data();
        let small = labeled_pool(&data, Split::Train, Some(3)).unwrap();
        let large = labeled_pool(&data, Split::Train, Some(4)).unwrap();
        for (s, l) in small.iter().zip(&large) {
            assert_eq!(s.len(), 3);
            assert!(s.iter().all(|i| l.contains(i)));
        }
        let trs = sample_triplet_batch(&data, Split::Train, 100, 1, Some(3)).unwrap();
        assert!(trs.iter().all(|t| t.idx.iter().all(|i| small[t.sequence].contains(i))));
    }

    #[test]
    fn zero_lambda_reproduces_plain_training() {
        let data = tiny_data();
        let tc = TrainConfig {
            lr: 1e-3,
            batch: 4,
            iters: 5,
            seed: 8,
        };
        let mut plain = tiny_model();
        let xs: Vec<&Tensor> = data.split_samples(Split::Train).into_iter().map(|s| &s.x).collect();
        train(&mut plain, &xs, &tc).unwrap();
        let mut joint = tiny_model();
        let ic = IatConfig {
            variant: IatVariant::MlpDecode,
            kind: InterpolationKind::Norm,
            lambda_iat: 0.0,
            triplet_batch: 3,
            labeled_budget: None,
            pretrain_iters: 0,
        };
        let out = train_iat(&mut joint, &data, &tc, &ic).unwrap();
        assert!(plain.params().same_values(joint.params()));
        assert_eq!(out.interp.len(), 6);
        let e = elbo(&joint, &xs[..2], 1).unwrap();
        assert!(e.loss.is_finite());
    }

    #[test]
    fn single_sequence_pool() {
        let seq = Sequence {
            id: 0,
            style_seed: 0,
            samples: (0..5)
                .map(|i| Sample {
                    t: i as f64,
                    x: Tensor::zeros(&[2, 2]),
                    split: Split::Train,
                })
                .collect(),
        };
        let data = Dataset {
            kind: crate::datasets::DatasetKind::Image,
            master_seed: 0,
            sequences: vec![seq],
            graph: None,
        };
        let trs = sample_triplet_batch(&data, Split::Train, 50, 0, None).unwrap();
        assert!(trs.iter().all(|t| t.idx[0] < t.idx[1] && t.idx[1] < t.idx[2]));
    }
}
