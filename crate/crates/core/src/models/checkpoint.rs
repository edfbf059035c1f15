//! Checkpoint files: the line `LGCK1`, one line of JSON manifest, then every
//! parameter as an LGT1 tensor in manifest order (model parameters in their
//! canonical order, followed by any auxiliary parameters).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GvaeConfig, GvaeModel, LatentModel, VaeConfig, VaeModel};
use crate::error::{Error, IoError, Result};
use crate::iat::IatInfo;
use crate::ndkernel::io::{read_tensor_at, write_tensor};
use crate::ndkernel::{Graph, NodeId, ParamStore, Tensor};

const MAGIC: &str = "LGCK1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Vae(VaeConfig),
    Gvae(GvaeConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelSpec,
    pub seed: u64,
    /// Training configuration that produced the weights, as written by the caller.
    pub config: serde_json::Value,
    pub iat: Option<IatInfo>,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug)]
pub enum AnyModel {
    Vae(VaeModel),
    Gvae(GvaeModel),
}

impl AnyModel {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Vae(c) => AnyModel::Vae(VaeModel::new(c, seed)?),
            ModelSpec::Gvae(c) => AnyModel::Gvae(GvaeModel::new(c, seed)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            AnyModel::Vae(m) => ModelSpec::Vae(m.config),
            AnyModel::Gvae(m) => ModelSpec::Gvae(m.config),
        }
    }

    pub fn is_graph(&self) -> bool {
        matches!(self, AnyModel::Gvae(_))
    }

    fn inner(&self) -> &dyn LatentModel {
        match self {
            AnyModel::Vae(m) => m,
            AnyModel::Gvae(m) => m,
        }
    }
}

impl LatentModel for AnyModel {
    fn params(&self) -> &ParamStore {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            AnyModel::Vae(m) => m.params_mut(),
            AnyModel::Gvae(m) => m.params_mut(),
        }
    }

    fn latent_len(&self) -> usize {
        self.inner().latent_len()
    }

    fn latent_block(&self) -> usize {
        self.inner().latent_block()
    }

    fn encode_graph(&self, g: &mut Graph, p: &ParamStore, batch: &[&Tensor]) -> Result<(NodeId, NodeId)> {
        self.inner().encode_graph(g, p, batch)
    }

    fn nll_graph(&self, g: &mut Graph, p: &ParamStore, z: NodeId, targets: &[&Tensor]) -> Result<NodeId> {
        self.inner().nll_graph(g, p, z, targets)
    }

    fn decode(&self, z: &[f64]) -> Result<Tensor> {
        self.inner().decode(z)
    }
}

/// A model plus auxiliary parameters (e.g. a learned interpolator).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: AnyModel,
    pub extra: ParamStore,
}

impl Checkpoint {
    pub fn new(model: AnyModel, extra: ParamStore, seed: u64, config: serde_json::Value, iat: Option<IatInfo>) -> Self {
        let params = model
            .params()
            .ids()
            .map(|id| (model.params(), id))
            .chain(extra.ids().map(|id| (&extra, id)))
            .map(|(s, id)| ParamEntry {
                name: s.name(id).to_owned(),
                shape: s.get(id).shape().to_vec(),
            })
            .collect();
        Self {
            manifest: CheckpointManifest {
                model: model.spec(),
                seed,
                config,
                iat,
                params,
            },
            model,
            extra,
        }
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{MAGIC}")?;
    writeln!(f, "{}", serde_json::to_string(&ck.manifest)?)?;
    for store in [ck.model.params(), &ck.extra] {
        for id in store.ids() {
            write_tensor(&mut f, store.get(id))?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let malformed = |offset: usize, reason: &str| -> Error {
        IoError::Malformed {
            offset,
            reason: reason.to_owned(),
        }
        .into()
    };
    let line_end = |from: usize| bytes[from..].iter().position(|&b| b == b'\n').map(|p| from + p);
    let first = line_end(0).ok_or_else(|| malformed(0, "missing checkpoint magic"))?;
    if &bytes[..first] != MAGIC.as_bytes() {
        return Err(malformed(0, "not a checkpoint file"));
    }
    let second = line_end(first + 1).ok_or_else(|| malformed(first + 1, "missing manifest line"))?;
    let manifest: CheckpointManifest =
        serde_json::from_slice(&bytes[first + 1..second]).map_err(|e| malformed(first + 1, &e.to_string()))?;

    let mut model = AnyModel::new(manifest.model, 0)?;
    let mut extra = ParamStore::new();
    let mut offset = second + 1;
    for entry in &manifest.params {
        let (t, next) = read_tensor_at(&bytes, offset)?;
        if t.shape() != entry.shape.as_slice() {
            return Err(malformed(offset, &format!("parameter {} has shape {:?}", entry.name, t.shape())));
        }
        match model.params().id(&entry.name) {
            Some(id) => {
                if model.params().get(id).shape() != t.shape() {
                    return Err(malformed(offset, &format!("parameter {} does not fit the model", entry.name)));
                }
                *model.params_mut().get_mut(id) = t;
            }
            None => {
                extra.insert(&entry.name, t);
            }
        }
        offset = next;
    }
    if offset != bytes.len() {
        return Err(malformed(offset, "trailing bytes after last parameter"));
    }
    let expected = model.params().len() + extra.len();
    if manifest.params.len() != expected {
        return Err(malformed(second + 1, "manifest lists duplicate parameters"));
    }
    let seen: std::collections::HashSet<&str> = manifest.params.iter().map(|p| p.name.as_str()).collect();
    if let Some(missing) = model.params().names().iter().find(|n| !seen.contains(n.as_str())) {
        return Err(malformed(second + 1, &format!("checkpoint lacks parameter {missing}")));
    }
    Ok(Checkpoint {
        manifest,
        model,
        extra,
    })
}
