//! Experiment harnesses: algorithm comparison on one model, latent
//! dimension / rank sweeps, IAT variants and labeled-budget curves.

use serde::{Deserialize, Serialize};

use super::{evaluate_suite, MetricReport, ReportKeys, SuiteConfig, SuiteOutput};
use crate::datasets::{Dataset, DatasetKind, Split};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::iat::{train_iat, IatConfig, IatVariant};
use crate::interp::InterpolationKind;
use crate::models::{singular_values, train, AnyModel, LatentModel, ModelSpec, TrainConfig, TrainOutcome};
use crate::ndkernel::{ParamStore, Tensor};

/// Everything that fixes one trained-and-evaluated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: ModelSpec,
    pub model_seed: u64,
    pub train: TrainConfig,
    pub eval: SuiteConfig,
}

/// Fresh model trained with the plain ELBO on the training split.
pub fn train_model(data: &Dataset, spec: &RunSpec) -> Result<(AnyModel, TrainOutcome)> {
    check_kind(data, spec.model)?;
    let mut model = AnyModel::new(spec.model, spec.model_seed)?;
    let xs: Vec<&Tensor> = data.split_samples(Split::Train).into_iter().map(|s| &s.x).collect();
    let out = train(&mut model, &xs, &spec.train)?;
    Ok((model, out))
}

fn check_kind(data: &Dataset, spec: ModelSpec) -> Result<()> {
    let ok = matches!(
        (data.kind, spec),
        (DatasetKind::Image, ModelSpec::Vae(_)) | (DatasetKind::Graph, ModelSpec::Gvae(_))
    );
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("model {spec:?} does not fit a {:?} dataset", data.kind)))
    }
}

/// Outcome of one trained cell of an experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub keys: ReportKeys,
    /// Training or evaluation failure; the other cells still run.
    pub error: Option<String>,
    pub final_loss: Option<f64>,
    /// `sigma_{R+1} / sigma_1` of stacked test-set posterior means, for rank cells.
    pub rank_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub reports: Vec<MetricReport>,
    pub cells: Vec<CellStatus>,
    /// Per-cell raw results, aligned with `cells` (`None` for failed cells).
    pub raw: Vec<Option<SuiteOutput>>,
}

struct Cell {
    keys: ReportKeys,
    spec: RunSpec,
    iat: Option<IatConfig>,
}

fn run_cells(data: &Dataset, cells: Vec<Cell>, kinds: &[InterpolationKind], exec: Exec) -> ExperimentOutput {
    let results = exec.map(&cells, |cell| run_cell(data, cell, kinds, exec));
    let mut out = ExperimentOutput::default();
    for (cell, result) in cells.into_iter().zip(results) {
        match result {
            Ok((suite, final_loss, rank_ratio)) => {
                out.reports.extend(suite.reports.iter().cloned());
                out.cells.push(CellStatus {
                    keys: cell.keys,
                    error: None,
                    final_loss,
                    rank_ratio,
                });
                out.raw.push(Some(suite));
            }
            Err(e) => {
                out.cells.push(CellStatus {
                    keys: cell.keys,
                    error: Some(e.to_string()),
                    final_loss: None,
                    rank_ratio: None,
                });
                out.raw.push(None);
            }
        }
    }
    out
}

fn run_cell(
    data: &Dataset,
    cell: &Cell,
    kinds: &[InterpolationKind],
    exec: Exec,
) -> Result<(SuiteOutput, Option<f64>, Option<f64>)> {
    let (model, trace, interp) = match &cell.iat {
        None => {
            let (m, out) = train_model(data, &cell.spec)?;
            (m, out.trace, ParamStore::new())
        }
        Some(ic) => {
            check_kind(data, cell.spec.model)?;
            let mut m = AnyModel::new(cell.spec.model, cell.spec.model_seed)?;
            let out = train_iat(&mut m, data, &cell.spec.train, ic)?;
            (m, out.trace, out.interp)
        }
    };
    let mlp = (!interp.is_empty()).then_some(&interp);
    let suite = evaluate_suite(&model, data, kinds, &cell.spec.eval, mlp, &cell.keys, exec)?;
    let rank_ratio = match cell.spec.model {
        ModelSpec::Vae(c) => match c.rank {
            Some(r) => Some(rank_ratio(&model, data, r)?),
            None => None,
        },
        ModelSpec::Gvae(_) => None,
    };
    Ok((suite, trace.last().copied(), rank_ratio))
}

/// `sigma_{r+1} / sigma_1` of the posterior means of every test sample
/// (0 when there are at most `r` singular values).
pub fn rank_ratio<M: LatentModel + ?Sized>(model: &M, data: &Dataset, r: usize) -> Result<f64> {
    let xs: Vec<&Tensor> = data.split_samples(Split::Test).into_iter().map(|s| &s.x).collect();
    let means = model.encode_means(&xs)?;
    let sv = singular_values(&means);
    Ok(match sv.get(r) {
        Some(&s) if sv[0] > 0.0 => s / sv[0],
        _ => 0.0,
    })
}

fn base_keys(setting: &str, variant: &str, budget: &str) -> ReportKeys {
    ReportKeys {
        algorithm: String::new(),
        setting: setting.into(),
        variant: variant.into(),
        budget: budget.into(),
    }
}

/// One model per latent dimension in `dims` and per mean-head rank in
/// `ranks`, everything else fixed. Rows are `D<d>` then `R<r>`.
pub fn sweep_rank_dim(
    data: &Dataset,
    base: &RunSpec,
    dims: &[usize],
    ranks: &[usize],
    kinds: &[InterpolationKind],
    exec: Exec,
) -> Result<ExperimentOutput> {
    if dims.is_empty() && ranks.is_empty() {
        return Err(Error::Config("sweep needs at least one dimension or rank".into()));
    }
    check_kind(data, base.model)?;
    let mut cells = Vec::new();
    for &d in dims {
        let model = match base.model {
            ModelSpec::Vae(c) => ModelSpec::Vae(crate::models::VaeConfig {
                latent_dim: d,
                rank: None,
                ..c
            }),
            ModelSpec::Gvae(c) => ModelSpec::Gvae(crate::models::GvaeConfig { latent_dim: d, ..c }),
        };
        cells.push(Cell {
            keys: base_keys(&format!("D{d}"), "none", "all"),
            spec: RunSpec { model, ..base.clone() },
            iat: None,
        });
    }
    for &r in ranks {
        let model = match base.model {
            ModelSpec::Vae(c) => ModelSpec::Vae(crate::models::VaeConfig { rank: Some(r), ..c }),
            ModelSpec::Gvae(_) => return Err(Error::Config("rank sweeps apply to the image model only".into())),
        };
        cells.push(Cell {
            keys: base_keys(&format!("R{r}"), "none", "all"),
            spec: RunSpec { model, ..base.clone() },
            iat: None,
        });
    }
    Ok(run_cells(data, cells, kinds, exec))
}

/// One model per IAT variant (`None` is the unsupervised baseline),
/// all evaluated with the algorithm of `iat.kind`.
pub fn run_iat_experiment(
    data: &Dataset,
    base: &RunSpec,
    variants: &[Option<IatVariant>],
    iat: &IatConfig,
    exec: Exec,
) -> Result<ExperimentOutput> {
    if variants.is_empty() {
        return Err(Error::Config("no IAT variants requested".into()));
    }
    let budget = iat.labeled_budget.map_or("all".to_owned(), |b| b.to_string());
    let cells = variants
        .iter()
        .map(|v| Cell {
            keys: base_keys("base", v.map_or("none", |v| v.as_str()), &budget),
            spec: base.clone(),
            iat: v.map(|variant| IatConfig {
                variant,
                ..iat.clone()
            }),
        })
        .collect();
    Ok(run_cells(data, cells, &[iat.kind], exec))
}

/// `mlp_decode` IAT restricted to each labeled budget in turn.
pub fn label_budget_study(
    data: &Dataset,
    base: &RunSpec,
    budgets: &[usize],
    iat: &IatConfig,
    exec: Exec,
) -> Result<ExperimentOutput> {
    if budgets.is_empty() {
        return Err(Error::Config("no labeled budgets requested".into()));
    }
    if budgets.windows(2).any(|w| w[0] > w[1]) || budgets[0] < 3 {
        return Err(Error::Config("budgets must be ascending and at least 3".into()));
    }
    let cells = budgets
        .iter()
        .map(|&b| Cell {
            keys: base_keys("base", IatVariant::MlpDecode.as_str(), &b.to_string()),
            spec: base.clone(),
            iat: Some(IatConfig {
                variant: IatVariant::MlpDecode,
                labeled_budget: Some(b),
                ..iat.clone()
            }),
        })
        .collect();
    Ok(run_cells(data, cells, &[iat.kind], exec))
}
