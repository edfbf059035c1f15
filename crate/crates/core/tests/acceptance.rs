//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary is always printed.
//! Select criteria by number, e.g. `cargo test --test acceptance -- 1 4`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use statrs::distribution::{ContinuousCDF, Normal};

use latentgeo::datasets::{
    generate_citation_graph, generate_image_dataset, snapshots_from_edges, split, Edge, Dataset, DatasetKind, Sample, Sequence, Split, SplitSpec,
};
use latentgeo::error::Result;
use latentgeo::eval::{
    evaluate_suite, evaluate_triplet, rank_ratio, run_iat_experiment, sample_eval_triplets, train_model, Interpolator,
    ReportKeys, RunSpec, SuiteConfig,
};
use latentgeo::exec::Exec;
use latentgeo::iat::{iat_loss_graph, IatConfig, IatVariant, InterpMlp, TripletBatch};
use latentgeo::interp::{interpolate, InterpolationKind, InterpolationWeight};
use latentgeo::metrics::{e_iou, kl_gaussian_std, kl_monte_carlo, Metric, EIOU_THRESHOLD};
use latentgeo::models::{
    elbo_graph, noise, GvaeConfig, GvaeModel, LatentModel, ModelSpec, TrainConfig, VaeConfig, VaeModel,
};
use latentgeo::ndkernel::{
    adaptive_finite_difference_gradient, max_relative_error, Graph, NodeId, ParamStore, Tensor, DEFAULT_FD_EPS,
};
use latentgeo::rng;

/// Training settings shared by the image criteria.
const IMAGE_LR: f64 = 5e-4;
const IMAGE_BATCH: usize = 40;
const IMAGE_ITERS: usize = 4000;
const GRAPH_BATCH: usize = 10;
const GRAPH_ITERS: usize = 3000;
/// The longest graph schedule tried; the loss is flat well before the end.
const GRAPH_LONG_ITERS: usize = 12_000;
const SEEDS: [u64; 3] = [1, 2, 3];
/// Finite-difference steps from 1e-4 up to 3.2e-3.
const FD_LEVELS: usize = 6;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn rotation_set() -> Dataset {
    generate_image_dataset(20, 60, 32, 1, Exec::Sequential).expect("image set")
}

fn citation_set() -> Dataset {
    generate_citation_graph(120, 50, 1, 1.0).expect("graph set")
}

fn eval_cfg(seed: u64) -> SuiteConfig {
    SuiteConfig {
        n_triplets: 500,
        seed,
        split: Split::Test,
    }
}

fn image_spec(vae: VaeConfig, iters: usize, seed: u64) -> RunSpec {
    RunSpec {
        model: ModelSpec::Vae(vae),
        model_seed: seed,
        train: TrainConfig {
            lr: IMAGE_LR,
            batch: IMAGE_BATCH,
            iters,
            seed,
        },
        eval: eval_cfg(seed),
    }
}

fn graph_spec(seed: u64, iters: usize) -> RunSpec {
    RunSpec {
        model: ModelSpec::Gvae(GvaeConfig::default()),
        model_seed: seed,
        train: TrainConfig {
            lr: latentgeo::cli::GRAPH_LR,
            batch: GRAPH_BATCH,
            iters,
            seed,
        },
        eval: eval_cfg(seed),
    }
}

fn c1_interpolation_units() -> Verdict {
    let start = Instant::now();
    let mut r = rng::seeded(101);
    let (mut worst_end, mut worst_norm) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let z1 = rng::normals(&mut r, 16);
        let z2 = rng::normals(&mut r, 16);
        for kind in InterpolationKind::ALL {
            for (l, target) in [(0.0, &z1), (1.0, &z2)] {
                let out = interpolate(kind, &z1, &z2, InterpolationWeight::new(l).unwrap()).unwrap();
                for (a, b) in out.iter().zip(target.iter()) {
                    worst_end = worst_end.max((a - b).abs());
                }
            }
        }
        let n1 = z1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n2 = z2.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z2s: Vec<f64> = z2.iter().map(|v| v * n1 / n2).collect();
        let l = rand::Rng::random_range(&mut r, 0.0..=1.0);
        let out = interpolate(InterpolationKind::Slerp, &z1, &z2s, InterpolationWeight::new(l).unwrap()).unwrap();
        let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_norm = worst_norm.max((n - n1).abs());
    }
    let t = start.elapsed();
    verdict(
        worst_end <= 1e-9 && worst_norm <= 1e-9 && within(t, 5),
        format!("max endpoint error {worst_end:.2e}, max slerp norm drift {worst_norm:.2e}, {t:.2?}"),
    )
}

fn ks_against(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn c2_distribution_matching() -> Verdict {
    let start = Instant::now();
    let std = Normal::new(0.0, 1.0).unwrap();
    let (d, draws) = (8, 20_000);
    let mut r = rng::seeded(1);
    let mut worst_ks = 0.0f64;
    for l in [0.25, 0.5, 0.75] {
        let w = InterpolationWeight::new(l).unwrap();
        let mut comps = vec![Vec::with_capacity(draws); d];
        for _ in 0..draws {
            let a = rng::normals(&mut r, d);
            let b = rng::normals(&mut r, d);
            for (k, v) in interpolate(InterpolationKind::Norm, &a, &b, w).unwrap().into_iter().enumerate() {
                comps[k].push(v);
            }
        }
        for c in comps {
            worst_ks = worst_ks.max(ks_against(c, |x| std.cdf(x)));
        }
    }
    let half = InterpolationWeight::new(0.5).unwrap();
    let mut comps = vec![Vec::with_capacity(draws); d];
    for _ in 0..draws {
        let a = rng::normals(&mut r, d);
        let b = rng::normals(&mut r, d);
        for (k, v) in interpolate(InterpolationKind::Linear, &a, &b, half).unwrap().into_iter().enumerate() {
            comps[k].push(v);
        }
    }
    let worst_var = comps
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64;
            (var - 0.5).abs()
        })
        .fold(0.0, f64::max);
    let t = start.elapsed();
    verdict(
        worst_ks < 0.015 && worst_var <= 0.02 && within(t, 30),
        format!("max KS {worst_ks:.4}, max |lerp var - 0.5| {worst_var:.4}, {t:.2?}"),
    )
}

fn gradient_error(params: &ParamStore, run: impl Fn(&ParamStore) -> Result<(Graph, NodeId)>) -> (f64, String) {
    let (g, loss) = run(params).expect("forward");
    let analytic = g.backward(loss).expect("backward");
    let numeric = adaptive_finite_difference_gradient(
        |p| run(p).map(|(g, l)| g.value(l).item().unwrap()),
        params,
        DEFAULT_FD_EPS,
        FD_LEVELS,
    )
    .expect("finite differences");
    max_relative_error(params, &analytic, &numeric, 1e-6)
}

fn c3_gradients() -> Verdict {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut note = |label: &str, e: (f64, String)| {
        if e.0 > worst.0 || e.0.is_nan() {
            worst = (e.0, format!("{label} at {}", e.1));
        }
    };

    // 8x8 instances: every other pixel of the smallest generated images.
    let mut images = generate_image_dataset(1, 12, 16, 4, Exec::Sequential).unwrap();
    for s in images.sequences.iter_mut().flat_map(|s| s.samples.iter_mut()) {
        let v: Vec<f64> = (0..64).map(|k| s.x.data()[(k / 8) * 32 + (k % 8) * 2]).collect();
        s.x = Tensor::matrix(8, 8, v).unwrap();
    }
    let vae = VaeModel::new(
        VaeConfig {
            side: 8,
            hidden: 8,
            latent_dim: 4,
            rank: None,
            sigma_x: 1.0,
        },
        5,
    )
    .unwrap();
    let xs: Vec<&Tensor> = images.sequences[0].samples[..3].iter().map(|s| &s.x).collect();
    let eps = noise(3, 4, 6);
    note(
        "image ELBO",
        gradient_error(&vae.params, |p| {
            let mut g = Graph::for_store(p);
            let l = elbo_graph(&vae, &mut g, p, &xs, &eps)?.loss;
            Ok((g, l))
        }),
    );

    let graphs = six_node_graph();
    let gvae = GvaeModel::new(
        GvaeConfig {
            nodes: 6,
            gcn_hidden: 5,
            latent_dim: 4,
        },
        7,
    )
    .unwrap();
    let adj: Vec<&Tensor> = graphs.sequences[0].samples[2..5].iter().map(|s| &s.x).collect();
    let eps = noise(3, 24, 8);
    note(
        "graph ELBO",
        gradient_error(&gvae.params, |p| {
            let mut g = Graph::for_store(p);
            let l = elbo_graph(&gvae, &mut g, p, &adj, &eps)?.loss;
            Ok((g, l))
        }),
    );

    let img_triplets = sample_eval_triplets(&images, Split::Train, 2, 9).unwrap().0;
    let img_batch = TripletBatch::from_dataset(&images, &img_triplets).unwrap();
    let graph_triplets = latentgeo::iat::sample_triplet_batch(&graphs, Split::Train, 2, 9, None).unwrap();
    let graph_batch = TripletBatch::from_dataset(&graphs, &graph_triplets).unwrap();
    for variant in IatVariant::ALL {
        let mut p = vae.params.clone();
        p.extend_prefixed("", &InterpMlp::init(4, 10));
        note(
            &format!("image {variant}"),
            gradient_error(&p, |p| {
                let mut g = Graph::for_store(p);
                let l = iat_loss_graph(&vae, &mut g, p, &img_batch, variant, InterpolationKind::Norm)?;
                Ok((g, l))
            }),
        );
        let mut p = gvae.params.clone();
        p.extend_prefixed("", &InterpMlp::init(4, 11));
        note(
            &format!("graph {variant}"),
            gradient_error(&p, |p| {
                let mut g = Graph::for_store(p);
                let l = iat_loss_graph(&gvae, &mut g, p, &graph_batch, variant, InterpolationKind::Slerp)?;
                Ok((g, l))
            }),
        );
    }
    let t = start.elapsed();
    verdict(
        worst.0 < 1e-4 && within(t, 120),
        format!("max relative error {:.2e} ({}), {t:.2?}", worst.0, worst.1),
    )
}

/// Node `k` appears at time `k` and cites the core plus its predecessor.
fn six_node_graph() -> Dataset {
    let mut edges = Vec::new();
    for src in 1..6 {
        edges.push(Edge { src, dst: 0, t_birth: src as f64 });
        if src > 1 {
            edges.push(Edge { src, dst: src - 1, t_birth: src as f64 });
        }
    }
    let samples = snapshots_from_edges(6, 6, &edges)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, x)| Sample {
            t: (i + 1) as f64,
            x,
            split: Split::Train,
        })
        .collect();
    Dataset {
        kind: DatasetKind::Graph,
        master_seed: 0,
        sequences: vec![Sequence {
            id: 0,
            style_seed: 0,
            samples,
        }],
        graph: None,
    }
}

fn c4_kl_oracle() -> Verdict {
    let mut r = rng::seeded(404);
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let mu = rng::normals(&mut r, 4);
        let logvar: Vec<f64> = rng::normals(&mut r, 4).into_iter().map(|v| 0.6 * v).collect();
        let exact = kl_gaussian_std(&mu, &logvar);
        let (est, se) = kl_monte_carlo(&mu, &logvar, 1_000_000, 1000 + case).unwrap();
        worst = worst.max((est - exact).abs() / se);
    }
    verdict(worst < 3.0, format!("max |MC - closed form| = {worst:.2} standard errors over 20 pairs"))
}

fn c5_rank_bottleneck() -> Verdict {
    let data = rotation_set();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [2, 8, 32] {
        let start = Instant::now();
        let vae = VaeConfig {
            latent_dim: 64,
            rank: Some(r),
            ..VaeConfig::default()
        };
        let (model, _) = train_model(&data, &image_spec(vae, 300, 5)).unwrap();
        let ratio = rank_ratio(&model, &data, r).unwrap();
        let t = start.elapsed();
        pass &= ratio < 1e-9 && within(t, 60);
        parts.push(format!("R{r}: {ratio:.1e} ({t:.1?})"));
    }
    verdict(pass, format!("sigma_(R+1)/sigma_1 at D=64: {}", parts.join(", ")))
}

fn c6_training_sanity() -> Verdict {
    let start = Instant::now();
    let (_, img) = train_model(&rotation_set(), &image_spec(VaeConfig::default(), IMAGE_ITERS, 1)).unwrap();
    let (ih, it) = img.head_tail_means(0.1).unwrap();
    let (_, gr) = train_model(&citation_set(), &graph_spec(1, GRAPH_ITERS)).unwrap();
    let (gh, gt) = gr.head_tail_means(0.1).unwrap();
    let t = start.elapsed();
    verdict(
        it < ih && gt < gh && within(t, 15 * 60),
        format!("image loss {ih:.2} -> {it:.2}, graph loss {gh:.2} -> {gt:.2}, {t:.1?}"),
    )
}

fn c7_iat_direction() -> Verdict {
    let start = Instant::now();
    let data = rotation_set();
    let (mut base, mut iat) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let spec = image_spec(VaeConfig::default(), IMAGE_ITERS, seed);
        let variants = [None, Some(IatVariant::MlpDecode)];
        let out = run_iat_experiment(&data, &spec, &variants, &iat_config(InterpolationKind::Norm, 1.0), Exec::Sequential).unwrap();
        let [none, mlp] = [0, 1].map(|k| &out.reports[k]);
        assert_eq!((none.keys.variant.as_str(), mlp.keys.variant.as_str()), ("none", "mlp_decode"));
        base.push(none.mean(Metric::MseX).unwrap());
        iat.push(mlp.mean(Metric::MseX).unwrap());
    }
    let (mb, mi) = (median(base.clone()), median(iat.clone()));
    let reduction = 1.0 - mi / mb;
    let t = start.elapsed();
    verdict(
        reduction >= 0.2 && within(t, 45 * 60),
        format!(
            "median mse_x {mb:.4} -> {mi:.4} ({:.1}% lower; per seed {base:.4?} -> {iat:.4?}), {t:.1?}",
            100.0 * reduction
        ),
    )
}

fn iat_config(kind: InterpolationKind, lambda: f64) -> IatConfig {
    IatConfig {
        variant: IatVariant::MlpDecode,
        kind,
        lambda_iat: lambda,
        triplet_batch: 20,
        labeled_budget: None,
        pretrain_iters: 0,
    }
}

fn c8_graph_floor() -> Verdict {
    let start = Instant::now();
    let data = citation_set();
    let (mut recon, mut inter) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let (model, _) = train_model(&data, &graph_spec(seed, GRAPH_LONG_ITERS)).unwrap();
        let observed: Vec<f64> = data
            .split_samples(Split::Test)
            .iter()
            .map(|s| {
                let z = model.encode_map(&s.x).unwrap();
                e_iou(&model.decode(&z).unwrap(), &s.x, EIOU_THRESHOLD).unwrap()
            })
            .collect();
        recon.push(observed.iter().sum::<f64>() / observed.len() as f64);
        let suite = evaluate_suite(
            &model,
            &data,
            &[InterpolationKind::Slerp],
            &eval_cfg(seed),
            None,
            &ReportKeys::default(),
            Exec::Sequential,
        )
        .unwrap();
        inter.push(suite.reports[0].mean(Metric::EiouX).unwrap());
    }
    let (mr, mi) = (median(recon.clone()), median(inter.clone()));
    let t = start.elapsed();
    verdict(
        mr >= 0.7 && mi >= 0.5,
        format!("median eIoU reconstruction {mr:.3} {recon:.3?}, interpolated {mi:.3} {inter:.3?}, {t:.1?}"),
    )
}

fn cli(args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_latentgeo"))
        .env_remove("LATENTGEO_SEED")
        .args(["--jobs", "1"])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn only_child(dir: &Path) -> PathBuf {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(v.len(), 1, "{v:?}");
    v.pop().unwrap()
}

/// Every file under `dir` except the recorded configuration.
fn outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run_config.json" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c9_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_str().unwrap().to_owned();
    let img = p("img");
    let graph = p("graph");
    let small_model = ["--latent-dim", "4", "--hidden", "16", "--batch", "8", "--triplet-batch", "4"];
    let result = (|| -> std::result::Result<Vec<String>, String> {
        cli(&["gen-data", "--kind", "image", "--out", &img, "--objects", "2", "--angles", "14", "--size", "16", "--data-seed", "3"])?;
        cli(&["gen-data", "--kind", "graph", "--out", &graph, "--nodes", "16", "--stamps", "12", "--data-seed", "3"])?;
        let mut commands: Vec<(String, Vec<String>)> = Vec::new();
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut train = own(&["train", "--data", &img, "--iters", "20"]);
        train.extend(own(&small_model));
        commands.push(("train".into(), train));
        let mut iat = own(&["iat", "--data", &img, "--iters", "20", "--variant", "mlp_decode"]);
        iat.extend(own(&small_model));
        commands.push(("iat".into(), iat));
        commands.push((
            "train-graph".into(),
            own(&["train", "--data", &graph, "--iters", "10", "--latent-dim", "4", "--gcn-hidden", "4", "--batch", "3"]),
        ));
        let mut sweep = own(&["sweep", "--data", &img, "--iters", "10", "--dims", "4,2", "--ranks", "2", "--triplets", "30"]);
        sweep.extend(own(&["--hidden", "16", "--batch", "8"]));
        commands.push(("sweep".into(), sweep));
        let mut table = own(&["sweep", "--data", &img, "--iters", "10", "--variants", "none,latent,mlp_decode", "--triplets", "30"]);
        table.extend(own(&small_model));
        commands.push(("sweep-iat".into(), table));
        let mut study = own(&["label-study", "--data", &img, "--iters", "10", "--budgets", "3,5", "--triplets", "30"]);
        study.extend(own(&small_model));
        commands.push(("label-study".into(), study));

        let mut checked = Vec::new();
        for (name, args) in &commands {
            let first = p(&format!("{name}-1"));
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.extend(["--out", &first]);
            cli(&a)?;
            let run = only_child(Path::new(&first));
            checked.push((name.clone(), run));
        }
        // Evaluation commands need a checkpoint from the first training run.
        let ck = checked[0].1.join("checkpoint.lgck");
        let gck = checked[2].1.join("checkpoint.lgck");
        for (name, args) in [
            ("eval", vec!["eval", "--checkpoint", ck.to_str().unwrap(), "--data", &img, "--triplets", "40"]),
            ("compare", vec!["compare", "--checkpoint", ck.to_str().unwrap(), "--data", &img, "--triplets", "40"]),
            ("compare-graph", vec!["compare", "--checkpoint", gck.to_str().unwrap(), "--data", &graph, "--triplets", "20"]),
        ] {
            let first = p(&format!("{name}-1"));
            let mut a = args.clone();
            a.extend(["--out", &first]);
            cli(&a)?;
            checked.push((name.to_owned(), only_child(Path::new(&first))));
        }
        let report = checked[checked.len() - 2].1.join("report.json");
        let rep_out = p("report-1");
        cli(&["report", "--inputs", report.to_str().unwrap(), "--out", &rep_out])?;
        checked.push(("report".into(), only_child(Path::new(&rep_out))));

        let mut failures = Vec::new();
        for (name, run) in &checked {
            let again = p(&format!("{name}-2"));
            let cfg = run.join("run_config.json");
            let cmd = name.split('-').next().unwrap();
            let cmd = if name == "label-study" { "label-study" } else { cmd };
            cli(&[cmd, "--config", cfg.to_str().unwrap(), "--out", &again])?;
            let rerun = only_child(Path::new(&again));
            let (a, b) = (outputs(run), outputs(&rerun));
            if a.is_empty() || a != b {
                failures.push(name.clone());
            }
        }
        // gen-data reruns from the file written next to the data.
        for dir in [&img, &graph] {
            let copy = format!("{dir}-again");
            let cfg = Path::new(dir).join("run_config.json");
            cli(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", &copy])?;
            if outputs(Path::new(dir)) != outputs(Path::new(&copy)) {
                failures.push(format!("gen-data {dir}"));
            }
        }
        Ok(failures)
    })();
    match result {
        Ok(failures) if failures.is_empty() => verdict(true, "12 command reruns from run_config.json are byte-identical"),
        Ok(failures) => verdict(false, format!("outputs differ for {failures:?}")),
        Err(e) => verdict(false, format!("command failed: {e}")),
    }
}

/// Images `x_t = t a + b`, encoder `z = t u`, decoder `x = (u . z / |u|^2) a + b`.
struct LinearFixture {
    side: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    u: Vec<f64>,
    params: ParamStore,
}

impl LinearFixture {
    fn new(side: usize, dim: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let px = side * side;
        let a = rng::normals(&mut r, px).into_iter().map(|v| 0.002 * v).collect();
        let b = rng::normals(&mut r, px).into_iter().map(|v| 0.2 * v).collect();
        let u = rng::normals(&mut r, dim);
        Self {
            side,
            a,
            b,
            u,
            params: ParamStore::new(),
        }
    }

    fn image(&self, t: f64) -> Tensor {
        let v = self.a.iter().zip(&self.b).map(|(a, b)| t * a + b).collect();
        Tensor::matrix(self.side, self.side, v).unwrap()
    }

    fn sq(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum()
    }
}

impl LatentModel for LinearFixture {
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn latent_len(&self) -> usize {
        self.u.len()
    }
    fn latent_block(&self) -> usize {
        self.u.len()
    }

    fn encode_graph(&self, g: &mut Graph, _p: &ParamStore, batch: &[&Tensor]) -> Result<(NodeId, NodeId)> {
        let px = self.a.len();
        let rows: Vec<f64> = batch.iter().flat_map(|x| x.data().to_vec()).collect();
        let x = g.input(Tensor::matrix(batch.len(), px, rows)?);
        let na = Self::sq(&self.a);
        let proj = g.input(Tensor::matrix(px, 1, self.a.iter().map(|v| v / na).collect())?);
        let t = g.matmul(x, proj)?;
        let offset = self.a.iter().zip(&self.b).map(|(a, b)| a * b).sum::<f64>() / na;
        let t = g.add_scalar(t, -offset)?;
        let u = g.input(Tensor::matrix(1, self.u.len(), self.u.clone())?);
        let mu = g.matmul(t, u)?;
        let lv = g.constant(&[batch.len(), self.u.len()], 0.0);
        Ok((mu, lv))
    }

    fn nll_graph(&self, g: &mut Graph, _p: &ParamStore, z: NodeId, targets: &[&Tensor]) -> Result<NodeId> {
        let n = targets.len();
        let nu = Self::sq(&self.u);
        let back = g.input(Tensor::matrix(self.u.len(), 1, self.u.iter().map(|v| v / nu).collect())?);
        let t = g.matmul(z, back)?;
        let a = g.input(Tensor::matrix(1, self.a.len(), self.a.clone())?);
        let ta = g.matmul(t, a)?;
        let b = g.input(Tensor::vector(self.b.clone()));
        let out = g.add_row_bias(ta, b)?;
        let rows: Vec<f64> = targets.iter().flat_map(|x| x.data().to_vec()).collect();
        let x = g.input(Tensor::matrix(n, self.a.len(), rows)?);
        let d = g.sub(out, x)?;
        let d = g.square(d)?;
        let s = g.sum(d)?;
        Ok(g.scale(s, 0.5)?)
    }

    fn decode(&self, z: &[f64]) -> Result<Tensor> {
        let t = z.iter().zip(&self.u).map(|(z, u)| z * u).sum::<f64>() / Self::sq(&self.u);
        Ok(self.image(t))
    }
}

fn c10_fixture_oracle() -> Verdict {
    let model = LinearFixture::new(16, 8, 1010);
    let angles: Vec<f64> = (0..40).map(|k| k as f64 * 4.5).collect();
    let splits = split(angles.len(), SplitSpec::default_for(angles.len()), 7).unwrap();
    let samples = angles
        .iter()
        .zip(&splits)
        .map(|(&t, &s)| Sample {
            t,
            x: model.image(t),
            split: s,
        })
        .collect();
    let data = Dataset {
        kind: DatasetKind::Image,
        master_seed: 0,
        sequences: vec![Sequence {
            id: 0,
            style_seed: 0,
            samples,
        }],
        graph: None,
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    for sp in [Split::Train, Split::Val, Split::Test] {
        for (id, tr) in data.all_triplets(sp).into_iter().enumerate() {
            let res = evaluate_triplet(&model, &data, id, tr, &Interpolator::plain(InterpolationKind::Linear)).unwrap();
            worst = worst.max(res.get(Metric::MseX).unwrap());
            count += 1;
        }
    }
    verdict(worst < 1e-6, format!("max mse_x {worst:.2e} over {count} triplets"))
}

type Criterion = (usize, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 10] = [
    (1, "interpolation unit suite", c1_interpolation_units),
    (2, "distribution matching", c2_distribution_matching),
    (3, "gradient correctness", c3_gradients),
    (4, "KL oracle", c4_kl_oracle),
    (5, "rank bottleneck", c5_rank_bottleneck),
    (6, "training sanity", c6_training_sanity),
    (7, "IAT directional check", c7_iat_direction),
    (8, "graph reconstruction floor", c8_graph_floor),
    (9, "determinism", c9_determinism),
    (10, "constructed-fixture oracle", c10_fixture_oracle),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    // `cargo test -- --list` and similar harness flags: nothing to enumerate lazily.
    if std::env::args().any(|a| a == "--list") {
        for (n, name, _) in CRITERIA {
            println!("criterion_{n}: test  ({name})");
        }
        return;
    }
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {n:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
}
