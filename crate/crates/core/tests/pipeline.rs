//! End-to-end triplet scoring against a hand-computed reference.

use latentgeo::datasets::{generate_citation_graph, generate_image_dataset, Split};
use latentgeo::eval::{evaluate_suite, evaluate_triplet, sample_eval_triplets, Interpolator, ReportKeys, SuiteConfig};
use latentgeo::exec::Exec;
use latentgeo::interp::InterpolationKind;
use latentgeo::metrics::Metric;
use latentgeo::models::{GvaeConfig, GvaeModel, LatentModel, VaeConfig, VaeModel};

#[test]
fn latent_and_pixel_scores_match_a_manual_recomputation() {
    let data = generate_image_dataset(2, 12, 16, 5, Exec::Sequential).unwrap();
    let model = VaeModel::new(
        VaeConfig {
            side: 16,
            hidden: 24,
            latent_dim: 6,
            rank: None,
            sigma_x: 1.0,
        },
        3,
    )
    .unwrap();
    let (triplets, _) = sample_eval_triplets(&data, Split::Test, 15, 8).unwrap();
    for (id, &tr) in triplets.iter().enumerate() {
        let res = evaluate_triplet(&model, &data, id, tr, &Interpolator::plain(InterpolationKind::Linear)).unwrap();
        let [a, b, c] = data.triplet_samples(&tr);
        let z1 = model.encode_map(&a.x).unwrap();
        let z2 = model.encode_map(&b.x).unwrap();
        let z3 = model.encode_map(&c.x).unwrap();
        let l = (b.t - a.t) / (c.t - a.t);
        let zi: Vec<f64> = z1.iter().zip(&z3).map(|(p, q)| (1.0 - l) * p + l * q).collect();
        let n = zi.len() as f64;
        let mse_z = zi.iter().zip(&z2).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / n;
        let dot: f64 = zi.iter().zip(&z2).map(|(p, q)| p * q).sum();
        let norms = zi.iter().map(|v| v * v).sum::<f64>().sqrt() * z2.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos = 1.0 - dot / norms;
        let xi = model.decode(&zi).unwrap();
        let mse_x = xi.data().iter().zip(b.x.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / xi.len() as f64;
        let psnr = 10.0 * (4.0 / mse_x).log10();

        let close = |got: f64, want: f64| (got - want).abs() <= 1e-12 * (1.0 + want.abs());
        assert!(close(res.get(Metric::MseZ).unwrap(), mse_z), "triplet {id} mse_z");
        assert!(close(res.get(Metric::CosdistZ).unwrap(), cos), "triplet {id} cosdist_z");
        assert!(close(res.get(Metric::MseX).unwrap(), mse_x), "triplet {id} mse_x");
        assert!(close(res.get(Metric::PsnrX).unwrap(), psnr), "triplet {id} psnr_x");
        assert_eq!(res.t, [a.t, b.t, c.t]);
    }
}

#[test]
fn graph_triplets_use_the_whole_code_and_edge_metrics() {
    let data = generate_citation_graph(14, 12, 4, 1.0).unwrap();
    let model = GvaeModel::new(
        GvaeConfig {
            nodes: 14,
            gcn_hidden: 8,
            latent_dim: 4,
        },
        6,
    )
    .unwrap();
    let (triplets, _) = sample_eval_triplets(&data, Split::Test, 5, 1).unwrap();
    for (id, &tr) in triplets.iter().enumerate() {
        let res = evaluate_triplet(&model, &data, id, tr, &Interpolator::plain(InterpolationKind::Slerp)).unwrap();
        let names: Vec<Metric> = res.values.iter().map(|v| v.0).collect();
        assert_eq!(names, [Metric::BceX, Metric::EiouX, Metric::MseZ, Metric::CosdistZ]);
        let e = res.get(Metric::EiouX).unwrap();
        assert!((0.0..=1.0).contains(&e));
        assert!(res.get(Metric::BceX).unwrap() > 0.0);
    }
}

#[test]
fn suite_means_match_the_raw_rows_in_both_modes() {
    let data = generate_image_dataset(2, 10, 16, 9, Exec::Sequential).unwrap();
    let model = VaeModel::new(
        VaeConfig {
            side: 16,
            hidden: 16,
            latent_dim: 4,
            rank: None,
            sigma_x: 1.0,
        },
        1,
    )
    .unwrap();
    let cfg = SuiteConfig {
        n_triplets: 30,
        seed: 2,
        split: Split::Test,
    };
    let kinds = InterpolationKind::ALL;
    let seq = evaluate_suite(&model, &data, &kinds, &cfg, None, &ReportKeys::default(), Exec::Sequential).unwrap();
    let par = evaluate_suite(&model, &data, &kinds, &cfg, None, &ReportKeys::default(), Exec::Parallel).unwrap();
    assert_eq!(seq.reports, par.reports);
    assert_eq!(seq.raw, par.raw);
    for report in &seq.reports {
        let rows: Vec<f64> = seq
            .raw
            .iter()
            .filter(|r| r.algorithm.as_str() == report.keys.algorithm)
            .map(|r| r.get(Metric::MseX).unwrap())
            .collect();
        assert_eq!(rows.len(), 30);
        let mean = rows.iter().sum::<f64>() / rows.len() as f64;
        assert!((report.mean(Metric::MseX).unwrap() - mean).abs() < 1e-12);
    }
}
