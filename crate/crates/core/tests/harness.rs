use gelsim::bounds::BoundCurve;
use gelsim::harness::{fit_scaling, run_ensemble, EnsembleSummary, ExperimentConfig};
use proptest::prelude::*;

fn tau_tilde_mean(family: &str, param: &str, n: u64) -> (f64, f64) {
    let cfg = ExperimentConfig::from_toml(&format!(
        "kernel.family = \"{family}\"\n{param}\nrun.n_grid = [{n}]\nrun.replicas = 100000\nrun.seed = 77\n\
         observe.stopping_times = [\"TauTilde\"]\n"
    ))
    .unwrap();
    let s = &run_ensemble(&cfg).unwrap().summary.points[0].hit_stats["TauTilde"];
    (s.mean.unwrap(), s.stderr.unwrap())
}

#[test]
fn two_monomers_coalesce_after_two_time_units() {
    // one pair at rate 1/2
    let (mean, se) = tau_tilde_mean("constant", "kernel.c = 1.0", 2);
    assert!((mean - 2.0).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn three_monomers_product_kernel() {
    // 1 + 3/2 from the two exponential stages
    let (mean, se) = tau_tilde_mean("product", "kernel.a = 1.0", 3);
    assert!((mean - 2.5).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn single_replica_is_reproducible() {
    let cfg = ExperimentConfig::from_toml(
        "kernel.family = \"mixed\"\nkernel.q = 1.5\nrun.n_grid = [500]\nrun.replicas = 1\nrun.seed = 5\n\
         observe.stopping_times = [\"Sigma\", \"SigmaLadder(k=4,s=1)\"]\n",
    )
    .unwrap();
    let a = run_ensemble(&cfg).unwrap().replicas_jsonl().unwrap();
    let b = run_ensemble(&cfg).unwrap().replicas_jsonl().unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1);
}

fn synthetic(grid: &[u64], mean: impl Fn(u64) -> f64) -> EnsembleSummary {
    let points = grid
        .iter()
        .map(|&n| {
            serde_json::json!({
                "n": n, "completed": 1, "failed": 0, "truncated": 0, "mean_events": 0.0,
                "hit_stats": {"TauTilde": {
                    "count_hit": 1, "censoring_rate": 0.0, "mean": mean(n),
                    "stderr": null, "q10": mean(n), "q50": mean(n), "q90": mean(n)
                }}
            })
        })
        .collect::<Vec<_>>();
    serde_json::from_value(serde_json::json!({
        "kernel": "Mixed(q=1.5)", "seed": 0, "replicas": 1,
        "stopping_times": ["TauTilde"], "points": points
    }))
    .unwrap()
}

#[test]
fn fabricated_means_recover_the_scale() {
    let grid = [1u64 << 8, 1 << 11, 1 << 14, 1 << 17];
    let s = synthetic(&grid, |n| {
        let l = (n as f64).ln();
        2.0 * (l.ln() / l).powf(0.5)
    });
    let fit = fit_scaling(&s, "TauTilde", &BoundCurve::Thm17 { q: 1.5 }).unwrap();
    assert!((fit.scale_constant - 2.0).abs() <= 1e-12);
    assert!(fit.rows.iter().all(|r| (r.ratio - 2.0).abs() <= 1e-12));
    assert!(fit.monotone);
}

#[test]
fn single_point_summary_is_rejected() {
    let s = synthetic(&[100], |_| 1.0);
    assert!(fit_scaling(&s, "TauTilde", &BoundCurve::Thm17 { q: 1.5 }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_rescales_exactly(lambda in 1e-3f64..1e3, seed in 0u64..1000) {
        let grid = [100u64, 1000, 10_000, 100_000];
        let base = |n: u64| 1.0 + ((n ^ seed) % 97) as f64 / 10.0;
        let curve = BoundCurve::Thm16 { q: 1.5, a: 0.1, theta: 0.1, delta: 0.5 };
        let f1 = fit_scaling(&synthetic(&grid, base), "TauTilde", &curve).unwrap();
        let f2 = fit_scaling(&synthetic(&grid, |n| lambda * base(n)), "TauTilde", &curve).unwrap();
        prop_assert!((f2.scale_constant / f1.scale_constant - lambda).abs() <= 1e-12 * lambda);
        prop_assert_eq!(f1.monotone, f2.monotone);
    }
}
