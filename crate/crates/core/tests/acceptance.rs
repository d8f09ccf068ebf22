//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass a substring to run matching criteria only.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gelsim::bounds::{a_threshold, lemma41_bound, sbar_etabar, theorem13_bound, BoundCurve, NegativePart};
use gelsim::engine::{replica_rng, run_trajectory, sample_event, StopCondition};
use gelsim::harness::{compare_mlp_ode, fit_scaling, run_ensemble, write_ensemble, ExperimentConfig};
use gelsim::observables::{tau_threshold, ObservableSet, StoppingTimeSpec};
use gelsim::oracle::{build_chain, expected_stopping_time};
use gelsim::smoluchowski::{integrate, OdeConfig, OdeMode, OdeState};
use gelsim::{ClusterState, KernelSpec, KernelTable};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;
type Alpha = fn(f64, f64) -> f64;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).expect("acceptance config parses")
}

fn c1_conservation() -> Outcome {
    let rows: Vec<Vec<f64>> = (1..=512u64)
        .map(|m| (1..=512u64).map(|n| 1.0 + ((m * n) as f64).sqrt()).collect())
        .collect();
    let kernels = [
        KernelSpec::constant(1.0).unwrap(),
        KernelSpec::additive(1.0).unwrap(),
        KernelSpec::product(0.7).unwrap(),
        KernelSpec::sum(1.5).unwrap(),
        KernelSpec::mixed(1.5).unwrap(),
        KernelSpec::table(KernelTable::new(rows).unwrap()),
    ];
    let n = 10_000u64;
    let stop = StopCondition {
        max_events: Some(1000),
        ..StopCondition::default()
    };
    for (i, kernel) in kernels.iter().enumerate() {
        let mut rng = replica_rng(1, i as u32, 0);
        let obs = ObservableSet::stopping_times(&[], n).unwrap();
        let init = ClusterState::init_monodisperse(n).unwrap();
        let tr = run_trajectory(init.clone(), kernel, &stop, &mut rng, obs, true).map_err(|e| e.to_string())?;
        let events = tr.events.unwrap();
        if events.len() != 1000 {
            return Err(format!("{kernel}: {} events", events.len()));
        }
        // replay the log and recount from scratch after every event
        let mut counts: BTreeMap<u64, u64> = BTreeMap::from([(1, n)]);
        for (k, ev) in events.iter().enumerate() {
            let particles: u64 = counts.values().sum();
            if ev.pre_particle_count != particles {
                return Err(format!("{kernel}: event {k} saw {} particles, expected {particles}", ev.pre_particle_count));
            }
            for s in [ev.m, ev.n] {
                let c = counts.get_mut(&s).ok_or(format!("{kernel}: event {k} merges absent size {s}"))?;
                *c -= 1;
                if *c == 0 {
                    counts.remove(&s);
                }
            }
            *counts.entry(ev.m + ev.n).or_insert(0) += 1;
            let mass: u64 = counts.iter().map(|(s, c)| s * c).sum();
            if mass != n || counts.values().sum::<u64>() != particles - 1 {
                return Err(format!("{kernel}: conservation broken after event {k}"));
            }
        }
        let fin: BTreeMap<u64, u64> = tr.final_state.classes().collect();
        if fin != counts || tr.final_state.total_mass() != n || tr.final_state.particle_count() != n - 1000 {
            return Err(format!("{kernel}: engine state differs from replayed log"));
        }
    }
    Ok("6 kernel families, 1000 events each from N=1e4, mass and particle count exact".into())
}

fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut pool_o, mut pool_e) = (0u64, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < 5.0 {
            pool_o += o;
            pool_e += e;
        } else {
            obs.push(o);
            exp.push(e);
        }
    }
    if pool_e > 0.0 {
        obs.push(pool_o);
        exp.push(pool_e);
    }
    if obs.len() < 2 {
        return 1.0;
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((obs.len() - 1) as f64).unwrap().cdf(stat)
}

fn c2_sampler() -> Outcome {
    let states: [&[(u64, u64)]; 5] = [
        &[(1, 2), (2, 1)],
        &[(1, 5), (2, 3), (3, 2), (5, 1)],
        &[(1, 1), (2, 1), (3, 1), (4, 1), (5, 1), (6, 1)],
        &[(1, 3), (50, 2), (400, 1)],
        &[(2, 4), (3, 4), (7, 2), (8, 1), (20, 3), (64, 2)],
    ];
    let kernels: [(KernelSpec, Alpha); 4] = [
        (KernelSpec::constant(1.0).unwrap(), |_, _| 1.0),
        (KernelSpec::product(1.0).unwrap(), |m, n| m * n),
        (KernelSpec::sum(1.5).unwrap(), |m, n| m.powf(1.5) + n.powf(1.5)),
        (KernelSpec::mixed(1.5).unwrap(), |m, n| m.powf(1.5) * n + n.powf(1.5) * m),
    ];
    let draws = 100_000u64;
    let mut worst = 1.0f64;
    for (si, profile) in states.iter().enumerate() {
        for (ki, (kernel, alpha)) in kernels.iter().enumerate() {
            let mut pairs = Vec::new();
            let mut weights = Vec::new();
            for (i, &(m, lm)) in profile.iter().enumerate() {
                for &(n, ln) in &profile[i..] {
                    let w = if m == n {
                        alpha(m as f64, m as f64) * (lm * (lm - 1)) as f64 / 2.0
                    } else {
                        alpha(m as f64, n as f64) * (lm * ln) as f64
                    };
                    if w > 0.0 {
                        pairs.push((m, n));
                        weights.push(w);
                    }
                }
            }
            let total: f64 = weights.iter().sum();
            let mut state = ClusterState::init_from_profile(profile.iter().copied()).unwrap();
            let mut rng = replica_rng(2, si as u32, ki as u32);
            let mut observed = vec![0u64; pairs.len()];
            for _ in 0..draws {
                let ev = sample_event(&mut state, kernel, &mut rng).map_err(|e| e.to_string())?;
                let j = pairs
                    .iter()
                    .position(|&p| p == (ev.m, ev.n))
                    .ok_or(format!("impossible pair ({}, {})", ev.m, ev.n))?;
                observed[j] += 1;
            }
            let expected: Vec<f64> = weights.iter().map(|w| w / total * draws as f64).collect();
            let p = chi_square_p(&observed, &expected);
            worst = worst.min(p);
            if p <= 1e-3 {
                return Err(format!("state {si}, {kernel}: p = {p:.2e}"));
            }
        }
    }
    Ok(format!("5 states x 4 kernels x 1e5 draws, smallest chi-square p = {worst:.4}"))
}

fn c3_oracle() -> Outcome {
    let kernels = [
        ("constant", "kernel.c = 1.0", KernelSpec::constant(1.0).unwrap()),
        ("product", "kernel.a = 1.0", KernelSpec::product(1.0).unwrap()),
        ("sum", "kernel.q = 1.5", KernelSpec::sum(1.5).unwrap()),
        ("mixed", "kernel.q = 1.5", KernelSpec::mixed(1.5).unwrap()),
    ];
    let mut worst = 0.0f64;
    for (i, (family, param, kernel)) in kernels.iter().enumerate() {
        let cfg = config(&format!(
            "kernel.family = \"{family}\"\n{param}\nrun.n_grid = [3, 4, 5, 6, 7, 8]\nrun.replicas = 100000\n\
             run.seed = {}\nobserve.stopping_times = [\"TauTilde\"]\n",
            30 + i
        ));
        let summary = run_ensemble(&cfg).map_err(|e| e.to_string())?.summary;
        for p in &summary.points {
            let chain = build_chain(p.n, kernel).unwrap();
            let start = ClusterState::init_monodisperse(p.n).unwrap();
            let exact = expected_stopping_time(&chain, &start, &StoppingTimeSpec::TauTilde).unwrap();
            let s = &p.hit_stats["TauTilde"];
            let z = (s.mean.unwrap() - exact).abs() / s.stderr.unwrap();
            worst = worst.max(z);
            if z > 3.0 || s.count_hit != 100_000 {
                return Err(format!("{kernel} N={}: mean {} vs exact {exact}, z = {z:.2}", p.n, s.mean.unwrap()));
            }
        }
    }
    let anchor = |kernel: KernelSpec| {
        let chain = build_chain(3, &kernel).unwrap();
        expected_stopping_time(&chain, &ClusterState::init_monodisperse(3).unwrap(), &StoppingTimeSpec::TauTilde)
            .unwrap()
    };
    let (a, b) = (anchor(KernelSpec::constant(1.0).unwrap()), anchor(KernelSpec::product(1.0).unwrap()));
    check(
        (a - 4.0).abs() < 1e-12 && (b - 2.5).abs() < 1e-12,
        format!("24 (N, kernel) cells within 3 stderr (largest |z| = {worst:.2}); anchors {a}, {b}"),
    )
}

fn c4_linear_regime() -> Outcome {
    let cfg = config(
        "kernel.family = \"constant\"\nkernel.c = 2.0\nrun.n_grid = [10000]\nrun.replicas = 100\nrun.seed = 4\n\
         observe.checkpoints = [0.5, 1.0, 2.0]\node.n_max = 512\n",
    );
    let rep = compare_mlp_ode(&cfg).map_err(|e| e.to_string())?;
    let dev = rep
        .rows
        .iter()
        .map(|r| (r.mlp_zeroth_moment - 1.0 / (1.0 + r.t)).abs())
        .fold(0.0, f64::max);
    check(dev <= 0.02, format!("sup_t |K(t)/N - 1/(1+t)| = {dev:.2e} (tolerance 0.02)"))
}

fn c5_simple_gelation() -> Outcome {
    let (b, delta) = (2.0 / 3.0, 0.5);
    let k = theorem13_bound(1.0, b, delta, NegativePart::Standard).unwrap();
    let cfg = config(&format!(
        "kernel.family = \"product\"\nkernel.a = 1.0\nrun.n_grid = [1000, 10000, 100000]\nrun.replicas = 200\n\
         run.seed = 5\nobserve.stopping_times = [\"Tau(b={b},c={},delta={delta})\"]\n",
        k.c
    ));
    let summary = run_ensemble(&cfg).map_err(|e| e.to_string())?.summary;
    let key = &summary.stopping_times[0];
    let means: Vec<f64> = summary.series_for(key).iter().map(|(_, s)| s.mean.unwrap_or(f64::NAN)).collect();
    let thresholds: Vec<u64> = summary.points.iter().map(|p| tau_threshold(p.n, b, k.c)).collect();
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    let bounded = means.iter().all(|&m| m <= k.c_prime);
    let detail = format!(
        "c = {:.5}, thresholds {thresholds:?}, means {means:.4?}, max/min = {:.3}, C0' = {:.1}",
        k.c,
        max / min,
        k.c_prime
    );
    check(min > 0.0 && max / min < 2.0 && bounded, detail)
}

fn c6_instantaneous_gelation() -> Outcome {
    let cfg = config(
        "kernel.family = \"sum\"\nkernel.q = 1.5\nrun.n_grid = [1024, 8192, 65536, 524288]\nrun.replicas = 200\n\
         run.seed = 6\nobserve.stopping_times = [\"ThatA(A=0.1,delta=0.5)\"]\n",
    );
    let summary = run_ensemble(&cfg).map_err(|e| e.to_string())?.summary;
    let key = &summary.stopping_times[0];
    let means: Vec<f64> = summary.series_for(key).iter().map(|(_, s)| s.mean.unwrap_or(f64::NAN)).collect();
    let curve = BoundCurve::Thm16 {
        q: 1.5,
        a: 0.1,
        theta: 0.1,
        delta: 0.5,
    };
    let fit = fit_scaling(&summary, key, &curve).map_err(|e| e.to_string())?;
    let thresholds: Vec<u64> = summary
        .points
        .iter()
        .map(|p| gelsim::observables::that_threshold(p.n, 0.1).unwrap())
        .collect();
    let spread_ok = fit.ratio_spread.is_some_and(|s| s < 3.0);
    check(
        fit.monotone && spread_ok,
        format!(
            "thresholds {thresholds:?}, means {means:.4?}, strictly decreasing {}, ratio spread {:?}",
            fit.monotone, fit.ratio_spread
        ),
    )
}

fn c7_complete_gelation() -> Outcome {
    let cfg = config(
        "kernel.family = \"mixed\"\nkernel.q = 1.5\nrun.n_grid = [256, 2048, 16384]\nrun.replicas = 100\n\
         run.seed = 7\nobserve.stopping_times = [\"TauTilde\"]\n",
    );
    let summary = run_ensemble(&cfg).map_err(|e| e.to_string())?.summary;
    let fit = fit_scaling(&summary, "TauTilde", &BoundCurve::Thm17 { q: 1.5 }).map_err(|e| e.to_string())?;
    let means: Vec<f64> = fit.rows.iter().map(|r| r.mean).collect();
    let spread = fit.ratio_spread.unwrap_or(f64::INFINITY);
    check(
        fit.monotone && spread < 3.0 && fit.excluded.is_empty(),
        format!(
            "means {means:.5?}, strictly decreasing {}, ratio spread {spread:.3}, scale constant {:.4}",
            fit.monotone, fit.scale_constant
        ),
    )
}

fn c8_ode() -> Outcome {
    let constant = KernelSpec::constant(2.0).unwrap();
    let mut cfg = OdeConfig::new(256, OdeMode::Classical, 2.0);
    cfg.output_times = (1..20).map(|i| i as f64 * 0.1).collect();
    let sol = integrate(&cfg, &constant, &OdeState::monodisperse(1).f).map_err(|e| e.to_string())?;
    let m0_dev = sol
        .outputs
        .iter()
        .map(|s| (s.zeroth_moment() - 1.0 / (1.0 + s.t)).abs())
        .fold(0.0, f64::max);
    let mut ledger = sol.diagnostics.max_ledger_defect;
    let mut worst_ledger_ratio = ledger / cfg.rel_tol;

    let product = KernelSpec::product(1.0).unwrap();
    let mut points = Vec::new();
    for e in 8..=12 {
        let n_max = 1usize << e;
        let cfg = OdeConfig::new(n_max, OdeMode::Classical, 1.5);
        let sol = integrate(&cfg, &product, &[1.0]).map_err(|e| e.to_string())?;
        let t = sol.diagnostics.t_gel_estimate.ok_or(format!("no gel time at n_max={n_max}"))?;
        points.push(((n_max as f64).powf(-0.5), t));
        ledger = ledger.max(sol.diagnostics.max_ledger_defect);
        worst_ledger_ratio = worst_ledger_ratio.max(sol.diagnostics.max_ledger_defect / cfg.rel_tol);
    }
    // least squares T = T_inf + s x with x = n_max^{-1/2}
    let k = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / k, sy / k);
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let t_inf = my - sxy / sxx * mx;
    let ts: Vec<f64> = points.iter().map(|p| p.1).collect();
    check(
        m0_dev <= 1e-6 && (t_inf - 1.0).abs() <= 0.05 && worst_ledger_ratio <= 100.0,
        format!(
            "M0 deviation {m0_dev:.2e}; T_gel(n_max=2^8..2^12) = {ts:.4?} -> {t_inf:.4}; \
             max ledger defect {ledger:.2e} = {worst_ledger_ratio:.1} rel_tol"
        ),
    )
}

fn c9_flory() -> Outcome {
    let times: Vec<String> = (12..=30).map(|i| format!("{}", i as f64 / 10.0)).collect();
    let cfg = config(&format!(
        "kernel.family = \"product\"\nkernel.a = 1.0\nrun.n_grid = [10000]\nrun.replicas = 100\nrun.seed = 9\n\
         observe.checkpoints = [{}]\node.mode = \"flory\"\node.n_max = 2048\n",
        times.join(", ")
    ));
    let rep = compare_mlp_ode(&cfg).map_err(|e| e.to_string())?;
    let first = &rep.rows[0];
    let last = rep.rows.last().unwrap();
    check(
        rep.sup_sol_mass_deviation <= 0.05,
        format!(
            "cutoff {}, sup_t |sol mass - M_Flory| = {:.4} over t in [1.2, 3] (M_Flory {:.4} -> {:.4})",
            rep.sol_cutoff, rep.sup_sol_mass_deviation, first.ode_sol_mass, last.ode_sol_mass
        ),
    )
}

fn c10_bounds() -> Outcome {
    let se = sbar_etabar(1.5, 0.1).map_err(|e| e.to_string())?;
    if se.sbar != 2.0 {
        return Err(format!("sbar(1.5, 0.1) = {}", se.sbar));
    }
    let mut checked = 0;
    for i in 0..10 {
        let q = 1.05 + 0.09 * i as f64;
        for j in 1..=10 {
            let a = a_threshold(q) * j as f64 / 11.0;
            let v = sbar_etabar(q, a).map_err(|e| e.to_string())?;
            if !(v.admissible && v.sbar > 2.0 - q && v.etabar > 0.0) {
                return Err(format!("q={q}, A={a}: {v:?}"));
            }
            checked += 1;
        }
    }
    let lem = lemma41_bound(0.5, 16, 1.5).map_err(|e| e.to_string())?;
    check(
        lem == 2.0,
        format!("sbar = 2 exactly, etabar = {}; {checked} admissible points; 4/(delta k^(q-1)) = {lem}", se.etabar),
    )
}

fn c11_determinism() -> Outcome {
    let text = "kernel.family = \"sum\"\nkernel.q = 1.5\nrun.n_grid = [64, 256, 1024]\nrun.replicas = 40\n\
                run.seed = 11\nobserve.stopping_times = [\"Sigma\", \"Tk(k=8,delta=0.5)\", \"TauTilde\"]\n";
    let mut bytes = Vec::new();
    for threads in [1, 4] {
        let mut cfg = config(text);
        cfg.run.threads = threads;
        let dir = tempfile::tempdir().unwrap();
        let run = run_ensemble(&cfg).map_err(|e| e.to_string())?;
        write_ensemble(&run, &cfg, dir.path()).map_err(|e| e.to_string())?;
        bytes.push((
            std::fs::read(dir.path().join("summary.json")).unwrap(),
            std::fs::read(dir.path().join("replicas.jsonl")).unwrap(),
        ));
    }
    check(
        bytes[0] == bytes[1],
        format!("summary.json ({} bytes) and replicas.jsonl identical across runs", bytes[0].0.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 conservation", c1_conservation, Duration::from_secs(10)),
        ("2 sampler exactness", c2_sampler, Duration::from_secs(30)),
        ("3 oracle equivalence", c3_oracle, Duration::from_secs(300)),
        ("4 linear-growth regime", c4_linear_regime, Duration::from_secs(300)),
        ("5 simple gelation", c5_simple_gelation, Duration::from_secs(900)),
        ("6 instantaneous gelation", c6_instantaneous_gelation, Duration::from_secs(1200)),
        ("7 complete gelation", c7_complete_gelation, Duration::from_secs(1200)),
        ("8 ODE correctness", c8_ode, Duration::from_secs(300)),
        ("9 Flory consistency", c9_flory, Duration::from_secs(600)),
        ("10 bounds", c10_bounds, Duration::from_secs(1)),
        ("11 determinism", c11_determinism, Duration::from_secs(60)),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > budget => Err(format!("{d}; over the {budget:?} budget")),
            o => o,
        };
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d} [{:.1} s]", elapsed.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{:.1} s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
