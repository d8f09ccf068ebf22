//! The work behind each CLI subcommand.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::compare::compare_mlp_ode;
use super::config::ExperimentConfig;
use super::ensemble::{run_ensemble, write_ensemble, EnsembleSummary};
use super::fit::fit_scaling;
use super::report::write_report;
use crate::bounds::{bound_curves, jeon_constants, lemma41_bound, sbar_etabar, theorem13_bound};
use crate::engine::{events_csv, replica_rng, run_trajectory};
use crate::error::{Error, Result};
use crate::observables::{series_csv, ObservableSet, StoppingTimeSpec};
use crate::oracle::{build_chain, expected_stopping_time, marginal_at_time, MAX_MARGINAL_MASS};
use crate::smoluchowski::{integrate, OdeState};

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// One trajectory (replica 0) at the first grid mass.
///
/// Writes `trajectory.json`, plus `series.csv` and `events.csv` when enabled.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let kernel = cfg.kernel()?;
    let n = cfg.n_grid()?[0];
    let specs = cfg.stopping_times()?;
    let obs = ObservableSet::new(&specs, cfg.series(), cfg.checkpoints(n), n)?;
    let mut rng = replica_rng(cfg.run.seed, 0, 0);
    let tr = run_trajectory(cfg.initial_state(n)?, &kernel, &cfg.stop_condition(), &mut rng, obs, cfg.events.log)?;
    let doc = json!({
        "kernel": kernel.to_string(),
        "n": n,
        "seed": cfg.run.seed,
        "t_end": tr.t_end,
        "events": tr.n_events,
        "stop": tr.stop_reason,
        "truncated": tr.truncated(),
        "particle_count": tr.final_state.particle_count(),
        "largest": tr.final_state.largest(),
        "hit_times": tr.record.hit_times,
        "checkpoints": tr.record.checkpoints,
    });
    write(&out.join("trajectory.json"), &pretty(&doc)?)?;
    if let (Some(series), Some(rows)) = (cfg.series(), &tr.record.series) {
        write(&out.join("series.csv"), &series_csv(&series, rows))?;
    }
    if let Some(ev) = &tr.events {
        write(&out.join("events.csv"), &events_csv(ev))?;
    }
    Ok(format!(
        "N={n} {kernel}: {} events, stopped ({:?}) at t={}",
        tr.n_events, tr.stop_reason, tr.t_end
    ))
}

/// Full ensemble over the grid.
pub fn ensemble(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let run = run_ensemble(cfg)?;
    write_ensemble(&run, cfg, out)?;
    let mut msg = String::new();
    for p in &run.summary.points {
        msg.push_str(&format!("N={}: {} completed, {} failed\n", p.n, p.completed, p.failed));
    }
    Ok(msg.trim_end().to_string())
}

/// Integrates the ODE; writes `ode.csv` and `ode.json`, and `compare.json`
/// when checkpoints and a grid mass are configured.
pub fn ode(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let kernel = cfg.kernel()?;
    let ode = cfg.ode()?;
    let init = OdeState::monodisperse(ode.n_max).f;
    let sol = integrate(&ode, &kernel, &init)?;
    write(&out.join("ode.csv"), &sol.to_csv(ode.n_report))?;
    let fin = sol.final_state();
    write(
        &out.join("ode.json"),
        &pretty(&json!({
            "kernel": kernel.to_string(),
            "mode": ode.mode,
            "n_max": ode.n_max,
            "t_end": fin.t,
            "sol_mass": fin.sol_mass(),
            "g_inf": fin.g_inf,
            "flux_out": fin.flux_out,
            "diagnostics": sol.diagnostics,
        }))?,
    )?;
    let mut msg = format!(
        "{kernel} {:?} n_max={}: M({})={}, t_gel~{:?}",
        ode.mode,
        ode.n_max,
        fin.t,
        fin.sol_mass(),
        sol.diagnostics.t_gel_estimate
    );
    if !cfg.observe.checkpoints.is_empty() && !cfg.run.n_grid.is_empty() {
        let rep = compare_mlp_ode(cfg)?;
        write(&out.join("compare.json"), &pretty(&rep)?)?;
        msg.push_str(&format!(
            "\nN={}: sup |sol mass deviation| = {}, sup |density deviation| = {}",
            rep.n, rep.sup_sol_mass_deviation, rep.sup_density_deviation
        ));
    }
    Ok(msg)
}

/// Every bound whose parameters are present in the `bounds` section.
pub fn bounds_report(cfg: &ExperimentConfig) -> Result<Value> {
    let b = &cfg.bounds;
    let neg = cfg.negative_part()?;
    let mut doc = serde_json::Map::new();
    if let (Some(a), Some(bb), Some(delta)) = (b.a, b.b, b.delta) {
        doc.insert("theorem13".into(), json!({"a": a, "b": bb, "delta": delta,
            "constants": theorem13_bound(a, bb, delta, neg)?}));
    }
    if let (Some(c), Some(a), Some(beta)) = (b.c, b.a, b.beta) {
        doc.insert("jeon".into(), json!({"c": c, "a": a, "beta": beta,
            "constants": jeon_constants(c, a, beta, neg)?}));
    }
    if let (Some(q), Some(big_a)) = (b.q, b.big_a) {
        doc.insert("sbar_etabar".into(), json!({"q": q, "A": big_a, "value": sbar_etabar(q, big_a)?}));
    }
    if let (Some(delta), Some(k), Some(q)) = (b.delta, b.k, b.q) {
        doc.insert("lemma41".into(), json!({"delta": delta, "k": k, "q": q,
            "value": lemma41_bound(delta, k, q)?}));
    }
    if let Some(name) = &b.curve {
        let curve = cfg.curve(name)?;
        let values: Vec<Value> = bound_curves(&curve, &b.n_grid)?
            .into_iter()
            .map(|(n, s)| json!({"n": n, "shape": s}))
            .collect();
        doc.insert("curve".into(), json!({"curve": curve, "values": values}));
    }
    if doc.is_empty() {
        return Err(Error::config("the bounds section sets no complete parameter group"));
    }
    Ok(Value::Object(doc))
}

pub fn bounds(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let text = pretty(&bounds_report(cfg)?)?;
    write(&out.join("bounds.json"), &text)?;
    Ok(text.trim_end().to_string())
}

/// Exact expected stopping times for every grid mass, and mean particle
/// density at the checkpoints for small masses.
pub fn oracle_report(cfg: &ExperimentConfig) -> Result<Value> {
    let kernel = cfg.kernel()?;
    let mut specs = cfg.stopping_times()?;
    if specs.is_empty() {
        specs.push(StoppingTimeSpec::TauTilde);
    }
    let mut points = Vec::new();
    for n in cfg.n_grid()? {
        let chain = build_chain(n, &kernel)?;
        let start = cfg.initial_state(n)?;
        let mut times = serde_json::Map::new();
        for spec in &specs {
            times.insert(spec.canonical(), json!(expected_stopping_time(&chain, &start, spec)?));
        }
        let mut checkpoints = Vec::new();
        if n <= MAX_MARGINAL_MASS {
            for &t in &cfg.observe.checkpoints {
                let p = marginal_at_time(&chain, &start, t)?;
                let k: f64 = p.iter().enumerate().map(|(i, pi)| pi * chain.parts(i).len() as f64).sum();
                checkpoints.push(json!({"t": t, "zeroth_moment": k / n as f64}));
            }
        }
        points.push(json!({
            "n": n,
            "states": chain.len(),
            "transitions": chain.transition_count(),
            "expected": times,
            "checkpoints": checkpoints,
        }));
    }
    Ok(json!({"kernel": kernel.to_string(), "points": points}))
}

pub fn oracle(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let text = pretty(&oracle_report(cfg)?)?;
    write(&out.join("oracle.json"), &text)?;
    Ok(text.trim_end().to_string())
}

/// Tables from an existing `summary.json` in `out`, refitting when the
/// `fit` section names a stopping time and curve.
pub fn report(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let path = out.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut summary: EnsembleSummary = serde_json::from_str(&text)?;
    if let (Some(st), Some(curve)) = (&cfg.fit.stopping_time, &cfg.fit.curve) {
        summary.fit = Some(fit_scaling(&summary, st, &cfg.curve(curve)?)?);
    }
    write_report(&summary, out, true)?;
    let mut msg = format!("wrote report.csv and report.dat under {}", out.display());
    if let Some(fit) = &summary.fit {
        msg.push_str(&format!(
            "\n{} vs {:?}: scale constant {}, ratio spread {:?}, monotone {}",
            fit.stopping_time, fit.curve, fit.scale_constant, fit.ratio_spread, fit.monotone
        ));
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_report_has_requested_groups() {
        let cfg = ExperimentConfig::from_toml(
            "bounds.a = 1.5\nbounds.b = 0.5\nbounds.delta = 0.5\nbounds.q = 1.5\nbounds.A = 0.1\nbounds.k = 16\n",
        )
        .unwrap();
        let v = bounds_report(&cfg).unwrap();
        assert_eq!(v["lemma41"]["value"], 2.0);
        assert_eq!(v["sbar_etabar"]["value"]["sbar"], 2.0);
        assert!(v["theorem13"]["constants"]["c_prime"].as_f64().unwrap() > 0.0);
        assert!(v.get("jeon").is_none());
        let empty = ExperimentConfig::from_toml("").unwrap();
        assert!(bounds_report(&empty).unwrap_err().is_config());
    }

    #[test]
    fn oracle_report_matches_known_means() {
        let cfg = ExperimentConfig::from_toml(
            "run.n_grid = [2, 3]\nobserve.stopping_times = [\"TauTilde\"]\nobserve.checkpoints = [1.0]\n",
        )
        .unwrap();
        let v = oracle_report(&cfg).unwrap();
        assert!((v["points"][0]["expected"]["TauTilde"].as_f64().unwrap() - 2.0).abs() < 1e-12);
        assert!((v["points"][1]["expected"]["TauTilde"].as_f64().unwrap() - 4.0).abs() < 1e-12);
        // N = 2: K(1)/N = (1 + e^{-1/2}) / 2
        let k = v["points"][0]["checkpoints"][0]["zeroth_moment"].as_f64().unwrap();
        assert!((k - (1.0 + (-0.5f64).exp()) / 2.0).abs() < 1e-12);
    }
}
