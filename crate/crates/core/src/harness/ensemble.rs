//! Replica ensembles over a grid of total masses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::fit::{fit_scaling, FitResult};
use crate::engine::{events_csv, replica_rng, run_trajectory, EventRecord, StopReason};
use crate::error::{Error, Result};
use crate::observables::{series_csv, CheckpointRow, HitTime, ObservableSet, SeriesRow};

/// Summary statistics of one stopping time at one total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitStats {
    pub count_hit: u32,
    /// Fraction of completed replicas that ended before the hit.
    pub censoring_rate: f64,
    /// Mean over hit replicas only.
    pub mean: Option<f64>,
    /// Sample standard deviation over `sqrt(count_hit)`.
    pub stderr: Option<f64>,
    pub q10: Option<f64>,
    pub q50: Option<f64>,
    pub q90: Option<f64>,
}

/// Replica averages at one checkpoint time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMean {
    pub t: f64,
    pub samples: u32,
    /// Mean of `K(t) / N`.
    pub zeroth_moment: f64,
    pub sol_mass: f64,
    /// Mean of `L_n(t) / N`, `n = 1..`.
    pub densities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: u64,
    pub completed: u32,
    pub failed: u32,
    pub truncated: u32,
    pub mean_events: f64,
    pub hit_stats: BTreeMap<String, HitStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<CheckpointMean>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub kernel: String,
    pub seed: u64,
    pub replicas: u32,
    pub stopping_times: Vec<String>,
    pub points: Vec<GridPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
}

impl EnsembleSummary {
    pub fn point(&self, n: u64) -> Option<&GridPoint> {
        self.points.iter().find(|p| p.n == n)
    }

    /// `(N, stats)` for one stopping-time key across the grid.
    pub fn series_for(&self, key: &str) -> Vec<(u64, &HitStats)> {
        self.points
            .iter()
            .filter_map(|p| p.hit_stats.get(key).map(|s| (p.n, s)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per `(N, stopping time)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,stopping_time,count_hit,censoring_rate,mean,stderr,q10,q50,q90\n");
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for p in &self.points {
            for (key, s) in &p.hit_stats {
                let _ = writeln!(
                    out,
                    "{},\"{}\",{},{},{},{},{},{},{}",
                    p.n,
                    key,
                    s.count_hit,
                    s.censoring_rate,
                    opt(s.mean),
                    opt(s.stderr),
                    opt(s.q10),
                    opt(s.q50),
                    opt(s.q90)
                );
            }
        }
        out
    }
}

/// What one replica produced.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicaRecord {
    pub n: u64,
    pub replica: u32,
    pub t_end: f64,
    pub events: u64,
    pub stop: StopReason,
    pub hit_times: BTreeMap<String, HitTime>,
    #[serde(skip)]
    pub checkpoints: Vec<CheckpointRow>,
    #[serde(skip)]
    pub series: Option<Vec<SeriesRow>>,
    #[serde(skip)]
    pub event_log: Option<Vec<EventRecord>>,
}

#[derive(Debug, Clone)]
pub struct ReplicaOutcome {
    pub n: u64,
    pub replica: u32,
    pub result: std::result::Result<ReplicaRecord, String>,
}

impl ReplicaOutcome {
    fn json_line(&self) -> Result<String> {
        Ok(match &self.result {
            Ok(rec) => serde_json::to_string(rec)?,
            Err(e) => serde_json::to_string(&serde_json::json!({
                "n": self.n,
                "replica": self.replica,
                "error": e,
            }))?,
        })
    }
}

pub struct EnsembleRun {
    pub summary: EnsembleSummary,
    pub outcomes: Vec<ReplicaOutcome>,
}

impl EnsembleRun {
    /// One JSON object per replica, in grid then replica order.
    pub fn replicas_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for o in &self.outcomes {
            out.push_str(&o.json_line()?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Statistics over the hit times; `completed` counts replicas that ran.
pub fn hit_stats(times: &[f64], completed: u32) -> HitStats {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let mean = (k > 0).then(|| sorted.iter().sum::<f64>() / k as f64);
    let stderr = match (mean, k) {
        (Some(m), k) if k >= 2 => {
            let var = sorted.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
            Some((var / k as f64).sqrt())
        }
        _ => None,
    };
    HitStats {
        count_hit: k as u32,
        censoring_rate: if completed == 0 { 0.0 } else { (completed - k as u32) as f64 / completed as f64 },
        mean,
        stderr,
        q10: quantile(&sorted, 0.1),
        q50: quantile(&sorted, 0.5),
        q90: quantile(&sorted, 0.9),
    }
}

fn run_replica(cfg: &ExperimentConfig, kernel: &crate::KernelSpec, grid_index: usize, n: u64, replica: u32) -> Result<ReplicaRecord> {
    let specs = cfg.stopping_times()?;
    let obs = ObservableSet::new(&specs, cfg.series(), cfg.checkpoints(n), n)?;
    let init = cfg.initial_state(n)?;
    let mut rng = replica_rng(cfg.run.seed, grid_index as u32, replica);
    let tr = run_trajectory(init, kernel, &cfg.stop_condition(), &mut rng, obs, cfg.events.log)?;
    Ok(ReplicaRecord {
        n,
        replica,
        t_end: tr.t_end,
        events: tr.n_events,
        stop: tr.stop_reason,
        hit_times: tr.record.hit_times,
        checkpoints: tr.record.checkpoints,
        series: tr.record.series,
        event_log: tr.events,
    })
}

fn summarize_point(n: u64, keys: &[String], outcomes: &[ReplicaOutcome], n_report: u64) -> GridPoint {
    let ok: Vec<&ReplicaRecord> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let completed = ok.len() as u32;
    let mut stats = BTreeMap::new();
    for key in keys {
        let times: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.hit_times.get(key).and_then(HitTime::time))
            .collect();
        stats.insert(key.clone(), hit_stats(&times, completed));
    }
    let mut checkpoints: Vec<CheckpointMean> = Vec::new();
    for r in &ok {
        for (i, row) in r.checkpoints.iter().enumerate() {
            if checkpoints.len() <= i {
                checkpoints.push(CheckpointMean {
                    t: row.t,
                    samples: 0,
                    zeroth_moment: 0.0,
                    sol_mass: 0.0,
                    densities: vec![0.0; n_report as usize],
                });
            }
            let c = &mut checkpoints[i];
            c.samples += 1;
            c.zeroth_moment += row.particle_count as f64 / n as f64;
            c.sol_mass += row.sol_mass;
            for (acc, d) in c.densities.iter_mut().zip(&row.densities) {
                *acc += d;
            }
        }
    }
    for c in &mut checkpoints {
        let s = c.samples as f64;
        c.zeroth_moment /= s;
        c.sol_mass /= s;
        c.densities.iter_mut().for_each(|d| *d /= s);
    }
    GridPoint {
        n,
        completed,
        failed: outcomes.len() as u32 - completed,
        truncated: ok.iter().filter(|r| r.stop == StopReason::EventBudget).count() as u32,
        mean_events: if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|r| r.events as f64).sum::<f64>() / ok.len() as f64
        },
        hit_stats: stats,
        checkpoints,
    }
}

/// Runs every replica at every grid point and aggregates in index order.
///
/// Replica failures are recorded; more than 1% failures at any grid point
/// fail the whole run.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleRun> {
    let kernel = cfg.kernel()?;
    let grid = cfg.n_grid()?;
    let specs = cfg.stopping_times()?;
    if cfg.run.replicas == 0 {
        return Err(Error::config("run.replicas must be at least 1"));
    }
    // surface per-N configuration errors once instead of per replica
    for &n in &grid {
        ObservableSet::new(&specs, cfg.series(), cfg.checkpoints(n), n)?;
    }
    let keys: Vec<String> = specs.iter().flat_map(|s| s.output_keys()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;

    let mut outcomes = Vec::with_capacity(grid.len() * cfg.run.replicas as usize);
    let mut points = Vec::with_capacity(grid.len());
    for (gi, &n) in grid.iter().enumerate() {
        let batch: Vec<ReplicaOutcome> = pool.install(|| {
            (0..cfg.run.replicas)
                .into_par_iter()
                .map(|r| ReplicaOutcome {
                    n,
                    replica: r,
                    result: run_replica(cfg, &kernel, gi, n, r).map_err(|e| e.to_string()),
                })
                .collect()
        });
        let failed = batch.iter().filter(|o| o.result.is_err()).count();
        if failed * 100 > batch.len() {
            let first = batch
                .iter()
                .find_map(|o| o.result.as_ref().err().cloned())
                .unwrap_or_default();
            return Err(Error::Replicas {
                failed,
                total: batch.len(),
                first,
            });
        }
        points.push(summarize_point(n, &keys, &batch, cfg.observe.n_report));
        outcomes.extend(batch);
    }
    let mut summary = EnsembleSummary {
        kernel: kernel.to_string(),
        seed: cfg.run.seed,
        replicas: cfg.run.replicas,
        stopping_times: keys,
        points,
        fit: None,
    };
    if let (Some(st), Some(curve)) = (&cfg.fit.stopping_time, &cfg.fit.curve) {
        let curve = cfg.curve(curve)?;
        summary.fit = Some(fit_scaling(&summary, st, &curve)?);
    }
    Ok(EnsembleRun { summary, outcomes })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `summary.json`, `summary.csv`, `replicas.jsonl` and any series or
/// event logs under `dir`.
pub fn write_ensemble(run: &EnsembleRun, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("summary.json"), &run.summary.to_json()?)?;
    write(&dir.join("summary.csv"), &run.summary.to_csv())?;
    write(&dir.join("replicas.jsonl"), &run.replicas_jsonl()?)?;
    if let Some(series_cfg) = cfg.series() {
        let sdir = dir.join("series");
        fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        for o in &run.outcomes {
            if let Ok(ReplicaRecord { series: Some(rows), .. }) = &o.result {
                write(
                    &sdir.join(format!("N{}_r{}.csv", o.n, o.replica)),
                    &series_csv(&series_cfg, rows),
                )?;
            }
        }
    }
    if cfg.events.log {
        let edir = dir.join("events");
        fs::create_dir_all(&edir).map_err(|e| Error::io(&edir, e))?;
        for o in &run.outcomes {
            if let Ok(ReplicaRecord { event_log: Some(ev), .. }) = &o.result {
                write(&edir.join(format!("N{}_r{}.csv", o.n, o.replica)), &events_csv(ev))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_and_stats() {
        let s = hit_stats(&[3.0, 1.0, 2.0, 4.0], 5);
        assert_eq!(s.count_hit, 4);
        assert_eq!(s.mean, Some(2.5));
        assert!((s.censoring_rate - 0.2).abs() < 1e-15);
        assert_eq!(s.q50, Some(2.5));
        assert!((s.q10.unwrap() - 1.3).abs() < 1e-12);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s.stderr.unwrap() - sd / 2.0).abs() < 1e-12);
        let e = hit_stats(&[], 3);
        assert_eq!((e.mean, e.stderr, e.censoring_rate), (None, None, 1.0));
        assert_eq!(hit_stats(&[1.0], 1).stderr, None);
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
kernel.family = "constant"
run.n_grid = [2, 5]
run.replicas = 50
run.seed = 9
observe.stopping_times = ["TauTilde", "Tk(k=2,delta=0.5)"]
"#,
        )
        .unwrap()
    }

    #[test]
    fn ensemble_is_reproducible() {
        let cfg = small_cfg();
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.summary.to_json().unwrap(), b.summary.to_json().unwrap());
        assert_eq!(a.replicas_jsonl().unwrap(), b.replicas_jsonl().unwrap());
        assert_eq!(a.outcomes.len(), 100);
        let p = a.summary.point(5).unwrap();
        assert_eq!(p.completed, 50);
        assert_eq!(p.hit_stats["TauTilde"].count_hit, 50);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = small_cfg();
        cfg.run.threads = 1;
        let a = run_ensemble(&cfg).unwrap().summary.to_json().unwrap();
        cfg.run.threads = 3;
        let b = run_ensemble(&cfg).unwrap().summary.to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failing_replicas_abort() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        std::fs::write(&path, "1,1\n1,1\n").unwrap();
        let mut cfg = small_cfg();
        cfg.kernel.family = "table".into();
        cfg.kernel.table_path = Some(path);
        cfg.run.n_grid = vec![10];
        assert!(matches!(run_ensemble(&cfg), Err(Error::Replicas { .. })));
    }

    #[test]
    fn writes_outputs() {
        let mut cfg = small_cfg();
        cfg.observe.series = true;
        cfg.events.log = true;
        let run = run_ensemble(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_ensemble(&run, &cfg, dir.path()).unwrap();
        let jsonl = std::fs::read_to_string(dir.path().join("replicas.jsonl")).unwrap();
        assert_eq!(jsonl.lines().count(), 100);
        let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(first["hit_times"]["TauTilde"]["hit"], true);
        let back: EnsembleSummary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(back, run.summary);
        assert!(dir.path().join("series/N5_r0.csv").exists());
        let ev = std::fs::read_to_string(dir.path().join("events/N5_r3.csv")).unwrap();
        assert_eq!(ev.lines().count(), 5);
    }
}
