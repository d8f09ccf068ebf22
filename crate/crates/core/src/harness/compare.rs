//! Replica averages of the stochastic process against the ODE limit.

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::engine::{replica_rng, run_trajectory, StopCondition};
use crate::error::{Error, Result};
use crate::observables::{CheckpointConfig, CheckpointRow, ObservableSet};
use crate::smoluchowski::{integrate, OdeMode};

/// Smallest total mass accepted for a comparison.
pub const MIN_MASS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub t: f64,
    pub mlp_zeroth_moment: f64,
    pub ode_zeroth_moment: f64,
    pub mlp_sol_mass: f64,
    pub ode_sol_mass: f64,
    /// `max_n |mean L_n / N - f_n|` over `n <= n_report`.
    pub density_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub kernel: String,
    pub mode: OdeMode,
    pub n: u64,
    pub replicas: u32,
    pub sol_cutoff: u64,
    pub rows: Vec<CompareRow>,
    pub sup_density_deviation: f64,
    pub sup_sol_mass_deviation: f64,
    pub sup_zeroth_moment_deviation: f64,
}

/// Runs `run.replicas` trajectories at the first grid mass, averages at
/// `observe.checkpoints` and integrates the ODE in `ode.mode` to the same
/// times.
///
/// Classical mode needs a kernel of at most linear growth, Flory mode one
/// with a limit ratio.
pub fn compare_mlp_ode(cfg: &ExperimentConfig) -> Result<CompareReport> {
    let kernel = cfg.kernel()?;
    let n = *cfg.n_grid()?.first().expect("n_grid is non-empty");
    if n < MIN_MASS {
        return Err(Error::domain(format!("comparison needs N >= {MIN_MASS}, got {n}")));
    }
    let mut ode = cfg.ode()?;
    let hyp = kernel.hypothesis_check();
    match ode.mode {
        OdeMode::Classical if !hyp.linear_growth => {
            return Err(Error::config(format!(
                "{kernel} grows faster than linearly; use ode.mode = \"flory\""
            )))
        }
        OdeMode::Flory if hyp.limit_ratio.is_none() => {
            return Err(Error::config(format!("{kernel} has no limit ratio for Flory mode")))
        }
        _ => {}
    }
    let times = cfg.observe.checkpoints.clone();
    if times.is_empty() || times.windows(2).any(|w| w[0] >= w[1]) || times[0] < 0.0 {
        return Err(Error::config("observe.checkpoints must be non-empty, non-negative and increasing"));
    }
    if cfg.run.replicas == 0 {
        return Err(Error::config("run.replicas must be at least 1"));
    }
    let n_report = cfg.observe.n_report;
    let checkpoints: CheckpointConfig = cfg.checkpoints(n).expect("checkpoints are non-empty");
    let sol_cutoff = checkpoints.sol_cutoff.unwrap_or(u64::MAX);
    let t_last = *times.last().unwrap();
    let stop = StopCondition {
        t_max: t_last,
        until_all_hit: false,
        max_events: cfg.run.max_events,
    };
    let init = cfg.initial_state(n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let runs: Vec<Result<Vec<CheckpointRow>>> = pool.install(|| {
        (0..cfg.run.replicas)
            .into_par_iter()
            .map(|r| {
                let obs = ObservableSet::new(&[], None, Some(checkpoints.clone()), n)?;
                let mut rng = replica_rng(cfg.run.seed, 0, r);
                let tr = run_trajectory(init.clone(), &kernel, &stop, &mut rng, obs, false)?;
                Ok(tr.record.checkpoints)
            })
            .collect()
    });
    let runs: Vec<Vec<CheckpointRow>> = runs.into_iter().collect::<Result<_>>()?;

    let mut f0 = vec![0.0; init.largest() as usize];
    for (size, count) in init.classes() {
        f0[size as usize - 1] = count as f64 / n as f64;
    }
    ode.t_end = t_last;
    ode.output_times = times.clone();
    let sol = integrate(&ode, &kernel, &f0)?;

    let r = runs.len() as f64;
    let mut rows = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let mean = |g: &dyn Fn(&CheckpointRow) -> f64| runs.iter().map(|rows| g(&rows[i])).sum::<f64>() / r;
        let state = sol.at(t).expect("checkpoint is an ODE output time");
        let density_deviation = (1..=n_report as usize)
            .map(|k| (mean(&|row| row.densities[k - 1]) - state.density(k)).abs())
            .fold(0.0, f64::max);
        rows.push(CompareRow {
            t,
            mlp_zeroth_moment: mean(&|row| row.particle_count as f64 / n as f64),
            ode_zeroth_moment: state.zeroth_moment(),
            mlp_sol_mass: mean(&|row| row.sol_mass),
            ode_sol_mass: state.sol_mass(),
            density_deviation,
        });
    }
    let sup = |g: fn(&CompareRow) -> f64| rows.iter().map(g).fold(0.0, f64::max);
    Ok(CompareReport {
        kernel: kernel.to_string(),
        mode: ode.mode,
        n,
        replicas: cfg.run.replicas,
        sol_cutoff,
        sup_density_deviation: sup(|x| x.density_deviation),
        sup_sol_mass_deviation: sup(|x| (x.mlp_sol_mass - x.ode_sol_mass).abs()),
        sup_zeroth_moment_deviation: sup(|x| (x.mlp_zeroth_moment - x.ode_zeroth_moment).abs()),
        rows,
    })
}
