//! Experiment configuration files.
//!
//! Configs are TOML. Every key lives in one of the sections `kernel`, `run`,
//! `observe`, `events`, `ode`, `bounds` and `fit`, written either as
//! `[section]` tables or as dotted keys (`kernel.family = "product"`).
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bounds::{BoundCurve, NegativePart};
use crate::engine::StopCondition;
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, KernelTable};
use crate::observables::{tau_threshold, CheckpointConfig, SeriesConfig, StoppingTimeSpec};
use crate::smoluchowski::{OdeConfig, OdeMode};
use crate::state::ClusterState;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSection,
    pub run: RunSection,
    pub observe: ObserveSection,
    pub events: EventsSection,
    pub ode: OdeSection,
    pub bounds: BoundsSection,
    pub fit: FitSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    /// `constant`, `additive`, `product`, `sum`, `mixed` or `table`.
    pub family: String,
    pub a: Option<f64>,
    pub q: Option<f64>,
    pub scale: Option<f64>,
    pub c: Option<f64>,
    pub table_path: Option<PathBuf>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: "constant".into(),
            a: None,
            q: None,
            scale: None,
            c: None,
            table_path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n_grid: Vec<u64>,
    pub replicas: u32,
    pub seed: u64,
    pub t_max: Option<f64>,
    pub max_events: Option<u64>,
    /// Stop each replica once every stopping time has been hit.
    pub until_all_hit: bool,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
    /// Explicit `[size, count]` pairs replacing the monodisperse start.
    pub init_profile: Option<Vec<[u64; 2]>>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_grid: Vec::new(),
            replicas: 1,
            seed: 0,
            t_max: None,
            max_events: None,
            until_all_hit: true,
            threads: 0,
            init_profile: None,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserveSection {
    /// Canonical stopping-time strings, e.g. `"Tk(k=12,delta=0.5)"`.
    pub stopping_times: Vec<String>,
    pub series: bool,
    pub series_stride: Option<u64>,
    pub mass_tail_ks: Vec<u64>,
    /// `[p, r]` pairs.
    pub moments: Vec<(f64, u64)>,
    pub checkpoints: Vec<f64>,
    pub n_report: u64,
    /// Gel cutoff `ceil(c N^b)` used for the sol mass at checkpoints.
    pub gel_cutoff_b: f64,
    pub gel_cutoff_c: f64,
}

impl Default for ObserveSection {
    fn default() -> Self {
        Self {
            stopping_times: Vec::new(),
            series: false,
            series_stride: None,
            mass_tail_ks: Vec::new(),
            moments: Vec::new(),
            checkpoints: Vec::new(),
            n_report: 10,
            gel_cutoff_b: 2.0 / 3.0,
            gel_cutoff_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsSection {
    pub log: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSection {
    pub n_max: usize,
    pub mode: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    pub n_report: usize,
}

impl Default for OdeSection {
    fn default() -> Self {
        let d = OdeConfig::new(1024, OdeMode::Classical, 1.0);
        Self {
            n_max: d.n_max,
            mode: "classical".into(),
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            t_end: d.t_end,
            output_times: Vec::new(),
            n_report: d.n_report,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub delta: Option<f64>,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    pub q: Option<f64>,
    #[serde(rename = "A")]
    pub big_a: Option<f64>,
    pub theta: Option<f64>,
    pub k: Option<u64>,
    /// `standard` (default) or `positive`.
    pub negative_part: Option<String>,
    /// `thm16`, `thm17` or `lem41`.
    pub curve: Option<String>,
    pub n_grid: Vec<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Stopping time whose means are fitted.
    pub stopping_time: Option<String>,
    /// `thm16` or `thm17`; parameters come from the `bounds` section.
    pub curve: Option<String>,
}

fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(format!("missing key {key}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let Some(p) = cfg.kernel.table_path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        match k.family.to_ascii_lowercase().as_str() {
            "constant" => KernelSpec::constant(k.c.unwrap_or(1.0)),
            "additive" => KernelSpec::additive(k.scale.unwrap_or(1.0)),
            "product" => KernelSpec::product(need(k.a, "kernel.a")?),
            "sum" => KernelSpec::sum(need(k.q, "kernel.q")?),
            "mixed" => KernelSpec::mixed(need(k.q, "kernel.q")?),
            "table" => {
                let path = k
                    .table_path
                    .as_ref()
                    .ok_or_else(|| Error::config("missing key kernel.table_path"))?;
                Ok(KernelSpec::table(KernelTable::from_csv(path)?))
            }
            other => Err(Error::config(format!("unknown kernel.family '{other}'"))),
        }
    }

    pub fn stopping_times(&self) -> Result<Vec<StoppingTimeSpec>> {
        self.observe.stopping_times.iter().map(|s| s.parse()).collect()
    }

    /// Total masses to run: the profile's mass when a profile is given.
    pub fn n_grid(&self) -> Result<Vec<u64>> {
        if let Some(profile) = &self.run.init_profile {
            let s = ClusterState::init_from_profile(profile.iter().map(|p| (p[0], p[1])))?;
            return Ok(vec![s.total_mass()]);
        }
        let g = &self.run.n_grid;
        if g.is_empty() {
            return Err(Error::config("run.n_grid is empty"));
        }
        if g[0] == 0 || g.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("run.n_grid must be positive and strictly increasing"));
        }
        Ok(g.clone())
    }

    pub fn initial_state(&self, n: u64) -> Result<ClusterState> {
        match &self.run.init_profile {
            Some(profile) => ClusterState::init_from_profile(profile.iter().map(|p| (p[0], p[1]))),
            None => ClusterState::init_monodisperse(n),
        }
    }

    pub fn stop_condition(&self) -> StopCondition {
        StopCondition {
            t_max: self.run.t_max.unwrap_or(f64::INFINITY),
            until_all_hit: self.run.until_all_hit && !self.observe.stopping_times.is_empty(),
            max_events: self.run.max_events,
        }
    }

    pub fn series(&self) -> Option<SeriesConfig> {
        self.observe.series.then(|| SeriesConfig {
            stride: self.observe.series_stride,
            mass_tail_ks: self.observe.mass_tail_ks.clone(),
            moments: self.observe.moments.clone(),
        })
    }

    pub fn checkpoints(&self, n: u64) -> Option<CheckpointConfig> {
        (!self.observe.checkpoints.is_empty()).then(|| CheckpointConfig {
            times: self.observe.checkpoints.clone(),
            n_report: self.observe.n_report,
            sol_cutoff: Some(tau_threshold(n, self.observe.gel_cutoff_b, self.observe.gel_cutoff_c)),
        })
    }

    pub fn ode(&self) -> Result<OdeConfig> {
        let o = &self.ode;
        let mut cfg = OdeConfig::new(o.n_max, o.mode.parse()?, o.t_end);
        cfg.rel_tol = o.rel_tol;
        cfg.abs_tol = o.abs_tol;
        cfg.output_times = o.output_times.clone();
        cfg.n_report = o.n_report;
        Ok(cfg)
    }

    pub fn negative_part(&self) -> Result<NegativePart> {
        match self.bounds.negative_part.as_deref() {
            None | Some("standard") => Ok(NegativePart::Standard),
            Some("positive") => Ok(NegativePart::PositivePart),
            Some(other) => Err(Error::config(format!("unknown bounds.negative_part '{other}'"))),
        }
    }

    /// Curve named by `name` with parameters from the `bounds` section.
    pub fn curve(&self, name: &str) -> Result<BoundCurve> {
        let b = &self.bounds;
        let curve = match name.to_ascii_lowercase().as_str() {
            "thm16" => BoundCurve::Thm16 {
                q: need(b.q, "bounds.q")?,
                a: need(b.big_a, "bounds.A")?,
                theta: need(b.theta, "bounds.theta")?,
                delta: need(b.delta, "bounds.delta")?,
            },
            "thm17" => BoundCurve::Thm17 {
                q: need(b.q, "bounds.q")?,
            },
            "lem41" => BoundCurve::Lem41 {
                delta: need(b.delta, "bounds.delta")?,
                k: need(b.k, "bounds.k")?,
                q: need(b.q, "bounds.q")?,
            },
            other => return Err(Error::config(format!("unknown curve '{other}'"))),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.run.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = ExperimentConfig::from_toml(
            r#"
kernel.family = "product"
kernel.a = 1.0
run.n_grid = [100, 1000]
run.replicas = 10
observe.stopping_times = ["Tk(k=12,delta=0.5)", "TauTilde"]
"#,
        )
        .unwrap();
        let b = ExperimentConfig::from_toml(
            r#"
# same thing
[kernel]
family = "product"
a = 1.0

[run]
n_grid = [100, 1000]
replicas = 10

[observe]
stopping_times = ["Tk(k=12,delta=0.5)", "TauTilde"]
"#,
        )
        .unwrap();
        assert_eq!(a.kernel().unwrap(), b.kernel().unwrap());
        assert_eq!(a.n_grid().unwrap(), vec![100, 1000]);
        assert_eq!(a.stopping_times().unwrap(), b.stopping_times().unwrap());
        assert_eq!(a.run.replicas, 10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml("kernel.famly = \"x\"").is_err());
        let c = ExperimentConfig::from_toml("kernel.family = \"product\"").unwrap();
        assert!(c.kernel().unwrap_err().is_config());
        let c = ExperimentConfig::from_toml("run.n_grid = [10, 5]").unwrap();
        assert!(c.n_grid().is_err());
        let c = ExperimentConfig::from_toml("observe.stopping_times = [\"Tk(k=0,delta=0.5)\"]").unwrap();
        assert!(c.stopping_times().is_err());
        let c = ExperimentConfig::from_toml("ode.mode = \"weird\"").unwrap();
        assert!(c.ode().is_err());
    }

    #[test]
    fn profile_overrides_grid() {
        let c = ExperimentConfig::from_toml("run.init_profile = [[1, 4], [3, 2]]\nrun.n_grid = [7]").unwrap();
        assert_eq!(c.n_grid().unwrap(), vec![10]);
        assert_eq!(c.initial_state(10).unwrap().particle_count(), 6);
    }
}
