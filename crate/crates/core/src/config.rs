//! JSON run configuration.
//!
//! Parsing rejects unknown keys; [`RunConfig::validate`] then checks every
//! experiment against the model (ball sizes, trial counts, distances)
//! before anything is computed or written.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config_space::{enumerate_ball, rho, Configuration, Geometry, GraphGeometry};
use crate::disorder::{FieldModel, Marginal, W3Constants};
use crate::error::{Error, Result};
use crate::experiments::{Event, Model, DEFAULT_MATRIX_CAP};
use crate::msa::{check_param_constraints, BoundSchedule, CnrPolicy, ScalingParams};
use crate::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Lattice { dim: usize },
    Cycle { n: usize },
    Graph { adjacency: Vec<Vec<usize>>, growth_dim: usize },
}

impl GeometryConfig {
    pub fn build(&self) -> Result<Geometry> {
        match self {
            GeometryConfig::Lattice { dim } if *dim == 0 => Err(Error::Config("lattice dimension must be positive".into())),
            GeometryConfig::Lattice { dim } => Ok(Geometry::lattice(*dim)),
            GeometryConfig::Cycle { n } => Ok(Geometry::graph(GraphGeometry::cycle(*n)?)),
            GeometryConfig::Graph { adjacency, growth_dim } => {
                Ok(Geometry::graph(GraphGeometry::new(adjacency.clone(), *growth_dim)?))
            }
        }
    }
}

/// One entry of the experiment list. `trials` falls back to the run-level
/// count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// Eigenvalues of `H` on `B_radius(center)`.
    Spectrum {
        #[serde(default)]
        name: Option<String>,
        center: Configuration,
        radius: u64,
        #[serde(default)]
        trials: Option<usize>,
    },
    /// Every predicate of the ball at each energy.
    Predicates {
        #[serde(default)]
        name: Option<String>,
        center: Configuration,
        radius: u64,
        energies: Vec<f64>,
        /// Sub-ball radius for tunneling; default `ceil(radius^{1/alpha})`.
        #[serde(default)]
        sub_scale: Option<u64>,
        #[serde(default)]
        trials: Option<usize>,
    },
    /// Scale-by-scale non-loc probabilities and lemma audit.
    Audit {
        #[serde(default)]
        name: Option<String>,
        center: Configuration,
        k_max: u32,
        #[serde(default)]
        ladder: Option<Vec<u64>>,
        #[serde(default)]
        matrix_cap: Option<usize>,
        #[serde(default)]
        trials: Option<usize>,
    },
    /// Monte Carlo probability of one event.
    Probability {
        #[serde(default)]
        name: Option<String>,
        event: Event,
        center: Configuration,
        radius: u64,
        #[serde(default)]
        trials: Option<usize>,
    },
    /// Distance between the spectra of two balls.
    Evc {
        #[serde(default)]
        name: Option<String>,
        x: Configuration,
        y: Configuration,
        radius: u64,
        s_grid: Vec<f64>,
        #[serde(default)]
        w3: W3Constants,
        #[serde(default)]
        trials: Option<usize>,
    },
    /// Eigenfunction correlators and propagators from `source` (default: the
    /// center) to every ball member, or to `targets`.
    Dynamics {
        #[serde(default)]
        name: Option<String>,
        center: Configuration,
        radius: u64,
        #[serde(default)]
        source: Option<Configuration>,
        #[serde(default)]
        targets: Option<Vec<Configuration>>,
        #[serde(default)]
        window: Option<[f64; 2]>,
        /// Log-spaced times on `[1e-2, 1e3]`, plus `t = 0`.
        #[serde(default = "default_t_points")]
        t_points: usize,
        #[serde(default)]
        trials: Option<usize>,
    },
}

fn default_t_points() -> usize {
    10_000
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Spectrum { .. } => "spectrum",
            ExperimentConfig::Predicates { .. } => "predicates",
            ExperimentConfig::Audit { .. } => "audit",
            ExperimentConfig::Probability { .. } => "probability",
            ExperimentConfig::Evc { .. } => "evc",
            ExperimentConfig::Dynamics { .. } => "dynamics",
        }
    }

    fn name(&self) -> Option<&String> {
        match self {
            ExperimentConfig::Spectrum { name, .. }
            | ExperimentConfig::Predicates { name, .. }
            | ExperimentConfig::Audit { name, .. }
            | ExperimentConfig::Probability { name, .. }
            | ExperimentConfig::Evc { name, .. }
            | ExperimentConfig::Dynamics { name, .. } => name.as_ref(),
        }
    }

    fn trials_mut(&mut self) -> &mut Option<usize> {
        match self {
            ExperimentConfig::Spectrum { trials, .. }
            | ExperimentConfig::Predicates { trials, .. }
            | ExperimentConfig::Audit { trials, .. }
            | ExperimentConfig::Probability { trials, .. }
            | ExperimentConfig::Evc { trials, .. }
            | ExperimentConfig::Dynamics { trials, .. } => trials,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub geometry: GeometryConfig,
    pub n_particles: usize,
    pub g: f64,
    #[serde(default = "default_field")]
    pub field: FieldModel,
    #[serde(default = "InteractionModel::none")]
    pub interaction: InteractionModel,
    #[serde(default)]
    pub diagonal: DiagonalConvention,
    /// Initial scale for the default parameter set; excludes `params`.
    #[serde(default)]
    pub l0: Option<u64>,
    /// Decay mass for the default parameter set; excludes `params`.
    #[serde(default)]
    pub m: Option<f64>,
    /// Full parameter set.
    #[serde(default)]
    pub params: Option<ScalingParams>,
    #[serde(default)]
    pub schedule: Option<BoundSchedule>,
    #[serde(default)]
    pub cnr_policy: CnrPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_field() -> FieldModel {
    FieldModel::iid(Marginal::Uniform)
}

fn default_trials() -> usize {
    100
}

pub const DEFAULT_L0: u64 = 6;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    /// Replaces the run-level and every per-experiment trial count.
    pub fn override_trials(&mut self, trials: usize) {
        self.trials = trials;
        for e in &mut self.experiments {
            *e.trials_mut() = Some(trials);
        }
    }

    pub fn trials_for(&self, e: &ExperimentConfig) -> usize {
        let mut e = e.clone();
        e.trials_mut().unwrap_or(self.trials)
    }

    pub fn scaling_params(&self) -> Result<ScalingParams> {
        let dim = self.geometry.build()?.dim();
        let p = match &self.params {
            Some(p) => {
                if self.l0.is_some() || self.m.is_some() {
                    return Err(Error::Config("give either `params` or `l0`/`m`, not both".into()));
                }
                if p.n_particles != self.n_particles || p.dim != dim {
                    return Err(Error::Config(format!(
                        "params are for N = {}, d = {}, the run has N = {}, d = {dim}",
                        p.n_particles, p.dim, self.n_particles
                    )));
                }
                p.clone()
            }
            None => ScalingParams::finite_range(self.n_particles, dim, self.l0.unwrap_or(DEFAULT_L0)).with_m(self.m.unwrap_or(1.0)),
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    /// Schedule from the config, or `p = 32 N d`, `b = 0.02`, which meets the
    /// schedule constraints at `alpha = 4/3`.
    pub fn bound_schedule(&self) -> Result<BoundSchedule> {
        let params = self.scaling_params()?;
        Ok(self.schedule.unwrap_or(BoundSchedule { p: 32.0 * (params.n_particles * params.dim) as f64, b: 0.02 }))
    }

    pub fn model(&self) -> Result<Model> {
        if !self.g.is_finite() {
            return Err(Error::Config(format!("coupling g must be finite, got {}", self.g)));
        }
        self.field.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.interaction.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Model {
            geometry: self.geometry.build().map_err(|e| Error::Config(e.to_string()))?,
            field: self.field.clone(),
            hamiltonian: HamiltonianSpec { g: self.g, interaction: self.interaction.clone(), diagonal: self.diagonal },
            params: self.scaling_params()?,
            policy: self.cnr_policy.clone(),
        })
    }

    /// Output file stem of each experiment: its `name`, else its kind,
    /// suffixed with the list index when the kind repeats.
    pub fn experiment_names(&self) -> Vec<String> {
        self.experiments
            .iter()
            .enumerate()
            .map(|(i, e)| match e.name() {
                Some(n) => n.clone(),
                None if self.experiments.iter().filter(|o| o.kind() == e.kind()).count() > 1 => {
                    format!("{}_{i}", e.kind())
                }
                None => e.kind().to_string(),
            })
            .collect()
    }

    /// Every check that can fail before computation starts.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be positive".into()));
        }
        if self.experiments.is_empty() {
            return Err(Error::Config("experiment list is empty".into()));
        }
        let model = self.model()?;
        self.bound_schedule()?;
        let names = self.experiment_names();
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Config(format!("experiment names collide: {names:?}")));
        }
        if let Some(bad) = names.iter().find(|n| n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')) {
            return Err(Error::Config(format!("experiment name {bad:?} must be nonempty ASCII letters, digits, '_' or '-'")));
        }
        for (e, name) in self.experiments.iter().zip(&names) {
            let ctx = |msg: String| Error::Config(format!("experiment {name}: {msg}"));
            let trials = self.trials_for(e);
            if trials == 0 {
                return Err(ctx("trials must be positive".into()));
            }
            let ball = |c: &Configuration, r: u64| -> Result<usize> {
                if c.n_particles() != self.n_particles || c.site_dim() != model.geometry.site_dim() {
                    return Err(ctx(format!("configuration {c} does not have {} particles of the geometry's site dimension", self.n_particles)));
                }
                let b = enumerate_ball(&model.geometry, c, r).map_err(|e| ctx(e.to_string()))?;
                if b.len() > DEFAULT_MATRIX_CAP {
                    return Err(ctx(format!("ball of radius {r} at {c} has {} configurations, above the cap {DEFAULT_MATRIX_CAP}", b.len())));
                }
                Ok(b.len())
            };
            match e {
                ExperimentConfig::Spectrum { center, radius, .. } => {
                    ball(center, *radius)?;
                }
                ExperimentConfig::Predicates { center, radius, energies, sub_scale, .. } => {
                    ball(center, *radius)?;
                    if energies.is_empty() || energies.iter().any(|x| !x.is_finite()) {
                        return Err(ctx("energies must be a nonempty list of finite numbers".into()));
                    }
                    if sub_scale.is_some_and(|s| s > *radius) {
                        return Err(ctx("sub_scale exceeds the radius".into()));
                    }
                }
                ExperimentConfig::Audit { center, k_max, ladder, matrix_cap, .. } => {
                    ball(center, 0)?;
                    if let Some(l) = ladder {
                        if l.len() <= *k_max as usize || l.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(ctx(format!("ladder {l:?} must be increasing with at least k_max + 1 entries")));
                        }
                    } else {
                        model.params.scales(*k_max as usize + 1).map_err(cfg)?;
                    }
                    if matrix_cap == &Some(0) {
                        return Err(ctx("matrix_cap must be positive".into()));
                    }
                }
                ExperimentConfig::Probability { event, center, radius, .. } => {
                    ball(center, *radius)?;
                    if trials < 30 {
                        return Err(ctx(format!("probability estimates need at least 30 trials, got {trials}")));
                    }
                    match event {
                        Event::DistantPairSingular { partner, window } => {
                            ball(partner, *radius)?;
                            let r = rho(&model.geometry, center, partner).map_err(cfg)?;
                            if !model.params.is_distant(r, *radius) {
                                return Err(ctx(format!("{center} and {partner} are not distant at L = {radius}")));
                            }
                            if !(window[0] <= window[1]) {
                                return Err(ctx(format!("empty energy window {window:?}")));
                            }
                        }
                        Event::Singular { energy } if !energy.is_finite() => return Err(ctx("energy must be finite".into())),
                        Event::Tunneling { sub_scale } if *sub_scale > *radius => {
                            return Err(ctx("sub_scale exceeds the radius".into()))
                        }
                        _ => {}
                    }
                }
                ExperimentConfig::Evc { x, y, radius, s_grid, .. } => {
                    ball(x, *radius)?;
                    ball(y, *radius)?;
                    if s_grid.is_empty() || s_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                        return Err(ctx("s_grid must be a nonempty list of finite nonnegative numbers".into()));
                    }
                    if model.hamiltonian.g == 0.0 {
                        return Err(ctx("EVC bounds need a nonzero coupling".into()));
                    }
                }
                ExperimentConfig::Dynamics { center, radius, source, targets, window, .. } => {
                    ball(center, *radius)?;
                    let b = enumerate_ball(&model.geometry, center, *radius).map_err(cfg)?;
                    for c in source.iter().chain(targets.iter().flatten()) {
                        if !b.contains(c) {
                            return Err(ctx(format!("{c} is not in the ball")));
                        }
                    }
                    if window.is_some_and(|w| !(w[0] <= w[1])) {
                        return Err(ctx("empty energy window".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Named schedule constraints, reported with every audit.
    pub fn constraint_report(&self) -> Result<Vec<crate::msa::ConstraintCheck>> {
        Ok(check_param_constraints(&self.scaling_params()?, &self.bound_schedule()?))
    }
}
