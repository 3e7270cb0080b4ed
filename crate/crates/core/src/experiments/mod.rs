//! Monte Carlo experiments: event probabilities, the scale-by-scale audit,
//! eigenvalue concentration and finite-volume eigenfunction correlators.
//!
//! Trial `t` of a run with master seed `s` samples its field with seed
//! `derive_seed(s, t)`. Trials run on the rayon pool and are collected in
//! trial order, so results do not depend on the number of workers.

mod dynamics;
mod evc;
mod events;
mod stats;

use std::collections::BTreeSet;
use std::sync::Arc;

pub use dynamics::{
    correlator_report, decay_fit, default_t_grid, ef_correlator, finite_volume_dl_bound, log_t_grid, propagator_sup, signed_correlator,
    CorrelatorReport, CorrelatorRow, DecayFit, C_GRID,
};
pub use evc::{
    evc_experiment, evc_theorem_bound, h_l, min_spectral_distance, power_law_fit, single_site_closed_form, EvcReport,
    EvcSetup,
};
pub use events::{
    estimate_event_probability, run_scaling_audit, Event, ScaleRow, ScalingAudit, ScalingAuditConfig, TrialBatch,
    TrialOutcome, DEFAULT_MATRIX_CAP,
};
pub use stats::{ProbabilityEstimate, WILSON_Z};

use crate::config_space::{enumerate_ball, projection, Ball, Configuration, Geometry, Site};
use crate::disorder::{sample_field, FieldModel, FieldSample};
use crate::error::Result;
use crate::msa::{solve_ball, CnrPolicy, ScalingParams};
use crate::operators::HamiltonianSpec;
use crate::spectral::EigenSystem;

/// Everything a trial needs besides its seed.
#[derive(Clone, Debug)]
pub struct Model {
    pub geometry: Geometry,
    pub field: FieldModel,
    pub hamiltonian: HamiltonianSpec,
    pub params: ScalingParams,
    pub policy: CnrPolicy,
}

impl Model {
    pub fn ball(&self, center: &Configuration, radius: u64) -> Result<Arc<Ball>> {
        Ok(Arc::new(enumerate_ball(&self.geometry, center, radius)?))
    }

    /// Field on the union of the balls' single-particle projections.
    pub fn sample(&self, balls: &[&Ball], seed: u64) -> FieldSample {
        let sites: BTreeSet<Site> = balls.iter().flat_map(|b| projection(b)).collect();
        sample_field(&self.field, sites.iter(), seed)
    }

    pub fn solve(&self, ball: &Arc<Ball>, sample: &FieldSample) -> Result<EigenSystem> {
        solve_ball(&self.hamiltonian, sample, ball)
    }
}
