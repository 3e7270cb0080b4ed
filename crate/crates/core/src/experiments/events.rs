use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Model, ProbabilityEstimate};
use crate::config_space::{enumerate_ball, rho, Configuration};
use crate::disorder::derive_seed;
use crate::error::{Error, Result};
use crate::msa::{
    energy_grid, is_emns, is_m_loc_flag, is_m_tunneling, ns_batch, verify_implications, verify_pi_ball, AuditContext,
    AuditReport, BoundSchedule, LemmaTally, Violation,
};

pub const DEFAULT_MATRIX_CAP: usize = 2500;

const MIN_TRIALS: usize = 30;

/// Random events on a ball `B_L(u)`, evaluated at `m = params.m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    AlwaysTrue,
    AlwaysFalse,
    /// The ball is `(E, m)`-singular.
    Singular { energy: f64 },
    /// The ball is not `m`-localized.
    NonLoc,
    /// The ball is `m`-tunneling at sub-scale `sub_scale`.
    Tunneling { sub_scale: u64 },
    /// The ball and the distant ball of equal radius at `partner` are both
    /// `(E, m)`-singular for some `E` in `window`. Energies tested: both
    /// spectra inside the window, their midpoints and the endpoints.
    DistantPairSingular { partner: Configuration, window: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub occurred: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialBatch {
    pub event: Event,
    pub center: Configuration,
    pub radius: u64,
    pub seed: u64,
    pub outcomes: Vec<TrialOutcome>,
    pub estimate: ProbabilityEstimate,
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!("at least {MIN_TRIALS} trials are required, got {trials}")));
    }
    Ok(())
}

/// Monte Carlo probability of `event` on `B_radius(center)`.
pub fn estimate_event_probability(
    model: &Model,
    event: &Event,
    center: &Configuration,
    radius: u64,
    trials: usize,
    seed: u64,
) -> Result<TrialBatch> {
    check_trials(trials)?;
    let ball = model.ball(center, radius)?;
    let partner = match event {
        Event::DistantPairSingular { partner, window } => {
            if !(window[0] <= window[1]) {
                return Err(Error::InvalidParameter(format!("empty energy window {window:?}")));
            }
            let r = rho(&model.geometry, center, partner)?;
            if !model.params.is_distant(r, radius) {
                return Err(Error::InvalidParameter(format!("balls at {center} and {partner} are not distant at L = {radius}")));
            }
            Some(model.ball(partner, radius)?)
        }
        _ => None,
    };
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = derive_seed(seed, t as u64);
            let occurred = occurs(model, event, &ball, partner.as_ref(), s)?;
            Ok(TrialOutcome { trial: t, seed: s, occurred })
        })
        .collect::<Result<Vec<_>>>()?;
    let hits = outcomes.iter().filter(|o| o.occurred).count();
    Ok(TrialBatch {
        event: event.clone(),
        center: center.clone(),
        radius,
        seed,
        estimate: ProbabilityEstimate::wilson(hits, trials),
        outcomes,
    })
}

fn occurs(
    model: &Model,
    event: &Event,
    ball: &Arc<crate::config_space::Ball>,
    partner: Option<&Arc<crate::config_space::Ball>>,
    seed: u64,
) -> Result<bool> {
    let params = &model.params;
    let m = params.m;
    Ok(match event {
        Event::AlwaysTrue => true,
        Event::AlwaysFalse => false,
        Event::Singular { energy } => {
            let es = model.solve(ball, &model.sample(&[ball], seed))?;
            !is_emns(&es, *energy, m, params).non_singular
        }
        Event::NonLoc => {
            let es = model.solve(ball, &model.sample(&[ball], seed))?;
            !is_m_loc_flag(&es, m, params)
        }
        Event::Tunneling { sub_scale } => {
            let sample = model.sample(&[ball], seed);
            is_m_tunneling(&model.hamiltonian, &sample, ball, m, params, *sub_scale, &model.policy)?.tunneling
        }
        Event::DistantPairSingular { window, .. } => {
            let other = partner.expect("partner ball is built for pair events");
            let sample = model.sample(&[ball, other], seed);
            let a = model.solve(ball, &sample)?;
            let b = model.solve(other, &sample)?;
            let mut grid: Vec<f64> =
                energy_grid(&[&a, &b]).into_iter().filter(|e| (window[0]..=window[1]).contains(e)).collect();
            grid.push(window[0]);
            grid.push(window[1]);
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let na = ns_batch(&a, &grid, m, params);
            let nb = ns_batch(&b, &grid, m, params);
            na.iter().zip(&nb).any(|(x, y)| !x.non_singular && !y.non_singular)
        }
    })
}

/// Settings of a scale-by-scale audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingAuditConfig {
    pub center: Configuration,
    pub k_max: u32,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub matrix_cap: usize,
    /// Explicit radii `L_0, L_1, ...` replacing `L_{k+1} = ceil(L_k^alpha)`.
    #[serde(default)]
    pub ladder: Option<Vec<u64>>,
}

fn default_cap() -> usize {
    DEFAULT_MATRIX_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRow {
    pub k: u32,
    pub l_k: u64,
    pub ball_size: usize,
    pub nonloc: ProbabilityEstimate,
    /// `L_k^{-P(N, k)}`.
    pub schedule_bound: f64,
    pub violations: usize,
    pub out_of_range_failures: usize,
    pub tallies: BTreeMap<String, LemmaTally>,
    pub violation_records: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingAudit {
    pub rows: Vec<ScaleRow>,
    pub notices: Vec<String>,
}

impl ScalingAudit {
    pub fn violation_count(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

/// Non-loc probability at each scale `L_0..L_{k_max}` next to the schedule
/// bound. From `k = 1` on, every trial also runs the deterministic audits on
/// `B_{L_k}` with sub-scale `L_{k-1}`. One field realization per trial is
/// shared by all scales. Scales whose ball exceeds the matrix cap end the
/// table with a notice.
pub fn run_scaling_audit(model: &Model, schedule: &BoundSchedule, cfg: &ScalingAuditConfig) -> Result<ScalingAudit> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("the audit needs at least one trial".into()));
    }
    let count = cfg.k_max as usize + 1;
    let ladder = match &cfg.ladder {
        Some(l) if l.len() < count => {
            return Err(Error::InvalidParameter(format!("ladder has {} radii, k_max = {} needs {count}", l.len(), cfg.k_max)))
        }
        Some(l) => l[..count].to_vec(),
        None => model.params.scales(count)?,
    };
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("ladder {ladder:?} is not increasing")));
    }
    let n = model.params.n_particles;
    let mut out = ScalingAudit { rows: Vec::new(), notices: Vec::new() };
    for (k, &l_k) in ladder.iter().enumerate() {
        let ball = Arc::new(enumerate_ball(&model.geometry, &cfg.center, l_k)?);
        if ball.len() > cfg.matrix_cap {
            out.notices.push(format!(
                "scale k = {k} (L = {l_k}) skipped: {} configurations exceed the matrix cap {}",
                ball.len(),
                cfg.matrix_cap
            ));
            break;
        }
        let sub = k.checked_sub(1).map(|i| ladder[i]);
        let per_trial = (0..cfg.trials)
            .into_par_iter()
            .map(|t| scale_trial(model, &ball, sub, derive_seed(cfg.seed, t as u64)))
            .collect::<Result<Vec<_>>>()?;
        let mut audit = AuditReport::default();
        let mut hits = 0;
        for (nonloc, rep) in per_trial {
            hits += nonloc as usize;
            audit.merge(rep);
        }
        out.rows.push(ScaleRow {
            k: k as u32,
            l_k,
            ball_size: ball.len(),
            nonloc: ProbabilityEstimate::wilson(hits, cfg.trials),
            schedule_bound: schedule.bound(l_k, n, n, k as u32),
            violations: audit.violation_count(),
            out_of_range_failures: audit.tallies.values().map(|t| t.out_of_range_failures).sum(),
            tallies: audit.tallies,
            violation_records: audit.violations,
        });
    }
    Ok(out)
}

fn scale_trial(
    model: &Model,
    ball: &Arc<crate::config_space::Ball>,
    sub: Option<u64>,
    seed: u64,
) -> Result<(bool, AuditReport)> {
    let sample = model.sample(&[ball], seed);
    let es = model.solve(ball, &sample)?;
    let nonloc = !is_m_loc_flag(&es, model.params.m, &model.params);
    let mut rep = AuditReport::default();
    if let Some(l) = sub {
        let ctx = AuditContext {
            spec: &model.hamiltonian,
            sample: &sample,
            params: &model.params,
            policy: &model.policy,
            m: model.params.m,
        };
        rep = verify_implications(&ctx, ball, l)?;
        rep.merge(verify_pi_ball(&ctx, ball)?);
    }
    Ok((nonloc, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::Geometry;
    use crate::disorder::{FieldModel, Marginal};
    use crate::msa::{CnrPolicy, ScalingParams};
    use crate::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

    fn model(g: f64, n: usize, l0: u64) -> Model {
        Model {
            geometry: Geometry::lattice(1),
            field: FieldModel::iid(Marginal::Uniform),
            hamiltonian: HamiltonianSpec {
                g,
                interaction: InteractionModel::step(1.0, 1),
                diagonal: DiagonalConvention::InducedDegree,
            },
            params: ScalingParams::finite_range(n, 1, l0).with_m(1.0),
            policy: CnrPolicy::default(),
        }
    }

    #[test]
    fn probes() {
        let m = model(1.0, 1, 3);
        let u = Configuration::from_1d(&[0]).unwrap();
        let t = estimate_event_probability(&m, &Event::AlwaysTrue, &u, 1, 30, 1).unwrap();
        assert_eq!(t.estimate.p_hat, 1.0);
        let f = estimate_event_probability(&m, &Event::AlwaysFalse, &u, 1, 30, 1).unwrap();
        assert_eq!(f.estimate.p_hat, 0.0);
        assert!(estimate_event_probability(&m, &Event::AlwaysTrue, &u, 1, 29, 1).is_err());
    }

    #[test]
    fn singular_probability_falls_with_disorder() {
        let u = Configuration::from_1d(&[1, 0]).unwrap();
        let ev = Event::Singular { energy: 2.0 };
        let p: Vec<ProbabilityEstimate> = [3.0, 10.0, 30.0]
            .iter()
            .map(|&g| estimate_event_probability(&model(g, 2, 6), &ev, &u, 6, 200, 11).unwrap().estimate)
            .collect();
        assert!(p.windows(2).all(|w| w[1].p_hat <= w[0].p_hat), "{p:?}");
        assert!(p[0].separated_from(&p[2]), "{p:?}");
    }

    #[test]
    fn trials_use_derived_seeds_in_order() {
        let m = model(30.0, 1, 3);
        let u = Configuration::from_1d(&[0]).unwrap();
        let b = estimate_event_probability(&m, &Event::NonLoc, &u, 3, 30, 5).unwrap();
        for (t, o) in b.outcomes.iter().enumerate() {
            assert_eq!((o.trial, o.seed), (t, derive_seed(5, t as u64)));
        }
        assert_eq!(b, estimate_event_probability(&m, &Event::NonLoc, &u, 3, 30, 5).unwrap());
    }

    #[test]
    fn pair_event_requires_distant_balls() {
        let m = model(30.0, 1, 3);
        let u = Configuration::from_1d(&[0]).unwrap();
        let near = Event::DistantPairSingular { partner: Configuration::from_1d(&[2]).unwrap(), window: [-1.0, 1.0] };
        assert!(estimate_event_probability(&m, &near, &u, 2, 30, 1).is_err());
        let far = Event::DistantPairSingular { partner: Configuration::from_1d(&[40]).unwrap(), window: [-1.0, 40.0] };
        let b = estimate_event_probability(&m, &far, &u, 2, 30, 1).unwrap();
        // Both balls are singular on their own spectra, which interleave in
        // the window only when they come close.
        assert!(b.estimate.p_hat <= 1.0);
    }

    #[test]
    fn scale_zero_matches_nonloc_estimate() {
        let m = model(30.0, 2, 6);
        let u = Configuration::from_1d(&[1, 0]).unwrap();
        let cfg = ScalingAuditConfig { center: u.clone(), k_max: 0, trials: 30, seed: 9, matrix_cap: 2500, ladder: None };
        let sched = BoundSchedule { p: 1.0, b: 0.1 };
        let a = run_scaling_audit(&m, &sched, &cfg).unwrap();
        let e = estimate_event_probability(&m, &Event::NonLoc, &u, 6, 30, 9).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.rows[0].nonloc, e.estimate);
        assert_eq!(a.rows[0].schedule_bound, 6f64.powf(-1.0));
    }

    #[test]
    fn matrix_cap_truncates() {
        let m = model(30.0, 2, 6);
        let cfg = ScalingAuditConfig {
            center: Configuration::from_1d(&[1, 0]).unwrap(),
            k_max: 1,
            trials: 30,
            seed: 1,
            matrix_cap: 100,
            ladder: None,
        };
        let a = run_scaling_audit(&m, &BoundSchedule { p: 1.0, b: 0.1 }, &cfg).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.notices.len(), 1);
    }
}
