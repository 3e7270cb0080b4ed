//! Scale ladder, parameter relations and the predicates of the scaling
//! analysis.

mod audit;
mod params;
mod predicates;

pub use audit::{
    energy_grid, two_scale_condition, verify_implications, verify_pi_ball, AuditContext, AuditReport, LemmaTally,
    Violation,
};
pub use params::{
    ceil_pow, check_param_constraints, exponent_identity_holds, exponent_identity_min_scale, gamma,
    gamma_n, mixing_rate_check, p_threshold_factor, scales, BoundSchedule, ConstraintCheck,
    DistantConstant, MixingRateCheck, Regime, ScalingParams,
};
pub use predicates::{
    eigenvector_noise, evaluate_predicates, is_e_cnr, is_e_nr, is_emns, is_m_loc, is_m_loc_flag, is_m_tunneling, log_resolvent_norm, ns_batch,
    solve_ball, sub_ball_centers, CnrCheck, CnrPolicy, LocOutcome, LocWitness, NsOutcome, PredicateReport,
    ResonantSubBall, SubBall, TunnelingOutcome, LOC_NOISE_FLOOR,
};
