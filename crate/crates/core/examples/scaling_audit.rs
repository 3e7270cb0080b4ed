//! Scale-by-scale audit: non-loc frequency next to the schedule bound, and
//! the deterministic lemma checks with their tallies.

use mpdsa::config_space::{Configuration, Geometry};
use mpdsa::disorder::{FieldModel, Marginal};
use mpdsa::experiments::{run_scaling_audit, Model, ScalingAuditConfig};
use mpdsa::msa::{BoundSchedule, CnrPolicy, ScalingParams};
use mpdsa::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

fn main() -> mpdsa::Result<()> {
    let ladder = vec![4, 7];
    let model = Model {
        geometry: Geometry::lattice(1),
        field: FieldModel::iid(Marginal::Uniform),
        hamiltonian: HamiltonianSpec { g: 30.0, interaction: InteractionModel::step(1.0, 1), diagonal: DiagonalConvention::InducedDegree },
        params: ScalingParams::finite_range(2, 1, 4),
        policy: CnrPolicy::with_ladder(ladder.clone()),
    };
    let cfg = ScalingAuditConfig {
        center: Configuration::from_1d(&[1, 0])?,
        k_max: 1,
        trials: 40,
        seed: 3,
        matrix_cap: 2500,
        ladder: Some(ladder),
    };
    let audit = run_scaling_audit(&model, &BoundSchedule { p: 64.0, b: 0.02 }, &cfg)?;
    for row in &audit.rows {
        println!(
            "k={} L={} |B|={} nonloc={:.3} [{:.3}, {:.3}] bound={:.2e} violations={} out-of-range={}",
            row.k, row.l_k, row.ball_size, row.nonloc.p_hat, row.nonloc.ci_low, row.nonloc.ci_high,
            row.schedule_bound, row.violations, row.out_of_range_failures
        );
        for (lemma, t) in &row.tallies {
            println!("    {lemma:<18} hypotheses {:>5}  sharp checks {:>5}", t.hypotheses_met, t.sharp_checks);
        }
    }
    Ok(())
}
