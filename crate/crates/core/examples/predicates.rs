//! Non-resonance, non-singularity, localization and tunneling flags of one
//! ball across a few energies, at weak and strong disorder.

use std::sync::Arc;

use mpdsa::config_space::{enumerate_ball, projection, Configuration, Geometry};
use mpdsa::disorder::{sample_field, FieldModel, Marginal};
use mpdsa::msa::{evaluate_predicates, CnrPolicy, ScalingParams};
use mpdsa::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

fn main() -> mpdsa::Result<()> {
    let geometry = Geometry::lattice(1);
    let ball = Arc::new(enumerate_ball(&geometry, &Configuration::from_1d(&[1, 0])?, 6)?);
    let sample = sample_field(&FieldModel::iid(Marginal::Uniform), projection(&ball).iter(), 7);
    let params = ScalingParams::finite_range(2, 1, 6);
    let policy = CnrPolicy::default();

    println!("{:>5} {:>6} {:>5} {:>5} {:>5} {:>5} {:>5} {:>10}", "g", "E", "NR", "CNR", "NS", "loc", "tun", "ln||G||");
    for g in [2.0, 30.0] {
        let spec = HamiltonianSpec { g, interaction: InteractionModel::step(1.0, 1), diagonal: DiagonalConvention::InducedDegree };
        for e in [0.5, 2.0, 10.0] {
            let r = evaluate_predicates(&spec, &sample, &ball, e, 1.0, &params, &policy, 2)?;
            println!(
                "{g:>5} {e:>6} {:>5} {:>5} {:>5} {:>5} {:>5} {:>10.3}",
                r.e_nr, r.e_cnr, r.em_ns, r.m_loc, r.m_tunneling, r.log_resolvent_norm
            );
        }
    }
    Ok(())
}
