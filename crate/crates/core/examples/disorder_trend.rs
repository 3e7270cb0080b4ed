//! Probability that a ball is singular at a fixed energy, as the disorder
//! strength grows. Wilson 95% intervals.

use mpdsa::config_space::{Configuration, Geometry};
use mpdsa::disorder::{FieldModel, Marginal};
use mpdsa::experiments::{estimate_event_probability, Event, Model};
use mpdsa::msa::{CnrPolicy, ScalingParams};
use mpdsa::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

fn main() -> mpdsa::Result<()> {
    let center = Configuration::from_1d(&[1, 0])?;
    for g in [1.0, 3.0, 10.0, 30.0] {
        let model = Model {
            geometry: Geometry::lattice(1),
            field: FieldModel::iid(Marginal::Uniform),
            hamiltonian: HamiltonianSpec { g, interaction: InteractionModel::step(1.0, 1), diagonal: DiagonalConvention::InducedDegree },
            params: ScalingParams::finite_range(2, 1, 6),
            policy: CnrPolicy::default(),
        };
        let batch = estimate_event_probability(&model, &Event::Singular { energy: 2.0 }, &center, 6, 300, 9)?;
        let p = batch.estimate;
        println!("g={g:<4} P(singular at E=2) = {:.3} [{:.3}, {:.3}]", p.p_hat, p.ci_low, p.ci_high);
    }
    Ok(())
}
