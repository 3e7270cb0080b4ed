//! Eigenfunction correlators and propagator bounds from the center of a
//! strongly disordered ball, with the exponential decay fit.

use mpdsa::config_space::{Configuration, Geometry};
use mpdsa::disorder::{FieldModel, Marginal};
use mpdsa::experiments::{correlator_report, log_t_grid, Model};
use mpdsa::msa::{CnrPolicy, ScalingParams};
use mpdsa::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

fn main() -> mpdsa::Result<()> {
    let model = Model {
        geometry: Geometry::lattice(1),
        field: FieldModel::iid(Marginal::Uniform),
        hamiltonian: HamiltonianSpec { g: 20.0, interaction: InteractionModel::step(1.0, 1), diagonal: DiagonalConvention::InducedDegree },
        params: ScalingParams::finite_range(2, 1, 6),
        policy: CnrPolicy::default(),
    };
    let center = Configuration::from_1d(&[20, 0])?;
    let ball = model.ball(&center, 8)?;
    let es = model.solve(&ball, &model.sample(&[&ball], 11))?;
    let ys: Vec<Configuration> = (0..=8).map(|k| Configuration::from_1d(&[20 + k, 0])).collect::<Result<_, _>>()?;
    let rep = correlator_report(&es, &center, &ys, None, &log_t_grid(1000))?;
    for r in &rep.rows {
        println!("rho={} Q={:.3e} propagator={:.3e}", r.rho, r.q, r.propagator);
    }
    if let Some(fit) = &rep.fit {
        println!("m_eff={:.3} residual={:.3}", fit.m_eff, fit.residual);
    }
    println!("max Q {:.6}, completeness defect {:.1e}", rep.max_q, rep.max_completeness_defect);
    Ok(())
}
