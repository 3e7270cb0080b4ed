//! Two fermions on a line: enumerate a ball in the ordered sector, assemble
//! the disordered Hamiltonian and diagonalize it.

use std::sync::Arc;

use mpdsa::config_space::{enumerate_ball, projection, Configuration, Geometry};
use mpdsa::disorder::{sample_field, FieldModel, Marginal};
use mpdsa::operators::{assemble_hamiltonian, DiagonalConvention, HamiltonianSpec, InteractionModel};
use mpdsa::spectral::diagonalize;

fn main() -> mpdsa::Result<()> {
    let geometry = Geometry::lattice(1);
    let center = Configuration::from_1d(&[3, 0])?;
    let ball = Arc::new(enumerate_ball(&geometry, &center, 4)?);
    println!("B_4({center}) has {} configurations", ball.len());

    let sample = sample_field(&FieldModel::iid(Marginal::Uniform), projection(&ball).iter(), 42);
    let spec = HamiltonianSpec {
        g: 5.0,
        interaction: InteractionModel::step(1.0, 1),
        diagonal: DiagonalConvention::InducedDegree,
    };
    let h = assemble_hamiltonian(&spec, &ball, &sample)?;
    let es = diagonalize(&h)?;

    for (j, e) in es.eigenvalues().iter().take(8).enumerate() {
        println!("lambda_{j:<2} = {e:.6}");
    }
    let inv = es.check_invariants();
    println!("residual {:.1e}, gram {:.1e}, completeness {:.1e}", inv.residual, inv.gram_defect, inv.completeness_defect);
    Ok(())
}
