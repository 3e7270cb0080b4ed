//! A partially interactive ball splits into two clusters; with a
//! finite-range interaction its Hamiltonian is the Kronecker sum of the
//! cluster Hamiltonians.

use std::sync::Arc;

use mpdsa::config_space::{canonical_decomposition, classify_ball, enumerate_ball, projection, Configuration, Geometry};
use mpdsa::disorder::{sample_field, FieldModel, Marginal};
use mpdsa::msa::{solve_ball, ScalingParams};
use mpdsa::operators::{assemble_hamiltonian, kronecker_sum, DiagonalConvention, HamiltonianSpec, InteractionModel};

fn main() -> mpdsa::Result<()> {
    let geometry = Geometry::lattice(1);
    let params = ScalingParams::finite_range(3, 1, 2);
    let ball = Arc::new(enumerate_ball(&geometry, &Configuration::from_1d(&[40, 2, 0])?, 2)?);
    println!("class {:?}", classify_ball(&ball, &params));
    let d = canonical_decomposition(&ball, &params)?;
    println!("split {} | {} at separation {}", d.x1, d.x2, d.separation);

    let spec = HamiltonianSpec { g: 8.0, interaction: InteractionModel::step(1.5, 1), diagonal: DiagonalConvention::InducedDegree };
    let sample = sample_field(&FieldModel::iid(Marginal::Uniform), projection(&ball).iter(), 5);
    let b1 = Arc::new(enumerate_ball(&geometry, &d.x1, 2)?);
    let b2 = Arc::new(enumerate_ball(&geometry, &d.x2, 2)?);
    let k = kronecker_sum(&assemble_hamiltonian(&spec, &b1, &sample)?, &assemble_hamiltonian(&spec, &b2, &sample)?)?;
    let h = assemble_hamiltonian(&spec, &ball, &sample)?;
    let gap = (0..h.dim()).flat_map(|i| (0..h.dim()).map(move |j| (i, j))).map(|(i, j)| (h.get(i, j) - k.get(i, j)).abs()).fold(0.0, f64::max);
    println!("max |H - (H1 + H2)| = {gap:.1e}");

    let (e1, e2) = (solve_ball(&spec, &sample, &b1)?, solve_ball(&spec, &sample, &b2)?);
    let mut sums: Vec<f64> = e1.eigenvalues().iter().flat_map(|a| e2.eigenvalues().iter().map(move |b| a + b)).collect();
    sums.sort_by(f64::total_cmp);
    let es = solve_ball(&spec, &sample, &ball)?;
    let worst = es.eigenvalues().iter().zip(&sums).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{} eigenvalues, max deviation from pairwise sums {worst:.1e}", es.dim());
    Ok(())
}
