use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::config_space::{find_separability_witness, Configuration, SeparabilityWitness};
use crate::disorder::{derive_seed, FieldKind, Marginal, W3Constants};
use crate::error::{Error, Result};

/// `h_L(s) = C'' L^{A''} (2s)^{b''} + |B'| |B''| C' L^{A'} (2s)^{b'}`.
pub fn h_l(s: f64, l: u64, w3: &W3Constants, size_x: usize, size_y: usize) -> f64 {
    assert!(s >= 0.0, "h_L needs s >= 0, got {s}");
    let lf = l as f64;
    let two_s = 2.0 * s;
    w3.c_double * lf.powf(w3.a_double) * two_s.powf(w3.b_double)
        + (size_x * size_y) as f64 * w3.c_prime * lf.powf(w3.a_prime) * two_s.powf(w3.b_prime)
}

/// Concentration bound for a distant pair, `(2L+1)^{2Nd} h_L(2s)`.
pub fn evc_theorem_bound(s: f64, l: u64, n: usize, d: usize, w3: &W3Constants, size_x: usize, size_y: usize) -> f64 {
    ((2 * l + 1) as f64).powi((2 * n * d) as i32) * h_l(2.0 * s, l, w3, size_x, size_y)
}

/// `P(|X - Y| <= s)` for independent uniform `gX`, `gY`: `2u - u^2` with
/// `u = min(s / |g|, 1)`.
pub fn single_site_closed_form(s: f64, g: f64) -> f64 {
    let u = (s / g.abs()).clamp(0.0, 1.0);
    2.0 * u - u * u
}

/// `min |lambda - mu|` over two ascending spectra.
pub fn min_spectral_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut best = f64::INFINITY;
    while i < a.len() && j < b.len() {
        best = best.min((a[i] - b[j]).abs());
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// Least squares `ln F = ln c + b ln s` over points with `0 < F < 1`;
/// `None` with fewer than two such points.
pub fn power_law_fit(s: &[f64], cdf: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> =
        s.iter().zip(cdf).filter(|&(&x, &f)| x > 0.0 && f > 0.0 && f < 1.0).map(|(x, f)| (x.ln(), f.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let (slope, intercept) = super::dynamics::linear_fit(&pts)?;
    Some((intercept.exp(), slope))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvcSetup {
    pub x: Configuration,
    pub y: Configuration,
    pub radius: u64,
    pub trials: usize,
    pub s_grid: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub w3: W3Constants,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvcReport {
    pub s_grid: Vec<f64>,
    /// Empirical `P(dist(sigma(H'), sigma(H'')) <= s)`.
    pub cdf: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `h_L(2 s / |g|)`, the bound for a weakly separable pair.
    pub bound: Vec<f64>,
    /// `(2L+1)^{2Nd} h_L(2 s / |g|)`.
    pub theorem_bound: Vec<f64>,
    pub constants: W3Constants,
    pub sizes: (usize, usize),
    pub separable: bool,
    pub witness: Option<SeparabilityWitness>,
    /// `(c, b)` of `F ~ c s^b`.
    pub power_law: Option<(f64, f64)>,
    pub closed_form: Option<Vec<f64>>,
    /// Every grid point within three binomial standard errors of the closed form.
    pub closed_form_pass: Option<bool>,
    pub warnings: Vec<String>,
}

impl EvcReport {
    pub fn is_monotone(&self) -> bool {
        let mut idx: Vec<usize> = (0..self.s_grid.len()).collect();
        idx.sort_by(|&a, &b| self.s_grid[a].total_cmp(&self.s_grid[b]));
        idx.windows(2).all(|w| self.cdf[w[0]] <= self.cdf[w[1]])
    }
}

/// Distribution of the distance between the spectra of two balls.
///
/// The bound curves are stated for the unit-coupling field, so they are
/// evaluated at `s / |g|`. A pair without a separability witness only
/// produces a warning.
pub fn evc_experiment(model: &Model, setup: &EvcSetup) -> Result<EvcReport> {
    if setup.trials == 0 {
        return Err(Error::InvalidParameter("EVC needs at least one trial".into()));
    }
    if setup.s_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter("s-grid values must be finite and nonnegative".into()));
    }
    let bx = model.ball(&setup.x, setup.radius)?;
    let by = model.ball(&setup.y, setup.radius)?;
    let mut warnings = Vec::new();
    let witness = if model.geometry.is_lattice() { find_separability_witness(&bx, &by)? } else { None };
    let single = setup.radius == 0 && bx.n_particles() == 1 && setup.x != setup.y;
    if witness.is_none() && !single {
        warnings.push(format!("balls at {} and {} have no weak-separability witness; bounds do not apply", setup.x, setup.y));
    }
    let mut dists = (0..setup.trials)
        .into_par_iter()
        .map(|t| {
            let sample = model.sample(&[&bx, &by], derive_seed(setup.seed, t as u64));
            let a = model.solve(&bx, &sample)?;
            let b = model.solve(&by, &sample)?;
            Ok(min_spectral_distance(a.eigenvalues(), b.eigenvalues()))
        })
        .collect::<Result<Vec<f64>>>()?;
    dists.sort_by(f64::total_cmp);
    let n = setup.trials as f64;
    let cdf: Vec<f64> = setup.s_grid.iter().map(|&s| dists.partition_point(|&d| d <= s) as f64 / n).collect();
    let stderr = cdf.iter().map(|&f| (f * (1.0 - f) / n).sqrt()).collect();
    let g = model.hamiltonian.g.abs();
    let (nx, ny) = (bx.len(), by.len());
    let dim = model.geometry.dim();
    let np = bx.n_particles();
    let bound = setup.s_grid.iter().map(|&s| h_l(2.0 * s / g, setup.radius, &setup.w3, nx, ny)).collect();
    let theorem_bound =
        setup.s_grid.iter().map(|&s| evc_theorem_bound(s / g, setup.radius, np, dim, &setup.w3, nx, ny)).collect();
    let analytic = single && model.field.kind == FieldKind::Iid && model.field.marginal == Marginal::Uniform;
    let closed_form: Option<Vec<f64>> =
        analytic.then(|| setup.s_grid.iter().map(|&s| single_site_closed_form(s, g)).collect());
    let closed_form_pass = closed_form.as_ref().map(|cf| {
        cf.iter().zip(&cdf).all(|(&p, &f)| (f - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt() + 1e-12)
    });
    Ok(EvcReport {
        power_law: power_law_fit(&setup.s_grid, &cdf),
        s_grid: setup.s_grid.clone(),
        cdf,
        stderr,
        bound,
        theorem_bound,
        constants: setup.w3,
        sizes: (nx, ny),
        separable: witness.is_some() || single,
        witness,
        closed_form,
        closed_form_pass,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::Geometry;
    use crate::disorder::FieldModel;
    use crate::msa::{CnrPolicy, ScalingParams};
    use crate::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

    #[test]
    fn h_l_examples() {
        let w = W3Constants { c_prime: 1.0, c_double: 1.0, a_prime: 0.0, a_double: 0.0, b_prime: 1.0, b_double: 1.0 };
        assert!((h_l(0.1, 5, &w, 1, 1) - 0.4).abs() < 1e-15);
        assert_eq!(h_l(0.0, 5, &w, 3, 4), 0.0);
        let first = h_l(0.1, 5, &w, 0, 1);
        let second = h_l(0.1, 5, &w, 1, 1) - first;
        assert!((h_l(0.1, 5, &w, 2, 1) - (first + 2.0 * second)).abs() < 1e-15);
        assert!(h_l(0.2, 5, &w, 2, 2) >= h_l(0.1, 5, &w, 2, 2));
    }

    #[test]
    fn spectral_distance_merge() {
        assert_eq!(min_spectral_distance(&[0.0, 3.0, 7.0], &[1.5, 6.5, 10.0]), 0.5);
        assert_eq!(min_spectral_distance(&[1.0], &[1.0]), 0.0);
    }

    #[test]
    fn closed_form_single_sites() {
        let model = Model {
            geometry: Geometry::lattice(1),
            field: FieldModel::iid(Marginal::Uniform),
            hamiltonian: HamiltonianSpec { g: 5.0, interaction: InteractionModel::none(), diagonal: DiagonalConvention::InducedDegree },
            params: ScalingParams::finite_range(1, 1, 3),
            policy: CnrPolicy::default(),
        };
        let setup = EvcSetup {
            x: Configuration::from_1d(&[0]).unwrap(),
            y: Configuration::from_1d(&[10]).unwrap(),
            radius: 0,
            trials: 2000,
            s_grid: vec![0.0, 0.05, 0.25, 0.5, 1.0, 2.5, 5.0],
            seed: 3,
            w3: W3Constants::default(),
        };
        let rep = evc_experiment(&model, &setup).unwrap();
        assert_eq!(rep.cdf[0], 0.0);
        assert_eq!(rep.closed_form_pass, Some(true), "{:?} vs {:?}", rep.cdf, rep.closed_form);
        assert!(rep.is_monotone());
        assert_eq!(*rep.cdf.last().unwrap(), 1.0);
        let (_, b) = rep.power_law.unwrap();
        assert!(b > 0.5 && b < 1.5, "exponent {b}");
    }

    #[test]
    fn power_law_recovers_exponent() {
        let s = [0.01, 0.02, 0.05, 0.1];
        let f: Vec<f64> = s.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        let (c, b) = power_law_fit(&s, &f).unwrap();
        assert!((c - 3.0).abs() < 1e-9 && (b - 1.5).abs() < 1e-12);
    }
}
