//! Exact diagonalization, Green functions and the deterministic resolvent
//! toolbox (geometric resolvent inequality, subharmonicity, radial descent).

use std::sync::{Arc, Once};

use faer::{Mat, Side};
use serde::Serialize;

use crate::config_space::{edge_boundary, Ball, Configuration};
use crate::error::{Error, Result};
use crate::operators::OperatorMatrix;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a ball operator.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    ball: Arc<Ball>,
    eigenvalues: Vec<f64>,
    vectors: Mat<f64>,
    matrix: Mat<f64>,
    norm: f64,
}

/// Defects of the spectral-theorem identities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InvariantReport {
    /// `max_j ||H psi_j - lambda_j psi_j|| / ||H||`.
    pub residual: f64,
    /// `max |<psi_i, psi_j> - delta_ij|`.
    pub gram_defect: f64,
    /// `max |sum_j psi_j(x) psi_j(y) - delta_xy|`.
    pub completeness_defect: f64,
}

impl InvariantReport {
    pub fn within(&self, tol: f64) -> bool {
        self.residual < tol && self.gram_defect < tol && self.completeness_defect < tol
    }
}

static SEQUENTIAL: Once = Once::new();

/// Diagonalizes a symmetric operator. Parallelism comes from running
/// independent trials concurrently; each eigensolve is sequential, which also
/// keeps results bit-reproducible.
pub fn diagonalize(h: &OperatorMatrix) -> Result<EigenSystem> {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    let norm = h.norm_inf().max(f64::MIN_POSITIVE);
    let asym = h.max_asymmetry();
    if asym > 1e-12 * norm.max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    let m = h.matrix();
    if (0..m.nrows()).any(|i| (0..m.ncols()).any(|j| !m[(i, j)].is_finite())) {
        return Err(Error::Numerical("operator has non-finite entries".into()));
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    let eigenvalues: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let norm = eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(EigenSystem { ball: h.ball().clone(), eigenvalues, vectors: evd.U().to_owned(), matrix: m.clone(), norm })
}

impl EigenSystem {
    pub fn ball(&self) -> &Arc<Ball> {
        &self.ball
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns.
    pub fn vectors(&self) -> &Mat<f64> {
        &self.vectors
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Spectral norm `max |lambda|`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// `psi_j(x)` for member index `x`.
    pub fn psi(&self, j: usize, x: usize) -> f64 {
        self.vectors[(x, j)]
    }

    pub fn spectral_distance(&self, e: f64) -> f64 {
        // Eigenvalues are sorted: only the neighbours of the insertion point
        // matter.
        let k = self.eigenvalues.partition_point(|&l| l < e);
        let mut d = f64::INFINITY;
        if k < self.dim() {
            d = d.min((self.eigenvalues[k] - e).abs());
        }
        if k > 0 {
            d = d.min((self.eigenvalues[k - 1] - e).abs());
        }
        d
    }

    /// `||G(E)|| = 1 / dist(E, spectrum)`.
    pub fn resolvent_norm(&self, e: f64) -> f64 {
        1.0 / self.spectral_distance(e)
    }

    fn check_resonance(&self, e: f64) -> Result<()> {
        let d = self.spectral_distance(e);
        if d <= 1e-12 * self.norm.max(1.0) {
            return Err(Error::Resonance { energy: e, distance: d });
        }
        Ok(())
    }

    /// Row `G(x, . ; E)` from the eigenfunction expansion.
    pub fn green_row(&self, x: usize, e: f64) -> Result<Vec<f64>> {
        self.check_resonance(e)?;
        let n = self.dim();
        let mut row = vec![0.0; n];
        for j in 0..n {
            let w = self.vectors[(x, j)] / (self.eigenvalues[j] - e);
            if w == 0.0 {
                continue;
            }
            let col = self.vectors.col(j);
            for (r, c) in row.iter_mut().zip(col.iter()) {
                *r += w * c;
            }
        }
        Ok(row)
    }

    /// `G(x, y; E)`.
    pub fn green_entry(&self, x: usize, y: usize, e: f64) -> Result<f64> {
        self.check_resonance(e)?;
        Ok((0..self.dim()).map(|j| self.vectors[(x, j)] * self.vectors[(y, j)] / (self.eigenvalues[j] - e)).sum())
    }

    /// `G(x, y_k; E_l)` for many targets and energies at once, as a
    /// `|ys| x |energies|` matrix. Resonant energies give non-finite columns.
    pub fn green_batch(&self, x: usize, ys: &[usize], energies: &[f64]) -> Mat<f64> {
        let n = self.dim();
        let w = Mat::<f64>::from_fn(ys.len(), n, |r, j| self.vectors[(x, j)] * self.vectors[(ys[r], j)]);
        let d = Mat::<f64>::from_fn(n, energies.len(), |j, l| 1.0 / (self.eigenvalues[j] - energies[l]));
        &w * &d
    }

    /// Defects of the spectral-theorem identities; `O(n^3)`.
    pub fn check_invariants(&self) -> InvariantReport {
        let n = self.dim();
        let scale = self.norm.max(1.0);
        let hv = &self.matrix * &self.vectors;
        let mut residual: f64 = 0.0;
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                let r = hv[(i, j)] - self.eigenvalues[j] * self.vectors[(i, j)];
                s += r * r;
            }
            residual = residual.max(s.sqrt() / scale);
        }
        let gram = self.vectors.transpose() * &self.vectors;
        let comp = &self.vectors * self.vectors.transpose();
        let defect = |m: &Mat<f64>| {
            let mut d: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    d = d.max((m[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
            d
        };
        InvariantReport { residual, gram_defect: defect(&gram), completeness_defect: defect(&comp) }
    }
}

/// Full resolvent kernel at one energy.
#[derive(Clone, Debug)]
pub struct GreenEvaluation {
    pub energy: f64,
    pub kernel: Mat<f64>,
    pub resolvent_norm: f64,
    pub spectral_distance: f64,
}

/// `G(E) = sum_j |psi_j><psi_j| / (lambda_j - E)`.
pub fn green_function(es: &EigenSystem, e: f64) -> Result<GreenEvaluation> {
    es.check_resonance(e)?;
    let n = es.dim();
    let scaled = Mat::<f64>::from_fn(n, n, |i, j| es.vectors[(i, j)] / (es.eigenvalues[j] - e));
    let kernel = &scaled * es.vectors.transpose();
    let spectral_distance = es.spectral_distance(e);
    Ok(GreenEvaluation { energy: e, kernel, resolvent_norm: 1.0 / spectral_distance, spectral_distance })
}

/// Both sides of the geometric resolvent inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GriReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Right side of the weaker form with maxima over `rho = l` and
    /// `rho <= l + 1`.
    pub rhs_weak: f64,
    /// `C_l`: number of boundary edges of the small ball inside the large.
    pub boundary_count: usize,
    /// `|G_L(x,y) - sum over boundary edges of G_l(x,v) G_L(v',y)|`. Zero up to
    /// rounding when the small operator is the restriction of the large one.
    pub identity_defect: f64,
    /// Absolute rounding level of the computed sides; `lhs` below it carries
    /// no information.
    pub rounding_floor: f64,
    pub satisfied: bool,
}

const GRI_SLACK: f64 = 1e-9;
const ROUNDING: f64 = 64.0 * f64::EPSILON;

/// Evaluates `|G_L(x,y)| <= C_l max_{v in ∂⁻} |G_l(x,v)| max_{v' in ∂⁺} |G_L(v',y)|`
/// for `B_l(x) ⊂ B_L`, `y` outside `B_l(x)`.
pub fn verify_gri(small: &EigenSystem, large: &EigenSystem, e: f64, x: &Configuration, y: &Configuration) -> Result<GriReport> {
    let (bs, bl) = (small.ball(), large.ball());
    if bs.center() != x {
        return Err(Error::Geometry(format!("small ball is not centred at {x}")));
    }
    if bs.contains(y) {
        return Err(Error::Geometry(format!("{y} lies inside the small ball")));
    }
    let yi = bl.index_of(y).ok_or_else(|| Error::Geometry(format!("{y} is not in the large ball")))?;
    let xs = bs.center_index();
    let xl = bl.index_of(x).ok_or_else(|| Error::Geometry(format!("{x} is not in the large ball")))?;
    let pairs = edge_boundary(bs, bl)?;
    let gs = small.green_row(xs, e)?;
    let gl_y = large.green_row(yi, e)?;
    let lhs = gl_y[xl].abs();
    let mut max_inner: f64 = 0.0;
    let mut max_outer: f64 = 0.0;
    let mut identity = 0.0;
    for (v, w) in &pairs {
        let gv = gs[bs.index_of(v).unwrap()];
        let gw = gl_y[bl.index_of(w).unwrap()];
        max_inner = max_inner.max(gv.abs());
        max_outer = max_outer.max(gw.abs());
        identity += gv * gw;
    }
    let c = pairs.len() as f64;
    let rhs = c * max_inner * max_outer;
    let l = bs.radius();
    let mut weak_inner: f64 = 0.0;
    for (i, g) in gs.iter().enumerate() {
        if bs.rho_from_center(i) == l {
            weak_inner = weak_inner.max(g.abs());
        }
    }
    let mut weak_outer: f64 = 0.0;
    for (i, m) in bl.members().iter().enumerate() {
        if bl.geometry().rho_unchecked(x.sites(), m.sites()) <= l + 1 {
            weak_outer = weak_outer.max(gl_y[i].abs());
        }
    }
    let rhs_weak = c * weak_inner * weak_outer;
    // Spectral sums carry absolute errors of order eps ||G||.
    let floor = ROUNDING * large.resolvent_norm(e) * (1.0 + c * small.resolvent_norm(e));
    Ok(GriReport {
        lhs,
        rhs,
        rhs_weak,
        boundary_count: pairs.len(),
        identity_defect: (gl_y[xl] - identity).abs(),
        rounding_floor: floor,
        satisfied: lhs <= rhs * (1.0 + GRI_SLACK) + floor && lhs <= rhs_weak * (1.0 + GRI_SLACK) + floor,
    })
}

/// Eigenfunction form at the center `u` of the small ball:
/// `|psi(u)| <= C_l ||G_l(E)|| max_{rho(u,y) <= l+1} |psi(y)|` for an
/// eigenpair `(E, psi)` of the large operator.
pub fn verify_gri_eigenfunction(small: &EigenSystem, large: &EigenSystem, j: usize) -> Result<GriReport> {
    let (bs, bl) = (small.ball(), large.ball());
    let u = bs.center();
    let e = large.eigenvalues[j];
    small.check_resonance(e)?;
    let ui = bl.index_of(u).ok_or_else(|| Error::Geometry(format!("{u} is not in the large ball")))?;
    let pairs = edge_boundary(bs, bl)?;
    let gs = small.green_row(bs.center_index(), e)?;
    let mut identity = 0.0;
    for (v, w) in &pairs {
        identity += gs[bs.index_of(v).unwrap()] * large.psi(j, bl.index_of(w).unwrap());
    }
    let l = bs.radius();
    let mut max_psi: f64 = 0.0;
    for (i, m) in bl.members().iter().enumerate() {
        if bl.geometry().rho_unchecked(u.sites(), m.sites()) <= l + 1 {
            max_psi = max_psi.max(large.psi(j, i).abs());
        }
    }
    let lhs = large.psi(j, ui).abs();
    let rhs = pairs.len() as f64 * small.resolvent_norm(e) * max_psi;
    // Eigenvector entries are accurate to about eps ||H|| / gap.
    let ev = &large.eigenvalues;
    let gap = [j.checked_sub(1), Some(j + 1).filter(|&k| k < ev.len())]
        .into_iter()
        .flatten()
        .map(|k| (ev[k] - e).abs())
        .fold(f64::INFINITY, f64::min);
    let floor = ROUNDING * large.norm.max(1.0) / gap * (1.0 + pairs.len() as f64 * small.resolvent_norm(e));
    Ok(GriReport {
        lhs,
        rhs,
        rhs_weak: rhs,
        boundary_count: pairs.len(),
        identity_defect: (large.psi(j, ui) - identity).abs(),
        rounding_floor: floor,
        satisfied: lhs <= rhs * (1.0 + GRI_SLACK) + floor,
    })
}

/// Outcome of an `(l, q)`-subharmonicity check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubharmonicReport {
    pub holds: bool,
    /// Largest `f(z) / max_{rho(z,y) <= l} f(y)` over admissible `z`.
    pub worst_ratio: f64,
    pub witness: Option<usize>,
    pub admissible_centers: usize,
}

/// Checks `f(z) <= q max_{rho(z,y) <= l} f(y)` at every `z` whose `l`-ball
/// lies in `domain`, i.e. `rho(center, z) + l <= R`. `f` is indexed by the
/// members of `domain`.
pub fn subharmonic_check(f: &[f64], domain: &Ball, l: u64, q: f64) -> Result<SubharmonicReport> {
    if f.len() != domain.len() {
        return Err(Error::DimensionMismatch(format!("{} values for {} ball members", f.len(), domain.len())));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("q must lie in (0, 1), got {q}")));
    }
    let r = domain.radius();
    let mut worst: f64 = 0.0;
    let mut witness = None;
    let mut holds = true;
    let mut count = 0;
    for z in 0..domain.len() {
        if domain.rho_from_center(z) + l > r {
            continue;
        }
        count += 1;
        let local = (0..domain.len())
            .filter(|&y| domain.rho_between(z, y) <= l)
            .fold(0.0f64, |m, y| m.max(f[y]));
        if f[z] > q * local {
            holds = false;
        }
        let ratio = if f[z] == 0.0 { 0.0 } else { f[z] / local };
        if ratio > worst || witness.is_none() {
            worst = worst.max(ratio);
            witness = Some(z);
        }
    }
    Ok(SubharmonicReport { holds, worst_ratio: worst, witness, admissible_centers: count })
}

/// `q^{floor((L+1)/(l+1))} M`.
pub fn radial_descent_bound(big_l: u64, l: u64, q: f64, m: f64) -> f64 {
    q.powi(((big_l + 1) / (l + 1)) as i32) * m
}

/// Two-variable form: exponents of the two radii add.
pub fn radial_descent_bound2(r1: u64, r2: u64, l: u64, q: f64, m: f64) -> f64 {
    q.powi(((r1 + 1) / (l + 1) + (r2 + 1) / (l + 1)) as i32) * m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::{enumerate_ball, Geometry};
    use crate::operators::{laplacian_matrix, DiagonalConvention};
    use rand::{Rng, SeedableRng};

    fn ball1(xs: &[i64], l: u64) -> Arc<Ball> {
        Arc::new(enumerate_ball(&Geometry::lattice(1), &Configuration::from_1d(xs).unwrap(), l).unwrap())
    }

    fn op(b: &Arc<Ball>, m: Mat<f64>) -> OperatorMatrix {
        OperatorMatrix::new(b.clone(), m).unwrap()
    }

    #[test]
    fn path_spectrum() {
        let h = laplacian_matrix(&ball1(&[1], 1), DiagonalConvention::InducedDegree);
        let es = diagonalize(&h).unwrap();
        for (a, b) in es.eigenvalues().iter().zip([0.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(es.check_invariants().within(1e-9));
    }

    #[test]
    fn diagonal_and_scalar_matrices() {
        let b = ball1(&[1], 1);
        let es = diagonalize(&op(&b, Mat::from_fn(3, 3, |i, j| if i == j { [3.0, -1.0, 2.0][i] } else { 0.0 }))).unwrap();
        assert_eq!(es.eigenvalues(), &[-1.0, 2.0, 3.0]);
        let one = ball1(&[0], 0);
        let es = diagonalize(&op(&one, Mat::from_fn(1, 1, |_, _| 3.0))).unwrap();
        assert_eq!(es.eigenvalues(), &[3.0]);
        assert_eq!(es.psi(0, 0).abs(), 1.0);
        let g = green_function(&es, 1.0).unwrap();
        assert_eq!(g.kernel[(0, 0)], 0.5);
        assert!(matches!(green_function(&es, 3.0), Err(Error::Resonance { .. })));
        let asym = Mat::from_fn(3, 3, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        assert!(matches!(diagonalize(&op(&b, asym)), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn green_function_inverts_random_operator() {
        let b = ball1(&[3, 1], 2);
        let n = b.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        let diag: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0).collect();
        let mut h = laplacian_matrix(&b, DiagonalConvention::InducedDegree).matrix().clone();
        for i in 0..n {
            h[(i, i)] += diag[i];
        }
        let es = diagonalize(&op(&b, h.clone())).unwrap();
        assert!(es.check_invariants().within(1e-9));
        let e = 1.2345;
        let g = green_function(&es, e).unwrap();
        let mut shifted = h.clone();
        for i in 0..n {
            shifted[(i, i)] -= e;
        }
        let prod = &shifted * &g.kernel;
        for i in 0..n {
            for j in 0..n {
                assert!((prod[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
                assert!((g.kernel[(i, j)] - g.kernel[(j, i)]).abs() < 1e-12);
            }
        }
        assert!((g.resolvent_norm * g.spectral_distance - 1.0).abs() < 1e-12);
        let row = es.green_row(4, e).unwrap();
        let batch = es.green_batch(4, &[0, 7], &[e]);
        assert!((row[0] - batch[(0, 0)]).abs() < 1e-12 && (row[7] - batch[(1, 0)]).abs() < 1e-12);
        assert!((row[7] - es.green_entry(4, 7, e).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gri_with_trivial_field() {
        let big = ball1(&[10, 3], 4);
        let x = Configuration::from_1d(&[10, 3]).unwrap();
        let small = Arc::new(big.sub_ball(&x, 1).unwrap());
        let hl = diagonalize(&laplacian_matrix(&big, DiagonalConvention::Fixed)).unwrap();
        let hs = diagonalize(&laplacian_matrix(&small, DiagonalConvention::Fixed)).unwrap();
        let y = Configuration::from_1d(&[12, 3]).unwrap();
        let r = verify_gri(&hs, &hl, -0.5, &x, &y).unwrap();
        assert!(r.satisfied, "{r:?}");
        assert!(r.identity_defect < 1e-12);
        let ef = verify_gri_eigenfunction(&hs, &hl, 0).unwrap();
        assert!(ef.satisfied, "{ef:?}");
    }

    #[test]
    fn subharmonic_examples() {
        let b = ball1(&[0], 4);
        let q = 0.5;
        assert!(!subharmonic_check(&vec![2.0; b.len()], &b, 1, q).unwrap().holds);
        assert_eq!(subharmonic_check(&vec![2.0; b.len()], &b, 1, q).unwrap().worst_ratio, 1.0);
        assert!(subharmonic_check(&vec![0.0; b.len()], &b, 1, q).unwrap().holds);
        // Geometric decay away from a peak just outside the domain.
        let f: Vec<f64> = b.members().iter().map(|c| q.powi((5 - c.sites()[0].0[0]) as i32) * 3.0).collect();
        let rep = subharmonic_check(&f, &b, 1, q).unwrap();
        assert!(rep.holds);
        assert!((rep.worst_ratio - q).abs() < 1e-15);
        assert!(f[b.center_index()] <= radial_descent_bound(3, 1, q, 3.0));
    }

    #[test]
    fn radial_descent_examples() {
        assert_eq!(radial_descent_bound(7, 1, 0.5, 1.0), 0.0625);
        assert_eq!(radial_descent_bound(4, 4, 0.3, 2.0), 0.3 * 2.0);
        assert_eq!(radial_descent_bound2(3, 3, 1, 0.5, 1.0), 0.0625);
    }
}
