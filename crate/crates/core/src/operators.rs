//! Finite-volume Hamiltonians `H = -Δ + g V + U` on sector balls.

use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::config_space::{Ball, Configuration, Geometry};
use crate::disorder::{potential_energy, FieldSample};
use crate::error::{Error, Result};

/// Two-body potential `U(r)` as a function of the single-particle distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionKind {
    None,
    /// `U(r) = amplitude` for `r <= range`, zero beyond.
    Step { amplitude: f64, range: u64 },
    /// `U(r) = c_amp exp(-c_rate r^{1 - theta})`.
    SubExponential { c_amp: f64, c_rate: f64, theta: f64 },
    /// `U(r) = values[r]`, zero past the end.
    Table { values: Vec<f64> },
}

/// How the pair sum in `U(x)` runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSum {
    /// `sum_{i != j}`, each pair counted twice.
    #[default]
    Ordered,
    /// `sum_{i < j}`.
    Unordered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawInteraction")]
pub struct InteractionModel {
    #[serde(flatten)]
    pub kind: InteractionKind,
    /// `U_R(r) = 1_{r <= R} U(r)` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u64>,
    #[serde(default)]
    pub pair_sum: PairSum,
}

// Flattened tags and `deny_unknown_fields` do not combine in serde, so the
// wire form is read through an internally tagged mirror.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawInteraction {
    None {
        #[serde(default)]
        truncation: Option<u64>,
        #[serde(default)]
        pair_sum: PairSum,
    },
    Step {
        amplitude: f64,
        range: u64,
        #[serde(default)]
        truncation: Option<u64>,
        #[serde(default)]
        pair_sum: PairSum,
    },
    SubExponential {
        c_amp: f64,
        c_rate: f64,
        theta: f64,
        #[serde(default)]
        truncation: Option<u64>,
        #[serde(default)]
        pair_sum: PairSum,
    },
    Table {
        values: Vec<f64>,
        #[serde(default)]
        truncation: Option<u64>,
        #[serde(default)]
        pair_sum: PairSum,
    },
}

impl From<RawInteraction> for InteractionModel {
    fn from(raw: RawInteraction) -> Self {
        let (kind, truncation, pair_sum) = match raw {
            RawInteraction::None { truncation, pair_sum } => (InteractionKind::None, truncation, pair_sum),
            RawInteraction::Step { amplitude, range, truncation, pair_sum } => {
                (InteractionKind::Step { amplitude, range }, truncation, pair_sum)
            }
            RawInteraction::SubExponential { c_amp, c_rate, theta, truncation, pair_sum } => {
                (InteractionKind::SubExponential { c_amp, c_rate, theta }, truncation, pair_sum)
            }
            RawInteraction::Table { values, truncation, pair_sum } => (InteractionKind::Table { values }, truncation, pair_sum),
        };
        InteractionModel { kind, truncation, pair_sum }
    }
}

impl InteractionModel {
    pub fn none() -> Self {
        Self::from_kind(InteractionKind::None)
    }

    pub fn step(amplitude: f64, range: u64) -> Self {
        Self::from_kind(InteractionKind::Step { amplitude, range })
    }

    pub fn sub_exponential(c_amp: f64, c_rate: f64, theta: f64) -> Self {
        Self::from_kind(InteractionKind::SubExponential { c_amp, c_rate, theta })
    }

    pub fn from_kind(kind: InteractionKind) -> Self {
        InteractionModel { kind, truncation: None, pair_sum: PairSum::Ordered }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            InteractionKind::SubExponential { c_amp, c_rate, theta } => {
                if !(c_amp.is_finite() && *c_rate > 0.0 && (0.0..1.0).contains(theta)) {
                    return Err(Error::InvalidParameter(
                        "sub-exponential interaction needs finite C, c > 0 and theta in [0, 1)".into(),
                    ));
                }
            }
            InteractionKind::Step { amplitude, .. } if !amplitude.is_finite() => {
                return Err(Error::InvalidParameter("step amplitude must be finite".into()));
            }
            InteractionKind::Table { values } if values.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidParameter("interaction table must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Largest distance with a possibly nonzero value, if finite.
    pub fn support_radius(&self) -> Option<u64> {
        let own = match &self.kind {
            InteractionKind::None => Some(0),
            InteractionKind::Step { range, .. } => Some(*range),
            InteractionKind::SubExponential { .. } => None,
            InteractionKind::Table { values } => Some(values.len().saturating_sub(1) as u64),
        };
        match (own, self.truncation) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// `U(r)`, including truncation.
    pub fn potential(&self, r: u64) -> f64 {
        if self.truncation.is_some_and(|t| r > t) {
            return 0.0;
        }
        match &self.kind {
            InteractionKind::None => 0.0,
            InteractionKind::Step { amplitude, range } => {
                if r <= *range {
                    *amplitude
                } else {
                    0.0
                }
            }
            InteractionKind::SubExponential { c_amp, c_rate, theta } => {
                c_amp * (-c_rate * (r as f64).powf(1.0 - theta)).exp()
            }
            InteractionKind::Table { values } => values.get(r as usize).copied().unwrap_or(0.0),
        }
    }

    /// `sup_{r > R} |U(r)|` over real `r` for the closed-form kinds, over
    /// integers for tables.
    pub fn tail_sup(&self, r: u64) -> f64 {
        if self.truncation.is_some_and(|t| t <= r) {
            return 0.0;
        }
        match &self.kind {
            InteractionKind::None => 0.0,
            InteractionKind::Step { amplitude, range } => {
                if *range > r {
                    amplitude.abs()
                } else {
                    0.0
                }
            }
            InteractionKind::SubExponential { c_amp, c_rate, theta } => {
                c_amp.abs() * (-c_rate * (r as f64).powf(1.0 - theta)).exp()
            }
            InteractionKind::Table { values } => {
                let end = self.truncation.map_or(values.len(), |t| values.len().min(t as usize + 1));
                values.iter().take(end).skip(r as usize + 1).fold(0.0, |m, v| m.max(v.abs()))
            }
        }
    }

    fn pair_factor(&self) -> f64 {
        match self.pair_sum {
            PairSum::Ordered => 2.0,
            PairSum::Unordered => 1.0,
        }
    }
}

/// `U_R`: pointwise truncation at `R`. Leaves models already supported in
/// `[0, R]` unchanged, so repeated truncation keeps the smallest radius.
pub fn truncate_interaction(model: &InteractionModel, r: u64) -> InteractionModel {
    if model.support_radius().is_some_and(|s| s <= r) {
        return model.clone();
    }
    InteractionModel { truncation: Some(model.truncation.map_or(r, |t| t.min(r))), ..model.clone() }
}

/// `U(x) = sum_{i != j} U(d(x_i, x_j))`, halved under [`PairSum::Unordered`].
pub fn interaction_energy(geometry: &Geometry, x: &Configuration, model: &InteractionModel) -> f64 {
    let s = x.sites();
    let mut total = 0.0;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            total += model.potential(geometry.site_distance(&s[i], &s[j]));
        }
    }
    model.pair_factor() * total
}

/// Two-body bound on `sup |U(x) - U(x') - U(x'')|` over splits with
/// `dist(x', x'') > R`: the cross pairs number at most
/// `max n' n'' = floor(N/2) ceil(N/2)`.
pub fn epsilon_bound(model: &InteractionModel, n: usize, r: u64) -> f64 {
    let cross = ((n / 2) * n.div_ceil(2)) as f64;
    model.pair_factor() * cross * model.tail_sup(r)
}

/// Bound on `sup_x |U(x) - U_R(x)|` over all `N`-particle configurations.
pub fn truncation_error_bound(model: &InteractionModel, n: usize, r: u64) -> f64 {
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    model.pair_factor() * pairs * model.tail_sup(r)
}

/// Diagonal part of the kinetic term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalConvention {
    /// Degree in the induced ball graph; rows of `-Δ` sum to zero.
    #[default]
    InducedDegree,
    /// Constant `2 N d`, the Dirichlet restriction.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub g: f64,
    pub interaction: InteractionModel,
    #[serde(default)]
    pub diagonal: DiagonalConvention,
}

/// Dense symmetric operator on a ball, rows indexed by ball members.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    ball: Arc<Ball>,
    matrix: Mat<f64>,
}

impl OperatorMatrix {
    pub fn new(ball: Arc<Ball>, matrix: Mat<f64>) -> Result<Self> {
        if matrix.nrows() != ball.len() || matrix.ncols() != ball.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for a ball with {} members",
                matrix.nrows(),
                matrix.ncols(),
                ball.len()
            )));
        }
        Ok(OperatorMatrix { ball, matrix })
    }

    pub fn ball(&self) -> &Arc<Ball> {
        &self.ball
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in j + 1..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    /// Max absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn write_triplets_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row", "col", "value"])?;
        for (i, j, v) in self.triplets() {
            wr.serialize((i, j, v))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// JSON array of the ball members, position = row index.
    pub fn index_map_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self.ball.members())?)
    }
}

/// `-Δ` on the ball's induced sector graph.
pub fn laplacian_matrix(ball: &Arc<Ball>, convention: DiagonalConvention) -> OperatorMatrix {
    let n = ball.len();
    let fixed = (2 * ball.n_particles() * ball.geometry().site_dim()) as f64;
    let fixed = match ball.geometry() {
        Geometry::Graph(g) if convention == DiagonalConvention::Fixed => {
            (ball.n_particles() * g.max_degree()) as f64
        }
        _ => fixed,
    };
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = match convention {
            DiagonalConvention::InducedDegree => ball.degree(i) as f64,
            DiagonalConvention::Fixed => fixed,
        };
        for &j in ball.neighbors(i) {
            m[(i, j)] = -1.0;
        }
    }
    OperatorMatrix { ball: ball.clone(), matrix: m }
}

/// `-Δ + diag(g V(x) + U(x))`.
pub fn assemble_hamiltonian(spec: &HamiltonianSpec, ball: &Arc<Ball>, sample: &FieldSample) -> Result<OperatorMatrix> {
    let mut h = laplacian_matrix(ball, spec.diagonal);
    for (i, x) in ball.members().iter().enumerate() {
        let v = if spec.g == 0.0 { 0.0 } else { spec.g * potential_energy(x, sample)? };
        h.matrix[(i, i)] += v + interaction_energy(ball.geometry(), x, &spec.interaction);
    }
    Ok(h)
}

/// `H_A ⊗ 1 + 1 ⊗ H_B` indexed by the product ball `B_A x B_B`.
///
/// The product index set is the ball around the union of the two centers;
/// rows follow that ball's ordering.
pub fn kronecker_sum(ha: &OperatorMatrix, hb: &OperatorMatrix) -> Result<OperatorMatrix> {
    let (ba, bb) = (ha.ball(), hb.ball());
    if ba.radius() != bb.radius() {
        return Err(Error::Geometry("factor balls need a common radius".into()));
    }
    let center = ba.center().union(bb.center())?;
    let whole = Arc::new(Ball::new(ba.geometry(), center, ba.radius())?);
    if whole.len() != ba.len() * bb.len() {
        return Err(Error::Geometry(format!(
            "ball does not factorize: {} members vs {} x {}",
            whole.len(),
            ba.len(),
            bb.len()
        )));
    }
    let mut pos = vec![0usize; whole.len()];
    for (ia, a) in ba.members().iter().enumerate() {
        for (ib, b) in bb.members().iter().enumerate() {
            let c = a.union(b).map_err(|_| Error::Geometry("factor balls overlap".into()))?;
            let k = whole
                .index_of(&c)
                .ok_or_else(|| Error::Geometry(format!("product point {c} is not in the ball")))?;
            pos[k] = ia * bb.len() + ib;
        }
    }
    let nb = bb.len();
    let n = whole.len();
    let m = Mat::<f64>::from_fn(n, n, |r, c| {
        let (p, q) = (pos[r], pos[c]);
        let (ia, ib) = (p / nb, p % nb);
        let (ja, jb) = (q / nb, q % nb);
        let mut v = 0.0;
        if ib == jb {
            v += ha.matrix[(ia, ja)];
        }
        if ia == ja {
            v += hb.matrix[(ib, jb)];
        }
        v
    });
    Ok(OperatorMatrix { ball: whole, matrix: m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::enumerate_ball;
    use crate::disorder::{sample_field, FieldModel, Marginal};

    fn ball1(xs: &[i64], l: u64) -> Arc<Ball> {
        Arc::new(enumerate_ball(&Geometry::lattice(1), &Configuration::from_1d(xs).unwrap(), l).unwrap())
    }

    #[test]
    fn path_laplacian() {
        let h = laplacian_matrix(&ball1(&[1], 1), DiagonalConvention::InducedDegree);
        let want = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h.get(i, j), want[i][j]);
            }
            assert_eq!((0..3).map(|j| h.get(i, j)).sum::<f64>(), 0.0);
        }
        let one = ball1(&[0], 0);
        assert_eq!(laplacian_matrix(&one, DiagonalConvention::InducedDegree).get(0, 0), 0.0);
        assert_eq!(laplacian_matrix(&one, DiagonalConvention::Fixed).get(0, 0), 2.0);
    }

    #[test]
    fn two_particle_laplacian_row_sums_vanish() {
        let h = laplacian_matrix(&ball1(&[3, 1], 2), DiagonalConvention::InducedDegree);
        for i in 0..h.dim() {
            assert_eq!((0..h.dim()).map(|j| h.get(i, j)).sum::<f64>(), 0.0);
        }
        assert_eq!(h.max_asymmetry(), 0.0);
    }

    #[test]
    fn interaction_examples() {
        let g = Geometry::lattice(1);
        let x = Configuration::from_1d(&[0, 1, 5]).unwrap();
        assert_eq!(interaction_energy(&g, &x, &InteractionModel::step(2.0, 1)), 4.0);
        let mut half = InteractionModel::step(2.0, 1);
        half.pair_sum = PairSum::Unordered;
        assert_eq!(interaction_energy(&g, &x, &half), 2.0);
        let one = Configuration::from_1d(&[3]).unwrap();
        assert_eq!(interaction_energy(&g, &one, &InteractionModel::step(2.0, 1)), 0.0);
        let se = InteractionModel::sub_exponential(1.0, 1.0, 0.0);
        let y = Configuration::from_1d(&[0, 3]).unwrap();
        assert!((interaction_energy(&g, &y, &se) - 2.0 * (-3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn truncation_laws() {
        let step = InteractionModel::step(1.0, 1);
        assert_eq!(truncate_interaction(&step, 1), step);
        let se = InteractionModel::sub_exponential(1.0, 1.0, 0.0);
        let zero = truncate_interaction(&se, 0);
        assert!((1..20).all(|r| zero.potential(r) == 0.0));
        let a = truncate_interaction(&truncate_interaction(&se, 8), 3);
        assert_eq!(a, truncate_interaction(&se, 3));
        assert_eq!(truncate_interaction(&a, 3), a);
    }

    #[test]
    fn epsilon_bound_examples() {
        assert_eq!(epsilon_bound(&InteractionModel::step(1.0, 1), 2, 1), 0.0);
        let se = InteractionModel::sub_exponential(1.0, 1.0, 0.0);
        for r in [1u64, 2, 4, 8] {
            assert!((epsilon_bound(&se, 2, r) - 2.0 * (-(r as f64)).exp()).abs() < 1e-15);
            assert!((epsilon_bound(&se, 4, r) - 8.0 * se.tail_sup(r)).abs() < 1e-15);
        }
    }

    #[test]
    fn assembled_hamiltonian_matches_hand_assembly() {
        let b = ball1(&[3, 1], 1);
        let model = FieldModel::iid(Marginal::Uniform);
        let sample = sample_field(&model, [-2, -1, 0, 1, 2, 3, 4, 5].map(crate::config_space::Site::scalar).iter(), 9);
        let spec = HamiltonianSpec { g: 2.5, interaction: InteractionModel::step(0.7, 1), diagonal: DiagonalConvention::InducedDegree };
        let h = assemble_hamiltonian(&spec, &b, &sample).unwrap();
        let v = |x: i64| sample.get(&crate::config_space::Site::scalar(x)).unwrap();
        for (i, x) in b.members().iter().enumerate() {
            let (a, c) = (x.sites()[0].0[0], x.sites()[1].0[0]);
            let mut deg = 0.0;
            for (j, y) in b.members().iter().enumerate() {
                let (p, q) = (y.sites()[0].0[0], y.sites()[1].0[0]);
                let adjacent = (a - p).abs() + (c - q).abs() == 1;
                if adjacent {
                    deg += 1.0;
                }
                if i != j {
                    assert_eq!(h.get(i, j), if adjacent { -1.0 } else { 0.0 });
                }
            }
            let u = if a - c <= 1 { 1.4 } else { 0.0 };
            assert!((h.get(i, i) - (deg + 2.5 * (v(a) + v(c)) + u)).abs() < 1e-12);
        }
        let free = HamiltonianSpec { g: 0.0, interaction: InteractionModel::none(), diagonal: DiagonalConvention::InducedDegree };
        let h0 = assemble_hamiltonian(&free, &b, &FieldSample::default()).unwrap();
        assert_eq!(h0.triplets(), laplacian_matrix(&b, DiagonalConvention::InducedDegree).triplets());
    }

    #[test]
    fn kronecker_sum_of_scalars_and_product_ordering() {
        let g = Geometry::lattice(1);
        let a = Arc::new(enumerate_ball(&g, &Configuration::from_1d(&[10]).unwrap(), 0).unwrap());
        let b = Arc::new(enumerate_ball(&g, &Configuration::from_1d(&[0]).unwrap(), 0).unwrap());
        let ha = OperatorMatrix::new(a, Mat::from_fn(1, 1, |_, _| 2.0)).unwrap();
        let hb = OperatorMatrix::new(b, Mat::from_fn(1, 1, |_, _| 3.0)).unwrap();
        assert_eq!(kronecker_sum(&ha, &hb).unwrap().get(0, 0), 5.0);
        let near_a = laplacian_matrix(&ball1(&[3], 2), DiagonalConvention::InducedDegree);
        let near_b = laplacian_matrix(&ball1(&[0], 2), DiagonalConvention::InducedDegree);
        assert!(matches!(kronecker_sum(&near_a, &near_b), Err(Error::Geometry(_))));
    }

    #[test]
    fn triplet_export() {
        let h = laplacian_matrix(&ball1(&[1], 1), DiagonalConvention::InducedDegree);
        let mut buf = Vec::new();
        h.write_triplets_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("row,col,value\n0,0,1.0\n0,1,-1.0\n"));
        assert_eq!(h.index_map_json().unwrap(), "[[[0]],[[1]],[[2]]]");
    }

    #[test]
    fn interaction_json_roundtrip_rejects_unknown_keys() {
        let mut m = InteractionModel::step(2.0, 3);
        m.truncation = Some(5);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<InteractionModel>(&text).unwrap(), m);
        assert!(serde_json::from_str::<InteractionModel>(r#"{"kind":"step","amplitude":1,"range":1,"rnage":2}"#).is_err());
        let none: InteractionModel = serde_json::from_str(r#"{"kind":"none"}"#).unwrap();
        assert_eq!(none, InteractionModel::none());
    }
}
