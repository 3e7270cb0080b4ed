use std::sync::Arc;

use serde::Serialize;

use super::ScalingParams;
use crate::config_space::{Ball, Configuration};
use crate::disorder::FieldSample;
use crate::error::Result;
use crate::operators::{assemble_hamiltonian, HamiltonianSpec};
use crate::spectral::{diagonalize, EigenSystem};

/// Eigenfunction products below this are treated as zero by the loc
/// predicate: computed eigenvector entries carry absolute errors of order
/// `1e-14`, so smaller products carry no information.
pub const LOC_NOISE_FLOOR: f64 = 1e-12;

/// Noise level of eigenvector `j`: `max(LOC_NOISE_FLOOR, 64 eps ||H|| / gap_j)`,
/// the perturbation bound on a computed eigenvector whose eigenvalue is
/// `gap_j` away from the rest of the spectrum.
pub fn eigenvector_noise(es: &EigenSystem, j: usize) -> f64 {
    let ev = es.eigenvalues();
    let mut gap = f64::INFINITY;
    if j > 0 {
        gap = gap.min(ev[j] - ev[j - 1]);
    }
    if j + 1 < ev.len() {
        gap = gap.min(ev[j + 1] - ev[j]);
    }
    LOC_NOISE_FLOOR.max(64.0 * f64::EPSILON * es.norm().max(1.0) / gap)
}

/// Assembles and diagonalizes `H` on `ball`.
pub fn solve_ball(spec: &HamiltonianSpec, sample: &FieldSample, ball: &Arc<Ball>) -> Result<EigenSystem> {
    diagonalize(&assemble_hamiltonian(spec, ball, sample)?)
}

/// `ln ||G(E)||`, `+inf` at an eigenvalue.
pub fn log_resolvent_norm(es: &EigenSystem, e: f64) -> f64 {
    -es.spectral_distance(e).ln()
}

/// `||G(E)|| <= e^{L^beta}`; equality counts as non-resonant.
pub fn is_e_nr(es: &EigenSystem, e: f64, params: &ScalingParams) -> bool {
    log_resolvent_norm(es, e) <= params.nr_log_threshold(es.ball().radius())
}

/// Which sub-balls the CNR predicate diagonalizes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnrPolicy {
    /// Center stride; default `max(1, r / 2)` for radius `r`.
    #[serde(default)]
    pub stride: Option<u64>,
    /// Radii allowed for sub-balls; default is the scale ladder from `L0`.
    #[serde(default)]
    pub ladder: Option<Vec<u64>>,
}

impl CnrPolicy {
    pub fn with_ladder(ladder: Vec<u64>) -> Self {
        CnrPolicy { stride: None, ladder: Some(ladder) }
    }

    pub fn stride_for(&self, r: u64) -> u64 {
        self.stride.unwrap_or((r / 2).max(1))
    }

    /// Ladder values in `[ceil(L^{1/alpha}), L]`, plus `L` itself.
    pub fn radii(&self, l: u64, params: &ScalingParams) -> Result<Vec<u64>> {
        let ladder = match &self.ladder {
            Some(v) => v.clone(),
            None => {
                let mut v = vec![params.l0];
                while *v.last().unwrap() < l {
                    let next = super::ceil_pow(*v.last().unwrap(), params.alpha)?;
                    v.push(next);
                }
                v
            }
        };
        let lo = params.cnr_min_radius(l);
        let mut out: Vec<u64> = ladder.into_iter().filter(|&r| r >= lo && r <= l).collect();
        out.push(l);
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Centers `v` of sub-balls `B_r(v) ⊆ ball` on a stride grid anchored at the
/// ball's center.
pub fn sub_ball_centers(ball: &Ball, r: u64, stride: u64) -> Vec<Configuration> {
    if r > ball.radius() {
        return Vec::new();
    }
    let reach = ball.radius() - r;
    let stride = stride.max(1) as i64;
    let u = ball.center();
    ball.members()
        .iter()
        .enumerate()
        .filter(|&(i, v)| {
            ball.rho_from_center(i) <= reach
                && v.sites().iter().zip(u.sites()).all(|(a, b)| {
                    a.coords().iter().zip(b.coords()).all(|(p, q)| (p - q).rem_euclid(stride) == 0)
                })
        })
        .map(|(_, v)| v.clone())
        .collect()
}

/// Diagonalized sub-ball.
#[derive(Clone, Debug)]
pub struct SubBall {
    pub center: Configuration,
    pub radius: u64,
    pub es: Arc<EigenSystem>,
}

/// Resonant sub-ball found by the CNR predicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonantSubBall {
    pub center: Configuration,
    pub radius: u64,
    pub log_resolvent_norm: f64,
}

/// Sub-balls of one ball, diagonalized once for evaluation at many energies.
#[derive(Clone, Debug)]
pub struct CnrCheck {
    subs: Vec<SubBall>,
    params: ScalingParams,
}

impl CnrCheck {
    /// `whole` is the ball's own eigensystem, reused for radius `L`.
    pub fn new(
        spec: &HamiltonianSpec,
        sample: &FieldSample,
        whole: &Arc<EigenSystem>,
        params: &ScalingParams,
        policy: &CnrPolicy,
    ) -> Result<Self> {
        let ball = whole.ball();
        let l = ball.radius();
        let mut subs = vec![SubBall { center: ball.center().clone(), radius: l, es: whole.clone() }];
        for r in policy.radii(l, params)? {
            if r == l {
                continue;
            }
            for v in sub_ball_centers(ball, r, policy.stride_for(r)) {
                let b = Arc::new(ball.sub_ball(&v, r)?);
                subs.push(SubBall { center: v, radius: r, es: Arc::new(solve_ball(spec, sample, &b)?) });
            }
        }
        Ok(CnrCheck { subs, params: params.clone() })
    }

    pub fn sub_balls(&self) -> &[SubBall] {
        &self.subs
    }

    /// First resonant sub-ball at `e`, if any.
    pub fn witness(&self, e: f64) -> Option<ResonantSubBall> {
        self.subs.iter().find(|s| !is_e_nr(&s.es, e, &self.params)).map(|s| ResonantSubBall {
            center: s.center.clone(),
            radius: s.radius,
            log_resolvent_norm: log_resolvent_norm(&s.es, e),
        })
    }

    pub fn is_cnr(&self, e: f64) -> bool {
        self.witness(e).is_none()
    }
}

/// One-shot CNR evaluation.
pub fn is_e_cnr(
    spec: &HamiltonianSpec,
    sample: &FieldSample,
    ball: &Arc<Ball>,
    e: f64,
    params: &ScalingParams,
    policy: &CnrPolicy,
) -> Result<bool> {
    let whole = Arc::new(solve_ball(spec, sample, ball)?);
    Ok(CnrCheck::new(spec, sample, &whole, params, policy)?.is_cnr(e))
}

/// Outcome of the `(E, m)`-NS predicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NsOutcome {
    pub non_singular: bool,
    /// `ln max_{y in ∂⁻B} |G(u, y; E)|`.
    pub log_max_boundary: f64,
    pub log_threshold: f64,
    /// Boundary point attaining the maximum.
    pub witness: Option<Configuration>,
    /// `E` sits on the spectrum; singular by convention.
    pub on_spectrum: bool,
}

/// `(E, m)`-NS: `max_{y in ∂⁻B} |G(u, y; E)| <= e^{-gamma L + 2 L^beta}`.
pub fn is_emns(es: &EigenSystem, e: f64, m: f64, params: &ScalingParams) -> NsOutcome {
    ns_batch(es, &[e], m, params).pop().expect("one energy")
}

/// NS evaluated at many energies with one matrix product.
pub fn ns_batch(es: &EigenSystem, energies: &[f64], m: f64, params: &ScalingParams) -> Vec<NsOutcome> {
    let ball = es.ball();
    let l = ball.radius();
    let thr = params.ns_log_threshold(m, l, ball.n_particles());
    let boundary = ball.inner_boundary();
    let guard = 1e-12 * es.norm().max(1.0);
    let g = es.green_batch(ball.center_index(), &boundary, energies);
    energies
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            if es.spectral_distance(e) <= guard {
                return NsOutcome {
                    non_singular: false,
                    log_max_boundary: f64::INFINITY,
                    log_threshold: thr,
                    witness: None,
                    on_spectrum: true,
                };
            }
            let mut best = (f64::NEG_INFINITY, None);
            for (r, &y) in boundary.iter().enumerate() {
                let v = g[(r, k)].abs().ln();
                if v > best.0 || best.1.is_none() {
                    best = (v.max(best.0), Some(y));
                }
            }
            NsOutcome {
                non_singular: best.0 <= thr,
                log_max_boundary: best.0,
                log_threshold: thr,
                witness: best.1.map(|i| ball.members()[i].clone()),
                on_spectrum: false,
            }
        })
        .collect()
}

/// Eigenfunction pair breaking the loc bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocWitness {
    pub eigen_index: usize,
    pub x: Configuration,
    pub y: Configuration,
    pub rho: u64,
    /// `ln |psi_j(x) psi_j(y)|`.
    pub log_product: f64,
    /// `-gamma rho`.
    pub log_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocOutcome {
    pub localized: bool,
    /// Worst violating pair (largest excess over the bound).
    pub witness: Option<LocWitness>,
    /// Pairs whose distance passed the cutoff and whose product cleared the
    /// pruning bounds.
    pub pairs_examined: usize,
}

/// `m`-loc: `|psi_j(x) psi_j(y)| <= e^{-gamma rho(x,y)}` whenever
/// `rho(x,y) >= L^{(1+varrho)/alpha}`, up to [`eigenvector_noise`].
pub fn is_m_loc(es: &EigenSystem, m: f64, params: &ScalingParams) -> LocOutcome {
    loc_scan(es, m, params, false)
}

/// The loc flag alone; stops at the first violating pair.
pub fn is_m_loc_flag(es: &EigenSystem, m: f64, params: &ScalingParams) -> bool {
    loc_scan(es, m, params, true).localized
}

fn loc_scan(es: &EigenSystem, m: f64, params: &ScalingParams, first_only: bool) -> LocOutcome {
    let ball = es.ball();
    let l = ball.radius();
    let n = es.dim();
    let gamma = params.decay_rate(m, l, ball.n_particles());
    let cutoff = params.loc_cutoff(l);
    let max_rho = (2 * l) as f64;
    let mut witness: Option<(f64, LocWitness)> = None;
    let mut examined = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..n {
        let amp: Vec<f64> = (0..n).map(|i| es.psi(j, i).abs()).collect();
        order.sort_by(|&a, &b| amp[b].total_cmp(&amp[a]));
        // No pair below this product can violate: rho <= 2L caps the bound
        // from below.
        let noise = eigenvector_noise(es, j);
        // A pair can only violate, or beat the current worst excess, above
        // this product.
        let best = witness.as_ref().map_or(f64::NEG_INFINITY, |(w, _)| *w);
        let floor = noise.max((best - gamma * max_rho).exp());
        for (ix, &x) in order.iter().enumerate() {
            if amp[x] * amp[order[0]] <= floor {
                break;
            }
            for &y in &order[ix + 1..] {
                let p = amp[x] * amp[y];
                if p <= floor {
                    break;
                }
                let rho = ball.rho_between(x, y);
                if (rho as f64) < cutoff {
                    continue;
                }
                examined += 1;
                let bound = -gamma * rho as f64;
                if p <= noise.max(bound.exp()) {
                    continue;
                }
                let excess = p.ln() - bound;
                if first_only {
                    let w = LocWitness {
                        eigen_index: j,
                        x: ball.members()[x].clone(),
                        y: ball.members()[y].clone(),
                        rho,
                        log_product: p.ln(),
                        log_bound: bound,
                    };
                    return LocOutcome { localized: false, witness: Some(w), pairs_examined: examined };
                }
                if witness.as_ref().is_none_or(|(w, _)| excess > *w) {
                    witness = Some((
                        excess,
                        LocWitness {
                            eigen_index: j,
                            x: ball.members()[x].clone(),
                            y: ball.members()[y].clone(),
                            rho,
                            log_product: p.ln(),
                            log_bound: bound,
                        },
                    ));
                }
            }
        }
    }
    LocOutcome { localized: witness.is_none(), witness: witness.map(|(_, w)| w), pairs_examined: examined }
}

/// Result of the tunneling search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TunnelingOutcome {
    pub tunneling: bool,
    /// Distant pair of non-loc sub-ball centers.
    pub pair: Option<(Configuration, Configuration)>,
    pub non_loc_centers: Vec<Configuration>,
    pub sub_balls_checked: usize,
}

/// `m`-tunneling: the ball contains two distant non-loc sub-balls of radius
/// `l`. Sub-ball centers follow the policy's stride grid. Balls too small to
/// hold a distant pair are non-tunneling without diagonalizing anything.
pub fn is_m_tunneling(
    spec: &HamiltonianSpec,
    sample: &FieldSample,
    ball: &Ball,
    m: f64,
    params: &ScalingParams,
    l: u64,
    policy: &CnrPolicy,
) -> Result<TunnelingOutcome> {
    let centers = sub_ball_centers(ball, l, policy.stride_for(l));
    let g = ball.geometry();
    let far = |a: &Configuration, b: &Configuration| params.is_distant(g.rho_unchecked(a.sites(), b.sites()), l);
    let possible = centers.iter().enumerate().any(|(i, a)| centers[i + 1..].iter().any(|b| far(a, b)));
    let mut out = TunnelingOutcome { tunneling: false, pair: None, non_loc_centers: Vec::new(), sub_balls_checked: 0 };
    if !possible {
        return Ok(out);
    }
    for v in &centers {
        let b = Arc::new(ball.sub_ball(v, l)?);
        out.sub_balls_checked += 1;
        if !is_m_loc_flag(&solve_ball(spec, sample, &b)?, m, params) {
            out.non_loc_centers.push(v.clone());
        }
    }
    let bad = &out.non_loc_centers;
    out.pair = bad
        .iter()
        .enumerate()
        .find_map(|(i, a)| bad[i + 1..].iter().find(|b| far(a, b)).map(|b| (a.clone(), b.clone())));
    out.tunneling = out.pair.is_some();
    Ok(out)
}

/// All predicates of one ball at one energy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredicateReport {
    pub center: Configuration,
    pub radius: u64,
    pub energy: f64,
    pub e_nr: bool,
    pub e_cnr: bool,
    pub em_ns: bool,
    pub m_loc: bool,
    pub m_tunneling: bool,
    pub log_resolvent_norm: f64,
    pub ns: NsOutcome,
    pub loc_witness: Option<LocWitness>,
    pub resonant_sub_ball: Option<ResonantSubBall>,
    pub tunneling_pair: Option<(Configuration, Configuration)>,
}

/// Evaluates every predicate on `ball`; `sub_scale` is the radius of the
/// sub-balls examined for tunneling.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_predicates(
    spec: &HamiltonianSpec,
    sample: &FieldSample,
    ball: &Arc<Ball>,
    e: f64,
    m: f64,
    params: &ScalingParams,
    policy: &CnrPolicy,
    sub_scale: u64,
) -> Result<PredicateReport> {
    let es = Arc::new(solve_ball(spec, sample, ball)?);
    let cnr = CnrCheck::new(spec, sample, &es, params, policy)?;
    let ns = is_emns(&es, e, m, params);
    let loc = is_m_loc(&es, m, params);
    let tun = is_m_tunneling(spec, sample, ball, m, params, sub_scale, policy)?;
    let witness = cnr.witness(e);
    Ok(PredicateReport {
        center: ball.center().clone(),
        radius: ball.radius(),
        energy: e,
        e_nr: is_e_nr(&es, e, params),
        e_cnr: witness.is_none(),
        em_ns: ns.non_singular,
        m_loc: loc.localized,
        m_tunneling: tun.tunneling,
        log_resolvent_norm: log_resolvent_norm(&es, e),
        ns,
        loc_witness: loc.witness,
        resonant_sub_ball: witness,
        tunneling_pair: tun.pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::{enumerate_ball, Geometry};
    use crate::disorder::{sample_field, FieldModel, Marginal};
    use crate::operators::{DiagonalConvention, InteractionModel, OperatorMatrix};
    use faer::linalg::solvers::Solve;
    use faer::Mat;

    fn ball1(xs: &[i64], l: u64) -> Arc<Ball> {
        Arc::new(enumerate_ball(&Geometry::lattice(1), &Configuration::from_1d(xs).unwrap(), l).unwrap())
    }

    fn spec(g: f64) -> HamiltonianSpec {
        HamiltonianSpec { g, interaction: InteractionModel::none(), diagonal: DiagonalConvention::InducedDegree }
    }

    fn field(ball: &Ball, seed: u64) -> FieldSample {
        let sites = crate::config_space::projection(ball);
        sample_field(&FieldModel::iid(Marginal::Uniform), sites.iter(), seed)
    }

    #[test]
    fn nr_examples() {
        let p = ScalingParams::finite_range(1, 1, 4);
        let b = Arc::new(enumerate_ball(&Geometry::lattice(1), &Configuration::from_1d(&[0]).unwrap(), 4).unwrap());
        let n = b.len();
        let es = diagonalize(&OperatorMatrix::new(b.clone(), Mat::from_fn(n, n, |i, j| if i == j { 3.0 + i as f64 } else { 0.0 })).unwrap()).unwrap();
        // ||G(1)|| = 1/2.
        assert!(is_e_nr(&es, 1.0, &p));
        // Distance exactly e^{-2}.
        let e = 3.0 - (-2.0f64).exp();
        assert!((log_resolvent_norm(&es, e) - 2.0).abs() < 1e-12);
        assert!(!is_e_nr(&es, 3.0 - 1e-3, &p));
    }

    #[test]
    fn diagonal_operator_is_ns_and_loc() {
        let p = ScalingParams::finite_range(2, 1, 6);
        let b = ball1(&[10, 3], 6);
        let n = b.len();
        let es = diagonalize(&OperatorMatrix::new(b.clone(), Mat::from_fn(n, n, |i, j| if i == j { i as f64 } else { 0.0 })).unwrap()).unwrap();
        let ns = is_emns(&es, 0.5, 1.0, &p);
        assert!(ns.non_singular && ns.log_max_boundary == f64::NEG_INFINITY);
        assert!(is_m_loc(&es, 1.0, &p).localized);
        let on = is_emns(&es, 2.0, 1.0, &p);
        assert!(on.on_spectrum && !on.non_singular);
    }

    #[test]
    fn ns_matches_linear_solve() {
        let p = ScalingParams::finite_range(2, 1, 6);
        let b = ball1(&[20, 3], 6);
        let s = field(&b, 7);
        let es = solve_ball(&spec(30.0), &s, &b).unwrap();
        let e = 14.2;
        let got = is_emns(&es, e, 1.0, &p);
        // Oracle: solve (H - E) g = delta_u by LU and scan the boundary.
        let h = assemble_hamiltonian(&spec(30.0), &b, &s).unwrap();
        let n = b.len();
        let a = Mat::from_fn(n, n, |i, j| h.get(i, j) - if i == j { e } else { 0.0 });
        let rhs = Mat::from_fn(n, 1, |i, _| if i == b.center_index() { 1.0 } else { 0.0 });
        let sol = a.partial_piv_lu().solve(&rhs);
        let want = b.inner_boundary().iter().map(|&y| sol[(y, 0)].abs().ln()).fold(f64::NEG_INFINITY, f64::max);
        assert!((got.log_max_boundary - want).abs() < 1e-6, "{} vs {want}", got.log_max_boundary);
        assert_eq!(got.non_singular, want <= p.ns_log_threshold(1.0, 6, 2));
    }

    #[test]
    fn weak_disorder_breaks_loc() {
        let p = ScalingParams::finite_range(1, 1, 8);
        let b = ball1(&[0], 8);
        let es = solve_ball(&spec(0.5), &field(&b, 3), &b).unwrap();
        let out = is_m_loc(&es, 1.0, &p);
        assert!(!out.localized);
        let w = out.witness.unwrap();
        assert!(w.log_product > w.log_bound && w.rho as f64 >= p.loc_cutoff(8));
        // Tiny ball: no pair reaches the cutoff.
        let tiny = ball1(&[0], 0);
        assert!(is_m_loc(&solve_ball(&spec(0.5), &field(&tiny, 3), &tiny).unwrap(), 1.0, &p).localized);
    }

    #[test]
    fn cnr_finds_planted_resonance() {
        let p = ScalingParams::finite_range(1, 1, 3);
        let b = ball1(&[0], 4);
        let s = field(&b, 11);
        let policy = CnrPolicy { stride: Some(1), ladder: Some(vec![2, 3, 4]) };
        let whole = Arc::new(solve_ball(&spec(10.0), &s, &b).unwrap());
        let check = CnrCheck::new(&spec(10.0), &s, &whole, &p, &policy).unwrap();
        // Radius 2 is below ceil(4^{3/4}) = 3: only radius-3 balls at
        // centers -1..1 plus the ball itself.
        assert_eq!(check.sub_balls().len(), 4);
        let sub = &check.sub_balls()[2];
        let e = sub.es.eigenvalues()[1] + 1e-6;
        let w = check.witness(e).unwrap();
        assert!(w.log_resolvent_norm > p.nr_log_threshold(w.radius));
        assert!(!is_e_nr(&sub.es, e, &p));
        assert!(!check.is_cnr(e) && !is_e_cnr(&spec(10.0), &s, &b, e, &p, &policy).unwrap());
    }

    #[test]
    fn planted_tunneling() {
        // One particle, C_N = 11: radius-1 balls at -6 and 6 are distant.
        let p = ScalingParams::finite_range(1, 1, 3);
        let b = ball1(&[0], 7);
        let sites = crate::config_space::projection(&b);
        let policy = CnrPolicy { stride: Some(1), ladder: None };
        let flat = |x: i64| (-7..=-5).contains(&x) || (5..=7).contains(&x);
        let mk = |both: bool| {
            FieldSample::from_values(sites.iter().map(|s| {
                let x = s.coords()[0];
                let v = if flat(x) && (both || x < 0) { 0.0 } else { 40.0 * x as f64 };
                (s.clone(), v)
            }))
        };
        let h = spec(1.0);
        let one = is_m_tunneling(&h, &mk(false), &b, 1.0, &p, 1, &policy).unwrap();
        assert!(!one.tunneling && !one.non_loc_centers.is_empty());
        let two = is_m_tunneling(&h, &mk(true), &b, 1.0, &p, 1, &policy).unwrap();
        assert!(two.tunneling);
        let (x, y) = two.pair.unwrap();
        assert!(p.is_distant(Geometry::lattice(1).rho_unchecked(x.sites(), y.sites()), 1));
        // Radius too small to hold a distant pair: nothing is diagonalized.
        let small = ball1(&[0], 5);
        let none = is_m_tunneling(&h, &mk(true), &small, 1.0, &p, 1, &policy).unwrap();
        assert!(!none.tunneling && none.sub_balls_checked == 0);
    }

    #[test]
    fn cnr_implies_nr_and_loc_is_monotone_in_m() {
        let p = ScalingParams::finite_range(2, 1, 3);
        let b = ball1(&[8, 2], 5);
        let s = field(&b, 5);
        let policy = CnrPolicy::with_ladder(vec![3, 5]);
        let rep = evaluate_predicates(&spec(30.0), &s, &b, 17.3, 1.0, &p, &policy, 3).unwrap();
        if rep.e_cnr {
            assert!(rep.e_nr);
        }
        let es = solve_ball(&spec(30.0), &s, &b).unwrap();
        for m in [4.0, 2.0, 1.0, 0.5] {
            if is_m_loc(&es, m, &p).localized {
                assert!(is_m_loc(&es, m / 2.0, &p).localized);
            }
        }
    }
}
