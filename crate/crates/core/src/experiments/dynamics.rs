use serde::Serialize;

use crate::config_space::{boundary_constant, rho, Ball, Configuration};
use crate::error::{Error, Result};
use crate::spectral::EigenSystem;

/// Exponent grid `c = 0.1, 0.2, ..., 2.0` for the `ln^{1+c}` fit.
pub const C_GRID: [f64; 20] =
    [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0];

fn index(es: &EigenSystem, x: &Configuration) -> Result<usize> {
    es.ball().index_of(x).ok_or_else(|| Error::InvalidConfiguration(format!("{x} is not in the ball")))
}

fn in_window(window: Option<(f64, f64)>, e: f64) -> bool {
    window.is_none_or(|(a, b)| a <= e && e <= b)
}

/// `Q(x, y) = sum_{lambda_j in I} |psi_j(x) psi_j(y)|`; the whole spectrum
/// when `window` is `None`.
pub fn ef_correlator(es: &EigenSystem, x: &Configuration, y: &Configuration, window: Option<(f64, f64)>) -> Result<f64> {
    let (i, k) = (index(es, x)?, index(es, y)?);
    let v = es.vectors();
    Ok((0..es.dim()).filter(|&j| in_window(window, es.eigenvalues()[j])).map(|j| (v[(i, j)] * v[(k, j)]).abs()).sum())
}

/// `sum_j psi_j(x) psi_j(y)`, which is `delta_xy` by completeness.
pub fn signed_correlator(es: &EigenSystem, x: &Configuration, y: &Configuration) -> Result<f64> {
    let (i, k) = (index(es, x)?, index(es, y)?);
    let v = es.vectors();
    Ok((0..es.dim()).map(|j| v[(i, j)] * v[(k, j)]).sum())
}

/// `t = 0` and 10^4 log-spaced times on `[1e-2, 1e3]`.
pub fn default_t_grid() -> Vec<f64> {
    log_t_grid(10_000)
}

/// `t = 0` and `points` log-spaced times on `[1e-2, 1e3]`.
pub fn log_t_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = (-2.0f64, 3.0f64);
    let step = if points > 1 { (hi - lo) / (points - 1) as f64 } else { 0.0 };
    std::iter::once(0.0).chain((0..points).map(|i| 10f64.powf(lo + step * i as f64))).collect()
}

/// `max_t |<x| e^{-itH} |y>|` over `t_grid`. A lower bound on the supremum
/// over all times, and never above `Q(x, y)`.
pub fn propagator_sup(es: &EigenSystem, x: &Configuration, y: &Configuration, t_grid: &[f64]) -> Result<f64> {
    let (i, k) = (index(es, x)?, index(es, y)?);
    let v = es.vectors();
    let terms: Vec<(f64, f64)> = (0..es.dim())
        .map(|j| (es.eigenvalues()[j], v[(i, j)] * v[(k, j)]))
        .filter(|&(_, c)| c != 0.0)
        .collect();
    let mut best = 0.0f64;
    for &t in t_grid {
        let (mut re, mut im) = (0.0, 0.0);
        for &(lam, c) in &terms {
            let (s, co) = (t * lam).sin_cos();
            re += c * co;
            im -= c * s;
        }
        best = best.max(re.hypot(im));
    }
    Ok(best)
}

/// Least-squares slope and intercept; slope 0 on degenerate abscissae.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Some((slope, my - slope * mx))
}

fn rss(pts: &[(f64, f64)], slope: f64, intercept: f64) -> f64 {
    pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `-ln v` against `rho`, reported as fitted.
    pub m_eff: f64,
    pub intercept: f64,
    pub residual: f64,
    /// `-ln v ~ a ln^{1+c} rho + k`, best `c` on [`C_GRID`].
    pub a: f64,
    pub c: f64,
    pub log_intercept: f64,
    pub log_residual: f64,
    pub used: usize,
    pub excluded: usize,
    pub notice: Option<String>,
}

/// Fits `v ~ e^{-m rho}` and `v ~ e^{-a ln^{1+c} rho}` by least squares on
/// `-ln v`. Pairs with `v <= 0` or `rho <= 0` are excluded with a notice;
/// the log fit also drops `rho < 1`.
pub fn decay_fit(pairs: &[(f64, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = pairs.iter().filter(|&&(r, v)| r > 0.0 && v > 0.0).map(|&(r, v)| (r, -v.ln())).collect();
    let excluded = pairs.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!("decay fit needs 3 usable pairs, got {}", pts.len())));
    }
    let (m_eff, intercept) = linear_fit(&pts).expect("nonempty");
    let residual = rss(&pts, m_eff, intercept);
    let logs: Vec<(f64, f64)> = pts.iter().filter(|p| p.0 >= 1.0).map(|&(r, y)| (r.ln(), y)).collect();
    let mut best = (f64::NAN, f64::NAN, f64::NAN, f64::INFINITY);
    for &c in &C_GRID {
        let xs: Vec<(f64, f64)> = logs.iter().map(|&(l, y)| (l.powf(1.0 + c), y)).collect();
        if let Some((a, k)) = linear_fit(&xs) {
            let r = rss(&xs, a, k);
            if r < best.3 {
                best = (a, c, k, r);
            }
        }
    }
    Ok(DecayFit {
        m_eff,
        intercept,
        residual,
        a: best.0,
        c: best.1,
        log_intercept: best.2,
        log_residual: best.3,
        used: pts.len(),
        excluded,
        notice: (excluded > 0).then(|| format!("{excluded} pairs with nonpositive value or distance excluded")),
    })
}

/// `f(L) + 2 |S| e^{-mL}` with `S` the union of the edge boundaries of the
/// two balls (counted, not estimated) and `L` their common radius.
pub fn finite_volume_dl_bound(bx: &Ball, by: &Ball, m: f64, f_l: f64) -> f64 {
    let s = (boundary_constant(bx) + boundary_constant(by)) as f64;
    let decay = (-m * bx.radius() as f64).exp();
    f_l + if decay == 0.0 { 0.0 } else { 2.0 * s * decay }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelatorRow {
    pub x: Configuration,
    pub y: Configuration,
    pub rho: u64,
    pub q: f64,
    pub signed: f64,
    pub propagator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelatorReport {
    pub rows: Vec<CorrelatorRow>,
    pub fit: Option<DecayFit>,
    /// Largest `Q(x, y)` observed; at most 1 by Bessel's inequality.
    pub max_q: f64,
    /// Largest `propagator - Q`.
    pub max_propagator_excess: f64,
    /// Largest `|signed - delta_xy|`.
    pub max_completeness_defect: f64,
}

/// Correlators from `x` to each of `ys`, with a decay fit of `Q` against
/// `rho` when at least three pairs at positive distance have `Q > 0`.
pub fn correlator_report(
    es: &EigenSystem,
    x: &Configuration,
    ys: &[Configuration],
    window: Option<(f64, f64)>,
    t_grid: &[f64],
) -> Result<CorrelatorReport> {
    let g = es.ball().geometry();
    let mut rows = Vec::with_capacity(ys.len());
    for y in ys {
        rows.push(CorrelatorRow {
            x: x.clone(),
            y: y.clone(),
            rho: rho(g, x, y)?,
            q: ef_correlator(es, x, y, window)?,
            signed: signed_correlator(es, x, y)?,
            propagator: propagator_sup(es, x, y, t_grid)?,
        });
    }
    let pairs: Vec<(f64, f64)> = rows.iter().filter(|r| r.rho > 0).map(|r| (r.rho as f64, r.q)).collect();
    let fit = if pairs.iter().filter(|p| p.1 > 0.0).count() >= 3 { Some(decay_fit(&pairs)?) } else { None };
    Ok(CorrelatorReport {
        max_q: rows.iter().map(|r| r.q).fold(0.0, f64::max),
        max_propagator_excess: rows.iter().map(|r| r.propagator - r.q).fold(f64::NEG_INFINITY, f64::max),
        max_completeness_defect: rows
            .iter()
            .map(|r| (r.signed - if r.x == r.y { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max),
        rows,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::config_space::{enumerate_ball, projection, Geometry};
    use crate::disorder::{sample_field, FieldModel, Marginal};
    use crate::msa::solve_ball;
    use crate::operators::{DiagonalConvention, HamiltonianSpec, InteractionModel};

    fn system(g: f64, xs: &[i64], l: u64, seed: u64) -> EigenSystem {
        let ball =
            Arc::new(enumerate_ball(&Geometry::lattice(1), &Configuration::from_1d(xs).unwrap(), l).unwrap());
        let sample = sample_field(&FieldModel::iid(Marginal::Uniform), projection(&ball).iter(), seed);
        let spec = HamiltonianSpec { g, interaction: InteractionModel::none(), diagonal: DiagonalConvention::InducedDegree };
        solve_ball(&spec, &sample, &ball).unwrap()
    }

    fn c1(x: i64) -> Configuration {
        Configuration::from_1d(&[x]).unwrap()
    }

    #[test]
    fn normalization_and_completeness() {
        let es = system(2.0, &[0], 6, 1);
        assert!((ef_correlator(&es, &c1(2), &c1(2), None).unwrap() - 1.0).abs() < 1e-12);
        assert!(signed_correlator(&es, &c1(-3), &c1(4)).unwrap().abs() < 1e-10);
        assert!((propagator_sup(&es, &c1(1), &c1(1), &[0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(propagator_sup(&es, &c1(1), &c1(3), &[0.0]).unwrap() < 1e-10);
        let q = ef_correlator(&es, &c1(-6), &c1(6), Some((-10.0, 10.0))).unwrap();
        assert!(q <= 1.0 + 1e-10);
        let grid: Vec<f64> = default_t_grid().into_iter().step_by(10).collect();
        assert!(propagator_sup(&es, &c1(-6), &c1(6), &grid).unwrap() <= q + 1e-10);
        assert!(ef_correlator(&es, &c1(9), &c1(0), None).is_err());
    }

    #[test]
    fn t_grid_shape() {
        let t = default_t_grid();
        assert_eq!(t.len(), 10_001);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 1e-2).abs() < 1e-15 && (t[10_000] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn decay_fit_examples() {
        let exact: Vec<(f64, f64)> = (1..8).map(|r| (r as f64, (-2.0 * r as f64).exp())).collect();
        assert!((decay_fit(&exact).unwrap().m_eff - 2.0).abs() < 1e-9);
        let flat: Vec<(f64, f64)> = (1..8).map(|r| (r as f64, 0.3)).collect();
        assert!(decay_fit(&flat).unwrap().m_eff.abs() < 1e-12);
        let lsq: Vec<(f64, f64)> = (2..30).map(|r| (r as f64, (-(r as f64).ln().powi(2)).exp())).collect();
        let fit = decay_fit(&lsq).unwrap();
        assert!((fit.c - 1.0).abs() < 1e-9 && (fit.a - 1.0).abs() < 1e-9, "{fit:?}");
        let mut bad = exact.clone();
        bad.push((3.0, 0.0));
        let f = decay_fit(&bad).unwrap();
        assert_eq!(f.excluded, 1);
        assert!(f.notice.is_some());
        assert!(decay_fit(&exact[..2]).is_err());
    }

    #[test]
    fn strong_disorder_correlator_decays() {
        let es = system(30.0, &[0], 8, 4);
        let ys: Vec<Configuration> = (0..=8).map(c1).collect();
        let rep = correlator_report(&es, &c1(0), &ys, None, &[0.0, 1.0, 10.0]).unwrap();
        assert!(rep.max_q <= 1.0 + 1e-10);
        assert!(rep.max_propagator_excess <= 1e-10);
        assert!(rep.max_completeness_defect < 1e-10);
        assert!(rep.fit.unwrap().m_eff > 0.0);
    }

    #[test]
    fn dl_bound_examples() {
        let g = Geometry::lattice(1);
        let bx = enumerate_ball(&g, &c1(0), 3).unwrap();
        let by = enumerate_ball(&g, &c1(20), 3).unwrap();
        assert_eq!(finite_volume_dl_bound(&bx, &by, f64::INFINITY, 0.0), 0.0);
        let base = finite_volume_dl_bound(&bx, &by, 1.0, 0.0);
        assert!((base - 2.0 * 4.0 * (-3.0f64).exp()).abs() < 1e-15);
        assert!((finite_volume_dl_bound(&bx, &by, 1.0, 0.25) - (base + 0.25)).abs() < 1e-15);
    }
}
