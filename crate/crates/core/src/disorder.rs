//! Seeded random fields on single-particle sites.
//!
//! Every value is a pure function of `(model, seed, site)`: the base IID
//! variable at a site comes from its own ChaCha stream keyed by the site
//! coordinates, so samples agree on overlapping regions and trials can run
//! in any order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config_space::{Configuration, Site};
use crate::error::{Error, Result};

/// Single-site marginal of the base IID field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    #[default]
    Uniform,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldKind {
    Iid,
    /// `V(x) = sum_j a_j eps(x - j e_1)` for IID `eps`.
    MovingAverage { kernel: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawFieldModel")]
pub struct FieldModel {
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default)]
    pub marginal: Marginal,
}

// Wire form without `flatten`, so unknown keys are rejected.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawFieldModel {
    Iid {
        #[serde(default)]
        marginal: Marginal,
    },
    MovingAverage {
        kernel: Vec<f64>,
        #[serde(default)]
        marginal: Marginal,
    },
}

impl From<RawFieldModel> for FieldModel {
    fn from(raw: RawFieldModel) -> Self {
        match raw {
            RawFieldModel::Iid { marginal } => FieldModel { kind: FieldKind::Iid, marginal },
            RawFieldModel::MovingAverage { kernel, marginal } => {
                FieldModel { kind: FieldKind::MovingAverage { kernel }, marginal }
            }
        }
    }
}

impl FieldModel {
    pub fn iid(marginal: Marginal) -> Self {
        FieldModel { kind: FieldKind::Iid, marginal }
    }

    pub fn moving_average(marginal: Marginal, kernel: Vec<f64>) -> Result<Self> {
        let m = FieldModel { kind: FieldKind::MovingAverage { kernel }, marginal };
        m.validate()?;
        Ok(m)
    }

    /// Kernel coefficients `(a_0, ..., a_q)`; `[1]` for IID.
    pub fn kernel(&self) -> &[f64] {
        match &self.kind {
            FieldKind::Iid => &[1.0],
            FieldKind::MovingAverage { kernel } => kernel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.kernel();
        if k.is_empty() || k.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("moving-average kernel must be nonempty and finite".into()));
        }
        let tail: f64 = k[1..].iter().map(|a| a.abs()).sum();
        if k[0] <= tail {
            return Err(Error::InvalidParameter(format!(
                "kernel needs a_0 > sum |a_j| over j >= 1, got a_0 = {} and tail {tail}",
                k[0]
            )));
        }
        Ok(())
    }

    pub fn marginal_profile(&self) -> MarginalProfile {
        let a0 = self.kernel()[0];
        // Conditioning on the other base variables leaves a_0 eps(x) free, so
        // the conditional density is the base density scaled by 1/a_0.
        let c = match self.marginal {
            Marginal::Uniform => 1.0,
            Marginal::Gaussian => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
        };
        MarginalProfile { holder_exponent: 1.0, holder_constant: c / a0 }
    }

    pub fn mixing_profile(&self) -> MixingProfile {
        MixingProfile { dependence_range: (self.kernel().len() - 1) as u64, rate_constant: None }
    }
}

/// Hölder regularity `P{V in [a, a+s]} <= C s^kappa` of the marginal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginalProfile {
    pub holder_exponent: f64,
    pub holder_constant: f64,
}

/// Dependence structure: values at sites farther apart than
/// `dependence_range` along any axis are exactly independent. A rate
/// constant is only meaningful when independence is not exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixingProfile {
    pub dependence_range: u64,
    pub rate_constant: Option<f64>,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of substream `index` under `seed`, used for per-trial seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xd605_bbb5_8c8a_bbbd))
}

fn site_key(seed: u64, coords: &[i64]) -> u64 {
    coords.iter().fold(splitmix64(seed ^ 0x5851_f42d_4c95_7f2d), |h, &c| splitmix64(h ^ c as u64))
}

/// Base IID variable at a site.
pub fn base_value(marginal: Marginal, seed: u64, coords: &[i64]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(site_key(seed, coords));
    match marginal {
        Marginal::Uniform => rng.random::<f64>(),
        Marginal::Gaussian => rng.sample(StandardNormal),
    }
}

/// Field values on a finite set of sites.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FieldSample {
    values: BTreeMap<Site, f64>,
}

impl FieldSample {
    pub fn from_values(values: impl IntoIterator<Item = (Site, f64)>) -> Self {
        FieldSample { values: values.into_iter().collect() }
    }

    pub fn get(&self, s: &Site) -> Result<f64> {
        self.values.get(s).copied().ok_or_else(|| Error::MissingData(s.to_string()))
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.values.contains_key(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, f64)> {
        self.values.iter().map(|(s, &v)| (s, v))
    }

    /// Same sites, every value replaced by `f(value)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        FieldSample { values: self.values.iter().map(|(s, &v)| (s.clone(), f(v))).collect() }
    }

    /// Overwrites or inserts one value.
    pub fn set(&mut self, s: Site, v: f64) {
        self.values.insert(s, v);
    }
}

/// Samples `model` on `region` under `seed`.
pub fn sample_field<'a>(model: &FieldModel, region: impl IntoIterator<Item = &'a Site>, seed: u64) -> FieldSample {
    let kernel = model.kernel();
    let values = region.into_iter().map(|s| {
        let mut v = 0.0;
        let mut c = s.0.clone();
        for (j, a) in kernel.iter().enumerate() {
            c[0] = s.0[0] - j as i64;
            v += a * base_value(model.marginal, seed, &c);
        }
        (s.clone(), v)
    });
    FieldSample::from_values(values)
}

/// `sum_y n_x(y) V(y)` for a fermionic configuration.
pub fn potential_energy(x: &Configuration, sample: &FieldSample) -> Result<f64> {
    potential_energy_sites(x.sites(), sample)
}

/// Occupation-weighted potential of an arbitrary site tuple, which may
/// repeat sites.
pub fn potential_energy_sites(sites: &[Site], sample: &FieldSample) -> Result<f64> {
    let occ = crate::config_space::OccupationMap::from_sites(sites);
    occ.iter().map(|(s, n)| Ok(n as f64 * sample.get(s)?)).sum()
}

/// Sample estimate with a normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    pub covariance: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
}

/// Empirical covariance of `V(x)` and `V(y)` over independent seeds.
pub fn empirical_mixing(model: &FieldModel, x: &Site, y: &Site, trials: usize, seed: u64) -> Result<CovarianceEstimate> {
    if trials < 100 {
        return Err(Error::InvalidParameter(format!("empirical_mixing needs at least 100 trials, got {trials}")));
    }
    let pairs: Vec<(f64, f64)> = (0..trials as u64)
        .map(|t| {
            let s = sample_field(model, [x, y], derive_seed(seed, t));
            (s.get(x).unwrap(), s.get(y).unwrap())
        })
        .collect();
    let n = trials as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let z: Vec<f64> = pairs.iter().map(|(a, b)| (a - mx) * (b - my)).collect();
    let covariance = z.iter().sum::<f64>() / (n - 1.0);
    let var_z = z.iter().map(|v| (v - covariance).powi(2)).sum::<f64>() / (n - 1.0);
    let stderr = (var_z / n).sqrt();
    Ok(CovarianceEstimate {
        covariance,
        stderr,
        ci_low: covariance - 1.959963984540054 * stderr,
        ci_high: covariance + 1.959963984540054 * stderr,
        trials,
    })
}

/// Largest empirical frequency of `V(x)` in a window `[a, a + s]` over the
/// grid of window starts, with its standard error.
pub fn empirical_marginal_increment(
    model: &FieldModel,
    x: &Site,
    s: f64,
    window_starts: &[f64],
    trials: usize,
    seed: u64,
) -> (f64, f64) {
    let vals: Vec<f64> = (0..trials as u64)
        .map(|t| sample_field(model, [x], derive_seed(seed, t)).get(x).unwrap())
        .collect();
    let n = trials as f64;
    let p = window_starts
        .iter()
        .map(|a| vals.iter().filter(|&&v| v >= *a && v <= a + s).count() as f64 / n)
        .fold(0.0, f64::max);
    (p, (p * (1.0 - p) / n).sqrt())
}

/// Sample mean `xi_Q` and fluctuations `eta_x = V(x) - xi_Q` on `Q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanFluctuation {
    pub xi: f64,
    pub eta: BTreeMap<Site, f64>,
}

impl MeanFluctuation {
    /// `V(x) = xi + eta_x`.
    pub fn reassemble(&self) -> FieldSample {
        FieldSample::from_values(self.eta.iter().map(|(s, e)| (s.clone(), self.xi + e)))
    }

    pub fn eta_vector(&self) -> Vec<f64> {
        self.eta.values().copied().collect()
    }
}

pub fn mean_fluct_decompose(sample: &FieldSample, q: &[Site]) -> Result<MeanFluctuation> {
    if q.is_empty() {
        return Err(Error::InvalidParameter("empty box".into()));
    }
    let vals: Vec<f64> = q.iter().map(|s| sample.get(s)).collect::<Result<_>>()?;
    let xi = vals.iter().sum::<f64>() / vals.len() as f64;
    let eta = q.iter().cloned().zip(vals.iter().map(|v| v - xi)).collect();
    Ok(MeanFluctuation { xi, eta })
}

/// Constants of the sample-mean regularity condition
/// `P{nu_R(s) >= C' R^{A'} s^{b'}} <= C'' R^{A''} s^{b''}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct W3Constants {
    pub c_prime: f64,
    pub c_double: f64,
    pub a_prime: f64,
    pub a_double: f64,
    pub b_prime: f64,
    pub b_double: f64,
}

impl Default for W3Constants {
    fn default() -> Self {
        W3Constants { c_prime: 1.0, c_double: 1.0, a_prime: 1.0, a_double: 1.0, b_prime: 1.0, b_double: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NuEstimate {
    pub s: f64,
    /// Held-out conditional window probability, averaged over bins.
    pub nu: f64,
    pub stderr: f64,
    /// Largest per-bin held-out estimate.
    pub nu_max_bin: f64,
    pub bins: usize,
    pub trials: usize,
    /// Share of trials whose bin estimate reaches `C' R^{A'} s^{b'}`.
    pub exceedance: Option<f64>,
    /// `C'' R^{A''} s^{b''}`.
    pub exceedance_bound: Option<f64>,
}

/// Monte Carlo estimate of the concentration function of `xi_Q` given the
/// fluctuations.
///
/// Trials are grouped by nearest-centroid binning of the fluctuation vector
/// with `ceil(trials^{1/3})` centroids (the first trials' vectors). Within a
/// bin, the densest `s`-window is located on one half of the samples and its
/// frequency is measured on the other half, which keeps the sup over `t`
/// from inflating the estimate.
pub fn empirical_nu(
    model: &FieldModel,
    q: &[Site],
    s: f64,
    trials: usize,
    seed: u64,
    w3: Option<&W3Constants>,
) -> Result<NuEstimate> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidParameter(format!("s must lie in (0, 1], got {s}")));
    }
    if trials < 1000 {
        return Err(Error::InvalidParameter(format!("empirical_nu needs at least 1000 trials, got {trials}")));
    }
    let samples: Vec<MeanFluctuation> = (0..trials as u64)
        .map(|t| mean_fluct_decompose(&sample_field(model, q, derive_seed(seed, t)), q))
        .collect::<Result<_>>()?;
    let n_bins = (trials as f64).cbrt().ceil() as usize;
    let centroids: Vec<Vec<f64>> = samples.iter().take(n_bins).map(|m| m.eta_vector()).collect();
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for m in &samples {
        let e = m.eta_vector();
        let (best, _) = centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>()))
            .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
        bins[best].push(m.xi);
    }
    let r = {
        let g = crate::config_space::Geometry::lattice(q[0].dim());
        let mut d = 0;
        for a in q {
            for b in q {
                d = d.max(g.site_distance(a, b));
            }
        }
        d.max(1) as f64
    };
    let threshold = w3.map(|c| c.c_prime * r.powf(c.a_prime) * s.powf(c.b_prime));
    let mut weighted = 0.0;
    let mut held_out = 0usize;
    let mut nu_max_bin: f64 = 0.0;
    let mut exceed = 0usize;
    let mut used_bins = 0;
    for xs in bins.iter().filter(|b| b.len() >= 2) {
        let mut train: Vec<f64> = xs.iter().step_by(2).copied().collect();
        let test: Vec<f64> = xs.iter().skip(1).step_by(2).copied().collect();
        train.sort_by(f64::total_cmp);
        let t0 = densest_window(&train, s);
        let hits = test.iter().filter(|&&v| v >= t0 && v <= t0 + s).count();
        let est = hits as f64 / test.len() as f64;
        weighted += hits as f64;
        held_out += test.len();
        nu_max_bin = nu_max_bin.max(est);
        used_bins += 1;
        if let Some(th) = threshold {
            if est >= th {
                exceed += xs.len();
            }
        }
    }
    let nu = weighted / held_out as f64;
    Ok(NuEstimate {
        s,
        nu,
        stderr: (nu * (1.0 - nu) / held_out as f64).sqrt(),
        nu_max_bin,
        bins: used_bins,
        trials,
        exceedance: threshold.map(|_| exceed as f64 / trials as f64),
        exceedance_bound: w3.map(|c| c.c_double * r.powf(c.a_double) * s.powf(c.b_double)),
    })
}

/// Left end of a closed window of width `s` holding the most sorted values.
fn densest_window(sorted: &[f64], s: f64) -> f64 {
    let mut best = (0usize, sorted.first().copied().unwrap_or(0.0));
    let mut hi = 0;
    for (lo, &t) in sorted.iter().enumerate() {
        while hi < sorted.len() && sorted[hi] <= t + s {
            hi += 1;
        }
        if hi - lo > best.0 {
            best = (hi - lo, t);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: i64, b: i64) -> Vec<Site> {
        (a..=b).map(Site::scalar).collect()
    }

    #[test]
    fn iid_uniform_values_in_unit_interval_and_deterministic() {
        let m = FieldModel::iid(Marginal::Uniform);
        let r = line(-20, 20);
        let a = sample_field(&m, &r, 7);
        assert!(a.iter().all(|(_, v)| (0.0..=1.0).contains(&v)));
        assert_eq!(a, sample_field(&m, &r, 7));
        assert_ne!(a, sample_field(&m, &r, 8));
    }

    #[test]
    fn values_do_not_depend_on_region() {
        let m = FieldModel::moving_average(Marginal::Gaussian, vec![1.0, 0.25, 0.25]).unwrap();
        let small = sample_field(&m, &line(0, 3), 11);
        let big = sample_field(&m, &line(-10, 10), 11);
        for (s, v) in small.iter() {
            assert_eq!(big.get(s).unwrap(), v);
        }
    }

    #[test]
    fn moving_average_matches_base_stream() {
        let m = FieldModel::moving_average(Marginal::Uniform, vec![1.0, 0.25, 0.25]).unwrap();
        let x = Site::scalar(5);
        let v = sample_field(&m, [&x], 3).get(&x).unwrap();
        let e = |c: i64| base_value(Marginal::Uniform, 3, &[c]);
        assert!((v - (e(5) + 0.25 * e(4) + 0.25 * e(3))).abs() < 1e-15);
        assert!(FieldModel::moving_average(Marginal::Uniform, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn potential_energy_examples() {
        let s = FieldSample::from_values([(Site::scalar(0), 0.2), (Site::scalar(1), 0.5)]);
        let x = Configuration::from_1d(&[1, 0]).unwrap();
        assert!((potential_energy(&x, &s).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(potential_energy(&x, &s.map(|_| 0.0)).unwrap(), 0.0);
        let twice = [Site::scalar(1), Site::scalar(1), Site::scalar(0)];
        assert!((potential_energy_sites(&twice, &s).unwrap() - 1.2).abs() < 1e-15);
        let far = Configuration::from_1d(&[9]).unwrap();
        assert!(matches!(potential_energy(&far, &s), Err(Error::MissingData(_))));
    }

    #[test]
    fn mean_fluctuation_examples() {
        let q = line(0, 1);
        let s = FieldSample::from_values([(Site::scalar(0), 0.2), (Site::scalar(1), 0.6)]);
        let mf = mean_fluct_decompose(&s, &q).unwrap();
        assert!((mf.xi - 0.4).abs() < 1e-15);
        assert!((mf.eta[&Site::scalar(0)] + 0.2).abs() < 1e-15);
        assert!((mf.eta[&Site::scalar(1)] - 0.2).abs() < 1e-15);
        let c = s.map(|_| 0.3);
        let mf = mean_fluct_decompose(&c, &q).unwrap();
        assert_eq!(mf.xi, 0.3);
        assert!(mf.eta.values().all(|&e| e == 0.0));
        let one = mean_fluct_decompose(&s, &q[..1]).unwrap();
        assert_eq!((one.xi, one.eta_vector()), (0.2, vec![0.0]));
        assert!(matches!(mean_fluct_decompose(&s, &line(0, 2)), Err(Error::MissingData(_))));
    }

    #[test]
    fn covariance_of_independent_and_equal_sites() {
        let m = FieldModel::iid(Marginal::Uniform);
        let c = empirical_mixing(&m, &Site::scalar(0), &Site::scalar(1), 20_000, 1).unwrap();
        assert!(c.covariance.abs() < 3.0 * c.stderr);
        let v = empirical_mixing(&m, &Site::scalar(0), &Site::scalar(0), 20_000, 2).unwrap();
        assert!((v.covariance - 1.0 / 12.0).abs() < 3.0 * v.stderr);
        let ma = FieldModel::moving_average(Marginal::Uniform, vec![1.0, 0.3, 0.3]).unwrap();
        let c = empirical_mixing(&ma, &Site::scalar(0), &Site::scalar(3), 20_000, 3).unwrap();
        assert!(c.covariance.abs() < 3.0 * c.stderr);
        let near = empirical_mixing(&ma, &Site::scalar(0), &Site::scalar(1), 20_000, 4).unwrap();
        assert!(near.covariance > 3.0 * near.stderr);
        assert!(empirical_mixing(&m, &Site::scalar(0), &Site::scalar(1), 10, 1).is_err());
    }

    #[test]
    fn nu_for_a_single_uniform_site() {
        let m = FieldModel::iid(Marginal::Uniform);
        let q = line(0, 0);
        let e = empirical_nu(&m, &q, 0.1, 10_000, 5, None).unwrap();
        assert!((e.nu - 0.1).abs() < 3.0 * e.stderr, "{e:?}");
        let e = empirical_nu(&m, &q, 1.0, 1_000, 5, None).unwrap();
        assert_eq!(e.nu, 1.0);
    }

    #[test]
    fn densest_window_finds_cluster() {
        let xs = [0.0, 0.05, 0.5, 0.51, 0.52, 0.9];
        assert_eq!(densest_window(&xs, 0.05), 0.5);
    }

    #[test]
    fn field_model_json_roundtrip_rejects_unknown_keys() {
        let m = FieldModel::moving_average(Marginal::Gaussian, vec![1.0, 0.25]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<FieldModel>(&text).unwrap(), m);
        assert!(serde_json::from_str::<FieldModel>(r#"{"kind":"iid","marginal":"uniform","seed":1}"#).is_err());
        assert_eq!(serde_json::from_str::<FieldModel>(r#"{"kind":"iid"}"#).unwrap(), FieldModel::iid(Marginal::Uniform));
    }
}
