use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interaction regime. Switches every geometric threshold at once.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    FiniteRange,
    InfiniteRange,
}

/// Choice of the distant-ball constant `C_N` in the finite-range regime.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistantConstant {
    /// `C_N = 11 N`.
    #[default]
    ElevenN,
    /// `C_N = 2 A_N + 3 = 8 N + 3`.
    TwoAPlusThree,
}

/// Exponents and constants of the scaling analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    pub n_particles: usize,
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub tau: f64,
    pub varrho: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub theta: f64,
    pub m: f64,
    pub l0: u64,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default)]
    pub distant_constant: DistantConstant,
}

impl ScalingParams {
    /// Finite-range defaults: `alpha = 4/3`, `varrho = 1/6`, `tau = 1/8`,
    /// `beta = 1/2`, `m = 1`.
    pub fn finite_range(n_particles: usize, dim: usize, l0: u64) -> Self {
        ScalingParams {
            n_particles,
            dim,
            alpha: 4.0 / 3.0,
            beta: 0.5,
            beta_prime: 0.25,
            tau: 0.125,
            varrho: 1.0 / 6.0,
            delta: 0.0,
            theta: 0.0,
            m: 1.0,
            l0,
            regime: Regime::FiniteRange,
            distant_constant: DistantConstant::ElevenN,
        }
    }

    /// Infinite-range regime: `varrho = 2 delta`, `alpha = 1 + 4 delta`,
    /// `tau = delta / 2`.
    pub fn infinite_range(n_particles: usize, dim: usize, l0: u64, delta: f64, theta: f64) -> Self {
        ScalingParams {
            alpha: 1.0 + 4.0 * delta,
            varrho: 2.0 * delta,
            tau: delta / 2.0,
            delta,
            theta,
            regime: Regime::InfiniteRange,
            ..Self::finite_range(n_particles, dim, l0)
        }
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn with_particles(&self, n: usize) -> Self {
        ScalingParams { n_particles: n, ..self.clone() }
    }

    pub fn a_n(&self) -> f64 {
        4.0 * self.n_particles as f64
    }

    pub fn c_n(&self) -> f64 {
        let n = self.n_particles as f64;
        match (self.regime, self.distant_constant) {
            (Regime::InfiniteRange, _) => 4.0 * n,
            (Regime::FiniteRange, DistantConstant::ElevenN) => 11.0 * n,
            (Regime::FiniteRange, DistantConstant::TwoAPlusThree) => 8.0 * n + 3.0,
        }
    }

    /// Diameter above which a ball of radius `l` is partially interactive.
    pub fn pi_threshold(&self, l: u64) -> f64 {
        match self.regime {
            Regime::FiniteRange => self.a_n() * l as f64,
            Regime::InfiniteRange => (l as f64).powf(1.0 + self.delta),
        }
    }

    pub fn is_pi(&self, diam: u64, l: u64) -> bool {
        diam as f64 > self.pi_threshold(l)
    }

    /// Separation a PI decomposition must exceed.
    pub fn decomposition_threshold(&self, l: u64) -> f64 {
        match self.regime {
            Regime::FiniteRange => 2.0 * l as f64,
            Regime::InfiniteRange => 2.0 * (l as f64).powf(1.0 + self.delta),
        }
    }

    /// Whether balls of radius `l` with centers at distance `rho` are distant.
    pub fn is_distant(&self, rho: u64, l: u64) -> bool {
        match self.regime {
            Regime::FiniteRange => rho as f64 >= self.c_n() * l as f64,
            Regime::InfiniteRange => rho as f64 > self.c_n() * (l as f64).powf(1.0 + self.delta),
        }
    }

    /// Smallest center distance at which balls of radius `l` are distant.
    pub fn distant_min_rho(&self, l: u64) -> u64 {
        match self.regime {
            Regime::FiniteRange => (self.c_n() * l as f64).ceil() as u64,
            Regime::InfiniteRange => (self.c_n() * (l as f64).powf(1.0 + self.delta)).floor() as u64 + 1,
        }
    }

    /// Decay rate used in the NS and loc predicates for `n`-particle balls.
    pub fn decay_rate(&self, m: f64, l: u64, n: usize) -> f64 {
        match self.regime {
            Regime::FiniteRange => gamma(m, l, self),
            Regime::InfiniteRange => gamma_n(m, l, n, self),
        }
    }

    /// `ln` of the NS threshold `e^{-gamma L + 2 L^beta}`.
    pub fn ns_log_threshold(&self, m: f64, l: u64, n: usize) -> f64 {
        let lf = l as f64;
        -self.decay_rate(m, l, n) * lf + 2.0 * lf.powf(self.beta)
    }

    /// `ln` of the NR threshold on `||G||`, that is `L^beta`.
    pub fn nr_log_threshold(&self, l: u64) -> f64 {
        (l as f64).powf(self.beta)
    }

    /// Exponent of the loc pair cutoff `L^{(1 + varrho) / alpha}`.
    pub fn loc_exponent(&self) -> f64 {
        (1.0 + self.varrho) / self.alpha
    }

    pub fn loc_cutoff(&self, l: u64) -> f64 {
        (l as f64).powf(self.loc_exponent())
    }

    /// Smallest sub-ball radius considered by the CNR predicate.
    pub fn cnr_min_radius(&self, l: u64) -> u64 {
        (l as f64).powf(1.0 / self.alpha).ceil() as u64
    }

    pub fn scales(&self, count: usize) -> Result<Vec<u64>> {
        scales(self.l0, self.alpha, count)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("beta_prime", self.beta_prime),
            ("tau", self.tau),
            ("varrho", self.varrho),
            ("m", self.m),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_particles == 0 || self.dim == 0 {
            return Err(Error::InvalidParameter("N and d must be positive".into()));
        }
        if self.alpha <= 1.0 {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if self.regime == Regime::InfiniteRange && !(self.delta > 0.0) {
            return Err(Error::InvalidParameter("infinite-range regime needs delta > 0".into()));
        }
        Ok(())
    }
}

/// `gamma(m, L) = m (1 + L^{-tau})`.
pub fn gamma(m: f64, l: u64, params: &ScalingParams) -> f64 {
    m * (1.0 + (l as f64).powf(-params.tau))
}

/// `gamma(m, L, n) = m (1 + L^{-tau})^{N - n + 1}`.
pub fn gamma_n(m: f64, l: u64, n: usize, params: &ScalingParams) -> f64 {
    let e = (params.n_particles + 1).saturating_sub(n) as i32;
    m * (1.0 + (l as f64).powf(-params.tau)).powi(e)
}

/// Probability-exponent schedule `P(n, k) = 2^{N - n} p (1 + b)^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSchedule {
    pub p: f64,
    pub b: f64,
}

impl BoundSchedule {
    pub fn exponent(&self, n_total: usize, n: usize, k: u32) -> f64 {
        2f64.powi(n_total as i32 - n as i32) * self.p * (1.0 + self.b).powi(k as i32)
    }

    /// `L_k^{-P(n, k)}`.
    pub fn bound(&self, l_k: u64, n_total: usize, n: usize, k: u32) -> f64 {
        (l_k as f64).powf(-self.exponent(n_total, n, k))
    }
}

/// `L_{k+1} = ceil(L_k^alpha)`, computed exactly when `alpha` is a small
/// rational.
pub fn scales(l0: u64, alpha: f64, count: usize) -> Result<Vec<u64>> {
    if l0 <= 2 {
        return Err(Error::InvalidParameter(format!("L0 must exceed 2, got {l0}")));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
    }
    let mut out = Vec::with_capacity(count);
    let mut l = l0;
    for i in 0..count {
        if i > 0 {
            l = ceil_pow(l, alpha)?;
        }
        out.push(l);
    }
    Ok(out)
}

/// `ceil(l^alpha)`.
pub fn ceil_pow(l: u64, alpha: f64) -> Result<u64> {
    let approx = (l as f64).powf(alpha);
    if approx > 9.0e15 {
        return Err(Error::InvalidParameter(format!("{l}^{alpha} overflows the scale ladder")));
    }
    let Some((p, q)) = small_rational(alpha) else {
        return Ok(approx.ceil() as u64);
    };
    // c = ceil(l^{p/q}) is the unique integer with (c-1)^q < l^p <= c^q.
    let target = BigUint::from(l).pow(p);
    let pow_q = |c: u64| BigUint::from(c).pow(q);
    let mut c = approx.ceil().max(1.0) as u64;
    while c > 1 && pow_q(c - 1) >= target {
        c -= 1;
    }
    while pow_q(c) < target {
        c += 1;
    }
    Ok(c)
}

/// Continued-fraction recognition of `x` as `p / q` with `q <= 64`.
fn small_rational(x: f64) -> Option<(u32, u32)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..20 {
        let a = r.floor();
        let (h2, k2) = (a as i64 * h1 + h0, a as i64 * k1 + k0);
        if k2 > 64 {
            return None;
        }
        if (h2 as f64 / k2 as f64 - x).abs() < 1e-12 {
            return Some((h2 as u32, k2 as u32));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac.abs() < 1e-15 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

/// One named inequality with its two sides.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` for `lhs < rhs` style constraints; positive when satisfied.
    pub margin: f64,
    pub passed: bool,
}

// Strict inequalities get a relative guard so that rounding in e.g.
// 2 alpha^2 / (2 - alpha^2) at alpha = 4/3 does not decide the outcome.
fn strict_lt(name: &str, lhs: f64, rhs: f64) -> ConstraintCheck {
    let tol = 1e-12 * lhs.abs().max(rhs.abs()).max(1.0);
    ConstraintCheck { name: name.into(), lhs, rhs, margin: rhs - lhs, passed: rhs - lhs > tol }
}

fn le(name: &str, lhs: f64, rhs: f64) -> ConstraintCheck {
    ConstraintCheck { name: name.into(), lhs, rhs, margin: rhs - lhs, passed: lhs <= rhs }
}

/// `2 alpha^2 / (2 - alpha^2)`, the factor multiplying `N d` in the lower
/// bound on `p`.
pub fn p_threshold_factor(alpha: f64) -> f64 {
    2.0 * alpha * alpha / (2.0 - alpha * alpha)
}

/// Evaluates every parameter relation and the schedule constraints.
pub fn check_param_constraints(params: &ScalingParams, schedule: &BoundSchedule) -> Vec<ConstraintCheck> {
    let nd = (params.n_particles * params.dim) as f64;
    let a2 = params.alpha * params.alpha;
    let mut out = vec![
        strict_lt("0 < tau", 0.0, params.tau),
        strict_lt("tau < varrho", params.tau, params.varrho),
        strict_lt("1 + varrho < alpha", 1.0 + params.varrho, params.alpha),
        strict_lt("beta < 1 - tau", params.beta, 1.0 - params.tau),
        strict_lt("0 < beta_prime", 0.0, params.beta_prime),
        strict_lt("beta_prime < beta", params.beta_prime, params.beta),
        strict_lt("alpha^2 < 2", a2, 2.0),
        strict_lt("p > 2 alpha^2 / (2 - alpha^2) N d", p_threshold_factor(params.alpha) * nd, schedule.p),
        strict_lt("0 < b", 0.0, schedule.b),
        le(
            "3b <= (2 - alpha^2) / alpha^2 - 2Nd/p",
            3.0 * schedule.b,
            (2.0 - a2) / a2 - 2.0 * nd / schedule.p,
        ),
        le("3b <= sqrt 2 - 1", 3.0 * schedule.b, 2f64.sqrt() - 1.0),
    ];
    if params.regime == Regime::InfiniteRange {
        out.push(strict_lt("0 < delta", 0.0, params.delta));
        out.push(strict_lt("delta < 1/14", params.delta, 1.0 / 14.0));
        out.push(strict_lt("theta < delta / (1 + delta)", params.theta, params.delta / (1.0 + params.delta)));
        out.push(strict_lt("varrho - delta > tau", params.tau, params.varrho - params.delta));
    }
    out
}

/// Whether `m (1 + L^{-tau}) L - 2 L^beta >= m (1 + L^{-tau}/2) L`, i.e.
/// `m L^{1 - tau} / 2 >= 2 L^beta`.
pub fn exponent_identity_holds(params: &ScalingParams, m: f64, l: u64) -> bool {
    let lf = l as f64;
    let lhs = m * (1.0 + lf.powf(-params.tau)) * lf - 2.0 * lf.powf(params.beta);
    let rhs = m * (1.0 + 0.5 * lf.powf(-params.tau)) * lf;
    lhs >= rhs
}

/// Smallest `L` from which the exponent identity holds for every larger
/// scale. `None` if `beta >= 1 - tau`, when it eventually fails.
pub fn exponent_identity_min_scale(params: &ScalingParams, m: f64) -> Option<u64> {
    if params.beta >= 1.0 - params.tau || m <= 0.0 {
        return None;
    }
    // The difference of the two sides is m L^{1-tau}/2 - 2 L^beta, which is
    // increasing once positive; solve in closed form and adjust.
    let guess = (4.0 / m).powf(1.0 / (1.0 - params.tau - params.beta));
    let mut l = guess.floor().max(1.0) as u64;
    while l > 1 && exponent_identity_holds(params, m, l - 1) {
        l -= 1;
    }
    while !exponent_identity_holds(params, m, l) {
        l += 1;
    }
    Some(l)
}

/// Mixing-rate requirement at scale `k`:
/// `exp(-C ln^2 L_0^{alpha^k}) < (L_0^{alpha^k})^{-a p (1+b)^k}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingRateCheck {
    pub k: u32,
    /// `ln` of the left side.
    pub log_lhs: f64,
    /// `ln` of the right side.
    pub log_rhs: f64,
    pub passed: bool,
}

pub fn mixing_rate_check(
    l0: u64,
    alpha: f64,
    rate_constant: f64,
    a: f64,
    schedule: &BoundSchedule,
    k_max: u32,
) -> Vec<MixingRateCheck> {
    (0..=k_max)
        .map(|k| {
            let ln_l = alpha.powi(k as i32) * (l0 as f64).ln();
            let log_lhs = -rate_constant * ln_l * ln_l;
            let log_rhs = -a * schedule.p * (1.0 + schedule.b).powi(k as i32) * ln_l;
            MixingRateCheck { k, log_lhs, log_rhs, passed: log_lhs < log_rhs }
        })
        .collect()
}
