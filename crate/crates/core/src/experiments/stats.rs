use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Bernoulli proportion with a 95% Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub successes: usize,
    pub trials: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ProbabilityEstimate {
    pub fn wilson(successes: usize, trials: usize) -> Self {
        assert!(trials > 0 && successes <= trials, "need 0 <= successes <= trials, trials > 0");
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = WILSON_Z * WILSON_Z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        ProbabilityEstimate {
            successes,
            trials,
            p_hat: p,
            ci_low: (center - half).clamp(0.0, p),
            ci_high: (center + half).clamp(p, 1.0),
        }
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn covers(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    /// Whether the two intervals are disjoint.
    pub fn separated_from(&self, other: &ProbabilityEstimate) -> bool {
        self.ci_high < other.ci_low || other.ci_high < self.ci_low
    }
}
