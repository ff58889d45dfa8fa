//! Closed-form PAC-Bayes intervals obtained by relaxing the coin-betting
//! inequality: McAllester, the Bernoulli-KL relaxation, the classical
//! fixed-n Maurer baseline, the empirical Bernstein relaxation, and their
//! delta-free intersection.

use serde::{Deserialize, Serialize};

use crate::core_math::{kl_lower_inverse, kl_upper_inverse, regret_budget};

/// Which procedure produced an interval. The string forms are the method
/// names used in configs and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CoinBetting,
    KlVer,
    MaurerRelaxed,
    MaurerOriginal,
    Mcallester,
    EmpBernstein,
    Intersection,
    McAlgorithm1,
    MaurerMc,
}

pub const ALL_METHODS: [Method; 9] = [
    Method::CoinBetting,
    Method::KlVer,
    Method::MaurerRelaxed,
    Method::MaurerOriginal,
    Method::Mcallester,
    Method::EmpBernstein,
    Method::Intersection,
    Method::McAlgorithm1,
    Method::MaurerMc,
];

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CoinBetting => "coin_betting",
            Method::KlVer => "kl_ver",
            Method::MaurerRelaxed => "maurer_relaxed",
            Method::MaurerOriginal => "maurer_original",
            Method::Mcallester => "mcallester",
            Method::EmpBernstein => "emp_bernstein",
            Method::Intersection => "intersection",
            Method::McAlgorithm1 => "mc_algorithm1",
            Method::MaurerMc => "maurer_mc",
        }
    }

    /// Stable index used for per-cell seed derivation.
    pub fn index(self) -> u64 {
        ALL_METHODS.iter().position(|&m| m == self).unwrap() as u64
    }

    /// True for the two Monte Carlo procedures that need a samplable posterior.
    pub fn needs_sampler(self) -> bool {
        matches!(self, Method::McAlgorithm1 | Method::MaurerMc)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A confidence interval for the posterior-averaged mean, clipped to `[0,1]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
    pub n: u64,
    pub delta: f64,
}

impl ConfidenceInterval {
    pub fn new(lower: f64, upper: f64, method: Method, n: u64, delta: f64) -> Self {
        let lower = lower.clamp(0.0, 1.0);
        let upper = upper.clamp(0.0, 1.0);
        debug_assert!(lower <= upper);
        Self {
            lower,
            upper,
            method,
            n,
            delta,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Sufficient statistics consumed by the closed-form relaxations.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub n: u64,
    /// `KL(P_n || P_0)`.
    pub kl_post_prior: f64,
    pub delta: f64,
    /// Posterior-averaged empirical mean.
    pub mu_hat_bar: f64,
    /// Posterior-averaged sum of squared deviations, divided by n.
    pub v_hat: f64,
}

/// `C_n = KL(P_n || P_0) + ln(sqrt(pi) Gamma(n+1) / Gamma(n+1/2))`.
pub fn budget_c_n(n: u64, kl_post_prior: f64) -> f64 {
    kl_post_prior + regret_budget(n)
}

fn c_n_delta(inp: &BoundInputs) -> f64 {
    budget_c_n(inp.n, inp.kl_post_prior) + (1.0 / inp.delta).ln()
}

/// Symmetric interval of half-width `2 sqrt((C_n + ln(1/delta)) / n)`.
pub fn mcallester_interval(inp: &BoundInputs) -> ConfidenceInterval {
    let hw = 2.0 * (c_n_delta(inp) / inp.n as f64).sqrt();
    ConfidenceInterval::new(
        inp.mu_hat_bar - hw,
        inp.mu_hat_bar + hw,
        Method::Mcallester,
        inp.n,
        inp.delta,
    )
}

/// Bernoulli-KL interval from `kl(mu_hat_bar, mu) <= (C_n + ln(1/delta)) / n`.
pub fn maurer_relaxed_interval(inp: &BoundInputs) -> ConfidenceInterval {
    let c = c_n_delta(inp) / inp.n as f64;
    ConfidenceInterval::new(
        kl_lower_inverse(inp.mu_hat_bar, c),
        kl_upper_inverse(inp.mu_hat_bar, c),
        Method::MaurerRelaxed,
        inp.n,
        inp.delta,
    )
}

/// Classical fixed-n Maurer baseline with the `ln(2 sqrt(n) / delta)` budget.
pub fn maurer_original_interval(inp: &BoundInputs) -> ConfidenceInterval {
    let budget = inp.kl_post_prior + (2.0 * (inp.n as f64).sqrt() / inp.delta).ln();
    let c = budget / inp.n as f64;
    ConfidenceInterval::new(
        kl_lower_inverse(inp.mu_hat_bar, c),
        kl_upper_inverse(inp.mu_hat_bar, c),
        Method::MaurerOriginal,
        inp.n,
        inp.delta,
    )
}

/// Variance-sensitive interval; vacuous once `C_{n,delta} >= n/2`.
pub fn empirical_bernstein_interval(inp: &BoundInputs) -> ConfidenceInterval {
    let c = c_n_delta(inp);
    let n = inp.n as f64;
    let denom_sqrt = n.sqrt() - 2.0 * c / n.sqrt();
    let denom_lin = n - 2.0 * c;
    if denom_sqrt <= 0.0 || denom_lin <= 0.0 {
        return ConfidenceInterval::new(0.0, 1.0, Method::EmpBernstein, inp.n, inp.delta);
    }
    let hw = (2.0 * c * inp.v_hat).sqrt() / denom_sqrt + 2.0 * c / denom_lin;
    ConfidenceInterval::new(
        inp.mu_hat_bar - hw,
        inp.mu_hat_bar + hw,
        Method::EmpBernstein,
        inp.n,
        inp.delta,
    )
}

/// Intersection of the three relaxations at the same delta. All three relax
/// a single high-probability event, so no delta splitting is needed.
pub fn intersect_relaxations(inp: &BoundInputs) -> ConfidenceInterval {
    let parts = [
        mcallester_interval(inp),
        maurer_relaxed_interval(inp),
        empirical_bernstein_interval(inp),
    ];
    let lower = parts.iter().map(|i| i.lower).fold(0.0f64, f64::max);
    let upper = parts.iter().map(|i| i.upper).fold(1.0f64, f64::min);
    ConfidenceInterval::new(lower, upper, Method::Intersection, inp.n, inp.delta)
}
