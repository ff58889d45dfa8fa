//! Scalar kernels: log-wealth, optimal log-wealth (psi-star), Bernoulli KL
//! and its inverses, discrete KL, and the betting regret budget.
//!
//! Everything here is a pure function; all iteration limits and tolerances
//! come from [`SolverTolerances`].

use libm::lgamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("loss value {0} outside [0,1]")]
    LossOutOfRange(f64),
    #[error("empty loss vector")]
    EmptyLosses,
    #[error("mean {0} outside [0,1]")]
    MeanOutOfRange(f64),
    #[error("distribution supports differ: {0} vs {1} atoms")]
    SupportMismatch(usize, usize),
    #[error("weights invalid: {0}")]
    BadWeights(String),
    #[error("solver failed to converge within {max_iters} iterations (bracket [{lo}, {hi}])")]
    NonConvergence { max_iters: usize, lo: f64, hi: f64 },
}

/// A sequence of losses `f(theta, X_i)`, each in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self, CoreError> {
        if values.is_empty() {
            return Err(CoreError::EmptyLosses);
        }
        for &v in &values {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(CoreError::LossOutOfRange(v));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: length >= 1
    }

    /// Empirical mean of the losses.
    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Sum of squared deviations from the empirical mean.
    pub fn sum_sq_dev(&self) -> f64 {
        let m = self.mean();
        self.0.iter().map(|&c| (c - m) * (c - m)).sum()
    }

    /// First `n` losses, for evaluating a bound on a prefix of the stream.
    pub fn prefix(&self, n: usize) -> LossVector {
        assert!(n >= 1 && n <= self.0.len());
        LossVector(self.0[..n].to_vec())
    }
}

/// Iteration limits and stopping widths shared by every solver in the crate.
#[derive(Debug, Clone, Copy)]
pub struct SolverTolerances {
    /// Stopping width for the bet-fraction search inside `psi_star`.
    pub lambda_tol: f64,
    /// Stopping width for searches over a mean in `[0,1]`.
    pub mu_tol: f64,
    /// Allowed slack when matching a constraint budget.
    pub budget_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            lambda_tol: 1e-10,
            mu_tol: 1e-10,
            budget_tol: 1e-9,
            max_iters: 200,
        }
    }
}

/// Optimal log-wealth together with the maximizing bet fraction.
#[derive(Debug, Clone, Copy)]
pub struct PsiStarResult {
    /// `max_lambda sum_i ln(1 + lambda (c_i - mu))`; nonnegative, possibly infinite.
    pub value: f64,
    /// Maximizing bet fraction; NaN when `value` is infinite.
    pub lambda_star: f64,
    pub iterations: usize,
}

/// Log-wealth `sum_i ln(1 + lambda (c_i - mu))`.
///
/// Returns `-inf` as soon as any wealth factor is nonpositive.
pub fn log_wealth(losses: &LossVector, mu: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    for &c in losses.values() {
        let factor = 1.0 + lambda * (c - mu);
        if factor <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += factor.ln();
    }
    total
}

/// First and second derivative of the log-wealth in `lambda`.
fn wealth_derivs(losses: &LossVector, mu: f64, lambda: f64) -> (f64, f64) {
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for &c in losses.values() {
        let d = c - mu;
        let factor = 1.0 + lambda * d;
        let r = d / factor;
        d1 += r;
        d2 -= r * r;
    }
    (d1, d2)
}

/// Optimal log-wealth over the bet range `[-1/(1-mu), 1/mu]`.
///
/// The objective is concave in the bet fraction; the maximizer is found by
/// safeguarded Newton on the derivative with a bisection fallback. At
/// `mu = 0` or `mu = 1` the supremum limit is returned: zero when every loss
/// matches `mu`, infinite otherwise.
pub fn psi_star(
    losses: &LossVector,
    mu: f64,
    tol: &SolverTolerances,
) -> Result<PsiStarResult, CoreError> {
    if !(0.0..=1.0).contains(&mu) || mu.is_nan() {
        return Err(CoreError::MeanOutOfRange(mu));
    }
    let c = losses.values();
    if mu == 0.0 {
        let value = if c.iter().all(|&x| x == 0.0) {
            0.0
        } else {
            f64::INFINITY
        };
        return Ok(PsiStarResult {
            value,
            lambda_star: if value == 0.0 { 0.0 } else { f64::NAN },
            iterations: 0,
        });
    }
    if mu == 1.0 {
        let value = if c.iter().all(|&x| x == 1.0) {
            0.0
        } else {
            f64::INFINITY
        };
        return Ok(PsiStarResult {
            value,
            lambda_star: if value == 0.0 { 0.0 } else { f64::NAN },
            iterations: 0,
        });
    }

    let lo = -1.0 / (1.0 - mu);
    let hi = 1.0 / mu;
    let has_one = c.contains(&1.0);
    let has_zero = c.contains(&0.0);

    // g'(0) = n (mu_hat - mu) fixes the side of the root.
    let (g0, _) = wealth_derivs(losses, mu, 0.0);
    if g0 == 0.0 {
        return Ok(PsiStarResult {
            value: 0.0,
            lambda_star: 0.0,
            iterations: 0,
        });
    }

    // Bracket [a, b] with g'(a) > 0 > g'(b). The wealth at a closed endpoint
    // of the bet range is finite unless a loss attains the annihilating
    // value, in which case the derivative diverges towards the endpoint and
    // the maximum is interior.
    let (mut a, mut b) = if g0 > 0.0 {
        if !has_zero {
            let (ghi, _) = wealth_derivs(losses, mu, hi);
            if ghi >= 0.0 {
                return Ok(PsiStarResult {
                    value: log_wealth(losses, mu, hi).max(0.0),
                    lambda_star: hi,
                    iterations: 0,
                });
            }
        }
        (0.0, hi)
    } else {
        if !has_one {
            let (glo, _) = wealth_derivs(losses, mu, lo);
            if glo <= 0.0 {
                return Ok(PsiStarResult {
                    value: log_wealth(losses, mu, lo).max(0.0),
                    lambda_star: lo,
                    iterations: 0,
                });
            }
        }
        (lo, 0.0)
    };

    let mut x = 0.5 * (a + b);
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > tol.max_iters {
            return Err(CoreError::NonConvergence {
                max_iters: tol.max_iters,
                lo: a,
                hi: b,
            });
        }
        let (d1, d2) = wealth_derivs(losses, mu, x);
        if d1 > 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a <= tol.lambda_tol * (1.0 + x.abs()) || d1 == 0.0 {
            break;
        }
        let newton = x - d1 / d2;
        let next = if newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        // Rounding can pin the residual on one side of zero so the bracket
        // never collapses; a stalled iterate is the other converged state.
        if (next - x).abs() <= tol.lambda_tol * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }

    Ok(PsiStarResult {
        value: log_wealth(losses, mu, x).max(0.0),
        lambda_star: x,
        iterations,
    })
}

/// `psi_star` together with its derivative in `mu`.
///
/// For an interior maximizer the envelope theorem applies; when the
/// maximizer sits on an endpoint of the bet range the endpoint itself moves
/// with `mu` and the total derivative is used.
pub fn psi_star_with_grad(
    losses: &LossVector,
    mu: f64,
    tol: &SolverTolerances,
) -> Result<(PsiStarResult, f64), CoreError> {
    let res = psi_star(losses, mu, tol)?;
    if !res.value.is_finite() {
        return Ok((res, f64::INFINITY));
    }
    let lambda = res.lambda_star;
    let lo = -1.0 / (1.0 - mu);
    let hi = 1.0 / mu;
    // d lambda / d mu when pinned to a moving endpoint.
    let lp = if lambda == lo {
        -1.0 / ((1.0 - mu) * (1.0 - mu))
    } else if lambda == hi {
        -1.0 / (mu * mu)
    } else {
        0.0
    };
    let mut grad = 0.0;
    for &c in losses.values() {
        let d = c - mu;
        grad += (lp * d - lambda) / (1.0 + lambda * d);
    }
    Ok((res, grad))
}

/// Bernoulli KL divergence `kl(p, q)` with the continuous extension
/// `0 ln 0 = 0`.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    if p == q {
        return 0.0;
    }
    let mut total = 0.0;
    if p > 0.0 {
        if q == 0.0 {
            return f64::INFINITY;
        }
        total += p * (p / q).ln();
    }
    if p < 1.0 {
        if q == 1.0 {
            return f64::INFINITY;
        }
        total += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    total.max(0.0)
}

/// Largest `mu in [p, 1]` with `kl(p, mu) <= c`, by bisection.
pub fn kl_upper_inverse(p: f64, c: f64) -> f64 {
    kl_upper_inverse_tol(p, c, SolverTolerances::default().mu_tol)
}

pub fn kl_upper_inverse_tol(p: f64, c: f64, mu_tol: f64) -> f64 {
    debug_assert!(c >= 0.0);
    if p == 1.0 {
        return 1.0;
    }
    if c == 0.0 {
        return p;
    }
    let (mut lo, mut hi) = (p, 1.0);
    if bernoulli_kl(p, hi) <= c {
        return 1.0;
    }
    while hi - lo > mu_tol {
        let mid = 0.5 * (lo + hi);
        if bernoulli_kl(p, mid) <= c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `mu in [0, p]` with `kl(p, mu) <= c`, by bisection.
pub fn kl_lower_inverse(p: f64, c: f64) -> f64 {
    kl_lower_inverse_tol(p, c, SolverTolerances::default().mu_tol)
}

pub fn kl_lower_inverse_tol(p: f64, c: f64, mu_tol: f64) -> f64 {
    debug_assert!(c >= 0.0);
    if p == 0.0 {
        return 0.0;
    }
    if c == 0.0 {
        return p;
    }
    let (mut lo, mut hi) = (0.0, p);
    if bernoulli_kl(p, lo) <= c {
        return 0.0;
    }
    while hi - lo > mu_tol {
        let mid = 0.5 * (lo + hi);
        if bernoulli_kl(p, mid) <= c {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Regret budget `ln(sqrt(pi) Gamma(n+1) / Gamma(n+1/2))` of the optimal
/// betting algorithm, via log-gamma.
pub fn regret_budget(n: u64) -> f64 {
    assert!(n >= 1);
    let n = n as f64;
    0.5 * std::f64::consts::PI.ln() + lgamma(n + 1.0) - lgamma(n + 0.5)
}

/// Probability vector over a finite set of parameter atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution(Vec<f64>);

impl DiscreteDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, CoreError> {
        if weights.is_empty() {
            return Err(CoreError::BadWeights("no atoms".into()));
        }
        if weights.iter().any(|&w| w < 0.0 || w.is_nan()) {
            return Err(CoreError::BadWeights("negative weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::BadWeights(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `KL(posterior || prior)` over a shared finite support.
pub fn discrete_kl(
    posterior: &DiscreteDistribution,
    prior: &DiscreteDistribution,
) -> Result<f64, CoreError> {
    if posterior.len() != prior.len() {
        return Err(CoreError::SupportMismatch(posterior.len(), prior.len()));
    }
    let mut total = 0.0;
    for (&p, &q) in posterior.weights().iter().zip(prior.weights()) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += p * (p / q).ln();
    }
    Ok(total.max(0.0))
}
