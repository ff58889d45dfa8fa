//! Monte Carlo inversion for samplable posteriors: the
//! boosting-the-confidence block procedure and the Maurer-style baseline,
//! plus the pilot-based block-size recommendation.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::bounds::{budget_c_n, ConfidenceInterval, Method};
use crate::core_math::{kl_lower_inverse, kl_upper_inverse, LossVector, SolverTolerances};
use crate::optimizer::{
    Atom, ConstraintKind, Direction, FiniteSupportProblem, MeanAssignment, OptimizerError,
};

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte Carlo config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

/// Knobs of the block Monte Carlo procedure.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Number of independent blocks (K).
    pub blocks: usize,
    /// Monte Carlo draws per block (m).
    pub block_size: usize,
    /// Markov multiplier C > 1 applied inside each block constraint.
    pub multiplier: f64,
    pub delta: f64,
}

impl McConfig {
    /// Default pairing: `K = ceil(ln(1/delta))`, `C = e`.
    pub fn for_delta(delta: f64, block_size: usize) -> Self {
        Self {
            blocks: (1.0 / delta).ln().ceil().max(1.0) as usize,
            block_size,
            multiplier: std::f64::consts::E,
            delta,
        }
    }

    /// The boosting step fails with mass `C^-K`; require it not to exceed
    /// delta (up to rounding slack so that e.g. `C = 20^(1/4)` printed to
    /// five digits still validates with `K = 4`, `delta = 0.05`).
    pub fn validate(&self) -> Result<(), McError> {
        let mut problems = Vec::new();
        if self.blocks < 1 {
            problems.push("blocks must be >= 1".to_string());
        }
        if self.block_size < 1 {
            problems.push("block_size must be >= 1".to_string());
        }
        if self.multiplier.is_nan() || self.multiplier <= 1.0 {
            problems.push(format!("multiplier must be > 1, got {}", self.multiplier));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            problems.push(format!("delta must be in (0,1], got {}", self.delta));
        }
        if problems.is_empty() {
            let boost_mass = self.multiplier.powi(-(self.blocks as i32));
            if boost_mass > self.delta * (1.0 + 1e-4) {
                problems.push(format!(
                    "boosting failure mass C^-K = {boost_mass:.6} exceeds delta = {}",
                    self.delta
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(McError::BadConfig(problems.join("; ")))
        }
    }
}

/// A posterior that can be sampled, with losses evaluated on a fixed data
/// sample and an analytically known prior KL.
pub trait ParamSampler: Sync {
    /// Draw one parameter atom from the posterior.
    fn draw(&self, rng: &mut dyn RngCore) -> f64;
    /// Losses of the atom over the fixed data sample.
    fn losses(&self, theta: f64) -> LossVector;
    /// `KL(P_n || P_0)`, supplied in closed form by the scenario.
    fn kl_post_prior(&self) -> f64;
}

/// Outcome of one block's inner optimization.
#[derive(Debug, Clone)]
pub struct BlockResult {
    /// Unweighted average of the block's optimal mean assignment.
    pub nu_bar: f64,
    pub mu_assignment: MeanAssignment,
    pub feasible: bool,
}

/// One RNG stream per block, counter-split from the master seed, so block
/// count and size can change without correlating draws.
fn block_rng(seed: u64, block: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(block + 1);
    rng
}

/// Block Monte Carlo inversion.
///
/// Per block, the finite-support program is solved on the sampled atoms with
/// uniform weights and the budget inflated by the Markov multiplier; the
/// extreme block objective is then widened by a KL inversion at level
/// `ln(K/(2 delta)) / m` to absorb the Monte Carlo error.
pub fn run_algorithm1<S: ParamSampler>(
    sampler: &S,
    n: u64,
    cfg: &McConfig,
    tol: &SolverTolerances,
    seed: u64,
) -> Result<ConfidenceInterval, McError> {
    cfg.validate()?;
    let k = cfg.blocks;
    let m = cfg.block_size;
    let budget = cfg.multiplier * (budget_c_n(n, sampler.kl_post_prior()) + (1.0 / cfg.delta).ln());

    let mut upper_blocks = Vec::with_capacity(k);
    let mut lower_blocks = Vec::with_capacity(k);
    for block in 0..k {
        let mut rng = block_rng(seed, block as u64);
        let atoms: Vec<Atom> = (0..m)
            .map(|_| {
                let theta = sampler.draw(&mut rng);
                Atom {
                    weight: 1.0 / m as f64,
                    losses: sampler.losses(theta),
                }
            })
            .collect();
        let prob = FiniteSupportProblem::new(atoms, budget, ConstraintKind::CoinBetting)?;
        for (direction, out) in [
            (Direction::Upper, &mut upper_blocks),
            (Direction::Lower, &mut lower_blocks),
        ] {
            let solved = prob.solve_bound(direction, tol)?;
            let feasible = prob.constraint_value(&solved.mu, tol)? <= budget + tol.budget_tol;
            out.push(BlockResult {
                nu_bar: solved.value,
                mu_assignment: solved.mu,
                feasible,
            });
        }
    }

    let nu_upper = upper_blocks
        .iter()
        .map(|b| b.nu_bar)
        .fold(f64::NEG_INFINITY, f64::max);
    let nu_lower = lower_blocks
        .iter()
        .map(|b| b.nu_bar)
        .fold(f64::INFINITY, f64::min);

    let widen = ((k as f64 / (2.0 * cfg.delta)).ln() / m as f64).max(0.0);
    let upper = kl_upper_inverse(nu_upper.clamp(0.0, 1.0), widen);
    let lower = kl_lower_inverse(nu_lower.clamp(0.0, 1.0), widen);
    Ok(ConfidenceInterval::new(
        lower,
        upper,
        Method::McAlgorithm1,
        n,
        cfg.delta,
    ))
}

/// High-probability lower bound on the integrated penalty from per-block
/// means: `min_k (1/C) * block mean`.
pub fn boosting_floor(psi_block_means: &[f64], c: f64) -> f64 {
    assert!(!psi_block_means.is_empty());
    assert!(c > 1.0);
    psi_block_means
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v / c))
}

/// Maurer-style Monte Carlo baseline: average the per-atom empirical means
/// over M posterior draws, widen by the Hoeffding radius, and invert the KL
/// at the shifted endpoints.
pub fn run_maurer_mc<S: ParamSampler>(
    sampler: &S,
    n: u64,
    num_draws: usize,
    delta: f64,
    seed: u64,
) -> Result<ConfidenceInterval, McError> {
    if num_draws < 1 {
        return Err(McError::BadConfig("num_draws must be >= 1".into()));
    }
    let mut rng = block_rng(seed, 0);
    let mut total = 0.0;
    for _ in 0..num_draws {
        let theta = sampler.draw(&mut rng);
        total += sampler.losses(theta).mean();
    }
    let mu_hat_m = total / num_draws as f64;
    let w = ((2.0 / delta).ln() / (2.0 * num_draws as f64)).sqrt();
    let budget = (budget_c_n(n, sampler.kl_post_prior()) + (2.0 / delta).ln()) / n as f64;
    let k_upper = (mu_hat_m + w).clamp(0.0, 1.0);
    let k_lower = (mu_hat_m - w).clamp(0.0, 1.0);
    Ok(ConfidenceInterval::new(
        kl_lower_inverse(k_lower, budget),
        kl_upper_inverse(k_upper, budget),
        Method::MaurerMc,
        n,
        delta,
    ))
}

/// Smallest block size making the Bernstein deviation term at most
/// `target_ratio` times the estimated mean, from a pilot sample of penalty
/// values. Returns `usize::MAX` when the pilot mean is zero.
pub fn recommend_m(psi_samples: &[f64], delta: f64, target_ratio: f64) -> usize {
    assert!(!psi_samples.is_empty());
    assert!(target_ratio > 0.0 && target_ratio < 1.0);
    let len = psi_samples.len() as f64;
    let mean = psi_samples.iter().sum::<f64>() / len;
    if mean == 0.0 {
        return usize::MAX;
    }
    let second_moment = psi_samples.iter().map(|&x| x * x).sum::<f64>() / len;
    let m = 2.0 * (1.0 / delta).ln() * second_moment / (target_ratio * target_ratio * mean * mean);
    (m.ceil() as usize).max(1)
}
