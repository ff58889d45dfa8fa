//! Exact inversion of the coin-betting inequality on finite-support
//! posteriors: maximize/minimize the posterior-averaged mean subject to the
//! averaged convex constraint staying within the budget.
//!
//! The program is separable with a linear objective and one scalar convex
//! constraint, so it is solved by bisection on the Lagrange multiplier with
//! one-dimensional inner solves per atom.

use rayon::prelude::*;
use thiserror::Error;

use crate::core_math::{
    bernoulli_kl, psi_star, psi_star_with_grad, CoreError, LossVector, SolverTolerances,
};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("problem has no atoms with positive weight")]
    NoAtoms,
    #[error("atom loss vectors have unequal lengths")]
    UnequalLengths,
    #[error("weights invalid: {0}")]
    BadWeights(String),
    #[error("budget {0} is negative")]
    NegativeBudget(f64),
    #[error("dimension mismatch: {0} atoms vs {1} means")]
    DimensionMismatch(usize, usize),
    #[error(
        "dual bisection failed to meet the budget within {max_iters} iterations \
         (multiplier bracket [{lo}, {hi}])"
    )]
    DualNonConvergence { max_iters: usize, lo: f64, hi: f64 },
}

/// Which convex penalty sits inside the constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Optimal log-wealth `psi_star(losses, mu)`.
    CoinBetting,
    /// `n * kl(mu_hat, mu)` — the ablation that replaces the log-wealth by
    /// its Bernoulli-KL lower bound.
    KlVer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

/// One parameter atom: posterior weight plus its observed losses.
#[derive(Debug, Clone)]
pub struct Atom {
    pub weight: f64,
    pub losses: LossVector,
}

/// Finite-support instance of the inversion program.
#[derive(Debug, Clone)]
pub struct FiniteSupportProblem {
    atoms: Vec<Atom>,
    budget: f64,
    constraint_kind: ConstraintKind,
}

/// One candidate mean per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAssignment(pub Vec<f64>);

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Optimal value of the averaged mean (`M_U` or `M_L`).
    pub value: f64,
    pub mu: MeanAssignment,
    /// Final Lagrange multiplier; zero when the box constraint saturates.
    pub multiplier: f64,
}

impl FiniteSupportProblem {
    /// Atoms with weight zero are dropped up front: they contribute nothing
    /// to the objective or constraint but can carry infinite penalties.
    pub fn new(
        atoms: Vec<Atom>,
        budget: f64,
        constraint_kind: ConstraintKind,
    ) -> Result<Self, OptimizerError> {
        if budget < 0.0 || budget.is_nan() {
            return Err(OptimizerError::NegativeBudget(budget));
        }
        if atoms.iter().any(|a| a.weight < 0.0 || a.weight.is_nan()) {
            return Err(OptimizerError::BadWeights("negative weight".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OptimizerError::BadWeights(format!(
                "weights sum to {total}"
            )));
        }
        let atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.weight > 0.0).collect();
        if atoms.is_empty() {
            return Err(OptimizerError::NoAtoms);
        }
        let n = atoms[0].losses.len();
        if atoms.iter().any(|a| a.losses.len() != n) {
            return Err(OptimizerError::UnequalLengths);
        }
        Ok(Self {
            atoms,
            budget,
            constraint_kind,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn constraint_kind(&self) -> ConstraintKind {
        self.constraint_kind
    }

    /// Number of data samples per atom.
    pub fn n(&self) -> usize {
        self.atoms[0].losses.len()
    }

    /// Posterior-weighted empirical mean — always feasible.
    pub fn empirical_value(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.losses.mean()).sum()
    }

    /// The convex per-atom penalty `g_theta(mu)` of this problem's kind.
    pub fn penalty_at(
        &self,
        atom: &Atom,
        mu: f64,
        tol: &SolverTolerances,
    ) -> Result<f64, CoreError> {
        self.penalty(atom, mu, tol)
    }

    fn penalty(&self, atom: &Atom, mu: f64, tol: &SolverTolerances) -> Result<f64, CoreError> {
        match self.constraint_kind {
            ConstraintKind::CoinBetting => Ok(psi_star(&atom.losses, mu, tol)?.value),
            ConstraintKind::KlVer => {
                Ok(atom.losses.len() as f64 * bernoulli_kl(atom.losses.mean(), mu))
            }
        }
    }

    fn penalty_grad(&self, atom: &Atom, mu: f64, tol: &SolverTolerances) -> Result<f64, CoreError> {
        match self.constraint_kind {
            ConstraintKind::CoinBetting => Ok(psi_star_with_grad(&atom.losses, mu, tol)?.1),
            ConstraintKind::KlVer => {
                let n = atom.losses.len() as f64;
                let p = atom.losses.mean();
                Ok(n * (mu - p) / (mu * (1.0 - mu)))
            }
        }
    }

    /// Weighted constraint value `sum_theta w_theta g_theta(mu_theta)`.
    pub fn constraint_value(
        &self,
        mu: &MeanAssignment,
        tol: &SolverTolerances,
    ) -> Result<f64, OptimizerError> {
        if mu.0.len() != self.atoms.len() {
            return Err(OptimizerError::DimensionMismatch(
                self.atoms.len(),
                mu.0.len(),
            ));
        }
        let mut total = 0.0;
        for (atom, &m) in self.atoms.iter().zip(&mu.0) {
            let g = self.penalty(atom, m, tol)?;
            if g.is_infinite() {
                return Ok(f64::INFINITY);
            }
            total += atom.weight * g;
        }
        Ok(total)
    }

    /// Whether the averaged penalty at the given means fits in the budget.
    /// With the true means this is exactly the high-probability event of the
    /// concentration inequality.
    pub fn concentration_event_holds(
        &self,
        true_means: &MeanAssignment,
        tol: &SolverTolerances,
    ) -> Result<bool, OptimizerError> {
        Ok(self.constraint_value(true_means, tol)? <= self.budget)
    }

    /// Per-atom inner solve: argmax of `s*mu - eta*g(mu)` over the half-box
    /// between the empirical mean and the relevant boundary. The derivative
    /// `s - eta g'(mu)` is decreasing, so bisection applies; the returned
    /// point sits on the side where the derivative is still positive.
    fn inner_argmax(
        &self,
        atom: &Atom,
        eta: f64,
        direction: Direction,
        tol: &SolverTolerances,
    ) -> Result<(f64, f64), OptimizerError> {
        let mu_hat = atom.losses.mean();
        let (a, b) = match direction {
            Direction::Upper => (mu_hat, 1.0),
            Direction::Lower => (0.0, mu_hat),
        };
        if b - a <= tol.mu_tol {
            let m = match direction {
                Direction::Upper => a,
                Direction::Lower => b,
            };
            return Ok((m, self.penalty(atom, m, tol)?));
        }
        // The inner objective is concave with a decreasing derivative: for
        // Upper it starts at +1 at mu_hat and decreases towards 1; for Lower
        // it is -1 at mu_hat and grows towards 0. The far boundary is
        // optimal when the derivative never crosses zero before it.
        let boundary = match direction {
            Direction::Upper => b,
            Direction::Lower => a,
        };
        let g_boundary = self.penalty(atom, boundary, tol)?;
        if g_boundary.is_finite() {
            let d = self.deriv(atom, eta, direction, boundary, tol)?;
            let boundary_optimal = match direction {
                Direction::Upper => d >= 0.0,
                Direction::Lower => d <= 0.0,
            };
            if boundary_optimal {
                return Ok((boundary, g_boundary));
            }
        }
        // Bisection invariant: deriv(pos) > 0 > deriv(neg). The empirical
        // mean always sits on the neg side for Lower and the pos side for
        // Upper.
        let (mut pos, mut neg) = (a, b);
        while (pos - neg).abs() > tol.mu_tol {
            let mid = 0.5 * (pos + neg);
            let d = self.deriv(atom, eta, direction, mid, tol)?;
            if d > 0.0 {
                pos = mid;
            } else {
                neg = mid;
            }
        }
        // Keep the side nearest the empirical mean: its penalty is the
        // smaller (finite) one, so the aggregated constraint stays feasible.
        let m = match direction {
            Direction::Upper => pos,
            Direction::Lower => neg,
        };
        Ok((m, self.penalty(atom, m, tol)?))
    }

    /// Derivative of the inner objective at `mu`.
    fn deriv(
        &self,
        atom: &Atom,
        eta: f64,
        direction: Direction,
        mu: f64,
        tol: &SolverTolerances,
    ) -> Result<f64, OptimizerError> {
        let g = self.penalty_grad(atom, mu, tol)?;
        Ok(match direction {
            Direction::Upper => 1.0 - eta * g,
            Direction::Lower => -1.0 - eta * g,
        })
    }

    /// Inner solves for every atom at a fixed multiplier, plus the
    /// aggregated objective and constraint.
    fn relaxed_solution(
        &self,
        eta: f64,
        direction: Direction,
        tol: &SolverTolerances,
    ) -> Result<(Vec<f64>, f64, f64), OptimizerError> {
        let per_atom: Result<Vec<(f64, f64)>, OptimizerError> = self
            .atoms
            .par_iter()
            .map(|atom| self.inner_argmax(atom, eta, direction, tol))
            .collect();
        let per_atom = per_atom?;
        let mut objective = 0.0;
        let mut constraint = 0.0;
        let mut mu = Vec::with_capacity(per_atom.len());
        for (atom, (m, g)) in self.atoms.iter().zip(&per_atom) {
            objective += atom.weight * m;
            constraint += atom.weight * g;
            mu.push(*m);
        }
        Ok((mu, objective, constraint))
    }

    /// Solve for `M_U` (Upper) or `M_L` (Lower) by bisecting the Lagrange
    /// multiplier until the aggregated constraint meets the budget.
    pub fn solve_bound(
        &self,
        direction: Direction,
        tol: &SolverTolerances,
    ) -> Result<SolveOutcome, OptimizerError> {
        // Saturation shortcut: the unconstrained box corner.
        let (mu0, obj0, h0) = self.relaxed_solution(0.0, direction, tol)?;
        if h0 <= self.budget {
            return Ok(SolveOutcome {
                value: obj0,
                mu: MeanAssignment(mu0),
                multiplier: 0.0,
            });
        }
        if self.budget == 0.0 {
            let mu: Vec<f64> = self.atoms.iter().map(|a| a.losses.mean()).collect();
            let value = self.empirical_value();
            return Ok(SolveOutcome {
                value,
                mu: MeanAssignment(mu),
                multiplier: f64::INFINITY,
            });
        }

        // Grow the multiplier until feasible; the constraint tends to zero
        // as eta grows, so this terminates quickly.
        let mut eta_lo = 0.0;
        let mut eta_hi = 1.0;
        let mut hi_state = None;
        for _ in 0..60 {
            let state = self.relaxed_solution(eta_hi, direction, tol)?;
            if state.2 <= self.budget {
                hi_state = Some(state);
                break;
            }
            eta_lo = eta_hi;
            eta_hi *= 2.0;
        }
        let mut best = match hi_state {
            Some(s) => s,
            None => {
                return Err(OptimizerError::DualNonConvergence {
                    max_iters: 60,
                    lo: eta_lo,
                    hi: eta_hi,
                })
            }
        };
        let mut best_eta = eta_hi;

        // Bisect; `best` always holds the feasible side.
        let mut iters = 0usize;
        while iters < tol.max_iters {
            iters += 1;
            if (best.2 - self.budget).abs() <= tol.budget_tol {
                break;
            }
            if eta_hi - eta_lo <= f64::EPSILON * eta_hi {
                break;
            }
            let mid = 0.5 * (eta_lo + eta_hi);
            let state = self.relaxed_solution(mid, direction, tol)?;
            if state.2 <= self.budget {
                eta_hi = mid;
                best = state;
                best_eta = mid;
            } else {
                eta_lo = mid;
            }
        }

        Ok(SolveOutcome {
            value: best.1,
            mu: MeanAssignment(best.0),
            multiplier: best_eta,
        })
    }
}
