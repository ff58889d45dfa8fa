//! Randomized invariant checks.

use proptest::collection::vec;
use proptest::prelude::*;

use pacbound::bounds::{
    budget_c_n, empirical_bernstein_interval, intersect_relaxations, maurer_original_interval,
    maurer_relaxed_interval, mcallester_interval, BoundInputs,
};
use pacbound::core_math::{
    bernoulli_kl, kl_lower_inverse, kl_upper_inverse, psi_star, LossVector, SolverTolerances,
};

proptest! {
    #[test]
    fn psi_star_nonnegative_and_dominates_kl(
        losses in vec(0.0f64..=1.0, 1..24),
        mu in 0.01f64..0.99,
    ) {
        let losses = LossVector::new(losses).unwrap();
        let res = psi_star(&losses, mu, &SolverTolerances::default()).unwrap();
        prop_assert!(res.value >= 0.0);
        let kl = losses.len() as f64 * bernoulli_kl(losses.mean(), mu);
        prop_assert!(res.value >= kl - 1e-9);
        // Zero exactly at the empirical mean.
        let at_mean = psi_star(&losses, losses.mean(), &SolverTolerances::default())
            .unwrap()
            .value;
        prop_assert!(at_mean.abs() <= 1e-9);
    }

    #[test]
    fn kl_inverses_bracket_p(p in 0.0f64..=1.0, c in 0.0f64..4.0) {
        let hi = kl_upper_inverse(p, c);
        let lo = kl_lower_inverse(p, c);
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!((0.0..=1.0).contains(&hi));
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        // The divergence at the returned points cannot exceed the budget by
        // more than a bisection step's worth.
        prop_assert!(bernoulli_kl(p, (hi - 1e-9).max(p)) <= c + 1e-6);
        prop_assert!(bernoulli_kl(p, (lo + 1e-9).min(p)) <= c + 1e-6);
    }

    #[test]
    fn closed_form_intervals_are_sane(
        n in 1u64..5000,
        kl in 0.0f64..5.0,
        delta in 0.001f64..1.0,
        mu_hat in 0.0f64..=1.0,
        v_hat in 0.0f64..=0.25,
    ) {
        let inp = BoundInputs { n, kl_post_prior: kl, delta, mu_hat_bar: mu_hat, v_hat };
        let all = [
            mcallester_interval(&inp),
            maurer_relaxed_interval(&inp),
            maurer_original_interval(&inp),
            empirical_bernstein_interval(&inp),
            intersect_relaxations(&inp),
        ];
        for iv in &all {
            prop_assert!(0.0 <= iv.lower && iv.lower <= iv.upper && iv.upper <= 1.0);
        }
        // The intersection is the tightest of the three relaxations it joins.
        let inter = &all[4];
        for iv in &all[..2] {
            prop_assert!(inter.width() <= iv.width() + 1e-12);
        }
    }

    #[test]
    fn budget_is_monotone_in_n(n in 1u64..10000, kl in 0.0f64..3.0) {
        prop_assert!(budget_c_n(n + 1, kl) > budget_c_n(n, kl));
        prop_assert!(budget_c_n(n, kl) >= kl);
    }
}
