//! End-to-end acceptance checks. Each test prints a single
//! `criterion N ... PASS|FAIL` line; run with `-- --nocapture` to see them.

use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use pacbound::bounds::Method;
use pacbound::core_math::{
    bernoulli_kl, log_wealth, psi_star, regret_budget, LossVector, SolverTolerances,
};
use pacbound::harness::{
    finite_scenario_interval, run_experiment, write_rows_csv, ResultRow, RunConfig,
};
use pacbound::montecarlo::{run_algorithm1, run_maurer_mc, McConfig};
use pacbound::optimizer::{Atom, ConstraintKind, Direction, FiniteSupportProblem};
use pacbound::scenarios::{
    gen_bernoulli, gen_gaussian_erf, FiniteScenario, ScenarioKind, ScenarioSpec,
};

fn tols() -> SolverTolerances {
    SolverTolerances::default()
}

fn report(id: u32, what: &str, ok: bool) {
    println!(
        "criterion {id} ({what}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} failed: {what}");
}

fn random_losses(rng: &mut ChaCha12Rng, n: usize) -> LossVector {
    LossVector::new((0..n).map(|_| rng.random()).collect()).unwrap()
}

/// Dense lambda-grid maximum of the log-wealth, the independent oracle.
fn grid_psi_star(losses: &LossVector, mu: f64, points: usize) -> f64 {
    let lo = -1.0 / (1.0 - mu);
    let hi = 1.0 / mu;
    let mut best = 0.0f64; // lambda = 0 always yields zero wealth
    for j in 0..=points {
        let lambda = lo + (hi - lo) * j as f64 / points as f64;
        best = best.max(log_wealth(losses, mu, lambda));
    }
    best
}

#[test]
fn criterion_01_psi_star_grid_oracle() {
    let started = Instant::now();
    let tol = tols();
    let cases: Vec<(LossVector, f64)> = {
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        (0..200)
            .map(|_| {
                let n = rng.random_range(1..=16);
                let mu = rng.random_range(0.05..0.95);
                (random_losses(&mut rng, n), mu)
            })
            .collect()
    };
    let worst = cases
        .par_iter()
        .map(|(losses, mu)| {
            let solved = psi_star(losses, *mu, &tol).unwrap().value;
            let grid = grid_psi_star(losses, *mu, 1_000_000);
            (solved - grid).abs()
        })
        .reduce(|| 0.0, f64::max);
    let elapsed = started.elapsed();
    report(
        1,
        "optimal log-wealth matches a 1e6-point grid search within 1e-6, under 30s",
        worst <= 1e-6 && elapsed < Duration::from_secs(30),
    );
}

#[test]
fn criterion_02_binary_equality_general_domination() {
    let tol = tols();
    let mut rng = ChaCha12Rng::seed_from_u64(102);
    let mut ok = true;
    for _ in 0..200 {
        let n = rng.random_range(2..=16);
        let vals: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.6 { 1.0 } else { 0.0 })
            .collect();
        // Keep the empirical mean interior so the KL side is finite.
        if vals.iter().all(|&v| v == vals[0]) {
            continue;
        }
        let losses = LossVector::new(vals).unwrap();
        let mu = rng.random_range(0.05..0.95);
        let psi = psi_star(&losses, mu, &tol).unwrap().value;
        let kl = losses.len() as f64 * bernoulli_kl(losses.mean(), mu);
        ok &= (psi - kl).abs() <= 1e-8;
    }
    for _ in 0..200 {
        let n = rng.random_range(1..=16);
        let losses = random_losses(&mut rng, n);
        let mu = rng.random_range(0.05..0.95);
        let psi = psi_star(&losses, mu, &tol).unwrap().value;
        let kl = losses.len() as f64 * bernoulli_kl(losses.mean(), mu);
        ok &= psi >= kl - 1e-9;
    }
    report(
        2,
        "binary losses attain the n*kl value exactly; general losses dominate it",
        ok,
    );
}

#[test]
fn criterion_03_convexity_in_mu() {
    let tol = tols();
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    let mut ok = true;
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        let losses = random_losses(&mut rng, n);
        let mu1: f64 = rng.random_range(0.02..0.98);
        let mu2: f64 = rng.random_range(0.02..0.98);
        let t: f64 = rng.random();
        let mid = t * mu1 + (1.0 - t) * mu2;
        let f1 = psi_star(&losses, mu1, &tol).unwrap().value;
        let f2 = psi_star(&losses, mu2, &tol).unwrap().value;
        let fm = psi_star(&losses, mid, &tol).unwrap().value;
        if f1.is_finite() && f2.is_finite() {
            ok &= fm <= t * f1 + (1.0 - t) * f2 + 1e-8;
        }
    }
    report(3, "midpoint convexity of the log-wealth penalty in mu", ok);
}

#[test]
fn criterion_04_regret_budget_bounds() {
    let mut ok = (regret_budget(1) - 2.0f64.ln()).abs() <= 1e-12;
    ok &= (regret_budget(1).exp() - 2.0).abs() <= 1e-12;
    for n in 1..=(1u64 << 15) {
        ok &= regret_budget(n).exp() <= 2.0 * (n as f64).sqrt() + 1e-9;
    }
    report(
        4,
        "regret budget is ln 2 at n=1 and exp(budget) <= 2*sqrt(n) throughout",
        ok,
    );
}

#[test]
fn criterion_05_solver_vs_brute_force() {
    let started = Instant::now();
    let tol = tols();
    let seeds: Vec<u64> = (0..50).collect();
    let ok = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha12Rng::seed_from_u64(1050 + s);
            let n = rng.random_range(2..=8);
            let w: f64 = rng.random_range(0.1..0.9);
            let atoms = vec![
                Atom {
                    weight: w,
                    losses: random_losses(&mut rng, n),
                },
                Atom {
                    weight: 1.0 - w,
                    losses: random_losses(&mut rng, n),
                },
            ];
            let budget = rng.random_range(0.05..3.0);
            let kind = if s % 2 == 0 {
                ConstraintKind::CoinBetting
            } else {
                ConstraintKind::KlVer
            };
            let prob = FiniteSupportProblem::new(atoms, budget, kind).unwrap();
            let mut all = true;
            for direction in [Direction::Upper, Direction::Lower] {
                let solved = prob.solve_bound(direction, &tol).unwrap().value;
                let grid = grid_two_atom(&prob, direction, 2000);
                all &= (solved - grid).abs() <= 2e-3;
            }
            all
        })
        .reduce(|| true, |a, b| a && b);
    let elapsed = started.elapsed();
    report(
        5,
        "two-atom inversion matches a 2000^2 grid within 2e-3, under 60s",
        ok && elapsed < Duration::from_secs(60),
    );
}

fn grid_two_atom(prob: &FiniteSupportProblem, direction: Direction, points: usize) -> f64 {
    let tol = tols();
    let atoms = prob.atoms();
    let penalties: Vec<Vec<f64>> = atoms
        .iter()
        .map(|a| {
            (0..=points)
                .map(|j| {
                    let mu = j as f64 / points as f64;
                    prob.penalty_at(a, mu, &tol).unwrap_or(f64::INFINITY)
                })
                .collect()
        })
        .collect();
    let (w0, w1) = (atoms[0].weight, atoms[1].weight);
    let mut best = match direction {
        Direction::Upper => f64::NEG_INFINITY,
        Direction::Lower => f64::INFINITY,
    };
    for j0 in 0..=points {
        let g0 = w0 * penalties[0][j0];
        if g0 > prob.budget() {
            continue;
        }
        let m0 = j0 as f64 / points as f64;
        for (j1, &p1) in penalties[1].iter().enumerate() {
            if g0 + w1 * p1 > prob.budget() {
                continue;
            }
            let obj = w0 * m0 + w1 * j1 as f64 / points as f64;
            best = match direction {
                Direction::Upper => best.max(obj),
                Direction::Lower => best.min(obj),
            };
        }
    }
    best
}

const NESTING_METHODS: [Method; 6] = [
    Method::CoinBetting,
    Method::KlVer,
    Method::MaurerRelaxed,
    Method::MaurerOriginal,
    Method::Mcallester,
    Method::EmpBernstein,
];

fn sweep_config(kind: ScenarioKind) -> RunConfig {
    RunConfig {
        scenario: ScenarioSpec {
            kind,
            posterior_variance: 0.25,
        },
        n_grid: (1..=10).map(|c| 1u64 << c).collect(),
        repetitions: 20,
        delta: 0.05,
        methods: NESTING_METHODS.to_vec(),
        mc: None,
        seed: 20260826,
        output: "unused.csv".into(),
        record_runtime: false,
    }
}

static BERNOULLI_SWEEP: Lazy<Vec<ResultRow>> =
    Lazy::new(|| run_experiment(&sweep_config(ScenarioKind::BernoulliXTheta)).unwrap());
static BINOMIAL_SWEEP: Lazy<Vec<ResultRow>> =
    Lazy::new(|| run_experiment(&sweep_config(ScenarioKind::BinomialErf)).unwrap());

fn cell_width(rows: &[ResultRow], method: Method, n: u64, rep: u32) -> f64 {
    rows.iter()
        .find(|r| r.method == method && r.n == n && r.repetition == rep)
        .expect("missing cell")
        .width
}

#[test]
fn criterion_06_nesting_chain() {
    let mut ok = true;
    for rows in [&*BERNOULLI_SWEEP, &*BINOMIAL_SWEEP] {
        for c in 1..=10u32 {
            let n = 1u64 << c;
            for rep in 0..20 {
                let cb = cell_width(rows, Method::CoinBetting, n, rep);
                let kl = cell_width(rows, Method::KlVer, n, rep);
                let mr = cell_width(rows, Method::MaurerRelaxed, n, rep);
                ok &= cb <= kl + 1e-9;
                ok &= kl <= mr + 1e-9;
                for m in [
                    Method::Mcallester,
                    Method::EmpBernstein,
                    Method::MaurerOriginal,
                ] {
                    ok &= cb <= cell_width(rows, m, n, rep) + 1e-9;
                }
            }
        }
    }
    report(
        6,
        "per-cell width ordering: exact inversion <= kl ablation <= every relaxation",
        ok,
    );
}

#[test]
fn criterion_07_bernoulli_kl_ver_coincides() {
    let mut ok = true;
    for c in 1..=10u32 {
        let n = 1u64 << c;
        for rep in 0..20 {
            let cb = cell_width(&BERNOULLI_SWEEP, Method::CoinBetting, n, rep);
            let kl = cell_width(&BERNOULLI_SWEEP, Method::KlVer, n, rep);
            ok &= (cb - kl).abs() <= 1e-6;
        }
    }
    report(
        7,
        "binary per-atom losses make the exact and kl-ablation widths coincide",
        ok,
    );
}

fn coin_betting_interval(sc: &FiniteScenario, delta: f64) -> (f64, f64) {
    let iv = finite_scenario_interval(sc, Method::CoinBetting, delta, &tols()).unwrap();
    (iv.lower, iv.upper)
}

#[test]
fn criterion_08_coverage_at_desk_scale() {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..200).collect();
    let covered = seeds
        .par_iter()
        .filter(|&&s| {
            let sc = gen_bernoulli(64, 0xC0FFEE ^ s);
            let (lo, hi) = coin_betting_interval(&sc, 0.05);
            lo <= sc.true_integral && sc.true_integral <= hi
        })
        .count();
    let elapsed = started.elapsed();
    report(
        8,
        "exact-inversion interval covers the 0.45 truth in >= 90% of 200 runs, under 5min",
        covered >= 180 && elapsed < Duration::from_secs(300),
    );
}

#[test]
fn criterion_09_time_uniformity() {
    let seeds: Vec<u64> = (0..100).collect();
    let failures = seeds
        .par_iter()
        .filter(|&&s| {
            let full = gen_bernoulli(1 << 10, 0x7157 ^ s);
            (1..=10u32).any(|c| {
                let sc = full.prefix(1usize << c);
                let (lo, hi) = coin_betting_interval(&sc, 0.05);
                !(lo <= sc.true_integral && sc.true_integral <= hi)
            })
        })
        .count();
    report(
        9,
        "simultaneous coverage over all prefixes fails for <= 10% of 100 streams",
        failures <= 10,
    );
}

#[test]
fn criterion_10_block_mc_beats_baseline() {
    let started = Instant::now();
    let cfg = McConfig {
        blocks: 4,
        block_size: 1 << 10,
        multiplier: 2.1147,
        delta: 0.05,
    };
    let n = 32u64;
    let seeds: Vec<u64> = (0..20).collect();
    let tol = tols();
    let (mut alg1, mut baseline): (Vec<f64>, Vec<f64>) = seeds
        .par_iter()
        .map(|&s| {
            let sc = gen_gaussian_erf(n as usize, 0xDA7A ^ s, 0.25);
            let a = run_algorithm1(&sc, n, &cfg, &tol, 0xA1 ^ s).unwrap();
            let m =
                run_maurer_mc(&sc, n, cfg.blocks * cfg.block_size, cfg.delta, 0xB2 ^ s).unwrap();
            (a.width(), m.width())
        })
        .unzip();
    alg1.sort_by(f64::total_cmp);
    baseline.sort_by(f64::total_cmp);
    let med = |v: &[f64]| 0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]);
    let elapsed = started.elapsed();
    report(
        10,
        "median block-MC width beats the Hoeffding-widened baseline at m=2^10, under 10min",
        med(&alg1) < med(&baseline) && elapsed < Duration::from_secs(600),
    );
}

#[test]
fn criterion_11_block_mc_coverage() {
    let cfg = McConfig {
        blocks: 3,
        block_size: 256,
        multiplier: std::f64::consts::E,
        delta: 0.05,
    };
    let n = 32u64;
    let tol = tols();
    let seeds: Vec<u64> = (0..100).collect();
    let covered = seeds
        .par_iter()
        .filter(|&&s| {
            let sc = gen_gaussian_erf(n as usize, 0x6A55 ^ s, 0.25);
            let iv = run_algorithm1(&sc, n, &cfg, &tol, 0xC3 ^ s).unwrap();
            iv.contains(sc.true_integral)
        })
        .count();
    report(
        11,
        "block-MC interval covers the 0.5 truth in >= 78% of 100 runs (nominal 85%)",
        covered >= 78,
    );
}

#[test]
fn criterion_12_byte_identical_csv() {
    let again = run_experiment(&sweep_config(ScenarioKind::BernoulliXTheta)).unwrap();
    let mut first = Vec::new();
    let mut second = Vec::new();
    write_rows_csv(&mut first, &BERNOULLI_SWEEP).unwrap();
    write_rows_csv(&mut second, &again).unwrap();
    report(
        12,
        "re-running the full sweep reproduces the CSV byte for byte",
        first == second,
    );
}
