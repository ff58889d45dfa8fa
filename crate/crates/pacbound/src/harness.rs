//! Experiment harness: validated run configuration, seeded sweeps over
//! sample sizes and repetitions, CSV emission, and aggregation.
//!
//! Determinism contract: a config and master seed fix every byte of the
//! output CSV. Cell seeds are derived with a splitmix64 chain over
//! (master seed, method index, n, repetition); the dataset of a cell
//! depends only on (master seed, n, repetition) so that every method in a
//! cell sees the same draw and adding methods never perturbs other cells.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    budget_c_n, empirical_bernstein_interval, intersect_relaxations, maurer_original_interval,
    maurer_relaxed_interval, mcallester_interval, BoundInputs, ConfidenceInterval, Method,
};
use crate::core_math::{LossVector, SolverTolerances};
use crate::montecarlo::{run_algorithm1, run_maurer_mc, McConfig, McError};
use crate::optimizer::{Atom, ConstraintKind, Direction, FiniteSupportProblem, OptimizerError};
use crate::scenarios::{
    gen_bernoulli, gen_binomial_erf, gen_gaussian_erf, FiniteScenario, ScenarioKind, ScenarioSpec,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("malformed CSV at line {line}: {msg}")]
    MalformedCsv { line: usize, msg: String },
    #[error(transparent)]
    Solver(#[from] OptimizerError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_n_grid() -> Vec<u64> {
    (1..=15).map(|c| 1u64 << c).collect()
}

fn default_repetitions() -> u32 {
    20
}

fn default_delta() -> f64 {
    0.05
}

/// One experiment sweep. Unknown JSON fields are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    pub seed: u64,
    pub output: PathBuf,
    /// Off by default so identical configs produce byte-identical CSVs.
    #[serde(default)]
    pub record_runtime: bool,
}

impl RunConfig {
    /// Monte Carlo knobs for this run; the run-level delta wins.
    pub fn effective_mc(&self) -> McConfig {
        let mut cfg = self
            .mc
            .unwrap_or_else(|| McConfig::for_delta(self.delta, 256));
        cfg.delta = self.delta;
        cfg
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut problems = Vec::new();
        if self.n_grid.is_empty() {
            problems.push("n_grid: must be nonempty".to_string());
        }
        if self.n_grid.contains(&0) {
            problems.push("n_grid: entries must be >= 1".to_string());
        }
        if self.repetitions == 0 {
            problems.push("repetitions: must be >= 1".to_string());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            problems.push(format!("delta: must be in (0,1], got {}", self.delta));
        }
        if self.methods.is_empty() {
            problems.push("methods: must be nonempty".to_string());
        }
        for &m in &self.methods {
            let sampled = self.scenario.kind == ScenarioKind::GaussianErf;
            if m.needs_sampler() && !sampled {
                problems.push(format!(
                    "methods: {m} needs a samplable posterior (scenario kind gaussian_erf)"
                ));
            }
            if !m.needs_sampler() && sampled {
                problems.push(format!(
                    "methods: {m} needs a finite-support scenario, not gaussian_erf"
                ));
            }
        }
        if self.methods.iter().any(|m| m.needs_sampler()) {
            if let Err(McError::BadConfig(msg)) = self.effective_mc().validate() {
                problems.push(format!("mc: {msg}"));
            }
        }
        if self.scenario.posterior_variance <= 0.0 {
            problems.push("scenario.posterior_variance: must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(problems))
        }
    }
}

/// One (method, n, repetition) result.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub method: Method,
    pub n: u64,
    pub repetition: u32,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub true_integral: f64,
    pub covered: bool,
    pub runtime_ms: u64,
}

/// splitmix64 finalizer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chain a tuple of values through splitmix64.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64; // arbitrary nonzero start
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// Seed feeding a cell's dataset; method-independent by construction.
pub fn data_seed(master: u64, n: u64, repetition: u32) -> u64 {
    mix_seed(&[master, 0xDA7A, n, repetition as u64])
}

/// Seed feeding a method's internal randomness within a cell.
pub fn cell_seed(master: u64, method: Method, n: u64, repetition: u32) -> u64 {
    mix_seed(&[master, method.index(), n, repetition as u64])
}

/// Compute one closed-form or optimizer interval on a finite scenario.
pub fn finite_scenario_interval(
    sc: &FiniteScenario,
    method: Method,
    delta: f64,
    tol: &SolverTolerances,
) -> Result<ConfidenceInterval, HarnessError> {
    let n = sc.n() as u64;
    match method {
        Method::CoinBetting | Method::KlVer => {
            let kind = if method == Method::CoinBetting {
                ConstraintKind::CoinBetting
            } else {
                ConstraintKind::KlVer
            };
            let budget = budget_c_n(n, sc.kl_post_prior) + (1.0 / delta).ln();
            let atoms: Vec<Atom> = sc
                .weights
                .iter()
                .zip(&sc.losses)
                .map(|(&w, l)| Atom {
                    weight: w,
                    losses: l.clone(),
                })
                .collect();
            let prob = FiniteSupportProblem::new(atoms, budget, kind)?;
            let upper = prob.solve_bound(Direction::Upper, tol)?.value;
            let lower = prob.solve_bound(Direction::Lower, tol)?.value;
            Ok(ConfidenceInterval::new(lower, upper, method, n, delta))
        }
        _ => {
            let inp = BoundInputs {
                n,
                kl_post_prior: sc.kl_post_prior,
                delta,
                mu_hat_bar: sc.mu_hat_bar(),
                v_hat: sc.v_hat(),
            };
            Ok(match method {
                Method::MaurerRelaxed => maurer_relaxed_interval(&inp),
                Method::MaurerOriginal => maurer_original_interval(&inp),
                Method::Mcallester => mcallester_interval(&inp),
                Method::EmpBernstein => empirical_bernstein_interval(&inp),
                Method::Intersection => intersect_relaxations(&inp),
                _ => unreachable!("sampler methods rejected by validation"),
            })
        }
    }
}

/// All closed-form and optimizer methods on one supplied finite problem.
pub fn all_finite_bounds(
    weights: &[f64],
    losses: &[LossVector],
    kl_post_prior: f64,
    delta: f64,
    tol: &SolverTolerances,
) -> Result<Vec<ConfidenceInterval>, HarnessError> {
    let posterior = crate::core_math::DiscreteDistribution::new(weights.to_vec())
        .map_err(|e| HarnessError::Invalid(vec![format!("weights: {e}")]))?;
    let sc = FiniteScenario {
        weights: weights.to_vec(),
        losses: losses.to_vec(),
        posterior: posterior.clone(),
        prior: posterior,
        kl_post_prior,
        true_means: vec![f64::NAN; weights.len()],
        true_integral: f64::NAN,
    };
    [
        Method::CoinBetting,
        Method::KlVer,
        Method::MaurerRelaxed,
        Method::MaurerOriginal,
        Method::Mcallester,
        Method::EmpBernstein,
        Method::Intersection,
    ]
    .iter()
    .map(|&m| finite_scenario_interval(&sc, m, delta, tol))
    .collect()
}

fn run_cell(
    config: &RunConfig,
    method: Method,
    n: u64,
    repetition: u32,
    tol: &SolverTolerances,
) -> Result<ResultRow, HarnessError> {
    let started = std::time::Instant::now();
    let dseed = data_seed(config.seed, n, repetition);
    let cseed = cell_seed(config.seed, method, n, repetition);
    let (interval, true_integral) = match config.scenario.kind {
        ScenarioKind::BernoulliXTheta | ScenarioKind::BinomialErf => {
            let sc = match config.scenario.kind {
                ScenarioKind::BernoulliXTheta => gen_bernoulli(n as usize, dseed),
                _ => gen_binomial_erf(n as usize, dseed),
            };
            (
                finite_scenario_interval(&sc, method, config.delta, tol)?,
                sc.true_integral,
            )
        }
        ScenarioKind::GaussianErf => {
            let sc = gen_gaussian_erf(n as usize, dseed, config.scenario.posterior_variance);
            let mc = config.effective_mc();
            let interval = match method {
                Method::McAlgorithm1 => run_algorithm1(&sc, n, &mc, tol, cseed)?,
                Method::MaurerMc => {
                    run_maurer_mc(&sc, n, mc.blocks * mc.block_size, config.delta, cseed)?
                }
                _ => unreachable!("finite methods rejected by validation"),
            };
            (interval, sc.true_integral)
        }
    };
    let runtime_ms = if config.record_runtime {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(ResultRow {
        method,
        n,
        repetition,
        seed: cseed,
        lower: interval.lower,
        upper: interval.upper,
        width: interval.width(),
        true_integral,
        covered: interval.contains(true_integral),
        runtime_ms,
    })
}

/// Run every (method, n, repetition) cell. Cells execute on the rayon pool;
/// the output order is the deterministic (method, n, repetition) order.
pub fn run_experiment(config: &RunConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let mut methods = config.methods.clone();
    methods.sort_by_key(|m| m.index());
    methods.dedup();
    let mut n_grid = config.n_grid.clone();
    n_grid.sort_unstable();
    n_grid.dedup();

    let mut cells = Vec::new();
    for &method in &methods {
        for &n in &n_grid {
            for repetition in 0..config.repetitions {
                cells.push((method, n, repetition));
            }
        }
    }
    let tol = SolverTolerances::default();
    cells
        .par_iter()
        .map(|&(method, n, repetition)| run_cell(config, method, n, repetition, &tol))
        .collect()
}

/// 17-significant-digit decimal float, the fixed CSV number dialect.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_rows_csv<W: Write>(mut out: W, rows: &[ResultRow]) -> Result<(), HarnessError> {
    out.write_all(
        b"method,n,repetition,seed,lower,upper,width,true_integral,covered,runtime_ms\n",
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.n,
            r.repetition,
            r.seed,
            format_float(r.lower),
            format_float(r.upper),
            format_float(r.width),
            format_float(r.true_integral),
            r.covered,
            r.runtime_ms
        )?;
    }
    Ok(())
}

pub fn write_rows_to_path(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_rows_csv(&mut buf, rows)?;
    buf.flush()?;
    Ok(())
}

fn parse_method(s: &str, line: usize) -> Result<Method, HarnessError> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        HarnessError::MalformedCsv {
            line,
            msg: format!("unknown method `{s}`"),
        }
    })
}

/// Read back a results CSV written by [`write_rows_csv`].
pub fn read_rows_csv(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(HarnessError::MalformedCsv {
                line: idx + 1,
                msg: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let bad = |msg: &str| HarnessError::MalformedCsv {
            line: idx + 1,
            msg: msg.to_string(),
        };
        rows.push(ResultRow {
            method: parse_method(fields[0], idx + 1)?,
            n: fields[1].parse().map_err(|_| bad("bad n"))?,
            repetition: fields[2].parse().map_err(|_| bad("bad repetition"))?,
            seed: fields[3].parse().map_err(|_| bad("bad seed"))?,
            lower: fields[4].parse().map_err(|_| bad("bad lower"))?,
            upper: fields[5].parse().map_err(|_| bad("bad upper"))?,
            width: fields[6].parse().map_err(|_| bad("bad width"))?,
            true_integral: fields[7].parse().map_err(|_| bad("bad true_integral"))?,
            covered: fields[8].parse().map_err(|_| bad("bad covered"))?,
            runtime_ms: fields[9].parse().map_err(|_| bad("bad runtime_ms"))?,
        });
    }
    if rows.is_empty() {
        return Err(HarnessError::EmptyInput("no data rows".to_string()));
    }
    Ok(rows)
}

/// One aggregated series point per (method, n).
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub method: Method,
    pub n: u64,
    pub mean_width: f64,
    pub mean_lower: f64,
    pub mean_upper: f64,
    pub coverage_rate: f64,
}

pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<AggregateRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyInput("no rows to aggregate".to_string()));
    }
    let mut keys: Vec<(Method, u64)> = rows.iter().map(|r| (r.method, r.n)).collect();
    keys.sort_by_key(|&(m, n)| (m.index(), n));
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len());
    for (method, n) in keys {
        let group: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.method == method && r.n == n)
            .collect();
        let k = group.len() as f64;
        out.push(AggregateRow {
            method,
            n,
            mean_width: group.iter().map(|r| r.width).sum::<f64>() / k,
            mean_lower: group.iter().map(|r| r.lower).sum::<f64>() / k,
            mean_upper: group.iter().map(|r| r.upper).sum::<f64>() / k,
            coverage_rate: group.iter().filter(|r| r.covered).count() as f64 / k,
        });
    }
    Ok(out)
}

pub fn write_aggregate_csv<W: Write>(
    mut out: W,
    rows: &[AggregateRow],
) -> Result<(), HarnessError> {
    out.write_all(b"method,n,mean_width,mean_lower,mean_upper,coverage_rate\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.n,
            format_float(r.mean_width),
            format_float(r.mean_lower),
            format_float(r.mean_upper),
            format_float(r.coverage_rate)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli_config(methods: Vec<Method>, output: PathBuf) -> RunConfig {
        RunConfig {
            scenario: ScenarioSpec {
                kind: ScenarioKind::BernoulliXTheta,
                posterior_variance: 0.25,
            },
            n_grid: vec![4],
            repetitions: 2,
            delta: 0.05,
            methods,
            mc: None,
            seed: 1,
            output,
            record_runtime: false,
        }
    }

    #[test]
    fn experiment_row_cardinality() {
        let cfg = bernoulli_config(
            vec![Method::CoinBetting, Method::MaurerRelaxed],
            PathBuf::from("unused.csv"),
        );
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.width >= 0.0);
            assert!((r.width - (r.upper - r.lower)).abs() < 1e-15);
            assert_eq!(r.covered, r.lower <= 0.45 && 0.45 <= r.upper);
        }
    }

    #[test]
    fn experiment_determinism() {
        let cfg = bernoulli_config(
            vec![Method::CoinBetting, Method::Mcallester],
            PathBuf::from("unused.csv"),
        );
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let mut bufa = Vec::new();
        let mut bufb = Vec::new();
        write_rows_csv(&mut bufa, &a).unwrap();
        write_rows_csv(&mut bufb, &b).unwrap();
        assert_eq!(bufa, bufb);
    }

    #[test]
    fn dataset_shared_across_methods() {
        // Same (n, repetition) cell gives identical data to all methods, so
        // the KL-inversion methods at equal budgets nest deterministically.
        let d1 = data_seed(7, 64, 3);
        let d2 = data_seed(7, 64, 3);
        assert_eq!(d1, d2);
        assert_ne!(data_seed(7, 64, 4), d1);
        assert_ne!(
            cell_seed(7, Method::CoinBetting, 64, 3),
            cell_seed(7, Method::KlVer, 64, 3)
        );
    }

    #[test]
    fn validation_lists_all_problems() {
        let mut cfg = bernoulli_config(vec![Method::McAlgorithm1], PathBuf::from("x.csv"));
        cfg.n_grid = vec![];
        cfg.delta = 1.5;
        let err = cfg.validate().unwrap_err();
        match err {
            HarnessError::Invalid(problems) => {
                assert!(problems.len() >= 3, "{problems:?}");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn csv_round_trip_and_aggregate() {
        let cfg = bernoulli_config(
            vec![Method::MaurerRelaxed],
            std::env::temp_dir().join("pacbound_harness_test.csv"),
        );
        let rows = run_experiment(&cfg).unwrap();
        write_rows_to_path(&cfg.output, &rows).unwrap();
        let back = read_rows_csv(&cfg.output).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.lower.to_bits(), b.lower.to_bits());
            assert_eq!(a.upper.to_bits(), b.upper.to_bits());
        }
        let agg = aggregate(&back).unwrap();
        assert_eq!(agg.len(), 1);
        let expect = (rows[0].width + rows[1].width) / 2.0;
        assert!((agg[0].mean_width - expect).abs() < 1e-15);
        std::fs::remove_file(&cfg.output).ok();
    }

    #[test]
    fn aggregate_empty_is_error() {
        assert!(aggregate(&[]).is_err());
    }
}
