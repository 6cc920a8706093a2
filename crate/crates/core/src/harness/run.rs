//! Trial loop, experiment driver and trace/summary files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::config::{BoundSpec, EnvKind, ExperimentConfig, LambdaSpec, NoiseScale, PolicyKind, TieRule};
use crate::environments::{
    benchmark_function, load_tabular, sample_gp_function, sample_rkhs_function, Environment,
    NoiseModel,
};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::policies::{
    beta_gp_ucb, beta_igp_ucb, gamma_estimate, select_gp_ei, select_gp_pi,
    select_gp_ts, select_gp_ts_subset, select_ucb, snap_to_candidates, v_gp_ts,
    DiscretizationSpec, TieBreak,
};
use crate::posterior::PosteriorState;
use crate::rng::{derive_seed, stream_rng, Stream};

/// Most rows a summary file holds.
pub const MAX_SUMMARY_ROWS: usize = 1000;

pub const TRACE_COLUMNS: [&str; 7] = ["t", "index", "y", "width", "sigma_prev", "regret", "cumulative"];

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub index: usize,
    pub y: f64,
    /// `β_t`, `β̃_t` or `v_t`; absent for policies without a width.
    pub width: Option<f64>,
    /// `σ_{t-1}(x_t)`.
    pub sigma_prev: f64,
    pub regret: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub trial: usize,
    pub policy: PolicyKind,
    /// Seed the trial's environment was generated from.
    pub env_seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub final_regret: f64,
    pub b: f64,
    pub r: f64,
    pub lambda: f64,
    /// `Σ σ_{t-1}(x_t)` over the run.
    pub sigma_sum: f64,
    /// Upper bound on `sigma_sum` implied by the final information gain.
    pub sigma_bound: f64,
    /// `½ ln det(I + λ⁻¹ K_T)`.
    pub info_gain: f64,
}

impl RegretTrace {
    /// `(index, y)` pairs in play order.
    pub fn observations(&self) -> Vec<(usize, f64)> {
        self.rounds.iter().map(|r| (r.index, r.y)).collect()
    }

    /// Recomputes the running sum of instantaneous regrets and compares it
    /// bit for bit with the stored cumulative values.
    pub fn bookkeeping_consistent(&self) -> bool {
        let mut acc = 0.0;
        for r in &self.rounds {
            acc += r.regret;
            if acc != r.cumulative || r.regret < 0.0 {
                return false;
            }
        }
        acc == self.final_regret
    }

    /// CSV with a `#` comment header carrying the full configuration.
    pub fn write_csv<W: Write>(&self, cfg: &ExperimentConfig, mut out: W) -> Result<()> {
        writeln!(out, "# gpbandit regret trace")?;
        for (k, v) in cfg.to_pairs() {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "# trial={}", self.trial)?;
        writeln!(out, "# env_seed={}", self.env_seed)?;
        writeln!(out, "# resolved_b={}", self.b)?;
        writeln!(out, "# resolved_r={}", self.r)?;
        writeln!(out, "# resolved_lambda={}", self.lambda)?;
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(TRACE_COLUMNS)?;
        for r in &self.rounds {
            wtr.write_record([
                r.t.to_string(),
                r.index.to_string(),
                r.y.to_string(),
                r.width.map(|w| w.to_string()).unwrap_or_default(),
                r.sigma_prev.to_string(),
                r.regret.to_string(),
                r.cumulative.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads the rows of a trace CSV back, ignoring the comment header.
pub fn read_trace_csv(path: &Path) -> Result<Vec<RoundRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::parse(Some(path), e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(Some(path), e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::parse(Some(path), format!("bad number {:?}", field(i))))
        };
        let width = if field(3).is_empty() { None } else { Some(num(3)?) };
        out.push(RoundRecord {
            t: num(0)? as usize,
            index: num(1)? as usize,
            y: num(2)?,
            width,
            sigma_prev: num(4)?,
            regret: num(5)?,
            cumulative: num(6)?,
        });
    }
    Ok(out)
}

/// Bound on `Σ_{t≤T} σ_{t-1}(x_t)` in terms of `G_T = ½ ln det(I + λ⁻¹K_T)`:
/// `√(4(T+2) G_T)` when `λ = 1 + 2/T` and `k(x,x) <= 1`, otherwise
/// `√(2 T k_max G_T / ln(1 + k_max/λ))`.
pub fn sigma_sum_bound(horizon: usize, info_gain: f64, lambda: f64, kmax: f64) -> f64 {
    let t = horizon as f64;
    if kmax <= 0.0 {
        return 0.0;
    }
    let horizon_lambda = 1.0 + 2.0 / t;
    if kmax <= 1.0 && (lambda - horizon_lambda).abs() <= 1e-12 * horizon_lambda {
        (4.0 * (t + 2.0) * info_gain).sqrt()
    } else {
        (2.0 * t * kmax * info_gain / (kmax / lambda).ln_1p()).sqrt()
    }
}

/// Seed of the environment used by `trial`.
pub fn environment_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, trial as u64, 0, Stream::Environment)
}

/// Generates (or loads) the environment for `trial` with its noise model set.
pub fn build_environment(cfg: &ExperimentConfig, trial: usize) -> Result<Environment> {
    let seed = environment_seed(cfg.seed, trial);
    let env = match cfg.env {
        EnvKind::Rkhs => sample_rkhs_function(&cfg.kernel_spec()?, cfg.n, cfg.dim, cfg.env_lambda, seed)?,
        EnvKind::GpSample => sample_gp_function(&cfg.kernel_spec()?, cfg.n, cfg.dim, seed)?,
        EnvKind::Benchmark(b) => benchmark_function(b, cfg.n, seed, cfg.force_optimum)?,
        EnvKind::Tabular => {
            let values = cfg
                .values
                .as_deref()
                .ok_or_else(|| Error::config("tabular environments need a values path"))?;
            load_tabular(values, cfg.gram.as_deref())?
        }
    };
    with_configured_noise(cfg, env)
}

fn with_configured_noise(cfg: &ExperimentConfig, env: Environment) -> Result<Environment> {
    let noise = match cfg.noise {
        NoiseScale::Absolute(r) => NoiseModel::new(cfg.noise_kind, r)?,
        NoiseScale::RangePercent(p) => NoiseModel::from_range_fraction(cfg.noise_kind, p / 100.0, env.range())?,
    };
    Ok(env.with_noise(noise))
}

fn algorithm_kernel(cfg: &ExperimentConfig, env: &Environment) -> Result<KernelSpec> {
    match cfg.env {
        EnvKind::Tabular => env
            .kernel()
            .cloned()
            .ok_or_else(|| Error::config("tabular environment has no Gram table")),
        _ => cfg.kernel_spec(),
    }
}

fn resolve_bound(cfg: &ExperimentConfig, env: &Environment) -> Result<f64> {
    match cfg.b {
        BoundSpec::Value(b) => Ok(b),
        BoundSpec::Exact if !cfg.policy.uses_bound() => Ok(0.0),
        BoundSpec::Exact => {
            if let Some(n) = env.rkhs_norm_sq() {
                Ok(n.sqrt())
            } else if let Some(n) = env.surrogate_norm_sq() {
                log::debug!("GP sample path: using the interpolant norm as B; f has no finite RKHS norm");
                Ok(n.sqrt())
            } else {
                Err(Error::config(format!(
                    "b=exact needs an environment with a known norm, {} has none",
                    cfg.env
                )))
            }
        }
    }
}

fn resolve_lambda(cfg: &ExperimentConfig, r: f64) -> Result<f64> {
    let lambda = match cfg.lambda {
        None => return Err(Error::config("lambda must be set")),
        Some(LambdaSpec::Noise) => r * r,
        Some(LambdaSpec::Horizon) => 1.0 + 2.0 / cfg.horizon as f64,
        Some(LambdaSpec::Value(v)) => v,
    };
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::config(format!(
            "resolved lambda {lambda} is not positive (lambda=noise needs R > 0)"
        )));
    }
    Ok(lambda)
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<RegretTrace> {
    cfg.validate()?;
    let env = build_environment(cfg, trial)?;
    run_trial_on(cfg, trial, &env)
}

/// Runs one trial against a prepared environment; the noise model of `env`
/// supplies both the observation noise and `R`.
pub fn run_trial_on(cfg: &ExperimentConfig, trial: usize, env: &Environment) -> Result<RegretTrace> {
    let kernel = algorithm_kernel(cfg, env)?;
    let r = env.noise().r;
    let b = resolve_bound(cfg, env)?;
    let lambda = resolve_lambda(cfg, r)?;
    let d = cfg.input_dim();
    let gamma_mode = cfg.gamma_mode();
    let master = cfg.seed;
    let trial_id = trial as u64;

    let mut state = PosteriorState::init_with_cap(
        kernel.clone(),
        lambda,
        env.candidates().clone(),
        cfg.posterior,
        cfg.memory_cap_mb.saturating_mul(1024 * 1024),
    )?;
    let kmax = state.prior_var().iter().copied().fold(0.0, f64::max);

    let disc = if cfg.policy == PolicyKind::GpTs && cfg.ts_discretize {
        Some(DiscretizationSpec {
            r: 1.0,
            b,
            l: kernel.lipschitz_constant(d)?,
            d,
            cap: cfg.disc_cap,
        })
    } else {
        None
    };
    let mut active: Option<(usize, Vec<usize>)> = None;

    let mut rounds = Vec::with_capacity(cfg.horizon);
    let mut cumulative = 0.0;
    let mut sigma_sum = 0.0;
    let mut best_y = f64::NEG_INFINITY;
    let mut worst_y = f64::INFINITY;

    for t in 1..=cfg.horizon {
        let round = t as u64;
        let tie = match cfg.tie_break {
            TieRule::Lowest => TieBreak::LowestIndex,
            TieRule::Random => TieBreak::Random {
                seed: derive_seed(master, trial_id, round, Stream::TieBreak),
            },
        };
        let f_best = if t == 1 { 0.0 } else { best_y };
        let (idx, width) = match cfg.policy {
            PolicyKind::IgpUcb => {
                let beta = beta_igp_ucb(b, r, cfg.delta, gamma_estimate(gamma_mode, &state, t, d)?);
                (select_ucb(state.mu(), state.var(), beta, tie), Some(beta))
            }
            PolicyKind::GpUcb => {
                let beta = beta_gp_ucb(b, cfg.delta, gamma_estimate(gamma_mode, &state, t, d)?, t);
                (select_ucb(state.mu(), state.var(), beta, tie), Some(beta))
            }
            PolicyKind::GpTs => {
                let v = v_gp_ts(b, r, cfg.delta, gamma_estimate(gamma_mode, &state, t, d)?);
                let seed = derive_seed(master, trial_id, round, Stream::Sampling);
                let idx = match &disc {
                    None => select_gp_ts(&state, v, seed)?,
                    Some(spec) => {
                        let grid = spec.discretize(t)?;
                        if active.as_ref().map(|(m, _)| *m) != Some(grid.per_axis) {
                            if grid.capped {
                                log::debug!("round {t}: discretization capped at {} points", grid.points.len());
                            }
                            let picked = snap_to_candidates(&grid.points, env.candidates())?;
                            active = Some((grid.per_axis, picked));
                        }
                        let subset = &active.as_ref().expect("set above").1;
                        select_gp_ts_subset(&state, subset, v, seed)?
                    }
                };
                (idx, Some(v))
            }
            PolicyKind::GpEi => (select_gp_ei(&state, f_best, tie)?, None),
            PolicyKind::GpPi => {
                let xi = if t > 1 { cfg.pi_xi * (best_y - worst_y) } else { 0.0 };
                (select_gp_pi(&state, f_best, xi, tie)?, None)
            }
            PolicyKind::Random => (random_arm(master, trial, t, env.len()), None),
        };
        let sigma_prev = state.var()[idx].max(0.0).sqrt();
        let mut noise_rng = stream_rng(master, trial_id, round, Stream::Noise);
        let y = env.observe(idx, &mut noise_rng)?;
        let regret = env.regret(idx);
        cumulative += regret;
        sigma_sum += sigma_prev;
        best_y = best_y.max(y);
        worst_y = worst_y.min(y);
        state.update(idx, y)?;
        rounds.push(RoundRecord {
            t,
            index: idx,
            y,
            width,
            sigma_prev,
            regret,
            cumulative,
        });
    }

    let info_gain = state.log_det_information();
    let sigma_bound = sigma_sum_bound(cfg.horizon, info_gain, lambda, kmax);
    if sigma_sum > sigma_bound * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::Invariant(format!(
            "trial {trial}: sum of posterior deviations {sigma_sum} exceeds bound {sigma_bound}"
        )));
    }
    if state.clamped_count() > 0 {
        log::debug!("trial {trial}: {} variances clamped at zero", state.clamped_count());
    }
    Ok(RegretTrace {
        trial,
        policy: cfg.policy,
        env_seed: environment_seed(master, trial),
        final_regret: cumulative,
        rounds,
        b,
        r,
        lambda,
        sigma_sum,
        sigma_bound,
        info_gain,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct TrialFailure {
    pub trial: usize,
    pub degenerate: bool,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Completed trials in trial order.
    pub traces: Vec<RegretTrace>,
    pub failures: Vec<TrialFailure>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn mean_final_regret(&self) -> f64 {
        self.traces.iter().map(|t| t.final_regret).sum::<f64>() / self.traces.len() as f64
    }
}

/// Rounds kept in a summary: all of them up to `max_rows`, otherwise
/// `⌈kT/max_rows⌉` for `k = 1..max_rows` (always ending at `T`).
pub fn summary_rounds(horizon: usize, max_rows: usize) -> Vec<usize> {
    if horizon <= max_rows {
        return (1..=horizon).collect();
    }
    (1..=max_rows).map(|k| (k * horizon).div_ceil(max_rows)).collect()
}

/// Mean and sample standard deviation of `R_t` across traces; the standard
/// deviation is 0 with a single trace.
pub fn summarize(traces: &[RegretTrace]) -> Vec<SummaryRow> {
    let Some(horizon) = traces.iter().map(|t| t.rounds.len()).min() else {
        return Vec::new();
    };
    let n = traces.len() as f64;
    summary_rounds(horizon, MAX_SUMMARY_ROWS)
        .into_iter()
        .map(|t| {
            let vals: Vec<f64> = traces.iter().map(|tr| tr.rounds[t - 1].cumulative).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let std = if traces.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow { t, mean, std }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(cfg: &ExperimentConfig, rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "# gpbandit regret summary")?;
    for (k, v) in cfg.to_pairs() {
        writeln!(out, "# {k}={v}")?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["t", "mean", "std"])?;
    for r in rows {
        wtr.write_record([r.t.to_string(), r.mean.to_string(), r.std.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn trace_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join(format!("trial_{trial:04}.csv"))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}

/// Runs every trial on a pool of `cfg.workers` threads (default: all
/// cores). Results never depend on the pool width. When `cfg.output` is set
/// the directory receives one trace per completed trial, `summary.csv`, and
/// `failures.csv` if any trial aborted.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let shared = match cfg.env {
        EnvKind::Tabular => Some(build_environment(cfg, 0)?),
        _ => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<RegretTrace>> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| match &shared {
                Some(env) => run_trial_on(cfg, trial, env),
                None => run_trial_on(cfg, trial, &build_environment(cfg, trial)?),
            })
            .collect()
    });

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (trial, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => traces.push(t),
            Err(e) => {
                log::warn!("trial {trial} aborted: {e}");
                failures.push(TrialFailure {
                    trial,
                    degenerate: e.is_degenerate(),
                    message: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if traces.is_empty() {
        return Err(first_error.expect("at least one trial ran"));
    }
    if !failures.is_empty() {
        log::warn!(
            "{} of {} trials failed; summary covers completed trials only",
            failures.len(),
            cfg.trials
        );
    }
    let summary = summarize(&traces);
    let result = ExperimentResult {
        traces,
        failures,
        summary,
    };
    if let Some(dir) = &cfg.output {
        write_outputs(cfg, &result, dir)?;
    }
    Ok(result)
}

fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for trace in &result.traces {
        let f = BufWriter::new(File::create(trace_path(dir, trace.trial))?);
        trace.write_csv(cfg, f)?;
    }
    let f = BufWriter::new(File::create(summary_path(dir))?);
    write_summary_csv(cfg, &result.summary, f)?;
    let failures_path = dir.join("failures.csv");
    if result.failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path)?;
        }
    } else {
        let mut wtr = csv::Writer::from_path(&failures_path)?;
        wtr.write_record(["trial", "degenerate", "message"])?;
        for f in &result.failures {
            wtr.write_record([f.trial.to_string(), f.degenerate.to_string(), f.message.clone()])?;
        }
        wtr.flush()?;
    }
    Ok(())
}

/// Arm played by the uniform baseline at round `t`.
pub fn random_arm(master: u64, trial: usize, t: usize, n: usize) -> usize {
    let mut rng = stream_rng(master, trial as u64, t as u64, Stream::Exploration);
    rng.random_range(0..n)
}
