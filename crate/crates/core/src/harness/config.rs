//! Plain-text `key=value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::environments::{Benchmark, NoiseKind};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, MaternNu};
use crate::policies::GammaMode;
use crate::posterior::PosteriorMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    /// Posterior mean of a Gram-matrix draw; exact RKHS norm known.
    Rkhs,
    /// Sample path of the GP prior.
    GpSample,
    Benchmark(Benchmark),
    /// Rewards and Gram matrix read from CSV files.
    Tabular,
}

impl EnvKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rkhs" => Ok(EnvKind::Rkhs),
            "gp" | "gp_sample" => Ok(EnvKind::GpSample),
            "tabular" => Ok(EnvKind::Tabular),
            other => Benchmark::parse(other)
                .map(EnvKind::Benchmark)
                .map_err(|_| Error::config(format!("unknown environment {other:?}"))),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKind::Rkhs => f.write_str("rkhs"),
            EnvKind::GpSample => f.write_str("gp"),
            EnvKind::Benchmark(Benchmark::Rosenbrock) => f.write_str("rosenbrock"),
            EnvKind::Benchmark(Benchmark::Hartmann3) => f.write_str("hartmann3"),
            EnvKind::Tabular => f.write_str("tabular"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    Matern,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseScale {
    /// Sub-Gaussian scale `R` given directly.
    Absolute(f64),
    /// `R² = pct/100 × (max f - min f)` of each generated function.
    RangePercent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundSpec {
    /// The environment's RKHS norm (or interpolant norm for GP samples).
    Exact,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    /// `λ = R²`.
    Noise,
    /// `λ = 1 + 2/T`.
    Horizon,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    IgpUcb,
    GpUcb,
    GpTs,
    GpEi,
    GpPi,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::IgpUcb,
        PolicyKind::GpUcb,
        PolicyKind::GpTs,
        PolicyKind::GpEi,
        PolicyKind::GpPi,
        PolicyKind::Random,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown policy {s:?}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::IgpUcb => "igp_ucb",
            PolicyKind::GpUcb => "gp_ucb",
            PolicyKind::GpTs => "gp_ts",
            PolicyKind::GpEi => "gp_ei",
            PolicyKind::GpPi => "gp_pi",
            PolicyKind::Random => "random",
        }
    }

    /// Whether the policy's width depends on the norm bound `B`.
    pub fn uses_bound(self) -> bool {
        matches!(self, PolicyKind::IgpUcb | PolicyKind::GpUcb | PolicyKind::GpTs)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    Empirical,
    Theoretical,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieRule {
    Lowest,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub kernel: KernelFamily,
    pub lengthscale: f64,
    pub nu: MaternNu,
    /// Candidate count for generated environments.
    pub n: usize,
    /// Input dimension for RKHS and GP environments.
    pub dim: usize,
    /// Regularizer of the posterior mean that defines RKHS test functions.
    pub env_lambda: f64,
    pub values: Option<PathBuf>,
    pub gram: Option<PathBuf>,
    pub force_optimum: bool,
    pub noise_kind: NoiseKind,
    pub noise: NoiseScale,
    pub policy: PolicyKind,
    pub b: BoundSpec,
    /// Required; there is no default regularizer.
    pub lambda: Option<LambdaSpec>,
    pub delta: f64,
    pub gamma: GammaChoice,
    pub gamma_c: f64,
    pub tie_break: TieRule,
    /// PI offset as a fraction of the observed reward range.
    pub pi_xi: f64,
    pub ts_discretize: bool,
    pub disc_cap: usize,
    pub posterior: PosteriorMode,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Worker-pool width; never affects results.
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub memory_cap_mb: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvKind::Rkhs,
            kernel: KernelFamily::SquaredExponential,
            lengthscale: 0.2,
            nu: MaternNu::FiveHalves,
            n: 100,
            dim: 1,
            env_lambda: DEFAULT_ENV_LAMBDA,
            values: None,
            gram: None,
            force_optimum: false,
            noise_kind: NoiseKind::Gaussian,
            noise: NoiseScale::RangePercent(1.0),
            policy: PolicyKind::IgpUcb,
            b: BoundSpec::Exact,
            lambda: None,
            delta: 0.1,
            gamma: GammaChoice::Empirical,
            gamma_c: 1.0,
            tie_break: TieRule::Lowest,
            pi_xi: 0.01,
            ts_discretize: false,
            disc_cap: 10_000,
            posterior: PosteriorMode::Recursive,
            horizon: 2000,
            trials: 10,
            seed: 0,
            workers: None,
            output: None,
            memory_cap_mb: 512,
        }
    }
}

pub const DEFAULT_ENV_LAMBDA: f64 = 0.01;

/// Named bundles of settings applied before any other key.
pub const PRESETS: [(&str, &[(&str, &str)]); 2] = [
    (
        "desk",
        &[
            ("env", "rkhs"),
            ("kernel", "se"),
            ("lengthscale", "0.2"),
            ("n", "100"),
            ("dim", "1"),
            ("noise_r2_pct", "1"),
            ("b", "exact"),
            ("lambda", "noise"),
            ("delta", "0.1"),
            ("gamma", "empirical"),
            ("horizon", "2000"),
            ("trials", "10"),
        ],
    ),
    (
        "paper",
        &[
            ("env", "rkhs"),
            ("kernel", "se"),
            ("lengthscale", "0.2"),
            ("n", "100"),
            ("dim", "1"),
            ("noise_r2_pct", "1"),
            ("b", "exact"),
            ("lambda", "noise"),
            ("delta", "0.1"),
            ("gamma", "theoretical"),
            ("gamma_c", "1"),
            ("horizon", "30000"),
            ("trials", "25"),
        ],
    ),
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(split_pair(line).map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?);
    }
    Ok(out)
}

pub fn split_pair(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("expected key=value, got {s:?}")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::config(format!("empty key in {s:?}")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

impl ExperimentConfig {
    /// Builds a config from ordered pairs; a `preset` key is applied first
    /// and later keys override earlier ones.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
            .collect();
        let mut cfg = ExperimentConfig::default();
        for (k, v) in pairs.iter().filter(|(k, _)| k == "preset") {
            cfg.apply_preset(v).map_err(|e| Error::config(format!("{k}: {e}")))?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Reads a config file, then applies `overrides` on top.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(Some(path), e.to_string()))?;
        let mut pairs = parse_pairs(&text).map_err(|e| Error::parse(Some(path), e.to_string()))?;
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(pairs)
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let (_, pairs) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::config(format!("unknown preset {name:?}")))?;
        for (k, v) in pairs.iter() {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "env" => self.env = EnvKind::parse(value)?,
            "kernel" => {
                self.kernel = match value {
                    "se" | "squared_exponential" => KernelFamily::SquaredExponential,
                    "matern" => KernelFamily::Matern,
                    "linear" => KernelFamily::Linear,
                    other => return Err(Error::config(format!("unknown kernel {other:?}"))),
                }
            }
            "lengthscale" => self.lengthscale = parse_num(key, value)?,
            "nu" => self.nu = MaternNu::from_value(parse_num(key, value)?)?,
            "n" => self.n = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "env_lambda" => self.env_lambda = parse_num(key, value)?,
            "values" => self.values = Some(PathBuf::from(value)),
            "gram" => self.gram = Some(PathBuf::from(value)),
            "force_optimum" => self.force_optimum = parse_bool(key, value)?,
            "noise" => {
                self.noise_kind = match value {
                    "gaussian" => NoiseKind::Gaussian,
                    "uniform" | "bounded" => NoiseKind::BoundedUniform,
                    other => return Err(Error::config(format!("unknown noise kind {other:?}"))),
                }
            }
            "noise_r" => self.noise = NoiseScale::Absolute(parse_num(key, value)?),
            "noise_r2_pct" => self.noise = NoiseScale::RangePercent(parse_num(key, value)?),
            "policy" => self.policy = PolicyKind::parse(value)?,
            "b" => {
                self.b = match value {
                    "exact" => BoundSpec::Exact,
                    v => BoundSpec::Value(parse_num(key, v)?),
                }
            }
            "lambda" => {
                self.lambda = Some(match value {
                    "noise" => LambdaSpec::Noise,
                    "horizon" => LambdaSpec::Horizon,
                    v => LambdaSpec::Value(parse_num(key, v)?),
                })
            }
            "delta" => self.delta = parse_num(key, value)?,
            "gamma" => {
                self.gamma = match value {
                    "empirical" => GammaChoice::Empirical,
                    "theoretical" => GammaChoice::Theoretical,
                    v => GammaChoice::Fixed(parse_num(key, v)?),
                }
            }
            "gamma_c" => self.gamma_c = parse_num(key, value)?,
            "tie_break" => {
                self.tie_break = match value {
                    "lowest" => TieRule::Lowest,
                    "random" => TieRule::Random,
                    other => return Err(Error::config(format!("unknown tie rule {other:?}"))),
                }
            }
            "pi_xi" => self.pi_xi = parse_num(key, value)?,
            "ts_discretize" => self.ts_discretize = parse_bool(key, value)?,
            "disc_cap" => self.disc_cap = parse_num(key, value)?,
            "posterior" => {
                self.posterior = match value {
                    "recursive" => PosteriorMode::Recursive,
                    "batch" => PosteriorMode::Batch,
                    other => return Err(Error::config(format!("unknown posterior mode {other:?}"))),
                }
            }
            "horizon" | "t" => self.horizon = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "workers" => self.workers = Some(parse_num(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            "memory_cap_mb" => self.memory_cap_mb = parse_num(key, value)?,
            "preset" => self.apply_preset(value)?,
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.trials < 1 {
            return Err(Error::config("trials must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.lambda.is_none() {
            return Err(Error::config("lambda must be set (noise, horizon or a value)"));
        }
        if let Some(LambdaSpec::Value(l)) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::config(format!("lambda must be positive, got {l}")));
            }
        }
        match self.noise {
            NoiseScale::Absolute(r) | NoiseScale::RangePercent(r) if !(r.is_finite() && r >= 0.0) => {
                return Err(Error::config("noise scale must be finite and >= 0"));
            }
            _ => {}
        }
        if let BoundSpec::Value(b) = self.b {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::config(format!("B must be finite and >= 0, got {b}")));
            }
        }
        if !(self.pi_xi.is_finite() && self.pi_xi >= 0.0) {
            return Err(Error::config("pi_xi must be >= 0"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        match self.env {
            EnvKind::Rkhs | EnvKind::GpSample => {
                if self.n < 1 || self.dim < 1 {
                    return Err(Error::config("n and dim must be at least 1"));
                }
                if self.env == EnvKind::Rkhs && !(self.env_lambda > 0.0) {
                    return Err(Error::config("env_lambda must be positive"));
                }
            }
            EnvKind::Benchmark(_) if self.n < 1 => {
                return Err(Error::config("n must be at least 1"));
            }
            EnvKind::Tabular if self.values.is_none() || self.gram.is_none() => {
                return Err(Error::config("tabular environments need values and gram paths"));
            }
            _ => {}
        }
        if self.env != EnvKind::Tabular {
            self.kernel_spec()?;
        }
        if self.ts_discretize && self.policy == PolicyKind::GpTs {
            if self.env == EnvKind::Tabular {
                return Err(Error::config("tabular environments have no box to discretize"));
            }
            if self.disc_cap == 0 {
                return Err(Error::config("disc_cap must be at least 1"));
            }
            self.kernel_spec()?.lipschitz_constant(self.input_dim())?;
        }
        Ok(())
    }

    /// Kernel used by the algorithms for generated environments.
    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        match self.kernel {
            KernelFamily::SquaredExponential => KernelSpec::squared_exponential(self.lengthscale),
            KernelFamily::Matern => KernelSpec::matern(self.nu.value(), self.lengthscale),
            KernelFamily::Linear => Ok(KernelSpec::Linear),
        }
    }

    /// Dimension of the decision points.
    pub fn input_dim(&self) -> usize {
        match self.env {
            EnvKind::Benchmark(b) => b.dim(),
            EnvKind::Tabular => 1,
            _ => self.dim,
        }
    }

    pub fn gamma_mode(&self) -> GammaMode {
        match self.gamma {
            GammaChoice::Empirical => GammaMode::EmpiricalLogdet,
            GammaChoice::Theoretical => GammaMode::Theoretical { c: self.gamma_c },
            GammaChoice::Fixed(g) => GammaMode::Fixed(g),
        }
    }

    /// Canonical `key=value` lines describing everything that determines
    /// the results. Worker count and output location are left out.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("env", self.env.to_string())];
        out.push((
            "kernel",
            match self.kernel {
                KernelFamily::SquaredExponential => "se",
                KernelFamily::Matern => "matern",
                KernelFamily::Linear => "linear",
            }
            .to_string(),
        ));
        out.push(("lengthscale", self.lengthscale.to_string()));
        out.push(("nu", self.nu.value().to_string()));
        out.push(("n", self.n.to_string()));
        out.push(("dim", self.dim.to_string()));
        out.push(("env_lambda", self.env_lambda.to_string()));
        if let Some(p) = &self.values {
            out.push(("values", p.display().to_string()));
        }
        if let Some(p) = &self.gram {
            out.push(("gram", p.display().to_string()));
        }
        out.push(("force_optimum", self.force_optimum.to_string()));
        out.push((
            "noise",
            match self.noise_kind {
                NoiseKind::Gaussian => "gaussian",
                NoiseKind::BoundedUniform => "uniform",
            }
            .to_string(),
        ));
        match self.noise {
            NoiseScale::Absolute(r) => out.push(("noise_r", r.to_string())),
            NoiseScale::RangePercent(p) => out.push(("noise_r2_pct", p.to_string())),
        }
        out.push(("policy", self.policy.to_string()));
        out.push((
            "b",
            match self.b {
                BoundSpec::Exact => "exact".to_string(),
                BoundSpec::Value(v) => v.to_string(),
            },
        ));
        if let Some(l) = self.lambda {
            out.push((
                "lambda",
                match l {
                    LambdaSpec::Noise => "noise".to_string(),
                    LambdaSpec::Horizon => "horizon".to_string(),
                    LambdaSpec::Value(v) => v.to_string(),
                },
            ));
        }
        out.push(("delta", self.delta.to_string()));
        out.push((
            "gamma",
            match self.gamma {
                GammaChoice::Empirical => "empirical".to_string(),
                GammaChoice::Theoretical => "theoretical".to_string(),
                GammaChoice::Fixed(v) => v.to_string(),
            },
        ));
        out.push(("gamma_c", self.gamma_c.to_string()));
        out.push((
            "tie_break",
            match self.tie_break {
                TieRule::Lowest => "lowest",
                TieRule::Random => "random",
            }
            .to_string(),
        ));
        out.push(("pi_xi", self.pi_xi.to_string()));
        out.push(("ts_discretize", self.ts_discretize.to_string()));
        out.push(("disc_cap", self.disc_cap.to_string()));
        out.push((
            "posterior",
            match self.posterior {
                PosteriorMode::Recursive => "recursive",
                PosteriorMode::Batch => "batch",
            }
            .to_string(),
        ));
        out.push(("horizon", self.horizon.to_string()));
        out.push(("trials", self.trials.to_string()));
        out.push(("seed", self.seed.to_string()));
        out.push(("memory_cap_mb", self.memory_cap_mb.to_string()));
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
