//! Arm-selection rules and their confidence widths.
//!
//! * IGP-UCB: `x_t = argmax μ_{t-1}(x) + β_t σ_{t-1}(x)` with
//!   `β_t = B + R √(2(γ_{t-1} + 1 + ln(1/δ)))`.
//! * GP-TS: sample `f_t ~ GP(μ_{t-1}, v_t² k_{t-1})` with
//!   `v_t = B + R √(2(γ_{t-1} + 1 + ln(2/δ)))` and play its argmax over the
//!   active decision set.
//! * Baselines: GP-UCB with `β̃_t = √(2B² + 300 γ_{t-1} ln³(t/δ))`, expected
//!   improvement, probability of improvement.
//!
//! Selection helpers that take plain slices (`select_ucb`, `select_ei`, ...)
//! are exposed alongside the state-based wrappers so scores can be checked
//! without building a posterior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Point};
use crate::posterior::{CandidateSet, PosteriorState};

/// Below this posterior standard deviation EI and PI use their
/// deterministic limits.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// How `γ_{t-1}` is obtained when computing widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode {
    /// `½ ln det(I + λ⁻¹ K_{t-1})` of the points actually played.
    EmpiricalLogdet,
    /// Known growth rate of the maximum information gain for the kernel
    /// family, scaled by `c`.
    Theoretical { c: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    LowestIndex,
    /// Uniform choice among exactly tied maximizers.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    /// Bound on the RKHS norm of the reward function.
    pub b: f64,
    /// Sub-Gaussian scale of the noise.
    pub r: f64,
    pub delta: f64,
    pub lambda: f64,
    pub gamma_mode: GammaMode,
    pub horizon: Option<usize>,
    pub tie_break: TieBreak,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::config(format!("B must be finite and >= 0, got {}", self.b)));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::config(format!("R must be finite and >= 0, got {}", self.r)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config(format!("lambda must be positive, got {}", self.lambda)));
        }
        match self.gamma_mode {
            GammaMode::Theoretical { c } if !(c.is_finite() && c >= 0.0) => {
                return Err(Error::config("theoretical gamma constant must be >= 0"))
            }
            GammaMode::Fixed(g) if !(g.is_finite() && g >= 0.0) => {
                return Err(Error::config("fixed gamma must be >= 0"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn beta_igp_ucb(&self, gamma_prev: f64) -> f64 {
        beta_igp_ucb(self.b, self.r, self.delta, gamma_prev)
    }

    pub fn beta_gp_ucb(&self, gamma_prev: f64, t: usize) -> f64 {
        beta_gp_ucb(self.b, self.delta, gamma_prev, t)
    }

    pub fn v_gp_ts(&self, gamma_prev: f64) -> f64 {
        v_gp_ts(self.b, self.r, self.delta, gamma_prev)
    }

    /// `γ_{t-1}` for round `t` on a domain of dimension `d`; `state` holds
    /// the first `t - 1` observations.
    pub fn gamma_estimate(&self, state: &PosteriorState, t: usize, d: usize) -> Result<f64> {
        gamma_estimate(self.gamma_mode, state, t, d)
    }
}

/// `B + R √(2(γ + 1 + ln(1/δ)))`.
pub fn beta_igp_ucb(b: f64, r: f64, delta: f64, gamma_prev: f64) -> f64 {
    b + r * (2.0 * (gamma_prev + 1.0 + (1.0 / delta).ln())).sqrt()
}

/// `√(2B² + 300 γ ln³(t/δ))`, with `ln(t/δ)` clamped at zero.
pub fn beta_gp_ucb(b: f64, delta: f64, gamma_prev: f64, t: usize) -> f64 {
    let l = (t as f64 / delta).ln().max(0.0);
    (2.0 * b * b + 300.0 * gamma_prev * l * l * l).sqrt()
}

/// `B + R √(2(γ + 1 + ln(2/δ)))`.
pub fn v_gp_ts(b: f64, r: f64, delta: f64, gamma_prev: f64) -> f64 {
    b + r * (2.0 * (gamma_prev + 1.0 + (2.0 / delta).ln())).sqrt()
}

pub fn gamma_estimate(mode: GammaMode, state: &PosteriorState, t: usize, d: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::config("rounds are numbered from 1"));
    }
    match mode {
        GammaMode::EmpiricalLogdet => Ok(state.log_det_information()),
        GammaMode::Fixed(g) => Ok(g),
        GammaMode::Theoretical { c } => theoretical_gamma(state.kernel(), c, t, d),
    }
}

/// Growth rate of the maximum information gain: `(ln t)^{d+1}` for SE,
/// `t^{d(d+1)/(2ν+d(d+1))} ln t` for Matérn and `d ln t` for the linear kernel.
pub fn theoretical_gamma(kernel: &KernelSpec, c: f64, t: usize, d: usize) -> Result<f64> {
    let lt = (t as f64).ln();
    let df = d as f64;
    match kernel {
        KernelSpec::SquaredExponential { .. } => Ok(c * lt.powf(df + 1.0)),
        KernelSpec::Matern { nu, .. } => {
            let dd = df * (df + 1.0);
            let expo = dd / (2.0 * nu.value() + dd);
            Ok(c * (t as f64).powf(expo) * lt)
        }
        KernelSpec::Linear => Ok(c * df * lt),
        KernelSpec::Precomputed { .. } => Err(Error::Unsupported(
            "no theoretical information-gain rate for a precomputed kernel".into(),
        )),
    }
}

/// Index of the largest score; ties (exact equality) resolved by `tie`.
pub fn argmax(scores: &[f64], tie: TieBreak) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    match tie {
        TieBreak::LowestIndex => best,
        TieBreak::Random { seed } => {
            let top = scores[best];
            let tied: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == top).collect();
            if tied.len() == 1 {
                best
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                tied[rng.random_range(0..tied.len())]
            }
        }
    }
}

fn std_dev(var: f64) -> f64 {
    var.max(0.0).sqrt()
}

/// `argmax μ + β σ` over slices of means and variances.
pub fn select_ucb(mu: &[f64], var: &[f64], beta: f64, tie: TieBreak) -> usize {
    let scores: Vec<f64> = mu
        .iter()
        .zip(var)
        .map(|(m, v)| m + beta * std_dev(*v))
        .collect();
    argmax(&scores, tie)
}

pub fn select_igp_ucb(state: &PosteriorState, beta: f64, tie: TieBreak) -> usize {
    select_ucb(state.mu(), state.var(), beta, tie)
}

/// Thompson step over every candidate.
pub fn select_gp_ts(state: &PosteriorState, v: f64, seed: u64) -> Result<usize> {
    let draw = state.sample_function(v, seed)?;
    Ok(argmax(&draw, TieBreak::LowestIndex))
}

/// Thompson step restricted to `active` candidate indices; returns a
/// candidate index.
pub fn select_gp_ts_subset(
    state: &PosteriorState,
    active: &[usize],
    v: f64,
    seed: u64,
) -> Result<usize> {
    if active.is_empty() {
        return Err(Error::config("active decision set is empty"));
    }
    let draw = state.sample_subset(active, v, seed)?;
    Ok(active[argmax(&draw, TieBreak::LowestIndex)])
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `(μ - f*) Φ(z) + σ φ(z)` with `z = (μ - f*)/σ`; `max(μ - f*, 0)` when σ
/// vanishes.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64) -> f64 {
    let gap = mu - f_best;
    if sigma < SIGMA_FLOOR {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    let n = std_normal();
    gap * n.cdf(z) + sigma * n.pdf(z)
}

/// `Φ((μ - f* - ξ)/σ)`; when σ vanishes the score is ±∞ by the sign of the
/// gap (one half when the gap is exactly zero).
pub fn probability_of_improvement(mu: f64, sigma: f64, f_best: f64, xi: f64) -> f64 {
    let gap = mu - f_best - xi;
    if sigma < SIGMA_FLOOR {
        return if gap > 0.0 {
            f64::INFINITY
        } else if gap < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.5
        };
    }
    std_normal().cdf(gap / sigma)
}

pub fn select_ei(mu: &[f64], var: &[f64], f_best: f64, tie: TieBreak) -> usize {
    let scores: Vec<f64> = mu
        .iter()
        .zip(var)
        .map(|(m, v)| expected_improvement(*m, std_dev(*v), f_best))
        .collect();
    argmax(&scores, tie)
}

pub fn select_pi(mu: &[f64], var: &[f64], f_best: f64, xi: f64, tie: TieBreak) -> usize {
    let scores: Vec<f64> = mu
        .iter()
        .zip(var)
        .map(|(m, v)| probability_of_improvement(*m, std_dev(*v), f_best, xi))
        .collect();
    argmax(&scores, tie)
}

pub fn select_gp_ei(state: &PosteriorState, f_best: f64, tie: TieBreak) -> Result<usize> {
    if !f_best.is_finite() {
        return Err(Error::NonFinite("incumbent value"));
    }
    Ok(select_ei(state.mu(), state.var(), f_best, tie))
}

pub fn select_gp_pi(state: &PosteriorState, f_best: f64, xi: f64, tie: TieBreak) -> Result<usize> {
    if !f_best.is_finite() {
        return Err(Error::NonFinite("incumbent value"));
    }
    if !(xi >= 0.0) {
        return Err(Error::config(format!("PI offset must be >= 0, got {xi}")));
    }
    Ok(select_pi(state.mu(), state.var(), f_best, xi, tie))
}

/// Per-round uniform grid over `[0, r]^d` for Thompson sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationSpec {
    /// Side length of the box.
    pub r: f64,
    pub b: f64,
    /// Lipschitz constant of the kernel.
    pub l: f64,
    pub d: usize,
    /// Largest number of grid points allowed.
    pub cap: usize,
}

#[derive(Debug, Clone)]
pub struct Discretization {
    pub points: CandidateSet,
    pub per_axis: usize,
    /// True when the size formula asked for more than `cap` points.
    pub capped: bool,
    /// Largest L1 distance from a point of the box to its nearest grid point.
    pub covering_radius: f64,
}

impl DiscretizationSpec {
    /// Points per axis requested at round `t`: `⌈B L r d t²⌉`, at least 1.
    pub fn requested_per_axis(&self, t: usize) -> f64 {
        let t = t as f64;
        (self.b * self.l * self.r * self.d as f64 * t * t).ceil().max(1.0)
    }

    /// Builds the cell-centred grid with `m` points per axis, so every point
    /// of the box is within L1 distance `d r / (2m) <= 1/(2 B L t²)` of it.
    pub fn discretize(&self, t: usize) -> Result<Discretization> {
        if t == 0 {
            return Err(Error::config("rounds are numbered from 1"));
        }
        if self.d == 0 || !(self.r > 0.0) || self.cap == 0 {
            return Err(Error::config("discretization needs d >= 1, r > 0 and cap >= 1"));
        }
        if !(self.b >= 0.0 && self.l >= 0.0) {
            return Err(Error::config("discretization needs B, L >= 0"));
        }
        let requested = self.requested_per_axis(t);
        let cap_per_axis = largest_root(self.cap, self.d);
        let (m, capped) = if requested > cap_per_axis as f64 {
            (cap_per_axis, true)
        } else {
            (requested as usize, false)
        };
        let h = self.r / m as f64;
        let total = m.pow(self.d as u32);
        let mut points = Vec::with_capacity(total);
        let mut digits = vec![0usize; self.d];
        for _ in 0..total {
            let coords = digits.iter().map(|&k| (k as f64 + 0.5) * h).collect();
            points.push(Point::new(coords)?);
            for digit in digits.iter_mut() {
                *digit += 1;
                if *digit < m {
                    break;
                }
                *digit = 0;
            }
        }
        Ok(Discretization {
            points: CandidateSet::new(points)?,
            per_axis: m,
            capped,
            covering_radius: self.d as f64 * h / 2.0,
        })
    }
}

/// Largest `m` with `m^d <= cap`.
fn largest_root(cap: usize, d: usize) -> usize {
    let mut m = (cap as f64).powf(1.0 / d as f64).floor() as usize;
    while m > 1 && m.checked_pow(d as u32).is_none_or(|v| v > cap) {
        m -= 1;
    }
    while (m + 1).checked_pow(d as u32).is_some_and(|v| v <= cap) {
        m += 1;
    }
    m.max(1)
}

/// Maps grid points to their nearest candidates (Euclidean), returning the
/// distinct candidate indices in increasing order.
pub fn snap_to_candidates(grid: &CandidateSet, candidates: &CandidateSet) -> Result<Vec<usize>> {
    if grid.dim() != candidates.dim() {
        return Err(Error::DimensionMismatch {
            expected: candidates.dim(),
            got: grid.dim(),
        });
    }
    let mut picked = vec![false; candidates.len()];
    for g in grid.points() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in candidates.points().iter().enumerate() {
            let d: f64 = g
                .coords()
                .iter()
                .zip(c.coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        picked[best] = true;
    }
    Ok((0..candidates.len()).filter(|&i| picked[i]).collect())
}
