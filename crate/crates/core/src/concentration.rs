//! Monte-Carlo checks of the kernel self-normalized bound and the confidence
//! band it implies.
//!
//! For a predictable point sequence `x_1, x_2, ...` and `R`-sub-Gaussian
//! noise `ε_1, ε_2, ...`, with probability at least `1 - δ`, simultaneously
//! for all `t`:
//!
//! ```text
//! εᵀ ((K_t + ηI)⁻¹ + I)⁻¹ ε  <=  2R² ln( √det((1+η)I + K_t) / δ )
//! ```
//!
//! With `A = K_t + ηI` the left side equals `‖ε‖² - εᵀ(A + I)⁻¹ε`, so both
//! sides only need the Cholesky factor of `(1+η)I + K_t`, which is extended
//! one row per step.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::environments::{Environment, NoiseModel};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Point};
use crate::policies::beta_igp_ucb;
use crate::posterior::{dot, PosteriorMode, PosteriorState};
use crate::rng::{derive_seed, Stream};

/// How the next point of a trajectory is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointRule {
    /// Independent uniform points in `[0,1]^d`.
    Iid,
    /// Start at the centre of the cube and step every coordinate by
    /// `CHASE_STEP` in the direction of the sign of the previous noise,
    /// reflecting at the boundary.
    ChaseTheNoise,
}

pub const CHASE_STEP: f64 = 0.05;

impl PointRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(PointRule::Iid),
            "chase" | "chase-the-noise" | "adaptive" => Ok(PointRule::ChaseTheNoise),
            other => Err(Error::config(format!("unknown point rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MartingaleTrajectory {
    pub kernel: KernelSpec,
    pub points: Vec<Point>,
    pub noises: Vec<f64>,
    pub eta: f64,
}

impl MartingaleTrajectory {
    pub fn new(kernel: KernelSpec, points: Vec<Point>, noises: Vec<f64>, eta: f64) -> Result<Self> {
        if points.len() != noises.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: noises.len(),
            });
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::config(format!("eta must be >= 0, got {eta}")));
        }
        if noises.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("noise sequence"));
        }
        Ok(MartingaleTrajectory {
            kernel,
            points,
            noises,
            eta,
        })
    }

    /// Simulates `horizon` steps. Each point depends only on earlier noise.
    pub fn generate<R: Rng + ?Sized>(
        kernel: KernelSpec,
        rule: PointRule,
        horizon: usize,
        d: usize,
        noise: NoiseModel,
        eta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        let mut points = Vec::with_capacity(horizon);
        let mut noises = Vec::with_capacity(horizon);
        let mut current = vec![0.5; d];
        for t in 0..horizon {
            let x = match rule {
                PointRule::Iid => (0..d).map(|_| rng.random::<f64>()).collect(),
                PointRule::ChaseTheNoise => {
                    if t > 0 {
                        let dir = if noises[t - 1] >= 0.0 { 1.0 } else { -1.0 };
                        for c in current.iter_mut() {
                            *c = reflect(*c + dir * CHASE_STEP);
                        }
                    }
                    current.clone()
                }
            };
            points.push(Point::new(x)?);
            noises.push(noise.sample(rng));
        }
        Self::new(kernel, points, noises, eta)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn reflect(x: f64) -> f64 {
    if x > 1.0 {
        2.0 - x
    } else if x < 0.0 {
        -x
    } else {
        x
    }
}

/// Both sides of the bound at every `t = 1..T`.
#[derive(Debug, Clone)]
pub struct BoundCheckResult {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// First `t` (1-based) with `lhs > rhs`.
    pub violated_at: Option<usize>,
}

/// Evaluates `‖ε_{1:t}‖²_{((K_t+ηI)⁻¹+I)⁻¹}` against
/// `2R² ln(√det((1+η)I+K_t)/δ)` for every prefix of the trajectory.
pub fn check_theorem1(traj: &MartingaleTrajectory, r: f64, delta: f64) -> Result<BoundCheckResult> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::config(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::config(format!("R must be >= 0, got {r}")));
    }
    let n = traj.len();
    let shift = 1.0 + traj.eta;
    let mut factor = IncrementalCholesky::default();
    // With η = 0 the bound needs K_t itself positive definite.
    let mut plain = (traj.eta == 0.0).then(IncrementalCholesky::default);
    let mut whitened = Vec::with_capacity(n);
    let mut eps_sq = 0.0;
    let mut lhs = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    let mut violated_at = None;
    let ln_delta = delta.ln();
    for t in 0..n {
        let mut col = Vec::with_capacity(t + 1);
        for s in 0..t {
            col.push(traj.kernel.eval(&traj.points[s], &traj.points[t])?);
        }
        let diag = traj.kernel.eval(&traj.points[t], &traj.points[t])?;
        if let Some(p) = plain.as_mut() {
            p.push(&col, diag).map_err(|v| {
                Error::degenerate(t + 1, "K_t not positive definite with eta = 0", v)
            })?;
        }
        let row = factor
            .push(&col, diag + shift)
            .map_err(|v| Error::degenerate(t + 1, "non-positive pivot of (1+η)I + K_t", v))?;
        let pivot = row[t];
        let w = (traj.noises[t] - dot(&row[..t], &whitened)) / pivot;
        whitened.push(w);
        eps_sq += traj.noises[t] * traj.noises[t];
        let left = (eps_sq - dot(&whitened, &whitened)).max(0.0);
        let right = r * r * (0.5 * factor.log_det() - ln_delta) * 2.0;
        if violated_at.is_none() && left > right {
            violated_at = Some(t + 1);
        }
        lhs.push(left);
        rhs.push(right);
    }
    Ok(BoundCheckResult {
        lhs,
        rhs,
        violated_at,
    })
}

/// Lower-triangular factor grown one row at a time.
#[derive(Debug, Default, Clone)]
struct IncrementalCholesky {
    rows: Vec<Vec<f64>>,
    log_det: f64,
}

impl IncrementalCholesky {
    /// Appends the row/column with off-diagonal `col` and diagonal `diag`.
    /// Returns the new factor row, or the offending pivot².
    fn push(&mut self, col: &[f64], diag: f64) -> std::result::Result<&[f64], f64> {
        let t = self.rows.len();
        let mut row = Vec::with_capacity(t + 1);
        for (s, r) in self.rows.iter().enumerate() {
            let v = (col[s] - dot(&r[..s], &row)) / r[s];
            row.push(v);
        }
        let pivot_sq = diag - dot(&row, &row);
        if !(pivot_sq > 1e-12) {
            return Err(pivot_sq);
        }
        let pivot = pivot_sq.sqrt();
        row.push(pivot);
        self.log_det += 2.0 * pivot.ln();
        self.rows.push(row);
        Ok(&self.rows[t])
    }

    fn log_det(&self) -> f64 {
        self.log_det
    }
}

#[derive(Debug, Clone)]
pub struct CoverageConfig {
    pub kernel: KernelSpec,
    pub horizon: usize,
    pub trials: usize,
    pub d: usize,
    pub noise: NoiseModel,
    pub delta: f64,
    pub eta: f64,
    pub rule: PointRule,
}

#[derive(Debug, Clone)]
pub struct CoverageResult {
    /// First violation round per trial.
    pub first_violation: Vec<Option<usize>>,
    pub violations: usize,
    pub trials: usize,
    pub violation_rate: f64,
    /// One-sided 99% Clopper-Pearson upper bound on the violation rate.
    pub upper_99: f64,
}

pub const MIN_COVERAGE_TRIALS: usize = 100;

/// Fraction of independent trajectories on which the bound fails at some t.
pub fn coverage_theorem1(config: &CoverageConfig, seed: u64) -> Result<CoverageResult> {
    if config.trials < MIN_COVERAGE_TRIALS {
        return Err(Error::config(format!(
            "coverage needs at least {MIN_COVERAGE_TRIALS} trials, got {}",
            config.trials
        )));
    }
    let first_violation = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, trial as u64, 0, Stream::Noise));
            let traj = MartingaleTrajectory::generate(
                config.kernel.clone(),
                config.rule,
                config.horizon,
                config.d,
                config.noise,
                config.eta,
                &mut rng,
            )?;
            Ok(check_theorem1(&traj, config.noise.r, config.delta)?.violated_at)
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = first_violation.iter().filter(|v| v.is_some()).count();
    Ok(CoverageResult {
        violation_rate: violations as f64 / config.trials as f64,
        upper_99: clopper_pearson_upper(violations, config.trials, 0.99),
        violations,
        trials: config.trials,
        first_violation,
    })
}

/// One-sided Clopper-Pearson upper confidence bound for a binomial rate.
pub fn clopper_pearson_upper(successes: usize, trials: usize, level: f64) -> f64 {
    if trials == 0 || successes >= trials {
        return 1.0;
    }
    let beta = Beta::new(successes as f64 + 1.0, (trials - successes) as f64)
        .expect("positive shape parameters");
    beta.inverse_cdf(level)
}

impl CoverageResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["trial", "first_violation_t"])?;
        for (i, v) in self.first_violation.iter().enumerate() {
            let t = v.map(|t| t as i64).unwrap_or(-1);
            wtr.write_record([i.to_string(), t.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        format!(
            "violation_rate={} violations={}/{} upper99={:.6}",
            self.violation_rate, self.violations, self.trials, self.upper_99
        )
    }
}

/// Squared kernel form `εᵀ(K⁻¹ + I)⁻¹ε` and squared feature form
/// `S_tᵀ V_t⁻¹ S_t` for the linear kernel, with `S_t = Σ ε_s x_s` and
/// `V_t = I + Σ x_s x_sᵀ`.
///
/// The kernel form is evaluated as `εᵀ K (K + I)⁻¹ ε`, which equals
/// `εᵀ(K⁻¹ + I)⁻¹ε` when `K` is invertible and is its continuous extension
/// otherwise (as happens whenever `t > d`).
pub fn check_lemma1_identity(points: &[Point], eps: &[f64]) -> Result<(f64, f64)> {
    if points.len() != eps.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: eps.len(),
        });
    }
    if points.is_empty() {
        return Ok((0.0, 0.0));
    }
    let d = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.dim(),
        });
    }
    let t = points.len();
    let e = DVector::from_column_slice(eps);

    let mut k_plus_i = DMatrix::from_fn(t, t, |i, j| dot(points[i].coords(), points[j].coords()));
    for i in 0..t {
        k_plus_i[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(k_plus_i)
        .ok_or_else(|| Error::degenerate(t, "K + I not positive definite", f64::NAN))?;
    let kernel_form = (e.dot(&e) - e.dot(&chol.solve(&e))).max(0.0);

    let mut s = DVector::zeros(d);
    let mut v = DMatrix::identity(d, d);
    for (p, &ep) in points.iter().zip(eps) {
        let x = DVector::from_column_slice(p.coords());
        s += &x * ep;
        v += &x * x.transpose();
    }
    let vchol = Cholesky::new(v)
        .ok_or_else(|| Error::degenerate(t, "V_t not positive definite", f64::NAN))?;
    let feature_form = s.dot(&vchol.solve(&s));
    Ok((kernel_form, feature_form))
}

/// Outcome of replaying a run against the confidence band.
#[derive(Debug, Clone)]
pub struct BandCheck {
    pub covered: bool,
    /// First `(t, candidate)` where `|μ_{t-1}(x) - f(x)| > β_t σ_{t-1}(x)`.
    pub first_failure: Option<(usize, usize)>,
    /// Largest `|μ - f| / (β σ)` seen over all rounds and candidates.
    pub worst_ratio: f64,
}

/// Replays the observations of a run and checks
/// `|μ_{t-1}(x) - f(x)| <= (B + R√(2(γ_{t-1} + 1 + ln(1/δ)))) σ_{t-1}(x)`
/// at every candidate and every round `t = 1..T`, with `γ_{t-1}` the
/// empirical information gain. Requires an environment with an exact RKHS
/// norm not above `B²` and `λ = 1 + 2/T`.
pub fn check_confidence_band(
    env: &Environment,
    observations: &[(usize, f64)],
    lambda: f64,
    b: f64,
    r: f64,
    delta: f64,
) -> Result<BandCheck> {
    let norm_sq = env.rkhs_norm_sq().ok_or_else(|| {
        Error::Unsupported("confidence band needs an environment with an exact RKHS norm".into())
    })?;
    if norm_sq > b * b * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "B = {b} is below the environment's RKHS norm {}",
            norm_sq.sqrt()
        )));
    }
    let kernel = env
        .kernel()
        .cloned()
        .ok_or_else(|| Error::Unsupported("environment carries no kernel".into()))?;
    let horizon = observations.len();
    if horizon == 0 {
        return Err(Error::config("empty run"));
    }
    let expected = 1.0 + 2.0 / horizon as f64;
    if (lambda - expected).abs() > 1e-12 * expected {
        return Err(Error::config(format!(
            "band check needs lambda = 1 + 2/T = {expected}, got {lambda}"
        )));
    }
    let mut state = PosteriorState::init(
        kernel,
        lambda,
        env.candidates().clone(),
        PosteriorMode::Recursive,
    )?;
    let f = env.f_values();
    let mut first_failure = None;
    let mut worst_ratio: f64 = 0.0;
    for (t, &(idx, y)) in observations.iter().enumerate() {
        let width = beta_igp_ucb(b, r, delta, state.log_det_information());
        for i in 0..f.len() {
            let gap = (state.mu()[i] - f[i]).abs();
            let allowed = width * state.var()[i].max(0.0).sqrt();
            if gap > allowed + 1e-12 && first_failure.is_none() {
                first_failure = Some((t + 1, i));
            }
            if allowed > 0.0 {
                worst_ratio = worst_ratio.max(gap / allowed);
            } else if gap > 0.0 {
                worst_ratio = f64::INFINITY;
            }
        }
        state.update(idx, y)?;
    }
    Ok(BandCheck {
        covered: first_failure.is_none(),
        first_failure,
        worst_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::NoiseKind;
    use approx::assert_abs_diff_eq;

    fn se(l: f64) -> KernelSpec {
        KernelSpec::squared_exponential(l).unwrap()
    }

    fn p1(x: f64) -> Point {
        Point::new(vec![x]).unwrap()
    }

    #[test]
    fn empty_and_zero_noise() {
        let traj = MartingaleTrajectory::new(se(0.2), vec![], vec![], 0.1).unwrap();
        let res = check_theorem1(&traj, 1.0, 0.5).unwrap();
        assert!(res.lhs.is_empty() && res.violated_at.is_none());

        let pts: Vec<Point> = (0..10).map(|i| p1(i as f64 / 10.0)).collect();
        let traj = MartingaleTrajectory::new(se(0.2), pts, vec![0.0; 10], 0.1).unwrap();
        let res = check_theorem1(&traj, 1.0, 0.1).unwrap();
        assert!(res.lhs.iter().all(|&v| v == 0.0));
        assert!(res.violated_at.is_none());
    }

    #[test]
    fn one_step_algebra() {
        // k = 1, η = 1: lhs = e²·(1/2 + 1)⁻¹ = 2e²/3, rhs = 2R² ln(√3/δ).
        let (r, delta) = (1.0, 0.1);
        let crossover = 3.0 * r * r * (3f64.sqrt() / delta).ln();
        for e in [0.5, 1.0, 2.0] {
            let traj = MartingaleTrajectory::new(se(0.2), vec![p1(0.3)], vec![e], 1.0).unwrap();
            let res = check_theorem1(&traj, r, delta).unwrap();
            assert_abs_diff_eq!(res.lhs[0], e * e * 2.0 / 3.0, epsilon = 1e-14);
            assert_abs_diff_eq!(res.rhs[0], 2.0 * (3f64.sqrt() / delta).ln(), epsilon = 1e-14);
            assert_eq!(res.violated_at.is_some(), e * e > crossover);
        }
        let big = (crossover * 1.01).sqrt();
        let traj = MartingaleTrajectory::new(se(0.2), vec![p1(0.3)], vec![big], 1.0).unwrap();
        assert_eq!(check_theorem1(&traj, r, delta).unwrap().violated_at, Some(1));
    }

    #[test]
    fn lhs_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = NoiseModel::new(NoiseKind::Gaussian, 1.0).unwrap();
        for rule in [PointRule::Iid, PointRule::ChaseTheNoise] {
            let traj = MartingaleTrajectory::generate(se(0.3), rule, 20, 2, noise, 0.3, &mut rng).unwrap();
            let res = check_theorem1(&traj, 1.0, 0.1).unwrap();
            for t in 1..=20 {
                let k = DMatrix::from_fn(t, t, |i, j| traj.kernel.eval(&traj.points[i], &traj.points[j]).unwrap());
                let a = &k + DMatrix::identity(t, t) * traj.eta;
                let inner = a.try_inverse().unwrap() + DMatrix::identity(t, t);
                let weight = inner.try_inverse().unwrap();
                let e = DVector::from_column_slice(&traj.noises[..t]);
                let oracle = e.dot(&(&weight * &e));
                assert_abs_diff_eq!(res.lhs[t - 1], oracle, epsilon = 1e-9);
                let m = &k + DMatrix::identity(t, t) * (1.0 + traj.eta);
                let logdet = m.determinant().ln();
                // rhs >= 2R²(½ t ln(1+η) + ln(1/δ))
                let floor = 2.0 * (0.5 * t as f64 * (1.0 + traj.eta).ln() + (10f64).ln());
                assert!(res.rhs[t - 1] >= floor - 1e-9);
                assert_abs_diff_eq!(res.rhs[t - 1], logdet + 2.0 * 10f64.ln(), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn eta_zero_requires_positive_definite() {
        let pts = vec![p1(0.2), p1(0.2)];
        let traj = MartingaleTrajectory::new(se(0.2), pts, vec![0.1, 0.2], 0.0).unwrap();
        assert!(matches!(check_theorem1(&traj, 1.0, 0.1), Err(Error::Degenerate { .. })));
        let pts = vec![p1(0.2), p1(0.9)];
        let traj = MartingaleTrajectory::new(se(0.2), pts, vec![0.1, 0.2], 0.0).unwrap();
        assert!(check_theorem1(&traj, 1.0, 0.1).is_ok());
        assert!(MartingaleTrajectory::new(se(0.2), vec![p1(0.0)], vec![0.0], -1.0).is_err());
    }

    #[test]
    fn chase_rule_is_predictable() {
        let noise = NoiseModel::new(NoiseKind::Gaussian, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = MartingaleTrajectory::generate(se(0.2), PointRule::ChaseTheNoise, 50, 1, noise, 0.1, &mut rng).unwrap();
        assert_eq!(traj.points[0].coords(), &[0.5]);
        for t in 1..50 {
            let expect = reflect(traj.points[t - 1].coords()[0] + CHASE_STEP * traj.noises[t - 1].signum());
            assert_abs_diff_eq!(traj.points[t].coords()[0], expect, epsilon = 1e-15);
        }
    }

    fn coverage_cfg(r: f64, delta: f64) -> CoverageConfig {
        CoverageConfig {
            kernel: se(0.2),
            horizon: 30,
            trials: 100,
            d: 1,
            noise: NoiseModel::new(NoiseKind::Gaussian, r).unwrap(),
            delta,
            eta: 2.0 / 30.0,
            rule: PointRule::Iid,
        }
    }

    #[test]
    fn coverage_edge_cases() {
        let res = coverage_theorem1(&coverage_cfg(1.0, 1.0), 3).unwrap();
        assert!(res.violation_rate <= 1.0);
        let res = coverage_theorem1(&coverage_cfg(0.0, 0.1), 3).unwrap();
        assert_eq!(res.violation_rate, 0.0);
        let mut few = coverage_cfg(1.0, 0.1);
        few.trials = 10;
        assert!(coverage_theorem1(&few, 0).is_err());

        let res = coverage_theorem1(&coverage_cfg(1.0, 0.1), 9).unwrap();
        let again = coverage_theorem1(&coverage_cfg(1.0, 0.1), 9).unwrap();
        assert_eq!(res.first_violation, again.first_violation);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,first_violation_t\n0,"));
        assert_eq!(text.lines().count(), 101);
    }

    #[test]
    fn clopper_pearson_values() {
        assert_abs_diff_eq!(clopper_pearson_upper(0, 1000, 0.99), 1.0 - 0.01f64.powf(1e-3), epsilon = 1e-9);
        assert_eq!(clopper_pearson_upper(5, 5, 0.99), 1.0);
        let u = clopper_pearson_upper(10, 100, 0.99);
        assert!(u > 0.1 && u < 0.25);
    }

    #[test]
    fn lemma1_small_cases() {
        let (k, f) = check_lemma1_identity(&[p1(1.0)], &[2.0]).unwrap();
        assert_abs_diff_eq!(k, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f, 2.0, epsilon = 1e-14);
        let pts = vec![Point::new(vec![0.3, -0.2]).unwrap(), Point::new(vec![1.0, 0.5]).unwrap()];
        assert_eq!(check_lemma1_identity(&pts, &[0.0, 0.0]).unwrap(), (0.0, 0.0));
        assert!(check_lemma1_identity(&pts, &[1.0]).is_err());
    }

    #[test]
    fn lemma1_random_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = rng.random_range(1..=5);
            let t = rng.random_range(1..=10);
            let pts: Vec<Point> = (0..t)
                .map(|_| Point::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
                .collect();
            let eps: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (k, f) = check_lemma1_identity(&pts, &eps).unwrap();
            assert!((k - f).abs() <= 1e-9 * (1.0 + f.abs()), "{k} vs {f}");
        }
    }

    #[test]
    fn band_refuses_without_exact_norm() {
        let env = crate::environments::sample_gp_function(&se(0.2), 10, 1, 1).unwrap();
        let obs = vec![(0, 0.0); 4];
        assert!(matches!(
            check_confidence_band(&env, &obs, 1.5, 10.0, 0.1, 0.1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn band_trivial_cases() {
        let cands = crate::posterior::CandidateSet::new(vec![p1(0.1), p1(0.5), p1(0.9)]).unwrap();
        let env = Environment::from_rkhs_draw(se(0.2), cands, &[0.0; 3], 0.1).unwrap();
        let obs = vec![(1, 0.0); 4];
        let res = check_confidence_band(&env, &obs, 1.5, 0.0, 0.0, 0.1).unwrap();
        assert!(res.covered);
        assert!(check_confidence_band(&env, &obs, 1.0, 0.0, 0.0, 0.1).is_err());

        // prior band: |f(x)| <= B √k(x,x) when ‖f‖ <= B
        let env = crate::environments::sample_rkhs_function(&se(0.2), 30, 1, 0.05, 2).unwrap();
        let b = env.rkhs_norm_sq().unwrap().sqrt();
        for &v in env.f_values() {
            assert!(v.abs() <= b + 1e-12);
        }
        assert!(check_confidence_band(&env, &[(0, 0.0)], 3.0, b * 0.5, 0.1, 0.1).is_err());
    }
}
