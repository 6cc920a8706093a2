//! Reward environments: a finite candidate set with known mean rewards and a
//! sub-Gaussian noise model.
//!
//! Generators cover functions drawn from the RKHS of a kernel (posterior-mean
//! construction with an exact norm), raw GP sample paths, the Rosenbrock and
//! Hartmann-3 benchmarks, and tabular data loaded from CSV.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram, GramTable, KernelSpec, Point};
use crate::posterior::{factor_with_jitter, CandidateSet};

/// Jitter added to `K` before drawing from `N(0, K)`.
pub const DRAW_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `N(0, R²)`.
    Gaussian,
    /// Uniform on `[-R, R]`.
    BoundedUniform,
}

/// An `R`-sub-Gaussian noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub r: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, r: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::config(format!("noise scale R must be >= 0, got {r}")));
        }
        Ok(NoiseModel { kind, r })
    }

    pub fn noiseless() -> Self {
        NoiseModel {
            kind: NoiseKind::Gaussian,
            r: 0.0,
        }
    }

    /// Noise with `R² = fraction · range`.
    pub fn from_range_fraction(kind: NoiseKind, fraction: f64, range: f64) -> Result<Self> {
        if !(fraction >= 0.0 && range >= 0.0) {
            return Err(Error::config("range fraction and range must be >= 0"));
        }
        Self::new(kind, (fraction * range).sqrt())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.r == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.r * z
            }
            NoiseKind::BoundedUniform => rng.random_range(-self.r..=self.r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Rosenbrock,
    Hartmann3,
}

impl Benchmark {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rosenbrock" => Ok(Benchmark::Rosenbrock),
            "hartmann3" | "hartman3" => Ok(Benchmark::Hartmann3),
            other => Err(Error::config(format!("unknown benchmark {other:?}"))),
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Benchmark::Rosenbrock => 2,
            Benchmark::Hartmann3 => 3,
        }
    }

    /// Per-coordinate native domain `[lo, hi]`.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Benchmark::Rosenbrock => (-2.048, 2.048),
            Benchmark::Hartmann3 => (0.0, 1.0),
        }
    }

    /// Global minimizer in native coordinates.
    pub fn minimizer(self) -> Vec<f64> {
        match self {
            Benchmark::Rosenbrock => vec![1.0, 1.0],
            Benchmark::Hartmann3 => vec![0.114614, 0.555649, 0.852547],
        }
    }

    /// Standard (minimization) form evaluated at native coordinates.
    pub fn evaluate(self, x: &[f64]) -> f64 {
        match self {
            Benchmark::Rosenbrock => {
                let (a, b) = (x[0], x[1]);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            }
            Benchmark::Hartmann3 => {
                const ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
                const A: [[f64; 3]; 4] = [
                    [3.0, 10.0, 30.0],
                    [0.1, 10.0, 35.0],
                    [3.0, 10.0, 30.0],
                    [0.1, 10.0, 35.0],
                ];
                const P: [[f64; 3]; 4] = [
                    [0.3689, 0.1170, 0.2673],
                    [0.4699, 0.4387, 0.7470],
                    [0.1091, 0.8732, 0.5547],
                    [0.0381, 0.5743, 0.8828],
                ];
                -(0..4)
                    .map(|i| {
                        let inner: f64 = (0..3).map(|j| A[i][j] * (x[j] - P[i][j]).powi(2)).sum();
                        ALPHA[i] * (-inner).exp()
                    })
                    .sum::<f64>()
            }
        }
    }

    fn to_native(self, unit: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        unit.iter().map(|u| lo + u * (hi - lo)).collect()
    }

    fn to_unit(self, native: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        native.iter().map(|x| (x - lo) / (hi - lo)).collect()
    }
}

/// How the environment was produced, kept for reporting and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Rkhs { lambda0: f64, seed: Option<u64> },
    GpSample { seed: u64 },
    Benchmark { name: Benchmark, seed: u64, force_optimum: bool },
    Tabular,
    Custom,
}

#[derive(Debug, Clone)]
pub struct Environment {
    candidates: CandidateSet,
    f_values: Vec<f64>,
    f_star: f64,
    argmax: usize,
    noise: NoiseModel,
    rkhs_norm_sq: Option<f64>,
    surrogate_norm_sq: Option<f64>,
    kernel: Option<KernelSpec>,
    provenance: Provenance,
}

impl Environment {
    /// An environment over `candidates` with mean rewards `f_values`.
    /// The argmax is the lowest index attaining the maximum.
    pub fn new(candidates: CandidateSet, f_values: Vec<f64>, noise: NoiseModel) -> Result<Self> {
        if f_values.len() != candidates.len() {
            return Err(Error::DimensionMismatch {
                expected: candidates.len(),
                got: f_values.len(),
            });
        }
        if f_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reward values"));
        }
        let mut argmax = 0;
        for (i, &v) in f_values.iter().enumerate() {
            if v > f_values[argmax] {
                argmax = i;
            }
        }
        Ok(Environment {
            f_star: f_values[argmax],
            argmax,
            candidates,
            f_values,
            noise,
            rkhs_norm_sq: None,
            surrogate_norm_sq: None,
            kernel: None,
            provenance: Provenance::Custom,
        })
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.candidates.dim()
    }

    pub fn f_values(&self) -> &[f64] {
        &self.f_values
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn argmax_index(&self) -> usize {
        self.argmax
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// Exact squared RKHS norm, known for RKHS-constructed environments.
    pub fn rkhs_norm_sq(&self) -> Option<f64> {
        self.rkhs_norm_sq
    }

    /// Squared norm of the minimum-norm interpolant, used as a stand-in for
    /// `B²` on GP sample paths (which are not RKHS members).
    pub fn surrogate_norm_sq(&self) -> Option<f64> {
        self.surrogate_norm_sq
    }

    /// Kernel the environment was generated with, if any.
    pub fn kernel(&self) -> Option<&KernelSpec> {
        self.kernel.as_ref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn range(&self) -> f64 {
        let min = self.f_values.iter().copied().fold(f64::INFINITY, f64::min);
        self.f_star - min
    }

    pub fn mean_reward(&self) -> f64 {
        self.f_values.iter().sum::<f64>() / self.f_values.len() as f64
    }

    /// Instantaneous regret of playing `idx`.
    pub fn regret(&self, idx: usize) -> f64 {
        self.f_star - self.f_values[idx]
    }

    /// Noisy reward `f(x_idx) + ε`; each call advances `rng`.
    pub fn observe<R: Rng + ?Sized>(&self, idx: usize, rng: &mut R) -> Result<f64> {
        self.candidates.check_index(idx)?;
        Ok(self.f_values[idx] + self.noise.sample(rng))
    }

    /// Function `f = K α` with `α = (K + λ₀I)⁻¹ y`: the posterior mean after
    /// observing `y` at the candidates. Its RKHS norm is `√(αᵀ K α)`.
    pub fn from_rkhs_draw(
        kernel: KernelSpec,
        candidates: CandidateSet,
        y: &[f64],
        lambda0: f64,
    ) -> Result<Self> {
        if !(lambda0.is_finite() && lambda0 > 0.0) {
            return Err(Error::config(format!("lambda0 must be positive, got {lambda0}")));
        }
        if y.len() != candidates.len() {
            return Err(Error::DimensionMismatch {
                expected: candidates.len(),
                got: y.len(),
            });
        }
        let k = gram(&kernel, candidates.points())?;
        let mut reg = k.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += lambda0;
        }
        let chol = nalgebra::Cholesky::new(reg)
            .ok_or_else(|| Error::degenerate(0, "K + λ₀I not positive definite", lambda0))?;
        let alpha = chol.solve(&DVector::from_column_slice(y));
        let f = &k * &alpha;
        let norm_sq = alpha.dot(&f).max(0.0);
        let mut env = Environment::new(candidates, f.iter().copied().collect(), NoiseModel::noiseless())?;
        env.rkhs_norm_sq = Some(norm_sq);
        env.kernel = Some(kernel);
        env.provenance = Provenance::Rkhs { lambda0, seed: None };
        Ok(env)
    }

    pub fn dump<W: Write>(&self, writer: W) -> Result<()> {
        let dump = EnvironmentDump {
            points: self.candidates.points().to_vec(),
            f_values: self.f_values.clone(),
            noise: self.noise,
            rkhs_norm_sq: self.rkhs_norm_sq,
            surrogate_norm_sq: self.surrogate_norm_sq,
            kernel: self.kernel.clone(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_writer_pretty(writer, &dump)?;
        Ok(())
    }

    pub fn restore<R: Read>(reader: R) -> Result<Self> {
        let d: EnvironmentDump = serde_json::from_reader(reader)?;
        let mut env = Environment::new(CandidateSet::new(d.points)?, d.f_values, d.noise)?;
        env.rkhs_norm_sq = d.rkhs_norm_sq;
        env.surrogate_norm_sq = d.surrogate_norm_sq;
        env.kernel = d.kernel;
        env.provenance = d.provenance;
        Ok(env)
    }
}

#[derive(Serialize, Deserialize)]
struct EnvironmentDump {
    points: Vec<Point>,
    f_values: Vec<f64>,
    noise: NoiseModel,
    rkhs_norm_sq: Option<f64>,
    surrogate_norm_sq: Option<f64>,
    kernel: Option<KernelSpec>,
    provenance: Provenance,
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<Vec<Point>> {
    (0..n)
        .map(|_| Point::new((0..d).map(|_| rng.random::<f64>()).collect()))
        .collect()
}

/// Draw from `N(0, K + DRAW_JITTER·I)` (escalating jitter if needed).
fn draw_gaussian(k: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = k.nrows();
    let mut cov = k.clone();
    for i in 0..n {
        cov[(i, i)] += DRAW_JITTER;
    }
    let chol = factor_with_jitter(cov, 0)?;
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    Ok((chol.l() * z).iter().copied().collect())
}

/// RKHS test function: `n` uniform points in `[0,1]^d`, `y ~ N(0, K)`, and
/// `f` the posterior mean with regularizer `lambda0`.
pub fn sample_rkhs_function(
    kernel: &KernelSpec,
    n: usize,
    d: usize,
    lambda0: f64,
    seed: u64,
) -> Result<Environment> {
    if n < 2 {
        return Err(Error::config("RKHS environments need at least 2 points"));
    }
    if d == 0 {
        return Err(Error::config("dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = uniform_points(&mut rng, n, d)?;
    let k = gram(kernel, &points)?;
    let y = draw_gaussian(&k, &mut rng)?;
    let mut env = Environment::from_rkhs_draw(kernel.clone(), CandidateSet::new(points)?, &y, lambda0)?;
    env.provenance = Provenance::Rkhs {
        lambda0,
        seed: Some(seed),
    };
    Ok(env)
}

/// GP sample path: `f ~ N(0, K)` directly on `n` uniform points.
pub fn sample_gp_function(kernel: &KernelSpec, n: usize, d: usize, seed: u64) -> Result<Environment> {
    if n < 1 {
        return Err(Error::config("GP environments need at least 1 point"));
    }
    if d == 0 {
        return Err(Error::config("dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = uniform_points(&mut rng, n, d)?;
    let k = gram(kernel, &points)?;
    let f = draw_gaussian(&k, &mut rng)?;
    let mut reg = k.clone();
    for i in 0..n {
        reg[(i, i)] += DRAW_JITTER;
    }
    let chol = factor_with_jitter(reg, 0)?;
    let fv = DVector::from_column_slice(&f);
    let alpha = chol.solve(&fv);
    let surrogate = alpha.dot(&(&k * &alpha)).max(0.0);
    let mut env = Environment::new(CandidateSet::new(points)?, f, NoiseModel::noiseless())?;
    env.surrogate_norm_sq = Some(surrogate);
    env.kernel = Some(kernel.clone());
    env.provenance = Provenance::GpSample { seed };
    Ok(env)
}

/// Benchmark on `n` uniform points of its domain (stored in unit-cube
/// coordinates). Rewards are the negated standard form, min-max rescaled to
/// `[0, 1]`. With `force_optimum` the last sampled point is replaced by the
/// known minimizer.
pub fn benchmark_function(
    bench: Benchmark,
    n: usize,
    seed: u64,
    force_optimum: bool,
) -> Result<Environment> {
    if n < 1 {
        return Err(Error::config("benchmark environments need at least 1 point"));
    }
    let d = bench.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = uniform_points(&mut rng, n, d)?;
    if force_optimum {
        points[n - 1] = Point::new(bench.to_unit(&bench.minimizer()))?;
    }
    let raw: Vec<f64> = points
        .iter()
        .map(|p| -bench.evaluate(&bench.to_native(p.coords())))
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let f: Vec<f64> = if span > 0.0 {
        raw.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; n]
    };
    let mut env = Environment::new(CandidateSet::new(points)?, f, NoiseModel::noiseless())?;
    env.provenance = Provenance::Benchmark {
        name: bench,
        seed,
        force_optimum,
    };
    Ok(env)
}

/// Reads an `id,f_value` CSV (header required). With `gram`, the companion
/// Gram table becomes the environment's precomputed kernel and must cover
/// every id.
pub fn load_tabular(values: &Path, gram_path: Option<&Path>) -> Result<Environment> {
    let file = std::fs::File::open(values)?;
    let mut env = read_tabular(file).map_err(|e| match e {
        Error::Parse { path: None, msg } => Error::parse(Some(values), msg),
        other => other,
    })?;
    if let Some(gp) = gram_path {
        let table = GramTable::load(gp)?;
        for p in env.candidates.points() {
            let id = p.as_id().expect("tabular points carry ids");
            if table.position(id).is_none() {
                return Err(Error::parse(
                    Some(gp),
                    format!("Gram table has no entry for id {id}"),
                ));
            }
        }
        env.kernel = Some(KernelSpec::precomputed(table));
    }
    Ok(env)
}

pub fn read_tabular<R: Read>(reader: R) -> Result<Environment> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut points = Vec::new();
    let mut f = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::parse(
                None,
                format!("row {} has {} columns, expected id,f_value", line + 1, rec.len()),
            ));
        }
        let id: i64 = rec[0]
            .parse()
            .map_err(|e| Error::parse(None, format!("bad id {:?}: {e}", &rec[0])))?;
        let v: f64 = rec[1]
            .parse()
            .map_err(|e| Error::parse(None, format!("bad f_value {:?}: {e}", &rec[1])))?;
        points.push(Point::from_id(id));
        f.push(v);
    }
    if points.is_empty() {
        return Err(Error::parse(None, "tabular file has no rows"));
    }
    let mut env = Environment::new(CandidateSet::new(points)?, f, NoiseModel::noiseless())?;
    env.provenance = Provenance::Tabular;
    Ok(env)
}

/// Writes `id,f_value` rows. Candidates must be id points.
pub fn write_tabular<W: Write>(env: &Environment, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "f_value"])?;
    for (p, v) in env.candidates.points().iter().zip(&env.f_values) {
        let id = p
            .as_id()
            .ok_or_else(|| Error::Unsupported("tabular export needs id candidates".into()))?;
        wtr.write_record([id.to_string(), v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn se(l: f64) -> KernelSpec {
        KernelSpec::squared_exponential(l).unwrap()
    }

    #[test]
    fn rkhs_determinism_and_norm() {
        let a = sample_rkhs_function(&se(0.2), 30, 1, 0.01, 4).unwrap();
        let b = sample_rkhs_function(&se(0.2), 30, 1, 0.01, 4).unwrap();
        assert_eq!(a.f_values(), b.f_values());
        assert_eq!(a.candidates(), b.candidates());
        assert!(a.rkhs_norm_sq().unwrap() > 0.0);
        assert_eq!(a.f_star(), a.f_values()[a.argmax_index()]);
        assert!(sample_rkhs_function(&se(0.2), 1, 1, 0.01, 4).is_err());
    }

    #[test]
    fn rkhs_zero_draw() {
        let cands = CandidateSet::new(vec![
            Point::new(vec![0.1]).unwrap(),
            Point::new(vec![0.6]).unwrap(),
        ])
        .unwrap();
        let env = Environment::from_rkhs_draw(se(0.2), cands, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(env.f_values(), &[0.0, 0.0]);
        assert_eq!(env.rkhs_norm_sq(), Some(0.0));
    }

    #[test]
    fn rkhs_diagonal_hand_case() {
        // Points far apart relative to the lengthscale give K = I.
        let cands = CandidateSet::new(vec![
            Point::new(vec![0.0]).unwrap(),
            Point::new(vec![100.0]).unwrap(),
        ])
        .unwrap();
        let env = Environment::from_rkhs_draw(se(0.2), cands, &[2.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(env.f_values()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(env.f_values()[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(env.rkhs_norm_sq().unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(env.argmax_index(), 0);
    }

    #[test]
    fn gp_sample_basics() {
        let a = sample_gp_function(&se(0.2), 20, 2, 9).unwrap();
        let b = sample_gp_function(&se(0.2), 20, 2, 9).unwrap();
        assert_eq!(a.f_values(), b.f_values());
        assert!(a.rkhs_norm_sq().is_none());
        assert!(a.surrogate_norm_sq().unwrap() > 0.0);
        let one = sample_gp_function(&se(0.2), 1, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn gp_sample_covariance() {
        let l = 0.2;
        let k = se(l);
        // With a fixed pair of points, the empirical covariance over seeds
        // should match K. Points are drawn per seed, so fix them by drawing
        // directly with the same routine.
        let pts = vec![Point::new(vec![0.3]).unwrap(), Point::new(vec![0.4]).unwrap()];
        let g = gram(&k, &pts).unwrap();
        let mut acc = [[0.0; 2]; 2];
        let m = 10_000;
        for seed in 0..m {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = draw_gaussian(&g, &mut rng).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    acc[i][j] += f[i] * f[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let c = acc[i][j] / m as f64;
                assert!((c - g[(i, j)]).abs() <= 0.05 * g[(i, j)], "{c} vs {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn hartmann_optimum() {
        let b = Benchmark::Hartmann3;
        let best = -b.evaluate(&b.minimizer());
        assert_abs_diff_eq!(best, 3.86278, epsilon = 1e-5);
        // local grid refinement around the published optimizer finds nothing
        // meaningfully better
        let x0 = b.minimizer();
        let h = 1e-3;
        for i in -5..=5 {
            for j in -5..=5 {
                for k in -5..=5 {
                    let x = [x0[0] + i as f64 * h, x0[1] + j as f64 * h, x0[2] + k as f64 * h];
                    assert!(-b.evaluate(&x) <= best + 1e-6);
                }
            }
        }
    }

    #[test]
    fn benchmark_environments() {
        let env = benchmark_function(Benchmark::Rosenbrock, 200, 1, true).unwrap();
        assert_eq!(env.dim(), 2);
        assert_eq!(env.argmax_index(), 199);
        assert_eq!(env.f_star(), 1.0);
        assert!(env.f_values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let again = benchmark_function(Benchmark::Rosenbrock, 200, 1, true).unwrap();
        assert_eq!(env.f_values(), again.f_values());
        assert!(Benchmark::parse("branin").is_err());
        let h = benchmark_function(Benchmark::Hartmann3, 300, 2, false).unwrap();
        assert_eq!(h.dim(), 3);
        assert_eq!(h.f_star(), 1.0);
    }

    #[test]
    fn tabular_round_trip() {
        let text = "id,f_value\n0,0.3\n1,0.7\n";
        let env = read_tabular(text.as_bytes()).unwrap();
        assert_eq!(env.f_star(), 0.7);
        assert_eq!(env.argmax_index(), 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vals.csv");
        let vals = vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-17, 123456.789];
        let cands = CandidateSet::new((0..4).map(Point::from_id).collect()).unwrap();
        let env = Environment::new(cands, vals.clone(), NoiseModel::noiseless()).unwrap();
        write_tabular(&env, std::fs::File::create(&path).unwrap()).unwrap();
        let back = load_tabular(&path, None).unwrap();
        assert_eq!(back.f_values(), vals.as_slice());

        let missing = dir.path().join("missing_gram.csv");
        assert!(load_tabular(&path, Some(&missing)).is_err());

        let gram_path = dir.path().join("gram.csv");
        std::fs::write(&gram_path, "id,0,1\n0,1,0.2\n1,0.2,1\n").unwrap();
        assert!(load_tabular(&path, Some(&gram_path)).is_err(), "ids 2,3 missing");
        std::fs::write(
            &gram_path,
            "id,0,1,2,3\n0,1,0,0,0\n1,0,1,0,0\n2,0,0,1,0\n3,0,0,0,1\n",
        )
        .unwrap();
        let with_k = load_tabular(&path, Some(&gram_path)).unwrap();
        assert!(matches!(with_k.kernel(), Some(KernelSpec::Precomputed { .. })));

        assert!(read_tabular("id,f_value\n0,abc\n".as_bytes()).is_err());
        assert!(read_tabular("id,f_value\n".as_bytes()).is_err());
    }

    #[test]
    fn observation_noise() {
        let cands = CandidateSet::new(vec![Point::new(vec![0.0]).unwrap()]).unwrap();
        let env = Environment::new(cands, vec![0.25], NoiseModel::noiseless()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(env.observe(0, &mut rng).unwrap(), 0.25);
        assert!(env.observe(1, &mut rng).is_err());

        let g = env.clone().with_noise(NoiseModel::new(NoiseKind::Gaussian, 1.0).unwrap());
        let mean: f64 = (0..10_000).map(|_| g.observe(0, &mut rng).unwrap()).sum::<f64>() / 1e4;
        assert!((mean - 0.25).abs() <= 0.04);

        let u = env.with_noise(NoiseModel::new(NoiseKind::BoundedUniform, 0.5).unwrap());
        for _ in 0..10_000 {
            let y = u.observe(0, &mut rng).unwrap();
            assert!((-0.25..=0.75).contains(&y));
        }
    }

    #[test]
    fn noise_is_sub_gaussian() {
        let r = 0.5;
        let n = 100_000;
        for kind in [NoiseKind::Gaussian, NoiseKind::BoundedUniform] {
            let noise = NoiseModel::new(kind, r).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let draws: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            for lam in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
                let mgf = draws.iter().map(|e| (lam * e).exp()).sum::<f64>() / n as f64;
                let bound = (lam * lam * r * r / 2.0f64).exp();
                assert!(mgf <= bound * 1.05, "{kind:?} λ={lam}: {mgf} > {bound}");
            }
        }
    }

    #[test]
    fn range_calibrated_noise() {
        let env = sample_rkhs_function(&se(0.2), 50, 1, 0.01, 8).unwrap();
        let noise = NoiseModel::from_range_fraction(NoiseKind::Gaussian, 0.01, env.range()).unwrap();
        assert_abs_diff_eq!(noise.r * noise.r, 0.01 * env.range(), epsilon = 1e-15);
    }

    #[test]
    fn dump_restore_exact() {
        let env = sample_rkhs_function(&se(0.2), 25, 2, 0.1, 3)
            .unwrap()
            .with_noise(NoiseModel::new(NoiseKind::BoundedUniform, 0.3).unwrap());
        let mut buf = Vec::new();
        env.dump(&mut buf).unwrap();
        let back = Environment::restore(buf.as_slice()).unwrap();
        assert_eq!(back.f_values(), env.f_values());
        assert_eq!(back.candidates(), env.candidates());
        assert_eq!(back.rkhs_norm_sq(), env.rkhs_norm_sq());
        assert_eq!(back.kernel(), env.kernel());
        assert_eq!(back.noise(), env.noise());
        assert_eq!(back.provenance(), env.provenance());
    }
}
