//! Gaussian-process posterior over a finite candidate set.
//!
//! Two maintenance strategies produce the same posterior:
//!
//! * [`PosteriorMode::Batch`] keeps a lower-triangular factor `L` of
//!   `K_t + λI`, extended by one row per observation, together with the
//!   projections `L⁻¹ k_t(x_i)` for every candidate. Means and variances are
//!   recomputed from these each round (`O(n t)`).
//! * [`PosteriorMode::Recursive`] keeps the full candidate covariance table
//!   `k_t(x, x')` and applies the rank-one downdate
//!   `k_t = k_{t-1} - k_{t-1}(·, x_t) k_{t-1}(x_t, ·) / (λ + σ²_{t-1}(x_t))`
//!   with the matching mean innovation step (`O(n²)`, inversion free).
//!
//! Both track the information gain `½ ln det(I + λ⁻¹ K_t)` as the running sum
//! `½ Σ ln(1 + λ⁻¹ σ²_{s-1}(x_s))`.
//!
//! The prior scale `v` is fixed to 1 inside the state; Thompson sampling
//! passes its own scale to [`PosteriorState::sample_function`].

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{GramTable, KernelSpec, MaternNu, Point};

/// Variances below `-VAR_DEGENERACY_TOL` are reported as a numerical failure;
/// smaller negative values are clamped to zero.
pub const VAR_DEGENERACY_TOL: f64 = 1e-6;

/// Default cap on the `n x n` covariance table of the recursive mode.
pub const DEFAULT_MEMORY_CAP_BYTES: usize = 512 * 1024 * 1024;

/// Diagonal jitter tried, in order, when factorizing a posterior covariance.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

const MIN_DENOMINATOR: f64 = 1e-12;

/// The finite decision set. Candidate ids are the indices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    points: Vec<Point>,
}

impl CandidateSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::config("candidate set is empty"))?;
        let d = first.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        Ok(CandidateSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.points.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.points.len(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorMode {
    Batch,
    Recursive,
}

#[derive(Debug, Clone)]
struct BatchFactor {
    /// Rows of the lower-triangular factor of `K_t + λI`; row `s` has `s + 1` entries.
    rows: Vec<Vec<f64>>,
    /// `L⁻¹ y_{1:t}`.
    whitened_y: Vec<f64>,
    /// `L⁻¹ k_t(x_i)` for every candidate `i`.
    proj: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum Storage {
    Batch(BatchFactor),
    /// Row-major `n x n` table of `k_t(x_i, x_j)`.
    Recursive(Vec<f64>),
}

/// Running GP posterior (`v = 1`) over a [`CandidateSet`].
#[derive(Debug, Clone)]
pub struct PosteriorState {
    kernel: KernelSpec,
    lambda: f64,
    candidates: CandidateSet,
    prior_var: Vec<f64>,
    history: Vec<(usize, f64)>,
    mu: Vec<f64>,
    var: Vec<f64>,
    /// `ln det(I + λ⁻¹ K_t)`.
    logdet: f64,
    clamped: usize,
    storage: Storage,
}

impl PosteriorState {
    pub fn init(
        kernel: KernelSpec,
        lambda: f64,
        candidates: CandidateSet,
        mode: PosteriorMode,
    ) -> Result<Self> {
        Self::init_with_cap(kernel, lambda, candidates, mode, DEFAULT_MEMORY_CAP_BYTES)
    }

    /// Like [`PosteriorState::init`] with an explicit byte cap for the
    /// recursive-mode covariance table.
    pub fn init_with_cap(
        kernel: KernelSpec,
        lambda: f64,
        candidates: CandidateSet,
        mode: PosteriorMode,
        memory_cap_bytes: usize,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::config(format!("lambda must be positive, got {lambda}")));
        }
        let n = candidates.len();
        let mut prior_var = Vec::with_capacity(n);
        for p in candidates.points() {
            prior_var.push(kernel.eval(p, p)?);
        }
        let storage = match mode {
            PosteriorMode::Batch => Storage::Batch(BatchFactor {
                rows: Vec::new(),
                whitened_y: Vec::new(),
                proj: vec![Vec::new(); n],
            }),
            PosteriorMode::Recursive => {
                let bytes = n
                    .checked_mul(n)
                    .and_then(|m| m.checked_mul(std::mem::size_of::<f64>()));
                match bytes {
                    Some(b) if b <= memory_cap_bytes => {}
                    _ => {
                        return Err(Error::Capacity(format!(
                            "recursive posterior over {n} candidates needs an {n}x{n} table, \
                             above the {memory_cap_bytes}-byte cap"
                        )))
                    }
                }
                let mut table = vec![0.0; n * n];
                let pts = candidates.points();
                for i in 0..n {
                    table[i * n + i] = prior_var[i];
                    for j in (i + 1)..n {
                        let v = kernel.eval(&pts[i], &pts[j])?;
                        table[i * n + j] = v;
                        table[j * n + i] = v;
                    }
                }
                Storage::Recursive(table)
            }
        };
        Ok(PosteriorState {
            kernel,
            lambda,
            mu: vec![0.0; n],
            var: prior_var.clone(),
            prior_var,
            candidates,
            history: Vec::new(),
            logdet: 0.0,
            clamped: 0,
            storage,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
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

    pub fn mode(&self) -> PosteriorMode {
        match self.storage {
            Storage::Batch(_) => PosteriorMode::Batch,
            Storage::Recursive(_) => PosteriorMode::Recursive,
        }
    }

    /// Number of observations absorbed so far.
    pub fn t(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn prior_var(&self) -> &[f64] {
        &self.prior_var
    }

    /// How many negative variances were clamped to zero so far.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    /// Recursive-mode covariance table `k_t(x_i, x_j)` (row-major).
    pub fn cross_cov(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Recursive(t) => Some(t),
            Storage::Batch(_) => None,
        }
    }

    /// Rows of the lower-triangular factor of `K_t + λI` (batch mode).
    pub fn factor_rows(&self) -> Option<&[Vec<f64>]> {
        match &self.storage {
            Storage::Batch(b) => Some(&b.rows),
            Storage::Recursive(_) => None,
        }
    }

    /// Cached `(μ_t(x_i), σ_t²(x_i))`.
    pub fn predict(&self, idx: usize) -> Result<(f64, f64)> {
        self.candidates.check_index(idx)?;
        Ok((self.mu[idx], self.var[idx]))
    }

    /// `½ ln det(I + λ⁻¹ K_t)`, accumulated as `½ Σ ln(1 + λ⁻¹ σ²_{s-1}(x_s))`.
    pub fn log_det_information(&self) -> f64 {
        0.5 * self.logdet
    }

    /// Absorbs the observation `y` at candidate `idx` using whichever mode
    /// the state was built with.
    pub fn update(&mut self, idx: usize, y: f64) -> Result<()> {
        match self.mode() {
            PosteriorMode::Batch => self.update_batch(idx, y),
            PosteriorMode::Recursive => self.update_recursive(idx, y),
        }
    }

    pub fn update_batch(&mut self, idx: usize, y: f64) -> Result<()> {
        self.check_observation(idx, y)?;
        let t = self.history.len() + 1;
        let Storage::Batch(factor) = &mut self.storage else {
            return Err(Error::config("update_batch called on a recursive-mode posterior"));
        };
        // The new factor row is L⁻¹ k_{t-1}(x_t), which is already cached.
        let row = factor.proj[idx].clone();
        let pivot_sq = self.prior_var[idx] + self.lambda - dot(&row, &row);
        if !(pivot_sq > 0.0) {
            return Err(Error::degenerate(t, "non-positive Cholesky pivot", pivot_sq));
        }
        let pivot = pivot_sq.sqrt();
        let w = (y - dot(&row, &factor.whitened_y)) / pivot;

        let x_t = self.candidates.point(idx);
        for (i, p) in self.candidates.points().iter().enumerate() {
            let k = self.kernel.eval(x_t, p)?;
            let proj = &mut factor.proj[i];
            let entry = (k - dot(&row, proj)) / pivot;
            proj.push(entry);
        }
        factor.whitened_y.push(w);
        let mut full_row = row;
        full_row.push(pivot);
        factor.rows.push(full_row);

        let gain = (1.0 + self.var[idx] / self.lambda).ln();
        for i in 0..self.mu.len() {
            let proj = &factor.proj[i];
            self.mu[i] = dot(proj, &factor.whitened_y);
            let v = self.prior_var[i] - dot(proj, proj);
            self.var[i] = settle_variance(v, t, &mut self.clamped)?;
        }
        self.logdet += gain;
        self.history.push((idx, y));
        Ok(())
    }

    pub fn update_recursive(&mut self, idx: usize, y: f64) -> Result<()> {
        self.check_observation(idx, y)?;
        let t = self.history.len() + 1;
        let n = self.candidates.len();
        let Storage::Recursive(table) = &mut self.storage else {
            return Err(Error::config("update_recursive called on a batch-mode posterior"));
        };
        let denom = self.lambda + self.var[idx];
        if !(denom > MIN_DENOMINATOR) {
            return Err(Error::degenerate(t, "recursive update denominator", denom));
        }
        let col: Vec<f64> = table[idx * n..(idx + 1) * n].to_vec();
        let step = (y - self.mu[idx]) / denom;
        for (m, c) in self.mu.iter_mut().zip(&col) {
            *m += c * step;
        }
        for i in 0..n {
            let ci = col[i] / denom;
            let row = &mut table[i * n..(i + 1) * n];
            for (r, cj) in row.iter_mut().zip(&col) {
                *r -= ci * cj;
            }
        }
        let gain = (1.0 + self.var[idx] / self.lambda).ln();
        for i in 0..n {
            let v = settle_variance(table[i * n + i], t, &mut self.clamped)?;
            table[i * n + i] = v;
            self.var[i] = v;
        }
        self.logdet += gain;
        self.history.push((idx, y));
        Ok(())
    }

    fn check_observation(&self, idx: usize, y: f64) -> Result<()> {
        self.candidates.check_index(idx)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("observed reward"));
        }
        Ok(())
    }

    /// Posterior covariance `k_t(x_i, x_j)` restricted to `active`.
    pub fn covariance(&self, active: &[usize]) -> Result<DMatrix<f64>> {
        for &i in active {
            self.candidates.check_index(i)?;
        }
        let m = active.len();
        let mut cov = DMatrix::zeros(m, m);
        match &self.storage {
            Storage::Recursive(table) => {
                let n = self.candidates.len();
                for (a, &i) in active.iter().enumerate() {
                    for (b, &j) in active.iter().enumerate() {
                        cov[(a, b)] = table[i * n + j];
                    }
                }
            }
            Storage::Batch(factor) => {
                let pts = self.candidates.points();
                for (a, &i) in active.iter().enumerate() {
                    cov[(a, a)] = self.var[i];
                    for (b, &j) in active.iter().enumerate().skip(a + 1) {
                        let v = self.kernel.eval(&pts[i], &pts[j])?
                            - dot(&factor.proj[i], &factor.proj[j]);
                        cov[(a, b)] = v;
                        cov[(b, a)] = v;
                    }
                }
            }
        }
        Ok(cov)
    }

    /// Draws `f ~ N(μ_t, scale² k_t)` jointly over all candidates.
    pub fn sample_function(&self, scale: f64, seed: u64) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.candidates.len()).collect();
        self.sample_subset(&all, scale, seed)
    }

    /// Draws the posterior function jointly over the candidates in `active`
    /// (values returned in the same order). Deterministic for a fixed seed.
    pub fn sample_subset(&self, active: &[usize], scale: f64, seed: u64) -> Result<Vec<f64>> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config(format!("sampling scale must be positive, got {scale}")));
        }
        let cov = self.covariance(active)?;
        let chol = factor_with_jitter(cov, self.t())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_iterator(
            active.len(),
            (0..active.len()).map(|_| StandardNormal.sample(&mut rng)),
        );
        let draw = chol.l() * z;
        Ok(active
            .iter()
            .zip(draw.iter())
            .map(|(&i, d)| self.mu[i] + scale * d)
            .collect())
    }

    /// Serializes kernel, λ, mode, candidates and history. Means and
    /// variances are recomputed by [`PosteriorState::from_snapshot`].
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        put_u32(&mut out, SNAPSHOT_VERSION);
        encode_kernel(&mut out, &self.kernel);
        put_f64(&mut out, self.lambda);
        out.push(match self.mode() {
            PosteriorMode::Batch => 0,
            PosteriorMode::Recursive => 1,
        });
        put_u64(&mut out, self.candidates.len() as u64);
        put_u64(&mut out, self.candidates.dim() as u64);
        for p in self.candidates.points() {
            for &c in p.coords() {
                put_f64(&mut out, c);
            }
        }
        put_u64(&mut out, self.history.len() as u64);
        for &(i, y) in &self.history {
            put_u64(&mut out, i as u64);
            put_f64(&mut out, y);
        }
        out
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        Self::from_snapshot_with_cap(bytes, DEFAULT_MEMORY_CAP_BYTES)
    }

    pub fn from_snapshot_with_cap(bytes: &[u8], memory_cap_bytes: usize) -> Result<Self> {
        let mut r = ByteReader { buf: bytes, pos: 0 };
        if r.take(4)? != SNAPSHOT_MAGIC {
            return Err(Error::parse(None, "not a posterior snapshot"));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::parse(None, format!("unsupported snapshot version {version}")));
        }
        let kernel = decode_kernel(&mut r)?;
        let lambda = r.f64()?;
        let mode = match r.u8()? {
            0 => PosteriorMode::Batch,
            1 => PosteriorMode::Recursive,
            m => return Err(Error::parse(None, format!("bad posterior mode tag {m}"))),
        };
        let n = r.len_prefix()?;
        let d = r.len_prefix()?;
        let mut points = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let coords = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            points.push(Point::new(coords)?);
        }
        let candidates = CandidateSet::new(points)?;
        let mut state = Self::init_with_cap(kernel, lambda, candidates, mode, memory_cap_bytes)?;
        let t = r.len_prefix()?;
        for _ in 0..t {
            let idx = r.u64()? as usize;
            let y = r.f64()?;
            state.update(idx, y)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::parse(None, "trailing bytes after snapshot"));
        }
        Ok(state)
    }
}

fn settle_variance(v: f64, t: usize, clamped: &mut usize) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -VAR_DEGENERACY_TOL {
        *clamped += 1;
        Ok(0.0)
    } else {
        Err(Error::degenerate(t, "negative posterior variance", v))
    }
}

/// Cholesky factor of `cov + εI`, escalating `ε` along [`JITTER_LADDER`].
pub(crate) fn factor_with_jitter(cov: DMatrix<f64>, t: usize) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = cov.nrows();
    let mut last = 0.0;
    for &eps in &JITTER_LADDER {
        let mut m = cov.clone();
        for i in 0..n {
            m[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok(c);
        }
        last = eps;
    }
    Err(Error::degenerate(t, "covariance factorization failed after jitter", last))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"GPPS";
const SNAPSHOT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode_kernel(out: &mut Vec<u8>, k: &KernelSpec) {
    match k {
        KernelSpec::SquaredExponential { lengthscale } => {
            out.push(0);
            put_f64(out, *lengthscale);
        }
        KernelSpec::Matern { nu, lengthscale } => {
            out.push(1);
            put_f64(out, nu.value());
            put_f64(out, *lengthscale);
        }
        KernelSpec::Linear => out.push(2),
        KernelSpec::Precomputed { table } => {
            out.push(3);
            let n = table.len();
            put_u64(out, n as u64);
            for &id in table.ids() {
                out.extend_from_slice(&id.to_le_bytes());
            }
            for i in 0..n {
                for j in 0..n {
                    put_f64(out, table.get(i, j));
                }
            }
        }
    }
}

fn decode_kernel(r: &mut ByteReader<'_>) -> Result<KernelSpec> {
    match r.u8()? {
        0 => KernelSpec::squared_exponential(r.f64()?),
        1 => {
            let nu = MaternNu::from_value(r.f64()?)?;
            let l = r.f64()?;
            KernelSpec::matern(nu.value(), l)
        }
        2 => Ok(KernelSpec::Linear),
        3 => {
            let n = r.len_prefix()?;
            let ids = (0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
            let values = (0..n * n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            Ok(KernelSpec::precomputed(GramTable::new(ids, values)?))
        }
        tag => Err(Error::parse(None, format!("bad kernel tag {tag}"))),
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::parse(None, "truncated snapshot"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A length that must fit in the remaining buffer.
    fn len_prefix(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > self.buf.len() as u64 {
            return Err(Error::parse(None, "snapshot length field out of range"));
        }
        Ok(v as usize)
    }
}
