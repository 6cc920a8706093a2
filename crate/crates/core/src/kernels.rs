//! Covariance functions over points in `R^d`.
//!
//! Supported families are the squared exponential, the half-integer Matérn
//! kernels (ν ∈ {1/2, 3/2, 5/2}), the linear kernel and a precomputed Gram
//! table addressed by integer point ids. SE and Matérn satisfy `k(x, x) = 1`;
//! a precomputed table is checked for `k(x, x) <= 1` when it is loaded.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the symmetry check on loaded Gram tables.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-9;

/// A point of the decision domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Point(coords))
    }

    /// A one-dimensional point carrying an integer id, used with
    /// precomputed kernels.
    pub fn from_id(id: i64) -> Self {
        Point(vec![id as f64])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Interprets the point as an integer id.
    pub fn as_id(&self) -> Option<i64> {
        match self.0.as_slice() {
            [c] if c.fract() == 0.0 && c.abs() < 9.0e15 => Some(*c as i64),
            _ => None,
        }
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

/// Smoothness of a Matérn kernel. Only half-integer orders with closed
/// forms are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn from_value(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(MaternNu::Half)
        } else if nu == 1.5 {
            Ok(MaternNu::ThreeHalves)
        } else if nu == 2.5 {
            Ok(MaternNu::FiveHalves)
        } else {
            Err(Error::config(format!(
                "Matérn smoothness {nu} is not supported (use 0.5, 1.5 or 2.5)"
            )))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

/// Symmetric kernel table over a fixed set of integer point ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GramTableRaw", into = "GramTableRaw")]
pub struct GramTable {
    ids: Vec<i64>,
    values: Vec<f64>,
    index: HashMap<i64, usize>,
}

#[derive(Serialize, Deserialize)]
struct GramTableRaw {
    ids: Vec<i64>,
    values: Vec<f64>,
}

impl TryFrom<GramTableRaw> for GramTable {
    type Error = Error;

    fn try_from(raw: GramTableRaw) -> Result<Self> {
        GramTable::new(raw.ids, raw.values)
    }
}

impl From<GramTable> for GramTableRaw {
    fn from(g: GramTable) -> Self {
        GramTableRaw {
            ids: g.ids,
            values: g.values,
        }
    }
}

impl GramTable {
    /// Builds a table from ids and a row-major `n x n` matrix.
    ///
    /// Entries must be finite, symmetric within [`GRAM_SYMMETRY_TOL`] (the
    /// stored table is the average of the matrix and its transpose) and the
    /// diagonal must not exceed 1.
    pub fn new(ids: Vec<i64>, mut values: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::parse(None, "empty Gram table"));
        }
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gram table"));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, &id) in ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::parse(None, format!("duplicate point id {id}")));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let a = values[i * n + j];
                let b = values[j * n + i];
                if (a - b).abs() > GRAM_SYMMETRY_TOL {
                    return Err(Error::parse(
                        None,
                        format!(
                            "Gram table not symmetric at ({}, {}): {a} vs {b}",
                            ids[i], ids[j]
                        ),
                    ));
                }
                let avg = 0.5 * (a + b);
                values[i * n + j] = avg;
                values[j * n + i] = avg;
            }
            let d = values[i * n + i];
            if d > 1.0 + 1e-12 {
                return Err(Error::parse(
                    None,
                    format!("diagonal entry {d} for id {} exceeds 1", ids[i]),
                ));
            }
        }
        Ok(GramTable { ids, values, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn position(&self, id: i64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    /// Reads the CSV layout: a header row of point ids (optionally preceded
    /// by a corner label), then one row per id holding the id and its row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::parse(None, "missing Gram header row"))??;
        let rows: Vec<csv::StringRecord> = records.collect::<std::result::Result<_, _>>()?;
        let n = rows.len();
        let header_cells: Vec<&str> = header.iter().collect();
        let id_cells = if header_cells.len() == n + 1 {
            &header_cells[1..]
        } else if header_cells.len() == n {
            &header_cells[..]
        } else {
            return Err(Error::parse(
                None,
                format!(
                    "Gram header has {} cells but there are {n} rows",
                    header_cells.len()
                ),
            ));
        };
        let ids = id_cells
            .iter()
            .map(|c| parse_id(c))
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(n * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n + 1 {
                return Err(Error::parse(
                    None,
                    format!("Gram row {} has {} cells, expected {}", r + 1, row.len(), n + 1),
                ));
            }
            let row_id = parse_id(&row[0])?;
            if row_id != ids[r] {
                return Err(Error::parse(
                    None,
                    format!("Gram row {} has id {row_id}, header says {}", r + 1, ids[r]),
                ));
            }
            for cell in row.iter().skip(1) {
                values.push(
                    cell.parse::<f64>()
                        .map_err(|e| Error::parse(None, format!("bad Gram entry {cell:?}: {e}")))?,
                );
            }
        }
        GramTable::new(ids, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file).map_err(|e| match e {
            Error::Parse { path: None, msg } => Error::parse(Some(path), msg),
            other => other,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let n = self.ids.len();
        let mut header = vec!["id".to_string()];
        header.extend(self.ids.iter().map(|i| i.to_string()));
        wtr.write_record(&header)?;
        for i in 0..n {
            let mut row = vec![self.ids[i].to_string()];
            row.extend((0..n).map(|j| self.get(i, j).to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn parse_id(cell: &str) -> Result<i64> {
    cell.parse::<i64>()
        .map_err(|e| Error::parse(None, format!("bad point id {cell:?}: {e}")))
}

/// A kernel family together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    SquaredExponential { lengthscale: f64 },
    Matern { nu: MaternNu, lengthscale: f64 },
    Linear,
    Precomputed { table: Arc<GramTable> },
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::SquaredExponential { lengthscale } => write!(f, "se(l={lengthscale})"),
            KernelSpec::Matern { nu, lengthscale } => {
                write!(f, "matern(nu={}, l={lengthscale})", nu.value())
            }
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Precomputed { table } => write!(f, "precomputed(n={})", table.len()),
        }
    }
}

impl KernelSpec {
    pub fn squared_exponential(lengthscale: f64) -> Result<Self> {
        check_lengthscale(lengthscale)?;
        Ok(KernelSpec::SquaredExponential { lengthscale })
    }

    pub fn matern(nu: f64, lengthscale: f64) -> Result<Self> {
        check_lengthscale(lengthscale)?;
        Ok(KernelSpec::Matern {
            nu: MaternNu::from_value(nu)?,
            lengthscale,
        })
    }

    pub fn precomputed(table: GramTable) -> Self {
        KernelSpec::Precomputed {
            table: Arc::new(table),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::SquaredExponential { .. } => "squared exponential",
            KernelSpec::Matern { .. } => "Matérn",
            KernelSpec::Linear => "linear",
            KernelSpec::Precomputed { .. } => "precomputed",
        }
    }

    /// True when `k(x, x) <= 1` holds for every point by construction or
    /// by load-time validation.
    pub fn has_bounded_variance(&self) -> bool {
        !matches!(self, KernelSpec::Linear)
    }

    /// Evaluates `k(x, x')`.
    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        if let KernelSpec::Precomputed { table } = self {
            let i = lookup(table, x)?;
            let j = lookup(table, y)?;
            return Ok(table.get(i, j));
        }
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: y.dim(),
            });
        }
        let value = self.eval_coords(x.coords(), y.coords());
        if !value.is_finite() {
            return Err(Error::NonFinite("kernel value"));
        }
        Ok(value)
    }

    /// Unchecked evaluation on raw coordinates of equal length. Not valid
    /// for precomputed tables.
    pub(crate) fn eval_coords(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::SquaredExponential { lengthscale } => {
                let s2 = sq_dist(x, y);
                (-s2 / (2.0 * lengthscale * lengthscale)).exp()
            }
            KernelSpec::Matern { nu, lengthscale } => {
                let r = sq_dist(x, y).sqrt() / lengthscale;
                matern_closed_form(*nu, r)
            }
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Precomputed { .. } => unreachable!("precomputed kernels are index lookups"),
        }
    }

    /// Lipschitz constant `L = sup_x sup_j (d²k/dp_j dq_j)^{1/2}` used by the
    /// per-round discretization.
    pub fn lipschitz_constant(&self, d: usize) -> Result<f64> {
        if d == 0 {
            return Err(Error::config("domain dimension must be at least 1"));
        }
        match self {
            KernelSpec::SquaredExponential { lengthscale } => Ok(1.0 / lengthscale),
            // -k''(0) = ν / (ν - 1) / l² for the half-integer closed forms.
            KernelSpec::Matern { nu, lengthscale } => match nu {
                MaternNu::Half => Err(Error::NoLipschitzConstant("Matérn ν=1/2")),
                MaternNu::ThreeHalves => Ok(3f64.sqrt() / lengthscale),
                MaternNu::FiveHalves => Ok((5.0f64 / 3.0).sqrt() / lengthscale),
            },
            KernelSpec::Linear => Err(Error::NoLipschitzConstant("linear")),
            KernelSpec::Precomputed { .. } => Err(Error::NoLipschitzConstant("precomputed")),
        }
    }
}

fn check_lengthscale(l: f64) -> Result<()> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("lengthscale must be positive, got {l}")))
    }
}

fn lookup(table: &GramTable, p: &Point) -> Result<usize> {
    p.as_id()
        .and_then(|id| table.position(id))
        .ok_or_else(|| Error::UnknownIndex(format!("{:?}", p.coords())))
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Matérn kernel value at scaled distance `r = s / l`.
pub fn matern_closed_form(nu: MaternNu, r: f64) -> f64 {
    match nu {
        MaternNu::Half => (-r).exp(),
        MaternNu::ThreeHalves => {
            let a = 3f64.sqrt() * r;
            (1.0 + a) * (-a).exp()
        }
        MaternNu::FiveHalves => {
            let a = 5f64.sqrt() * r;
            (1.0 + a + a * a / 3.0) * (-a).exp()
        }
    }
}

/// Gram matrix `K[i][j] = k(p_i, p_j)`. The upper triangle is computed and
/// mirrored so the result is exactly symmetric.
pub fn gram(spec: &KernelSpec, points: &[Point]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::config("gram matrix needs at least one point"));
    }
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(&points[i], &points[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn se_values() {
        let k = KernelSpec::squared_exponential(0.2).unwrap();
        assert_eq!(k.eval(&p(&[0.3]), &p(&[0.3])).unwrap(), 1.0);
        assert_abs_diff_eq!(k.eval(&p(&[0.1]), &p(&[0.3])).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.eval(&p(&[0.1]), &p(&[0.3])).unwrap(), 0.606531, epsilon = 1e-6);
    }

    #[test]
    fn matern_at_zero_and_linear_dot() {
        let k = KernelSpec::matern(2.5, 0.7).unwrap();
        assert_eq!(k.eval(&p(&[0.4, 0.1]), &p(&[0.4, 0.1])).unwrap(), 1.0);
        let lin = KernelSpec::Linear;
        assert_eq!(lin.eval(&p(&[1.0, 2.0]), &p(&[3.0, -1.0])).unwrap(), 1.0);
    }

    #[test]
    fn unsupported_matern_order_rejected() {
        assert!(matches!(KernelSpec::matern(2.0, 1.0), Err(Error::Config(_))));
        assert!(KernelSpec::squared_exponential(0.0).is_err());
    }

    #[test]
    fn eval_errors() {
        let k = KernelSpec::squared_exponential(1.0).unwrap();
        assert!(matches!(
            k.eval(&p(&[0.0]), &p(&[0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(Point::new(vec![]).is_err());
        let table = GramTable::new(vec![3, 7], vec![0.9, 0.1, 0.1, 0.8]).unwrap();
        let pk = KernelSpec::precomputed(table);
        assert_eq!(pk.eval(&Point::from_id(7), &Point::from_id(3)).unwrap(), 0.1);
        assert!(matches!(
            pk.eval(&Point::from_id(4), &Point::from_id(3)),
            Err(Error::UnknownIndex(_))
        ));
    }

    #[test]
    fn gram_small_cases() {
        let k = KernelSpec::squared_exponential(0.2).unwrap();
        let g = gram(&k, &[p(&[0.5])]).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        let g = gram(&k, &[p(&[0.5]), p(&[0.5])]).unwrap();
        assert!(g.iter().all(|&v| v == 1.0));
        assert!(gram(&k, &[]).is_err());
    }

    #[test]
    fn lipschitz_values() {
        let se = KernelSpec::squared_exponential(0.2).unwrap();
        assert_abs_diff_eq!(se.lipschitz_constant(1).unwrap(), 5.0, epsilon = 1e-12);
        let se1 = KernelSpec::squared_exponential(1.0).unwrap();
        assert_abs_diff_eq!(se1.lipschitz_constant(3).unwrap(), 1.0, epsilon = 1e-12);
        let table = GramTable::new(vec![0], vec![1.0]).unwrap();
        assert!(matches!(
            KernelSpec::precomputed(table).lipschitz_constant(1),
            Err(Error::NoLipschitzConstant(_))
        ));
        assert!(KernelSpec::Linear.lipschitz_constant(2).is_err());
        assert!(KernelSpec::matern(0.5, 1.0).unwrap().lipschitz_constant(1).is_err());
    }

    #[test]
    fn lipschitz_matches_finite_differences() {
        // d²/dp dq k(p - q) at p = q equals -k''(0) along one coordinate.
        let h = 1e-4;
        for spec in [
            KernelSpec::squared_exponential(0.3).unwrap(),
            KernelSpec::matern(1.5, 0.4).unwrap(),
            KernelSpec::matern(2.5, 0.2).unwrap(),
        ] {
            let k = |u: f64| spec.eval_coords(&[u], &[0.0]);
            let second = (k(h) - 2.0 * k(0.0) + k(-h)) / (h * h);
            let fd = (-second).sqrt();
            let l = spec.lipschitz_constant(1).unwrap();
            assert!((fd - l).abs() / l < 1e-3, "{spec}: fd {fd} vs {l}");
        }
    }

    #[test]
    fn gram_csv_round_trip_and_validation() {
        let table = GramTable::new(vec![1, 2], vec![1.0, 0.25, 0.25, 0.5]).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = GramTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, table);

        // without a corner label, with a tiny asymmetry that gets averaged
        let text = "1,2\n1,1.0,0.3\n2,0.3000000000001,1.0\n";
        let g = GramTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(g.get(0, 1), g.get(1, 0));

        let asym = "id,1,2\n1,1.0,0.3\n2,0.4,1.0\n";
        assert!(GramTable::read_csv(asym.as_bytes()).is_err());
        let big_diag = "id,1,2\n1,1.5,0.3\n2,0.3,1.0\n";
        assert!(GramTable::read_csv(big_diag.as_bytes()).is_err());
        let bad_row_id = "id,1,2\n1,1.0,0.3\n5,0.3,1.0\n";
        assert!(GramTable::read_csv(bad_row_id.as_bytes()).is_err());
    }
}
