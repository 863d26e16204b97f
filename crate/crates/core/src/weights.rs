//! Spatial weight matrices.
//!
//! A [`WeightMatrix`] is immutable once built. Contiguity matrices are stored
//! sparse (compressed rows); inverse-distance matrices carry no cutoff radius
//! and are therefore fully dense, so they are stored dense. Both densities sit
//! behind the same interface.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Margin kept between the admissible rho interval and the reciprocal
/// eigenvalues, and half-width deficit of the fallback interval.
pub const RHO_BOUND_EPS: f64 = 1e-6;

/// Compressed-row storage for sparse weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from per-row `(col, value)` lists; zeros are dropped and columns sorted.
    pub fn from_rows(n: usize, rows: Vec<BTreeMap<usize, T>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                if v != T::zero() {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage<T> {
    Sparse(CsrMatrix<T>),
    Dense(DMatrix<T>),
}

/// Eigen-structure of a weight matrix as used by the rho search and the
/// Jacobian term.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub rho_lo: T,
    pub rho_hi: T,
    /// Real eigenvalues, available only when the pre-standardization matrix
    /// was symmetric.
    pub eigenvalues: Option<Vec<T>>,
}

/// n x n nonnegative, hollow spatial weight matrix.
#[derive(Debug, Clone)]
pub struct WeightMatrix<T: Scalar> {
    n: usize,
    storage: Storage<T>,
    standardized: bool,
    symmetric_base: bool,
    /// Row sums of the raw matrix; `W_std = D^{-1} C`. Used for the symmetric
    /// similarity transform `D^{1/2} W D^{-1/2}`.
    base_row_sums: Option<Vec<T>>,
    spectrum: OnceLock<Spectrum<T>>,
}

impl<T: Scalar> PartialEq for WeightMatrix<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.storage == other.storage
            && self.standardized == other.standardized
            && self.symmetric_base == other.symmetric_base
    }
}

impl<T: Scalar> WeightMatrix<T> {
    /// Raw (unstandardized) matrix from sparse rows. Validates hollowness,
    /// nonnegativity and finiteness.
    pub fn from_sparse_rows(n: usize, rows: Vec<BTreeMap<usize, T>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                what: "weight rows",
                expected: n,
                found: rows.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            for (&j, &v) in row {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, n });
                }
                check_entry(i, j, v)?;
            }
        }
        let storage = Storage::Sparse(CsrMatrix::from_rows(n, rows));
        Ok(Self::raw(n, storage))
    }

    /// Raw (unstandardized) matrix from a dense array.
    pub fn from_dense(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                what: "weight matrix columns",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                check_entry(i, j, m[(i, j)])?;
            }
        }
        Ok(Self::raw(n, Storage::Dense(m)))
    }

    fn raw(n: usize, storage: Storage<T>) -> Self {
        Self {
            n,
            storage,
            standardized: false,
            symmetric_base: false,
            base_row_sums: None,
            spectrum: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn symmetric_base(&self) -> bool {
        self.symmetric_base
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn storage(&self) -> &Storage<T> {
        &self.storage
    }

    /// Entry `w_ij`.
    pub fn get(&self, i: usize, j: usize) -> T {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Sparse(s) => s
                .row(i)
                .find(|&(c, _)| c == j)
                .map_or(T::zero(), |(_, v)| v),
        }
    }

    /// Nonzero entries of row `i`.
    pub fn row_entries(&self, i: usize) -> Vec<(usize, T)> {
        match &self.storage {
            Storage::Dense(m) => (0..self.n)
                .filter_map(|j| {
                    let v = m[(i, j)];
                    (v != T::zero()).then_some((j, v))
                })
                .collect(),
            Storage::Sparse(s) => s.row(i).collect(),
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        match &self.storage {
            Storage::Dense(m) => m.row_iter().map(|r| r.sum()).collect(),
            Storage::Sparse(s) => (0..self.n)
                .map(|i| s.row(i).fold(T::zero(), |acc, (_, v)| acc + v))
                .collect(),
        }
    }

    /// Number of neighbors (nonzero entries) per row.
    pub fn neighbor_counts(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.row_entries(i).len()).collect()
    }

    /// `W x`.
    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.n, "weight matrix / vector size mismatch");
        match &self.storage {
            Storage::Dense(m) => m * x,
            Storage::Sparse(s) => DVector::from_iterator(
                self.n,
                (0..self.n).map(|i| s.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j])),
            ),
        }
    }

    /// `W M` for a dense right-hand side.
    pub fn mul_mat(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.n, "weight matrix / matrix size mismatch");
        match &self.storage {
            Storage::Dense(m) => m * x,
            Storage::Sparse(s) => {
                let mut out = DMatrix::zeros(self.n, x.ncols());
                for i in 0..self.n {
                    for (j, v) in s.row(i) {
                        for c in 0..x.ncols() {
                            out[(i, c)] += v * x[(j, c)];
                        }
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(s) => {
                let mut m = DMatrix::zeros(self.n, self.n);
                for i in 0..self.n {
                    for (j, v) in s.row(i) {
                        m[(i, j)] = v;
                    }
                }
                m
            }
        }
    }

    /// Sum of all weights, `S0`.
    pub fn total_weight(&self) -> T {
        self.row_sums().into_iter().fold(T::zero(), |a, b| a + b)
    }

    fn is_symmetric(&self) -> bool {
        let tol = T::lit(1e-12);
        (0..self.n).all(|i| {
            self.row_entries(i)
                .into_iter()
                .all(|(j, v)| (self.get(j, i) - v).abs() <= tol * (T::one() + v.abs()))
        })
    }

    /// Dense symmetric matrix similar to the standardized `W`, if the base
    /// matrix was symmetric.
    pub fn symmetrized(&self) -> Option<DMatrix<T>> {
        if !(self.standardized && self.symmetric_base) {
            return None;
        }
        let d = self.base_row_sums.as_ref()?;
        let mut s = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row_entries(i) {
                s[(i, j)] = v * (d[i] / d[j]).sqrt();
            }
        }
        // Clean rounding asymmetry.
        let st = s.transpose();
        Some((s + st) * T::lit(0.5))
    }

    /// Cached spectrum; computed on first use.
    pub fn spectrum(&self) -> &Spectrum<T> {
        self.spectrum.get_or_init(|| compute_spectrum(self))
    }
}

fn check_entry<T: Scalar>(i: usize, j: usize, v: T) -> Result<()> {
    if !v.is_finite_value() || v < T::zero() {
        return Err(Error::InvalidWeight {
            row: i,
            col: j,
            value: v.as_f64(),
        });
    }
    if i == j && v != T::zero() {
        return Err(Error::SelfLoop(i));
    }
    Ok(())
}

fn compute_spectrum<T: Scalar>(w: &WeightMatrix<T>) -> Spectrum<T> {
    let eps = T::lit(RHO_BOUND_EPS);
    let fallback = Spectrum {
        rho_lo: -T::one() + eps,
        rho_hi: T::one() - eps,
        eigenvalues: None,
    };
    let Some(s) = w.symmetrized() else {
        return fallback;
    };
    let eig = SymmetricEigen::new(s);
    let values: Vec<T> = eig.eigenvalues.iter().copied().collect();
    let lmin = values.iter().copied().fold(T::max_value().unwrap(), T::min);
    let lmax = values.iter().copied().fold(T::min_value().unwrap(), T::max);
    let rho_lo = if lmin < T::zero() {
        T::one() / lmin + eps
    } else {
        fallback.rho_lo
    };
    let rho_hi = if lmax > T::zero() {
        T::one() / lmax - eps
    } else {
        fallback.rho_hi
    };
    Spectrum {
        rho_lo,
        rho_hi,
        eigenvalues: Some(values),
    }
}

/// Admissible rho interval `(1/λ_min, 1/λ_max)` shrunk by [`RHO_BOUND_EPS`];
/// the open unit interval when the eigenvalues are not real by construction.
pub fn eigen_bounds<T: Scalar>(w: &WeightMatrix<T>) -> (T, T) {
    let s = w.spectrum();
    (s.rho_lo, s.rho_hi)
}

/// Divides each row by its sum.
///
/// Already-standardized input is returned unchanged. Rows without neighbors
/// are rejected.
pub fn row_standardize<T: Scalar>(w: &WeightMatrix<T>) -> Result<WeightMatrix<T>> {
    if w.standardized {
        return Ok(w.clone());
    }
    let sums = w.row_sums();
    if let Some(i) = sums.iter().position(|&s| s <= T::zero()) {
        return Err(Error::IsolatedUnit(i));
    }
    let symmetric_base = w.is_symmetric();
    let storage = match &w.storage {
        Storage::Dense(m) => {
            let mut out = m.clone();
            for (i, mut row) in out.row_iter_mut().enumerate() {
                row /= sums[i];
            }
            Storage::Dense(out)
        }
        Storage::Sparse(s) => {
            let rows = (0..w.n)
                .map(|i| s.row(i).map(|(j, v)| (j, v / sums[i])).collect())
                .collect();
            Storage::Sparse(CsrMatrix::from_rows(w.n, rows))
        }
    };
    Ok(WeightMatrix {
        n: w.n,
        storage,
        standardized: true,
        symmetric_base,
        base_row_sums: Some(sums),
        spectrum: OnceLock::new(),
    })
}

/// Rook (edge-sharing) contiguity on a `rows x cols` lattice, row-standardized.
/// Unit `(r, c)` has index `r * cols + c`.
pub fn build_rook_grid<T: Scalar>(rows: usize, cols: usize) -> Result<WeightMatrix<T>> {
    let n = rows * cols;
    if n < 2 {
        return Err(Error::TooFewUnits(n));
    }
    let mut adj = vec![BTreeMap::new(); n];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if r > 0 {
                adj[i].insert(i - cols, T::one());
            }
            if r + 1 < rows {
                adj[i].insert(i + cols, T::one());
            }
            if c > 0 {
                adj[i].insert(i - 1, T::one());
            }
            if c + 1 < cols {
                adj[i].insert(i + 1, T::one());
            }
        }
    }
    row_standardize(&WeightMatrix::from_sparse_rows(n, adj)?)
}

/// `w_ij = 1 / d_ij^2` over all pairs, row-standardized. No cutoff radius is
/// applied, so the result is dense.
pub fn build_inverse_distance_squared<T: Scalar>(points: &[(T, T)]) -> Result<WeightMatrix<T>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewUnits(n));
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = points[i].0 - points[j].0;
            let dy = points[i].1 - points[j].1;
            let d2 = dx * dx + dy * dy;
            if d2 <= T::zero() {
                return Err(Error::DuplicatePoint { first: i, second: j });
            }
            let w = T::one() / d2;
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
    }
    row_standardize(&WeightMatrix::from_dense(m)?)
}

/// Parsed adjacency-list document.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyList {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl AdjacencyList {
    /// Parses the line format: `n=<count>` followed by `<i> <j> [weight]`
    /// lines with 0-based indices. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            if n.is_none() {
                let count = line
                    .strip_prefix("n=")
                    .ok_or_else(|| parse_err(format!("expected `n=<count>`, got `{line}`")))?;
                n = Some(
                    count
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad count: {e}")))?,
                );
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(parse_err(format!("expected `<i> <j> [weight]`, got `{line}`")));
            }
            let i = fields[0]
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad index `{}`: {e}", fields[0])))?;
            let j = fields[1]
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad index `{}`: {e}", fields[1])))?;
            let w = match fields.get(2) {
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("bad weight `{s}`: {e}")))?,
                None => 1.0,
            };
            edges.push((i, j, w));
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            message: "missing `n=<count>` header".into(),
        })?;
        Ok(Self { n, edges })
    }
}

/// Symmetric matrix from an edge list (weight 1 unless given), row-standardized.
pub fn load_adjacency<T: Scalar>(adj: &AdjacencyList) -> Result<WeightMatrix<T>> {
    let n = adj.n;
    if n < 2 {
        return Err(Error::TooFewUnits(n));
    }
    let mut rows: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); n];
    for &(i, j, w) in &adj.edges {
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::InvalidWeight {
                row: i,
                col: j,
                value: w,
            });
        }
        let w = T::lit(w);
        for (a, b) in [(i, j), (j, i)] {
            if let Some(&prev) = rows[a].get(&b) {
                if prev != w {
                    return Err(Error::ConflictingEdge(i, j));
                }
            }
            rows[a].insert(b, w);
        }
    }
    row_standardize(&WeightMatrix::from_sparse_rows(n, rows)?)
}

/// Structured description of how to build a weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    GridRook {
        rows: usize,
        cols: usize,
    },
    InverseDistanceSquared {
        /// Inline coordinates.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<[f64; 2]>>,
        /// CSV file with `x,y` columns, relative to the document.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
    Adjacency {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edges: Option<Vec<(usize, usize)>>,
    },
}

impl WeightSpec {
    /// Builds the matrix, resolving relative file paths against `base_dir`.
    pub fn build<T: Scalar>(&self, base_dir: &Path) -> Result<WeightMatrix<T>> {
        match self {
            WeightSpec::GridRook { rows, cols } => build_rook_grid(*rows, *cols),
            WeightSpec::InverseDistanceSquared { points, path } => {
                let pts = match (points, path) {
                    (Some(p), None) => p.clone(),
                    (None, Some(path)) => read_points(&base_dir.join(path))?,
                    _ => {
                        return Err(Error::InvalidArgument(
                            "inverse_distance_squared needs exactly one of `points` or `path`".into(),
                        ))
                    }
                };
                let pts: Vec<(T, T)> = pts.iter().map(|p| (T::lit(p[0]), T::lit(p[1]))).collect();
                build_inverse_distance_squared(&pts)
            }
            WeightSpec::Adjacency { path, n, edges } => {
                let adj = match (path, n, edges) {
                    (Some(path), None, None) => {
                        let text = std::fs::read_to_string(base_dir.join(path)).map_err(|e| {
                            Error::InvalidArgument(format!("cannot read adjacency `{path}`: {e}"))
                        })?;
                        AdjacencyList::parse(&text)?
                    }
                    (None, Some(n), Some(edges)) => AdjacencyList {
                        n: *n,
                        edges: edges.iter().map(|&(i, j)| (i, j, 1.0)).collect(),
                    },
                    _ => {
                        return Err(Error::InvalidArgument(
                            "adjacency needs either `path` or both `n` and `edges`".into(),
                        ))
                    }
                };
                load_adjacency(&adj)
            }
        }
    }
}

/// Reads `x,y` coordinates from a headered CSV-like file (comma or whitespace
/// separated; a header line is skipped when it does not parse as numbers).
pub fn read_points(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read coordinates `{}`: {e}", path.display()))
    })?;
    parse_points(&text)
}

pub fn parse_points(text: &str) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().take(2).map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 2 => out.push([v[0], v[1]]),
            _ if out.is_empty() && lineno == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected `x,y`, got `{line}`"),
                })
            }
        }
    }
    Ok(out)
}
