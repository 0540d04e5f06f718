//! Dense linear algebra for image-difficulty scoring.
//!
//! A feature matrix holds `P` patch embeddings of dimension `d` (one row per
//! patch). Difficulty scoring needs the spectrum of its centered second
//! moment: flat images concentrate variance in a few directions, cluttered
//! ones spread it out. Both Gram forms of the centered matrix — the `P`×`P`
//! patch form and the `d`×`d` feature form — share their nonzero eigenvalues,
//! so callers are free to decompose whichever is smaller.
//!
//! Eigenvalues come from cyclic Jacobi rotations. For the matrix sizes used
//! here (a few dozen at most) Jacobi is unconditionally stable, needs no
//! pivoting or shifting logic, and converges quadratically once the
//! off-diagonal mass is small; its simplicity also makes it easy to check
//! against an independent solver in the tests.

use std::io::Read;
use std::path::Path;

use crate::error::{DurianError, DurianResult};

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;
/// Convergence target: off-diagonal Frobenius mass relative to the input norm.
pub const OFF_DIAG_TOL: f64 = 1e-10;
/// Allowed relative asymmetry before a matrix is rejected as non-symmetric.
pub const TOL_SYM: f64 = 1e-9;
/// Relative floor (times |trace|) under which tiny negative eigenvalues are
/// treated as rounding noise and clamped to zero.
pub const EIG_CLAMP_REL: f64 = 1e-10;

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting empty shapes,
    /// length mismatches, and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> DurianResult<Self> {
        if rows == 0 || cols == 0 {
            return Err(DurianError::EmptyInput(format!(
                "matrix shape {rows}x{cols} has no entries"
            )));
        }
        if data.len() != rows * cols {
            return Err(DurianError::InvalidInput(format!(
                "matrix shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(DurianError::InvalidInput(format!(
                "matrix entry {bad} is not finite"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> DurianResult<Self> {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> DurianResult<Self> {
        if rows.is_empty() {
            return Err(DurianError::EmptyInput("matrix has no rows".into()));
        }
        let cols = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(DurianError::InvalidInput(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// One row as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row-major backing data.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mean of each column (the mean patch embedding for a feature matrix).
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, m) in means.iter_mut().enumerate() {
                *m += self.get(r, c);
            }
        }
        let inv = 1.0 / self.rows as f64;
        for m in &mut means {
            *m *= inv;
        }
        means
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Which Gram form of the centered feature matrix to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMode {
    /// `P`×`P` form: inner products between centered patches.
    Patch,
    /// `d`×`d` form: the usual feature covariance.
    Feature,
}

/// Centered second moment of a `P`×`d` feature matrix.
///
/// Subtracts the mean patch from every row, then forms either the patch-side
/// or feature-side Gram matrix of the centered rows, scaled by `1/(P-1)`.
/// Both forms are symmetric positive semi-definite and share their nonzero
/// spectrum. Needs at least two patches; a constant matrix yields all zeros.
pub fn centered_second_moment(features: &Matrix, mode: MomentMode) -> DurianResult<Matrix> {
    let p = features.rows();
    let d = features.cols();
    if p < 2 {
        return Err(DurianError::DegenerateInput(format!(
            "centering needs at least 2 patches, got {p}"
        )));
    }
    let means = features.column_means();
    // Centered rows, materialized once; both Gram forms read from this.
    let mut centered = vec![0.0; p * d];
    for r in 0..p {
        for c in 0..d {
            centered[r * d + c] = features.get(r, c) - means[c];
        }
    }
    let scale = 1.0 / (p as f64 - 1.0);
    match mode {
        MomentMode::Patch => {
            let mut out = vec![0.0; p * p];
            for i in 0..p {
                for j in i..p {
                    let mut dot = 0.0;
                    for c in 0..d {
                        dot += centered[i * d + c] * centered[j * d + c];
                    }
                    let v = dot * scale;
                    out[i * p + j] = v;
                    out[j * p + i] = v;
                }
            }
            Matrix::new(p, p, out)
        }
        MomentMode::Feature => {
            let mut out = vec![0.0; d * d];
            for a in 0..d {
                for b in a..d {
                    let mut dot = 0.0;
                    for r in 0..p {
                        dot += centered[r * d + a] * centered[r * d + b];
                    }
                    let v = dot * scale;
                    out[a * d + b] = v;
                    out[b * d + a] = v;
                }
            }
            Matrix::new(d, d, out)
        }
    }
}

/// Eigenvalues of a symmetric matrix, sorted descending.
///
/// Values that are negative by no more than `EIG_CLAMP_REL`·|trace| are
/// rounding noise from the decomposition of a positive semi-definite input
/// and are clamped to exactly zero; genuinely negative eigenvalues pass
/// through untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Wraps a set of eigenvalues, sorting them into descending order.
    pub fn new(mut eigenvalues: Vec<f64>) -> DurianResult<Self> {
        if eigenvalues.is_empty() {
            return Err(DurianError::EmptyInput("spectrum has no eigenvalues".into()));
        }
        if let Some(bad) = eigenvalues.iter().position(|v| !v.is_finite()) {
            return Err(DurianError::InvalidInput(format!(
                "eigenvalue {bad} is not finite"
            )));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum { eigenvalues })
    }

    pub fn values(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.eigenvalues
    }
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
///
/// The matrix must be square and symmetric to within `TOL_SYM` relative to
/// its largest entry. Rotations sweep the strict upper triangle in row order,
/// zeroing one off-diagonal pair at a time, until the off-diagonal Frobenius
/// mass falls below `OFF_DIAG_TOL` times the input's Frobenius norm (at most
/// `MAX_SWEEPS` sweeps). Eigenvalue sums match the trace to working accuracy
/// because every rotation preserves it exactly.
pub fn eigvals_symmetric(matrix: &Matrix) -> DurianResult<Spectrum> {
    let n = matrix.rows();
    if n != matrix.cols() {
        return Err(DurianError::InvalidInput(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    let scale = matrix.max_abs().max(1.0);
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((matrix.get(i, j) - matrix.get(j, i)).abs());
        }
    }
    if max_asym > TOL_SYM * scale {
        return Err(DurianError::InvalidInput(format!(
            "matrix is not symmetric: max |a_ij - a_ji| = {max_asym:.3e} exceeds tolerance"
        )));
    }

    // Work on a symmetrized copy so sub-tolerance asymmetry cannot bias the sweep.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (matrix.get(i, j) + matrix.get(j, i));
        }
    }

    let fro = matrix.frobenius();
    let target = OFF_DIAG_TOL * fro;
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        s.sqrt()
    };

    let mut off = off_norm(&a);
    let mut sweeps = 0;
    while off > target {
        if sweeps == MAX_SWEEPS {
            return Err(DurianError::NoConvergence {
                sweeps: MAX_SWEEPS,
                off,
            });
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                // Rotation angle that zeroes a_pq: tan(2θ) = 2·a_pq/(a_qq - a_pp).
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    let new_ip = c * aip - s * aiq;
                    let new_iq = s * aip + c * aiq;
                    a[i * n + p] = new_ip;
                    a[p * n + i] = new_ip;
                    a[i * n + q] = new_iq;
                    a[q * n + i] = new_iq;
                }
            }
        }
        sweeps += 1;
        off = off_norm(&a);
    }

    let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
    let clamp = EIG_CLAMP_REL * trace.abs();
    let mut eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    for v in &mut eigenvalues {
        if *v < 0.0 && *v >= -clamp {
            *v = 0.0;
        }
    }
    Spectrum::new(eigenvalues)
}

/// Shannon entropy of the normalized eigenvalue distribution, in nats.
///
/// Weights are formed over the strictly positive eigenvalues; zero (and
/// sub-floor) entries carry no mass and contribute nothing, following the
/// `0·log 0 = 0` convention. A spectrum with no positive eigenvalues has no
/// distribution to measure and is reported as an error so callers can decide
/// what a constant input should mean.
pub fn spectral_entropy(spectrum: &Spectrum) -> DurianResult<f64> {
    let total: f64 = spectrum.values().iter().filter(|v| **v > 0.0).sum();
    if total <= 0.0 {
        return Err(DurianError::DegenerateSpectrum);
    }
    let mut entropy = 0.0;
    for &v in spectrum.values() {
        if v > 0.0 {
            let p = v / total;
            entropy -= p * p.ln();
        }
    }
    Ok(entropy.max(0.0))
}

/// Reads a feature matrix from disk.
///
/// Files ending in `.f64` are raw little-endian binary: a `u32` patch count,
/// a `u32` feature dimension, then `P·d` 64-bit floats in row-major order.
/// Anything else is text: a header line `P d` followed by `P·d` whitespace-
/// separated reals (line breaks are free-form after the header).
pub fn read_feature_matrix(path: &Path) -> DurianResult<Matrix> {
    let is_binary = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("f64"))
        .unwrap_or(false);
    if is_binary {
        read_feature_matrix_binary(path)
    } else {
        read_feature_matrix_text(path)
    }
}

fn read_feature_matrix_text(path: &Path) -> DurianResult<Matrix> {
    let content = std::fs::read_to_string(path).map_err(|e| DurianError::io(path, e))?;
    let mut lines = content.lines().enumerate();
    let (header_idx, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| DurianError::malformed(path, 1, "empty file, expected `P d` header"))?;
    let mut parts = header.split_whitespace();
    let parse_dim = |tok: Option<&str>, name: &str| -> DurianResult<usize> {
        tok.ok_or_else(|| {
            DurianError::malformed(path, header_idx + 1, format!("header is missing {name}"))
        })?
        .parse::<usize>()
        .map_err(|_| {
            DurianError::malformed(path, header_idx + 1, format!("header {name} is not an integer"))
        })
    };
    let p = parse_dim(parts.next(), "patch count P")?;
    let d = parse_dim(parts.next(), "feature dimension d")?;
    if parts.next().is_some() {
        return Err(DurianError::malformed(
            path,
            header_idx + 1,
            "header must be exactly `P d`",
        ));
    }
    let mut values = Vec::with_capacity(p * d);
    for (idx, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                DurianError::malformed(path, idx + 1, format!("`{tok}` is not a real number"))
            })?;
            values.push(v);
        }
    }
    if values.len() != p * d {
        return Err(DurianError::malformed(
            path,
            content.lines().count(),
            format!("expected {} values for {p}x{d}, found {}", p * d, values.len()),
        ));
    }
    Matrix::new(p, d, values).map_err(|e| match e {
        DurianError::InvalidInput(msg) | DurianError::EmptyInput(msg) => {
            DurianError::malformed(path, header_idx + 1, msg)
        }
        other => other,
    })
}

fn read_feature_matrix_binary(path: &Path) -> DurianResult<Matrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| DurianError::io(path, e))?;
    if bytes.len() < 8 {
        return Err(DurianError::malformed(
            path,
            0,
            "binary matrix is shorter than its 8-byte dimension prefix",
        ));
    }
    let p = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + p * d * 8;
    if bytes.len() != expected {
        return Err(DurianError::malformed(
            path,
            0,
            format!(
                "binary matrix for {p}x{d} must be {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(p * d);
    for chunk in bytes[8..].chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Matrix::new(p, d, values).map_err(|e| match e {
        DurianError::InvalidInput(msg) | DurianError::EmptyInput(msg) => {
            DurianError::malformed(path, 0, msg)
        }
        other => other,
    })
}

/// Writes a feature matrix in the text format accepted by [`read_feature_matrix`].
pub fn write_feature_matrix_text(path: &Path, matrix: &Matrix) -> DurianResult<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", matrix.rows(), matrix.cols());
    for r in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(r).iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    std::fs::write(path, out).map_err(|e| DurianError::io(path, e))
}

/// Writes a feature matrix in the raw `.f64` binary layout.
pub fn write_feature_matrix_binary(path: &Path, matrix: &Matrix) -> DurianResult<()> {
    let mut bytes = Vec::with_capacity(8 + matrix.data().len() * 8);
    bytes.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for v in matrix.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| DurianError::io(path, e))
}
