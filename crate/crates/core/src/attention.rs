//! Scaled dot-product attention: a reference kernel that materializes the
//! full score matrix and a tiled kernel built on the online-softmax
//! recurrence.
//!
//! The tiled kernel walks K/V in column tiles. For every query row it keeps
//! a running maximum `m`, a normalizer `l` and an unnormalized output
//! accumulator. When a new tile raises the maximum from `m` to `m'`, the old
//! normalizer and accumulator are rescaled by `exp(m - m')` before the
//! tile's contributions are added, so the final `acc / l` equals the exact
//! softmax-weighted sum.

use std::fmt::{self, Debug, Display, LowerExp};
use std::time::Instant;

use num_traits::Float;
use rand_core::Rng;
use thiserror::Error;

use crate::shuffle;

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyDimensions { rows: usize, cols: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid attention config: {0}")]
    Config(String),
}

/// Element type the kernels run in.
pub trait Scalar: Float + Debug + Display + LowerExp + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense row-major matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, AttentionError> {
        if rows == 0 || cols == 0 {
            return Err(AttentionError::EmptyDimensions { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(AttentionError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(AttentionError::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, AttentionError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AttentionError::Config("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self, AttentionError> {
        Self::new(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self, AttentionError> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, AttentionError> {
        if self.cols != other.rows {
            return Err(AttentionError::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = vec![T::zero(); self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// Rows reordered so that output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let data = perm.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Self {
            rows: perm.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T, AttentionError> {
        if self.shape() != other.shape() {
            return Err(AttentionError::Shape {
                op: "max_abs_diff",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| U::from(x).unwrap_or_else(U::zero))
                .collect(),
        }
    }
}

impl Matrix<f64> {
    /// Entries drawn uniformly from `[lo, hi)` with the seeded generator.
    pub fn random(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut shuffle::SeededRng) -> Result<Self, AttentionError> {
        let data = (0..rows * cols)
            .map(|_| {
                let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                lo + (hi - lo) * unit
            })
            .collect();
        Self::new(rows, cols, data)
    }
}

impl<T: Scalar> fmt::Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let cells: Vec<String> = self.row(r).iter().map(|x| format!("{x:.6}")).collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub d_k: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
}

impl AttentionConfig {
    pub fn new(d_k: usize, tile_rows: usize, tile_cols: usize) -> Result<Self, AttentionError> {
        if d_k == 0 || tile_rows == 0 || tile_cols == 0 {
            return Err(AttentionError::Config(format!(
                "d_k and tile sizes must be >= 1 (d_k={d_k}, tiles={tile_rows}x{tile_cols})"
            )));
        }
        Ok(Self {
            d_k,
            tile_rows,
            tile_cols,
        })
    }
}

/// Instrumentation reported by the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelStats {
    /// Largest number of attention scores held in memory at once.
    pub peak_score_elems: usize,
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = &mut out.data[r * out.cols..(r + 1) * out.cols];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum = sum + *x;
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
    out
}

/// `Q = X W_q`, `K = X W_k`, `V = X W_v`.
pub fn project_qkv<T: Scalar>(
    x: &Matrix<T>,
    w_q: &Matrix<T>,
    w_k: &Matrix<T>,
    w_v: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>), AttentionError> {
    Ok((x.matmul(w_q)?, x.matmul(w_k)?, x.matmul(w_v)?))
}

fn check_shapes<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>, d_k: usize) -> Result<(), AttentionError> {
    if q.cols != k.cols {
        return Err(AttentionError::Shape {
            op: "attention(q, k)",
            left: q.shape(),
            right: k.shape(),
        });
    }
    if k.rows != v.rows {
        return Err(AttentionError::Shape {
            op: "attention(k, v)",
            left: k.shape(),
            right: v.shape(),
        });
    }
    if d_k == 0 {
        return Err(AttentionError::Config("d_k must be >= 1".into()));
    }
    Ok(())
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn sqrt_dk<T: Scalar>(d_k: usize) -> T {
    T::from(d_k).unwrap_or_else(T::one).sqrt()
}

/// `softmax(Q K^T / sqrt(d_k)) V`, materializing the full score matrix.
pub fn naive_attention<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>, d_k: usize) -> Result<Matrix<T>, AttentionError> {
    naive_attention_with_stats(q, k, v, d_k).map(|(m, _)| m)
}

pub fn naive_attention_with_stats<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    d_k: usize,
) -> Result<(Matrix<T>, KernelStats), AttentionError> {
    check_shapes(q, k, v, d_k)?;
    let scale = sqrt_dk::<T>(d_k);
    let mut scores = Vec::with_capacity(q.rows * k.rows);
    for i in 0..q.rows {
        for j in 0..k.rows {
            scores.push(dot(q.row(i), k.row(j)) / scale);
        }
    }
    let stats = KernelStats {
        peak_score_elems: scores.len(),
    };
    let probs = softmax_rows(&Matrix {
        rows: q.rows,
        cols: k.rows,
        data: scores,
    });
    Ok((probs.matmul(v)?, stats))
}

/// Exact attention computed tile by tile with the online-softmax recurrence.
pub fn tiled_attention<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    config: &AttentionConfig,
) -> Result<Matrix<T>, AttentionError> {
    tiled_attention_with_stats(q, k, v, config).map(|(m, _)| m)
}

pub fn tiled_attention_with_stats<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    config: &AttentionConfig,
) -> Result<(Matrix<T>, KernelStats), AttentionError> {
    check_shapes(q, k, v, config.d_k)?;
    if config.tile_rows == 0 || config.tile_cols == 0 {
        return Err(AttentionError::Config("tile sizes must be >= 1".into()));
    }
    let scale = sqrt_dk::<T>(config.d_k);
    let (nq, nk, dv) = (q.rows, k.rows, v.cols);
    let tr = config.tile_rows.min(nq);
    let tc = config.tile_cols.min(nk);

    // The only score storage: one tr x tc tile, reused.
    let mut scores = vec![T::zero(); tr * tc];
    let mut running_max = vec![T::neg_infinity(); tr];
    let mut normalizer = vec![T::zero(); tr];
    let mut acc = vec![T::zero(); tr * dv];
    let mut out = vec![T::zero(); nq * dv];

    for r0 in (0..nq).step_by(tr) {
        let rows = tr.min(nq - r0);
        running_max.fill(T::neg_infinity());
        normalizer.fill(T::zero());
        acc.fill(T::zero());

        for c0 in (0..nk).step_by(tc) {
            let cols = tc.min(nk - c0);
            for i in 0..rows {
                for j in 0..cols {
                    scores[i * tc + j] = dot(q.row(r0 + i), k.row(c0 + j)) / scale;
                }
            }
            for i in 0..rows {
                let tile_row = &scores[i * tc..i * tc + cols];
                let tile_max = tile_row.iter().copied().fold(T::neg_infinity(), T::max);
                let new_max = running_max[i].max(tile_max);
                let rescale = (running_max[i] - new_max).exp();
                let acc_row = &mut acc[i * dv..(i + 1) * dv];
                normalizer[i] = normalizer[i] * rescale;
                for a in acc_row.iter_mut() {
                    *a = *a * rescale;
                }
                for (j, &s) in tile_row.iter().enumerate() {
                    let p = (s - new_max).exp();
                    normalizer[i] = normalizer[i] + p;
                    for (a, &x) in acc_row.iter_mut().zip(v.row(c0 + j)) {
                        *a = *a + p * x;
                    }
                }
                running_max[i] = new_max;
            }
        }

        for i in 0..rows {
            let dst = &mut out[(r0 + i) * dv..(r0 + i + 1) * dv];
            for (o, &a) in dst.iter_mut().zip(&acc[i * dv..(i + 1) * dv]) {
                *o = a / normalizer[i];
            }
        }
    }

    let stats = KernelStats {
        peak_score_elems: scores.len(),
    };
    Ok((
        Matrix {
            rows: nq,
            cols: dv,
            data: out,
        },
        stats,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Naive,
    Tiled,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Naive => "naive",
            Kernel::Tiled => "tiled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub repeats: usize,
    pub seed: u64,
    pub precision: Precision,
    /// When false, `wall_ns` is reported as 0 so the report is reproducible.
    pub timing: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repeats: 3,
            seed: 0,
            precision: Precision::F64,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kernel: Kernel,
    pub n: usize,
    pub d: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub wall_ns: u128,
    pub peak_buffer_elems: usize,
    pub max_abs_diff: f64,
}

pub const BENCH_HEADER: &str = "kernel,N,d,tile_rows,tile_cols,wall_ns,peak_buffer_elems,max_abs_diff";

impl BenchRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:e}",
            self.kernel,
            self.n,
            self.d,
            self.tile_rows,
            self.tile_cols,
            self.wall_ns,
            self.peak_buffer_elems,
            self.max_abs_diff
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

fn timed<R>(repeats: usize, timing: bool, mut f: impl FnMut() -> R) -> (R, u128) {
    let mut best = u128::MAX;
    let mut result = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let r = f();
        best = best.min(start.elapsed().as_nanos());
        result = Some(r);
    }
    let r = result.expect("at least one repeat");
    (r, if timing { best } else { 0 })
}

fn bench_size<T: Scalar>(
    n: usize,
    d: usize,
    tiles: &[(usize, usize)],
    opts: &BenchOptions,
    out: &mut Vec<BenchRow>,
) -> Result<(), AttentionError> {
    let mut rng = shuffle::seeded_rng(opts.seed ^ ((n as u64) << 32 | d as u64));
    let q = Matrix::random(n, d, -3.0, 3.0, &mut rng)?.cast::<T>();
    let k = Matrix::random(n, d, -3.0, 3.0, &mut rng)?.cast::<T>();
    let v = Matrix::random(n, d, -3.0, 3.0, &mut rng)?.cast::<T>();

    let (naive, wall) = timed(opts.repeats, opts.timing, || naive_attention_with_stats(&q, &k, &v, d));
    let (reference, stats) = naive?;
    out.push(BenchRow {
        kernel: Kernel::Naive,
        n,
        d,
        tile_rows: n,
        tile_cols: n,
        wall_ns: wall,
        peak_buffer_elems: stats.peak_score_elems,
        max_abs_diff: 0.0,
    });
    for &(tile_rows, tile_cols) in tiles {
        let config = AttentionConfig::new(d, tile_rows, tile_cols)?;
        let (tiled, wall) = timed(opts.repeats, opts.timing, || tiled_attention_with_stats(&q, &k, &v, &config));
        let (result, stats) = tiled?;
        let diff = result.max_abs_diff(&reference)?;
        out.push(BenchRow {
            kernel: Kernel::Tiled,
            n,
            d,
            tile_rows,
            tile_cols,
            wall_ns: wall,
            peak_buffer_elems: stats.peak_score_elems,
            max_abs_diff: diff.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Times both kernels on seeded random `N x d` inputs.
///
/// For every size the report holds one `naive` baseline row followed by one
/// `tiled` row per tile shape, whose `max_abs_diff` is measured against the
/// baseline output.
pub fn attention_bench(
    sizes: &[(usize, usize)],
    tiles: &[(usize, usize)],
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>, AttentionError> {
    let mut rows = Vec::with_capacity(sizes.len() * (tiles.len() + 1));
    for &(n, d) in sizes {
        if n == 0 || d == 0 {
            return Err(AttentionError::EmptyDimensions { rows: n, cols: d });
        }
        match opts.precision {
            Precision::F64 => bench_size::<f64>(n, d, tiles, opts, &mut rows)?,
            Precision::F32 => bench_size::<f32>(n, d, tiles, opts, &mut rows)?,
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matrix_validation() {
        assert!(matches!(
            Matrix::<f64>::new(0, 2, vec![]),
            Err(AttentionError::EmptyDimensions { .. })
        ));
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0]),
            Err(AttentionError::DataLength { .. })
        ));
        assert_eq!(
            Matrix::new(2, 2, vec![0.0, 1.0, f64::NAN, 0.0]),
            Err(AttentionError::NonFinite { row: 1, col: 0 })
        );
        assert!(Matrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&m(&[&[2.0, 2.0, 2.0, 2.0]]));
        assert!(s.data().iter().all(|&x| (x - 0.25).abs() < 1e-15));

        let s = softmax_rows(&m(&[&[0.0, 3f64.ln()]]));
        assert!((s.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);

        let s = softmax_rows(&m(&[&[0.0, 1000.0, -5.0]]));
        assert!(s.data().iter().all(|x| x.is_finite()));
        assert!((s.get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn project_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 4.0]]);
        let id = Matrix::identity(2).unwrap();
        let (q, _, _) = project_qkv(&x, &id, &id, &id).unwrap();
        assert_eq!(q, x);

        let z = Matrix::zeros(3, 2).unwrap();
        let (q, _, _) = project_qkv(&z, &id, &id, &id).unwrap();
        assert_eq!(q, z);

        // Hand multiplication with W = [[1, 2], [0, -1]].
        let w = m(&[&[1.0, 2.0], &[0.0, -1.0]]);
        let (q, _, v) = project_qkv(&x, &w, &id, &w).unwrap();
        let expect = m(&[&[1.0, 0.0], &[3.0, 7.0], &[0.5, -3.0]]);
        assert_eq!(q, expect);
        assert_eq!(v, expect);
    }

    #[test]
    fn project_shape_error_names_shapes() {
        let x = Matrix::<f64>::zeros(3, 2).unwrap();
        let w = Matrix::identity(3).unwrap();
        let err = project_qkv(&x, &w, &w, &w).unwrap_err();
        assert_eq!(
            err,
            AttentionError::Shape {
                op: "matmul",
                left: (3, 2),
                right: (3, 3)
            }
        );
        assert!(err.to_string().contains("(3, 2)"));
    }

    #[test]
    fn single_key_returns_its_value() {
        let q = m(&[&[1.0, -2.0], &[0.3, 0.9]]);
        let k = m(&[&[0.7, 0.1]]);
        let v = m(&[&[5.0, -1.0, 2.0]]);
        let out = naive_attention(&q, &k, &v, 2).unwrap();
        for r in 0..2 {
            assert_eq!(out.row(r), v.row(0));
        }
    }

    #[test]
    fn zero_queries_average_values() {
        let q = Matrix::zeros(2, 2).unwrap();
        let k = m(&[&[1.0, 2.0], &[-3.0, 0.5], &[0.0, 1.0]]);
        let v = m(&[&[1.0, 0.0], &[2.0, 3.0], &[6.0, -3.0]]);
        let out = naive_attention(&q, &k, &v, 2).unwrap();
        for r in 0..2 {
            assert!((out.get(r, 0) - 3.0).abs() < 1e-15);
            assert!((out.get(r, 1) - 0.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_two_by_two() {
        // d_k = 1. Row 0 scores [0, ln 3] -> weights [1/4, 3/4];
        // row 1 scores [0, 0] -> weights [1/2, 1/2].
        let q = m(&[&[1.0], &[0.0]]);
        let k = m(&[&[0.0], &[3f64.ln()]]);
        let v = m(&[&[4.0, 0.0], &[8.0, 4.0]]);
        let expect = m(&[&[7.0, 3.0], &[6.0, 2.0]]);
        let naive = naive_attention(&q, &k, &v, 1).unwrap();
        let tiled = tiled_attention(&q, &k, &v, &AttentionConfig::new(1, 1, 1).unwrap()).unwrap();
        assert!(naive.max_abs_diff(&expect).unwrap() < 1e-14);
        assert!(tiled.max_abs_diff(&expect).unwrap() < 1e-14);
    }

    #[test]
    fn kernels_reject_bad_shapes() {
        let q = Matrix::<f64>::zeros(2, 3).unwrap();
        let k = Matrix::zeros(4, 2).unwrap();
        let v = Matrix::zeros(4, 2).unwrap();
        assert!(matches!(naive_attention(&q, &k, &v, 3), Err(AttentionError::Shape { .. })));
        let cfg = AttentionConfig::new(3, 2, 2).unwrap();
        assert!(matches!(tiled_attention(&q, &k, &v, &cfg), Err(AttentionError::Shape { .. })));
        let k = Matrix::zeros(4, 3).unwrap();
        let v = Matrix::zeros(5, 2).unwrap();
        assert!(matches!(naive_attention(&q, &k, &v, 3), Err(AttentionError::Shape { .. })));
        assert!(AttentionConfig::new(0, 1, 1).is_err());
        assert!(AttentionConfig::new(1, 0, 1).is_err());
    }

    #[test]
    fn tiled_buffer_is_one_tile() {
        let mut rng = shuffle::seeded_rng(5);
        let q = Matrix::random(100, 4, -3.0, 3.0, &mut rng).unwrap();
        let k = Matrix::random(100, 4, -3.0, 3.0, &mut rng).unwrap();
        let v = Matrix::random(100, 4, -3.0, 3.0, &mut rng).unwrap();
        let (_, naive) = naive_attention_with_stats(&q, &k, &v, 4).unwrap();
        assert_eq!(naive.peak_score_elems, 100 * 100);
        let cfg = AttentionConfig::new(4, 16, 8).unwrap();
        let (_, tiled) = tiled_attention_with_stats(&q, &k, &v, &cfg).unwrap();
        assert_eq!(tiled.peak_score_elems, 16 * 8);
    }

    #[test]
    fn bench_rows_and_csv() {
        let opts = BenchOptions {
            repeats: 1,
            timing: false,
            ..Default::default()
        };
        let rows = attention_bench(&[(8, 4), (16, 2)], &[(1, 1), (4, 8), (64, 64)], &opts).unwrap();
        let tiled: Vec<_> = rows.iter().filter(|r| r.kernel == Kernel::Tiled).collect();
        assert_eq!(tiled.len(), 2 * 3);
        assert_eq!(rows.len(), 2 * 4);
        assert!(tiled.iter().all(|r| r.max_abs_diff <= 1e-10));
        assert_eq!(rows[0].peak_buffer_elems, 64);
        let csv = bench_csv(&rows);
        assert!(csv.starts_with(&format!("{BENCH_HEADER}\n")));
        assert_eq!(csv.lines().count(), 1 + rows.len());
        assert_eq!(csv, bench_csv(&attention_bench(&[(8, 4), (16, 2)], &[(1, 1), (4, 8), (64, 64)], &opts).unwrap()));
    }

    #[test]
    fn bench_single_precision() {
        let opts = BenchOptions {
            repeats: 1,
            precision: Precision::F32,
            timing: false,
            seed: 3,
        };
        let rows = attention_bench(&[(32, 8)], &[(7, 7)], &opts).unwrap();
        assert!(rows[1].max_abs_diff <= 1e-4);
    }

    #[test]
    fn bench_rejects_zero_size() {
        assert!(attention_bench(&[(0, 4)], &[(1, 1)], &BenchOptions::default()).is_err());
    }
}
