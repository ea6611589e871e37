//! Dense matrix numerics for small symmetric problems: a cyclic Jacobi
//! eigensolver and the row-based eigenvalue bounds used to turn symbolic
//! spectral objectives into interval-evaluable expressions.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NonConvergence(usize),
    #[error("matrix entry is not finite")]
    NonFiniteEntry,
}

/// Dense row-major matrix. Small and unapologetically simple; every matrix
/// in this crate has at most a few dozen rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    /// Build from a flat row-major slice.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.set(i, j, out.get(i, j) + a * rhs.get(k, j));
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&rhs.data) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&rhs.data) {
            *v -= w;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Symmetric matrix; construction symmetrizes as `(M + M^T) / 2` so the
/// stored entries satisfy `a(i,j) == a(j,i)` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_mat(m: &Mat) -> Self {
        assert_eq!(m.rows, m.cols, "symmetric matrix must be square");
        let n = m.rows;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = 0.5 * (m.get(i, j) + m.get(j, i));
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        Self::from_mat(&Mat::from_rows(rows))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_mat(&Mat::identity(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Set entry (i, j) and its mirror.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_row_major(self.n, self.n, &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Eigendecomposition of a symmetric matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops
/// below `1e-12 * ||M||_F`. Foolproof for the dense symmetric matrices
/// (n up to a few dozen) this crate produces.
pub fn eig_sym(m: &SymMatrix) -> Result<Eigen, MatError> {
    if !m.is_finite() {
        return Err(MatError::NonFiniteEntry);
    }
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = Mat::identity(n);
    if n == 1 {
        return Ok(Eigen {
            values: vec![a[0]],
            vectors: v,
        });
    }

    let norm = m.frobenius_norm();
    let tol = 1e-12 * norm;
    let idx = |i: usize, j: usize| i * n + j;

    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n - 1 {
            for j in i + 1..n {
                off += 2.0 * a[idx(i, j)] * a[idx(i, j)];
            }
        }
        if off.sqrt() <= tol || norm == 0.0 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&p, &q| a[idx(p, p)].total_cmp(&a[idx(q, q)]));
            let values = order.iter().map(|&p| a[idx(p, p)]).collect();
            let mut vectors = Mat::zeros(n, n);
            for (col, &p) in order.iter().enumerate() {
                for row in 0..n {
                    vectors.set(row, col, v.get(row, p));
                }
            }
            return Ok(Eigen { values, vectors });
        }
        let _ = sweep;

        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[idx(p, q)];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let s = theta.signum();
                    s / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(MatError::NonConvergence(JACOBI_MAX_SWEEPS))
}

/// Largest eigenvalue via the Jacobi decomposition.
pub fn lambda_max(m: &SymMatrix) -> Result<f64, MatError> {
    Ok(*eig_sym(m)?.values.last().expect("nonempty spectrum"))
}

/// Smallest eigenvalue via the Jacobi decomposition.
pub fn lambda_min(m: &SymMatrix) -> Result<f64, MatError> {
    Ok(eig_sym(m)?.values[0])
}

/// Row-sum upper bound on the largest eigenvalue:
/// `max_i (m(i,i) + sum_{j != i} |m(i,j)|)`.
pub fn gershgorin_max(m: &SymMatrix) -> f64 {
    (0..m.n)
        .map(|i| {
            let mut r = m.get(i, i);
            for j in 0..m.n {
                if j != i {
                    r += m.get(i, j).abs();
                }
            }
            r
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Row-sum lower bound on the smallest eigenvalue:
/// `min_i (m(i,i) - sum_{j != i} |m(i,j)|)`.
pub fn gershgorin_min(m: &SymMatrix) -> f64 {
    (0..m.n)
        .map(|i| {
            let mut r = m.get(i, i);
            for j in 0..m.n {
                if j != i {
                    r -= m.get(i, j).abs();
                }
            }
            r
        })
        .fold(f64::INFINITY, f64::min)
}

/// Alternative upper bound on the largest eigenvalue using only the
/// largest off-diagonal magnitude per row:
/// `max_i (m(i,i) + zeta * max_{j != i} |m(i,j)|)`.
///
/// `zeta` must be the dimension constant from [`zeta_n`]. For n = 1 the
/// bound degenerates to the single diagonal entry.
pub fn thm3_max(m: &SymMatrix, zeta: f64) -> f64 {
    if m.n == 1 {
        return m.get(0, 0);
    }
    (0..m.n)
        .map(|i| {
            let maxoff = (0..m.n)
                .filter(|&j| j != i)
                .map(|j| m.get(i, j).abs())
                .fold(0.0, f64::max);
            m.get(i, i) + zeta * maxoff
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The dimension constant for [`thm3_max`]: the optimum of the underlying
/// variational problem is `n - 1` in closed form.
pub fn zeta_n(n: usize) -> f64 {
    assert!(n >= 2, "zeta_n requires n >= 2");
    (n - 1) as f64
}

/// Empirical check of the variational problem behind [`zeta_n`].
#[derive(Debug, Clone)]
pub struct ZetaVerification {
    /// Largest objective value `1/v_i - 1` seen over all sampled feasible
    /// points.
    pub max_objective: f64,
    /// Objective at the uniform point `v = (1/n, ..., 1/n)`; equals `n - 1`
    /// up to floating-point rounding.
    pub uniform_objective: f64,
    pub samples: u64,
}

/// Samples feasible points of the constraint system
///   sum_k |v_k| = 1,  v_i > 0,  |v_j| <= v_i for j != i,
/// and evaluates the objective `1/v_i - 1`. A valid sampler never exceeds
/// `n - 1`, and the uniform point attains it.
pub fn verify_zeta_bound(n: usize, samples: u64, seed: u64) -> ZetaVerification {
    use rand::{Rng, SeedableRng};
    assert!(n >= 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_obj = f64::NEG_INFINITY;
    let mut v = vec![0.0f64; n];
    for _ in 0..samples {
        // v_i dominates in magnitude; scaling afterwards restores the
        // normalization sum |v_k| = 1 without breaking the ratio
        // constraints.
        let vi: f64 = rng.gen_range(1e-6..1.0);
        v[0] = vi;
        for item in v.iter_mut().skip(1) {
            *item = rng.gen_range(-vi..=vi);
        }
        let total: f64 = v.iter().map(|x| x.abs()).sum();
        let vi_scaled = vi / total;
        let obj = 1.0 / vi_scaled - 1.0;
        if obj > max_obj {
            max_obj = obj;
        }
    }
    let uniform = 1.0 / (1.0 / n as f64) - 1.0;
    ZetaVerification {
        max_objective: max_obj,
        uniform_objective: uniform,
        samples,
    }
}

/// Solve `P x = b` for symmetric positive definite `P` through the Jacobi
/// eigendecomposition. Adequate for the small gain extractions here.
pub fn solve_spd(p: &SymMatrix, b: &Mat) -> Result<Mat, MatError> {
    let eig = eig_sym(p)?;
    if eig.values.iter().any(|&l| l <= 0.0) {
        return Err(MatError::DimensionMismatch(
            "matrix is not positive definite".into(),
        ));
    }
    if p.n != b.rows {
        return Err(MatError::DimensionMismatch("solve_spd rhs rows".into()));
    }
    // x = V diag(1/l) V^T b
    let vt_b = eig.vectors.transpose().matmul(b);
    let mut scaled = vt_b.clone();
    for i in 0..scaled.rows {
        for j in 0..scaled.cols {
            scaled.set(i, j, vt_b.get(i, j) / eig.values[i]);
        }
    }
    Ok(eig.vectors.matmul(&scaled))
}
