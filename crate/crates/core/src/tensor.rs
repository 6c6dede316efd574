//! Dense matrix/vector arithmetic, Gram-Schmidt orthonormalization, a
//! Procrustes solver used as an independent oracle, and finite-difference
//! gradient estimation. Everything is `f64`, row-major, and pure.

use crate::error::{Error, Result};

/// Pivot norms below this are treated as rank deficiency.
pub const RANK_EPS: f64 = 1e-10;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {}x{}={} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDivergence(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|v| v.len()).unwrap_or(0);
        if rows.iter().any(|v| v.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self * rhs`. Errors when the inner dimensions disagree.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * v` for a column vector `v`.
    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::Shape(format!(
                "cannot apply {}x{} to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect())
    }

    /// `selfᵀ * v`, computed without materializing the transpose.
    pub fn mat_vec_transposed(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.rows != v.len() {
            return Err(Error::Shape(format!(
                "cannot apply transpose of {}x{} to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let s = v[i];
            for (o, &r) in out.iter_mut().zip(row) {
                *o += s * r;
            }
        }
        Ok(out)
    }

    pub fn add_scaled(&mut self, other: &DenseMatrix, scale: f64) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape("add_scaled dimension mismatch".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F`.
    pub fn frobenius_distance(&self, other: &DenseMatrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape("frobenius_distance dimension mismatch".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDivergence(
                "vector entries must be finite".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Square matrix whose rows form an orthonormal basis: `X Xᵀ = Xᵀ X = I`.
///
/// Values are immutable snapshots; training steps produce fresh maps.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    k: usize,
    matrix: DenseMatrix,
}

/// Largest `‖XXᵀ − I‖_F` tolerated when accepting an externally supplied map.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

impl OrthogonalMap {
    pub fn identity(k: usize) -> Self {
        Self {
            k,
            matrix: DenseMatrix::identity(k),
        }
    }

    /// Wraps a matrix that is already orthogonal within [`ORTHOGONALITY_TOL`].
    pub fn from_matrix(matrix: DenseMatrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::Shape(format!(
                "orthogonal map must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let map = Self {
            k: matrix.rows(),
            matrix,
        };
        let err = map.orthogonality_error();
        if err > ORTHOGONALITY_TOL {
            return Err(Error::DegenerateInput(format!(
                "matrix is not orthogonal: ‖XXᵀ − I‖_F = {err:.3e}"
            )));
        }
        Ok(map)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `X · v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.matrix.mat_vec(v)
    }

    /// `Xᵀ · v`, the inverse mapping.
    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.matrix.mat_vec_transposed(v)
    }

    pub fn transpose(&self) -> OrthogonalMap {
        Self {
            k: self.k,
            matrix: self.matrix.transpose(),
        }
    }

    /// Returns a map with determinant +1, negating the last row if needed.
    /// Rotations are reachable by gradient training that starts from the
    /// identity; reflections are not.
    pub fn into_rotation(self) -> OrthogonalMap {
        if determinant_sign(&self.matrix) >= 0.0 {
            return self;
        }
        let mut m = self.matrix;
        let k = m.rows();
        for j in 0..k {
            let v = -m.get(k - 1, j);
            m.set(k - 1, j, v);
        }
        OrthogonalMap { k, matrix: m }
    }

    /// `‖XXᵀ − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let xxt = self
            .matrix
            .matmul(&self.matrix.transpose())
            .expect("square product");
        let mut sum = 0.0;
        for i in 0..self.k {
            for j in 0..self.k {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = xxt.get(i, j) - target;
                sum += d * d;
            }
        }
        sum.sqrt()
    }
}

/// Orthonormalizes the rows of a square full-rank matrix.
///
/// Modified Gram-Schmidt with a second pass when the first leaves measurable
/// drift; row `i` of the result spans the same leading subspace as rows
/// `0..=i` of the input. Pivot norms under [`RANK_EPS`] are rejected.
pub fn gram_schmidt_orthonormalize(m: &DenseMatrix) -> Result<OrthogonalMap> {
    if m.rows() != m.cols() {
        return Err(Error::Shape(format!(
            "orthonormalization requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let q = mgs_pass(m)?;
    let map = OrthogonalMap {
        k: q.rows(),
        matrix: q,
    };
    if map.orthogonality_error() <= 1e-12 {
        return Ok(map);
    }
    // One re-orthogonalization pass restores full precision on
    // ill-conditioned inputs.
    let q = mgs_pass(&map.matrix)?;
    Ok(OrthogonalMap {
        k: q.rows(),
        matrix: q,
    })
}

fn mgs_pass(m: &DenseMatrix) -> Result<DenseMatrix> {
    let k = m.rows();
    let mut q = m.clone();
    for i in 0..k {
        for j in 0..i {
            let (head, tail) = q.data.split_at_mut(i * k);
            let done = &head[j * k..(j + 1) * k];
            let cur = &mut tail[..k];
            let r = dot(cur, done);
            for (c, d) in cur.iter_mut().zip(done) {
                *c -= r * d;
            }
        }
        let n = norm(q.row(i));
        if n < RANK_EPS {
            return Err(Error::DegenerateInput(format!(
                "row {i} is numerically dependent on earlier rows (pivot norm {n:.3e})"
            )));
        }
        for v in q.row_mut(i) {
            *v /= n;
        }
    }
    Ok(q)
}

/// Global minimizer of `Σ‖X·sᵢ − tᵢ‖²` over orthogonal `X`.
///
/// Solved through the singular value decomposition of the cross-covariance
/// `M = Σ tᵢ sᵢᵀ`; the optimum is `U Vᵀ`. The decomposition uses one-sided
/// Jacobi rotations, which is accurate and fast at the dimensions used here.
/// This routine is the independent reference for the gradient-trained
/// mapping and must stay off that code path.
pub fn procrustes_oracle(sources: &[DenseVector], targets: &[DenseVector]) -> Result<OrthogonalMap> {
    if sources.is_empty() || sources.len() != targets.len() {
        return Err(Error::Validation(format!(
            "need equal nonzero counts of sources and targets, got {} and {}",
            sources.len(),
            targets.len()
        )));
    }
    let k = sources[0].dim();
    for (s, t) in sources.iter().zip(targets) {
        if s.dim() != k || t.dim() != k {
            return Err(Error::Shape(
                "all vectors must share one dimension".into(),
            ));
        }
    }
    // Cross-covariance M = Σ t sᵀ.
    let mut m = DenseMatrix::zeros(k, k);
    for (s, t) in sources.iter().zip(targets) {
        for i in 0..k {
            let ti = t.data()[i];
            if ti == 0.0 {
                continue;
            }
            let row = m.row_mut(i);
            for (j, &sj) in s.data().iter().enumerate() {
                row[j] += ti * sj;
            }
        }
    }
    let (u, _sigma, v) = jacobi_svd(&m)?;
    let x = u.matmul(&v.transpose())?;
    OrthogonalMap::from_matrix(x)
}

/// One-sided Jacobi SVD of a square matrix: `m = U diag(σ) Vᵀ`.
///
/// Columns of `m` are orthogonalized by right rotations. Columns whose norm
/// underflows are completed to an orthonormal basis, so `U` and `V` are
/// always full orthogonal matrices.
pub fn jacobi_svd(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    if m.rows() != m.cols() {
        return Err(Error::Shape("jacobi_svd expects a square matrix".into()));
    }
    let k = m.rows();
    // Work on the transpose so columns are contiguous.
    let mut a = m.transpose(); // row i of `a` = column i of `m`
    let mut v = DenseMatrix::identity(k);
    let scale = m.frobenius_norm().max(1.0);

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let (app, aqq, apq) = {
                    let rp = a.row(p);
                    let rq = a.row(q);
                    (dot(rp, rp), dot(rq, rq), dot(rp, rq))
                };
                let denom = (app * aqq).sqrt();
                if denom <= 1e-300 || apq.abs() <= 1e-15 * denom {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    // Singular values are the (former) column norms; build U from them.
    let mut sigma = vec![0.0; k];
    let mut u = DenseMatrix::zeros(k, k); // row i = left singular vector i
    let sigma_floor = 1e-13 * scale;
    let mut deficient = Vec::new();
    for i in 0..k {
        let n = norm(a.row(i));
        sigma[i] = n;
        if n > sigma_floor {
            let row = a.row(i).to_vec();
            for (j, x) in row.iter().enumerate() {
                u.set(i, j, x / n);
            }
        } else {
            deficient.push(i);
        }
    }
    if !deficient.is_empty() {
        complete_orthonormal_rows(&mut u, &deficient)?;
    }
    // m columns = rows of `a`; m = U Σ Vᵀ with our row-major U rows as left
    // vectors, so return Uᵀ shaped as columns.
    Ok((u.transpose(), sigma, v.transpose()))
}

fn rotate_rows(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let k = a.cols();
    let (head, tail) = a.data.split_at_mut(q * k);
    let rp = &mut head[p * k..(p + 1) * k];
    let rq = &mut tail[..k];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let xp = c * *x - s * *y;
        let yq = s * *x + c * *y;
        *x = xp;
        *y = yq;
    }
}

/// Fills the listed rows with unit vectors orthogonal to all other rows.
fn complete_orthonormal_rows(u: &mut DenseMatrix, missing: &[usize]) -> Result<()> {
    let k = u.cols();
    let missing_set: Vec<bool> = {
        let mut v = vec![false; u.rows()];
        for &i in missing {
            v[i] = true;
        }
        v
    };
    for &target in missing {
        let mut placed = false;
        for basis in 0..k {
            let mut cand = vec![0.0; k];
            cand[basis] = 1.0;
            for i in 0..u.rows() {
                if missing_set[i] && i >= target {
                    continue; // not yet filled
                }
                let r = dot(&cand, u.row(i));
                for (c, x) in cand.iter_mut().zip(u.row(i)) {
                    *c -= r * x;
                }
            }
            let n = norm(&cand);
            if n > 1e-6 {
                for (j, x) in cand.iter().enumerate() {
                    u.set(target, j, x / n);
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::DegenerateInput(
                "could not complete orthonormal basis".into(),
            ));
        }
    }
    Ok(())
}

/// Sign of the determinant via LU elimination with partial pivoting.
pub fn determinant_sign(m: &DenseMatrix) -> f64 {
    debug_assert_eq!(m.rows(), m.cols());
    let n = m.rows();
    let mut a = m.clone();
    let mut sign = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a.get(r, col).abs() > a.get(piv, col).abs() {
                piv = r;
            }
        }
        if a.get(piv, col).abs() < 1e-14 {
            return 0.0;
        }
        if piv != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(piv, j));
                a.set(piv, j, tmp);
            }
            sign = -sign;
        }
        for r in col + 1..n {
            let f = a.get(r, col) / a.get(col, col);
            for j in col..n {
                let v = a.get(r, j) - f * a.get(col, j);
                a.set(r, j, v);
            }
        }
        if a.get(col, col) < 0.0 {
            sign = -sign;
        }
    }
    sign
}

/// Central-difference gradient estimate of `f` at `p`.
pub fn finite_diff_grad<F>(mut f: F, p: &DenseVector, h: f64) -> Result<DenseVector>
where
    F: FnMut(&[f64]) -> f64,
{
    if h <= 0.0 {
        return Err(Error::Validation(format!("step must be positive, got {h}")));
    }
    let mut point = p.data().to_vec();
    let mut grad = vec![0.0; point.len()];
    for i in 0..point.len() {
        let orig = point[i];
        point[i] = orig + h;
        let fp = f(&point);
        point[i] = orig - h;
        let fm = f(&point);
        point[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NumericDivergence(format!(
                "objective not finite near coordinate {i}"
            )));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    DenseVector::new(grad)
}

/// Relative error between two gradient vectors, guarded against zero norms.
pub fn gradient_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom = norm(analytic).max(norm(numeric)).max(1e-12);
    diff / denom
}
