//! Dense tensor algebra: outer/inner products, Kronecker and Khatri-Rao
//! products, n-mode products, unfolding and Tucker reconstruction.
//!
//! Storage is row-major (last mode varies fastest). Unfolding uses the
//! opposite convention for the column index: among the remaining modes, the
//! LOWER mode varies faster. With that choice
//!
//! ```text
//! matricize(G x_0 U_0 ... x_N U_N, n) = U_n G_(n) (U_N ⊗ ... ⊗ U_{n+1} ⊗ U_{n-1} ⊗ ... ⊗ U_0)^T
//! ```
//!
//! and a reverse-order Kronecker of row vectors lines up with the columns of
//! `G_(n)`. Everything is `f64`.

use crate::error::{CataError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CataError::invalid(format!(
                "matrix extents must be positive, got {rows}x{cols}"
            )));
        }
        if rows * cols != data.len() {
            return Err(CataError::invalid(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix extents must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(CataError::invalid("ragged rows"));
        }
        Matrix::new(r, c, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(CataError::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (d, b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v^T M`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "vector/matrix length mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &a) in v.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (d, b) in out.iter_mut().zip(self.row(i)) {
                *d += a * b;
            }
        }
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }
}

/// N-mode dense tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(CataError::invalid(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let n = shape.iter().product();
        Ok(DenseTensor {
            shape,
            data: vec![0.0; n],
        })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of range for extent {n}");
            acc * n + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], v: f64) {
        let o = self.offset(index);
        self.data[o] = v;
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Contracts every mode with a vector, last mode first, and returns the
    /// resulting scalar. Equivalent to `X x_0 v_0^T x_1 ... x_N v_N^T`.
    pub fn contract_all(&self, vectors: &[&[f64]]) -> f64 {
        assert_eq!(vectors.len(), self.ndim(), "one vector per mode");
        let mut buf = self.data.clone();
        let mut len = buf.len();
        for (mode, v) in vectors.iter().enumerate().rev() {
            let n = self.shape[mode];
            assert_eq!(v.len(), n, "vector length mismatch on mode {mode}");
            let outer = len / n;
            for o in 0..outer {
                let chunk = &buf[o * n..(o + 1) * n];
                let s: f64 = chunk.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                buf[o] = s;
            }
            len = outer;
        }
        buf[0]
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(CataError::invalid("tensor needs at least one mode"));
    }
    if let Some(pos) = shape.iter().position(|&n| n == 0) {
        return Err(CataError::invalid(format!(
            "extent of mode {pos} must be positive in {shape:?}"
        )));
    }
    Ok(())
}

/// Tensor whose entry `(i_1, ..., i_N)` is `prod_n v_n[i_n]`.
pub fn outer_product(vectors: &[&[f64]]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return Err(CataError::invalid("outer product of zero vectors"));
    }
    let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    validate_shape(&shape)?;
    let mut data = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &a in &data {
            next.extend(v.iter().map(|&b| a * b));
        }
        data = next;
    }
    DenseTensor::new(shape, data)
}

pub fn inner_product(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(CataError::invalid(format!(
            "inner product shape mismatch: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Kronecker product; block `(i, j)` of the result is `x[i][j] * y`.
pub fn kronecker(x: &Matrix, y: &Matrix) -> Matrix {
    let rows = x.rows * y.rows;
    let cols = x.cols * y.cols;
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..x.rows {
        for j in 0..x.cols {
            let a = x.get(i, j);
            for k in 0..y.rows {
                let dst = (i * y.rows + k) * cols + j * y.cols;
                for (d, b) in out.data[dst..dst + y.cols].iter_mut().zip(y.row(k)) {
                    *d = a * b;
                }
            }
        }
    }
    out
}

/// Kronecker product of two row vectors, `a ⊗ b`.
pub fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// Column-wise Kronecker product.
pub fn khatri_rao(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.cols != y.cols {
        return Err(CataError::invalid(format!(
            "Khatri-Rao needs equal column counts, got {} and {}",
            x.cols, y.cols
        )));
    }
    let k = x.cols;
    let mut out = Matrix::zeros(x.rows * y.rows, k);
    for i in 0..x.rows {
        for j in 0..y.rows {
            let r = i * y.rows + j;
            for c in 0..k {
                out.data[r * k + c] = x.get(i, c) * y.get(j, c);
            }
        }
    }
    Ok(out)
}

/// `X x_n U`: mode `n` of `X` is contracted against the columns of `U`.
pub fn mode_n_product(x: &DenseTensor, u: &Matrix, n: usize) -> Result<DenseTensor> {
    if n >= x.ndim() {
        return Err(CataError::invalid(format!(
            "mode {n} out of range for a {}-mode tensor",
            x.ndim()
        )));
    }
    let extent = x.shape[n];
    if u.cols != extent {
        return Err(CataError::invalid(format!(
            "mode-{n} product needs {extent} matrix columns, got {}",
            u.cols
        )));
    }
    let outer: usize = x.shape[..n].iter().product();
    let inner: usize = x.shape[n + 1..].iter().product();
    let mut shape = x.shape.clone();
    shape[n] = u.rows;
    let mut data = vec![0.0; outer * u.rows * inner];
    for o in 0..outer {
        let src = &x.data[o * extent * inner..(o + 1) * extent * inner];
        let dst = &mut data[o * u.rows * inner..(o + 1) * u.rows * inner];
        for j in 0..u.rows {
            let out_row = &mut dst[j * inner..(j + 1) * inner];
            for (i, &w) in u.row(j).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (d, s) in out_row.iter_mut().zip(&src[i * inner..(i + 1) * inner]) {
                    *d += w * s;
                }
            }
        }
    }
    DenseTensor::new(shape, data)
}

/// Strides for the column index of a mode-`n` unfolding: remaining modes,
/// lower mode faster. Entry for mode `n` itself is 0.
fn unfolding_strides(shape: &[usize], n: usize) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut s = 1;
    for (m, &extent) in shape.iter().enumerate() {
        if m != n {
            strides[m] = s;
            s *= extent;
        }
    }
    strides
}

/// Visits every entry in row-major order with its multi-index.
fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..total {
        f(flat, &idx);
        for m in (0..shape.len()).rev() {
            idx[m] += 1;
            if idx[m] < shape[m] {
                break;
            }
            idx[m] = 0;
        }
    }
}

/// Mode-`n` unfolding `X_(n)`, shape `I_n x prod_{m != n} I_m`.
pub fn matricize(x: &DenseTensor, n: usize) -> Result<Matrix> {
    if n >= x.ndim() {
        return Err(CataError::invalid(format!(
            "mode {n} out of range for a {}-mode tensor",
            x.ndim()
        )));
    }
    let rows = x.shape[n];
    let cols = x.len() / rows;
    let strides = unfolding_strides(&x.shape, n);
    let mut out = Matrix::zeros(rows, cols);
    for_each_index(&x.shape, |flat, idx| {
        let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.data[idx[n] * cols + col] = x.data[flat];
    });
    Ok(out)
}

/// Vectorization with the first mode varying fastest (column-major order).
pub fn vectorize(x: &DenseTensor) -> Vec<f64> {
    let strides = unfolding_strides(&x.shape, usize::MAX);
    let mut out = vec![0.0; x.len()];
    for_each_index(&x.shape, |flat, idx| {
        let pos: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out[pos] = x.data[flat];
    });
    out
}

/// Inverse of [`vectorize`].
pub fn fold(shape: Vec<usize>, v: &[f64]) -> Result<DenseTensor> {
    let mut out = DenseTensor::zeros(shape)?;
    if v.len() != out.len() {
        return Err(CataError::invalid(format!(
            "cannot fold {} values into shape {:?}",
            v.len(),
            out.shape
        )));
    }
    let strides = unfolding_strides(&out.shape, usize::MAX);
    let shape = out.shape.clone();
    for_each_index(&shape, |flat, idx| {
        let pos: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.data[flat] = v[pos];
    });
    Ok(out)
}

/// `G x_0 U_0 x_1 U_1 ... x_{N-1} U_{N-1}`.
pub fn tucker_reconstruct(core: &DenseTensor, factors: &[&Matrix]) -> Result<DenseTensor> {
    if factors.len() != core.ndim() {
        return Err(CataError::invalid(format!(
            "{} factors supplied for a {}-mode core",
            factors.len(),
            core.ndim()
        )));
    }
    for (n, f) in factors.iter().enumerate() {
        if f.cols != core.shape[n] {
            return Err(CataError::invalid(format!(
                "factor {n} has {} columns, core extent is {}",
                f.cols, core.shape[n]
            )));
        }
    }
    let mut out = core.clone();
    for (n, f) in factors.iter().enumerate() {
        out = mode_n_product(&out, f, n)?;
    }
    Ok(out)
}
