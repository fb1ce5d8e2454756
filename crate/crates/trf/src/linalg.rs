//! Minimal dense linear algebra: row-major matrices, products, Cholesky,
//! and the Householder + implicit-QL symmetric eigensolver core.
//!
//! Everything here is deterministic: parallel products assign whole output
//! rows to workers and each entry is accumulated in a fixed index order, so
//! results are bit-identical for any thread count.

use rayon::prelude::*;

use crate::error::{Result, TrfError};

/// Dense row-major matrix of f64.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Mat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mat({}x{})", self.rows, self.cols)
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Like [`Mat::zeros`] but refuses absurd allocations instead of aborting.
    pub fn try_zeros(rows: usize, cols: usize) -> Result<Mat> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()))
            .ok_or_else(|| TrfError::Alloc {
                bytes: usize::MAX,
                context: format!("{rows}x{cols} matrix"),
            })?;
        let mut data = Vec::new();
        data.try_reserve_exact(rows * cols)
            .map_err(|_| TrfError::Alloc {
                bytes: n,
                context: format!("{rows}x{cols} matrix"),
            })?;
        data.resize(rows * cols, 0.0);
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.row_mut(i).copy_from_slice(row);
        }
        m
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// self += s * other
    pub fn add_scaled(&mut self, other: &Mat, s: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest |A_ij - A_ji|.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with unrolled accumulators so the compiler can vectorize.
/// The accumulation order is fixed, independent of thread count.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let i = c * 8;
        for k in 0..8 {
            acc[k] += a[i + k] * b[i + k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for i in chunks * 8..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// C = A * B, rows of C distributed across workers.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul shape");
    let mut c = Mat::zeros(a.rows, b.cols);
    let cols = b.cols;
    c.data
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, crow)| {
            for (k, &aik) in a.row(i).iter().enumerate() {
                if aik != 0.0 {
                    let brow = b.row(k);
                    for j in 0..cols {
                        crow[j] += aik * brow[j];
                    }
                }
            }
        });
    c
}

/// A^T A for row-major A (m x n) -> n x n, via one transpose so that every
/// inner product runs over contiguous memory.
pub fn at_a(a: &Mat) -> Mat {
    let t = a.transpose(); // n x m, row i = column i of A
    gram_of_rows(&t)
}

/// G[i][j] = dot(row_i, row_j); symmetric by construction.
pub fn gram_of_rows(t: &Mat) -> Mat {
    let n = t.rows;
    let mut g = Mat::zeros(n, n);
    let cols = n;
    g.data
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, grow)| {
            let ri = t.row(i);
            for j in i..n {
                grow[j] = dot(ri, t.row(j));
            }
        });
    // mirror the upper triangle
    for i in 0..n {
        for j in 0..i {
            g.data[i * n + j] = g.data[j * n + i];
        }
    }
    g
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky_factor(a: &Mat) -> Result<Mat> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if diag <= 0.0 {
            return Err(TrfError::Numerical(format!(
                "Cholesky pivot {diag:.3e} at index {j}"
            )));
        }
        diag = diag.sqrt();
        l[(j, j)] = diag;
        // Split the borrow: rows above j are read-only while row i is written.
        for i in (j + 1)..n {
            let s = {
                let (head, tail) = l.data.split_at(i * n);
                let lj = &head[j * n..j * n + j];
                let li = &tail[..j];
                dot(li, lj)
            };
            l[(i, j)] = (a[(i, j)] - s) / diag;
        }
    }
    Ok(l)
}

/// Solve L L^T x = b given the lower factor.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    assert_eq!(b.len(), n);
    let mut y = b.to_vec();
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &y[..i]);
        y[i] = (y[i] - s) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Where the QL sweep should send its plane rotations.
pub enum ZTarget<'a> {
    /// Eigenvalues only.
    None,
    /// Accumulate the full eigenvector matrix (columns are eigenvectors).
    Full(&'a mut Mat),
    /// Track a single row of the eigenvector matrix (enough for
    /// Golub-Welsch quadrature weights).
    Row(&'a mut [f64]),
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// Returns (d, e, q): diagonal, subdiagonal (e[i] couples d[i] and d[i+1],
/// e[n-1] = 0) and, when requested, the accumulated orthogonal Q such that
/// A = Q T Q^T. Ported from the EISPACK tred2 route.
pub fn sym_tridiagonalize(a: &Mat, want_vectors: bool) -> (Vec<f64>, Vec<f64>, Option<Mat>) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut v = a.clone();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    if n == 0 {
        return (d, e, want_vectors.then(|| v));
    }

    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if want_vectors {
        for i in 0..(n - 1) {
            v[(n - 1, i)] = v[(i, i)];
            v[(i, i)] = 1.0;
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = v[(k, i + 1)] / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += v[(k, i + 1)] * v[(k, j)];
                    }
                    for k in 0..=i {
                        v[(k, j)] -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                v[(k, i + 1)] = 0.0;
            }
        }
        for j in 0..n {
            d[j] = v[(n - 1, j)];
            v[(n - 1, j)] = 0.0;
        }
        v[(n - 1, n - 1)] = 1.0;
    } else {
        // Vector accumulation skipped; recover the diagonal from the
        // reduction bookkeeping (d currently holds the h values).
        for i in (1..n).rev() {
            d[i] = v[(i, i)];
        }
        d[0] = v[(0, 0)];
    }
    // shift e so that e[i] couples d[i] and d[i+1]
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    (d, e, want_vectors.then(|| v))
}

/// Implicit-shift QL on a symmetric tridiagonal matrix. `d` is the diagonal,
/// `e` the subdiagonal laid out as in [`sym_tridiagonalize`]. Eigenvalues are
/// sorted ascending on return; rotations are mirrored into `z`.
pub fn tridiag_ql(d: &mut [f64], e: &mut [f64], mut z: ZTarget<'_>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    assert_eq!(e.len(), n);
    let eps = 2.0f64.powi(-52);
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0usize;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(TrfError::Numerical(format!(
                        "QL failed to converge for eigenvalue {l} after 60 sweeps"
                    )));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    match &mut z {
                        ZTarget::None => {}
                        ZTarget::Full(v) => {
                            let nn = v.rows();
                            for k in 0..nn {
                                let h = v[(k, i + 1)];
                                v[(k, i + 1)] = s * v[(k, i)] + c * h;
                                v[(k, i)] = c * v[(k, i)] - s * h;
                            }
                        }
                        ZTarget::Row(row) => {
                            let h = row[i + 1];
                            row[i + 1] = s * row[i] + c * h;
                            row[i] = c * row[i] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // selection-sort ascending, carrying columns of z along
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d.swap(i, k);
            match &mut z {
                ZTarget::None => {}
                ZTarget::Full(v) => {
                    let nn = v.rows();
                    for r in 0..nn {
                        let tmp = v[(r, i)];
                        v[(r, i)] = v[(r, k)];
                        v[(r, k)] = tmp;
                    }
                }
                ZTarget::Row(row) => row.swap(i, k),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_small() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Mat::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = matmul(&a, &b);
        assert_eq!(c.row(0), &[19.0, 22.0]);
        assert_eq!(c.row(1), &[43.0, 50.0]);
    }

    #[test]
    fn at_a_matches_matmul() {
        let a = Mat::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.37 - 1.0);
        let g = at_a(&a);
        let g2 = matmul(&a.transpose(), &a);
        for i in 0..3 {
            for j in 0..3 {
                assert!(approx(g[(i, j)], g2[(i, j)], 1e-12));
            }
        }
        assert_eq!(g.asymmetry(), 0.0);
    }

    #[test]
    fn cholesky_roundtrip() {
        let m = Mat::from_rows(&[
            vec![4.0, 2.0, 0.6],
            vec![2.0, 5.0, 1.0],
            vec![0.6, 1.0, 3.0],
        ]);
        let l = cholesky_factor(&m).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let x = cholesky_solve(&l, &b);
        let back = m.matvec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!(approx(*u, *v, 1e-12));
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky_factor(&m).is_err());
    }

    #[test]
    fn eigen_diag() {
        let a = Mat::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ]);
        let (mut d, mut e, v) = sym_tridiagonalize(&a, true);
        let mut v = v.unwrap();
        tridiag_ql(&mut d, &mut e, ZTarget::Full(&mut v)).unwrap();
        assert!(approx(d[0], 1.0, 1e-12));
        assert!(approx(d[1], 2.0, 1e-12));
        assert!(approx(d[2], 3.0, 1e-12));
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        // deterministic pseudo-random symmetric matrix
        let n = 24;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = next();
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let (mut d, mut e, v) = sym_tridiagonalize(&a, true);
        let mut v = v.unwrap();
        tridiag_ql(&mut d, &mut e, ZTarget::Full(&mut v)).unwrap();
        // residual ||A v - lambda v|| per pair
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| v[(i, j)]).collect();
            let av = a.matvec(&col);
            for i in 0..n {
                assert!(
                    approx(av[i], d[j] * col[i], 1e-9),
                    "residual too large at pair {j}"
                );
            }
        }
        // eigenvalues-only route agrees
        let (mut d2, mut e2, none) = sym_tridiagonalize(&a, false);
        assert!(none.is_none());
        tridiag_ql(&mut d2, &mut e2, ZTarget::None).unwrap();
        for j in 0..n {
            assert!(approx(d[j], d2[j], 1e-10));
        }
    }

    #[test]
    fn ql_row_tracking_matches_full() {
        // Jacobi matrix of probabilists' Hermite, n = 12
        let n = 12;
        let mut d = vec![0.0; n];
        let mut e: Vec<f64> = (0..n)
            .map(|i| if i + 1 < n { ((i + 1) as f64).sqrt() } else { 0.0 })
            .collect();
        let mut v = Mat::identity(n);
        let mut d2 = d.clone();
        let mut e2 = e.clone();
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        tridiag_ql(&mut d, &mut e, ZTarget::Full(&mut v)).unwrap();
        tridiag_ql(&mut d2, &mut e2, ZTarget::Row(&mut row)).unwrap();
        for j in 0..n {
            assert!(approx(d[j], d2[j], 1e-12));
            assert!(approx(v[(0, j)], row[j], 1e-12));
        }
    }
}
