//! Small dense helpers shared by the model modules.

use faer::linalg::solvers::Llt;
use faer::{Mat, MatRef, Side};

use crate::{Error, Result};

/// Pins faer to sequential kernels. Blocked parallel kernels may pick a
/// different basis for repeated eigenvalues depending on thread count, so
/// fits would not be reproducible across machines.
pub fn single_threaded() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Max-norm of `a - b`. Panics on shape mismatch.
pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Max-norm of `a - I`.
pub fn identity_defect(a: MatRef<'_, f64>) -> f64 {
    let eye = Mat::<f64>::identity(a.nrows(), a.ncols());
    max_abs_diff(a, eye.as_ref())
}

pub fn is_symmetric(a: MatRef<'_, f64>, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    for j in 0..a.ncols() {
        for i in (j + 1)..a.nrows() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// `(a + aᵀ) / 2`.
pub fn symmetrize(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn trace(a: MatRef<'_, f64>) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn column_means(x: MatRef<'_, f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| (0..x.nrows()).map(|i| x[(i, j)]).sum::<f64>() / n)
        .collect()
}

pub fn center_columns(x: MatRef<'_, f64>) -> Mat<f64> {
    let means = column_means(x);
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j])
}

/// Flip the sign of a vector so its first entry with magnitude above
/// `1e-10` is positive.
pub fn orient(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-10) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and
/// eigenvectors (columns) oriented by [`orient`].
pub fn sym_eigen_desc(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    single_threaded();
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Estimation(format!("eigendecomposition failed: {e:?}")))?;
    let n = a.nrows();
    let s = evd.S();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep solver order
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let values = order.iter().map(|&i| s[i]).collect();
    let mut vecs = Mat::<f64>::zeros(n, n);
    let mut buf = vec![0.0; n];
    for (dst, &src) in order.iter().enumerate() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = u[(i, src)];
        }
        orient(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            vecs[(i, dst)] = *b;
        }
    }
    Ok((values, vecs))
}

/// Cholesky factor of a symmetric positive definite matrix. On failure the
/// diagonal is lifted by `1e-8 · trace / n` and the factorization retried
/// once.
pub fn spd_factor(a: MatRef<'_, f64>) -> Result<Llt<f64>> {
    if let Ok(llt) = a.llt(Side::Lower) {
        return Ok(llt);
    }
    let n = a.nrows();
    let ridge = 1e-8 * trace(a) / n as f64;
    let mut lifted = a.to_owned();
    for i in 0..n {
        lifted[(i, i)] += ridge;
    }
    lifted
        .llt(Side::Lower)
        .map_err(|_| Error::Estimation("matrix is not positive definite after ridge".into()))
}

/// `log |A|` from its Cholesky factor.
pub fn llt_log_det(llt: &Llt<f64>) -> f64 {
    let l = llt.L();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// FNV-1a over the bit patterns of a sequence of floats.
pub fn checksum(values: impl IntoIterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn mat_checksum(a: MatRef<'_, f64>) -> u64 {
    checksum((0..a.ncols()).flat_map(move |j| (0..a.nrows()).map(move |i| a[(i, j)])))
}

pub fn to_rows(a: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dim("ragged rows"));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Column vector as an `n × 1` matrix.
pub fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}
