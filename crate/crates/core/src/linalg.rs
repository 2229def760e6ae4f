//! Dense linear-algebra helpers shared by the matrix, probability and regression code.

use std::io::{BufRead, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

pub fn is_symmetric<T: Scalar>(a: &DMatrix<T>, tol: T) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Cholesky factor of a symmetric positive definite matrix; fails rather than regularizing.
pub fn cholesky<T: Scalar>(a: &DMatrix<T>) -> Result<Cholesky<T, Dyn>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    Cholesky::new(a.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("{}x{} matrix failed Cholesky factorization", a.nrows(), a.ncols()))
    })
}

pub fn is_positive_definite<T: Scalar>(a: &DMatrix<T>) -> bool {
    a.is_square() && Cholesky::new(a.clone()).is_some()
}

/// Spectral norm ‖A‖ = λ_max(AᵀA)^{1/2} by power iteration on AᵀA
/// (relative tolerance 1e-10, at most 10 000 iterations).
pub fn operator_norm<T: Scalar>(a: &DMatrix<T>) -> T {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return T::zero();
    }
    // Deterministic, generic start vector with components in every eigendirection almost surely.
    let mut v = DVector::<T>::from_fn(n, |i, _| T::one() + T::lit(((i * 7919) % 101) as f64 / 1000.0));
    let nv = v.norm();
    v /= nv;
    let tol = T::lit(1e-10).max(T::default_epsilon() * T::lit(10.0));
    let mut lambda = T::zero();
    for _ in 0..10_000 {
        let w = a.tr_mul(&(a * &v));
        let next = w.norm();
        if next == T::zero() {
            return T::zero();
        }
        v = w / next;
        let done = (next - lambda).abs() <= tol * next;
        lambda = next;
        if done {
            break;
        }
    }
    lambda.sqrt()
}

/// (λ_min, λ_max) of a symmetric matrix.
pub fn eigen_range<T: Scalar>(a: &DMatrix<T>) -> (T, T) {
    let e = SymmetricEigen::new(a.clone());
    let mut lo = e.eigenvalues[0];
    let mut hi = lo;
    for &x in e.eigenvalues.iter() {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

/// Largest |i − j| with |a_ij| > tol (0 for diagonal matrices).
pub fn bandwidth<T: Scalar>(a: &DMatrix<T>, tol: T) -> usize {
    let mut bw = 0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)].abs() > tol {
                bw = bw.max(i.abs_diff(j));
            }
        }
    }
    bw
}

/// Copy of `a` with entries outside |i − j| ≤ r set to zero.
pub fn band_truncate<T: Scalar>(a: &DMatrix<T>, r: usize) -> DMatrix<T> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| if i.abs_diff(j) <= r { a[(i, j)] } else { T::zero() })
}

pub fn symmetrize<T: Scalar>(a: &mut DMatrix<T>) {
    let n = a.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in 0..i {
            let m = (a[(i, j)] + a[(j, i)]) * half;
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Writes a matrix as CSV: `rows,cols` on the first line, then one row per line.
/// Numbers use the shortest representation that round-trips.
pub fn write_matrix_csv<W: Write>(mut w: W, a: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "{},{}", a.nrows(), a.ncols())?;
    let mut line = String::new();
    for i in 0..a.nrows() {
        line.clear();
        for j in 0..a.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&a[(i, j)].to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))??;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad header {header:?}: {e}")))?;
    if dims.len() != 2 {
        return Err(Error::Parse(format!("header must be `rows,cols`, got {header:?}")));
    }
    let (n, k) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(n * k);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            data.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {tok:?}: {e}", row + 1)))?,
            );
        }
        if data.len() - before != k {
            return Err(Error::Parse(format!("row {} has {} entries, expected {k}", row + 1, data.len() - before)));
        }
    }
    if data.len() != n * k {
        return Err(Error::Parse(format!("expected {n} rows, found {}", data.len() / k.max(1))));
    }
    Ok(DMatrix::from_row_slice(n, k, &data))
}

pub(crate) fn require_square<T: Scalar>(a: &DMatrix<T>, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be square, got {}x{}", a.nrows(), a.ncols())))
    }
}
