//! Small dense helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

/// Returns `(X + X^T) / 2`.
pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

pub fn symmetrize_in_place(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending and
/// the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

fn to_faer(x: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

/// Symmetric eigendecomposition reading the lower triangle of `x`.
/// Returns `None` when the iteration fails to converge.
pub fn sym_eigen(x: &DMatrix<f64>) -> Option<SymEigen> {
    let n = x.nrows();
    if n == 0 {
        return Some(SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = to_faer(x).self_adjoint_eigen(faer::Side::Lower).ok()?;
    let s = eig.S().column_vector();
    let u = eig.U();
    Some(SymEigen {
        values: DVector::from_fn(n, |i, _| s[i]),
        vectors: DMatrix::from_fn(n, n, |i, j| u[(i, j)]),
    })
}

/// Eigenvalues of a symmetric matrix, sorted ascending. A failed
/// decomposition yields NaN entries.
pub fn sym_eigenvalues(x: &DMatrix<f64>) -> Vec<f64> {
    if x.nrows() == 0 {
        return Vec::new();
    }
    let mut ev = to_faer(x)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .unwrap_or_else(|_| vec![f64::NAN; x.nrows()]);
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(x: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(x).first().copied().unwrap_or(0.0)
}

/// Frobenius inner product `tr(A^T B)`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn quad_form(m: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(m * w))
}

pub fn is_symmetric(x: &DMatrix<f64>, tol: f64) -> bool {
    if !x.is_square() {
        return false;
    }
    let n = x.nrows();
    let scale = x.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (x[(i, j)] - x[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}
