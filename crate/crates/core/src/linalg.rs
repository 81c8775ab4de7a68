use nalgebra::{SymmetricEigen, SVD};

use crate::model::{Matrix, Vector};

/// Orthonormal basis of `{y : M y = 0}`; singular values below
/// `rel_tol · σ_max` count as zero.
pub fn null_space(m: &Matrix, rel_tol: f64) -> Vec<Vector> {
    let d = m.ncols();
    if d == 0 {
        return Vec::new();
    }
    // pad so the SVD returns a full d×d right factor
    let rows = m.nrows().max(d);
    let mut padded = Matrix::zeros(rows, d);
    padded.view_mut((0, 0), (m.nrows(), d)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return (0..d)
            .map(|i| Vector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 }))
            .collect();
    }
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= rel_tol * smax)
        .map(|(i, _)| vt.row(i).transpose())
        .collect()
}

/// Stacks row vectors into a matrix with `dim` columns.
pub fn stack_rows(rows: &[&Vector], dim: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), dim);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from(&r.transpose());
    }
    m
}

/// Columns spanning the orthogonal complement of `basis` in `R^dim`.
pub fn orthogonal_complement(basis: &[Vector], dim: usize) -> Matrix {
    if basis.is_empty() {
        return Matrix::identity(dim, dim);
    }
    let refs: Vec<&Vector> = basis.iter().collect();
    let comp = null_space(&stack_rows(&refs, dim), 1e-10);
    let mut q = Matrix::zeros(dim, comp.len());
    for (j, v) in comp.iter().enumerate() {
        q.set_column(j, v);
    }
    q
}

/// Symmetric square root of a positive-semidefinite matrix; negative
/// eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(c: &Matrix) -> Matrix {
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}
