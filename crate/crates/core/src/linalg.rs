//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending order.
///
/// The input is symmetrized first. Equal eigenvalues keep the order the
/// decomposition returned them in. Each eigenvector is signed so that its
/// largest-magnitude coordinate is positive.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen_desc needs a square matrix");
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: ties keep ascending original index
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: DVector<f64> = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Flips `v` so its largest-magnitude coordinate (first one on ties) is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Operator (spectral) norm of a symmetric matrix.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Operator norm of a general matrix (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    sym_op_norm(&gram).max(0.0).sqrt()
}

/// Orthonormal basis for the column span of `m` (modified Gram–Schmidt, two passes).
///
/// Columns whose residual norm falls below `drop_tol` times their original
/// norm are discarded, so the result may have fewer columns than `m`.
pub fn orthonormal_columns(m: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let original: DVector<f64> = m.column(j).into_owned();
        let norm0 = original.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = original;
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_tol * norm0 {
            kept.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(rows, kept.len());
    for (j, q) in kept.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}

/// Basis of the orthogonal complement of the column span of an orthonormal `basis`.
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let mut stacked = DMatrix::zeros(n, basis.ncols() + n);
    stacked.columns_mut(0, basis.ncols()).copy_from(basis);
    stacked
        .columns_mut(basis.ncols(), n)
        .copy_from(&DMatrix::identity(n, n));
    let full = orthonormal_columns(&stacked, 1e-8);
    full.columns(basis.ncols(), full.ncols() - basis.ncols())
        .into_owned()
}
