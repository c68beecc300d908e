//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Largest singular value.
pub(crate) fn sigma_max(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().max()
}

/// Numerical rank with threshold `rel * sigma_max`.
pub(crate) fn rank(a: &DMatrix<f64>, rel: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * smax).count()
}

/// Row selection by pivoted Gram-Schmidt.
pub(crate) struct RowBasis {
    /// Indices of the kept rows, in pivot order.
    pub kept: Vec<usize>,
    /// Orthonormal basis of the row space, one basis vector per row.
    pub q: DMatrix<f64>,
}

/// Pick a maximal independent subset of rows. A row is dependent when its
/// residual after orthogonalization is below `rel` times the largest row norm.
pub(crate) fn independent_rows(a: &DMatrix<f64>, rel: f64) -> RowBasis {
    let (m, n) = a.shape();
    let scale = (0..m).map(|i| a.row(i).norm()).fold(0.0, f64::max);
    let mut resid: Vec<DVector<f64>> = (0..m).map(|i| a.row(i).transpose()).collect();
    let mut used = vec![false; m];
    let mut kept = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    if scale == 0.0 {
        return RowBasis {
            kept,
            q: DMatrix::zeros(0, n),
        };
    }
    loop {
        let mut best = None;
        let mut best_norm = rel * scale;
        for i in 0..m {
            if !used[i] {
                let nr = resid[i].norm();
                if nr > best_norm {
                    best_norm = nr;
                    best = Some(i);
                }
            }
        }
        let Some(p) = best else { break };
        used[p] = true;
        let mut v = resid[p].clone();
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        let nv = v.norm();
        if nv <= rel * scale {
            continue;
        }
        v /= nv;
        for i in 0..m {
            if !used[i] {
                let c = v.dot(&resid[i]);
                resid[i].axpy(-c, &v, 1.0);
            }
        }
        kept.push(p);
        basis.push(v);
    }
    let mut q = DMatrix::zeros(basis.len(), n);
    for (k, b) in basis.iter().enumerate() {
        q.row_mut(k).copy_from(&b.transpose());
    }
    RowBasis { kept, q }
}

/// Orthonormal rows spanning the orthogonal complement of the row space of `q`,
/// which must already have orthonormal rows.
pub(crate) fn complement_rows(q: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = (0..q.nrows()).map(|i| q.row(i).transpose()).collect();
    let start = basis.len();
    for j in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            basis.push(v / nv);
        }
    }
    let extra = &basis[start..];
    let mut out = DMatrix::zeros(extra.len(), n);
    for (k, b) in extra.iter().enumerate() {
        out.row_mut(k).copy_from(&b.transpose());
    }
    out
}

/// Minimum-norm solution of `a x = b` via the orthonormal row basis.
/// Returns the solution and the residual norm of the full system.
pub(crate) fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel: f64) -> (DVector<f64>, f64) {
    let rb = independent_rows(a, rel);
    let n = a.ncols();
    if rb.kept.is_empty() {
        return (DVector::zeros(n), b.amax());
    }
    let sub = a.select_rows(&rb.kept);
    let rhs = DVector::from_iterator(rb.kept.len(), rb.kept.iter().map(|&i| b[i]));
    let gram = &sub * sub.transpose();
    let y = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(rb.kept.len())),
    };
    let x = sub.transpose() * y;
    let res = (a * &x - b).amax();
    (x, res)
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub(crate) fn sym_eig(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = x.clone().symmetric_eigen();
    let n = x.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = eig.eigenvectors.select_columns(&idx);
    (vals, vecs)
}

pub(crate) fn sym_min_eig(x: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return f64::INFINITY;
    }
    x.symmetric_eigenvalues().min()
}
