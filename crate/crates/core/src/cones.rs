//! Products of nonnegative orthants and PSD cones in a flat vector space.
//!
//! PSD blocks are stored with the scaled upper-triangular vectorization: the
//! diagonal as-is and each off-diagonal pair once, multiplied by √2, so that the
//! plain dot product equals the trace inner product.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat coordinates of an element of the ambient space.
pub type AmbientVector = DVector<f64>;

/// Absolute eigenvalue tolerance.
pub const EIG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Orthant(usize),
    Psd(usize),
}

impl Block {
    /// Number of flat coordinates used by the block.
    pub fn vec_dim(&self) -> usize {
        match *self {
            Block::Orthant(n) => n,
            Block::Psd(n) => n * (n + 1) / 2,
        }
    }

    /// Contribution to the barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Block::Orthant(n) | Block::Psd(n) => n,
        }
    }
}

/// A self-dual cone given as a product of blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConeSpec {
    blocks: Vec<Block>,
    total_dim: usize,
}

impl ConeSpec {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidCone("no blocks".into()));
        }
        if blocks.iter().any(|b| b.degree() == 0) {
            return Err(Error::InvalidCone("block of size zero".into()));
        }
        let total_dim = blocks.iter().map(Block::vec_dim).sum();
        Ok(ConeSpec { blocks, total_dim })
    }

    pub fn orthant(n: usize) -> Result<Self> {
        Self::new(vec![Block::Orthant(n)])
    }

    pub fn psd(n: usize) -> Result<Self> {
        Self::new(vec![Block::Psd(n)])
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn degree(&self) -> usize {
        self.blocks.iter().map(Block::degree).sum()
    }

    /// The dual cone. Every supported block is self-dual.
    pub fn dual(&self) -> ConeSpec {
        self.clone()
    }

    pub fn is_orthant_only(&self) -> bool {
        self.blocks.iter().all(|b| matches!(b, Block::Orthant(_)))
    }

    /// Blocks paired with their coordinate ranges.
    pub fn ranges(&self) -> Vec<(Block, Range<usize>)> {
        let mut off = 0;
        self.blocks
            .iter()
            .map(|b| {
                let r = off..off + b.vec_dim();
                off += b.vec_dim();
                (*b, r)
            })
            .collect()
    }

    /// Central element: all-ones on orthants, identity on PSD blocks.
    pub fn identity(&self) -> AmbientVector {
        let mut e = DVector::zeros(self.total_dim);
        for (b, r) in self.ranges() {
            match b {
                Block::Orthant(_) => e.rows_mut(r.start, r.len()).fill(1.0),
                Block::Psd(n) => {
                    for i in 0..n {
                        e[r.start + tri_index(n, i, i)] = 1.0;
                    }
                }
            }
        }
        e
    }

    fn check_len(&self, z: &AmbientVector) -> Result<()> {
        if z.len() != self.total_dim {
            return Err(Error::dim("ambient vector", self.total_dim, z.len()));
        }
        Ok(())
    }
}

/// Position of entry (i, j), i ≤ j, in the row-major upper triangle.
pub(crate) fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

fn sym_tol(x: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + x.amax())
}

/// Scaled vectorization of a symmetric matrix.
pub fn svec(x: &DMatrix<f64>) -> Result<AmbientVector> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::dim("square matrix", n, x.ncols()));
    }
    let asym = (x - x.transpose()).amax();
    if asym > sym_tol(x) {
        return Err(Error::AsymmetricInput { asymmetry: asym });
    }
    Ok(svec_unchecked(x))
}

pub(crate) fn svec_unchecked(x: &DMatrix<f64>) -> AmbientVector {
    let n = x.nrows();
    let mut v = DVector::zeros(n * (n + 1) / 2);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            v[k] = if i == j {
                x[(i, i)]
            } else {
                0.5 * (x[(i, j)] + x[(j, i)]) * std::f64::consts::SQRT_2
            };
            k += 1;
        }
    }
    v
}

/// Inverse of [`svec`] for a block of order `n`.
pub fn smat(v: &[f64], n: usize) -> Result<DMatrix<f64>> {
    if v.len() != n * (n + 1) / 2 {
        return Err(Error::dim("svec length", n * (n + 1) / 2, v.len()));
    }
    Ok(smat_unchecked(v, n))
}

/// `v / √2`, nudged by a few ulps so that `svec` maps it back to `v` exactly
/// whenever such a float exists.
fn unscale(v: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    let a = v / s;
    if a * s == v || !a.is_finite() {
        return a;
    }
    let (mut lo, mut hi) = (a, a);
    for _ in 0..4 {
        lo = lo.next_down();
        hi = hi.next_up();
        if lo * s == v {
            return lo;
        }
        if hi * s == v {
            return hi;
        }
    }
    a
}

pub(crate) fn smat_unchecked(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            if i == j {
                x[(i, i)] = v[k];
            } else {
                let e = unscale(v[k]);
                x[(i, j)] = e;
                x[(j, i)] = e;
            }
            k += 1;
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Membership {
    Interior { margin: f64 },
    Boundary { margin: f64 },
    Outside { violation: f64 },
}

impl Membership {
    pub fn margin(&self) -> f64 {
        match *self {
            Membership::Interior { margin } | Membership::Boundary { margin } => margin,
            Membership::Outside { violation } => -violation,
        }
    }

    pub fn classify(margin: f64, tol: f64) -> Self {
        if margin > tol {
            Membership::Interior { margin }
        } else if margin < -tol {
            Membership::Outside { violation: -margin }
        } else {
            Membership::Boundary { margin }
        }
    }
}

/// Smallest entry or eigenvalue over all blocks.
pub fn cone_margin(z: &AmbientVector, spec: &ConeSpec) -> Result<f64> {
    spec.check_len(z)?;
    Ok(margin_unchecked(z.as_slice(), spec))
}

pub(crate) fn margin_unchecked(z: &[f64], spec: &ConeSpec) -> f64 {
    let mut m = f64::INFINITY;
    for (b, r) in spec.ranges() {
        let blk = &z[r];
        let bm = match b {
            Block::Orthant(_) => blk.iter().copied().fold(f64::INFINITY, f64::min),
            Block::Psd(n) => {
                let x = smat_unchecked(blk, n);
                x.symmetric_eigenvalues().min()
            }
        };
        m = m.min(bm);
    }
    m
}

pub fn cone_membership(z: &AmbientVector, spec: &ConeSpec, tol: f64) -> Result<Membership> {
    Ok(Membership::classify(cone_margin(z, spec)?, tol))
}

/// Euclidean projection onto the cone.
pub fn project_cone(z: &AmbientVector, spec: &ConeSpec) -> Result<AmbientVector> {
    spec.check_len(z)?;
    let mut out = z.clone();
    for (b, r) in spec.ranges() {
        match b {
            Block::Orthant(_) => {
                for i in r {
                    out[i] = out[i].max(0.0);
                }
            }
            Block::Psd(n) => {
                let x = smat_unchecked(&z.as_slice()[r.clone()], n);
                let eig = SymmetricEigen::new(x);
                let clipped = eig.eigenvalues.map(|l| l.max(0.0));
                let p = &eig.eigenvectors
                    * DMatrix::from_diagonal(&clipped)
                    * eig.eigenvectors.transpose();
                out.rows_mut(r.start, r.len()).copy_from(&svec_unchecked(&p));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    }

    #[test]
    fn trace_product_of_ones_and_identity() {
        let x = svec(&m2(1.0, 1.0, 1.0)).unwrap();
        let y = svec(&DMatrix::identity(2, 2)).unwrap();
        assert!((x.dot(&y) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn smat_inverts_svec() {
        let x = m2(2.0, 1.0, 2.0);
        assert_eq!(smat(svec(&x).unwrap().as_slice(), 2).unwrap(), x);
    }

    #[test]
    fn svec_of_lower_unit() {
        let m = m2(0.0, 0.0, 1.0);
        let v = svec(&m).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(v.dot(&v), 1.0);
    }

    #[test]
    fn svec_rejects_asymmetry() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(svec(&x), Err(Error::AsymmetricInput { .. })));
    }

    #[test]
    fn membership_examples() {
        let spec = ConeSpec::psd(2).unwrap();
        let id = svec(&DMatrix::identity(2, 2)).unwrap();
        match cone_membership(&id, &spec, EIG_TOL).unwrap() {
            Membership::Interior { margin } => assert!((margin - 1.0).abs() < 1e-14),
            m => panic!("{m:?}"),
        }
        let ones = svec(&m2(1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(
            cone_membership(&ones, &spec, EIG_TOL).unwrap(),
            Membership::Boundary { .. }
        ));
        let o = ConeSpec::orthant(2).unwrap();
        match cone_membership(&DVector::from_vec(vec![1.0, -0.1]), &o, EIG_TOL).unwrap() {
            Membership::Outside { violation } => assert!((violation - 0.1).abs() < 1e-15),
            m => panic!("{m:?}"),
        }
        assert!(cone_membership(&DVector::zeros(3), &o, EIG_TOL).is_err());
    }

    #[test]
    fn projection_examples() {
        let o = ConeSpec::orthant(2).unwrap();
        let p = project_cone(&DVector::from_vec(vec![1.0, -2.0]), &o).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
        let s = ConeSpec::psd(2).unwrap();
        let p = project_cone(&svec(&m2(3.0, 0.0, -1.0)).unwrap(), &s).unwrap();
        assert!((p - svec(&m2(3.0, 0.0, 0.0)).unwrap()).amax() < 1e-14);
        let z = svec(&m2(2.0, 1.0, 2.0)).unwrap();
        assert!((project_cone(&z, &s).unwrap() - &z).amax() < 1e-14);
    }

    #[test]
    fn identity_element_layout() {
        let spec = ConeSpec::new(vec![Block::Orthant(2), Block::Psd(2)]).unwrap();
        assert_eq!(spec.total_dim(), 5);
        assert_eq!(spec.identity().as_slice(), &[1.0, 1.0, 1.0, 0.0, 1.0]);
        assert_eq!(spec.degree(), 4);
        assert!(ConeSpec::new(vec![Block::Psd(0)]).is_err());
    }
}
