//! Optimal faces recovered from a strictly complementary interior-point pair.
//!
//! The face is the set `{x = L·z : z ∈ K', E·L·z = rhs, ⟨c, L·z⟩ = value}` where
//! `L` lifts a smaller cone `K'` onto the face of `K` spanned by the range of `x`.

use nalgebra::{DMatrix, DVector};

use super::{solve_conic, FaceSupport, SolverOptions, Status, SupportValue};
use crate::cones::{margin_unchecked, smat_unchecked, svec_unchecked, Block, ConeSpec};
use crate::error::Result;
use crate::linalg;

/// An optimal face in reduced coordinates.
#[derive(Debug, Clone)]
pub struct OptimalFace {
    lift: DMatrix<f64>,
    space: Option<ConeSpec>,
    eq: DMatrix<f64>,
    rhs: DVector<f64>,
    null: DMatrix<f64>,
    z0: DVector<f64>,
    consistent: bool,
    center: DVector<f64>,
    ambient: ConeSpec,
}

impl OptimalFace {
    /// Build the face from an optimal primal-dual pair.
    pub(crate) fn identify(
        objective: &DVector<f64>,
        eq_matrix: &DMatrix<f64>,
        eq_rhs: &DVector<f64>,
        space: &ConeSpec,
        x: &DVector<f64>,
        s: &DVector<f64>,
        value: f64,
    ) -> Self {
        let q = space.total_dim();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let mut blocks = Vec::new();
        for (b, range) in space.ranges() {
            match b {
                Block::Orthant(_) => {
                    let mut k = 0;
                    for i in range {
                        if x[i] >= s[i] {
                            let mut col = DVector::zeros(q);
                            col[i] = 1.0;
                            cols.push(col);
                            k += 1;
                        }
                    }
                    if k > 0 {
                        blocks.push(Block::Orthant(k));
                    }
                }
                Block::Psd(n) => {
                    let xm = smat_unchecked(&x.as_slice()[range.clone()], n);
                    let sm = smat_unchecked(&s.as_slice()[range.clone()], n);
                    let (vals, vecs) = linalg::sym_eig(&xm);
                    let keep: Vec<usize> = (0..n)
                        .filter(|&j| {
                            let v = vecs.column(j);
                            vals[j] >= (v.transpose() * &sm * v)[(0, 0)]
                        })
                        .collect();
                    let k = keep.len();
                    if k == 0 {
                        continue;
                    }
                    let qm = vecs.select_columns(&keep);
                    let dim = k * (k + 1) / 2;
                    let mut e = vec![0.0; dim];
                    for j in 0..dim {
                        e[j] = 1.0;
                        let zm = smat_unchecked(&e, k);
                        let blk = svec_unchecked(&(&qm * zm * qm.transpose()));
                        let mut col = DVector::zeros(q);
                        col.rows_mut(range.start, range.len()).copy_from(&blk);
                        cols.push(col);
                        e[j] = 0.0;
                    }
                    blocks.push(Block::Psd(k));
                }
            }
        }
        let k = cols.len();
        let lift = if k == 0 {
            DMatrix::zeros(q, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        let mut full = DMatrix::zeros(eq_matrix.nrows() + 1, q);
        full.rows_mut(0, eq_matrix.nrows()).copy_from(eq_matrix);
        full.row_mut(eq_matrix.nrows()).copy_from(&objective.transpose());
        let mut full_rhs = DVector::zeros(eq_rhs.len() + 1);
        full_rhs.rows_mut(0, eq_rhs.len()).copy_from(eq_rhs);
        full_rhs[eq_rhs.len()] = value;
        let reduced = &full * &lift;
        let rb = linalg::independent_rows(&reduced, 1e-9);
        let eq = reduced.select_rows(&rb.kept);
        let rhs = DVector::from_iterator(rb.kept.len(), rb.kept.iter().map(|&i| full_rhs[i]));
        let null = linalg::complement_rows(&rb.q, k).transpose();
        let (z0, res) = if k == 0 {
            (DVector::zeros(0), full_rhs.amax())
        } else {
            linalg::min_norm_solve(&reduced, &full_rhs, 1e-9)
        };
        let scale = 1.0 + full_rhs.amax() + z0.amax();
        let consistent = res <= 1e-7 * scale;
        OptimalFace {
            lift,
            space: ConeSpec::new(blocks).ok(),
            eq,
            rhs,
            null,
            z0,
            consistent,
            center: x.clone(),
            ambient: space.clone(),
        }
    }

    /// Dimension of the affine hull of the face (as identified).
    pub fn dimension(&self) -> usize {
        self.null.ncols()
    }

    /// True when the reduced equalities were consistent.
    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    /// The interior-point solution the face was built from.
    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// The unique face point when the face is zero-dimensional and the
    /// reduced solution lies in the cone.
    pub fn vertex(&self) -> Option<DVector<f64>> {
        if self.dimension() != 0 || !self.consistent {
            return None;
        }
        let z = &self.z0;
        if let Some(sp) = &self.space {
            let marg = margin_unchecked(z.as_slice(), sp);
            if marg < -1e-9 * (1.0 + z.amax()) {
                return None;
            }
        }
        Some(&self.lift * z)
    }

    /// True when `proj·x` takes a single value over the face.
    pub fn constant_under(&self, proj: &DMatrix<f64>, tol: f64) -> bool {
        if self.dimension() == 0 {
            return true;
        }
        let img = proj * &self.lift * &self.null;
        img.amax() <= tol
    }

    /// `max ⟨g, x⟩` over the face.
    pub fn support(&self, g: &DVector<f64>, opts: &SolverOptions) -> Result<Option<FaceSupport>> {
        if self.dimension() == 0 {
            let Some(v) = self.vertex() else {
                return Ok(None);
            };
            return Ok(Some(FaceSupport {
                value: SupportValue::Finite(g.dot(&v)),
                argmax: Some(v),
            }));
        }
        let Some(space) = &self.space else {
            return Ok(None);
        };
        let gz = -(self.lift.transpose() * g);
        let inner = SolverOptions {
            attain_check: false,
            refine: false,
            ..*opts
        };
        let res = solve_conic(&gz, &self.eq, &self.rhs, space, &inner)?;
        Ok(match res.status {
            Status::Optimal => {
                let x = &self.lift * &res.x;
                Some(FaceSupport {
                    value: SupportValue::Finite(g.dot(&x)),
                    argmax: Some(x),
                })
            }
            Status::Unbounded => Some(FaceSupport {
                value: SupportValue::Unbounded,
                argmax: Some(&self.lift * &res.x),
            }),
            Status::Infeasible => None,
            _ => self.bounded_support(g, space, &inner)?,
        })
    }

    /// Support over the face cut by a large trace ball, for suprema that are
    /// approached but not attained.  The argmax is dropped since it is not a
    /// face point in the limit.  A value that still grows with the ball means
    /// the face is unbounded along `g`.
    fn bounded_support(&self, g: &DVector<f64>, space: &ConeSpec, opts: &SolverOptions) -> Result<Option<FaceSupport>> {
        let radius = opts.attain_bound * (1.0 + self.rhs.amax() + self.z0.amax());
        let Some(big) = self.ball_support(g, space, radius, opts)? else {
            return Ok(None);
        };
        let Some(small) = self.ball_support(g, space, 0.1 * radius, opts)? else {
            return Ok(None);
        };
        let value = if big - small > 1e-4 * (1.0 + big.abs()) {
            SupportValue::Unbounded
        } else {
            SupportValue::Finite(big)
        };
        Ok(Some(FaceSupport { value, argmax: None }))
    }

    fn ball_support(&self, g: &DVector<f64>, space: &ConeSpec, radius: f64, opts: &SolverOptions) -> Result<Option<f64>> {
        let k = self.lift.ncols();
        let tr = self.lift.transpose() * self.ambient.identity();
        let m = self.eq.nrows();
        let mut a = DMatrix::zeros(m + 1, k + 1);
        a.view_mut((0, 0), (m, k)).copy_from(&self.eq);
        a.view_mut((m, 0), (1, k)).copy_from(&tr.transpose());
        a[(m, k)] = 1.0;
        let mut b = DVector::zeros(m + 1);
        b.rows_mut(0, m).copy_from(&self.rhs);
        b[m] = radius;
        let mut c = DVector::zeros(k + 1);
        c.rows_mut(0, k).copy_from(&(-(self.lift.transpose() * g)));
        let mut blocks = space.blocks().to_vec();
        blocks.push(Block::Orthant(1));
        let aug = ConeSpec::new(blocks)?;
        let res = solve_conic(&c, &a, &b, &aug, opts)?;
        // the large radius costs accuracy; a stalled but nearly optimal
        // iterate is good enough for a support value
        let usable = res.status == Status::Optimal
            || (res.status == Status::NumericalTrouble
                && res.primal_res <= 1e-7
                && res.dual_res <= 1e-7
                && res.gap <= 1e-6 * (1.0 + res.objective.abs()));
        Ok(usable.then(|| g.dot(&(&self.lift * res.x.rows(0, k)))))
    }

    /// A face point of smallest trace, used to certify attainment.
    pub(crate) fn min_trace_point(&self, space_full: &ConeSpec, opts: &SolverOptions) -> Result<Option<DVector<f64>>> {
        if self.dimension() == 0 {
            return Ok(self.vertex());
        }
        let Some(space) = &self.space else {
            return Ok(None);
        };
        let e = space_full.identity();
        let obj = self.lift.transpose() * e;
        let inner = SolverOptions {
            attain_check: false,
            refine: false,
            ..*opts
        };
        let res = solve_conic(&obj, &self.eq, &self.rhs, space, &inner)?;
        Ok(if res.status == Status::Optimal {
            Some(&self.lift * &res.x)
        } else {
            None
        })
    }
}
