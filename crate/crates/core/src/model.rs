//! Instance data, assumption checks and the four parametric problem families.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cones::{AmbientVector, ConeSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// How the Gram matrix `G = M Mᵀ` enters the nonstandard families and maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GramMode {
    /// Right-hand sides use `G·u`, map values use `G⁻¹·M·(x − d)`.
    #[default]
    Correct,
    /// Parameters are taken as M-row coordinates: right-hand sides use `u`,
    /// map values use `M·(x − d)`. Agrees with `Correct` when `G = I`.
    Substitute,
}

/// Unvalidated instance data.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInstance {
    pub space: ConeSpec,
    pub a: DMatrix<f64>,
    pub b: Option<DMatrix<f64>>,
    pub m: DMatrix<f64>,
    pub c: AmbientVector,
    pub d: AmbientVector,
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTolerances {
    /// Relative orthogonality tolerance, scaled by `1 + max |entry|`.
    pub orth_rel: f64,
    /// Relative singular value threshold for rank decisions.
    pub rank_rel: f64,
}

impl Default for ModelTolerances {
    fn default() -> Self {
        ModelTolerances {
            orth_rel: 1e-8,
            rank_rel: 1e-8,
        }
    }
}

/// A named assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Check {
    OrthogonalityAM,
    OrthogonalityAB,
    OrthogonalityBM,
    RankDeficit,
    SingularGram,
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::OrthogonalityAM => "orthogonality_a_m",
            Check::OrthogonalityAB => "orthogonality_a_b",
            Check::OrthogonalityBM => "orthogonality_b_m",
            Check::RankDeficit => "rank_deficit",
            Check::SingularGram => "singular_gram",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub failed: Vec<Check>,
    pub residual_am: f64,
    pub residual_ab: f64,
    pub residual_bm: f64,
    pub orth_tol: f64,
    pub rank_a: usize,
    pub rank_b: usize,
    pub rank_m: usize,
    /// `q − (rank A + rank B + rank M)`; negative when the ranks overshoot.
    pub rank_deficit: i64,
    pub gram: Vec<Vec<f64>>,
    pub gram_min_eig: f64,
    /// `max |G − I|`.
    pub gram_dev: f64,
    pub assumption2_exact: bool,
    /// True when B was not supplied and was completed.
    pub b_completed: bool,
}

fn check_shapes(raw: &RawInstance) -> Result<()> {
    let q = raw.space.total_dim();
    if raw.a.ncols() != q {
        return Err(Error::dim("columns of A", q, raw.a.ncols()));
    }
    if raw.m.ncols() != q {
        return Err(Error::dim("columns of M", q, raw.m.ncols()));
    }
    if raw.m.nrows() == 0 {
        return Err(Error::dim("rows of M", 1, 0));
    }
    if let Some(b) = &raw.b {
        if b.ncols() != q {
            return Err(Error::dim("columns of B", q, b.ncols()));
        }
    }
    if raw.c.len() != q {
        return Err(Error::dim("length of c", q, raw.c.len()));
    }
    if raw.d.len() != q {
        return Err(Error::dim("length of d", q, raw.d.len()));
    }
    Ok(())
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

/// Check pairwise orthogonality, the direct-sum rank condition and the Gram matrix.
pub fn validate_instance(raw: &RawInstance, tol: &ModelTolerances) -> Result<ValidationReport> {
    check_shapes(raw)?;
    let q = raw.space.total_dim();
    let gram = &raw.m * raw.m.transpose();
    let r = gram.nrows();
    let sm = linalg::sigma_max(&raw.m);
    let gram_min_eig = linalg::sym_min_eig(&gram);
    if gram_min_eig <= (tol.rank_rel * sm).powi(2) {
        return Err(Error::SingularGram {
            min_eig: gram_min_eig,
        });
    }
    let (b, b_completed) = match &raw.b {
        Some(b) => (b.clone(), false),
        None => (complete_basis_with(&raw.a, Some(&raw.m), tol)?, true),
    };
    let scale = max_abs(&raw.a).max(max_abs(&b)).max(max_abs(&raw.m));
    let orth_tol = tol.orth_rel * (1.0 + scale);
    let residual_am = max_abs(&(&raw.a * raw.m.transpose()));
    let residual_ab = max_abs(&(&raw.a * b.transpose()));
    let residual_bm = max_abs(&(&b * raw.m.transpose()));
    let rank_a = linalg::rank(&raw.a, tol.rank_rel);
    let rank_b = linalg::rank(&b, tol.rank_rel);
    let rank_m = linalg::rank(&raw.m, tol.rank_rel);
    let rank_deficit = q as i64 - (rank_a + rank_b + rank_m) as i64;
    let mut failed = Vec::new();
    if residual_am > orth_tol {
        failed.push(Check::OrthogonalityAM);
    }
    if residual_ab > orth_tol {
        failed.push(Check::OrthogonalityAB);
    }
    if residual_bm > orth_tol {
        failed.push(Check::OrthogonalityBM);
    }
    if rank_deficit != 0 {
        failed.push(Check::RankDeficit);
    }
    let gram_dev = max_abs(&(&gram - DMatrix::identity(r, r)));
    Ok(ValidationReport {
        pass: failed.is_empty(),
        failed,
        residual_am,
        residual_ab,
        residual_bm,
        orth_tol,
        rank_a,
        rank_b,
        rank_m,
        rank_deficit,
        gram: (0..r).map(|i| gram.row(i).iter().copied().collect()).collect(),
        gram_min_eig,
        gram_dev,
        assumption2_exact: gram_dev <= orth_tol,
        b_completed,
    })
}

/// Orthonormal rows spanning the complement of `R(Aᵀ) ⊕ R(Mᵀ)`.
pub fn complete_basis(a: &DMatrix<f64>, m: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    complete_basis_with(a, m, &ModelTolerances::default())
}

fn complete_basis_with(
    a: &DMatrix<f64>,
    m: Option<&DMatrix<f64>>,
    tol: &ModelTolerances,
) -> Result<DMatrix<f64>> {
    let q = a.ncols();
    let stacked = match m {
        Some(m) => {
            if m.ncols() != q {
                return Err(Error::dim("columns of M", q, m.ncols()));
            }
            let scale = max_abs(a).max(max_abs(m));
            let residual = max_abs(&(a * m.transpose()));
            if residual > tol.orth_rel * (1.0 + scale) {
                return Err(Error::OrthogonalityViolation { residual });
            }
            let mut s = DMatrix::zeros(a.nrows() + m.nrows(), q);
            s.rows_mut(0, a.nrows()).copy_from(a);
            s.rows_mut(a.nrows(), m.nrows()).copy_from(m);
            s
        }
        None => a.clone(),
    };
    let rb = linalg::independent_rows(&stacked, tol.rank_rel);
    Ok(linalg::complement_rows(&rb.q, q))
}

/// A validated instance together with its derived data.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcloInstance {
    space: ConeSpec,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    m: DMatrix<f64>,
    c: AmbientVector,
    d: AmbientVector,
    rhs_b: DVector<f64>,
    rhs_a: DVector<f64>,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    assumption2_exact: bool,
    gram_mode: GramMode,
    labels: BTreeMap<String, String>,
    report: ValidationReport,
}

impl MpcloInstance {
    /// Validate and build. Fails with the first failing check when the
    /// assumptions do not hold.
    pub fn new(raw: RawInstance) -> Result<Self> {
        Self::with_tolerances(raw, &ModelTolerances::default())
    }

    pub fn with_tolerances(raw: RawInstance, tol: &ModelTolerances) -> Result<Self> {
        let report = validate_instance(&raw, tol)?;
        if !report.pass {
            return Err(Error::Validation(report.failed[0].name().to_string()));
        }
        let b = match raw.b {
            Some(b) => b,
            None => complete_basis_with(&raw.a, Some(&raw.m), tol)?,
        };
        let gram = &raw.m * raw.m.transpose();
        let gram_inv = gram
            .clone()
            .try_inverse()
            .ok_or(Error::SingularGram { min_eig: 0.0 })?;
        let rhs_b = &raw.a * &raw.d;
        let rhs_a = &b * &raw.c;
        Ok(MpcloInstance {
            space: raw.space,
            a: raw.a,
            b,
            m: raw.m,
            c: raw.c,
            d: raw.d,
            rhs_b,
            rhs_a,
            gram,
            gram_inv,
            assumption2_exact: report.assumption2_exact,
            gram_mode: GramMode::Correct,
            labels: raw.labels,
            report,
        })
    }

    pub fn with_gram_mode(mut self, mode: GramMode) -> Self {
        self.gram_mode = mode;
        self
    }

    pub fn space(&self) -> &ConeSpec {
        &self.space
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }
    pub fn c(&self) -> &AmbientVector {
        &self.c
    }
    pub fn d(&self) -> &AmbientVector {
        &self.d
    }
    /// `A·d`.
    pub fn rhs_b(&self) -> &DVector<f64> {
        &self.rhs_b
    }
    /// `B·c`.
    pub fn rhs_a(&self) -> &DVector<f64> {
        &self.rhs_a
    }
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }
    pub fn assumption2_exact(&self) -> bool {
        self.assumption2_exact
    }
    pub fn gram_mode(&self) -> GramMode {
        self.gram_mode
    }
    pub fn labels(&self) -> &BTreeMap<String, String> {
        &self.labels
    }
    pub fn report(&self) -> &ValidationReport {
        &self.report
    }
    pub fn q(&self) -> usize {
        self.space.total_dim()
    }
    pub fn r(&self) -> usize {
        self.m.nrows()
    }

    /// Raw data, with B filled in.
    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            space: self.space.clone(),
            a: self.a.clone(),
            b: Some(self.b.clone()),
            m: self.m.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            labels: self.labels.clone(),
        }
    }

    pub(crate) fn check_param(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.r() {
            return Err(Error::ParamDimensionMismatch {
                expected: self.r(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Parameter term in the nonstandard right-hand sides.
    pub fn param_rhs(&self, p: &DVector<f64>) -> DVector<f64> {
        match self.gram_mode {
            GramMode::Correct => &self.gram * p,
            GramMode::Substitute => p.clone(),
        }
    }

    /// Parameter coordinates of an M-row displacement `M·z`.
    pub fn param_coords(&self, mz: &DVector<f64>) -> DVector<f64> {
        match self.gram_mode {
            GramMode::Correct => &self.gram_inv * mz,
            GramMode::Substitute => mz.clone(),
        }
    }

    /// Matrix of [`Self::param_coords`].
    pub fn coords_matrix(&self) -> DMatrix<f64> {
        match self.gram_mode {
            GramMode::Correct => self.gram_inv.clone(),
            GramMode::Substitute => DMatrix::identity(self.r(), self.r()),
        }
    }

    /// `c + Mᵀu`.
    pub fn primal_objective(&self, u: &DVector<f64>) -> AmbientVector {
        &self.c + self.m.transpose() * u
    }

    /// `d + Mᵀv`.
    pub fn dual_objective(&self, v: &DVector<f64>) -> AmbientVector {
        &self.d + self.m.transpose() * v
    }
}

/// The four parametric problem families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `min ⟨c+Mᵀu, x⟩ s.t. Ax = b, x ∈ K`.
    Primal,
    /// `min ⟨d+Mᵀv, y⟩ s.t. By = a, y ∈ K`.
    Dual,
    /// `min ⟨d, y⟩ s.t. By = a, My = Mc + G·u, y ∈ K`.
    NsDualOfPrimal,
    /// `min ⟨c, x⟩ s.t. Ax = b, Mx = Md + G·v, x ∈ K`.
    NsDualOfDual,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Primal => "primal",
            Family::Dual => "dual",
            Family::NsDualOfPrimal => "nsdual-p",
            Family::NsDualOfDual => "nsdual-d",
        }
    }
}

/// A conic program `min ⟨objective, x⟩ s.t. eq_matrix·x = eq_rhs, x ∈ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardProblem {
    pub objective: AmbientVector,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub space: ConeSpec,
    pub family: Option<Family>,
    pub param: DVector<f64>,
}

impl StandardProblem {
    /// A problem outside the four families.
    pub fn plain(
        objective: AmbientVector,
        eq_matrix: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        space: ConeSpec,
    ) -> Self {
        StandardProblem {
            objective,
            eq_matrix,
            eq_rhs,
            space,
            family: None,
            param: DVector::zeros(0),
        }
    }
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    s.rows_mut(0, top.nrows()).copy_from(top);
    s.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    s
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Build one family member in standard conic form.
pub fn assemble(inst: &MpcloInstance, family: Family, param: &DVector<f64>) -> Result<StandardProblem> {
    inst.check_param(param)?;
    let (objective, eq_matrix, eq_rhs) = match family {
        Family::Primal => (inst.primal_objective(param), inst.a.clone(), inst.rhs_b.clone()),
        Family::Dual => (inst.dual_objective(param), inst.b.clone(), inst.rhs_a.clone()),
        Family::NsDualOfPrimal => (
            inst.d.clone(),
            stack(&inst.b, &inst.m),
            concat(&inst.rhs_a, &(&inst.m * &inst.c + inst.param_rhs(param))),
        ),
        Family::NsDualOfDual => (
            inst.c.clone(),
            stack(&inst.a, &inst.m),
            concat(&inst.rhs_b, &(&inst.m * &inst.d + inst.param_rhs(param))),
        ),
    };
    Ok(StandardProblem {
        objective,
        eq_matrix,
        eq_rhs,
        space: inst.space.clone(),
        family: Some(family),
        param: param.clone(),
    })
}
