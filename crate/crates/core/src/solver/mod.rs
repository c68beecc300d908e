//! Dense conic solver for standard-form problems over orthant/PSD products.

mod face;
mod ipm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use face::OptimalFace;

use crate::cones::{margin_unchecked, AmbientVector, Block, ConeSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::StandardProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalTrouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Objective slack defining the relaxed optimal face.
    pub face_eps: f64,
    /// Iterates larger than this are treated as divergence.
    pub cond_max: f64,
    /// Threshold on `τ` relative to `κ` below which the embedding gives up.
    pub tau_kappa_tol: f64,
    pub step_factor: f64,
    /// Optimal points larger than this (relative to the data) must be
    /// confirmed by a bounded face point, otherwise the infimum is reported
    /// as not attained.
    pub attain_bound: f64,
    pub attain_check: bool,
    /// Replace the interior-point solution by the exact face vertex when the
    /// optimal face is a single point.
    pub polish: bool,
    /// Recentre before reporting an SDP optimum, and report a stalled
    /// iterate as optimal when it is within a hundred times the tolerances.
    /// Off for auxiliary problems whose unboundedness or non-attainment is
    /// itself the answer.
    pub refine: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            face_eps: 1e-7,
            cond_max: 1e14,
            tau_kappa_tol: 1e-8,
            step_factor: 0.99,
            attain_bound: 1e6,
            attain_check: true,
            polish: true,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    /// Primal point; an improving ray when `Unbounded`.
    pub x: AmbientVector,
    /// Equality multipliers; a Farkas certificate when `Infeasible`.
    pub mult: DVector<f64>,
    /// Dual slack `objective − eq_matrixᵀ·mult`.
    pub s: AmbientVector,
    pub objective: f64,
    pub gap: f64,
    /// `‖eq_matrix·x − eq_rhs‖∞ / (1 + ‖eq_rhs‖∞)`.
    pub primal_res: f64,
    /// `‖eq_matrixᵀ·mult + s − objective‖∞ / (1 + ‖objective‖∞)`.
    pub dual_res: f64,
    pub iterations: usize,
    pub note: Option<String>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Solve a standard problem.
pub fn solve(problem: &StandardProblem, opts: &SolverOptions) -> Result<SolveResult> {
    solve_conic(
        &problem.objective,
        &problem.eq_matrix,
        &problem.eq_rhs,
        &problem.space,
        opts,
    )
}

fn check_shapes(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, space: &ConeSpec) -> Result<()> {
    let q = space.total_dim();
    if c.len() != q {
        return Err(Error::dim("objective", q, c.len()));
    }
    if a.ncols() != q {
        return Err(Error::dim("equality columns", q, a.ncols()));
    }
    if a.nrows() != b.len() {
        return Err(Error::dim("equality rows", a.nrows(), b.len()));
    }
    Ok(())
}

/// `min ⟨c, x⟩ s.t. a·x = b, x ∈ K`.
pub fn solve_conic(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    space: &ConeSpec,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    check_shapes(c, a, b, space)?;
    let q = space.total_dim();
    let m_full = a.nrows();
    let rb = linalg::independent_rows(a, 1e-10);
    let ar = a.select_rows(&rb.kept);
    let br = DVector::from_iterator(rb.kept.len(), rb.kept.iter().map(|&i| b[i]));

    if rb.kept.len() < m_full || rb.kept.is_empty() {
        let (x0, res) = linalg::min_norm_solve(a, b, 1e-10);
        if res > 1e-9 * (1.0 + b.amax() + x0.amax()) {
            return Ok(affine_infeasible(a, b, q));
        }
    }

    let out = ipm::hsde(c, &ar, &br, space, opts);
    let mut mult = DVector::zeros(m_full);
    let scatter = |y: &DVector<f64>, mult: &mut DVector<f64>| {
        for (k, &i) in rb.kept.iter().enumerate() {
            mult[i] = y[k];
        }
    };
    let mut result = match out.status {
        Status::Infeasible => {
            let by = br.dot(&out.y);
            scatter(&(&out.y / by), &mut mult);
            SolveResult {
                status: Status::Infeasible,
                x: out.x.clone(),
                s: &out.s / by,
                mult,
                objective: f64::INFINITY,
                gap: f64::NAN,
                primal_res: f64::NAN,
                dual_res: f64::NAN,
                iterations: out.iterations,
                note: None,
            }
        }
        Status::Unbounded => {
            let cx = -c.dot(&out.x);
            scatter(&out.y, &mut mult);
            SolveResult {
                status: Status::Unbounded,
                x: &out.x / cx,
                s: out.s.clone(),
                mult,
                objective: f64::NEG_INFINITY,
                gap: f64::NAN,
                primal_res: f64::NAN,
                dual_res: f64::NAN,
                iterations: out.iterations,
                note: None,
            }
        }
        status => {
            let x = &out.x / out.tau;
            let y = &out.y / out.tau;
            let s = &out.s / out.tau;
            scatter(&y, &mut mult);
            let mt = ipm::metrics(c, &ar, &br, &x, &y, &s);
            SolveResult {
                status,
                objective: mt.pobj,
                gap: (mt.pobj - mt.dobj).abs(),
                primal_res: mt.pres,
                dual_res: mt.dres,
                x,
                s,
                mult,
                iterations: out.iterations,
                note: out.note,
            }
        }
    };
    if result.status == Status::Optimal {
        postprocess(c, a, b, space, opts, &mut result)?;
    }
    Ok(result)
}

fn affine_infeasible(a: &DMatrix<f64>, b: &DVector<f64>, q: usize) -> SolveResult {
    let pinv = a.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(q, a.nrows()));
    let mut y = b - a * (pinv * b);
    let by = b.dot(&y);
    if by > 0.0 {
        y /= by;
    }
    SolveResult {
        status: Status::Infeasible,
        x: DVector::zeros(q),
        s: -(a.transpose() * &y),
        mult: y,
        objective: f64::INFINITY,
        gap: f64::NAN,
        primal_res: f64::NAN,
        dual_res: f64::NAN,
        iterations: 0,
        note: Some("inconsistent equalities".into()),
    }
}

fn refresh(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, r: &mut SolveResult) {
    let mt = ipm::metrics(c, a, b, &r.x, &r.mult, &r.s);
    r.objective = mt.pobj;
    r.gap = (mt.pobj - mt.dobj).abs();
    r.primal_res = mt.pres;
    r.dual_res = mt.dres;
}

/// Attainment check and polishing of an optimal result.
fn postprocess(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    space: &ConeSpec,
    opts: &SolverOptions,
    result: &mut SolveResult,
) -> Result<()> {
    let data_scale = 1.0 + b.amax() + c.amax();
    let big = result.x.amax() > opts.attain_bound * data_scale;
    if !(opts.polish || (opts.attain_check && big)) {
        return Ok(());
    }
    let face = OptimalFace::identify(c, a, b, space, &result.x, &result.s, result.objective);
    if opts.polish {
        if let Some(v) = face.vertex() {
            let old = result.clone();
            result.x = v;
            refresh(c, a, b, result);
            let tol = opts.feas_tol;
            if result.primal_res > tol.max(old.primal_res) || result.gap > opts.gap_tol * (1.0 + result.objective.abs()) {
                *result = old;
            }
        }
    }
    if opts.attain_check && result.x.amax() > opts.attain_bound * data_scale {
        let bounded = if face.is_consistent() {
            face.min_trace_point(space, opts)?
        } else {
            None
        };
        match bounded {
            Some(p) if p.amax() <= opts.attain_bound * data_scale => {
                result.x = p;
                refresh(c, a, b, result);
            }
            _ => {
                result.status = Status::NumericalTrouble;
                result.note = Some("infimum not attained".into());
            }
        }
    }
    Ok(())
}

/// Outcome of a max-margin feasibility test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Feasibility {
    Feasible { point: AmbientVector, margin: f64 },
    Marginal { point: AmbientVector, margin: f64 },
    Infeasible { certificate: Option<DVector<f64>>, violation: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, Feasibility::Infeasible { .. })
    }

    pub fn margin(&self) -> f64 {
        match self {
            Feasibility::Feasible { margin, .. } | Feasibility::Marginal { margin, .. } => *margin,
            Feasibility::Infeasible { violation, .. } => -violation,
        }
    }
}

/// Maximize `t ≤ 1` such that `eq·z = rhs` and `z − t·e ∈ K`, with the
/// trace of `z − t·e` bounded to keep the margin attained.
pub fn check_feasibility(
    eq: &DMatrix<f64>,
    rhs: &DVector<f64>,
    space: &ConeSpec,
    opts: &SolverOptions,
) -> Result<Feasibility> {
    let q = space.total_dim();
    if eq.ncols() != q {
        return Err(Error::dim("equality columns", q, eq.ncols()));
    }
    if eq.nrows() != rhs.len() {
        return Err(Error::dim("equality rows", eq.nrows(), rhs.len()));
    }
    let e = space.identity();
    let ee = eq * &e;
    let bound = 1e4 * (1.0 + rhs.amax());
    let n = q + 2;
    let m = eq.nrows() + 1;
    // Variables: z' (q), ρ, ς.  z = z' + (1 − ρ)e.
    let mut a = DMatrix::zeros(m, n);
    a.view_mut((0, 0), (eq.nrows(), q)).copy_from(eq);
    a.view_mut((0, q), (eq.nrows(), 1)).copy_from(&(-&ee));
    a.view_mut((eq.nrows(), 0), (1, q)).copy_from(&e.transpose());
    a[(eq.nrows(), q + 1)] = 1.0;
    let mut b = DVector::zeros(m);
    b.rows_mut(0, eq.nrows()).copy_from(&(rhs - &ee));
    b[eq.nrows()] = bound;
    let mut c = DVector::zeros(n);
    c[q] = 1.0;
    let mut blocks = space.blocks().to_vec();
    blocks.push(Block::Orthant(2));
    let aug = ConeSpec::new(blocks)?;
    let inner = SolverOptions {
        attain_check: false,
        refine: false,
        polish: false,
        feas_tol: opts.feas_tol * 0.01,
        gap_tol: opts.gap_tol * 0.01,
        ..*opts
    };
    let res = solve_conic(&c, &a, &b, &aug, &inner)?;
    match res.status {
        Status::Optimal | Status::MaxIter | Status::NumericalTrouble => {
            if res.status != Status::Optimal && res.primal_res > 1e-6 {
                return Err(Error::NumericalTrouble(
                    res.note.unwrap_or_else(|| "margin problem failed".into()),
                ));
            }
            let t = 1.0 - res.x[q];
            let z = res.x.rows(0, q).into_owned() + &e * t;
            let exact = margin_unchecked(z.as_slice(), space).min(1.0);
            let margin = if t.abs() <= opts.feas_tol { t } else { exact };
            if margin > opts.feas_tol {
                Ok(Feasibility::Feasible { point: z, margin })
            } else if margin >= -opts.feas_tol {
                Ok(Feasibility::Marginal { point: z, margin })
            } else {
                let zero = DVector::zeros(q);
                let plain = solve_conic(&zero, eq, rhs, space, &inner)?;
                let certificate = (plain.status == Status::Infeasible).then_some(plain.mult);
                Ok(Feasibility::Infeasible {
                    certificate,
                    violation: -margin,
                })
            }
        }
        Status::Infeasible => Ok(Feasibility::Infeasible {
            certificate: Some(res.mult.rows(0, eq.nrows()).into_owned()),
            violation: f64::INFINITY,
        }),
        Status::Unbounded => Err(Error::NumericalTrouble("margin problem unbounded".into())),
    }
}

/// A support value: finite, or `+∞` when the set is unbounded in the direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SupportValue {
    Finite(f64),
    Unbounded,
}

impl SupportValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            SupportValue::Finite(v) => Some(*v),
            SupportValue::Unbounded => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            SupportValue::Finite(v) => *v,
            SupportValue::Unbounded => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSupport {
    pub value: SupportValue,
    pub argmax: Option<AmbientVector>,
}

/// `max ⟨g, x⟩` over the relaxed optimal face
/// `{eq·x = rhs, x ∈ K, ⟨objective, x⟩ ≤ base.objective + face_eps}`.
pub fn optimal_face_support(
    problem: &StandardProblem,
    base: &SolveResult,
    g: &AmbientVector,
    opts: &SolverOptions,
) -> Result<FaceSupport> {
    if base.status != Status::Optimal {
        return Err(Error::NotSolvable { status: base.status });
    }
    let q = problem.space.total_dim();
    if g.len() != q {
        return Err(Error::dim("direction", q, g.len()));
    }
    let m = problem.eq_matrix.nrows();
    let mut a = DMatrix::zeros(m + 1, q + 1);
    a.view_mut((0, 0), (m, q)).copy_from(&problem.eq_matrix);
    a.view_mut((m, 0), (1, q)).copy_from(&problem.objective.transpose());
    a[(m, q)] = 1.0;
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&problem.eq_rhs);
    b[m] = base.objective + opts.face_eps;
    let mut c = DVector::zeros(q + 1);
    c.rows_mut(0, q).copy_from(&(-g));
    let mut blocks = problem.space.blocks().to_vec();
    blocks.push(Block::Orthant(1));
    let aug = ConeSpec::new(blocks)?;
    let inner = SolverOptions {
        attain_check: false,
        refine: false,
        ..*opts
    };
    let res = solve_conic(&c, &a, &b, &aug, &inner)?;
    match res.status {
        Status::Optimal => {
            let x = res.x.rows(0, q).into_owned();
            Ok(FaceSupport {
                value: SupportValue::Finite(g.dot(&x)),
                argmax: Some(x),
            })
        }
        Status::Unbounded => Ok(FaceSupport {
            value: SupportValue::Unbounded,
            argmax: Some(res.x.rows(0, q).into_owned()),
        }),
        status => Err(Error::NotSolvable { status }),
    }
}

/// The optimal face of a solved problem.
pub fn optimal_face(problem: &StandardProblem, base: &SolveResult) -> Result<OptimalFace> {
    if base.status != Status::Optimal {
        return Err(Error::NotSolvable { status: base.status });
    }
    Ok(OptimalFace::identify(
        &problem.objective,
        &problem.eq_matrix,
        &problem.eq_rhs,
        &problem.space,
        &base.x,
        &base.s,
        base.objective,
    ))
}
