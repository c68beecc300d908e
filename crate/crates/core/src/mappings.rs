//! The representable sets `Θ_P`, `Θ_D` and the set-valued maps between them.
//!
//! `Side::Dual` works with `u ∈ Θ_D` and the map `Φ(u) = G⁻¹M(x*(u) − d)`;
//! `Side::Primal` works with `v ∈ Θ_P` and `Ψ(v) = G⁻¹M(y*(v) − c)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cones::{AmbientVector, Membership};
use crate::duality::{value, ValueVariant};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{assemble, Family, MpcloInstance};
use crate::solver::{
    check_feasibility, optimal_face, optimal_face_support, solve, FaceSupport, Feasibility, SolveResult,
    SolverOptions, Status, SupportValue,
};

/// Which parameter space a query lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    /// `v ∈ Θ_P`, mapped by `Ψ`.
    Primal,
    /// `u ∈ Θ_D`, mapped by `Φ`.
    Dual,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Primal => Side::Dual,
            Side::Dual => Side::Primal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Primal => "primal",
            Side::Dual => "dual",
        }
    }

    pub fn map_name(self) -> &'static str {
        match self {
            Side::Primal => "psi",
            Side::Dual => "phi",
        }
    }

    /// The family whose optimal set defines the map on this side.
    pub fn family(self) -> Family {
        match self {
            Side::Primal => Family::Dual,
            Side::Dual => Family::Primal,
        }
    }

    /// The cut family used by membership tests on this side.
    pub fn cut_family(self) -> Family {
        match self {
            Side::Primal => Family::NsDualOfPrimal,
            Side::Dual => Family::NsDualOfDual,
        }
    }

    fn value_variant(self) -> ValueVariant {
        match self {
            Side::Primal => ValueVariant::DStar,
            Side::Dual => ValueVariant::PStar,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "primal" | "psi" => Ok(Side::Primal),
            "dual" | "phi" => Ok(Side::Dual),
            other => Err(Error::Parse(format!("unknown side {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub solver: SolverOptions,
    /// Width below which a map value counts as a single point.
    pub set_tol: f64,
    pub mem_tol: f64,
    pub fd_delta: f64,
    /// Probe directions for two-parameter sets.
    pub n_dirs: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            solver: SolverOptions::default(),
            set_tol: 1e-5,
            mem_tol: 1e-6,
            fd_delta: 1e-4,
            n_dirs: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaMembership {
    pub side: Side,
    pub point: DVector<f64>,
    pub status: Membership,
    /// The `w` with slack `d+Mᵀv+Bᵀw` (primal side) or `c+Mᵀu+Aᵀw` (dual side).
    pub certificate: Option<DVector<f64>>,
    pub slack: Option<AmbientVector>,
}

impl ThetaMembership {
    /// Interior or boundary.
    pub fn is_member(&self) -> bool {
        !matches!(self.status, Membership::Outside { .. })
    }
}

/// `(eq, base, offset, basis)` describing the slack set of a side:
/// `{z ∈ K : eq·z = base + [0; param_rhs(p)]}` with `z = offset + Mᵀ·(·) + basisᵀ·w`.
struct SlackSystem {
    eq: DMatrix<f64>,
    rhs: DVector<f64>,
    offset: AmbientVector,
    basis: DMatrix<f64>,
}

fn slack_system(inst: &MpcloInstance, side: Side, p: &DVector<f64>, homogeneous: bool) -> SlackSystem {
    // Θ_P slacks satisfy A z = A d, M z = M d + G v; Θ_D slacks use B, c.
    let (fixed, offset, basis) = match side {
        Side::Primal => (inst.a(), inst.d(), inst.b()),
        Side::Dual => (inst.b(), inst.c(), inst.a()),
    };
    let m = inst.m();
    let (k, r) = (fixed.nrows(), m.nrows());
    let mut eq = DMatrix::zeros(k + r, inst.q());
    eq.rows_mut(0, k).copy_from(fixed);
    eq.rows_mut(k, r).copy_from(m);
    let mut rhs = DVector::zeros(k + r);
    let offset = if homogeneous {
        DVector::zeros(inst.q())
    } else {
        offset.clone()
    };
    rhs.rows_mut(0, k).copy_from(&(fixed * &offset));
    rhs.rows_mut(k, r).copy_from(&(m * &offset + inst.param_rhs(p)));
    SlackSystem {
        eq,
        rhs,
        offset,
        basis: basis.clone(),
    }
}

impl SlackSystem {
    /// Coefficients `w` of `z − offset` beyond the `M`-row part.
    fn certificate(&self, inst: &MpcloInstance, z: &AmbientVector) -> DVector<f64> {
        let dz = z - &self.offset;
        let m = inst.m();
        let along = m.transpose() * (inst.gram_inv() * (m * &dz));
        let (w, _) = linalg::min_norm_solve(&self.basis.transpose(), &(dz - along), 1e-12);
        w
    }
}

/// Is `point` in `Θ_P` (primal side) or `Θ_D` (dual side)?
pub fn theta_membership(
    inst: &MpcloInstance,
    side: Side,
    point: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<ThetaMembership> {
    inst.check_param(point)?;
    let sys = slack_system(inst, side, point, false);
    let feas = check_feasibility(&sys.eq, &sys.rhs, inst.space(), opts)?;
    let (status, slack) = match feas {
        Feasibility::Feasible { point: z, margin } => (Membership::Interior { margin }, Some(z)),
        Feasibility::Marginal { point: z, margin } => (Membership::Boundary { margin }, Some(z)),
        Feasibility::Infeasible { violation, .. } => (Membership::Outside { violation }, None),
    };
    let certificate = slack.as_ref().map(|z| sys.certificate(inst, z));
    Ok(ThetaMembership {
        side,
        point: point.clone(),
        status,
        certificate,
        slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapStatus {
    Undefined,
    Point,
    Set,
}

/// One support probe `h(g) = max ⟨g, w⟩` over the map value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportProbe {
    pub direction: DVector<f64>,
    pub value: SupportValue,
    /// Parameter-space point attaining the maximum (a ray when unbounded).
    pub witness: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSample {
    pub side: Side,
    pub at: DVector<f64>,
    pub theta: Membership,
    pub status: MapStatus,
    pub point: Option<DVector<f64>>,
    pub support: Vec<SupportProbe>,
    /// `max h(g) + h(−g)` over antipodal probe pairs.
    #[serde(with = "crate::serde_float")]
    pub width: f64,
    pub value: Option<f64>,
    pub witness: Option<AmbientVector>,
}

impl MapSample {
    fn undefined(side: Side, at: &DVector<f64>, theta: Membership) -> Self {
        MapSample {
            side,
            at: at.clone(),
            theta,
            status: MapStatus::Undefined,
            point: None,
            support: Vec::new(),
            width: f64::NAN,
            value: None,
            witness: None,
        }
    }

    /// Support value in probe direction `k`, if probed.
    pub fn support_value(&self, k: usize) -> Option<SupportValue> {
        self.support.get(k).map(|p| p.value)
    }

    /// Whether the set is unbounded along some probe.
    pub fn is_unbounded(&self) -> bool {
        self.support.iter().any(|p| p.value == SupportValue::Unbounded)
    }
}

/// Probe directions: `±1` for one parameter, `n` evenly spaced unit vectors
/// for two, `±e_i` beyond.
pub fn probe_directions(r: usize, n_dirs: usize) -> Vec<DVector<f64>> {
    match r {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => {
            let n = n_dirs.max(4) & !1;
            (0..n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    DVector::from_column_slice(&[t.cos(), t.sin()])
                })
                .collect()
        }
        _ => (0..r)
            .flat_map(|i| {
                let mut e = DVector::zeros(r);
                e[i] = 1.0;
                [e.clone(), -e]
            })
            .collect(),
    }
}

fn width_of(probes: &[SupportProbe]) -> f64 {
    let mut w: f64 = 0.0;
    for (i, a) in probes.iter().enumerate() {
        for b in &probes[i + 1..] {
            if (&a.direction + &b.direction).amax() < 1e-12 {
                w = w.max(a.value.as_f64() + b.value.as_f64());
            }
        }
    }
    w
}

fn map_offset(inst: &MpcloInstance, side: Side) -> &AmbientVector {
    match side {
        Side::Primal => inst.c(),
        Side::Dual => inst.d(),
    }
}

/// Map coordinates `P·M·(z − offset)`.
pub fn map_point(inst: &MpcloInstance, side: Side, z: &AmbientVector) -> DVector<f64> {
    inst.param_coords(&(inst.m() * (z - map_offset(inst, side))))
}

/// Support of the optimal face in ambient direction `g`: exact face first,
/// the objective-relaxed face when the exact one cannot be used.
fn face_support(
    prob: &crate::model::StandardProblem,
    base: &SolveResult,
    face: &crate::solver::OptimalFace,
    g: &AmbientVector,
    opts: &SolverOptions,
) -> Result<FaceSupport> {
    if face.is_consistent() {
        if let Some(s) = face.support(g, opts)? {
            return Ok(s);
        }
    }
    optimal_face_support(prob, base, g, opts)
}

/// Evaluate `Φ(u)` (dual side) or `Ψ(v)` (primal side).
pub fn map_eval(inst: &MpcloInstance, side: Side, at: &DVector<f64>, opts: &MapOptions) -> Result<MapSample> {
    let theta = theta_membership(inst, side, at, &opts.solver)?;
    if !theta.is_member() {
        return Err(Error::OutsideTheta);
    }
    let prob = assemble(inst, side.family(), at)?;
    let base = solve(&prob, &opts.solver)?;
    if base.status != Status::Optimal {
        return match theta.status {
            Membership::Boundary { .. } => Ok(MapSample::undefined(side, at, theta.status)),
            _ => Err(Error::NotSolvable { status: base.status }),
        };
    }
    let point = map_point(inst, side, &base.x);
    let face = optimal_face(&prob, &base)?;
    let proj = inst.coords_matrix() * inst.m();
    let dirs = probe_directions(inst.r(), opts.n_dirs);
    let scale = 1.0 + base.x.amax();
    let support: Vec<SupportProbe> = if face.is_consistent() && face.constant_under(&proj, 1e-9 * scale) {
        dirs.into_iter()
            .map(|g| SupportProbe {
                value: SupportValue::Finite(g.dot(&point)),
                witness: Some(point.clone()),
                direction: g,
            })
            .collect()
    } else {
        let mut out = Vec::with_capacity(dirs.len());
        for g in dirs {
            let amb = proj.transpose() * &g;
            let s = face_support(&prob, &base, &face, &amb, &opts.solver)?;
            let witness = s.argmax.as_ref().map(|x| match s.value {
                SupportValue::Unbounded => inst.param_coords(&(inst.m() * x)),
                SupportValue::Finite(_) => map_point(inst, side, x),
            });
            let value = match s.value {
                SupportValue::Finite(h) => SupportValue::Finite(h - g.dot(&(&proj * map_offset(inst, side)))),
                u => u,
            };
            out.push(SupportProbe {
                direction: g,
                value,
                witness,
            });
        }
        out
    };
    let width = width_of(&support);
    let status = if width <= opts.set_tol {
        MapStatus::Point
    } else {
        MapStatus::Set
    };
    Ok(MapSample {
        side,
        at: at.clone(),
        theta: theta.status,
        status,
        point: Some(point),
        support,
        width,
        value: Some(base.objective),
        witness: Some(base.x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapMembership {
    pub member: bool,
    /// Objective slack of the candidate's cut solution against the optimal value.
    pub residual: f64,
}

/// Is `candidate ∈ Φ(at)` (dual side) or `candidate ∈ Ψ(at)` (primal side)?
pub fn map_membership(
    inst: &MpcloInstance,
    side: Side,
    at: &DVector<f64>,
    candidate: &DVector<f64>,
    opts: &MapOptions,
) -> Result<MapMembership> {
    inst.check_param(candidate)?;
    let sopts = SolverOptions {
        attain_check: false,
        ..opts.solver
    };
    let best = value(inst, side.value_variant(), at, &sopts)?.value;
    let cut = assemble(inst, side.cut_family(), candidate)?;
    let res = solve(&cut, &sopts)?;
    match res.status {
        Status::Optimal => {
            let obj = match side {
                Side::Dual => inst.primal_objective(at),
                Side::Primal => inst.dual_objective(at),
            };
            let residual = obj.dot(&res.x) - best;
            Ok(MapMembership {
                member: residual <= opts.mem_tol * (1.0 + best.abs()),
                residual,
            })
        }
        Status::Infeasible => Ok(MapMembership {
            member: false,
            residual: f64::INFINITY,
        }),
        status => Err(Error::NotSolvable { status }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recession {
    pub recedes: bool,
    pub certificate: Option<DVector<f64>>,
}

/// Is `h` a recession direction of `Θ_P` (primal side) or `Θ_D` (dual side)?
///
/// Decided by feasibility of the homogeneous slack system; this is
/// sufficient, and taken as necessary.
pub fn recession_direction(
    inst: &MpcloInstance,
    side: Side,
    h: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Recession> {
    inst.check_param(h)?;
    if h.amax() == 0.0 {
        return Err(Error::Validation("recession direction must be nonzero".into()));
    }
    let sys = slack_system(inst, side, h, true);
    let feas = check_feasibility(&sys.eq, &sys.rhs, inst.space(), opts)?;
    Ok(match feas {
        Feasibility::Feasible { point, .. } | Feasibility::Marginal { point, .. } => Recession {
            recedes: true,
            certificate: Some(sys.certificate(inst, &point)),
        },
        Feasibility::Infeasible { .. } => Recession {
            recedes: false,
            certificate: None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DerivativeValue {
    Finite(f64),
    NegInfinity,
}

impl DerivativeValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            DerivativeValue::Finite(v) => *v,
            DerivativeValue::NegInfinity => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeResult {
    pub side: Side,
    pub at: DVector<f64>,
    pub direction: DVector<f64>,
    pub value: DerivativeValue,
    /// One-sided difference quotient, when `at + δh` is in the set.
    pub fd_check: Option<f64>,
}

/// Directional derivative of `p*` (dual side) or `d*` (primal side) at
/// `at` along `h`: the minimum of `⟨Mᵀh, x⟩` over the optimal face.
pub fn directional_derivative(
    inst: &MpcloInstance,
    side: Side,
    at: &DVector<f64>,
    h: &DVector<f64>,
    opts: &MapOptions,
) -> Result<DerivativeResult> {
    inst.check_param(h)?;
    let theta = theta_membership(inst, side, at, &opts.solver)?;
    if !theta.is_member() {
        return Err(Error::OutsideTheta);
    }
    let prob = assemble(inst, side.family(), at)?;
    let base = solve(&prob, &opts.solver)?;
    if base.status != Status::Optimal {
        return Err(Error::UndefinedMap);
    }
    let face = optimal_face(&prob, &base)?;
    let g = -(inst.m().transpose() * h);
    let s = face_support(&prob, &base, &face, &g, &opts.solver)?;
    let value = match s.value {
        SupportValue::Finite(v) => DerivativeValue::Finite(-v),
        SupportValue::Unbounded => DerivativeValue::NegInfinity,
    };
    let delta = opts.fd_delta;
    let step = at + h * delta;
    let fd_check = match theta_membership(inst, side, &step, &opts.solver) {
        Ok(t) if t.is_member() => value_fn(inst, side, &step, &opts.solver)
            .ok()
            .map(|v| (v - base.objective) / delta),
        _ => None,
    };
    Ok(DerivativeResult {
        side,
        at: at.clone(),
        direction: h.clone(),
        value,
        fd_check,
    })
}

/// `p*(u)` on the dual side, `d*(v)` on the primal side.
pub fn value_fn(inst: &MpcloInstance, side: Side, at: &DVector<f64>, opts: &SolverOptions) -> Result<f64> {
    let sopts = SolverOptions {
        attain_check: false,
        ..*opts
    };
    Ok(value(inst, side.value_variant(), at, &sopts)?.value)
}

/// A maximizer of `⟨g, p⟩` over `Θ_P` (primal side) or `Θ_D` (dual side);
/// `None` when the set is unbounded along `g` or the solve fails.
pub fn theta_extreme(
    inst: &MpcloInstance,
    side: Side,
    g: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Option<DVector<f64>>> {
    inst.check_param(g)?;
    // slack z ∈ K with fixed·z = fixed·offset; p = P·M·(z − offset)
    let (fixed, offset) = match side {
        Side::Primal => (inst.a(), inst.d()),
        Side::Dual => (inst.b(), inst.c()),
    };
    let proj = inst.coords_matrix() * inst.m();
    let obj = -(proj.transpose() * g);
    let rhs = fixed * offset;
    let sopts = SolverOptions {
        attain_check: false,
        refine: false,
        ..*opts
    };
    let res = crate::solver::solve_conic(&obj, fixed, &rhs, inst.space(), &sopts)?;
    Ok((res.status == Status::Optimal).then(|| &proj * (&res.x - offset)))
}
