//! Value functions of the four families and residuals of the duality
//! relations between them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cones::{margin_unchecked, AmbientVector};
use crate::error::{Error, Result};
use crate::model::{assemble, Family, MpcloInstance};
use crate::solver::{solve, SolveResult, SolverOptions, Status};

/// Which value function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueVariant {
    /// `p*(u)`
    PStar,
    /// `d*(v)`
    DStar,
    /// `d̄*(u) = ⟨d, c+Mᵀu⟩ − min ⟨d, y⟩` over the nonstandard dual cut.
    DBarStar,
    /// `p̄*(v) = ⟨c, d+Mᵀv⟩ − min ⟨c, x⟩` over the nonstandard dual cut.
    PBarStar,
}

impl ValueVariant {
    pub fn family(&self) -> Family {
        match self {
            ValueVariant::PStar => Family::Primal,
            ValueVariant::DStar => Family::Dual,
            ValueVariant::DBarStar => Family::NsDualOfPrimal,
            ValueVariant::PBarStar => Family::NsDualOfDual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueQuery {
    pub variant: ValueVariant,
    pub param: DVector<f64>,
    pub value: f64,
    pub witness: SolveResult,
}

/// Constant term turning the min-form cut value into the max-form value.
fn bar_constant(inst: &MpcloInstance, variant: ValueVariant, param: &DVector<f64>) -> f64 {
    match variant {
        ValueVariant::DBarStar => inst.d().dot(&inst.primal_objective(param)),
        ValueVariant::PBarStar => inst.c().dot(&inst.dual_objective(param)),
        _ => 0.0,
    }
}

fn value_at(
    inst: &MpcloInstance,
    variant: ValueVariant,
    param: &DVector<f64>,
    witness: &AmbientVector,
) -> f64 {
    let prob_obj = match variant {
        ValueVariant::PStar => inst.primal_objective(param),
        ValueVariant::DStar => inst.dual_objective(param),
        ValueVariant::DBarStar => inst.d().clone(),
        ValueVariant::PBarStar => inst.c().clone(),
    };
    let obj = prob_obj.dot(witness);
    match variant {
        ValueVariant::PStar | ValueVariant::DStar => obj,
        _ => bar_constant(inst, variant, param) - obj,
    }
}

/// Evaluate one of the four value functions.
pub fn value(
    inst: &MpcloInstance,
    variant: ValueVariant,
    param: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<ValueQuery> {
    let prob = assemble(inst, variant.family(), param)?;
    let witness = solve(&prob, opts)?;
    if witness.status != Status::Optimal {
        return Err(Error::NotSolvable {
            status: witness.status,
        });
    }
    // recompute from the witness so the two can never disagree
    let value = value_at(inst, variant, param, &witness.x);
    Ok(ValueQuery {
        variant,
        param: param.clone(),
        value,
        witness,
    })
}

/// Residuals of the value identity at a parameter pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `p*(u) + d*(v) − ⟨c+Mᵀu, d+Mᵀv⟩`.
    pub residual: f64,
    pub p_star: f64,
    pub d_star: f64,
    pub pairing: f64,
    /// `|p*(u) − d̄*(u)|`.
    pub primal_gap: f64,
    /// `|d*(v) − p̄*(v)|`.
    pub dual_gap: f64,
}

/// `p*(u) + d*(v) − ⟨c+Mᵀu, d+Mᵀv⟩`, plus the no-gap residuals of each side.
///
/// The identity only holds for coupled pairs; that is left to the caller.
pub fn duality_identity_residual(
    inst: &MpcloInstance,
    u: &DVector<f64>,
    v: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    let p = value(inst, ValueVariant::PStar, u, opts)?.value;
    let d = value(inst, ValueVariant::DStar, v, opts)?.value;
    let dbar = value(inst, ValueVariant::DBarStar, u, opts)?.value;
    let pbar = value(inst, ValueVariant::PBarStar, v, opts)?.value;
    let pairing = inst.primal_objective(u).dot(&inst.dual_objective(v));
    Ok(IdentityReport {
        residual: p + d - pairing,
        p_star: p,
        d_star: d,
        pairing,
        primal_gap: (p - dbar).abs(),
        dual_gap: (d - pbar).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakGaps {
    /// `⟨c+Mᵀu, d+Mᵀv⟩ − ⟨c, d+Mᵀv−x⟩ − ⟨d, c+Mᵀu−y⟩`.
    pub gap_bar: f64,
    /// `⟨c+Mᵀu, x⟩ + ⟨d+Mᵀv, y⟩ − ⟨c+Mᵀu, d+Mᵀv⟩`.
    pub gap: f64,
}

fn witness_tol(inst: &MpcloInstance) -> f64 {
    let scale = 1.0 + inst.c().amax() + inst.d().amax();
    1e-6 * scale
}

struct Check {
    name: &'static str,
    residual: f64,
}

fn cut_checks(inst: &MpcloInstance, family: Family, param: &DVector<f64>, z: &AmbientVector) -> Result<Vec<Check>> {
    let prob = assemble(inst, family, param)?;
    if z.len() != inst.q() {
        return Err(Error::dim("witness", inst.q(), z.len()));
    }
    let nrow = prob.eq_matrix.nrows() - inst.r();
    let res = &prob.eq_matrix * z - &prob.eq_rhs;
    let head = res.rows(0, nrow).amax();
    let tail = if inst.r() > 0 { res.rows(nrow, inst.r()).amax() } else { 0.0 };
    let cone = (-margin_unchecked(z.as_slice(), inst.space())).max(0.0);
    let (eq, param_name, cone_name) = match family {
        Family::NsDualOfDual => ("A x = b", "M x = M d + G v", "x in K"),
        _ => ("B y = a", "M y = M c + G u", "y in K"),
    };
    Ok(vec![
        Check { name: eq, residual: head },
        Check { name: param_name, residual: tail },
        Check { name: cone_name, residual: cone },
    ])
}

/// Both weak-duality gaps for a feasible pair of cut witnesses.
pub fn weak_duality_gaps(
    inst: &MpcloInstance,
    u: &DVector<f64>,
    v: &DVector<f64>,
    x: &AmbientVector,
    y: &AmbientVector,
) -> Result<WeakGaps> {
    let tol = witness_tol(inst);
    let mut checks = cut_checks(inst, Family::NsDualOfDual, v, x)?;
    checks.extend(cut_checks(inst, Family::NsDualOfPrimal, u, y)?);
    if let Some(bad) = checks.iter().find(|c| c.residual > tol) {
        return Err(Error::InfeasibleWitness {
            constraint: bad.name.to_string(),
            residual: bad.residual,
        });
    }
    let cu = inst.primal_objective(u);
    let dv = inst.dual_objective(v);
    let pairing = cu.dot(&dv);
    Ok(WeakGaps {
        gap_bar: pairing - inst.c().dot(&(&dv - x)) - inst.d().dot(&(&cu - y)),
        gap: cu.dot(x) + dv.dot(y) - pairing,
    })
}

/// Named residuals with a pass flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<(String, f64)>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn max(&self) -> f64 {
        self.residuals.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }
}

/// Residuals of the coupled feasibility and complementarity system in
/// `(x, y, u, v)`.  Passing means `v ∈ Φ(u)` and `u ∈ Ψ(v)`.
pub fn mpkkt_residuals(
    inst: &MpcloInstance,
    x: &AmbientVector,
    y: &AmbientVector,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<ResidualReport> {
    inst.check_param(u)?;
    inst.check_param(v)?;
    let q = inst.q();
    if x.len() != q {
        return Err(Error::dim("x", q, x.len()));
    }
    if y.len() != q {
        return Err(Error::dim("y", q, y.len()));
    }
    let mut residuals = Vec::new();
    let names = ["primal_eq", "primal_param", "primal_cone"];
    for (n, c) in names.iter().zip(cut_checks(inst, Family::NsDualOfDual, v, x)?) {
        residuals.push((n.to_string(), c.residual));
    }
    let names = ["dual_eq", "dual_param", "dual_cone"];
    for (n, c) in names.iter().zip(cut_checks(inst, Family::NsDualOfPrimal, u, y)?) {
        residuals.push((n.to_string(), c.residual));
    }
    residuals.push(("complementarity".to_string(), x.dot(y).abs()));
    let tolerance = witness_tol(inst);
    let pass = residuals.iter().all(|(_, r)| *r <= tolerance);
    Ok(ResidualReport {
        residuals,
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::ConeSpec;
    use crate::model::RawInstance;
    use nalgebra::DMatrix;

    fn toy(d: f64) -> MpcloInstance {
        // q = 2, A = [1 1], M = [1 −1], c = 0
        let raw = RawInstance {
            space: ConeSpec::orthant(2).unwrap(),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: None,
            m: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            c: DVector::zeros(2),
            d: DVector::from_element(2, d),
            labels: Default::default(),
        };
        MpcloInstance::new(raw).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_gaps() {
        let inst = toy(0.0);
        let z = DVector::zeros(2);
        let g = weak_duality_gaps(&inst, &z.rows(0, 1).into_owned(), &z.rows(0, 1).into_owned(), &z, &z).unwrap();
        assert_eq!(g.gap, 0.0);
        assert_eq!(g.gap_bar, 0.0);
    }

    #[test]
    fn infeasible_witness_is_named() {
        let inst = toy(1.0);
        let u = DVector::from_element(1, 0.0);
        let x = DVector::from_column_slice(&[2.0, 0.0]);
        let err = weak_duality_gaps(&inst, &u, &u, &x, &DVector::zeros(2)).unwrap_err();
        match err {
            Error::InfeasibleWitness { constraint, .. } => assert_eq!(constraint, "M x = M d + G v"),
            other => panic!("{other:?}"),
        }
    }
}
