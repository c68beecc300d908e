//! Homogeneous self-dual embedding solved by a predictor-corrector
//! interior-point method with Nesterov-Todd scaling.
//!
//! The embedding looks for `(x, y, τ, s, κ)` with
//! `Ax − bτ = 0`, `Aᵀy + s − cτ = 0`, `cᵀx − bᵀy + κ = 0`, `x, s ∈ K`, `τ, κ ≥ 0`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::face::OptimalFace;
use super::{SolverOptions, Status};
use crate::cones::{smat_unchecked, svec_unchecked, Block, ConeSpec};
use crate::linalg;

pub(crate) struct IpmOutput {
    pub status: Status,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub tau: f64,
    #[allow(dead_code)]
    pub kappa: f64,
    pub iterations: usize,
    pub note: Option<String>,
}

enum BlockScale {
    Orth {
        range: Range<usize>,
        w: Vec<f64>,
        lam: Vec<f64>,
    },
    Psd {
        range: Range<usize>,
        n: usize,
        r: DMatrix<f64>,
        rinv: DMatrix<f64>,
        lam: DVector<f64>,
        winv: DMatrix<f64>,
    },
}

/// Scaled representation of a direction pair on one block.
enum Scaled {
    Orth(Vec<f64>, Vec<f64>),
    Psd(DMatrix<f64>, DMatrix<f64>),
}

fn scalings(space: &ConeSpec, x: &DVector<f64>, s: &DVector<f64>) -> Option<Vec<BlockScale>> {
    let mut out = Vec::new();
    for (b, range) in space.ranges() {
        match b {
            Block::Orthant(_) => {
                let mut w = Vec::with_capacity(range.len());
                let mut lam = Vec::with_capacity(range.len());
                for i in range.clone() {
                    if !(x[i] > 0.0 && s[i] > 0.0) {
                        return None;
                    }
                    w.push((x[i] / s[i]).sqrt());
                    lam.push((x[i] * s[i]).sqrt());
                }
                out.push(BlockScale::Orth { range, w, lam });
            }
            Block::Psd(n) => {
                let xm = smat_unchecked(&x.as_slice()[range.clone()], n);
                let sm = smat_unchecked(&s.as_slice()[range.clone()], n);
                let lx = xm.cholesky()?.l();
                let ls = sm.cholesky()?.l();
                let prod = ls.transpose() * &lx;
                let svd = prod.svd(true, true);
                let v = svd.v_t?.transpose();
                let lam = svd.singular_values;
                if lam.iter().any(|&l| !(l > 0.0)) {
                    return None;
                }
                let lam_isqrt = lam.map(|l| 1.0 / l.sqrt());
                let lam_sqrt = lam.map(f64::sqrt);
                let r = &lx * &v * DMatrix::from_diagonal(&lam_isqrt);
                let lx_inv = lx.clone().try_inverse()?;
                let rinv = DMatrix::from_diagonal(&lam_sqrt) * v.transpose() * lx_inv;
                let winv = rinv.transpose() * &rinv;
                out.push(BlockScale::Psd {
                    range,
                    n,
                    r,
                    rinv,
                    lam,
                    winv,
                });
            }
        }
    }
    Some(out)
}

/// Block-diagonal `H` with `ds = r_s − H·dx`.
fn h_matrix(scales: &[BlockScale], q: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(q, q);
    for sc in scales {
        match sc {
            BlockScale::Orth { range, w, .. } => {
                for (k, i) in range.clone().enumerate() {
                    h[(i, i)] = 1.0 / (w[k] * w[k]);
                }
            }
            BlockScale::Psd {
                range, n, winv, ..
            } => {
                let dim = range.len();
                let mut e = vec![0.0; dim];
                for j in 0..dim {
                    e[j] = 1.0;
                    let em = smat_unchecked(&e, *n);
                    let col = svec_unchecked(&(winv * em * winv));
                    for i in 0..dim {
                        h[(range.start + i, range.start + j)] = col[i];
                    }
                    e[j] = 0.0;
                }
            }
        }
    }
    h
}

fn scale_dirs(scales: &[BlockScale], dx: &DVector<f64>, ds: &DVector<f64>) -> Vec<Scaled> {
    scales
        .iter()
        .map(|sc| match sc {
            BlockScale::Orth { range, w, .. } => {
                let a = range.clone().enumerate().map(|(k, i)| dx[i] / w[k]).collect();
                let b = range.clone().enumerate().map(|(k, i)| ds[i] * w[k]).collect();
                Scaled::Orth(a, b)
            }
            BlockScale::Psd {
                range, n, r, rinv, ..
            } => {
                let dxm = smat_unchecked(&dx.as_slice()[range.clone()], *n);
                let dsm = smat_unchecked(&ds.as_slice()[range.clone()], *n);
                Scaled::Psd(rinv * dxm * rinv.transpose(), r.transpose() * dsm * r)
            }
        })
        .collect()
}

/// Right-hand side `r_s` of the linearized complementarity for target `sigma_mu`
/// with an optional second-order correction from scaled affine directions.
fn rhs_s(scales: &[BlockScale], q: usize, sigma_mu: f64, corr: Option<&[Scaled]>) -> DVector<f64> {
    let mut out = DVector::zeros(q);
    for (bi, sc) in scales.iter().enumerate() {
        match sc {
            BlockScale::Orth { range, w, lam } => {
                for (k, i) in range.clone().enumerate() {
                    let mut rr = sigma_mu - lam[k] * lam[k];
                    if let Some(Scaled::Orth(a, b)) = corr.map(|c| &c[bi]) {
                        rr -= a[k] * b[k];
                    }
                    out[i] = rr / lam[k] / w[k];
                }
            }
            BlockScale::Psd {
                range, n, rinv, lam, ..
            } => {
                let n = *n;
                let mut rr = DMatrix::zeros(n, n);
                for i in 0..n {
                    rr[(i, i)] = sigma_mu - lam[i] * lam[i];
                }
                if let Some(Scaled::Psd(a, b)) = corr.map(|c| &c[bi]) {
                    let jp = (a * b + b * a) * 0.5;
                    rr -= jp;
                }
                let mut t = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        t[(i, j)] = 2.0 * rr[(i, j)] / (lam[i] + lam[j]);
                    }
                }
                let blk = rinv.transpose() * t * rinv;
                out.rows_mut(range.start, range.len())
                    .copy_from(&svec_unchecked(&blk));
            }
        }
    }
    out
}

/// Largest `α` with `v + α·dv` in the cone (∞ when unrestricted).
fn max_step(space: &ConeSpec, v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for (b, range) in space.ranges() {
        match b {
            Block::Orthant(_) => {
                for i in range {
                    if dv[i] < 0.0 {
                        alpha = alpha.min(-v[i] / dv[i]);
                    }
                }
            }
            Block::Psd(n) => {
                let vm = smat_unchecked(&v.as_slice()[range.clone()], n);
                let dm = smat_unchecked(&dv.as_slice()[range.clone()], n);
                let Some(ch) = vm.cholesky() else {
                    return 0.0;
                };
                let l = ch.l();
                let Some(t1) = l.solve_lower_triangular(&dm) else {
                    return 0.0;
                };
                let Some(t2) = l.solve_lower_triangular(&t1.transpose()) else {
                    return 0.0;
                };
                let sym = (&t2 + t2.transpose()) * 0.5;
                let lmin = sym.symmetric_eigenvalues().min();
                if lmin < 0.0 {
                    alpha = alpha.min(-1.0 / lmin);
                }
            }
        }
    }
    alpha
}

fn scalar_step(v: f64, dv: f64) -> f64 {
    if dv < 0.0 {
        -v / dv
    } else {
        f64::INFINITY
    }
}

pub(crate) struct Metrics {
    pub pres: f64,
    pub dres: f64,
    pub pobj: f64,
    pub dobj: f64,
    pub compl: f64,
}

/// Residuals of the de-homogenized point.
pub(crate) fn metrics(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    s: &DVector<f64>,
) -> Metrics {
    let pres = if a.nrows() > 0 {
        (a * x - b).amax() / (1.0 + b.amax())
    } else {
        0.0
    };
    let dres = (a.transpose() * y + s - c).amax() / (1.0 + c.amax());
    Metrics {
        pres,
        dres,
        pobj: c.dot(x),
        dobj: b.dot(y),
        compl: x.dot(s),
    }
}

const MAX_CENTERING: usize = 12;
const CENTRAL_TOL: f64 = 1e-2;

/// True when every scaled complementarity pair is within one percent of `μ`.
fn centred(space: &ConeSpec, x: &DVector<f64>, s: &DVector<f64>, tau: f64, kappa: f64, nu: f64) -> bool {
    let mu = (x.dot(s) + tau * kappa) / (nu + 1.0);
    if mu.is_nan() || mu <= 0.0 {
        return true;
    }
    let Some(scales) = scalings(space, x, s) else {
        return true;
    };
    scales.iter().all(|sc| match sc {
        BlockScale::Orth { lam, .. } => lam.iter().all(|l| (l * l / mu - 1.0).abs() <= CENTRAL_TOL),
        BlockScale::Psd { lam, .. } => lam.iter().all(|l| (l * l / mu - 1.0).abs() <= CENTRAL_TOL),
    })
}

/// Tolerance multiplier for accepting a stalled iterate as optimal.
const STALL_SLACK: f64 = 100.0;

/// True when every eigenvalue of `x` and `s` is clearly large or clearly
/// small and the large ones add up to a full rank per block: the limit is
/// strictly complementary.  Recentring is only done then, and only for a
/// unique optimum; otherwise it drags the iterate along the optimal face.
fn split_cleanly(space: &ConeSpec, x: &DVector<f64>, s: &DVector<f64>) -> bool {
    let gap = x.dot(s).abs() / space.degree() as f64;
    let cut = gap.sqrt();
    let clear = |v: f64| v >= 10.0 * cut || v <= 0.1 * cut;
    let big = |v: f64| v >= 10.0 * cut;
    space.ranges().into_iter().all(|(b, range)| match b {
        Block::Orthant(_) => range.clone().all(|i| clear(x[i]) && clear(s[i]) && (big(x[i]) != big(s[i]))),
        Block::Psd(n) => {
            let (ex, _) = linalg::sym_eig(&smat_unchecked(&x.as_slice()[range.clone()], n));
            let (es, _) = linalg::sym_eig(&smat_unchecked(&s.as_slice()[range.clone()], n));
            ex.iter().chain(es.iter()).all(|&v| clear(v))
                && ex.iter().filter(|&&v| big(v)).count() + es.iter().filter(|&&v| big(v)).count() == n
        }
    })
}

pub(crate) fn hsde(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    space: &ConeSpec,
    opts: &SolverOptions,
) -> IpmOutput {
    let mut out = iterate(c, a, b, space, opts);
    // near the boundary of strict feasibility the iterates stall a little
    // short of the requested accuracy; keep them when they are close enough
    let stalled = matches!(
        out.note.as_deref(),
        Some("lost interiority" | "step length collapsed" | "singular Newton system")
    );
    if opts.refine && out.status == Status::NumericalTrouble && stalled && out.tau > out.kappa {
        let mt = metrics(c, a, b, &(&out.x / out.tau), &(&out.y / out.tau), &(&out.s / out.tau));
        let gap_scale = 1.0 + mt.pobj.abs();
        if mt.pres <= STALL_SLACK * opts.feas_tol
            && mt.dres <= STALL_SLACK * opts.feas_tol
            && (mt.pobj - mt.dobj).abs() <= STALL_SLACK * opts.gap_tol * gap_scale
            && mt.compl.abs() <= STALL_SLACK * opts.gap_tol * gap_scale
        {
            out.status = Status::Optimal;
            out.note = Some("reduced accuracy".into());
        }
    }
    out
}

fn iterate(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    space: &ConeSpec,
    opts: &SolverOptions,
) -> IpmOutput {
    let q = space.total_dim();
    let m = a.nrows();
    let nu = space.degree() as f64;
    let mut x = space.identity();
    let mut s = space.identity();
    let mut y = DVector::zeros(m);
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let n_sys = q + m + 1;
    let mut small_steps = 0;
    let has_psd = space.blocks().iter().any(|b| matches!(b, Block::Psd(_)));
    let mut centering = 0;

    let finish = |status, x: DVector<f64>, y, s, tau, kappa, it, note: Option<&str>| IpmOutput {
        status,
        x,
        y,
        s,
        tau,
        kappa,
        iterations: it,
        note: note.map(str::to_string),
    };

    for it in 0..=opts.max_iter {
        let mut center_only = false;
        let xh = &x / tau;
        let yh = &y / tau;
        let sh = &s / tau;
        let mt = metrics(c, a, b, &xh, &yh, &sh);
        let gap_scale = 1.0 + mt.pobj.abs();
        if mt.pres <= opts.feas_tol
            && mt.dres <= opts.feas_tol
            && (mt.pobj - mt.dobj).abs() <= opts.gap_tol * gap_scale
            && mt.compl.abs() <= opts.gap_tol * gap_scale
        {
            // an off-centre iterate can sit far from the solution along the
            // boundary of a PSD block even with a tiny gap; recentre first
            if opts.refine
                && has_psd
                && centering < MAX_CENTERING
                && !centred(space, &x, &s, tau, kappa, nu)
                && split_cleanly(space, &xh, &sh)
                && OptimalFace::identify(c, a, b, space, &xh, &sh, mt.pobj).dimension() == 0
            {
                centering += 1;
                center_only = true;
            } else {
                return finish(Status::Optimal, x, y, s, tau, kappa, it, None);
            }
        }
        if tau < kappa {
            let by = b.dot(&y);
            if by > 0.0 {
                let cert = (a.transpose() * &y + &s).amax() / by;
                if cert <= opts.feas_tol {
                    return finish(Status::Infeasible, x, y, s, tau, kappa, it, None);
                }
            }
            let cx = c.dot(&x);
            if cx < 0.0 {
                let cert = if m > 0 { (a * &x).amax() / -cx } else { 0.0 };
                if cert <= opts.feas_tol {
                    return finish(Status::Unbounded, x, y, s, tau, kappa, it, None);
                }
            }
            if tau <= opts.tau_kappa_tol * kappa.max(1.0) {
                return finish(
                    Status::NumericalTrouble,
                    x,
                    y,
                    s,
                    tau,
                    kappa,
                    it,
                    Some("tau vanished without a certificate"),
                );
            }
        }
        if it == opts.max_iter {
            break;
        }
        let size = x.amax().max(s.amax()).max(y.amax()) / tau;
        if !size.is_finite() || size > opts.cond_max {
            return finish(
                Status::NumericalTrouble,
                x,
                y,
                s,
                tau,
                kappa,
                it,
                Some("iterates diverged"),
            );
        }

        let mu = (x.dot(&s) + tau * kappa) / (nu + 1.0);
        let rp = a * &x - b * tau;
        let rd = a.transpose() * &y + &s - c * tau;
        let rg = c.dot(&x) - b.dot(&y) + kappa;

        let Some(scales) = scalings(space, &x, &s) else {
            return finish(
                Status::NumericalTrouble,
                x,
                y,
                s,
                tau,
                kappa,
                it,
                Some("lost interiority"),
            );
        };
        let h = h_matrix(&scales, q);
        let mut kkt = DMatrix::zeros(n_sys, n_sys);
        kkt.view_mut((0, 0), (q, q)).copy_from(&h);
        kkt.view_mut((0, q), (q, m)).copy_from(&(-a.transpose()));
        kkt.view_mut((0, q + m), (q, 1)).copy_from(c);
        kkt.view_mut((q, 0), (m, q)).copy_from(a);
        kkt.view_mut((q, q + m), (m, 1)).copy_from(&(-b));
        kkt.view_mut((q + m, 0), (1, q)).copy_from(&c.transpose());
        kkt.view_mut((q + m, q), (1, m)).copy_from(&(-b.transpose()));
        kkt[(q + m, q + m)] = -kappa / tau;
        let lu = kkt.lu();

        let solve = |eta: f64, r_s: &DVector<f64>, r_tk: f64| -> Option<(DVector<f64>, DVector<f64>, f64, DVector<f64>, f64)> {
            let mut rhs = DVector::zeros(n_sys);
            rhs.rows_mut(0, q).copy_from(&(&rd * eta + r_s));
            rhs.rows_mut(q, m).copy_from(&(&rp * -eta));
            rhs[q + m] = -eta * rg - r_tk / tau;
            let sol = lu.solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let dx = sol.rows(0, q).into_owned();
            let dy = sol.rows(q, m).into_owned();
            let dtau = sol[q + m];
            let ds = r_s - &h * &dx;
            let dkappa = (r_tk - kappa * dtau) / tau;
            Some((dx, dy, dtau, ds, dkappa))
        };

        if center_only {
            let r_s = rhs_s(&scales, q, mu, None);
            if let Some((dx, dy, dt, ds, dk)) = solve(0.0, &r_s, mu - tau * kappa) {
                let amax = max_step(space, &x, &dx)
                    .min(max_step(space, &s, &ds))
                    .min(scalar_step(tau, dt))
                    .min(scalar_step(kappa, dk));
                let alpha = (opts.step_factor * amax).min(1.0);
                x.axpy(alpha, &dx, 1.0);
                y.axpy(alpha, &dy, 1.0);
                s.axpy(alpha, &ds, 1.0);
                tau += alpha * dt;
                kappa += alpha * dk;
            }
            continue;
        }
        let r_s_aff = -&s;
        let Some((dxa, _dya, dta, dsa, dka)) = solve(1.0, &r_s_aff, -tau * kappa) else {
            return finish(
                Status::NumericalTrouble,
                x,
                y,
                s,
                tau,
                kappa,
                it,
                Some("singular Newton system"),
            );
        };
        let alpha_aff = max_step(space, &x, &dxa)
            .min(max_step(space, &s, &dsa))
            .min(scalar_step(tau, dta))
            .min(scalar_step(kappa, dka))
            .min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);
        let corr = scale_dirs(&scales, &dxa, &dsa);
        let r_s = rhs_s(&scales, q, sigma * mu, Some(&corr));
        let r_tk = sigma * mu - tau * kappa - dta * dka;
        let Some((dx, dy, dt, ds, dk)) = solve(1.0 - sigma, &r_s, r_tk) else {
            return finish(
                Status::NumericalTrouble,
                x,
                y,
                s,
                tau,
                kappa,
                it,
                Some("singular Newton system"),
            );
        };
        let amax = max_step(space, &x, &dx)
            .min(max_step(space, &s, &ds))
            .min(scalar_step(tau, dt))
            .min(scalar_step(kappa, dk));
        let alpha = (opts.step_factor * amax).min(1.0);
        if alpha < 1e-10 {
            small_steps += 1;
            if small_steps >= 3 {
                return finish(
                    Status::NumericalTrouble,
                    x,
                    y,
                    s,
                    tau,
                    kappa,
                    it,
                    Some("step length collapsed"),
                );
            }
        } else {
            small_steps = 0;
        }
        x.axpy(alpha, &dx, 1.0);
        y.axpy(alpha, &dy, 1.0);
        s.axpy(alpha, &ds, 1.0);
        tau += alpha * dt;
        kappa += alpha * dk;
    }
    finish(Status::MaxIter, x, y, s, tau, kappa, opts.max_iter, None)
}
