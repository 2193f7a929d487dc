use arrayvec::ArrayVec;
use nalgebra::DMatrix;

use super::reflector::rank1_reflector;
use super::workspace::{axis_of, Elimination, SolverWorkspace};
use super::{finish_solution, root_acceleration, DynamicsSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_block, cholesky_solve_block, PIVOT_TOL};
use crate::model::{ConstraintSet, RobotModel, RobotState};
use crate::spatial::Vec6;

const MAX_ROWS: usize = 6;

/// Hard-constrained forward dynamics with early multiplier elimination:
/// every joint whose motion is affected by the propagated constraints
/// removes one multiplier on the spot, so at most six rows ever travel
/// through a link and the cost stays `O(n + m)`.
pub fn pv_early_solve(model: &RobotModel, state: &RobotState, constraints: &ConstraintSet) -> Result<DynamicsSolution> {
    let mut ws = SolverWorkspace::new(model, constraints);
    pv_early_solve_with(&mut ws, model, state, constraints, &SolverOptions::default())
}

pub fn pv_early_solve_with(
    ws: &mut SolverWorkspace,
    model: &RobotModel,
    state: &RobotState,
    constraints: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<DynamicsSolution> {
    state.validate(model)?;
    constraints.validate(model)?;
    ws.ensure(model, constraints);
    ws.seed(model, state, opts.gravity, true);
    ws.load_constraints(model, constraints, opts.gravity);
    let nl = model.num_links();
    for i in 0..nl {
        let (start, own) = (ws.layout.start[i], ws.layout.own[i]);
        if own > MAX_ROWS {
            return Err(Error::OverConstrained { link: i, rows: own });
        }
        ws.active[i].clear();
        ws.active[i].extend(start..start + own);
        ws.elim[i] = None;
    }
    backward(ws, model, state.tau.as_slice())?;
    let a0 = root_acceleration(model, opts.gravity);
    if model.is_floating() {
        resolve_floating_root(ws, model, &a0)?;
    }
    forward(ws, model, &a0, opts.constraint_force_sign());
    let lambda = ws.layout.to_original(&ws.lambda);
    Ok(finish_solution(model, &ws.kin, constraints, opts.gravity, &ws.acc, ws.qdd.clone(), lambda))
}

fn backward(ws: &mut SolverWorkspace, model: &RobotModel, tau: &[f64]) -> Result<()> {
    let floating = model.is_floating();
    for i in (0..model.num_links()).rev() {
        if floating && i == 0 {
            ws.base_h = ws.h[0];
            ws.base_f = ws.f[0] + Vec6::from_column_slice(&tau[..6]);
            break;
        }
        let link = model.link(i);
        let s = axis_of(link.joint.subspace()).expect("only the floating base has a multi-dof joint");
        let h = ws.h[i];
        let u = h * s;
        let d = s.dot(&u);
        if !(d > 0.0) {
            return Err(Error::NonPositiveJointInertia { link: i });
        }
        let c = ws.kin.a_bias[i];
        let f = ws.f[i];
        let ug = tau[model.v_offset(i)] + s.dot(&f) - u.dot(&c);
        ws.u[i] = u;
        ws.d[i] = d;
        ws.ug[i] = ug;
        let xp = ws.kin.parent_x[i];
        if let Some(p) = link.parent {
            ws.f[p] += xp.inv_force_vec(&(f - h * c - u * (ug / d)));
            ws.h[p] += xp.inv_congruence(&(h - u * (u.transpose() / d)));
        }

        // Rows after the joint: K' = (K - ks Uᵀ/D) in the parent frame,
        // l' = l + K c + ks ug / D.
        let active = ws.active[i].clone();
        let mut ks: ArrayVec<f64, 6> = ArrayVec::new();
        let mut k_norm: f64 = 0.0;
        for &r in &active {
            let kr = ws.k[r];
            let ksr = kr.dot(&s);
            k_norm = k_norm.max(kr.abs().sum());
            ks.push(ksr);
            ws.l[r] += kr.dot(&c) + ksr * ug / d;
            ws.k[r] = xp.inv_force_vec(&(kr - u * (ksr / d)));
        }
        let tol = 1e-10 * (1.0 + k_norm);
        let mut propagated = active.clone();
        if let Some(refl) = rank1_reflector(&ks, d, tol) {
            let mut col: ArrayVec<f64, 6> = ArrayVec::new();
            for j in 0..6 {
                col.clear();
                col.extend(active.iter().map(|&r| ws.k[r][j]));
                refl.apply(&mut col);
                for (&r, &x) in active.iter().zip(&col) {
                    ws.k[r][j] = x;
                }
            }
            col.clear();
            col.extend(active.iter().map(|&r| ws.l[r]));
            refl.apply(&mut col);
            for (&r, &x) in active.iter().zip(&col) {
                ws.l[r] = x;
            }
            let slot = active[refl.pivot];
            let (row, offset) = (ws.k[slot], ws.l[slot]);
            if let Some(p) = link.parent {
                // Maximizing over the eliminated multiplier leaves
                // ½ (row·a + offset)² / σ in the parent's cost.
                ws.h[p] += row * row.transpose() / refl.sigma;
                ws.f[p] -= row * (offset / refl.sigma);
            }
            propagated.remove(refl.pivot);
            ws.elim[i] = Some(Elimination { reflector: refl, row, offset });
        }
        ws.ks_small[i] = ks;
        match link.parent {
            Some(p) => {
                let rows = ws.active[p].len() + propagated.len();
                if rows > MAX_ROWS {
                    return Err(Error::OverConstrained { link: p, rows });
                }
                ws.active[p].extend(propagated);
            }
            None if !propagated.is_empty() => {
                // Rows reaching the fixed world cannot be satisfied by any
                // joint: the constraint Jacobian is rank deficient.
                return Err(Error::Singular { factor: "constraint rows reaching the fixed base", index: 0, pivot: 0.0 });
            }
            None => {}
        }
    }
    Ok(())
}

/// Base saddle point with the remaining (hard, zero dual curvature) rows:
/// `(K H⁻¹ Kᵀ) λ = K H⁻¹ f + l`, `a = H⁻¹ (f - Kᵀ λ)`.
fn resolve_floating_root(ws: &mut SolverWorkspace, model: &RobotModel, a0: &Vec6) -> Result<()> {
    let h_chol = ws.base_cholesky()?;
    let f = ws.base_f;
    let active = ws.active[0].clone();
    let p = active.len();
    let a_b = if p == 0 {
        h_chol.solve(&f)
    } else {
        let hinv_kt: ArrayVec<Vec6, 6> = active.iter().map(|&r| h_chol.solve(&ws.k[r])).collect();
        let mut g = DMatrix::from_fn(p, p, |a, b| ws.k[active[a]].dot(&hinv_kt[b]));
        cholesky_block(&mut g, 0, p, PIVOT_TOL)
            .map_err(|e| Error::Singular { factor: "base constraint block", index: e.index, pivot: e.pivot })?;
        let hf = h_chol.solve(&f);
        let mut lam: ArrayVec<f64, 6> = active.iter().map(|&r| ws.k[r].dot(&hf) + ws.l[r]).collect();
        cholesky_solve_block(&g, 0, p, &mut lam);
        let mut kt_lambda = Vec6::zeros();
        for (&r, &x) in active.iter().zip(&lam) {
            ws.lambda[r] = x;
            kt_lambda += ws.k[r] * x;
        }
        h_chol.solve(&(f - kt_lambda))
    };
    ws.acc[0] = a_b;
    let qdd_b = a_b - ws.kin.parent_x[0].motion_vec(a0);
    ws.qdd.rows_mut(model.v_offset(0), 6).copy_from(&qdd_b);
    Ok(())
}

fn forward(ws: &mut SolverWorkspace, model: &RobotModel, a0: &Vec6, sign: f64) {
    let first = usize::from(model.is_floating());
    let mut buf: ArrayVec<f64, 6> = ArrayVec::new();
    for i in first..model.num_links() {
        let link = model.link(i);
        let s = axis_of(link.joint.subspace()).expect("single-dof joint");
        let a_par = link.parent.map_or(*a0, |p| ws.acc[p]);
        let active = &ws.active[i];
        if let Some(e) = &ws.elim[i] {
            let refl = &e.reflector;
            ws.lambda[active[refl.pivot]] = (e.row.dot(&a_par) + e.offset) / refl.sigma;
            buf.clear();
            buf.extend(active.iter().map(|&r| ws.lambda[r]));
            refl.apply(&mut buf);
            for (&r, &x) in active.iter().zip(&buf) {
                ws.lambda[r] = x;
            }
        }
        let ks_lambda: f64 = active.iter().zip(&ws.ks_small[i]).map(|(&r, k)| k * ws.lambda[r]).sum();
        let ap = ws.kin.parent_x[i].motion_vec(&a_par);
        let qdd = (ws.ug[i] - ws.u[i].dot(&ap) - sign * ks_lambda) / ws.d[i];
        ws.qdd[model.v_offset(i)] = qdd;
        ws.acc[i] = ap + ws.kin.a_bias[i] + s * qdd;
    }
}
