use nalgebra::{DMatrix, Matrix6xX};

use super::workspace::{axis_of, SolverWorkspace};
use super::{finish_solution, root_acceleration, DynamicsSolution, FloatingBaseBranch, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_block, cholesky_solve_block, PIVOT_TOL};
use crate::model::{ConstraintSet, RobotModel, RobotState};
use crate::spatial::Vec6;

/// Hard-constrained forward dynamics in `O(n + m²d + m³)`.
///
/// Soft weights on the constraint set are ignored; see
/// [`pv_soft_solve`](super::pv_soft_solve) for penalty constraints.
pub fn pv_solve(model: &RobotModel, state: &RobotState, constraints: &ConstraintSet) -> Result<DynamicsSolution> {
    let mut ws = SolverWorkspace::new(model, constraints);
    pv_solve_with(&mut ws, model, state, constraints, &SolverOptions::default())
}

pub fn pv_solve_with(
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
    ws.big_l.fill(0.0);
    backward_pass(ws, model, state.tau.as_slice(), true)?;
    let a0 = root_acceleration(model, opts.gravity);
    if model.is_floating() {
        resolve_floating_root(ws, model, &a0, opts.floating_base)?;
    } else {
        resolve_fixed_root(ws, &a0)?;
    }
    forward_pass(ws, model, &a0, opts.constraint_force_sign());
    let lambda = ws.layout.to_original(&ws.lambda);
    Ok(finish_solution(model, &ws.kin, constraints, opts.gravity, &ws.acc, ws.qdd.clone(), lambda))
}

/// Leaf-to-root sweep over every single-dof joint. Without forces only the
/// inertia, constraint rows and dual Hessian are accumulated.
pub(crate) fn backward_pass(ws: &mut SolverWorkspace, model: &RobotModel, tau: &[f64], with_forces: bool) -> Result<()> {
    let floating = model.is_floating();
    for i in (0..model.num_links()).rev() {
        if floating && i == 0 {
            ws.base_h = ws.h[0];
            if with_forces {
                ws.base_f = ws.f[0] + Vec6::from_column_slice(&tau[..6]);
            }
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
        ws.u[i] = u;
        ws.d[i] = d;
        let c = ws.kin.a_bias[i];
        let xp = ws.kin.parent_x[i];
        let mut ug = 0.0;
        if with_forces {
            let f = ws.f[i];
            ug = tau[model.v_offset(i)] + s.dot(&f) - u.dot(&c);
            ws.ug[i] = ug;
            if let Some(p) = link.parent {
                ws.f[p] += xp.inv_force_vec(&(f - h * c - u * (ug / d)));
            }
        }
        let (start, end) = (ws.layout.start[i], ws.layout.end[i]);
        let off = ws.layout.ks_offset[i];
        for r in start..end {
            let kr = ws.k[r];
            let ksr = kr.dot(&s);
            ws.ks[off + r - start] = ksr;
            if with_forces {
                ws.l[r] += kr.dot(&c) + ksr * ug / d;
            }
            ws.k[r] = xp.inv_force_vec(&(kr - u * (ksr / d)));
        }
        for b in start..end {
            let kb = ws.ks[off + b - start] / d;
            if kb == 0.0 {
                continue;
            }
            for a in start..end {
                ws.big_l[(a, b)] += ws.ks[off + a - start] * kb;
            }
        }
        if let Some(p) = link.parent {
            let ha = h - u * (u.transpose() / d);
            ws.h[p] += xp.inv_congruence(&ha);
        }
    }
    Ok(())
}

/// `λ = L⁻¹(K a0 + l)` over all rows, the world being the common root.
fn resolve_fixed_root(ws: &mut SolverWorkspace, a0: &Vec6) -> Result<()> {
    let m = ws.m();
    if m == 0 {
        return Ok(());
    }
    let mut fac = ws.big_l.clone();
    cholesky_block(&mut fac, 0, m, PIVOT_TOL)
        .map_err(|e| Error::Singular { factor: "root dual Hessian", index: e.index, pivot: e.pivot })?;
    for r in 0..m {
        ws.lambda[r] = ws.k[r].dot(a0) + ws.l[r];
    }
    cholesky_solve_block(&fac, 0, m, ws.lambda.as_mut_slice());
    Ok(())
}

/// Saddle point of the base: minimize over the base acceleration while
/// maximizing over all multipliers.
fn resolve_floating_root(
    ws: &mut SolverWorkspace,
    model: &RobotModel,
    a0: &Vec6,
    branch: FloatingBaseBranch,
) -> Result<()> {
    let m = ws.m();
    let h_chol = ws.base_cholesky()?;
    let f = ws.base_f;
    let a_b = if m == 0 {
        h_chol.solve(&f)
    } else {
        let kmat = Matrix6xX::from_columns(&ws.k[..m]).transpose();
        let mut fac = ws.big_l.clone();
        let base_ok = cholesky_block(&mut fac, 0, m, PIVOT_TOL);
        let use_acc = match branch {
            FloatingBaseBranch::Auto => base_ok.is_ok(),
            FloatingBaseBranch::Acceleration => {
                base_ok.map_err(|e| Error::Singular { factor: "base dual Hessian", index: e.index, pivot: e.pivot })?;
                true
            }
            FloatingBaseBranch::ConstraintForce => false,
        };
        if use_acc {
            // Y = L⁻¹K, z = L⁻¹l, (H + KᵀY) a = f - Kᵀz, λ = Y a + z.
            let mut y = kmat.clone();
            for j in 0..6 {
                let mut col = y.column(j).clone_owned();
                cholesky_solve_block(&fac, 0, m, col.as_mut_slice());
                y.set_column(j, &col);
            }
            let mut z = ws.l.clone();
            cholesky_solve_block(&fac, 0, m, z.as_mut_slice());
            let a = ws.base_h + kmat.transpose() * &y;
            let rhs = f - kmat.transpose() * &z;
            let a_b = a.cholesky().ok_or(Error::NonPositiveJointInertia { link: 0 })?.solve(&rhs);
            ws.lambda.copy_from(&(&y * a_b + z));
            a_b
        } else {
            // (L + K H⁻¹ Kᵀ) λ = K H⁻¹ f + l, a = H⁻¹(f - Kᵀλ).
            let hinv_kt: DMatrix<f64> = DMatrix::from_fn(6, m, |r, c| h_chol.solve(&ws.k[c])[r]);
            let mut l0 = &ws.big_l + &kmat * &hinv_kt;
            cholesky_block(&mut l0, 0, m, PIVOT_TOL)
                .map_err(|e| Error::Singular { factor: "root dual Hessian", index: e.index, pivot: e.pivot })?;
            let hf = h_chol.solve(&f);
            for r in 0..m {
                ws.lambda[r] = ws.k[r].dot(&hf) + ws.l[r];
            }
            cholesky_solve_block(&l0, 0, m, ws.lambda.as_mut_slice());
            let kt_lambda: Vec6 = (0..m).fold(Vec6::zeros(), |acc, r| acc + ws.k[r] * ws.lambda[r]);
            h_chol.solve(&(f - kt_lambda))
        }
    };
    ws.acc[0] = a_b;
    let a_par = ws.kin.parent_x[0].motion_vec(a0);
    let qdd_b = a_b - a_par;
    ws.qdd.rows_mut(model.v_offset(0), 6).copy_from(&qdd_b);
    Ok(())
}

/// Root-to-leaf sweep producing joint and link accelerations.
pub(crate) fn forward_pass(ws: &mut SolverWorkspace, model: &RobotModel, a0: &Vec6, sign: f64) {
    let first = usize::from(model.is_floating());
    for i in first..model.num_links() {
        let link = model.link(i);
        let s = axis_of(link.joint.subspace()).expect("single-dof joint");
        let a_par = link.parent.map_or(*a0, |p| ws.acc[p]);
        let ap = ws.kin.parent_x[i].motion_vec(&a_par);
        let (start, end) = (ws.layout.start[i], ws.layout.end[i]);
        let off = ws.layout.ks_offset[i];
        let mut ks_lambda = 0.0;
        for r in start..end {
            ks_lambda += ws.ks[off + r - start] * ws.lambda[r];
        }
        let qdd = (ws.ug[i] - ws.u[i].dot(&ap) - sign * ks_lambda) / ws.d[i];
        ws.qdd[model.v_offset(i)] = qdd;
        ws.acc[i] = ap + ws.kin.a_bias[i] + s * qdd;
    }
}
