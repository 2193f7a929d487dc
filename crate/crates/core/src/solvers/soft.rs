use nalgebra::DVector;

use super::aba::articulated_sweeps;
use super::workspace::SolverWorkspace;
use super::{effective_target, finish_solution, DynamicsSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{ConstraintSet, RobotModel, RobotState};

/// Penalty-constrained forward dynamics: every row contributes
/// `½ (K a - k)ᵀ R⁻¹ (K a - k)` to the acceleration energy, which amounts to
/// ABA with `H_i += K_iᵀR_i⁻¹K_i` and `f_i += K_iᵀR_i⁻¹k_i`.
///
/// The returned multipliers are the penalty forces `λ = R⁻¹(K a - k)`.
pub fn pv_soft_solve(model: &RobotModel, state: &RobotState, constraints: &ConstraintSet) -> Result<DynamicsSolution> {
    let mut ws = SolverWorkspace::new(model, &ConstraintSet::new());
    pv_soft_solve_with(&mut ws, model, state, constraints, &SolverOptions::default())
}

pub fn pv_soft_solve_with(
    ws: &mut SolverWorkspace,
    model: &RobotModel,
    state: &RobotState,
    constraints: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<DynamicsSolution> {
    state.validate(model)?;
    constraints.validate(model)?;
    let weights: Vec<&[f64]> = constraints
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.soft_weight
                .as_deref()
                .ok_or_else(|| Error::Invalid(format!("constraint {i} has no soft weight")))
        })
        .collect::<Result<_>>()?;
    if ws.h.len() != model.num_links() || ws.qdd.len() != model.n() {
        *ws = SolverWorkspace::new(model, &ConstraintSet::new());
    }
    ws.seed(model, state, opts.gravity, true);
    for (e, w) in constraints.entries().iter().zip(&weights) {
        for ((row, &k), &r) in e.rows.iter().zip(&e.target).zip(w.iter()) {
            let kb = ws.kin.row_to_body(e.link, row);
            let k_eff = effective_target(model, opts.gravity, row, k);
            ws.h[e.link] += kb * kb.transpose() / r;
            ws.f[e.link] += kb * (k_eff / r);
        }
    }
    articulated_sweeps(ws, model, state.tau.as_slice(), opts.gravity)?;
    let mut sol = finish_solution(
        model,
        &ws.kin,
        constraints,
        opts.gravity,
        &ws.acc,
        ws.qdd.clone(),
        DVector::zeros(constraints.m()),
    );
    let mut r_idx = 0;
    for (e, w) in constraints.entries().iter().zip(&weights) {
        let a = sol.link_acc[e.link].to_vec6();
        for ((row, &k), &r) in e.rows.iter().zip(&e.target).zip(w.iter()) {
            sol.lambda[r_idx] = (ws.kin.row_to_body(e.link, row).dot(&a) - k) / r;
            r_idx += 1;
        }
    }
    Ok(sol)
}
