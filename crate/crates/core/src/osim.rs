//! Inverse operational-space inertia `Λ⁻¹ = J M⁻¹ Jᵀ` from two sweeps, and
//! a matrix-inversion-lemma operator applying `Λ` for floating-base trees.

use std::ops::Range;

use nalgebra::{Cholesky as Chol6, DMatrix, DVector, U6};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_block, cholesky_solve_block, Cholesky, PIVOT_TOL};
use crate::model::{ConstraintSet, RobotModel};
use crate::solvers::{GravityMode, SolverWorkspace};
use crate::spatial::{Mat6, Vec6};

/// Base quantities of a floating-base sweep, in workspace row order.
#[derive(Clone, Debug)]
pub struct BaseBlocks {
    /// `L_b`: block-diagonal over the base's own rows and each child branch.
    pub dual_hessian: DMatrix<f64>,
    /// Constraint rows propagated to the base (base frame), `m x 6`.
    pub rows: DMatrix<f64>,
    /// Articulated inertia of the base.
    pub inertia: Mat6,
    /// Row ranges of the diagonal blocks of `dual_hessian`.
    pub branches: Vec<Range<usize>>,
}

#[derive(Clone, Debug)]
pub struct OsimResult {
    inverse: DMatrix<f64>,
    factor: Cholesky,
    /// Original row -> workspace row.
    slot_of: Vec<usize>,
    base: Option<BaseBlocks>,
}

impl OsimResult {
    /// `Λ⁻¹` in the constraint set's row order.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `Λ y`, i.e. solves `Λ⁻¹ x = y`.
    pub fn solve(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.factor.solve(y))
    }

    /// Dense `Λ`.
    pub fn osim(&self) -> DMatrix<f64> {
        let m = self.inverse.nrows();
        let mut out = DMatrix::identity(m, m);
        for mut col in out.column_iter_mut() {
            self.factor.solve_in_place(col.as_mut_slice());
        }
        out
    }

    pub fn base_blocks(&self) -> Option<&BaseBlocks> {
        self.base.as_ref()
    }

    /// Original row -> workspace (subtree-contiguous) row.
    pub fn row_slots(&self) -> &[usize] {
        &self.slot_of
    }

    /// Builds the fast `Λ` operator without another sweep.
    pub fn fast_operator(&self) -> Result<FastOsimOperator> {
        let base = self
            .base
            .as_ref()
            .ok_or_else(|| Error::Unsupported("the fast operator needs a floating base".into()))?;
        FastOsimOperator::new(base, self.slot_of.clone())
    }
}

/// Applies `Λ = Λ_b - L_K (H_b + K_bᵀ L_K)⁻¹ L_Kᵀ` with `Λ_b = L_b⁻¹`
/// factored branch by branch and `L_K = Λ_b K_b`.
#[derive(Clone, Debug)]
pub struct FastOsimOperator {
    branches: Vec<Range<usize>>,
    /// Cholesky factors of the branch blocks, stored in one matrix.
    blocks: DMatrix<f64>,
    l_k: DMatrix<f64>,
    inner: Chol6<f64, U6>,
    slot_of: Vec<usize>,
}

impl FastOsimOperator {
    fn new(base: &BaseBlocks, slot_of: Vec<usize>) -> Result<Self> {
        let mut blocks = base.dual_hessian.clone();
        for range in &base.branches {
            cholesky_block(&mut blocks, range.start, range.len(), PIVOT_TOL)
                .map_err(|_| Error::SingularBaseDualHessian)?;
        }
        let mut l_k = base.rows.clone();
        for j in 0..6 {
            let mut col = l_k.column(j).clone_owned();
            for range in &base.branches {
                cholesky_solve_block(&blocks, range.start, range.len(), col.as_mut_slice());
            }
            l_k.set_column(j, &col);
        }
        let inner_m: Mat6 = base.inertia + base.rows.transpose() * &l_k;
        let inner = inner_m.cholesky().ok_or(Error::NonPositiveJointInertia { link: 0 })?;
        Ok(Self { branches: base.branches.clone(), blocks, l_k, inner, slot_of })
    }

    pub fn dim(&self) -> usize {
        self.slot_of.len()
    }

    /// `x = Λ y`, both in the constraint set's row order.
    pub fn apply(&self, y: &[f64]) -> DVector<f64> {
        let m = self.dim();
        let mut yw = DVector::zeros(m);
        for (r, &s) in self.slot_of.iter().enumerate() {
            yw[s] = y[r];
        }
        let t: Vec6 = (self.l_k.transpose() * &yw).fixed_rows::<6>(0).into_owned();
        let mut x = yw;
        for range in &self.branches {
            cholesky_solve_block(&self.blocks, range.start, range.len(), x.as_mut_slice());
        }
        x -= &self.l_k * self.inner.solve(&t);
        DVector::from_iterator(m, self.slot_of.iter().map(|&s| x[s]))
    }
}

/// Inertia/constraint sweeps only (no velocities or forces).
fn osim_sweep(ws: &mut SolverWorkspace, model: &RobotModel, q: &DVector<f64>, constraints: &ConstraintSet) -> Result<()> {
    if q.len() != model.nq() {
        return Err(Error::Dimension { what: "q", expected: model.nq(), got: q.len() });
    }
    constraints.validate(model)?;
    if constraints.is_empty() {
        return Err(Error::Invalid("the operational-space inertia needs at least one constraint row".into()));
    }
    ws.ensure(model, constraints);
    let state = crate::model::RobotState::at_rest(model, q.clone());
    ws.seed(model, &state, GravityMode::BaseAcceleration, false);
    ws.load_constraints(model, constraints, GravityMode::BaseAcceleration);
    ws.big_l.fill(0.0);
    crate::solvers::backward_pass_shared(ws, model, state.tau.as_slice(), false)
}

fn base_blocks(ws: &SolverWorkspace, model: &RobotModel) -> BaseBlocks {
    let m = ws.m();
    let layout = &ws.layout;
    let mut branches = Vec::new();
    if layout.own[0] > 0 {
        branches.push(layout.start[0]..layout.start[0] + layout.own[0]);
    }
    for &c in model.children(0) {
        if layout.end[c] > layout.start[c] {
            branches.push(layout.start[c]..layout.end[c]);
        }
    }
    BaseBlocks {
        dual_hessian: ws.big_l.clone(),
        rows: DMatrix::from_fn(m, 6, |r, c| ws.k[r][c]),
        inertia: ws.base_h,
        branches,
    }
}

/// `Λ⁻¹` at configuration `q`.
pub fn pv_osim(model: &RobotModel, q: &DVector<f64>, constraints: &ConstraintSet) -> Result<OsimResult> {
    let mut ws = SolverWorkspace::new(model, constraints);
    pv_osim_with(&mut ws, model, q, constraints)
}

pub fn pv_osim_with(
    ws: &mut SolverWorkspace,
    model: &RobotModel,
    q: &DVector<f64>,
    constraints: &ConstraintSet,
) -> Result<OsimResult> {
    osim_sweep(ws, model, q, constraints)?;
    let (l0, base) = if model.is_floating() {
        let base = base_blocks(ws, model);
        let h_chol = ws.base_cholesky()?;
        let hinv_kt = DMatrix::from_fn(6, ws.m(), |r, c| h_chol.solve(&ws.k[c])[r]);
        (&base.dual_hessian + &base.rows * hinv_kt, Some(base))
    } else {
        (ws.big_l.clone(), None)
    };
    let inverse = ws.layout.matrix_to_original(&l0);
    let factor = Cholesky::new(&inverse, PIVOT_TOL).map_err(|e| Error::Singular {
        factor: "inverse operational-space inertia",
        index: e.index,
        pivot: e.pivot,
    })?;
    Ok(OsimResult { inverse, factor, slot_of: ws.layout.slot_of.clone(), base })
}

/// `x = Λ y` through the branch-wise operator, never forming `Λ⁻¹`.
pub fn pv_osim_fast_apply(
    model: &RobotModel,
    q: &DVector<f64>,
    constraints: &ConstraintSet,
    y: &[f64],
) -> Result<DVector<f64>> {
    if !model.is_floating() {
        return Err(Error::Unsupported("the fast operator needs a floating base".into()));
    }
    if y.len() != constraints.m() {
        return Err(Error::Dimension { what: "y", expected: constraints.m(), got: y.len() });
    }
    let mut ws = SolverWorkspace::new(model, constraints);
    osim_sweep(&mut ws, model, q, constraints)?;
    let base = base_blocks(&ws, model);
    Ok(FastOsimOperator::new(&base, ws.layout.slot_of.clone())?.apply(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Joint, Link};
    use nalgebra::Vector3;

    fn single_body() -> RobotModel {
        let l = Link::new("b", None, Joint::floating(), 2.5, Vector3::zeros(), [0.3, 0.5, 0.7, 0.01, 0.0, -0.02]).unwrap();
        RobotModel::new(vec![l], Vector3::new(0.0, 0.0, -9.81)).unwrap()
    }

    fn full_rows() -> ConstraintSet {
        let mut c = ConstraintSet::new();
        c.push(0, (0..6).map(|k| Vec6::ith(k, 1.0)).collect(), vec![0.0; 6], None).unwrap();
        c
    }

    #[test]
    fn single_free_body_gives_inverse_inertia() {
        let m = single_body();
        let r = pv_osim(&m, &m.neutral_configuration(), &full_rows()).unwrap();
        let h_inv = m.link(0).inertia.matrix().try_inverse().unwrap();
        let expected = DMatrix::from_fn(6, 6, |i, j| h_inv[(i, j)]);
        assert!((r.inverse() - expected).amax() < 1e-12);
    }

    #[test]
    fn duplicated_rows_are_singular() {
        let m = single_body();
        let mut c = ConstraintSet::new();
        c.push(0, vec![Vec6::z(), Vec6::z()], vec![0.0; 2], None).unwrap();
        assert!(matches!(pv_osim(&m, &m.neutral_configuration(), &c), Err(Error::Singular { .. })));
    }

    #[test]
    fn base_only_rows_make_the_fast_operator_fail() {
        let m = single_body();
        let err = pv_osim_fast_apply(&m, &m.neutral_configuration(), &full_rows(), &[0.0; 6]).unwrap_err();
        assert!(matches!(err, Error::SingularBaseDualHessian));
    }
}
