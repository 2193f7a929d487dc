use nalgebra::DVector;

use super::workspace::{axis_of, SolverWorkspace};
use super::{root_acceleration, GravityMode, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{ConstraintSet, RobotModel, RobotState};
use crate::spatial::Vec6;

/// Unconstrained forward dynamics (articulated-body algorithm).
pub fn aba(model: &RobotModel, state: &RobotState) -> Result<DVector<f64>> {
    let mut ws = SolverWorkspace::new(model, &ConstraintSet::new());
    aba_with(&mut ws, model, state, &SolverOptions::default())
}

pub fn aba_with(
    ws: &mut SolverWorkspace,
    model: &RobotModel,
    state: &RobotState,
    opts: &SolverOptions,
) -> Result<DVector<f64>> {
    state.validate(model)?;
    if ws.h.len() != model.num_links() || ws.qdd.len() != model.n() {
        *ws = SolverWorkspace::new(model, &ConstraintSet::new());
    }
    ws.seed(model, state, opts.gravity, true);
    articulated_sweeps(ws, model, state.tau.as_slice(), opts.gravity)?;
    Ok(ws.qdd.clone())
}

/// Backward and forward ABA sweeps on seeded (possibly modified) inertias
/// and bias forces. Fills `ws.acc` (sweep frame) and `ws.qdd`.
pub(crate) fn articulated_sweeps(ws: &mut SolverWorkspace, model: &RobotModel, tau: &[f64], mode: GravityMode) -> Result<()> {
    let floating = model.is_floating();
    for i in (0..model.num_links()).rev() {
        if floating && i == 0 {
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
        if let Some(p) = link.parent {
            let xp = &ws.kin.parent_x[i];
            ws.f[p] += xp.inv_force_vec(&(f - h * c - u * (ug / d)));
            ws.h[p] += xp.inv_congruence(&(h - u * (u.transpose() / d)));
        }
    }
    let a0 = root_acceleration(model, mode);
    let first = if floating {
        let f = ws.f[0] + Vec6::from_column_slice(&tau[..6]);
        let a_b = ws.h[0].cholesky().ok_or(Error::NonPositiveJointInertia { link: 0 })?.solve(&f);
        ws.acc[0] = a_b;
        let qdd_b = a_b - ws.kin.parent_x[0].motion_vec(&a0);
        ws.qdd.rows_mut(0, 6).copy_from(&qdd_b);
        1
    } else {
        0
    };
    for i in first..model.num_links() {
        let link = model.link(i);
        let s = axis_of(link.joint.subspace()).expect("single-dof joint");
        let a_par = link.parent.map_or(a0, |p| ws.acc[p]);
        let ap = ws.kin.parent_x[i].motion_vec(&a_par);
        let qdd = (ws.ug[i] - ws.u[i].dot(&ap)) / ws.d[i];
        ws.qdd[model.v_offset(i)] = qdd;
        ws.acc[i] = ap + ws.kin.a_bias[i] + s * qdd;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Joint, Link};
    use nalgebra::Vector3;

    fn pendulum(length: f64, mass: f64) -> RobotModel {
        let j = Joint::revolute(Vector3::y(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let l = Link::new("bob", None, j, mass, Vector3::new(0.0, 0.0, -length), [0.0; 6]).unwrap();
        RobotModel::new(vec![l], Vector3::new(0.0, 0.0, -9.81)).unwrap()
    }

    #[test]
    fn pendulum_rests_at_bottom() {
        let m = pendulum(0.5, 2.0);
        let qdd = aba(&m, &RobotState::neutral(&m)).unwrap();
        assert!(qdd[0].abs() < 1e-15);
    }

    #[test]
    fn horizontal_pendulum_accelerates_at_g_over_l() {
        let (len, g) = (0.5, 9.81);
        let m = pendulum(len, 2.0);
        let mut s = RobotState::neutral(&m);
        s.q[0] = std::f64::consts::FRAC_PI_2;
        let qdd = aba(&m, &s).unwrap();
        assert!((qdd[0] + g / len).abs() < 1e-12, "{}", qdd[0]);
    }

    #[test]
    fn free_body_falls_with_gravity() {
        let l = Link::new("b", None, Joint::floating(), 3.0, Vector3::new(0.1, 0.0, 0.0), [0.1, 0.2, 0.3, 0.0, 0.0, 0.0]).unwrap();
        let m = RobotModel::new(vec![l], Vector3::new(0.0, 0.0, -9.81)).unwrap();
        let qdd = aba(&m, &RobotState::neutral(&m)).unwrap();
        let expected = [0.0, 0.0, 0.0, 0.0, 0.0, -9.81];
        for k in 0..6 {
            assert!((qdd[k] - expected[k]).abs() < 1e-12, "{qdd}");
        }
    }
}
