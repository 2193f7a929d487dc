//! Constrained time stepping with Baumgarte stabilization.
//!
//! Anchored constraints (a link point held at a world point, or a link frame
//! welded to a world pose) are re-linearized at every evaluation: their rows
//! depend on the configuration and their targets carry the velocity-product
//! terms plus the stabilization feedback.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DVector, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::generators::{point_rows, weld_rows};
use crate::kinematics::{configuration_derivative, forward_sweep, integrate, mechanical_energy, normalize_configuration, KinematicsCache};
use crate::model::{ConstraintSet, ConstraintSpec, RobotModel, RobotState};
use crate::solvers::{pv_early_solve_with, pv_soft_solve_with, pv_solve_with, SolverOptions, SolverWorkspace};

/// Default stabilization period.
pub const DEFAULT_PERIOD: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Integrator {
    SemiImplicitEuler,
    /// Default: semi-implicit Euler drifts off the constraint manifold at
    /// first order, which Baumgarte feedback only bounds.
    #[default]
    Rk4,
}

impl FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi-implicit-euler" | "euler" => Ok(Self::SemiImplicitEuler),
            "rk4" => Ok(Self::Rk4),
            _ => Err(Error::Invalid(format!("unknown integrator {s:?} (expected semi-implicit-euler or rk4)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum SimSolver {
    #[default]
    Pv,
    PvEarly,
    /// Penalty constraints with `R = (1/w) I`; `None` keeps the weights
    /// stored on the constraints.
    PvSoft(Option<f64>),
}

impl FromStr for SimSolver {
    type Err = Error;
    /// `pv`, `pv-early`, `pv-soft` or `pv-soft:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pv" => Ok(Self::Pv),
            "pv-early" => Ok(Self::PvEarly),
            "pv-soft" => Ok(Self::PvSoft(None)),
            _ => match s.strip_prefix("pv-soft:").map(str::parse::<f64>) {
                Some(Ok(w)) if w > 0.0 && w.is_finite() => Ok(Self::PvSoft(Some(w))),
                _ => Err(Error::Invalid(format!("unknown solver {s:?} (expected pv, pv-early or pv-soft:<w>)"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub integrator: Integrator,
    pub solver: SimSolver,
    /// Stabilization period `T`; `None` runs the constraints open loop.
    pub baumgarte: Option<f64>,
    pub options: SolverOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 1.0,
            integrator: Integrator::default(),
            solver: SimSolver::default(),
            baumgarte: Some(DEFAULT_PERIOD),
            options: SolverOptions::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(Error::Invalid(format!("duration {} must be at least dt {}", self.duration, self.dt)));
        }
        if let Some(t) = self.baumgarte {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Invalid(format!("stabilization period must be positive, got {t}")));
            }
        }
        Ok(())
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// `k = -(2/T) ė - e/T²`: critically damped error dynamics with time constant `T`.
pub fn baumgarte_targets(e: &DVector<f64>, e_dot: &DVector<f64>, period: f64) -> DVector<f64> {
    -(e_dot * (2.0 / period)) - e / (period * period)
}

/// Pins every anchored constraint without an explicit anchor to its pose at
/// `state`.
pub fn resolve_anchors(model: &RobotModel, state: &RobotState, specs: &[ConstraintSpec]) -> Vec<ConstraintSpec> {
    let cache = forward_sweep(model, state);
    specs
        .iter()
        .map(|spec| match *spec {
            ConstraintSpec::WorldPoint { link, point, anchor: None, axes, soft_weight } => ConstraintSpec::WorldPoint {
                link,
                point,
                anchor: Some(cache.origin(link) + cache.orientation(link) * point),
                axes,
                soft_weight,
            },
            ConstraintSpec::WorldWeld { link, anchor: None, soft_weight } => ConstraintSpec::WorldWeld {
                link,
                anchor: Some((cache.origin(link), cache.orientation(link))),
                soft_weight,
            },
            ref other => other.clone(),
        })
        .collect()
}

/// World-frame angular and origin velocity of a link.
fn world_velocity(cache: &KinematicsCache, link: usize) -> (Vector3<f64>, Vector3<f64>) {
    let r = cache.orientation(link);
    let v = cache.velocity(link);
    (r * v.angular, r * v.linear)
}

/// Position and velocity errors of the anchored constraints, stacked in
/// the order of `specs` (explicit row constraints contribute nothing).
pub fn constraint_errors(model: &RobotModel, cache: &KinematicsCache, specs: &[ConstraintSpec]) -> Result<(DVector<f64>, DVector<f64>)> {
    let (mut e, mut ed) = (Vec::new(), Vec::new());
    for spec in specs {
        match spec {
            ConstraintSpec::Rows { .. } => {}
            ConstraintSpec::WorldPoint { link, point, anchor, axes, .. } => {
                check_link(model, *link)?;
                let anchor = anchor.ok_or_else(unresolved)?;
                let r = cache.orientation(*link) * point;
                let (w, v) = world_velocity(cache, *link);
                let (pe, ve) = (cache.origin(*link) + r - anchor, v + w.cross(&r));
                for k in (0..3).filter(|&k| axes[k]) {
                    e.push(pe[k]);
                    ed.push(ve[k]);
                }
            }
            ConstraintSpec::WorldWeld { link, anchor, .. } => {
                check_link(model, *link)?;
                let (p, rot) = anchor.ok_or_else(unresolved)?;
                let (w, v) = world_velocity(cache, *link);
                let rel = Rotation3::from_matrix_unchecked(cache.orientation(*link) * rot.transpose());
                e.extend(rel.scaled_axis().iter());
                e.extend((cache.origin(*link) - p).iter());
                ed.extend(w.iter());
                ed.extend(v.iter());
            }
        }
    }
    Ok((DVector::from_vec(e), DVector::from_vec(ed)))
}

fn unresolved() -> Error {
    Error::Invalid("anchored constraint without an anchor; call resolve_anchors first".into())
}

fn check_link(model: &RobotModel, link: usize) -> Result<()> {
    if link < model.num_links() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("constraint on unknown link {link}")))
    }
}

/// Linearizes the constraints at the cached state. With a period, anchored
/// constraints get Baumgarte feedback; explicit rows cannot be stabilized
/// and are rejected unless running open loop.
pub fn constraint_rows(
    model: &RobotModel,
    cache: &KinematicsCache,
    specs: &[ConstraintSpec],
    period: Option<f64>,
) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::new();
    for (index, spec) in specs.iter().enumerate() {
        match spec {
            ConstraintSpec::Rows { link, rows, target, soft_weight } => {
                if period.is_some() {
                    return Err(Error::Unsupported(format!(
                        "constraint {index} is given as explicit rows, whose position error is unknown; \
                         simulate open loop (no stabilization) or use world_point / world_weld"
                    )));
                }
                set.push(*link, rows.clone(), target.clone(), soft_weight.clone())?;
            }
            ConstraintSpec::WorldPoint { link, point, axes, soft_weight, .. } => {
                let rows = point_rows(cache, *link, point, *axes);
                let r = cache.orientation(*link) * point;
                let (w, v) = world_velocity(cache, *link);
                // Row acceleration = point acceleration - ω × v_point.
                let coriolis = w.cross(&(v + w.cross(&r)));
                let mut k: Vec<f64> = (0..3).filter(|&k| axes[k]).map(|k| -coriolis[k]).collect();
                if let Some(t) = period {
                    let (e, ed) = constraint_errors(model, cache, std::slice::from_ref(spec))?;
                    let fb = baumgarte_targets(&e, &ed, t);
                    k.iter_mut().zip(fb.iter()).for_each(|(k, f)| *k += f);
                }
                let n = rows.len();
                set.push(*link, rows, k, soft_weight.map(|w| vec![w; n]))?;
            }
            ConstraintSpec::WorldWeld { link, soft_weight, .. } => {
                let (w, v) = world_velocity(cache, *link);
                let coriolis = w.cross(&v);
                let mut k = vec![0.0, 0.0, 0.0, -coriolis.x, -coriolis.y, -coriolis.z];
                if let Some(t) = period {
                    let (e, ed) = constraint_errors(model, cache, std::slice::from_ref(spec))?;
                    let fb = baumgarte_targets(&e, &ed, t);
                    k.iter_mut().zip(fb.iter()).for_each(|(k, f)| *k += f);
                }
                set.push(*link, weld_rows(), k, soft_weight.map(|w| vec![w; 6]))?;
            }
        }
    }
    set.validate(model)?;
    Ok(set)
}

/// One trajectory sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
    pub lambda: DVector<f64>,
    pub pos_err: f64,
    pub vel_err: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn max_pos_err(&self) -> f64 {
        self.samples.iter().map(|s| s.pos_err).fold(0.0, f64::max)
    }

    pub fn csv_header(&self) -> String {
        let Some(s) = self.samples.first() else { return "t,con_pos_err,con_vel_err,energy".into() };
        let mut h = String::from("t");
        for (name, len) in [("q", s.q.len()), ("qd", s.qd.len()), ("qdd", s.qdd.len()), ("lambda", s.lambda.len())] {
            for i in 0..len {
                write!(h, ",{name}{i}").unwrap();
            }
        }
        h.push_str(",con_pos_err,con_vel_err,energy");
        h
    }

    /// Writes the trajectory as CSV; floats carry 17 significant digits so
    /// values round-trip exactly.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            write!(line, "{:.16e}", s.t).unwrap();
            for x in s.q.iter().chain(&s.qd).chain(&s.qdd).chain(&s.lambda) {
                write!(line, ",{x:.16e}").unwrap();
            }
            write!(line, ",{:.16e},{:.16e},{:.16e}", s.pos_err, s.vel_err, s.energy).unwrap();
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Stateful stepper owning the solver workspace.
pub struct Simulator<'a> {
    model: &'a RobotModel,
    specs: Vec<ConstraintSpec>,
    config: SimConfig,
    ws: SolverWorkspace,
}

/// Accelerations and multipliers at one state.
struct Evaluation {
    qdd: DVector<f64>,
    lambda: DVector<f64>,
    pos_err: f64,
    vel_err: f64,
    energy: f64,
}

impl<'a> Simulator<'a> {
    /// `specs` must already have their anchors resolved.
    pub fn new(model: &'a RobotModel, specs: Vec<ConstraintSpec>, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let ws = SolverWorkspace::new(model, &ConstraintSet::new());
        Ok(Self { model, specs, config, ws })
    }

    fn evaluate(&mut self, state: &RobotState) -> Result<Evaluation> {
        let model = self.model;
        let cache = forward_sweep(model, state);
        let mut set = constraint_rows(model, &cache, &self.specs, self.config.baumgarte)?;
        let opts = &self.config.options;
        let sol = match self.config.solver {
            SimSolver::Pv => pv_solve_with(&mut self.ws, model, state, &set, opts)?,
            SimSolver::PvEarly => pv_early_solve_with(&mut self.ws, model, state, &set, opts)?,
            SimSolver::PvSoft(w) => {
                if let Some(w) = w {
                    set = set.with_penalty(w)?;
                }
                pv_soft_solve_with(&mut self.ws, model, state, &set, opts)?
            }
        };
        let (e, ed) = constraint_errors(model, &cache, &self.specs)?;
        Ok(Evaluation {
            qdd: sol.qdd,
            lambda: sol.lambda,
            pos_err: e.norm(),
            vel_err: ed.norm(),
            energy: mechanical_energy(model, &cache),
        })
    }

    fn accel(&mut self, q: &DVector<f64>, qd: &DVector<f64>, inputs: &RobotState) -> Result<DVector<f64>> {
        let state = RobotState { q: q.clone(), qd: qd.clone(), tau: inputs.tau.clone(), f_ext: inputs.f_ext.clone() };
        Ok(self.evaluate(&state)?.qdd)
    }

    /// Advances `state` by one step given its already evaluated accelerations.
    fn advance(&mut self, state: &RobotState, qdd: &DVector<f64>) -> Result<RobotState> {
        let dt = self.config.dt;
        let model = self.model;
        let mut next = state.clone();
        match self.config.integrator {
            Integrator::SemiImplicitEuler => {
                next.qd = &state.qd + qdd * dt;
                next.q = integrate(model, state.q.as_slice(), next.qd.as_slice(), dt);
            }
            Integrator::Rk4 => {
                let (q0, v0) = (&state.q, &state.qd);
                let qdot = |q: &DVector<f64>, v: &DVector<f64>| configuration_derivative(model, q.as_slice(), v.as_slice());
                let stage = |q: &DVector<f64>, dq: &DVector<f64>, h: f64| {
                    let mut out = q + dq * h;
                    normalize_configuration(model, &mut out);
                    out
                };
                let (k1q, k1v) = (qdot(q0, v0), qdd.clone());
                let (q2, v2) = (stage(q0, &k1q, dt / 2.0), v0 + &k1v * (dt / 2.0));
                let (k2q, k2v) = (qdot(&q2, &v2), self.accel(&q2, &v2, state)?);
                let (q3, v3) = (stage(q0, &k2q, dt / 2.0), v0 + &k2v * (dt / 2.0));
                let (k3q, k3v) = (qdot(&q3, &v3), self.accel(&q3, &v3, state)?);
                let (q4, v4) = (stage(q0, &k3q, dt), v0 + &k3v * dt);
                let (k4q, k4v) = (qdot(&q4, &v4), self.accel(&q4, &v4, state)?);
                next.q = stage(q0, &(k1q + k2q * 2.0 + k3q * 2.0 + k4q), dt / 6.0);
                next.qd = v0 + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
            }
        }
        Ok(next)
    }

    /// One step from `state`.
    pub fn step(&mut self, state: &RobotState) -> Result<RobotState> {
        let ev = self.evaluate(state)?;
        self.advance(state, &ev.qdd)
    }

    /// Runs for the configured duration, sampling every step (including
    /// `t = 0` and the final time).
    pub fn run(&mut self, initial: &RobotState) -> Result<Trajectory> {
        initial.validate(self.model)?;
        let steps = self.config.steps();
        let mut samples = Vec::with_capacity(steps + 1);
        let mut state = initial.clone();
        for i in 0..=steps {
            let t = i as f64 * self.config.dt;
            let at = |e: Error| Error::AtTime { t, source: Box::new(e) };
            let ev = self.evaluate(&state).map_err(at)?;
            let next = if i < steps { Some(self.advance(&state, &ev.qdd).map_err(at)?) } else { None };
            samples.push(Sample {
                t,
                q: state.q.clone(),
                qd: state.qd.clone(),
                qdd: ev.qdd,
                lambda: ev.lambda,
                pos_err: ev.pos_err,
                vel_err: ev.vel_err,
                energy: ev.energy,
            });
            if let Some(n) = next {
                state = n;
            }
        }
        Ok(Trajectory { samples })
    }
}

/// Resolves anchors at the initial state and simulates.
pub fn simulate(model: &RobotModel, initial: &RobotState, specs: &[ConstraintSpec], config: &SimConfig) -> Result<Trajectory> {
    let specs = resolve_anchors(model, initial, specs);
    Simulator::new(model, specs, *config)?.run(initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Joint, Link};

    #[test]
    fn feedback_vanishes_on_the_manifold() {
        let z = DVector::zeros(3);
        assert_eq!(baumgarte_targets(&z, &z, 0.1), z);
    }

    #[test]
    fn position_error_feedback() {
        let e = DVector::from_vec(vec![0.01, 0.0, 0.0]);
        let k = baumgarte_targets(&e, &DVector::zeros(3), 0.1);
        assert!((k[0] + 1.0).abs() < 1e-12);
        assert_eq!((k[1], k[2]), (0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { duration: 1e-4, ..Default::default() }.validate().is_err());
        assert!(SimConfig { baumgarte: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn solver_names() {
        assert_eq!("pv-soft:1e6".parse::<SimSolver>().unwrap(), SimSolver::PvSoft(Some(1e6)));
        assert_eq!("pv-early".parse::<SimSolver>().unwrap(), SimSolver::PvEarly);
        assert!("pv-soft:-1".parse::<SimSolver>().is_err());
        assert!("rk5".parse::<Integrator>().is_err());
    }

    #[test]
    fn unconstrained_pendulum_trajectory_has_one_row_per_step() {
        let j = Joint::revolute(Vector3::y(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let l = Link::new("p", None, j, 1.0, Vector3::new(0.0, 0.0, -1.0), [0.01, 0.01, 0.01, 0.0, 0.0, 0.0]).unwrap();
        let model = RobotModel::new(vec![l], Vector3::new(0.0, 0.0, -9.81)).unwrap();
        let mut s = RobotState::neutral(&model);
        s.q[0] = 0.3;
        let traj = simulate(&model, &s, &[], &SimConfig::default()).unwrap();
        assert_eq!(traj.samples.len(), 1001);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1002);
        assert_eq!(text.lines().next().unwrap(), "t,q0,qd0,qdd0,con_pos_err,con_vel_err,energy");
    }

    #[test]
    fn explicit_rows_cannot_be_stabilized() {
        let j = Joint::revolute(Vector3::y(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let l = Link::new("p", None, j, 1.0, Vector3::new(0.0, 0.0, -1.0), [0.01, 0.01, 0.01, 0.0, 0.0, 0.0]).unwrap();
        let model = RobotModel::new(vec![l], Vector3::new(0.0, 0.0, -9.81)).unwrap();
        let spec = ConstraintSpec::Rows { link: 0, rows: vec![crate::spatial::Vec6::y()], target: vec![0.0], soft_weight: None };
        let err = simulate(&model, &RobotState::neutral(&model), &[spec], &SimConfig::default()).unwrap_err();
        assert!(err.to_string().contains("open loop"), "{err}");
    }
}
