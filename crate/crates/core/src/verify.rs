//! Cross-equivalence suite: every recursive algorithm against the dense
//! references, plus the structural invariants of the sweeps, on generated
//! instances of every family.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::baseline::{dense_inverse_osim, kkt_oracle, kkt_solve, ltl, ltl_osim, rnea_bias, JointSpaceModel};
use crate::error::{Error, Result};
use crate::generators::{self, Family, Instance};
use crate::kinematics::forward_sweep;
use crate::linalg::{rel_err, rel_err_mat};
use crate::model::{ConstraintSet, MotionSubspace, RobotModel, RobotState};
use crate::osim::pv_osim;
use crate::solvers::{aba, pv_early_solve_with, pv_soft_solve, pv_solve, pv_solve_with, SolverOptions, SolverWorkspace};

/// Tolerances of the suite.
pub const EQUIVALENCE_TOL: f64 = 1e-8;
pub const ABA_TOL: f64 = 1e-12;
pub const PROJECTOR_TOL: f64 = 1e-12;
pub const SOFT_LIMIT_TOL: f64 = 1e-4;
pub const SOFT_WEIGHTS: [f64; 4] = [1e2, 1e4, 1e6, 1e8];

/// Deliberate bugs the suite must catch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Constraint forces applied with the wrong sign in the forward sweep.
    ConstraintForceSign,
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random instances per family.
    pub count: usize,
    pub families: Vec<Family>,
    /// Additional instances (e.g. a user model) checked alongside.
    pub extra: Vec<Instance>,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, count: 200, families: Family::ALL.to_vec(), extra: Vec::new(), fault: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub tolerance: f64,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed error (or violation).
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
    pub instances: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed() { "PASS" } else { "FAIL" };
            write!(out, "{status} {:<34} cases={:<5} worst={:.3e} tol={:.0e}", c.name, c.cases, c.worst, c.tolerance).unwrap();
            if let Some(f) = &c.first_failure {
                write!(out, "  first failure: {f}").unwrap();
            }
            out.push('\n');
        }
        let failed = self.failed().count();
        write!(out, "{} instances, {} checks, {failed} failed", self.instances, self.checks.len()).unwrap();
        out
    }
}

struct Suite {
    checks: Vec<CheckOutcome>,
}

impl Suite {
    fn entry(&mut self, name: &'static str, tolerance: f64) -> &mut CheckOutcome {
        let idx = match self.checks.iter().position(|c| c.name == name) {
            Some(i) => i,
            None => {
                self.checks.push(CheckOutcome { name, tolerance, cases: 0, failures: 0, worst: 0.0, first_failure: None });
                self.checks.len() - 1
            }
        };
        &mut self.checks[idx]
    }

    /// Records an error measure; NaN counts as a failure.
    fn measure(&mut self, name: &'static str, tolerance: f64, label: &str, value: f64) {
        let c = self.entry(name, tolerance);
        c.cases += 1;
        if value.is_nan() || value > c.worst {
            c.worst = if value.is_nan() { f64::INFINITY } else { value };
        }
        if !(value <= tolerance) {
            c.failures += 1;
            c.first_failure.get_or_insert_with(|| format!("{label}: {value:.3e}"));
        }
    }

    fn fail(&mut self, name: &'static str, tolerance: f64, label: &str, err: &Error) {
        let c = self.entry(name, tolerance);
        c.cases += 1;
        c.failures += 1;
        c.worst = f64::INFINITY;
        c.first_failure.get_or_insert_with(|| format!("{label}: {err}"));
    }

    fn result<T>(&mut self, name: &'static str, tolerance: f64, label: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(name, tolerance, label, &e);
                None
            }
        }
    }
}

fn vec_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    rel_err(a.as_slice(), b.as_slice())
}

fn min_eig(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().symmetric_eigenvalues().min()
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax() / a.amax().max(1.0)
}

/// The random instances the suite draws for the `index`-th family of its
/// configuration.
pub fn family_instances(seed: u64, index: usize, family: Family, count: usize) -> impl Iterator<Item = Instance> {
    let mut rng = generators::rng(seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    (0..count).map(move |k| {
        let mut inst = generators::random_instance(&mut rng, family);
        inst.label = format!("{} #{k} ({})", family.name(), inst.label);
        inst
    })
}

/// Runs the full suite.
pub fn run_suite(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.count == 0 && cfg.extra.is_empty() {
        return Err(Error::Invalid("count must be at least 1".into()));
    }
    let opts = SolverOptions { inject_sign_fault: cfg.fault == Some(Fault::ConstraintForceSign), ..Default::default() };
    let mut suite = Suite { checks: Vec::new() };
    let mut instances = 0;
    for (fi, &family) in cfg.families.iter().enumerate() {
        for inst in family_instances(cfg.seed, fi, family, cfg.count) {
            check_instance(&mut suite, &inst, &opts);
            instances += 1;
        }
    }
    if cfg.count > 0 {
        let mut quad = generators::quadruped(cfg.seed);
        quad.label = "quadruped".into();
        check_instance(&mut suite, &quad, &opts);
        instances += 1;
    }
    for inst in &cfg.extra {
        check_instance(&mut suite, inst, &opts);
        instances += 1;
    }
    check_soft_behaviour(&mut suite, cfg.seed);
    Ok(VerifyReport { checks: suite.checks, instances })
}

/// Every per-instance check.
fn check_instance(suite: &mut Suite, inst: &Instance, opts: &SolverOptions) {
    let (model, state, cs) = (&inst.model, &inst.state, &inst.constraints);
    let label = inst.label.as_str();
    let tol = EQUIVALENCE_TOL;

    let Some(js) = suite.result("joint_space_model", tol, label, JointSpaceModel::new(model, state, cs)) else { return };
    check_joint_space(suite, inst, &js);

    // Unconstrained: PV reduces to ABA.
    let empty = ConstraintSet::new();
    if let (Some(a), Some(p)) = (
        suite.result("pv_reduces_to_aba", ABA_TOL, label, aba(model, state)),
        suite.result("pv_reduces_to_aba", ABA_TOL, label, pv_solve(model, state, &empty)),
    ) {
        suite.measure("pv_reduces_to_aba", ABA_TOL, label, vec_err(&p.qdd, &a));
    }

    if cs.is_empty() {
        return;
    }
    let Some((qdd, lambda)) = suite.result("kkt_oracle", tol, label, kkt_solve(&js, &state.tau, &cs.targets())) else { return };
    let kkt_res = (&js.m * &qdd + &js.c + js.j.transpose() * &lambda - &state.tau)
        .amax()
        .max((&js.j * &qdd + &js.jdqd - cs.targets()).amax());
    let scale = js.m.amax() * qdd.amax().max(1.0) + js.c.amax() + lambda.amax() + 1.0;
    suite.measure("kkt_oracle_residual", 1e-10, label, kkt_res / scale);

    let mut ws = SolverWorkspace::new(model, cs);
    if let Some(sol) = suite.result("pv_matches_oracle", tol, label, pv_solve_with(&mut ws, model, state, cs, opts)) {
        suite.measure("pv_matches_oracle", tol, label, vec_err(&sol.qdd, &qdd).max(vec_err(&sol.lambda, &lambda)));
        check_structure(suite, inst, &ws);
    }
    let mut ws_early = SolverWorkspace::new(model, cs);
    if let Some(sol) = suite.result("pv_early_matches_oracle", tol, label, pv_early_solve_with(&mut ws_early, model, state, cs, opts)) {
        suite.measure("pv_early_matches_oracle", tol, label, vec_err(&sol.qdd, &qdd).max(vec_err(&sol.lambda, &lambda)));
    }

    check_osim(suite, inst, &js);
}

fn check_joint_space(suite: &mut Suite, inst: &Instance, js: &JointSpaceModel) {
    let (model, state) = (&inst.model, &inst.state);
    let label = inst.label.as_str();
    suite.measure("jsim_symmetric", 1e-12, label, asymmetry(&js.m));

    // Kinetic energy identity.
    let cache = forward_sweep(model, state);
    let tree: f64 = (0..model.num_links()).map(|i| cache.v[i].dot(&(model.link(i).inertia.matrix() * cache.v[i]))).sum();
    let joint = state.qd.dot(&(&js.m * &state.qd));
    suite.measure("kinetic_energy_identity", 1e-10, label, (tree - joint).abs() / joint.abs().max(1.0));

    // Inverse dynamics bias closes the loop through ABA.
    let mut s = state.clone();
    s.tau = rnea_bias(model, state);
    if let Some(qdd) = suite.result("bias_self_consistency", 1e-9, label, aba(model, &s)) {
        suite.measure("bias_self_consistency", 1e-9, label, qdd.amax() / s.tau.amax().max(1.0));
    }

    // LTL: factor identity and tree sparsity.
    if let Some(l) = suite.result("ltl_factor", 1e-10, label, ltl(model, &js.m)) {
        suite.measure("ltl_factor", 1e-10, label, rel_err_mat(&(l.transpose() * &l), &js.m));
        let parents = model.dof_parents();
        let n = model.n();
        let mut ancestor = DMatrix::from_element(n, n, false);
        for k in 0..n {
            ancestor[(k, k)] = true;
            let mut a = parents[k];
            while let Some(p) = a {
                ancestor[(k, p)] = true;
                a = parents[p];
            }
        }
        let violations = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| !ancestor[(r, c)] && l[(r, c)] != 0.0)
            .count();
        suite.measure("ltl_zero_pattern", 0.0, label, violations as f64);
    }
}

/// Projector annihilation, articulated inertia SPD and dual Hessian PSD.
fn check_structure(suite: &mut Suite, inst: &Instance, ws: &SolverWorkspace) {
    let model = &inst.model;
    let label = inst.label.as_str();
    let mut proj: f64 = 0.0;
    let mut asym: f64 = 0.0;
    let mut not_pd = 0;
    for i in 0..model.num_links() {
        let h = ws.articulated_inertia(i);
        let hd = DMatrix::from_fn(6, 6, |r, c| h[(r, c)]);
        asym = asym.max(asymmetry(&hd));
        if !(min_eig(&((&hd + hd.transpose()) * 0.5)) > 0.0) {
            not_pd += 1;
        }
        if let MotionSubspace::Axis(s) = model.link(i).joint.subspace() {
            let p = ws.projector(i, &s);
            proj = proj.max((s.transpose() * p).amax() / h.amax().max(1.0));
        }
    }
    suite.measure("projector_annihilates_subspace", PROJECTOR_TOL, label, proj);
    suite.measure("articulated_inertia_symmetric", 1e-12, label, asym);
    suite.measure("articulated_inertia_pd", 0.0, label, f64::from(not_pd));
    let l = ws.root_dual_hessian();
    let scale = l.amax().max(1e-300);
    let psd = asymmetry(&l).max((-min_eig(&((&l + l.transpose()) * 0.5)) / scale - 1e-10).max(0.0));
    suite.measure("root_dual_hessian_psd", 1e-12, label, psd);
}

fn check_osim(suite: &mut Suite, inst: &Instance, js: &JointSpaceModel) {
    let (model, state, cs) = (&inst.model, &inst.state, &inst.constraints);
    let label = inst.label.as_str();
    let tol = EQUIVALENCE_TOL;
    let Some(dense) = suite.result("osim_pv_vs_dense", tol, label, dense_inverse_osim(js)) else { return };
    let Some(pv) = suite.result("osim_pv_vs_dense", tol, label, pv_osim(model, &state.q, cs)) else { return };
    suite.measure("osim_pv_vs_dense", tol, label, rel_err_mat(pv.inverse(), &dense));
    if let Some(l) = suite.result("osim_ltl_vs_dense", tol, label, ltl_osim(model, state, cs)) {
        suite.measure("osim_ltl_vs_dense", tol, label, rel_err_mat(&l, &dense));
        suite.measure("osim_ltl_vs_pv", tol, label, rel_err_mat(&l, pv.inverse()));
    }
    suite.measure("osim_symmetric", 1e-10, label, asymmetry(pv.inverse()));

    // Column j is the constraint-space response to a unit force along row j.
    let m = cs.m();
    let still = {
        let mut s = RobotState::at_rest(model, state.q.clone());
        s.f_ext.iter_mut().for_each(|f| *f = crate::spatial::SpatialForce::zero());
        s
    };
    let no_gravity: RobotModel = model.clone().with_gravity(Vector3::zeros());
    let mut col_err: f64 = 0.0;
    for j in 0..m {
        let mut s = still.clone();
        s.tau = js.j.row(j).transpose();
        match pv_solve(&no_gravity, &s, &ConstraintSet::new()) {
            Ok(sol) => {
                let resp = &js.j * &sol.qdd;
                col_err = col_err.max(vec_err(&resp, &dense.column(j).into_owned()));
            }
            Err(e) => {
                suite.fail("osim_column_response", tol, label, &e);
                return;
            }
        }
    }
    suite.measure("osim_column_response", tol, label, col_err);

    if model.is_floating() {
        let Some(op) = suite.result("osim_fast_vs_dense", tol, label, pv.fast_operator()) else { return };
        let chol = match dense.clone().cholesky() {
            Some(c) => c,
            None => {
                suite.fail("osim_fast_vs_dense", tol, label, &Error::Singular { factor: "dense Λ⁻¹", index: 0, pivot: 0.0 });
                return;
            }
        };
        let mut worst: f64 = 0.0;
        for t in 0..3 {
            let y = DVector::from_fn(m, |i, _| ((i * 7 + t * 13) as f64 * 0.61).sin());
            worst = worst.max(vec_err(&op.apply(y.as_slice()), &chol.solve(&y)));
        }
        suite.measure("osim_fast_vs_dense", tol, label, worst);
        // Branch blocks of the base dual Hessian are decoupled.
        if let Some(base) = pv.base_blocks() {
            let mut owner = vec![usize::MAX; m];
            for (b, r) in base.branches.iter().enumerate() {
                r.clone().for_each(|i| owner[i] = b);
            }
            let leak = (0..m)
                .flat_map(|r| (0..m).map(move |c| (r, c)))
                .filter(|&(r, c)| owner[r] != owner[c] || owner[r] == usize::MAX)
                .map(|(r, c)| base.dual_hessian[(r, c)].abs())
                .fold(0.0, f64::max);
            suite.measure("base_dual_hessian_block_diagonal", 0.0, label, leak);
        }
    }
}

/// Soft-constraint behaviour on a fixed seven-dof chain: the residual
/// shrinks as the penalty weight grows and the largest weight approaches the
/// hard solution.
fn check_soft_behaviour(suite: &mut Suite, seed: u64) {
    let inst = generators::soft_test_chain(seed);
    let (model, state) = (&inst.model, &inst.state);
    let label = "seven-dof chain";
    let Some((hard, _)) = suite.result("soft_limit_matches_hard", SOFT_LIMIT_TOL, label, kkt_oracle(model, state, &inst.constraints)) else {
        return;
    };
    let mut residuals = Vec::new();
    for w in SOFT_WEIGHTS {
        let cs = match inst.constraints.with_penalty(w) {
            Ok(c) => c,
            Err(e) => return suite.fail("soft_residual_monotone", 0.0, label, &e.into()),
        };
        let Some(sol) = suite.result("soft_residual_monotone", 0.0, label, pv_soft_solve(model, state, &cs)) else { return };
        residuals.push(sol.residual);
        if w == SOFT_WEIGHTS[SOFT_WEIGHTS.len() - 1] {
            suite.measure("soft_limit_matches_hard", SOFT_LIMIT_TOL, label, (&sol.qdd - &hard).norm());
        }
    }
    let increase = residuals.windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max);
    suite.measure("soft_residual_monotone", 0.0, &format!("{label}, residuals {residuals:?}"), increase);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(fault: Option<Fault>) -> VerifyReport {
        run_suite(&VerifyConfig { count: 3, fault, ..Default::default() }).unwrap()
    }

    #[test]
    fn zero_count_is_rejected() {
        assert!(run_suite(&VerifyConfig { count: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn clean_run_passes() {
        let r = small(None);
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn sign_fault_is_caught_by_name() {
        let r = small(Some(Fault::ConstraintForceSign));
        assert!(!r.passed());
        assert!(!r.check("pv_matches_oracle").unwrap().passed());
        assert!(!r.check("pv_early_matches_oracle").unwrap().passed());
    }
}
