//! Scaling benchmarks on procedural models. Every timed solver is first
//! checked against a dense reference on the same instance, and each row
//! carries a checksum of the verified output.

use std::fmt::Write as _;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;

use crate::baseline::{kkt_oracle, soft_joint_space_solve};
use crate::error::{Error, Result};
use crate::generators::{branched_instance, chain_instance, ladder_instance, Instance};
use crate::linalg::rel_err;
use crate::solvers::{pv_early_solve_with, pv_soft_solve_with, pv_solve_with, SolverOptions, SolverWorkspace};

pub const MIN_REPS: usize = 100;
/// Chain length of each branch in the branched family.
pub const BRANCH_LENGTH: usize = 4;
/// Penalty weight used when benchmarking the soft solver.
pub const SOFT_WEIGHT: f64 = 1e6;
const VERIFY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchFamily {
    /// Serial chain of `n` links with a 6D weld at the tip.
    Chain,
    /// Ladder with the given number of rungs, a 6D weld at each rung tip.
    Ladder,
    /// Floating base with `r` chains and a 3D point constraint per tip.
    Branched,
}

impl FromStr for BenchFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Self::Chain),
            "ladder" => Ok(Self::Ladder),
            "branched" => Ok(Self::Branched),
            _ => Err(Error::Invalid(format!("unknown family {s:?} (expected chain, ladder or branched)"))),
        }
    }
}

impl BenchFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Chain => "chain",
            Self::Ladder => "ladder",
            Self::Branched => "branched",
        }
    }

    pub fn instance(self, size: usize, seed: u64) -> Instance {
        match self {
            Self::Chain => chain_instance(size, seed),
            Self::Ladder => ladder_instance(size, seed),
            Self::Branched => branched_instance(size, BRANCH_LENGTH, seed),
        }
    }

    fn scenario(self, size: usize, seed: u64) -> String {
        match self {
            Self::Chain => format!("chain(n={size};seed={seed})"),
            Self::Ladder => format!("ladder(rungs={size};seed={seed})"),
            Self::Branched => format!("branched(r={size};depth={BRANCH_LENGTH};seed={seed})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchSolver {
    Pv,
    PvEarly,
    PvSoft,
    /// Dense saddle-point solve.
    Oracle,
}

impl FromStr for BenchSolver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pv" => Ok(Self::Pv),
            "pv-early" => Ok(Self::PvEarly),
            "pv-soft" => Ok(Self::PvSoft),
            "oracle" => Ok(Self::Oracle),
            _ => Err(Error::Invalid(format!("unknown solver {s:?} (expected pv, pv-early, pv-soft or oracle)"))),
        }
    }
}

impl BenchSolver {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pv => "pv",
            Self::PvEarly => "pv-early",
            Self::PvSoft => "pv-soft",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub solver: &'static str,
    pub median_ns: f64,
    pub p10_ns: f64,
    pub p90_ns: f64,
    pub iterations: usize,
    pub checksum: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub const HEADER: &'static str = "scenario,n,m,d,solver,median_ns,p10_ns,p90_ns,iterations,checksum";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:.0},{:.0},{:.0},{},{:.12e}",
                r.scenario, r.n, r.m, r.d, r.solver, r.median_ns, r.p10_ns, r.p90_ns, r.iterations, r.checksum
            )
            .unwrap();
        }
        out
    }

    /// Median times of `solver`, in size order.
    pub fn medians(&self, solver: BenchSolver) -> Vec<f64> {
        self.rows.iter().filter(|r| r.solver == solver.name()).map(|r| r.median_ns).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub family: BenchFamily,
    pub sizes: Vec<usize>,
    pub solvers: Vec<BenchSolver>,
    pub reps: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.solvers.is_empty() {
            return Err(Error::Invalid("need at least one size and one solver".into()));
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("sizes must be strictly ascending".into()));
        }
        let min = match self.family {
            BenchFamily::Chain => 6,
            BenchFamily::Ladder | BenchFamily::Branched => 1,
        };
        if self.sizes[0] < min {
            return Err(Error::Invalid(format!("{} sizes must be at least {min}", self.family.name())));
        }
        if self.reps < MIN_REPS {
            return Err(Error::Invalid(format!("reps must be at least {MIN_REPS}")));
        }
        Ok(())
    }
}

/// Order-sensitive digest of a result vector.
pub fn checksum(x: &DVector<f64>) -> f64 {
    x.iter().enumerate().map(|(i, v)| v * (1.0 + (i % 7) as f64 / 7.0)).sum()
}

/// A prepared solver call on a fixed instance.
struct Runner<'a> {
    inst: &'a Instance,
    solver: BenchSolver,
    soft: crate::model::ConstraintSet,
    ws: SolverWorkspace,
    opts: SolverOptions,
}

impl<'a> Runner<'a> {
    fn new(inst: &'a Instance, solver: BenchSolver) -> Result<Self> {
        Ok(Self {
            inst,
            solver,
            soft: inst.constraints.with_penalty(SOFT_WEIGHT)?,
            ws: SolverWorkspace::new(&inst.model, &inst.constraints),
            opts: SolverOptions::default(),
        })
    }

    fn run(&mut self) -> Result<DVector<f64>> {
        let (model, state, cs) = (&self.inst.model, &self.inst.state, &self.inst.constraints);
        Ok(match self.solver {
            BenchSolver::Pv => pv_solve_with(&mut self.ws, model, state, cs, &self.opts)?.qdd,
            BenchSolver::PvEarly => pv_early_solve_with(&mut self.ws, model, state, cs, &self.opts)?.qdd,
            BenchSolver::PvSoft => pv_soft_solve_with(&mut self.ws, model, state, &self.soft, &self.opts)?.qdd,
            BenchSolver::Oracle => kkt_oracle(model, state, cs)?.0,
        })
    }

    /// Dense reference for this solver's problem.
    fn reference(&self) -> Result<DVector<f64>> {
        let (model, state) = (&self.inst.model, &self.inst.state);
        match self.solver {
            BenchSolver::PvSoft => soft_joint_space_solve(model, state, &self.soft),
            _ => Ok(kkt_oracle(model, state, &self.inst.constraints)?.0),
        }
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// Runs the benchmark grid. Fails if any solver disagrees with its dense
/// reference before timing starts.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut report = BenchReport::default();
    for &size in &cfg.sizes {
        let inst = cfg.family.instance(size, cfg.seed);
        for &solver in &cfg.solvers {
            let mut runner = Runner::new(&inst, solver)?;
            let out = runner.run()?;
            let reference = runner.reference()?;
            // The soft problem at finite weight is ill-conditioned; compare
            // against its own dense form at a precision it can reach.
            let tol = if solver == BenchSolver::PvSoft { 1e-6 } else { VERIFY_TOL };
            let err = rel_err(out.as_slice(), reference.as_slice());
            if !(err <= tol) {
                return Err(Error::Invalid(format!(
                    "{} on {} disagrees with its dense reference (relative error {err:.3e})",
                    solver.name(),
                    cfg.family.scenario(size, cfg.seed)
                )));
            }
            for _ in 0..(cfg.reps / 10).max(10) {
                black_box(runner.run()?);
            }
            let mut times = Vec::with_capacity(cfg.reps);
            for _ in 0..cfg.reps {
                let start = Instant::now();
                black_box(runner.run()?);
                times.push(start.elapsed().as_nanos() as f64);
            }
            times.sort_by(f64::total_cmp);
            report.rows.push(BenchRow {
                scenario: cfg.family.scenario(size, cfg.seed),
                n: inst.model.n(),
                m: inst.constraints.m(),
                d: inst.model.depth(),
                solver: solver.name(),
                median_ns: percentile(&times, 0.5),
                p10_ns: percentile(&times, 0.1),
                p90_ns: percentile(&times, 0.9),
                iterations: cfg.reps,
                checksum: checksum(&out),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in ["pv", "pv-early", "pv-soft", "oracle"] {
            assert_eq!(s.parse::<BenchSolver>().unwrap().name(), s);
        }
        assert!("lu".parse::<BenchSolver>().is_err());
        assert!("star".parse::<BenchFamily>().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let ok = BenchConfig { family: BenchFamily::Chain, sizes: vec![8, 16], solvers: vec![BenchSolver::Pv], reps: 100, seed: 0 };
        assert!(ok.validate().is_ok());
        assert!(BenchConfig { sizes: vec![16, 8], ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { reps: 10, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { solvers: vec![], ..ok }.validate().is_err());
    }

    #[test]
    fn small_grid_produces_verified_rows() {
        let cfg = BenchConfig {
            family: BenchFamily::Ladder,
            sizes: vec![1, 2],
            solvers: vec![BenchSolver::Pv, BenchSolver::PvEarly, BenchSolver::PvSoft, BenchSolver::Oracle],
            reps: 100,
            seed: 3,
        };
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.rows.len(), 8);
        // Hard solvers agree, so their checksums match.
        for size in report.rows.chunks(4) {
            assert!((size[0].checksum - size[1].checksum).abs() <= 1e-8 * size[3].checksum.abs().max(1.0));
            assert!((size[0].checksum - size[3].checksum).abs() <= 1e-8 * size[3].checksum.abs().max(1.0));
        }
        let csv = report.to_csv();
        assert_eq!(csv.lines().next().unwrap(), BenchReport::HEADER);
        assert_eq!(csv.lines().count(), 9);
    }
}
