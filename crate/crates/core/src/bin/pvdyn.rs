use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use pvdyn::bench::{run_bench, BenchConfig, BenchFamily, BenchSolver};
use pvdyn::generators::{self, Instance};
use pvdyn::model::{load_constraint_specs, load_constraints, load_model};
use pvdyn::model::{ConstraintSet, RobotModel, RobotState};
use pvdyn::osim::pv_osim;
use pvdyn::sim::{simulate, Integrator, SimConfig, SimSolver, DEFAULT_PERIOD};
use pvdyn::verify::{run_suite, Fault, VerifyConfig};
use pvdyn::Error;

/// Constrained rigid-body dynamics: verification, benchmarks and simulation.
#[derive(Parser, Debug)]
#[command(name = "pvdyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Robot model (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Constraint set (JSON).
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-check every solver against the dense references.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random instances per family (and states for a user model).
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Time solvers on procedural models of growing size.
    Bench {
        #[command(flatten)]
        common: Common,
        /// chain, ladder or branched.
        #[arg(long, default_value = "chain")]
        family: String,
        /// Ascending sizes: links (chain), rungs (ladder) or branches (branched).
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        sizes: Vec<usize>,
        /// Any of pv, pv-early, pv-soft, oracle.
        #[arg(long, value_delimiter = ',', default_value = "pv,pv-early,oracle")]
        solvers: Vec<String>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
    },
    /// Simulate a model with anchored constraints and write a trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// rk4 or semi-implicit-euler.
        #[arg(long, default_value = "rk4")]
        integrator: String,
        /// pv, pv-early, pv-soft or pv-soft:<weight>.
        #[arg(long, default_value = "pv")]
        solver: String,
        /// Stabilization period in seconds, or "off" for open loop.
        #[arg(long = "baumgarte-T", default_value_t = DEFAULT_PERIOD.to_string())]
        baumgarte_t: String,
        /// Initial configuration (comma separated; neutral when omitted).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q0: Option<Vec<f64>>,
        /// Initial velocity (comma separated; zero when omitted).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        qd0: Option<Vec<f64>>,
    },
    /// Print the inverse operational-space inertia at a configuration.
    Osim {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    Sign,
}

/// Failures mapped to exit codes.
enum Failure {
    /// A check or verified computation failed.
    Check(String),
    /// Bad arguments, files or configuration.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Model(_) | Error::Parse(_) | Error::Io(_) | Error::Dimension { .. } | Error::Invalid(_) | Error::Unsupported(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Check(e.to_string()),
        }
    }
}

fn read(path: &Path, what: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {what} file {}: {e}", path.display())))
}

fn load_model_file(path: &Path) -> Result<RobotModel, Failure> {
    load_model(&read(path, "model")?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Usage(e.to_string())),
    }
}

fn vector(values: &Option<Vec<f64>>, len: usize, default: DVector<f64>, what: &str) -> Result<DVector<f64>, Failure> {
    match values {
        None => Ok(default),
        Some(v) if v.len() == len => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Failure::Usage(format!("{what} has {} values, the model needs {len}", v.len()))),
    }
}

fn cmd_verify(common: &Common, count: usize, fault: Option<FaultArg>) -> Result<(), Failure> {
    let mut extra = Vec::new();
    if let Some(path) = &common.model {
        let model = load_model_file(path)?;
        let constraints = match &common.constraints {
            Some(c) => load_constraints(&model, &read(c, "constraint")?).map_err(|e| Failure::Usage(format!("{}: {e}", c.display())))?,
            None => ConstraintSet::new(),
        };
        let mut rng = generators::rng(common.seed);
        for k in 0..count {
            let state = generators::random_state(&mut rng, &model);
            extra.push(Instance { label: format!("{} #{k}", path.display()), model: model.clone(), state, constraints: constraints.clone() });
        }
    } else if common.constraints.is_some() {
        return Err(Failure::Usage("--constraints needs --model".into()));
    }
    let cfg = VerifyConfig {
        seed: common.seed,
        count,
        extra,
        fault: fault.map(|FaultArg::Sign| Fault::ConstraintForceSign),
        ..Default::default()
    };
    if count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    let report = run_suite(&cfg)?;
    emit(&common.out, &(report.render() + "\n"))?;
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failed().map(|c| c.name).collect();
        Err(Failure::Check(format!("failed checks: {}", names.join(", "))))
    }
}

fn cmd_bench(common: &Common, family: &str, sizes: &[usize], solvers: &[String], reps: usize) -> Result<(), Failure> {
    let cfg = BenchConfig {
        family: family.parse::<BenchFamily>()?,
        sizes: sizes.to_vec(),
        solvers: solvers.iter().map(|s| s.parse::<BenchSolver>()).collect::<Result<_, _>>()?,
        reps,
        seed: common.seed,
    };
    cfg.validate()?;
    let report = run_bench(&cfg).map_err(|e| Failure::Check(e.to_string()))?;
    emit(&common.out, &report.to_csv())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    common: &Common,
    dt: f64,
    duration: f64,
    integrator: &str,
    solver: &str,
    baumgarte: &str,
    q0: &Option<Vec<f64>>,
    qd0: &Option<Vec<f64>>,
) -> Result<(), Failure> {
    let path = common.model.as_ref().ok_or_else(|| Failure::Usage("simulate needs --model".into()))?;
    let model = load_model_file(path)?;
    let specs = match &common.constraints {
        Some(c) => load_constraint_specs(&model, &read(c, "constraint")?).map_err(|e| Failure::Usage(format!("{}: {e}", c.display())))?,
        None => Vec::new(),
    };
    let period = match baumgarte {
        "off" | "none" => None,
        t => Some(t.parse::<f64>().map_err(|_| Failure::Usage(format!("--baumgarte-T expects seconds or \"off\", got {t:?}")))?),
    };
    let config = SimConfig {
        dt,
        duration,
        integrator: integrator.parse::<Integrator>()?,
        solver: solver.parse::<SimSolver>()?,
        baumgarte: period,
        ..Default::default()
    };
    config.validate()?;
    let mut state = RobotState::neutral(&model);
    state.q = vector(q0, model.nq(), state.q.clone(), "--q0")?;
    state.qd = vector(qd0, model.n(), state.qd.clone(), "--qd0")?;
    state.validate(&model)?;
    let traj = simulate(&model, &state, &specs, &config).map_err(|e| Failure::Check(e.to_string()))?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|e| Failure::Usage(e.to_string()))?;
    emit(&common.out, &String::from_utf8(csv).expect("ascii csv"))?;
    let last = traj.last().expect("at least one sample");
    eprintln!(
        "{} samples; final con_pos_err {:.3e}, con_vel_err {:.3e}; max con_pos_err {:.3e}",
        traj.samples.len(),
        last.pos_err,
        last.vel_err,
        traj.max_pos_err()
    );
    Ok(())
}

fn cmd_osim(common: &Common, q: &Option<Vec<f64>>) -> Result<(), Failure> {
    let path = common.model.as_ref().ok_or_else(|| Failure::Usage("osim needs --model".into()))?;
    let cpath = common.constraints.as_ref().ok_or_else(|| Failure::Usage("osim needs --constraints".into()))?;
    let model = load_model_file(path)?;
    let constraints = load_constraints(&model, &read(cpath, "constraint")?).map_err(|e| Failure::Usage(format!("{}: {e}", cpath.display())))?;
    let q = vector(q, model.nq(), model.neutral_configuration(), "--q")?;
    let result = pv_osim(&model, &q, &constraints)?;
    let inv = result.inverse();
    let mut text = String::new();
    for r in 0..inv.nrows() {
        let row: Vec<String> = (0..inv.ncols()).map(|c| format!("{:.16e}", inv[(r, c)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    emit(&common.out, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify { common, count, inject_fault } => cmd_verify(common, *count, *inject_fault),
        Command::Bench { common, family, sizes, solvers, reps } => cmd_bench(common, family, sizes, solvers, *reps),
        Command::Simulate { common, dt, duration, integrator, solver, baumgarte_t, q0, qd0 } => {
            cmd_simulate(common, *dt, *duration, integrator, solver, baumgarte_t, q0, qd0)
        }
        Command::Osim { common, q } => cmd_osim(common, q),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
