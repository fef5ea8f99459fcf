//! Batch front end: scene ingestion, solver invocation, dense audits,
//! baseline comparison, and plot-ready log export.
//!
//! Exit codes: 0 success, 1 infeasible verification, 2 schema or usage
//! error, 3 infeasible initial trajectory, 4 solver stall.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use siptraj::oracle::{exchange_solve, verify_feasibility, ExchangeConfig, OracleError};
use siptraj::problem::{DirectionOrder, Problem, SolverConfig};
use siptraj::scene::{bundled, SceneFile, TrajectoryFile};
use siptraj::solver::{solve, ConvergenceLog, SolverError};
use siptraj::trajectory::{ExtractionMatrices, TrajectoryParams};

#[derive(Parser)]
#[command(
    name = "siptraj",
    about = "Collision-free trajectory optimization with a continuous-time feasibility guarantee",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scene and write trajectory, convergence log, and audit.
    Solve {
        /// Scene description (JSON).
        scene: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Dense audit step in seconds.
        #[arg(long, default_value_t = 1e-3)]
        dt_audit: f64,
        /// Write measured wall-clock times into the convergence log
        /// (breaks byte-reproducibility of the log across runs).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Replay a trajectory through the dense feasibility audit.
    Verify {
        scene: PathBuf,
        trajectory: PathBuf,
        /// Audit step in seconds; must be positive.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Contrast the feasible solver with the exchange baseline.
    Compare {
        scene: PathBuf,
        /// Exchange scan resolutions; empty runs only the feasible solver.
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
        /// Dense audit step for both methods.
        #[arg(long, default_value_t = 1e-4)]
        dt_audit: f64,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write the bundled example scenes as JSON files.
    Demo {
        /// Output directory.
        out: PathBuf,
    },
}

/// Config-key overrides applied on top of the scene's solver block.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    d0: Option<f64>,
    #[arg(long, value_enum)]
    order: Option<OrderArg>,
    #[arg(long)]
    initial_splits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum OrderArg {
    First,
    Second,
}

impl Overrides {
    fn apply(&self, scene: &mut SceneFile) {
        if let Some(mu) = self.mu {
            scene.solver.mu = mu;
        }
        if let Some(eta) = self.eta {
            scene.solver.eta = eta;
        }
        if let Some(x0) = self.x0 {
            scene.solver.x0 = x0;
        }
        if let Some(d0) = self.d0 {
            scene.problem.d0 = d0;
        }
        if let Some(order) = self.order {
            scene.solver.order = match order {
                OrderArg::First => DirectionOrder::First,
                OrderArg::Second => DirectionOrder::Second,
            };
        }
        if let Some(splits) = self.initial_splits {
            scene.solver.initial_splits = splits;
        }
        if let Some(seed) = self.seed {
            scene.solver.seed = seed;
        }
    }
}

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_BAD_INITIAL: u8 = 3;
const EXIT_STALL: u8 = 4;

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn solver_exit(err: &SolverError) -> u8 {
    match err {
        SolverError::Config(_) => EXIT_SCHEMA,
        SolverError::InfeasibleInitial { .. }
        | SolverError::InfeasibleInitialLimits
        | SolverError::InitialSafetyStall { .. } => EXIT_BAD_INITIAL,
        _ => EXIT_STALL,
    }
}

fn load_scene(path: &Path, overrides: Option<&Overrides>) -> Result<SceneFile, ExitCode> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(EXIT_SCHEMA, format!("{}: {e}", path.display())))?;
    let mut scene: SceneFile = serde_json::from_str(&text)
        .map_err(|e| fail(EXIT_SCHEMA, format!("{}: {e}", path.display())))?;
    if let Some(overrides) = overrides {
        overrides.apply(&mut scene);
    }
    Ok(scene)
}

fn objective_value(problem: &Problem, config: &SolverConfig, params: &TrajectoryParams) -> f64 {
    let matrices = match ExtractionMatrices::new(&config.trajectory, &problem.start) {
        Ok(m) => m,
        Err(_) => return f64::NAN,
    };
    problem
        .objective
        .evaluate(&problem.chain, params, &matrices, false)
        .map(|e| e.value)
        .unwrap_or(f64::NAN)
}

fn write_outputs(
    out: &Path,
    params: &TrajectoryParams,
    log: &ConvergenceLog,
    report: &siptraj::oracle::FeasibilityReport,
    timing: bool,
) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let trajectory = TrajectoryFile::from_params(params);
    let mut json = serde_json::to_string_pretty(&trajectory).expect("trajectory serializes");
    json.push('\n');
    fs::write(out.join("trajectory.json"), json)?;
    fs::write(out.join("convergence.csv"), log.to_csv(timing))?;
    fs::write(out.join("feasibility.txt"), report.to_string())?;
    Ok(())
}

fn cmd_solve(
    scene_path: &Path,
    out: &Path,
    dt_audit: f64,
    timing: bool,
    overrides: &Overrides,
) -> ExitCode {
    let scene = match load_scene(scene_path, Some(overrides)) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let (problem, config) = match scene.to_problem() {
        Ok(ok) => ok,
        Err(e) => return fail(EXIT_SCHEMA, e),
    };
    if !(dt_audit > 0.0) {
        return fail(EXIT_SCHEMA, "--dt-audit must be positive");
    }
    let (params, log) = match solve(&problem, &config) {
        Ok(ok) => ok,
        Err(e) => return fail(solver_exit(&e), e),
    };
    let report = match verify_feasibility(&problem, &params, config.barrier.d0, dt_audit) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_STALL, e),
    };
    if let Err(e) = write_outputs(out, &params, &log, &report, timing) {
        return fail(EXIT_STALL, format!("writing outputs: {e}"));
    }
    let subdivisions = log.records.last().map_or(0, |r| r.subdivision_count);
    println!(
        "converged: iterations={} subdivisions={} objective={}",
        log.records.len(),
        subdivisions,
        objective_value(&problem, &config, &params)
    );
    println!("audit: {}", if report.is_feasible() { "feasible" } else { "infeasible" });
    println!("min_distance: {}", report.min_distance);
    if let Some(probe) = &scene.containment_probe {
        let theta_end = params
            .eval(
                &ExtractionMatrices::new(&config.trajectory, &problem.start).expect("matrices"),
                params.horizon(),
            )
            .expect("endpoint evaluation");
        println!(
            "containment_probe: {}",
            if probe.contains(&problem.chain, &theta_end) {
                "inside"
            } else {
                "outside"
            }
        );
    }
    if report.is_feasible() {
        ExitCode::SUCCESS
    } else {
        // A feasible-method run whose audit fails is a defect, not a result.
        ExitCode::from(EXIT_INFEASIBLE)
    }
}

fn cmd_verify(scene_path: &Path, trajectory_path: &Path, dt: f64) -> ExitCode {
    if !(dt > 0.0) {
        return fail(EXIT_SCHEMA, "--dt must be positive");
    }
    let scene = match load_scene(scene_path, None) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let (problem, config) = match scene.to_problem() {
        Ok(ok) => ok,
        Err(e) => return fail(EXIT_SCHEMA, e),
    };
    let text = match fs::read_to_string(trajectory_path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_SCHEMA, format!("{}: {e}", trajectory_path.display())),
    };
    let file: TrajectoryFile = match serde_json::from_str(&text) {
        Ok(f) => f,
        Err(e) => return fail(EXIT_SCHEMA, format!("{}: {e}", trajectory_path.display())),
    };
    if file.start.len() != problem.chain.joint_count() {
        return fail(
            EXIT_SCHEMA,
            format!(
                "trajectory has {} joints, scene chain has {}",
                file.start.len(),
                problem.chain.joint_count()
            ),
        );
    }
    let params = match file.to_params() {
        Ok(p) => p,
        Err(e) => return fail(EXIT_SCHEMA, e),
    };
    match verify_feasibility(&problem, &params, config.barrier.d0, dt) {
        Ok(report) => {
            print!("{report}");
            if report.is_feasible() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INFEASIBLE)
            }
        }
        Err(e) => fail(EXIT_SCHEMA, e),
    }
}

fn cmd_compare(
    scene_path: &Path,
    epsilons: &[f64],
    dt_audit: f64,
    overrides: &Overrides,
) -> ExitCode {
    let scene = match load_scene(scene_path, Some(overrides)) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let (problem, config) = match scene.to_problem() {
        Ok(ok) => ok,
        Err(e) => return fail(EXIT_SCHEMA, e),
    };
    if !(dt_audit > 0.0) {
        return fail(EXIT_SCHEMA, "--dt-audit must be positive");
    }
    let matrices = ExtractionMatrices::new(&config.trajectory, &problem.start).expect("matrices");
    let probe_status = |params: &TrajectoryParams| -> &'static str {
        match &scene.containment_probe {
            Some(probe) => {
                let theta_end = params
                    .eval(&matrices, params.horizon())
                    .expect("endpoint evaluation");
                if probe.contains(&problem.chain, &theta_end) {
                    "inside"
                } else {
                    "outside"
                }
            }
            None => "-",
        }
    };

    println!("method,epsilon,converged,audit,objective,iterations,subdivisions,probe");
    let mut ours_ok = true;

    match solve(&problem, &config) {
        Ok((params, log)) => {
            let report = match verify_feasibility(&problem, &params, config.barrier.d0, dt_audit)
            {
                Ok(r) => r,
                Err(e) => return fail(EXIT_STALL, e),
            };
            let subdivisions = log.records.last().map_or(0, |r| r.subdivision_count);
            ours_ok &= report.is_feasible();
            println!(
                "feasible_sip,-,true,{},{},{},{},{}",
                if report.is_feasible() { "feasible" } else { "infeasible" },
                objective_value(&problem, &config, &params),
                log.records.len(),
                subdivisions,
                probe_status(&params)
            );
        }
        Err(e) => return fail(solver_exit(&e), e),
    }

    for &epsilon in epsilons {
        if !(epsilon > 0.0) {
            return fail(EXIT_SCHEMA, "--epsilons entries must be positive");
        }
        let exchange = ExchangeConfig {
            epsilon,
            ..ExchangeConfig::default()
        };
        match exchange_solve(&problem, &config, &exchange) {
            Ok((params, log)) => {
                let report =
                    match verify_feasibility(&problem, &params, config.barrier.d0, dt_audit) {
                        Ok(r) => r,
                        Err(e) => return fail(EXIT_STALL, e),
                    };
                println!(
                    "exchange,{epsilon},true,{},{},{},0,{}",
                    if report.is_feasible() { "feasible" } else { "infeasible" },
                    objective_value(&problem, &config, &params),
                    log.records.len(),
                    probe_status(&params)
                );
            }
            Err(OracleError::ExchangeInfeasible {
                rounds,
                remaining,
                params,
                log,
            }) => {
                println!(
                    "exchange,{epsilon},false,unresolved({remaining} pairs after {rounds} rounds),{},{},0,{}",
                    objective_value(&problem, &config, &params),
                    log.records.len(),
                    probe_status(&params)
                );
            }
            Err(e) => {
                println!("exchange,{epsilon},false,error({e}),-,-,0,-");
            }
        }
    }
    if ours_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INFEASIBLE)
    }
}

fn cmd_demo(out: &Path) -> ExitCode {
    if let Err(e) = fs::create_dir_all(out) {
        return fail(EXIT_SCHEMA, format!("{}: {e}", out.display()));
    }
    for (name, scene) in bundled::all() {
        let mut json = serde_json::to_string_pretty(&scene).expect("scene serializes");
        json.push('\n');
        let path = out.join(format!("{name}.json"));
        if let Err(e) = fs::write(&path, json) {
            return fail(EXIT_SCHEMA, format!("{}: {e}", path.display()));
        }
        println!("wrote {}", path.display());
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve {
            scene,
            out,
            dt_audit,
            timing,
            overrides,
        } => cmd_solve(scene, out, *dt_audit, *timing, overrides),
        Command::Verify {
            scene,
            trajectory,
            dt,
        } => cmd_verify(scene, trajectory, *dt),
        Command::Compare {
            scene,
            epsilons,
            dt_audit,
            overrides,
        } => cmd_compare(scene, epsilons, *dt_audit, overrides),
        Command::Demo { out } => cmd_demo(out),
    }
}
