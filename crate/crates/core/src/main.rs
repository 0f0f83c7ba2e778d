//! Command-line front end: simulate | sweep | verify | nn-train | props |
//! figure-data. Exit codes: 0 all pass, 1 failed check under satisfied
//! hypotheses, 2 usage or configuration error.

use clap::{Args, Parser, Subcommand};
use eoslab::experiment::{
    execute, figure_data, load_config, run_props, write_checks_jsonl, write_phenomena,
    write_props, write_trajectory, ExperimentConfig, FigureId, LearningRate, SimulatePayload,
};
use eoslab::family::ObjectiveSpec;
use eoslab::phenomena::PhenomenaReport;
use eoslab::theorems::{sweep, GridCell, TheoremId};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "eoslab",
    version,
    about = "Gradient-descent dynamics lab: simulate the product objective family, detect \
             large-learning-rate phenomena, and check the convergence/sharpness bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SimulateArgs {
    /// Family member as JSON, e.g. '{"kind":"good","a":1.0}' or
    /// '{"kind":"bad","b":3}' or '{"kind":"perturbed"}'.
    #[arg(long)]
    spec: String,
    #[arg(long)]
    x0: f64,
    #[arg(long)]
    y0: f64,
    /// Raw learning rate (exclusive with --C).
    #[arg(long, conflicts_with = "c")]
    h: Option<f64>,
    /// Theorem-form multiplier: h = C/uu0 (good, perturbed),
    /// C/(uu0+4) (b = 1), C/((uu0+4)(x0 y0)^(2b-2)) (odd b >= 3).
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long, default_value_t = 2_000_000)]
    max_iters: u64,
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// Trajectory CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional phenomena-report JSON path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// One of: eos_good no_eos_bad balancing_good balancing_b1
    /// no_balancing_bad conv_good conv_b1 conv_bad stability_necessity.
    #[arg(long)]
    theorem: String,
    /// JSON grid file: [{"spec": {...}, "x0": ..., "y0": ..., "c": ...}].
    #[arg(long)]
    grid: PathBuf,
    /// JSONL output path (default: checks.jsonl next to the grid).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PropsArgs {
    /// Good-regularity exponents (default 0.1..1.0).
    #[arg(long = "a", num_args = 0..)]
    a: Vec<f64>,
    /// Bad-regularity degrees (default 1 3 5 9).
    #[arg(long = "b", num_args = 0..)]
    b: Vec<u32>,
    /// Optional report JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run gradient descent on one configuration and emit the trajectory.
    Simulate(SimulateArgs),
    /// Run a theorem sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check one theorem over a grid of cells.
    Verify(VerifyArgs),
    /// Train a desk-scale network described by a config file.
    NnTrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the analytic property suite for the objective family.
    Props(PropsArgs),
    /// Emit the plot-ready data set for one canned figure protocol.
    FigureData {
        /// fig1 fig2 fig3 fig5 fig6 fig7 nn_fig9 nn_fig10 nn_fig11 nn_fig12.
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("EOSLAB_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("EOSLAB_THREADS={value:?} ignored (want a positive integer)"),
        }
    }
}

fn usage_err(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn run_simulate(args: SimulateArgs) -> ExitCode {
    let spec: ObjectiveSpec = match serde_json::from_str(&args.spec) {
        Ok(s) => s,
        Err(e) => return usage_err(format!("--spec: {e}")),
    };
    let lr = match (args.h, args.c) {
        (Some(h), None) => LearningRate::H(h),
        (None, Some(c)) => LearningRate::C(c),
        _ => return usage_err("exactly one of --h or --C is required"),
    };
    let payload = SimulatePayload {
        spec,
        x0: args.x0,
        y0: args.y0,
        lr,
        max_iters: args.max_iters,
        record_stride: args.stride,
        convergence_tol: 1e-12,
        divergence_bound: 1e12,
    };
    let cfg = payload.to_run_config();
    let traj = match eoslab::engine::run(&cfg) {
        Ok(t) => t,
        Err(e) => return usage_err(e),
    };
    if let Err(e) = write_trajectory(&traj, &args.out) {
        return usage_err(e);
    }
    let report = PhenomenaReport::from_trajectory(&traj);
    if let Some(path) = &args.report {
        if let Err(e) = write_phenomena(&report, path) {
            return usage_err(e);
        }
    }
    println!(
        "simulate: {:?} after {} iterations (h = {:.6e}); S_inf = {:?}; catapult={} balancing={} \
         limiting={} one_sided={}",
        traj.status,
        traj.iterations,
        cfg.learning_rate,
        traj.limit_sharpness,
        report.catapult.detected,
        report.balancing.detected,
        report.eos.limiting_at_2_over_h,
        report.one_sided.detected,
    );
    ExitCode::SUCCESS
}

fn run_verify(args: VerifyArgs) -> ExitCode {
    let theorem: TheoremId = match args.theorem.parse() {
        Ok(t) => t,
        Err(e) => return usage_err(e),
    };
    let text = match std::fs::read_to_string(&args.grid) {
        Ok(t) => t,
        Err(e) => return usage_err(format!("--grid {}: {e}", args.grid.display())),
    };
    let grid: Vec<GridCell> = match serde_json::from_str(&text) {
        Ok(g) => g,
        Err(e) => return usage_err(format!("--grid {}: {e}", args.grid.display())),
    };
    if grid.is_empty() {
        return usage_err("grid is empty");
    }
    let checks = sweep(theorem, &grid);
    let out = args.out.unwrap_or_else(|| args.grid.with_file_name("checks.jsonl"));
    if let Err(e) = write_checks_jsonl(&checks, &out) {
        return usage_err(e);
    }
    let mut failed = 0;
    for (cell, check) in grid.iter().zip(&checks) {
        println!(
            "{} x0={} y0={} c={} hypotheses={:?} verdict={:?} margin={:?}",
            check.theorem.name(),
            cell.x0,
            cell.y0,
            check.c,
            check.hypotheses,
            check.verdict,
            check.margin
        );
        if check.hard_failure() {
            failed += 1;
        }
    }
    println!("wrote {}", out.display());
    if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_props_cmd(args: PropsArgs) -> ExitCode {
    let report = run_props(&args.a, &args.b);
    for check in &report.checks {
        println!(
            "{} [{}]: {} (margin {:.3e})",
            check.name,
            check.member,
            if check.pass { "pass" } else { "FAIL" },
            check.worst_margin
        );
    }
    if let Some(path) = &args.out {
        if let Err(e) = write_props(&report, path) {
            return usage_err(e);
        }
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run_from_config(path: PathBuf, want: &str) -> ExitCode {
    let config = match load_config(&path) {
        Ok(c) => c,
        Err(e) => return usage_err(e),
    };
    let matches = matches!(
        (&config, want),
        (ExperimentConfig::Sweep { .. }, "sweep")
            | (ExperimentConfig::Verify { .. }, "sweep")
            | (ExperimentConfig::NnTrain { .. }, "nn-train")
    );
    if !matches {
        return usage_err(format!("config {} does not describe a {want} run", path.display()));
    }
    match execute(&config) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => usage_err(e),
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Sweep { config } => run_from_config(config, "sweep"),
        Command::Verify(args) => run_verify(args),
        Command::NnTrain { config } => run_from_config(config, "nn-train"),
        Command::Props(args) => run_props_cmd(args),
        Command::FigureData { id, out } => {
            let figure: FigureId = match id.parse() {
                Ok(f) => f,
                Err(e) => return usage_err(e),
            };
            match figure_data(figure, &out) {
                Ok(files) => {
                    for f in files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => usage_err(e),
            }
        }
    }
}
