//! `overlap-sim`: simulate, sweep, and check overlap schedules from the
//! command line.
//!
//! Exit status: 0 on success, 1 when a validation or accuracy threshold
//! fails, 2 on usage, file or parse errors.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use overlap_sim::{
    default_calibration, load_calibration, parse_scenarios, synthetic_grid, LossModel, Machine,
    ScheduleKind, Scenario, SweepAxis, SweepSpec,
};

use crate::report::Format;

#[derive(Parser)]
#[command(name = "overlap-sim", version, about = "Fine-grain compute/communication overlap simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every scenario under each selected schedule.
    Simulate(Common),
    /// Sweep one parameter of a base scenario and report speedup against T_gemm/T_comm.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        axis: AxisArgs,
    },
    /// Compare the schedule heuristic with the simulated best FiCCO schedule.
    Heuristic {
        #[command(flatten)]
        common: Common,
        /// Evaluate the built-in 16-point synthetic grid as well.
        #[arg(long)]
        synthetic: bool,
    },
    /// Check byte and op conservation of every plan.
    Validate(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario CSV file.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Machine TOML file.
    #[arg(long)]
    machine: PathBuf,
    /// Calibration JSON file; tables it omits keep their defaults.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Comma-separated schedule names.
    #[arg(long, value_delimiter = ',')]
    schedules: Option<Vec<String>>,
    /// Directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Seed for duration jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale each task by a uniform draw from [1, 1 + jitter].
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Fail when heuristic accuracy falls below this fraction.
    #[arg(long)]
    min_accuracy: Option<f64>,
}

#[derive(Args, Clone)]
struct AxisArgs {
    /// Parameter to sweep: m, n, k, link_bw or peak_flops.
    #[arg(long, default_value = "n")]
    axis: String,
    #[arg(long, default_value_t = 128.0)]
    start: f64,
    #[arg(long, default_value_t = 8192.0)]
    stop: f64,
    #[arg(long, default_value_t = 13)]
    steps: usize,
    /// Scenario to vary; defaults to the first in the file.
    #[arg(long)]
    base: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// An error plus the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn from_core(e: overlap_sim::Error, context: String) -> Failure {
    let code = match e {
        overlap_sim::Error::Parse { .. } | overlap_sim::Error::Config(_) | overlap_sim::Error::Calibration { .. } => 2,
        _ => 1,
    };
    Failure { code, error: anyhow!(e).context(context) }
}

pub(crate) struct Inputs {
    pub scenarios: Vec<Scenario>,
    pub machine: Machine,
    pub loss: LossModel,
    pub schedules: Vec<ScheduleKind>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub jitter: f64,
    pub min_accuracy: Option<f64>,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)
}

fn load(common: &Common, scenarios_required: bool, default_schedules: &[ScheduleKind]) -> Result<Inputs, Failure> {
    let scenarios = match &common.scenarios {
        Some(p) => parse_scenarios(&read(p)?).map_err(|e| from_core(e, p.display().to_string()))?,
        None if scenarios_required => return Err(usage(anyhow!("--scenarios is required"))),
        None => Vec::new(),
    };
    let machine = Machine::parse(&read(&common.machine)?).map_err(|e| from_core(e, common.machine.display().to_string()))?;
    let loss = match &common.calibration {
        Some(p) => load_calibration(&read(p)?).map_err(|e| from_core(e, p.display().to_string()))?,
        None => default_calibration(),
    };
    let schedules = match &common.schedules {
        None => default_schedules.to_vec(),
        Some(names) => {
            let mut kinds = Vec::new();
            for n in names.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
                let k: ScheduleKind = n.parse().map_err(|e| from_core(e, "--schedules".into()))?;
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
            kinds
        }
    };
    if schedules.is_empty() {
        return Err(usage(anyhow!("no schedules selected")));
    }
    if !(common.jitter >= 0.0 && common.jitter.is_finite()) {
        return Err(usage(anyhow!("--jitter must be finite and >= 0")));
    }
    if let Some(a) = common.min_accuracy {
        if !(0.0..=1.0).contains(&a) {
            return Err(usage(anyhow!("--min-accuracy must lie in [0, 1]")));
        }
    }
    Ok(Inputs {
        scenarios,
        machine,
        loss,
        schedules,
        out: common.out.clone(),
        format: match common.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
        seed: common.seed,
        jitter: common.jitter,
        min_accuracy: common.min_accuracy,
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(c) => report::simulate(&load(&c, true, &ScheduleKind::ALL)?),
        Command::Validate(c) => report::validate(&load(&c, true, &ScheduleKind::ALL)?),
        Command::Heuristic { common, synthetic } => {
            let mut inputs = load(&common, !synthetic, &ScheduleKind::FICCO)?;
            if synthetic {
                let g = inputs.machine.topology.n_gpus;
                let grid = synthetic_grid(g, 2).map_err(|e| from_core(e, "synthetic grid".into()))?;
                inputs.scenarios.extend(grid);
            }
            report::heuristic(&inputs)
        }
        Command::Sweep { common, axis } => {
            let defaults = [
                ScheduleKind::Ideal,
                ScheduleKind::ShardOverlapP2P,
                ScheduleKind::UniformFused1D,
                ScheduleKind::HeteroFused1D,
                ScheduleKind::HeteroUnfused1D,
                ScheduleKind::UniformFused2D,
            ];
            let inputs = load(&common, true, &defaults)?;
            let spec = SweepSpec {
                axis: axis.axis.parse::<SweepAxis>().map_err(|e| from_core(e, "--axis".into()))?,
                start: axis.start,
                stop: axis.stop,
                steps: axis.steps,
            };
            spec.validate().map_err(|e| usage(anyhow!(e)))?;
            let base = match &axis.base {
                Some(name) => inputs
                    .scenarios
                    .iter()
                    .find(|s| &s.name == name)
                    .ok_or_else(|| usage(anyhow!("no scenario named `{name}`")))?,
                None => inputs.scenarios.first().ok_or_else(|| usage(anyhow!("scenario file is empty")))?,
            };
            report::sweep(&inputs, base, spec)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

pub(crate) fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

pub(crate) fn write_out(inputs: &Inputs, name: &str, body: &str) -> Result<(), Failure> {
    let Some(dir) = &inputs.out else { return Ok(()) };
    let path = dir.join(name);
    let parent = path.parent().unwrap_or(dir);
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display())).map_err(usage)?;
    fs::write(&path, body).with_context(|| format!("writing {}", path.display())).map_err(usage)
}
