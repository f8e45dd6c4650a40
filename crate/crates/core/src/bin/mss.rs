//! `mss`: simulate, sweep and fit metastable-switch memristors.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration or input validation,
//! 3 runtime failure. Errors are reported as a single
//! `mss: error kind=... path=... message="..."` line on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use mss_core::config::{demo_fig1, ConfigError, FitConfig, Overrides, SimulationConfig};
use mss_core::drivers::TimeGrid;
use mss_core::fitting::{fit, simulate_for_fit_with, FreeParam, LossKind};
use mss_core::io::{iv_svg_string, read_measurement_csv, write_iv_svg, write_trace_csv, Series};
use mss_core::sim::Mode;
use mss_core::{Error, MssParams, SamplerMode, Trace};

#[derive(Parser)]
#[command(name = "mss", version, about = "Metastable-switch memristor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation described by a config file.
    Simulate(RunArgs),
    /// Run a config once per value of its [sweep] table.
    Sweep(RunArgs),
    /// Fit model parameters to a measured trace.
    Fit(FitArgs),
    /// Write the three demonstration panels (top, center, bottom).
    DemoFig1(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stochastic,
    MeanField,
}

#[derive(Args)]
struct Common {
    /// Random seed (stochastic mode).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Directory for outputs; relative output paths resolve against it.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            mean_field: self.mode.map(|m| matches!(m, ModeArg::MeanField)),
            dt: self.dt,
            steps: self.steps,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seed for the random-search optimizer.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    common: Common,
}

struct Failure {
    code: u8,
    kind: String,
    path: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => c.into(),
            Error::Parse { line, message } => Failure {
                code: 2,
                kind: "parse".into(),
                path: format!("line {line}"),
                message,
            },
            other => {
                let code = match other {
                    Error::Parameter(_) | Error::Validation(_) => 2,
                    _ => 3,
                };
                Failure {
                    code,
                    kind: other.kind().into(),
                    path: "-".into(),
                    message: other.to_string(),
                }
            }
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(c: ConfigError) -> Self {
        let paths: Vec<&str> = c.issues.iter().map(|i| i.path.as_str()).collect();
        Failure {
            code: 2,
            kind: "config".into(),
            path: paths.join(","),
            message: c.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        kind: "io".into(),
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Sweep(args) => sweep(&args),
        Command::Fit(args) => run_fit(&args),
        Command::DemoFig1(args) => demo(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
            eprintln!("mss: error kind={} path={} message=\"{}\"", f.kind, f.path, message);
            ExitCode::from(f.code)
        }
    }
}

fn prepare_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_outputs(trace: &Trace, csv: &Path, svg: Option<&Path>) -> Outcome {
    write_trace_csv(trace, csv)?;
    if let Some(svg) = svg {
        write_iv_svg(trace, svg)?;
    }
    Ok(())
}

fn load_simulation(args: &RunArgs) -> Result<SimulationConfig, Failure> {
    let mut cfg = SimulationConfig::load(&args.config)?;
    cfg.apply(&args.common.overrides());
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: &RunArgs) -> Outcome {
    let cfg = load_simulation(args)?;
    let out = &args.common.out_dir;
    prepare_dir(out)?;
    let trace = cfg.run(0)?;
    if cfg.outputs.is_empty() {
        return write_outputs(&trace, &out.join("trace.csv"), None);
    }
    for o in &cfg.outputs {
        write_outputs(&trace, &out.join(&o.csv), o.svg.as_ref().map(|s| out.join(s)).as_deref())?;
    }
    Ok(())
}

fn sweep(args: &RunArgs) -> Outcome {
    let cfg = load_simulation(args)?;
    let Some(sweep) = cfg.sweep.clone() else {
        return Err(ConfigError::single("sweep", "the config has no [sweep] table").into());
    };
    let out = &args.common.out_dir;
    prepare_dir(out)?;
    (0..sweep.values.len()).into_par_iter().try_for_each(|k| -> Outcome {
        let point = cfg.sweep_point(k).expect("validated sweep point");
        let mut trace = point.run(k as u64)?;
        trace.push_meta("sweep", format!("{}={} (point {k})", sweep.parameter, sweep.values[k]));
        let stem = format!("{}_{k}", sweep.stem);
        let svg = sweep.svg.then(|| out.join(format!("{stem}.svg")));
        write_outputs(&trace, &out.join(format!("{stem}.csv")), svg.as_deref())
    })
}

#[derive(Serialize)]
struct FitReport<'a> {
    measurement: String,
    samples: usize,
    converged: bool,
    loss_kind: LossKind,
    loss: f64,
    iterations: usize,
    evaluations: usize,
    free: &'a [FreeParam],
    params: MssParams,
}

fn run_fit(args: &FitArgs) -> Outcome {
    let mut cfg = FitConfig::load(&args.config)?;
    if let (Some(seed), mss_core::fitting::Optimizer::RandomSearch { budget, .. }) = (args.seed, cfg.optimizer) {
        cfg.optimizer = mss_core::fitting::Optimizer::RandomSearch { budget, seed };
    }
    cfg.validate()?;
    let base_dir = args.config.parent().unwrap_or(Path::new("."));
    let measurement = base_dir.join(&cfg.measurement);
    if !measurement.exists() {
        return Err(ConfigError::single("measurement", format!("{} does not exist", measurement.display())).into());
    }
    let measured = read_measurement_csv(&measurement)?;
    let problem = cfg.problem(measured);
    let result = fit(&problem)?;

    prepare_dir(&args.out_dir)?;
    let report = FitReport {
        measurement: measurement.display().to_string(),
        samples: problem.measured.len(),
        converged: result.converged,
        loss_kind: cfg.loss,
        loss: result.loss_value,
        iterations: result.iterations,
        evaluations: result.evaluations,
        free: &cfg.free,
        params: result.params,
    };
    let report_path = args.out_dir.join(&cfg.output.report);
    let text = toml::to_string(&report).map_err(|e| Failure {
        code: 3,
        kind: "io".into(),
        path: report_path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(&report_path, text).map_err(|e| io_failure(&report_path, e))?;

    let model = simulate_for_fit_with(&result.params, &problem.measured, cfg.initial_state)?;
    let measured_points: Vec<(f64, f64)> = problem.measured.samples().iter().map(|s| (s.v, s.i)).collect();
    let model_points: Vec<(f64, f64)> = model.rows.iter().map(|r| (r.v, r.i)).collect();
    let mut legend = vec![format!("{} = {:.4e}", cfg.loss.as_str(), result.loss_value)];
    legend.extend(cfg.free.iter().map(|f| format!("{} = {:.6e}", f.name, f.name.get(&result.params))));
    let svg = iv_svg_string(
        &[
            Series { label: "measured", points: measured_points },
            Series { label: "best fit", points: model_points },
        ],
        &legend,
    );
    let svg_path = args.out_dir.join(&cfg.output.svg);
    fs::write(&svg_path, svg).map_err(|e| io_failure(&svg_path, e))
}

fn demo(args: &DemoArgs) -> Outcome {
    let c = &args.common;
    let mode = match c.mode {
        Some(ModeArg::MeanField) => Mode::MeanField,
        _ => Mode::Stochastic {
            seed: c.seed.unwrap_or(1),
            sampler: SamplerMode::Auto,
        },
    };
    let mut grid = TimeGrid::reference();
    grid.dt = c.dt.unwrap_or(grid.dt);
    grid.n_steps = c.steps.unwrap_or(grid.n_steps);
    prepare_dir(&c.out_dir)?;
    for (name, cfg) in demo_fig1(mode, grid) {
        cfg.validate()?;
        let mut trace = cfg.run(0)?;
        trace.push_meta("panel", name);
        let stem = c.out_dir.join(format!("fig1_{name}"));
        write_outputs(&trace, &stem.with_extension("csv"), Some(&stem.with_extension("svg")))?;
    }
    Ok(())
}
