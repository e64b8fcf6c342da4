//! Argument parsing and the eight subcommands.

use std::io::BufReader;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use langevin_deviations::coefficients::{validate_hypothesis, HypothesisReport};
use langevin_deviations::grid::Path;
use langevin_deviations::limit_flow::{solve_limit_ode, transition_family};
use langevin_deviations::mc::{
    estimate_exceedance, mdp_slope_sweep, remainder_sweep, weak_convergence_check, McEstimate,
    RemainderSweep, SweepResult, WeakConvergence,
};
use langevin_deviations::sde::{
    fluctuation_path, remainder_decomposition, sample_noise, simulate_first_order,
    simulate_langevin, RemainderReport,
};
use langevin_deviations::skeleton::{exit_rate, exit_rate_with_directions, rate_of_path,
    skeleton_map, terminal_rate, RateResult};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::Reporter;

#[derive(Debug, Parser)]
#[command(
    name = "langevin-deviations",
    version,
    about = "Small-mass Langevin dynamics, moderate-deviation rate functions, \
             and Monte Carlo scaling checks"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override a config key, e.g. --set scales.epsilon=0.05 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Output directory (default: $LANGEVIN_DEVIATIONS_OUT, then ./out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Worker threads for Monte Carlo sampling (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing coefficient assumptions on a sampled box domain.
    Validate,
    /// Integrate the noiseless relaxation dynamics q' = b(q)/alpha(q).
    Limit,
    /// Run the momentum scheme; write position, momentum, and fluctuation
    /// traces (controlled when the config has a [control] section).
    Simulate {
        /// Also compute the pathwise remainder decomposition.
        #[arg(long)]
        remainder: bool,
    },
    /// Rate of a fluctuation path or of hitting a terminal point.
    Rate {
        /// CSV file (header t,x1,...,xd) with the fluctuation path to rate.
        #[arg(long, value_name = "FILE", conflicts_with_all = ["from_control", "terminal"])]
        path: Option<PathBuf>,

        /// Drive the skeleton equation with the configured [control], then
        /// rate the resulting path (round trip).
        #[arg(long, conflicts_with = "terminal")]
        from_control: bool,

        /// Rate of hitting the given terminal point (comma-separated
        /// components; empty to use [rate].target from the config).
        #[arg(long, value_name = "X1,..,XD", num_args = 0..=1, default_missing_value = "")]
        terminal: Option<String>,
    },
    /// Cheapest exit rate from the delta-ball around the relaxation path.
    ExitRate,
    /// Exceedance probabilities across scales and the deviation-slope fit.
    MdpSweep,
    /// Mean normalized remainder across scales.
    RemainderSweep,
    /// Controlled-run distance to the skeleton prediction across scales.
    WeakConv,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("pass --config FILE (TOML run configuration)".into()))?;
    let cfg = RunConfig::load(&config_path, &cli.set)?;
    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var_os("LANGEVIN_DEVIATIONS_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let reporter = Reporter::new(out_dir)?;

    match cli.command {
        Command::Validate => cmd_validate(&cfg, &reporter),
        Command::Limit => cmd_limit(&cfg, &reporter),
        Command::Simulate { remainder } => cmd_simulate(&cfg, &reporter, remainder),
        Command::Rate { path, from_control, terminal } => {
            cmd_rate(&cfg, &reporter, path, from_control, terminal)
        }
        Command::ExitRate => cmd_exit_rate(&cfg, &reporter),
        Command::MdpSweep => cmd_mdp_sweep(&cfg, &reporter),
        Command::RemainderSweep => cmd_remainder_sweep(&cfg, &reporter),
        Command::WeakConv => cmd_weak_conv(&cfg, &reporter),
    }
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    model: &'a str,
    dim: usize,
    samples: usize,
    tol: f64,
    seed: u64,
    hypothesis: HypothesisReport,
}

fn cmd_validate(cfg: &RunConfig, reporter: &Reporter) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let (domain, samples, tol) = cfg.build_domain()?;
    let hypothesis = validate_hypothesis(&model, &domain, samples, tol, cfg.run.seed)?;
    let passed = hypothesis.clauses.iter().filter(|c| c.passed).count();
    let total = hypothesis.clauses.len();
    let all = hypothesis.all_passed;
    reporter.write_json(
        "validate",
        &ValidateReport { model: &cfg.model.name, dim: cfg.model.dim, samples, tol, seed: cfg.run.seed, hypothesis },
    )?;
    println!("hypothesis clauses: {passed}/{total} passed{}", if all { "" } else { " (FAIL)" });
    Ok(())
}

#[derive(Serialize)]
struct LimitReport<'a> {
    model: &'a str,
    dim: usize,
    horizon: f64,
    steps: usize,
    start: Vec<f64>,
    end: Vec<f64>,
    sup_norm: f64,
}

fn cmd_limit(cfg: &RunConfig, reporter: &Reporter) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let grid = cfg.build_grid()?;
    let sim = cfg.build_sim()?; // reuse the initial-state validation
    let q0path = solve_limit_ode(&model, sim.q_init(), grid)?;
    reporter.write_csv("limit.csv", |w| q0path.write_csv(w).map_err(CliError::from))?;
    reporter.write_json(
        "limit",
        &LimitReport {
            model: &cfg.model.name,
            dim: cfg.model.dim,
            horizon: grid.horizon(),
            steps: grid.steps(),
            start: q0path.start().as_slice().to_vec(),
            end: q0path.end().as_slice().to_vec(),
            sup_norm: q0path.sup_norm(),
        },
    )?;
    println!("relaxation endpoint |q0(T)| = {:.6}", q0path.end().norm());
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    model: &'a str,
    epsilon: f64,
    kappa: f64,
    h_eps: f64,
    fluctuation_scale: f64,
    seed: u64,
    sample_index: u64,
    substeps_per_cell: usize,
    controlled: bool,
    sup_position: f64,
    end_position: Vec<f64>,
    sup_fluctuation: f64,
    first_order_gap: f64,
    remainder: Option<RemainderReport>,
}

fn cmd_simulate(cfg: &RunConfig, reporter: &Reporter, remainder: bool) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let sim = cfg.build_sim()?;
    let noise = sample_noise(&sim, cfg.run.sample_index);
    let control = match cfg.control {
        Some(_) => Some(cfg.build_control(*sim.grid())?),
        None => None,
    };

    let (state, report) = if remainder {
        let (state, rep) = remainder_decomposition(&model, &sim, &noise, control.as_ref())?;
        (state, Some(rep))
    } else {
        (simulate_langevin(&model, &sim, &noise, control.as_ref())?, None)
    };

    let q0path = solve_limit_ode(&model, sim.q_init(), *sim.grid())?;
    let fluct = fluctuation_path(&state.positions, &q0path, &sim)?;
    let first = simulate_first_order(&model, &sim, &noise)?;
    let gap = state.positions.sup_distance(&first)?;

    reporter.write_csv("positions.csv", |w| state.positions.write_csv(w).map_err(CliError::from))?;
    reporter.write_csv("momenta.csv", |w| state.momenta.write_csv(w).map_err(CliError::from))?;
    reporter.write_csv("fluctuation.csv", |w| fluct.write_csv(w).map_err(CliError::from))?;
    reporter.write_csv("first_order.csv", |w| first.write_csv(w).map_err(CliError::from))?;
    reporter.write_json(
        "simulate",
        &SimulateReport {
            model: &cfg.model.name,
            epsilon: sim.epsilon(),
            kappa: sim.kappa(),
            h_eps: sim.h_eps(),
            fluctuation_scale: sim.fluctuation_scale(),
            seed: sim.seed(),
            sample_index: cfg.run.sample_index,
            substeps_per_cell: sim.substeps(),
            controlled: control.is_some(),
            sup_position: state.positions.sup_norm(),
            end_position: state.positions.end().as_slice().to_vec(),
            sup_fluctuation: fluct.sup_norm(),
            first_order_gap: gap,
            remainder: report,
        },
    )?;
    println!(
        "sup |q_eps| = {:.6}, sup |X_eps| = {:.6}",
        state.positions.sup_norm(),
        fluct.sup_norm()
    );
    Ok(())
}

#[derive(Serialize)]
struct RateReport<'a> {
    mode: &'a str,
    /// Energy of the [control] input in round-trip mode, for comparison
    /// against the recovered rate.
    input_energy: Option<f64>,
    minimizer_energy: f64,
    result: RateResult,
}

fn cmd_rate(
    cfg: &RunConfig,
    reporter: &Reporter,
    path: Option<PathBuf>,
    from_control: bool,
    terminal: Option<String>,
) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let modes = usize::from(path.is_some()) + usize::from(from_control) + usize::from(terminal.is_some());
    if modes != 1 {
        return Err(CliError::Config(
            "rate needs exactly one of --path FILE, --from-control, --terminal [X]".into(),
        ));
    }

    let (mode, result, input_energy) = if let Some(file) = path {
        let reader = BufReader::new(std::fs::File::open(&file)
            .map_err(|e| CliError::Io(format!("opening {}: {e}", file.display())))?);
        let psi = Path::read_csv(reader)?;
        let q0path = solve_limit_ode(&model, &initial_position(cfg)?, *psi.grid())?;
        ("path", rate_of_path(&model, &q0path, &psi)?, None)
    } else if from_control {
        let grid = cfg.rate_grid()?;
        let control = cfg.build_control(grid)?;
        let q0path = solve_limit_ode(&model, &initial_position(cfg)?, grid)?;
        let psi = skeleton_map(&model, &q0path, &control)?;
        reporter.write_csv("skeleton_path.csv", |w| psi.write_csv(w).map_err(CliError::from))?;
        let energy = control.energy();
        ("round_trip", rate_of_path(&model, &q0path, &psi)?, Some(energy))
    } else {
        let target = parse_terminal_target(cfg, terminal.as_deref().unwrap_or(""))?;
        let grid = cfg.rate_grid()?;
        let q0path = solve_limit_ode(&model, &initial_position(cfg)?, grid)?;
        let phis = transition_family(&model, &q0path)?;
        ("terminal", terminal_rate(&model, &q0path, &phis, &target)?, None)
    };

    reporter.write_csv("rate_control.csv", |w| {
        result.optimal_control.write_csv(w).map_err(CliError::from)
    })?;
    let report = RateReport {
        mode,
        input_energy,
        minimizer_energy: result.optimal_control.energy(),
        result,
    };
    reporter.write_json("rate", &report)?;
    println!("rate = {:.8} (mode {mode}, residual {:.3e})", report.result.rate, report.result.residual);
    Ok(())
}

#[derive(Serialize)]
struct ExitReport {
    delta: f64,
    minimizer_energy: f64,
    result: RateResult,
}

fn cmd_exit_rate(cfg: &RunConfig, reporter: &Reporter) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let delta = cfg.delta()?;
    let grid = cfg.rate_grid()?;
    let q0path = solve_limit_ode(&model, &initial_position(cfg)?, grid)?;
    let phis = transition_family(&model, &q0path)?;
    let result = match cfg.rate.as_ref().and_then(|r| r.directions) {
        Some(count) => exit_rate_with_directions(&model, &q0path, &phis, delta, count)?,
        None => exit_rate(&model, &q0path, &phis, delta)?,
    };
    reporter.write_csv("exit_control.csv", |w| {
        result.optimal_control.write_csv(w).map_err(CliError::from)
    })?;
    let report = ExitReport { delta, minimizer_energy: result.optimal_control.energy(), result };
    reporter.write_json("exit_rate", &report)?;
    println!(
        "exit rate = {:.8} at t* = {:?}",
        report.result.rate,
        report.result.t_star
    );
    Ok(())
}

#[derive(Serialize)]
struct MdpSweepReport {
    samples_per_scale: usize,
    point_estimate: McEstimate,
    sweep: SweepResult,
}

fn cmd_mdp_sweep(cfg: &RunConfig, reporter: &Reporter) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let base = cfg.build_sim()?;
    let delta = cfg.delta()?;
    let sweep_cfg = cfg.sweep()?;
    let samples = sweep_cfg.samples_per_scale.unwrap_or(cfg.run.samples);
    let point = estimate_exceedance(&model, &base, delta, samples)?;
    let sweep = mdp_slope_sweep(&model, &base, delta, &sweep_cfg.epsilons, samples, sweep_cfg.rate_steps)?;
    reporter.write_table(
        "mdp_sweep.csv",
        "epsilon,h_squared,probability,lo,hi,exceedances,samples",
        &sweep
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.epsilon,
                    r.h_squared,
                    r.probability,
                    r.lo,
                    r.hi,
                    r.exceedances as f64,
                    r.samples as f64,
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let report = MdpSweepReport { samples_per_scale: samples, point_estimate: point, sweep };
    reporter.write_json("mdp_sweep", &report)?;
    println!(
        "slope = {:.4} vs reference rate {:.4} (gap {:.1}%)",
        report.sweep.slope,
        report.sweep.reference_rate,
        100.0 * report.sweep.relative_gap
    );
    Ok(())
}

#[derive(Serialize)]
struct RemainderSweepReport {
    samples_per_scale: usize,
    sweep: RemainderSweep,
}

fn cmd_remainder_sweep(cfg: &RunConfig, reporter: &Reporter) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let base = cfg.build_sim()?;
    let sweep_cfg = cfg.sweep()?;
    let samples = sweep_cfg.samples_per_scale.unwrap_or(cfg.run.samples);
    let control = match cfg.control {
        Some(_) => Some(cfg.build_control(*base.grid())?),
        None => None,
    };
    let sweep = remainder_sweep(&model, &base, &sweep_cfg.epsilons, samples, control.as_ref())?;
    reporter.write_table(
        "remainder_sweep.csv",
        "epsilon,h_eps,mean_normalized,stderr,mean_h1,mean_h2,samples",
        &sweep
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.epsilon,
                    r.h_eps,
                    r.mean_normalized,
                    r.stderr,
                    r.mean_h1,
                    r.mean_h2,
                    r.samples as f64,
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let decreasing = sweep.strictly_decreasing_2se;
    let report = RemainderSweepReport { samples_per_scale: samples, sweep };
    reporter.write_json("remainder_sweep", &report)?;
    println!(
        "normalized remainder decreasing (2 s.e.): {decreasing}, log-log slope {:?}",
        report.sweep.loglog_slope
    );
    Ok(())
}

#[derive(Serialize)]
struct WeakConvReport {
    samples_per_scale: usize,
    check: WeakConvergence,
}

fn cmd_weak_conv(cfg: &RunConfig, reporter: &Reporter) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let base = cfg.build_sim()?;
    let sweep_cfg = cfg.sweep()?;
    let samples = sweep_cfg.samples_per_scale.unwrap_or(cfg.run.samples);
    let control = cfg.build_control(*base.grid())?;
    let check = weak_convergence_check(&model, &base, &control, &sweep_cfg.epsilons, samples)?;
    reporter.write_table(
        "weak_conv.csv",
        "epsilon,mean_sup_distance,stderr,samples",
        &check
            .rows
            .iter()
            .map(|r| vec![r.epsilon, r.mean_sup_distance, r.stderr, r.samples as f64])
            .collect::<Vec<_>>(),
    )?;
    let report = WeakConvReport { samples_per_scale: samples, check };
    reporter.write_json("weak_conv", &report)?;
    println!(
        "mean sup distance first -> last: {:?} -> {:?}",
        report.check.rows.first().map(|r| r.mean_sup_distance),
        report.check.rows.last().map(|r| r.mean_sup_distance)
    );
    Ok(())
}

fn initial_position(cfg: &RunConfig) -> Result<DVector<f64>, CliError> {
    match &cfg.initial.position {
        None => Ok(DVector::zeros(cfg.model.dim)),
        Some(v) if v.len() == cfg.model.dim => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(CliError::Config(format!(
            "[initial].position has dimension {}, model has {}",
            v.len(),
            cfg.model.dim
        ))),
    }
}

/// `--terminal 0.3,-0.2` parses the flag value; `--terminal` alone falls back
/// to `[rate].target` from the config.
fn parse_terminal_target(cfg: &RunConfig, flag: &str) -> Result<DVector<f64>, CliError> {
    let values: Vec<f64> = if flag.is_empty() {
        cfg.rate
            .as_ref()
            .and_then(|r| r.target.clone())
            .ok_or_else(|| {
                CliError::Config("--terminal needs a value or [rate].target in the config".into())
            })?
    } else {
        flag.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    CliError::Config(format!("--terminal component {s:?}: {e}"))
                })
            })
            .collect::<Result<_, _>>()?
    };
    if values.len() != cfg.model.dim {
        return Err(CliError::Config(format!(
            "terminal target has dimension {}, model has {}",
            values.len(),
            cfg.model.dim
        )));
    }
    Ok(DVector::from_column_slice(&values))
}
