//! Command-line driver: simulate / ensemble / phase / identities.
//!
//! Exit codes: 0 success, 1 validation error, 2 identity failure, 3 I/O
//! error.

use linsys::config::{ConfigError, RunConfig, parse_config};
use linsys::engine::Horizon;
use linsys::ensemble::{EnsembleOptions, run_ensemble, summarize};
use linsys::identities::{BatteryOptions, run_battery};
use linsys::kernel::KernelDistribution;
use linsys::output::trajectories_to_csv;
use linsys::theory::{PhaseOptions, phase_report};
use std::fs;
use std::process::ExitCode;

const USAGE: &str = "\
linsys — linear particle systems on the integer lattice

USAGE:
  linsys simulate   --config <path> [--seed <u64>] [--plot-script <path>]
  linsys ensemble   --config <path> [--seed <u64>] [--plot-script <path>]
  linsys phase      --config <path>
  linsys identities [--config <path>] [--test-corrupt-beta <eps>]

Configs are JSON documents; see the book's command-line chapter for the
schema. `--seed` overrides the config seed. `identities` without a config
runs the battery on the d = 3 contact-path kernel with lambda = 1.

EXIT CODES:
  0 success | 1 validation error | 2 identity failure | 3 I/O error
";

struct Args {
    command: String,
    config_path: Option<String>,
    seed_override: Option<u64>,
    plot_script: Option<String>,
    corrupt_beta: f64,
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let command = argv.next().ok_or("missing subcommand")?;
    let mut args = Args {
        command,
        config_path: None,
        seed_override: None,
        plot_script: None,
        corrupt_beta: 0.0,
    };
    while let Some(flag) = argv.next() {
        match flag.as_str() {
            "--config" => {
                args.config_path = Some(argv.next().ok_or("missing value for --config")?);
            }
            "--seed" => {
                let v = argv.next().ok_or("missing value for --seed")?;
                args.seed_override = Some(
                    v.parse()
                        .map_err(|_| format!("invalid --seed value {v:?}"))?,
                );
            }
            "--plot-script" => {
                args.plot_script = Some(argv.next().ok_or("missing value for --plot-script")?);
            }
            "--test-corrupt-beta" => {
                let v = argv.next().ok_or("missing value for --test-corrupt-beta")?;
                args.corrupt_beta = v
                    .parse()
                    .map_err(|_| format!("invalid --test-corrupt-beta value {v:?}"))?;
            }
            "--help" | "-h" => {
                println!("{USAGE}");
                std::process::exit(0);
            }
            other => return Err(format!("unknown flag {other:?}")),
        }
    }
    Ok(args)
}

fn load_config(args: &Args) -> Result<RunConfig, ExitCode> {
    let Some(path) = &args.config_path else {
        eprintln!("error: --config is required for this subcommand");
        return Err(ExitCode::from(1));
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {path}: {e}");
            return Err(ExitCode::from(3));
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e @ ConfigError::Schema { .. })
        | Err(e @ ConfigError::InvalidParameter(_))
        | Err(e @ ConfigError::Assumption(_)) => {
            eprintln!("error: {e}");
            return Err(ExitCode::from(1));
        }
    };
    if let Some(seed) = args.seed_override {
        config.seed = seed;
    }
    Ok(config)
}

fn write_file(path: &str, contents: &str) -> Result<(), ExitCode> {
    if let Err(e) = fs::write(path, contents) {
        eprintln!("error: cannot write {path}: {e}");
        // Drop any partial output.
        let _ = fs::remove_file(path);
        return Err(ExitCode::from(3));
    }
    Ok(())
}

fn gnuplot_script(csv_path: &str) -> String {
    format!(
        "# gnuplot script; run: gnuplot -p <this file>\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'time'\n\
         set logscale y\n\
         plot '{csv_path}' using 2:6 with points pt 7 ps 0.3 title 'replica overlap'\n"
    )
}

fn ensemble_opts(config: &RunConfig) -> EnsembleOptions {
    EnsembleOptions {
        runs: config.runs,
        workers: config.workers,
        master_seed: config.seed,
        horizon: Horizon {
            t_max: config.t_max,
            max_events: config.max_events,
        },
        sample_times: config.sample_times.clone(),
        prune_threshold: config.prune_threshold,
        dual: false,
    }
}

fn cmd_simulate(args: &Args) -> ExitCode {
    let config = match load_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if config.runs != 1 {
        eprintln!("error: simulate expects runs = 1, got {}", config.runs);
        return ExitCode::from(1);
    }
    let record = linsys::engine::run(
        &config.kernel,
        Horizon {
            t_max: config.t_max,
            max_events: config.max_events,
        },
        &config.sample_times,
        config.seed,
        config.prune_threshold,
    );
    let csv = trajectories_to_csv(std::slice::from_ref(&record));
    if let Err(code) = write_file(&config.csv_path, &csv) {
        return code;
    }
    if let Some(p) = &args.plot_script
        && let Err(code) = write_file(p, &gnuplot_script(&config.csv_path))
    {
        return code;
    }
    println!(
        "wrote {} ({} rows, survived = {}, events = {})",
        config.csv_path,
        record.rows.len(),
        record.survived,
        record.final_state.events
    );
    ExitCode::SUCCESS
}

fn cmd_ensemble(args: &Args) -> ExitCode {
    let config = match load_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if config.runs < 2 {
        eprintln!("error: ensemble expects runs >= 2, got {}", config.runs);
        return ExitCode::from(1);
    }
    let opts = ensemble_opts(&config);
    // Simulation happens before any file is opened, so a worker failure
    // cannot leave partial output behind.
    let records = match std::panic::catch_unwind(|| run_ensemble(&config.kernel, &opts)) {
        Ok(r) => r,
        Err(_) => {
            eprintln!("error: a simulation worker failed; no output written");
            return ExitCode::from(1);
        }
    };
    let summary = summarize(
        &config.kernel,
        config.seed,
        &config.sample_times,
        config.prune_threshold,
        &records,
    );
    let csv = trajectories_to_csv(&records);
    if let Err(code) = write_file(&config.csv_path, &csv) {
        return code;
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Err(code) = write_file(&config.report_path, &json) {
        return code;
    }
    if let Some(p) = &args.plot_script
        && let Err(code) = write_file(p, &gnuplot_script(&config.csv_path))
    {
        return code;
    }
    println!(
        "wrote {} and {} ({} runs, survived fraction {:.4})",
        config.csv_path, config.report_path, summary.runs, summary.survived_fraction
    );
    ExitCode::SUCCESS
}

fn cmd_phase(args: &Args) -> ExitCode {
    let config = match load_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let report = match phase_report(&config.kernel, &PhaseOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(code) = write_file(&config.report_path, &json) {
        return code;
    }
    let classification = match report.classification {
        linsys::PhaseClass::SlowGrowthCertified => "slow growth certified",
        linsys::PhaseClass::LocalizationConditionHolds => "localization condition holds",
        linsys::PhaseClass::RegularGrowthSufficient => "regular growth sufficient",
        linsys::PhaseClass::Inconclusive => "inconclusive (within threshold margin)",
    };
    println!("classification: {classification}");
    println!(
        "|k| = {:.6}, k0 = {:.6}, log-moment margin = {:+.6}",
        report.k_norm, report.k0, report.log_moment_margin
    );
    if let Some(stat) = report.loc_statistic {
        println!("localization statistic = {stat:.6} (threshold 2)");
    }
    if let Some(n) = report.witness_n {
        println!("witness step n = {n}");
    }
    println!("wrote {}", config.report_path);
    ExitCode::SUCCESS
}

fn cmd_identities(args: &Args) -> ExitCode {
    let kernel = match &args.config_path {
        Some(_) => match load_config(args) {
            Ok(c) => c.kernel,
            Err(code) => return code,
        },
        None => KernelDistribution::bcpp(3, 1.0).expect("built-in kernel is valid"),
    };
    let opts = BatteryOptions {
        beta_perturbation: args.corrupt_beta,
        ..BatteryOptions::default()
    };
    let checks = run_battery(&kernel, &opts);
    let mut failed = 0;
    for c in &checks {
        let status = if let Some(note) = &c.note {
            note.clone()
        } else if c.passed {
            format!(
                "pass (max residual {:.3e}, tolerance {:.1e})",
                c.residual, c.tolerance
            )
        } else {
            failed += 1;
            format!(
                "FAIL (max residual {:.3e} > tolerance {:.1e})",
                c.residual, c.tolerance
            )
        };
        println!("{:36} {status}", c.name);
    }
    if failed > 0 {
        eprintln!("{failed} identity check(s) failed");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}\n\n{USAGE}");
            return ExitCode::from(1);
        }
    };
    match args.command.as_str() {
        "simulate" => cmd_simulate(&args),
        "ensemble" => cmd_ensemble(&args),
        "phase" => cmd_phase(&args),
        "identities" => cmd_identities(&args),
        other => {
            eprintln!("error: unknown subcommand {other:?}\n\n{USAGE}");
            ExitCode::from(1)
        }
    }
}
