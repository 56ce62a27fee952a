//! Command-line entry point for the two-cell coordination experiment
//! runner.  Each subcommand produces one CSV table on stdout or at `--out`;
//! see the library's `harness` module for configuration keys and row schema.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icic::harness::{
    self, CsvTable, ExperimentConfig,
};
use icic::Error;

#[derive(Parser)]
#[command(
    name = "icic",
    version,
    about = "Two-cell interference-cancellation experiment runner",
    after_help = "Flags override the corresponding configuration keys. Exit codes: \
                  0 success, 2 configuration error, 3 numerical non-convergence."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Monte Carlo master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo blocks per point; also turns Monte Carlo rows on.
    #[arg(long, global = true)]
    samples: Option<u64>,

    /// Comma-separated cell-edge SNR list in dB.
    #[arg(long = "edge-snr-db", global = true, value_delimiter = ',', num_args = 1..)]
    edge_snr_db: Option<Vec<f64>>,

    /// Antennas per base station; training and feedback intervals rescale
    /// with it (T_t = N_B·N_t, T_fb = N_B²·N_t).
    #[arg(long, global = true)]
    nt: Option<u32>,

    /// Block length in symbols.
    #[arg(long = "T", global = true)]
    t: Option<u32>,

    /// CSI acquisition mode.
    #[arg(long = "csi-mode", global = true, value_parser = ["perfect", "training", "afb", "dfb"])]
    csi_mode: Option<String>,

    /// Per-user total feedback bits, decoupled from the feedback interval.
    #[arg(long, global = true)]
    bits: Option<u32>,

    /// Keep pilot and data at equal power instead of the optimal split.
    #[arg(long = "no-train-opt", global = true)]
    no_train_opt: bool,

    /// Keep the equal feedback allocation instead of the optimal one.
    #[arg(long = "no-fb-opt", global = true)]
    no_fb_opt: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Throughput vs SNR and user-2 position: closed forms, large-power
    /// approximations, and optional Monte Carlo rows.
    RateSweep,
    /// Selected strategy pair over a grid of user positions.
    ModeMap,
    /// The six feedback systems at increasing optimization levels.
    OptimizeCompare,
    /// Mean and 5th-percentile throughput over random placements.
    Percentile,
    /// Fast built-in verification of reference values and determinism.
    Selftest,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = cli.samples {
        cfg.samples = samples;
        cfg.mc = true;
    }
    if let Some(snrs) = &cli.edge_snr_db {
        cfg.edge_snr_db = snrs.clone();
        if let [single] = snrs[..] {
            cfg.map_snr_db = single;
        }
    }
    if let Some(nt) = cli.nt {
        cfg.n_t = nt;
        cfg.t_t = cfg.n_b * nt;
        cfg.t_fb = cfg.n_b * cfg.n_b * nt;
    }
    if let Some(t) = cli.t {
        cfg.t = t;
    }
    if let Some(mode) = &cli.csi_mode {
        cfg.csi_mode = mode.parse()?;
    }
    if let Some(bits) = cli.bits {
        cfg.bits_override = Some(bits);
    }
    if cli.no_train_opt {
        cfg.train_opt = false;
    }
    if cli.no_fb_opt {
        cfg.fb_opt = false;
    }
    // Re-validate after overrides (e.g. --T shrinking the frame).
    ExperimentConfig::parse(&cfg.serialize())
}

fn emit(cli: &Cli, cfg: &ExperimentConfig, table: CsvTable) -> Result<(), Error> {
    let csv = table.to_csv();
    let target = cli.out.clone().or_else(|| cfg.out.clone().map(PathBuf::from));
    match target {
        Some(path) => std::fs::write(&path, csv)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    if let Command::Selftest = cli.command {
        let checks = harness::run_selftest();
        let mut all_ok = true;
        for (name, pass, detail) in &checks {
            println!("{}: {name} ({detail})", if *pass { "ok" } else { "FAIL" });
            all_ok &= pass;
        }
        println!("{} of {} checks passed", checks.iter().filter(|c| c.1).count(), checks.len());
        return Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
    }

    let cfg = load_config(cli)?;
    let table = match cli.command {
        Command::RateSweep => harness::run_rate_sweep(&cfg)?,
        Command::ModeMap => harness::run_mode_map(&cfg)?,
        Command::OptimizeCompare => harness::run_optimizer_comparison(&cfg)?,
        Command::Percentile => harness::run_percentile_study(&cfg)?,
        Command::Selftest => unreachable!(),
    };
    emit(cli, &cfg, table)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
