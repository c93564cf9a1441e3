use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use osnr_cli::config::ExperimentConfig;
use osnr_cli::drivers::{self, FitMode, PsdRequest};
use osnr_core::margin::{snr_grid, DEFAULT_BWD_LIST};

#[derive(Parser)]
#[command(
    name = "osnr",
    version,
    about = "In-band OSNR estimation with perturbed probe waveforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (TOML). Overrides --preset.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Built-in profile used when no config file is given.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Replaces both the amplifier-noise and noise-floor seeds.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(&self.preset)?,
        };
        if let Some(s) = self.seed {
            cfg.seeds.ase = s;
            cfg.seeds.nfl = s;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Cv,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario grid and write the feature dataset (resumable).
    Dataset {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Worker threads.
        #[arg(long, short, default_value_t = default_workers())]
        workers: usize,
        /// Output CSV; defaults to the config's `output.dataset`.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Fit the estimator coefficients to a dataset.
    Fit {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "cv")]
        mode: Mode,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 11)]
        fold_seed: u64,
        /// Rows with a true OSNR above this are excluded.
        #[arg(long, default_value_t = osnr_core::estimator::DEFAULT_OSNR_CAP_DB)]
        cap_db: f64,
        #[arg(long, default_value = "coefficients.json")]
        coeffs: PathBuf,
        #[arg(long, default_value = "fit_report.json")]
        report: PathBuf,
    },
    /// Score saved coefficients on a dataset.
    Eval {
        dataset: PathBuf,
        #[arg(long, default_value = "coefficients.json")]
        coeffs: PathBuf,
        #[arg(long, default_value_t = osnr_core::estimator::DEFAULT_OSNR_CAP_DB)]
        cap_db: f64,
        #[arg(long, default_value = "predictions.csv")]
        output: PathBuf,
    },
    /// SNR penalty of reserving bandwidth for the probe.
    Margin {
        #[arg(long, default_value_t = 56.8e9)]
        baud_rate: f64,
        /// Perturbation bandwidths in GHz.
        #[arg(long, value_delimiter = ',')]
        bwd_ghz: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.0)]
        snr_start_db: f64,
        #[arg(long, default_value_t = 30.0)]
        snr_stop_db: f64,
        #[arg(long, default_value_t = 0.5)]
        snr_step_db: f64,
        #[arg(long, default_value = "margin.csv")]
        output: PathBuf,
    },
    /// Received OSA traces and APSDs of every probe for one scenario.
    Psd {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 2.0)]
        power_dbm: f64,
        #[arg(long, default_value_t = 30)]
        spans: usize,
        /// Amplifier noise figure; omit for noiseless amplifiers.
        #[arg(long)]
        nf_db: Option<f64>,
        /// Also write the received fields as raw little-endian complex f64.
        #[arg(long)]
        dump_fields: bool,
        #[arg(long, short, default_value = "psd_out")]
        output: PathBuf,
    },
    /// Print a preset as TOML, as a starting point for a config file.
    ShowConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Dataset {
            cfg,
            workers,
            output,
        } => {
            let cfg = cfg.load()?;
            let out = output.unwrap_or_else(|| cfg.output.dataset.clone());
            let s = osnr_cli::run_dataset(&cfg, &out, workers)
                .with_context(|| format!("generating {}", out.display()))?;
            println!(
                "{}: {} rows reused, {} simulated ({} chains)",
                out.display(),
                s.rows_reused,
                s.rows_simulated,
                s.chains_simulated
            );
        }
        Command::Fit {
            dataset,
            mode,
            folds,
            fold_seed,
            cap_db,
            coeffs,
            report,
        } => {
            let mode = match mode {
                Mode::Cv => FitMode::CrossValidate {
                    folds,
                    seed: fold_seed,
                },
                Mode::All => FitMode::All,
            };
            let r = drivers::run_fit(&dataset, mode, cap_db, &coeffs, &report)?;
            for c in &r.coefficients {
                println!("{:<22} {:>14.6}", c.name, c.value);
            }
            println!(
                "rows used {} of {}; training RMSE {:.3} dB",
                r.rows_used, r.rows_total, r.training.rmse_db
            );
            if let Some(h) = &r.held_out {
                println!(
                    "held-out RMSE {:.3} dB (bias {:+.3} dB, max |err| {:.3} dB)",
                    h.rmse_db, h.bias_db, h.max_abs_error_db
                );
            }
        }
        Command::Eval {
            dataset,
            coeffs,
            cap_db,
            output,
        } => {
            let r = drivers::run_eval(&dataset, &coeffs, cap_db, &output)?;
            println!(
                "{} rows: RMSE {:.3} dB, bias {:+.3} dB",
                r.count, r.rmse_db, r.bias_db
            );
            for p in &r.per_power {
                println!(
                    "  {:+} dBm: RMSE {:.3} dB over {} rows",
                    p.launch_power_dbm, p.rmse_db, p.count
                );
            }
        }
        Command::Margin {
            baud_rate,
            bwd_ghz,
            snr_start_db,
            snr_stop_db,
            snr_step_db,
            output,
        } => {
            let bwd: Vec<f64> = match bwd_ghz {
                Some(v) => v.iter().map(|g| g * 1e9).collect(),
                None => DEFAULT_BWD_LIST.to_vec(),
            };
            let grid = snr_grid(snr_start_db, snr_stop_db, snr_step_db);
            let n = drivers::run_margin(baud_rate, &bwd, &grid, &output)?;
            println!("{}: {n} rows", output.display());
        }
        Command::Psd {
            cfg,
            power_dbm,
            spans,
            nf_db,
            dump_fields,
            output,
        } => {
            let cfg = cfg.load()?;
            let req = PsdRequest {
                launch_power_dbm: power_dbm,
                n_spans: spans,
                nf_db,
                dump_fields,
            };
            for r in drivers::export_psd(&cfg, &req, &output)? {
                println!(
                    "dA {:+} dB: P_ref {:.3} dB, P_N {:.3} dB",
                    r.delta_a_db, r.p_ref, r.p_n
                );
            }
        }
        Command::ShowConfig { cfg } => {
            print!("{}", cfg.load()?.to_toml_string()?);
        }
    }
    Ok(())
}
