//! Command-line front end: train, evaluate, sweep seeds and export baselines.
//!
//! Every file written carries `# config_hash=…` and `# seed=…` provenance
//! lines (CSV) or fields (JSON).

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use varcomm::baselines::{export_constellation, import_constellation, qam_constellation};
use varcomm::channels::ChannelFamily;
use varcomm::config::{default_config_text, load_config, RunConfig};
use varcomm::eval::{self, EvalReport, Scheme, StopRule};
use varcomm::systems::{self, Constellation, TrainedSystem};
use varcomm::Error;

#[derive(Debug, Parser)]
#[command(name = "varcomm", version, about = "Train and evaluate learned communication systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one system from a config file.
    Train {
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate BLER/BER of a checkpoint or a constellation file.
    Eval(EvalArgs),
    /// Train several seeds in parallel and aggregate packing density and BLER evolution.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Seeds are `first_seed .. first_seed + seeds`.
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a classical reference constellation.
    Baseline {
        /// Only `qam` (Gray square QAM, BPSK for one bit per use) is available.
        #[arg(long, default_value = "qam")]
        kind: String,
        #[arg(long = "M")]
        num_symbols: usize,
        #[arg(long = "m")]
        channel_dim: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print a complete config file with every default spelled out.
    DefaultConfig {
        #[arg(long, default_value = "awgn")]
        channel: String,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, conflicts_with = "constellation", required_unless_present = "constellation")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub constellation: Option<PathBuf>,
    /// awgn, rbf, laplace or cauchy (default: the checkpoint's training channel, else awgn).
    #[arg(long)]
    pub channel: Option<String>,
    /// Comma-separated SNR grid in dB (G-SNR for cauchy).
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub target_errors: u64,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_blocks: u64,
    /// Channel draws per message for the MI bounds (checkpoints on Gaussian channels).
    #[arg(long, default_value_t = 2000)]
    pub mi_samples: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidParameter(_) | Error::Dimension { .. } => EXIT_CONFIG,
            Error::NonFinite(_) | Error::DegenerateEstimate(_) => EXIT_NUMERIC,
            Error::Io(_) | Error::Json(_) => EXIT_OTHER,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: EXIT_OTHER,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, out } => cmd_train(&config, &out).map(|_| ()),
        Command::Eval(args) => cmd_eval(&args).map(|_| ()),
        Command::Sweep {
            config,
            seeds,
            first_seed,
            out,
        } => cmd_sweep(&config, first_seed, seeds, &out).map(|_| ()),
        Command::Baseline {
            kind,
            num_symbols,
            channel_dim,
            out,
        } => cmd_baseline(&kind, num_symbols, channel_dim, &out).map(|_| ()),
        Command::DefaultConfig { channel } => {
            print!("{}", default_config_text(parse_family(&channel)?));
            Ok(())
        }
    }
}

fn parse_family(s: &str) -> CliResult<ChannelFamily> {
    s.parse().map_err(|_| config_error(format!("unknown channel `{s}`")))
}

fn provenance(hash: &str, seed: u64) -> Vec<(&'static str, String)> {
    vec![("config_hash", hash.to_string()), ("seed", seed.to_string())]
}

fn write_train_outputs(trained: &TrainedSystem, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let prov = provenance(&trained.config.hash(), trained.config.seed);
    trained.save(dir.join("checkpoint.json"))?;
    export_constellation(&trained.constellation, &prov, dir.join("constellation.csv"))?;

    let mut csv = String::new();
    for (k, v) in &prov {
        csv.push_str(&format!("# {k}={v}\n"));
    }
    csv.push_str("epoch,recon,kl,total\n");
    for (i, l) in trained.loss_history.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{}\n", i + 1, l.recon, l.kl, l.total));
    }
    fs::write(dir.join("loss_history.csv"), csv)?;
    Ok(())
}

/// Trains the configured system and writes checkpoint, loss history and constellation.
pub fn cmd_train(config: &Path, out: &Path) -> CliResult<TrainedSystem> {
    let RunConfig { system, .. } = load_config(config)?;
    let trained = systems::train(&system)?;
    write_train_outputs(&trained, out)?;
    Ok(trained)
}

fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(hex_prefix(&Sha256::digest(&bytes)))
}

fn hex_prefix(digest: &[u8]) -> String {
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Evaluates a checkpoint or constellation file; writes `bler.csv` and `report.json`.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let stop = StopRule {
        target_errors: args.target_errors,
        max_blocks: args.max_blocks,
        ..StopRule::default()
    };
    let trained;
    let baseline;
    let (scheme, hash, default_family) = match (&args.checkpoint, &args.constellation) {
        (Some(p), _) => {
            trained = TrainedSystem::load(p)?;
            let fam = trained.config.channel.family();
            (Scheme::Learned(&trained), trained.config.hash(), fam)
        }
        (None, Some(p)) => {
            baseline = import_constellation(p)?;
            (Scheme::Baseline(&baseline), file_hash(p)?, ChannelFamily::Awgn)
        }
        (None, None) => return Err(config_error("either --checkpoint or --constellation is required")),
    };
    let family = match &args.channel {
        Some(s) => parse_family(s)?,
        None => default_family,
    };

    let records = eval::bler_curve(&scheme, family, &args.snr, stop, args.seed)?;
    let c = scheme.constellation();
    let mut report = EvalReport {
        channel: family,
        records,
        e_n: eval::packing_density(c).ok(),
        hamming_nn_fraction: eval::gray_fraction(c).ok(),
        mi_lower: None,
        mi_upper: None,
        seed: args.seed,
        config_hash: hash,
    };
    if let Scheme::Learned(t) = scheme {
        if matches!(t.config.channel.family(), ChannelFamily::Awgn | ChannelFamily::Rbf) {
            let mi = eval::mi_bounds(t, &t.config.channel, args.mi_samples, args.seed)?;
            report.mi_lower = Some(mi.lower);
            report.mi_upper = Some(mi.upper);
        }
    }

    fs::create_dir_all(&args.out)?;
    let prov = provenance(&report.config_hash, report.seed);
    let f = fs::File::create(args.out.join("bler.csv"))?;
    eval::write_bler_csv(&report.records, &prov, BufWriter::new(f))?;
    fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(Error::from)?,
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub seed: u64,
    pub e_n: Option<f64>,
    pub final_power: f64,
    /// `(epoch, bler)` at the probe SNR.
    pub bler_evolution: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub probe_snr_db: f64,
    pub runs: Vec<SweepRun>,
    /// Quantiles 0, 0.1, 0.25, 0.5, 0.75, 0.9, 1 of the finite E_n values.
    pub e_n_quantiles: Vec<(f64, f64)>,
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Trains `count` seeds in parallel. Writes one `seed_<n>/` directory per
/// run, `sweep_bler_evolution.csv` and `sweep_summary.json`.
pub fn cmd_sweep(config: &Path, first_seed: u64, count: u64, out: &Path) -> CliResult<SweepSummary> {
    if count == 0 {
        return Err(config_error("--seeds must be positive"));
    }
    let run_config = load_config(config)?;
    let probe = run_config.probe;
    let family = run_config.system.channel.family();
    let stop = StopRule {
        target_errors: 500,
        max_blocks: probe.max_blocks,
        ..StopRule::default()
    };
    fs::create_dir_all(out)?;

    let seeds: Vec<u64> = (first_seed..first_seed + count).collect();
    let runs = seeds
        .par_iter()
        .map(|&seed| -> CliResult<SweepRun> {
            let mut cfg = run_config.system.clone();
            cfg.seed = seed;
            let mut evolution = Vec::new();
            let trained = systems::train_with_observer(&cfg, probe.every, |epoch, sys, history| {
                let snap = sys.snapshot(history)?;
                let probe_seed = varcomm::derive_seed(seed, &[0x5052_4f42, epoch as u64]);
                let p = eval::bler(&Scheme::Learned(&snap), family, probe.snr_db, stop, probe_seed)?;
                evolution.push((epoch, p.bler));
                Ok(())
            })?;
            let dir = out.join(format!("seed_{seed}"));
            write_train_outputs(&trained, &dir)?;
            Ok(SweepRun {
                seed,
                e_n: eval::packing_density(&trained.constellation).ok(),
                final_power: trained.constellation.avg_power_per_component(),
                bler_evolution: evolution,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut base = run_config.system.clone();
    base.seed = first_seed;
    let hash = base.hash();

    let mut csv = String::new();
    for (k, v) in provenance(&hash, first_seed) {
        csv.push_str(&format!("# {k}={v}\n"));
    }
    csv.push_str(&format!("# seeds={}\n# probe_snr_db={}\n", count, probe.snr_db));
    csv.push_str("seed,epoch,bler\n");
    for r in &runs {
        for (epoch, b) in &r.bler_evolution {
            csv.push_str(&format!("{},{},{}\n", r.seed, epoch, b));
        }
    }
    fs::write(out.join("sweep_bler_evolution.csv"), csv)?;

    let mut en: Vec<f64> = runs.iter().filter_map(|r| r.e_n).collect();
    en.sort_by(|a, b| a.total_cmp(b));
    let summary = SweepSummary {
        config_hash: hash,
        seeds,
        probe_snr_db: probe.snr_db,
        e_n_quantiles: [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
            .iter()
            .map(|&q| (q, quantile(&en, q)))
            .collect(),
        runs,
    };
    fs::write(
        out.join("sweep_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(Error::from)?,
    )?;
    Ok(summary)
}

/// Writes `baseline_<kind>_M<M>_m<m>.csv`.
pub fn cmd_baseline(kind: &str, num_symbols: usize, channel_dim: usize, out: &Path) -> CliResult<(PathBuf, Constellation)> {
    if kind != "qam" {
        return Err(config_error(format!("unknown baseline kind `{kind}` (expected qam)")));
    }
    if channel_dim == 0 || channel_dim % 2 != 0 {
        return Err(config_error(format!("m must be a positive even number, got {channel_dim}")));
    }
    if !num_symbols.is_power_of_two() || num_symbols < 2 {
        return Err(config_error(format!("M must be a power of two, got {num_symbols}")));
    }
    let uses = channel_dim / 2;
    let bits = num_symbols.trailing_zeros() as usize;
    if bits % uses != 0 {
        return Err(config_error(format!(
            "{bits} bits cannot be split evenly over {uses} channel uses"
        )));
    }
    let c = qam_constellation(bits / uses, uses)?;
    let params = format!("{{\"kind\":\"{kind}\",\"M\":{num_symbols},\"m\":{channel_dim}}}");
    let hash = hex_prefix(&Sha256::digest(params.as_bytes()));
    fs::create_dir_all(out)?;
    let path = out.join(format!("baseline_{kind}_M{num_symbols}_m{channel_dim}.csv"));
    export_constellation(&c, &provenance(&hash, 0), &path)?;
    Ok((path, c))
}
