use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use super::config::{threads_from_env, RunConfig};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::heredity::DnaModel;
use crate::metrics::{config_digest, read_report, write_report, Report, RunMetadata};
use crate::model::{read_checkpoint, write_checkpoint, NetworkArch};
use crate::synthesis::{evolve, DatasetEvaluator, EvolveOptions, GenerationRecord, StopReason};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "evosynth", version, about = "Evolutionary synthesis of sparse convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an ancestor and synthesize generations until a stop condition.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from this trained generation-1 checkpoint.
        #[arg(long)]
        ancestor: Option<PathBuf>,
    },
    /// Train and evaluate generation 1 only, writing `ancestor.ckpt`.
    TrainAncestor {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite the CSV files of a finished run from its `summary.json`.
    Report { run_dir: PathBuf },
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let mut train = Dataset::load(&cfg.data.train_images, &cfg.data.train_labels, Split::Train)?;
    let mut test = Dataset::load(&cfg.data.test_images, &cfg.data.test_labels, Split::Test)?;
    if let Some(n) = cfg.train_limit {
        train = train.head(n);
    }
    if let Some(n) = cfg.test_limit {
        test = test.head(n);
    }
    Ok((train, test))
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub stop_reason: StopReason,
    pub final_network: NetworkArch,
    /// Seconds from the start of training until each generation was recorded.
    pub elapsed: Vec<f64>,
}

pub fn checkpoint_path(out_dir: &Path, generation: u32) -> PathBuf {
    out_dir.join("checkpoints").join(format!("gen-{generation:03}.ckpt"))
}

fn progress_line(rec: &GenerationRecord) -> String {
    let clusters = rec
        .overall_cluster_efficiency
        .map(|e| format!("{e:.2}X"))
        .unwrap_or_else(|| "-".into());
    let loss = rec.train_loss.map(|l| format!("{l:.4}")).unwrap_or_else(|| "-".into());
    format!(
        "gen {:>2}  acc {:.4}  synapses {:>6}  arch-eff {:.2}X  cluster-eff {}  loss {}",
        rec.generation, rec.test_accuracy, rec.total_synapses, rec.architectural_efficiency, clusters, loss
    )
}

/// Runs the full experiment described by `cfg` and writes the run directory:
/// report files, the effective `config.toml`, one checkpoint per generation,
/// and optionally the probability model each offspring was sampled from.
///
/// The report is rewritten after every generation, so an interrupted run can
/// still be inspected.
pub fn run_experiment(cfg: &RunConfig, threads: usize, verbose: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(out.join("checkpoints")).map_err(|e| Error::io(&out, e))?;
    fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io(out.join("config.toml"), e))?;
    if cfg.export_dna {
        fs::create_dir_all(out.join("dna")).map_err(|e| Error::io(&out, e))?;
    }

    let ancestor = cfg.ancestor_checkpoint.as_deref().map(read_checkpoint).transpose()?;
    let (train, test) = load_data(cfg)?;
    let evo_cfg = cfg.evolution(threads);

    let config_json = serde_json::to_value(cfg).map_err(|e| Error::Report(e.to_string()))?;
    let mut report = Report {
        metadata: RunMetadata {
            seed: cfg.seed,
            config_digest: config_digest(cfg)?,
            started: unix_now(),
            finished: 0,
            stop_reason: None,
            config: config_json,
        },
        layer_names: cfg.arch.param_layer_names(),
        ancestor_clusters: Vec::new(),
        records: Vec::new(),
    };

    let start = Instant::now();
    let mut elapsed = Vec::new();
    let mut on_generation = |rec: &GenerationRecord, net: &NetworkArch, dna: Option<&DnaModel>| -> Result<()> {
        elapsed.push(start.elapsed().as_secs_f64());
        if verbose {
            println!("{}", progress_line(rec));
        }
        write_checkpoint(net, &checkpoint_path(&out, rec.generation))?;
        if let (true, Some(dna)) = (cfg.export_dna, dna) {
            dna.write(&out.join("dna").join(format!("gen-{:03}.json", rec.generation - 1)))?;
        }
        if report.ancestor_clusters.is_empty() {
            report.ancestor_clusters = rec.live_clusters.clone();
        }
        report.records.push(rec.clone());
        write_report(&report, &out)
    };
    let evolution = evolve(
        &evo_cfg,
        &train,
        &mut DatasetEvaluator(&test),
        EvolveOptions {
            ancestor,
            on_generation: Some(&mut on_generation),
        },
    )?;

    report.ancestor_clusters = evolution.ancestor_clusters;
    report.records = evolution.records;
    report.metadata.finished = unix_now();
    report.metadata.stop_reason = Some(evolution.stop_reason);
    write_report(&report, &out)?;
    Ok(RunOutcome {
        report,
        stop_reason: evolution.stop_reason,
        final_network: evolution.final_network,
        elapsed,
    })
}

/// Trains generation 1 only and writes it to `<out_dir>/ancestor.ckpt`.
/// Returns the network and its test accuracy.
pub fn train_ancestor(cfg: &RunConfig, threads: usize) -> Result<(NetworkArch, f64)> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    let mut evo_cfg = cfg.evolution(threads);
    evo_cfg.max_generations = 1;
    let evolution = evolve(&evo_cfg, &train, &mut DatasetEvaluator(&test), EvolveOptions::default())?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write_checkpoint(&evolution.final_network, &cfg.out_dir.join("ancestor.ckpt"))?;
    Ok((evolution.final_network, evolution.records[0].test_accuracy))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn load_with_overrides(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            ancestor,
        } => {
            let mut cfg = load_with_overrides(Some(&config), seed, out)?;
            if ancestor.is_some() {
                cfg.ancestor_checkpoint = ancestor;
            }
            let threads = threads_from_env()?;
            let outcome = run_experiment(&cfg, threads, true)?;
            println!(
                "stopped: {:?} after {} generation(s); report in {}",
                outcome.stop_reason,
                outcome.report.records.len(),
                cfg.out_dir.display()
            );
        }
        Command::TrainAncestor { config, seed, out } => {
            let cfg = load_with_overrides(config.as_deref(), seed, out)?;
            let threads = threads_from_env()?;
            let (net, acc) = train_ancestor(&cfg, threads)?;
            println!(
                "ancestor: acc {acc:.4}  synapses {}  written to {}",
                net.count_synapses().total,
                cfg.out_dir.join("ancestor.ckpt").display()
            );
        }
        Command::Report { run_dir } => {
            let report = read_report(&run_dir)?;
            write_report(&report, &run_dir)?;
            for rec in &report.records {
                println!("{}", progress_line(rec));
            }
        }
    }
    Ok(())
}

/// Entry point of the `evosynth` binary. Returns the process exit code:
/// 0 on success, 2 for usage and configuration errors, 1 otherwise.
pub fn cli_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("evosynth: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_config_is_usage_error() {
        assert_eq!(cli_run(["evosynth", "run", "--config", "/nonexistent/x.toml"]), EXIT_USAGE);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(cli_run(["evosynth", "run", "--bogus"]), EXIT_USAGE);
        assert_eq!(cli_run(["evosynth"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(cli_run(["evosynth", "--help"]), 0);
    }

    #[test]
    fn report_on_missing_dir_is_runtime_error() {
        assert_eq!(cli_run(["evosynth", "report", "/nonexistent/run"]), EXIT_RUNTIME);
    }
}
