use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgMatches, Args, FromArgMatches, Parser, Subcommand};

use flowdrift::features::io::{read_feature_csv, read_feature_csv_mapped, write_feature_csv, ColumnMapping};
use flowdrift::features::{extract_batch, IpLabeler, LabeledSample};
use flowdrift::flow::io::{read_packets, write_packet_csv};
use flowdrift::flow::{assemble, filter_packets, FilterPolicy, PROTO_ICMP};
use flowdrift::jsonio::load_json;
use flowdrift::models::Checkpoint;
use flowdrift::preprocess::split;
use flowdrift::protocol::config::CONFIG_KEYS;
use flowdrift::protocol::report::TimingRow;
use flowdrift::protocol::{
    dataset_stats, emit_reports, render_tables, Experiment, ExperimentConfig, ExperimentReport,
};
use flowdrift::synth::{drift_pair, random_trace, DriftPairConfig, TraceConfig};

#[derive(Parser)]
#[command(name = "flowdrift", version, about = "Flow-feature intrusion detection under drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Packets to flows to labeled feature rows.
    Extract(ExtractArgs),
    /// Flow counts per origin and attack type.
    Stats {
        input: PathBuf,
        /// Column mapping for external CSVs.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Origin assigned to rows without one.
        #[arg(long, default_value = "unknown")]
        origin: String,
    },
    /// Seeded train/test split of a feature CSV.
    Split {
        input: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Offline training; writes the offline checkpoint.
    TrainOffline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Batch-by-batch updates starting from an offline checkpoint.
    TrainIncremental {
        /// Offline checkpoint to start from.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Incremental checkpoint to continue after.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Wrap the offline MLP with distillation from its frozen copy.
        #[arg(long)]
        lwf: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Every phase end to end, with reports.
    RunProtocol {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Re-render tables from a saved report directory.
    Report {
        dir: PathBuf,
    },
    /// Synthetic inputs: a drifting feature-set pair or a packet trace.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Packet CSV or JSON-lines file.
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Origin tag stored on every row (e.g. a capture point).
    #[arg(long, default_value = "unknown")]
    origin: String,
    /// Attacker address and its attack type, as IP=Type. Repeatable.
    #[arg(long = "attacker", value_name = "IP=TYPE")]
    attackers: Vec<String>,
    /// Drop flows touching neither an attacker nor a listed benign host.
    #[arg(long)]
    strict: bool,
    #[arg(long = "benign-host", value_name = "IP")]
    benign_hosts: Vec<String>,
    #[arg(long, default_value_t = flowdrift::flow::DEFAULT_IDLE_TIMEOUT_SECS)]
    idle_timeout: f64,
    /// Also drop ICMP packets.
    #[arg(long)]
    drop_icmp: bool,
    /// Additional protocol numbers to drop. Repeatable.
    #[arg(long = "drop-proto", value_name = "N")]
    drop_protos: Vec<u16>,
    /// Keep every protocol, ARP included.
    #[arg(long, conflicts_with_all = ["drop_icmp", "drop_protos"])]
    keep_all: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    offline: usize,
    #[arg(long, default_value_t = 10_000)]
    incoming: usize,
    /// Write a random packet trace of this many packets instead.
    #[arg(long)]
    packets: Option<usize>,
    /// Distinct conversations in the packet trace.
    #[arg(long, default_value_t = 40)]
    conversations: usize,
}

/// `--config FILE` plus one flag per config key, named exactly as the key.
struct ConfigArgs {
    file: Option<PathBuf>,
    overrides: Vec<(String, String)>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.file {
            Some(p) => ExperimentConfig::from_file(p)
                .with_context(|| format!("reading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let overrides = CONFIG_KEYS
            .iter()
            .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
            .collect();
        Ok(ConfigArgs {
            file: m.get_one::<PathBuf>("config").cloned(),
            overrides,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Flat key = value configuration file"),
        );
        CONFIG_KEYS.iter().fold(cmd, |cmd, k| {
            cmd.arg(
                Arg::new(*k)
                    .long(*k)
                    .value_name("VALUE")
                    .help_heading("Configuration overrides"),
            )
        })
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

fn load_samples(path: &Path, mapping: Option<&Path>, origin: &str) -> Result<Vec<LabeledSample>> {
    let rows = match mapping {
        Some(m) => read_feature_csv_mapped(path, &ColumnMapping::read(m)?, origin)?,
        None => read_feature_csv(path)?,
    };
    Ok(rows)
}

fn extract(a: ExtractArgs) -> Result<()> {
    let packets = read_packets(&a.input)?;
    let mut policy = if a.keep_all { FilterPolicy::keep_all() } else { FilterPolicy::default() };
    if a.drop_icmp {
        policy = policy.dropping(PROTO_ICMP);
    }
    for p in a.drop_protos {
        policy = policy.dropping(p);
    }
    let (kept, report) = filter_packets(packets, &policy)?;
    let flows = assemble(kept, a.idle_timeout);

    let mut labeler = IpLabeler::new();
    for spec in &a.attackers {
        let Some((ip, kind)) = spec.split_once('=') else {
            bail!("--attacker expects IP=Type, got `{spec}`");
        };
        labeler = labeler.attacker(ip.trim(), kind.trim());
    }
    labeler.benign_hosts = a.benign_hosts;
    labeler.strict = a.strict;

    let batch = extract_batch(&flows, &labeler, &a.origin);
    write_feature_csv(&batch.samples, &a.output)?;
    eprintln!(
        "{} packets kept, {} dropped {:?}; {} flows; {} rows written, {} unlabeled flows skipped",
        report.kept,
        report.dropped_total(),
        report.dropped_by_name(),
        flows.len(),
        batch.samples.len(),
        batch.dropped
    );
    Ok(())
}

fn print_snapshot_line(label: &str, s: &flowdrift::eval::EvalSnapshot) {
    println!(
        "{label:<24} acc {:.4}  f1 {:.4}  precision {:.4}  recall {:.4}  auroc {}",
        s.accuracy,
        s.f1,
        s.precision,
        s.recall,
        s.auroc.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"))
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => extract(a)?,
        Command::Stats { input, mapping, origin } => {
            let samples = load_samples(&input, mapping.as_deref(), &origin)?;
            print!("{}", dataset_stats(&samples).render());
        }
        Command::Split { input, train_out, test_out, cfg } => {
            let cfg = cfg.resolve()?;
            let samples = load_samples(&input, cfg.feature_mapping.as_deref(), "unknown")?;
            let (train, test) = split(&samples, &cfg.split_plan())?;
            write_feature_csv(&train, &train_out)?;
            write_feature_csv(&test, &test_out)?;
            println!("train {}  test {}", train.len(), test.len());
        }
        Command::TrainOffline { cfg } => {
            let mut ex = Experiment::from_config(cfg.resolve()?)?;
            let out = ex.run_offline_phase()?;
            print_snapshot_line("offline test", &out.on_offline_test);
            print_snapshot_line("incoming test", &out.on_incoming_test);
            if let Some(p) = out.checkpoint_path {
                println!("checkpoint {}", ex.cfg.output_dir.join(p).display());
            }
        }
        Command::TrainIncremental { checkpoint, resume, lwf, cfg } => {
            let mut ex = Experiment::from_config(cfg.resolve()?)?;
            let base = Checkpoint::load(&checkpoint)?;
            let offline = ex.adopt_offline(base, Some(checkpoint.display().to_string()))?;
            let resume = resume.map(Checkpoint::load).transpose()?;
            let run = ex.run_incremental_phase(&offline, lwf, resume)?;
            let report = ex.report(&offline, std::slice::from_ref(&run));
            emit_reports(&report, &ex.cfg.output_dir)?;
            print_snapshot_line("incoming before", &offline.on_incoming_test);
            if let Some(s) = run.last_snapshot(flowdrift::protocol::INCOMING_TEST) {
                print_snapshot_line("incoming after", s);
            }
            println!(
                "forgetting {:.4} after {} batches{}",
                run.final_forgetting(),
                run.batches_run,
                run.stopped_early_at
                    .map_or_else(String::new, |b| format!(" (stopped early at batch {b})"))
            );
        }
        Command::RunProtocol { cfg } => {
            let mut ex = Experiment::from_config(cfg.resolve()?)?;
            let report = ex.run_all()?;
            let files = emit_reports(&report, &ex.cfg.output_dir)?;
            print!("{}", render_tables(&report));
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Report { dir } => {
            let mut report: ExperimentReport = load_json(dir.join("report.json"))?;
            let timing = dir.join("timing.json");
            if timing.is_file() {
                report.timing = load_json::<Vec<TimingRow>>(&timing)?;
            }
            print!("{}", render_tables(&report));
        }
        Command::Synth(a) => {
            std::fs::create_dir_all(&a.out_dir)
                .with_context(|| format!("creating {}", a.out_dir.display()))?;
            if let Some(n) = a.packets {
                let cfg = TraceConfig {
                    packets: n,
                    conversations: a.conversations,
                    ..Default::default()
                };
                let path = a.out_dir.join("packets.csv");
                write_packet_csv(&random_trace(a.seed, &cfg), &path)?;
                println!("{}", path.display());
            } else {
                let cfg = DriftPairConfig {
                    offline: a.offline,
                    incoming: a.incoming,
                    seed: a.seed,
                    ..Default::default()
                };
                let (off, inc) = drift_pair(&cfg);
                for (name, rows) in [("offline.csv", off), ("incoming.csv", inc)] {
                    let path = a.out_dir.join(name);
                    write_feature_csv(&rows, &path)?;
                    println!("{}", path.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
