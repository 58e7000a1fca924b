mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;

use sccdr::centrality::{katz_with_fallback, CentralityTable};
use sccdr::evaluation::{hit_at_n, stability_report, EvalOptions, Similarity, Split, TaggedLog};
use sccdr::graphstore::{load_dataset, CrossDomainDataset, Domain};
use sccdr::synthdata::generate;
use sccdr::trainer::{load_checkpoint, train, Mode, TrainConfig};
use sccdr::{Error, Result};

use config::{RunConfig, EFFECTIVE_CONFIG};

const CENTRALITY_FILE: &str = "centrality.tsv";
const THREADS_VAR: &str = "SCCDR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sccdr", version, about = "Separated cross-domain contrastive training on bipartite graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic two-domain dataset.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Config file with `key = value` lines (default: none).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the `seed` config key (default: 42).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute Katz centrality of both domains into DATA/<domain>/centrality.tsv.
    Prepare {
        /// Dataset directory holding source.tsv, target.tsv and overlap.tsv.
        #[arg(long)]
        data: PathBuf,
        /// Config file with `key = value` lines (default: none).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train both encoders and write ckpt/, trainlog.tsv and effective_config.txt.
    Train {
        /// Dataset directory, prepared with `sccdr prepare`.
        #[arg(long)]
        data: PathBuf,
        /// Training mode.
        #[arg(long, value_parser = ["full", "no-curriculum", "no-stopgrad", "mixed"])]
        mode: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Config file with `key = value` lines (default: none).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the `seed` config key (default: 42).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained model on the target test split into MODEL/metrics.json.
    Eval {
        /// Directory written by `sccdr train`.
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory the model was trained on.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated cutoffs, each at least 1.
        #[arg(long, value_delimiter = ',', default_value = "50,100", value_parser = clap::value_parser!(u64).range(1..))]
        topn: Vec<u64>,
        /// Keep each user's training items among the candidates (default: excluded).
        #[arg(long)]
        include_train_items: bool,
        /// Retrieval score.
        #[arg(long, value_parser = ["cosine", "dot"], default_value = "cosine")]
        similarity: String,
    },
    /// Diagnostics.
    Diag {
        #[command(subcommand)]
        which: Diag,
    },
}

#[derive(Debug, Subcommand)]
enum Diag {
    /// Train Full and Mixed for consecutive seeds and compare loss stability.
    Stability {
        /// Dataset directory, prepared with `sccdr prepare`.
        #[arg(long)]
        data: PathBuf,
        /// Number of seeds, counting up from the `seed` config key.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Config file with `key = value` lines (default: none).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn config_help() -> String {
    let mut s = String::from("Config keys and defaults:\n");
    for line in RunConfig::default().to_text().lines() {
        s.push_str("  ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(&format!("\nEnvironment:\n  {THREADS_VAR}  worker threads (default: all cores)\n"));
    s
}

fn command() -> clap::Command {
    Cli::command().after_help(config_help())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric(_) | Error::Shape { .. } => 3,
        _ => 2,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn centrality_path(data: &Path, domain: Domain) -> PathBuf {
    data.join(domain.name()).join(CENTRALITY_FILE)
}

fn target_centrality(data: &Path, ds: &CrossDomainDataset) -> Result<CentralityTable> {
    let p = centrality_path(data, Domain::Target);
    if !p.exists() {
        return Err(Error::Data(format!("{} is missing; run `sccdr prepare` first", p.display())));
    }
    CentralityTable::read_tsv(&p, &ds.target)
}

fn synth(out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let cfg = RunConfig::resolve(config, seed)?;
    let data = generate(&cfg.synth)?;
    data.write(out)?;
    cfg.write_effective(out)?;
    info!(
        "wrote {} source and {} target interactions to {}",
        data.source_edges.len(),
        data.target_edges.len(),
        out.display()
    );
    Ok(())
}

fn prepare(data: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::resolve(config, None)?;
    let ds = load_dataset(data, cfg.train.seed)?;
    for domain in [Domain::Source, Domain::Target] {
        let table = katz_with_fallback(ds.graph(domain), &cfg.katz)?;
        let p = centrality_path(data, domain);
        create_dir(p.parent().expect("joined path"))?;
        table.write_tsv(&p)?;
        info!("{domain}: Katz alpha {} written to {}", table.alpha, p.display());
    }
    Ok(())
}

fn train_cmd(data: &Path, mode: &str, out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::resolve(config, seed)?;
    cfg.train.mode = Mode::parse(mode).ok_or_else(|| Error::Config(format!("unknown mode {mode:?}")))?;
    let ds = load_dataset(data, cfg.train.seed)?;
    let table = target_centrality(data, &ds)?;
    info!(
        "training {} for {} epochs on {} overlapping users",
        cfg.train.mode,
        cfg.train.total_epochs(),
        ds.overlap.len()
    );
    let (state, log) = train(&ds, &table, &cfg.train)?;
    create_dir(out)?;
    state.save_checkpoint(&out.join("ckpt"))?;
    log.write_tsv(&out.join("trainlog.tsv"))?;
    cfg.write_effective(out)?;
    info!("wrote model to {}", out.display());
    Ok(())
}

fn eval_cmd(model: &Path, data: &Path, topn: &[u64], include_train_items: bool, similarity: &str) -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_file(&model.join(EFFECTIVE_CONFIG))?;
    let TrainConfig { seed, mode, dims, .. } = cfg.train;
    let ds = load_dataset(data, seed)?;
    let (_, target) = load_checkpoint(&model.join("ckpt"), &ds, dims)?;
    let mut opts = EvalOptions {
        cutoffs: topn.iter().map(|&n| n as usize).collect(),
        similarity: if similarity == "dot" { Similarity::Dot } else { Similarity::Cosine },
        include_train_items,
        ..EvalOptions::default()
    };
    let report = hit_at_n(&target, &ds, &opts, mode.name(), seed)?;
    report.write_json(&model.join("metrics.json"))?;
    opts.split = Split::Valid;
    let valid = hit_at_n(&target, &ds, &opts, mode.name(), seed)?;
    info!("validation {:?}", valid.hit_at);
    print!("{}", report.to_json());
    Ok(())
}

fn stability(data: &Path, seeds: u64, out: &Path, config: Option<&Path>) -> Result<()> {
    let base = RunConfig::resolve(config, None)?;
    let ds = load_dataset(data, base.train.seed)?;
    let table = target_centrality(data, &ds)?;
    create_dir(out)?;
    let mut runs = Vec::new();
    for seed in base.train.seed..base.train.seed + seeds {
        for mode in [Mode::Full, Mode::Mixed] {
            let cfg = TrainConfig {
                mode,
                seed,
                ..base.train.clone()
            };
            info!("stability: {mode} seed {seed}");
            let (_, log) = train(&ds, &table, &cfg)?;
            log.write_tsv(&out.join(format!("trainlog_{mode}_seed{seed}.tsv")))?;
            runs.push((mode, seed, log));
        }
    }
    let tagged: Vec<TaggedLog<'_>> = runs
        .iter()
        .map(|(mode, seed, log)| TaggedLog {
            mode: mode.name().to_string(),
            seed: *seed,
            log,
        })
        .collect();
    let report = stability_report(&tagged)?;
    report.write(out)?;
    base.write_effective(out)?;
    print!("{}", report.pairs_tsv());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, config, seed } => synth(&out, config.as_deref(), seed),
        Command::Prepare { data, config } => prepare(&data, config.as_deref()),
        Command::Train {
            data,
            mode,
            out,
            config,
            seed,
        } => train_cmd(&data, &mode, &out, config.as_deref(), seed),
        Command::Eval {
            model,
            data,
            topn,
            include_train_items,
            similarity,
        } => eval_cmd(&model, &data, &topn, include_train_items, &similarity),
        Command::Diag {
            which: Diag::Stability {
                data,
                seeds,
                out,
                config,
            },
        } => stability(&data, seeds, &out, config.as_deref()),
    }
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Usage of the subcommand named on the command line, or of the binary.
fn print_usage(cmd: &mut clap::Command) {
    cmd.build();
    let names: Vec<String> = std::env::args().skip(1).take_while(|a| !a.starts_with('-')).collect();
    let mut target = &*cmd;
    for n in &names {
        match target.find_subcommand(n) {
            Some(sub) => target = sub,
            None => break,
        }
    }
    eprintln!("\n{}", target.clone().render_usage());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cmd = command();
    let matches = match cmd.try_get_matches_from_mut(std::env::args_os()) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if !e.render().to_string().contains("Usage:") {
                print_usage(&mut cmd);
            }
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
