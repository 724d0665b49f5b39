use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use junction_core::compare::compare;
use junction_core::config::{config_hash, Scenario};
use junction_core::controller::rng_stream;
use junction_core::eval::{run_episode, RunOutput};
use junction_core::policy::checkpoint::{self, Checkpoint};
use junction_core::policy::PolicyParams;
use junction_core::ppo::{train, TrafficSource, TrainMode};
use junction_core::report::{parse_reports, write_metrics, write_reports, ReportRow, TrainingLog};

/// Train, evaluate and compare intersection controllers.
#[derive(Parser)]
#[command(name = "junction", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Treat warnings and gridlock as errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write checkpoints and training.csv.
    Train {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one evaluation episode and write metrics.csv and report.csv.
    Eval {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Act with the most likely action instead of sampling.
        #[arg(long)]
        deterministic_policy: bool,
    },
    /// Evaluate several configs (or read report.csv files) over seeds and
    /// tabulate pairwise waiting-time reductions.
    Compare {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        deterministic_policy: bool,
        /// Number of consecutive seeds per config, starting at the seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Train { config, common } => cmd_train(&config, &common),
        Command::Eval { config, common, deterministic_policy } => cmd_eval(&config, &common, deterministic_policy),
        Command::Compare { inputs, common, deterministic_policy, seeds } => cmd_compare(&inputs, &common, deterministic_policy, seeds),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path, strict: bool) -> Result<Scenario> {
    let s = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    for w in &s.warnings {
        warn!("{}: {w}", path.display());
    }
    if strict && !s.warnings.is_empty() {
        bail!("{} produced warnings (--strict)", path.display());
    }
    Ok(s)
}

fn read_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let ck = checkpoint::decode(&bytes).with_context(|| format!("decoding checkpoint {}", path.display()))?;
    Ok((ck, checkpoint::fingerprint(&bytes)))
}

fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint::encode(ck)).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_train(config: &Path, c: &Common) -> Result<ExitCode> {
    let sc = load(config, c.strict)?;
    let seed = c.seed.unwrap_or(sc.file.scenario.seed);
    let tc = &sc.file.train;
    fs::create_dir_all(&c.out)?;
    let (params, mut lineage) = if tc.mode == TrainMode::TrainLowOnly {
        let path = sc.checkpoint.as_ref().context("train_low_only needs scenario.checkpoint with a trained high level")?;
        let (ck, _) = read_checkpoint(path)?;
        (ck.params, ck.seed_lineage)
    } else {
        (PolicyParams::new(&sc.env.obs, &sc.file.network, &mut rng_stream(seed, 4)), Vec::new())
    };
    if !params.matches(&sc.env.obs) {
        bail!("checkpoint network shapes do not match the observation layout of {}", config.display());
    }
    lineage.push(seed);
    let mut log = TrainingLog::new(create(&c.out.join("training.csv"))?, &sc.hash)?;
    let mut source = TrafficSource::new(sc.env.clone(), tc);
    let mut rng = rng_stream(seed, 6);
    let mut io_err = None;
    info!("training {} ({:?}, {} updates per stage, seed {seed})", sc.file.scenario.name, tc.mode, tc.updates);
    let params = train(&mut source, params, tc, &mut rng, |l, p| {
        info!(
            "update {} [{}] reward {:.4} wait {:.2} clip {:.3} kl {:.4} loss {:.4}",
            l.update_idx,
            l.stage.as_str(),
            l.mean_reward,
            l.mean_wait,
            l.clip_frac,
            l.approx_kl,
            l.loss
        );
        let mut r = log.push(l).map_err(anyhow::Error::from);
        if r.is_ok() && tc.checkpoint_every > 0 && (l.update_idx + 1) % tc.checkpoint_every == 0 {
            let ck = Checkpoint { config_hash: sc.hash.clone(), seed_lineage: lineage.clone(), params: p.clone() };
            r = write_checkpoint(&c.out.join(format!("checkpoint_{:04}.ckpt", l.update_idx + 1)), &ck);
        }
        if let (Err(e), None) = (r, &io_err) {
            io_err = Some(e);
        }
    })
    .context("training aborted")?;
    if let Some(e) = io_err {
        return Err(e);
    }
    let final_path = c.out.join("final.ckpt");
    write_checkpoint(&final_path, &Checkpoint { config_hash: sc.hash.clone(), seed_lineage: lineage, params })?;
    println!("{}", final_path.display());
    Ok(ExitCode::SUCCESS)
}

/// Loads the policy a scenario's controller needs, with its fingerprint.
fn policy_for(sc: &Scenario) -> Result<Option<(PolicyParams, String)>> {
    if !sc.controller().needs_policy() {
        return Ok(None);
    }
    let path = sc
        .checkpoint
        .as_ref()
        .with_context(|| format!("controller {} needs scenario.checkpoint", sc.controller().as_str()))?;
    let (ck, fp) = read_checkpoint(path)?;
    if !ck.params.matches(&sc.env.obs) {
        bail!("checkpoint {} does not match the observation layout", path.display());
    }
    if ck.config_hash != sc.hash {
        info!("checkpoint {} was trained under config {}", path.display(), ck.config_hash);
    }
    Ok(Some((ck.params, fp)))
}

fn evaluate(sc: &Scenario, policy: Option<&(PolicyParams, String)>, seed: u64, deterministic: bool) -> Result<(RunOutput, ReportRow)> {
    let kind = sc.controller();
    let mut control = kind.control();
    control.deterministic_high = deterministic;
    control.deterministic_low = deterministic;
    let out = run_episode(&sc.env, kind, control, policy.map(|p| &p.0), seed, sc.file.scenario.horizon)?;
    let row = ReportRow::new(&sc.file.scenario.name, &sc.hash, policy.map_or("", |p| p.1.as_str()), &out.report);
    Ok((out, row))
}

fn cmd_eval(config: &Path, c: &Common, deterministic: bool) -> Result<ExitCode> {
    let sc = load(config, c.strict)?;
    let seed = c.seed.unwrap_or(sc.file.scenario.seed);
    let policy = policy_for(&sc)?;
    let (out, row) = evaluate(&sc, policy.as_ref(), seed, deterministic)?;
    fs::create_dir_all(&c.out)?;
    write_metrics(create(&c.out.join("metrics.csv"))?, &sc.hash, &out.metrics)?;
    write_reports(create(&c.out.join("report.csv"))?, &sc.hash, std::slice::from_ref(&row))?;
    println!(
        "{} seed {}: avg wait {:.3} s over {} vehicles, throughput {}, unregulated {:.3}",
        row.controller, seed, row.avg_waiting_time, row.vehicles, row.throughput, row.mean_unregulated_ratio
    );
    if let Some(t) = row.gridlock_at {
        warn!("gridlock detected at t = {t} s");
        if c.strict {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn label_of(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "report" {
        if let Some(dir) = path.parent().and_then(|p| p.file_name()) {
            return dir.to_string_lossy().into_owned();
        }
    }
    stem
}

fn cmd_compare(inputs: &[PathBuf], c: &Common, deterministic: bool, seeds: u64) -> Result<ExitCode> {
    if seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let mut groups = Vec::new();
    let mut hashes = Vec::new();
    for path in inputs {
        let label = label_of(path);
        if path.extension().is_some_and(|e| e == "csv") {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let rows = parse_reports(&bytes).with_context(|| format!("parsing {}", path.display()))?;
            hashes.extend(rows.iter().map(|r| r.config_hash.clone()));
            groups.push((label, rows));
            continue;
        }
        let sc = load(path, c.strict)?;
        let base = c.seed.unwrap_or(sc.file.scenario.seed);
        let policy = policy_for(&sc)?;
        let rows = (base..base + seeds)
            .into_par_iter()
            .map(|s| evaluate(&sc, policy.as_ref(), s, deterministic).map(|r| r.1))
            .collect::<Result<Vec<_>>>()?;
        hashes.push(sc.hash.clone());
        groups.push((label, rows));
    }
    let cmp = compare(&groups)?;
    for w in &cmp.warnings {
        warn!("{w}");
    }
    if c.strict && !cmp.warnings.is_empty() {
        bail!("inputs describe different scenarios (--strict)");
    }
    let joined = hashes.join(",");
    let hash = config_hash(&[joined.as_bytes()]);
    fs::create_dir_all(&c.out)?;
    cmp.write_csv(create(&c.out.join("compare.csv"))?, &hash)?;
    let all: Vec<ReportRow> = groups.into_iter().flat_map(|g| g.1).collect();
    write_reports(create(&c.out.join("report.csv"))?, &hash, &all)?;
    print!("{}", cmp.to_table());
    Ok(ExitCode::SUCCESS)
}
