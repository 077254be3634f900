//! `sonar-avoid`: run missions, replays and parameter sweeps from a TOML
//! configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use sonar_avoid::config::{override_scalar, RunConfig};
use sonar_avoid::logio::{self, format_summary, Outcome, SummaryRecord};
use sonar_avoid::motion::KernelCache;
use sonar_avoid::replay::{replay, ReplayConfig, ReplayInputs, ReplayReport};
use sonar_avoid::sim::{run_mission, MissionLog, MissionOptions};
use sonar_avoid::Error;

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "sonar-avoid", version, about = "Sonar obstacle avoidance simulator and log replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission per configured seed.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-run detection and decision over recorded logs at each sensitivity level.
    Replay {
        #[arg(long)]
        pings: PathBuf,
        #[arg(long)]
        nav: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth sidecar of a simulated log; overrides `replay.truth`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Repeat a simulation or replay batch for each value of one scalar key.
    ///
    /// The batch is a replay when the config sets `replay.pings`, otherwise a
    /// simulation. Keys are dotted (`loss.c_d`) or bare when unambiguous (`c_d`).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = match &cli.command {
        Command::Simulate { jobs, .. } | Command::Sweep { jobs, .. } => *jobs,
        Command::Replay { .. } => None,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config { .. }) => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Simulate { config, out, .. } => {
            let cfg = RunConfig::load(&config)?;
            let batch = simulate(&cfg, &out)?;
            print!("{}", simulation_table(&batch));
            Ok(batch.status())
        }
        Command::Replay { pings, nav, config, out, truth } => {
            let cfg = RunConfig::load(&config)?;
            let truth = truth.or_else(|| cfg.replay.truth.as_deref().map(|p| resolve(&config, p)));
            let report = replay_logs(&cfg, &cfg.replay, &pings, &nav, truth.as_deref())?;
            report.write_to_dir(&out)?;
            print!("{}", report.format_table());
            Ok(0)
        }
        Command::Sweep { config, param, values, out, .. } => sweep(&config, &param, &values, &out),
    }
}

/// Config-relative path, as written in the `replay` section.
fn resolve(config: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config.parent().unwrap_or(Path::new("")).join(p)
}

struct Batch {
    summaries: Vec<SummaryRecord>,
    failed: Vec<(u64, String)>,
}

impl Batch {
    fn status(&self) -> u8 {
        if self.failed.is_empty() {
            0
        } else {
            EXIT_PARTIAL
        }
    }

    fn collisions(&self) -> usize {
        self.count(Outcome::Collision)
    }

    fn count(&self, outcome: Outcome) -> usize {
        self.summaries.iter().filter(|s| s.outcome == outcome).count()
    }
}

fn simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<Batch> {
    let setup = cfg.mission_setup()?;
    let options = MissionOptions {
        avoidance: cfg.sim.avoidance,
        stop_on_collision: cfg.sim.stop_on_collision,
        record_pings: cfg.sim.record_pings,
    };
    let cache = Arc::new(KernelCache::new());
    let results: Vec<(u64, anyhow::Result<MissionLog>)> = cfg
        .sim
        .seed_list()
        .into_par_iter()
        .map(|seed| {
            let run = run_mission(&setup, seed, options, Arc::clone(&cache))
                .map_err(anyhow::Error::from)
                .and_then(|log| {
                    log.write_to_dir(&out.join(format!("seed_{seed}")))?;
                    Ok(log)
                });
            (seed, run)
        })
        .collect();
    let mut batch = Batch {
        summaries: Vec::new(),
        failed: Vec::new(),
    };
    for (seed, r) in results {
        match r {
            Ok(log) => batch.summaries.push(log.summary),
            Err(e) => batch.failed.push((seed, format!("{e:#}"))),
        }
    }
    logio::write_atomic(&out.join("summary.csv"), format_summary(&batch.summaries).as_bytes())?;
    for (seed, e) in &batch.failed {
        eprintln!("seed {seed} failed: {e}");
    }
    Ok(batch)
}

fn simulation_table(batch: &Batch) -> String {
    let mut s = String::from("seed  outcome    min_distance_m  false_alarms  first_avoidance_range_m\n");
    for r in &batch.summaries {
        let range = r
            .first_avoidance_range
            .map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(
            s,
            "{:<5} {:<10} {:>14.2} {:>13} {:>24}",
            r.seed,
            r.outcome.label(),
            r.min_distance,
            r.false_alarm_count,
            range
        );
    }
    let n = batch.summaries.len();
    let _ = writeln!(
        s,
        "collision rate: {}/{} ({:.1}%)",
        batch.collisions(),
        n,
        100.0 * batch.collisions() as f64 / n.max(1) as f64
    );
    if !batch.failed.is_empty() {
        let seeds: Vec<String> = batch.failed.iter().map(|(s, _)| s.to_string()).collect();
        let _ = writeln!(s, "failed seeds: {}", seeds.join(", "));
    }
    s
}

fn replay_logs(
    cfg: &RunConfig,
    rc: &ReplayConfig,
    pings: &Path,
    nav: &Path,
    truth: Option<&Path>,
) -> anyhow::Result<ReplayReport> {
    let ping_log = logio::read_ping_log(pings)?;
    let nav_log = logio::read_nav_log(nav)?;
    let truth = truth.map(logio::read_truth).transpose()?;
    let script = cfg.mission.script()?;
    let inputs = ReplayInputs {
        pings: &ping_log,
        nav: &nav_log,
        truth: truth.as_deref(),
        script: Some(&script),
    };
    Ok(replay(inputs, &cfg.pipeline()?, rc, Arc::new(KernelCache::new()))?)
}

/// Dotted path of `param`, looking up bare names among the config's keys.
fn resolve_key(cfg: &RunConfig, param: &str) -> anyhow::Result<String> {
    if param.contains('.') {
        return Ok(param.to_string());
    }
    let doc: toml::Table = toml::from_str(&cfg.to_toml_string()).context("re-reading config")?;
    let mut found = Vec::new();
    collect_keys(&doc, "", param, &mut found);
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(Error::Config {
            key: param.to_string(),
            reason: "no such scalar key".into(),
        }
        .into()),
        _ => Err(Error::Config {
            key: param.to_string(),
            reason: format!("ambiguous, use one of {}", found.join(", ")),
        }
        .into()),
    }
}

fn collect_keys(table: &toml::Table, prefix: &str, name: &str, found: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => collect_keys(t, &path, name, found),
            _ if k == name => found.push(path),
            _ => {}
        }
    }
}

fn sweep(config: &Path, param: &str, values: &[String], out: &Path) -> anyhow::Result<u8> {
    let text = logio::read_text(config)?;
    let base = RunConfig::from_toml_str(&text)?;
    let key = resolve_key(&base, param)?;
    let configs = values
        .iter()
        .map(|v| Ok((v.as_str(), RunConfig::from_toml_str(&override_scalar(&text, &key, v)?)?)))
        .collect::<sonar_avoid::Result<Vec<_>>>()?;

    let mut status = 0;
    let mut table = String::new();
    if let Some(pings) = base.replay.pings.as_deref() {
        let nav = base
            .replay
            .nav
            .as_deref()
            .ok_or_else(|| Error::Config {
                key: "replay.nav".into(),
                reason: "required with replay.pings".into(),
            })?;
        let (pings, nav) = (resolve(config, pings), resolve(config, nav));
        let truth = base.replay.truth.as_deref().map(|p| resolve(config, p));
        let _ = writeln!(
            table,
            "{key:<24} {:>9} {:>16} {:>18} {:>12} {:>9}",
            "delta_db", "first_detection_s", "detection_range_m", "false_alarms", "avoiding"
        );
        for (value, cfg) in &configs {
            let rc = ReplayConfig {
                levels: vec![cfg.channel.delta_db()],
                ..cfg.replay.clone()
            };
            let report = replay_logs(cfg, &rc, &pings, &nav, truth.as_deref())?;
            report.write_to_dir(&out.join(format!("{}_{value}", leaf(&key))))?;
            let level = &report.levels[0];
            let _ = writeln!(
                table,
                "{value:<24} {:>9} {:>16} {:>18} {:>12} {:>9}",
                level.delta_db,
                opt(level.first_detection_s),
                opt(level.first_detection_range_m),
                level
                    .false_alarm_count
                    .map_or_else(|| "unlabeled".to_string(), |c| c.to_string()),
                level.avoidance_count
            );
        }
    } else {
        let _ = writeln!(
            table,
            "{key:<24} {:>5} {:>10} {:>14} {:>9} {:>12} {:>24}",
            "runs", "collisions", "collision_rate", "timeouts", "false_alarms", "mean_first_avoidance_m"
        );
        for (value, cfg) in &configs {
            let batch = simulate(cfg, &out.join(format!("{}_{value}", leaf(&key))))
                .with_context(|| format!("{key} = {value}"))?;
            if batch.status() != 0 {
                status = EXIT_PARTIAL;
            }
            let n = batch.summaries.len();
            let ranges: Vec<f64> = batch.summaries.iter().filter_map(|s| s.first_avoidance_range).collect();
            let mean = (!ranges.is_empty()).then(|| ranges.iter().sum::<f64>() / ranges.len() as f64);
            let _ = writeln!(
                table,
                "{value:<24} {n:>5} {:>10} {:>14.3} {:>9} {:>12} {:>24}",
                batch.collisions(),
                batch.collisions() as f64 / n.max(1) as f64,
                batch.count(Outcome::Timeout),
                batch.summaries.iter().map(|s| s.false_alarm_count).sum::<usize>(),
                opt(mean)
            );
            for (seed, _) in &batch.failed {
                eprintln!("{key} = {value}: seed {seed} failed");
            }
        }
    }
    logio::write_atomic(&out.join("sweep.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(status)
}

fn leaf(key: &str) -> &str {
    key.rsplit('.').next().unwrap_or(key)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}
