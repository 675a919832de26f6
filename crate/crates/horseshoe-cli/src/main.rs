use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use horseshoe_cli::cache::{cache_key, write_artifacts, Cache, Lookup};
use horseshoe_cli::commands::{run, Artifacts, Command};
use horseshoe_cli::config::RunConfig;
use horseshoe_cli::suite::verify_all;
use horseshoe_cli::CODE_VERSION;

#[derive(Debug, Parser)]
#[command(name = "horseshoe", version, about = "Experiments on a horseshoe with an internal homoclinic tangency")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sampling seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cache directory; overrides the configuration.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Always recompute.
    #[arg(long, global = true)]
    no_cache: bool,
    #[command(subcommand)]
    command: Command,
}

fn error_exit(kind: &str, message: String, out: Option<&PathBuf>) -> ExitCode {
    let body = json!({ "error": kind, "message": message });
    let text = serde_json::to_string_pretty(&body).expect("error serializes");
    if let Some(dir) = out {
        let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("error.json"), format!("{text}\n")));
    }
    println!("{}", serde_json::to_string(&body).expect("error serializes"));
    ExitCode::from(2)
}

fn error_kind(e: &horseshoe::Error) -> &'static str {
    use horseshoe::Error::*;
    match e {
        Config(_) => "config",
        InvalidInput(_) => "invalid_input",
        InsufficientSamples(_) => "insufficient_samples",
        NoConvergence { .. } => "no_convergence",
        EmptyAtom(_) => "empty_atom",
        _ => "computation",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config_path) = cli.config.as_ref() else {
        return error_exit("config", "--config is required".into(), None);
    };
    let cfg = match RunConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => return error_exit("config", e.to_string(), cli.out.as_ref()),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out_dir = cli.out.clone().unwrap_or(cfg.output_dir.clone());
    let p = cfg.params;

    if let Command::VerifyAll = cli.command {
        let report = verify_all(&p, seed, |r, secs| eprintln!("{} [{secs:.1} s]", r.line()));
        let mut files = std::collections::BTreeMap::new();
        files.insert("verify.json".to_string(), format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")));
        files.insert("verify.csv".to_string(), report.csv());
        if let Err(e) = write_artifacts(&out_dir, &files) {
            return error_exit("io", e.to_string(), None);
        }
        for c in &report.criteria {
            println!("{}", c.line());
        }
        let failed = report.criteria.iter().filter(|c| c.status == horseshoe_cli::suite::Status::Fail).count();
        println!("verify-all: {} criteria, {failed} failed", report.criteria.len());
        return ExitCode::from(if failed == 0 { 0 } else { 1 });
    }

    let cache_dir = cli.cache_dir.clone().or(cfg.cache_dir.clone());
    let cache = match (&cache_dir, cli.no_cache || !cli.command.cacheable()) {
        (Some(d), false) => Some(Cache::new(d)),
        _ => None,
    };
    let key = cache_key(
        &serde_json::to_string(&p).expect("params serialize"),
        cli.command.name(),
        &format!("{}|seed={seed}", serde_json::to_string(&cli.command).expect("options serialize")),
        CODE_VERSION,
    );
    let cached: Option<Artifacts> = cache.as_ref().and_then(|c| match c.get(&key) {
        Lookup::Hit(a) => Some(a),
        Lookup::Miss => None,
        Lookup::Corrupt(why) => {
            eprintln!("warning: cache entry {key} is corrupted ({why}); recomputing");
            None
        }
    });
    let artifacts = match cached {
        Some(a) => a,
        None => match run(&p, seed, &cli.command) {
            Ok(a) => {
                if let Some(c) = &cache {
                    if let Err(e) = c.put(&key, &a) {
                        eprintln!("warning: could not write cache entry: {e}");
                    }
                }
                a
            }
            Err(e) => return error_exit(error_kind(&e), e.to_string(), Some(&out_dir)),
        },
    };
    if let Err(e) = write_artifacts(&out_dir, &artifacts.files) {
        return error_exit("io", e.to_string(), None);
    }
    println!("{}: {}", cli.command.name(), artifacts.summary);
    ExitCode::from(artifacts.exit_code.clamp(0, 255) as u8)
}
