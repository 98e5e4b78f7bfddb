//! Command-line front end shared by the `wugbench` binary and tests.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{prepare, run_experiment, write_combined, write_reports, ExperimentConfig, RunError, Stages};
use crate::corpus::write_dataset;
use crate::seq2seq::Architecture;

#[derive(Parser, Debug)]
#[command(name = "wugbench", version, about = "Train inflection models and compare them with human wug judgments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the train/dev/test partition to <out>/data.
    Split(Common),
    /// Train (or reuse) checkpoints and write training curves.
    Train(Common),
    /// Test-set accuracy and per-class F1.
    Eval(Common),
    /// Wug ratings, productions and correlations with humans.
    Wug(Common),
    /// Everything, plus summary.json; several configs also get a combined
    /// accuracy-vs-correlation table in --out.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Architectures to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    arch: Vec<Architecture>,
    /// A count N (seeds 1..=N), a range A-B, or a comma-separated list.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    beam_width: Option<usize>,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory, replacing the one in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory for a single config, or the combined table for
    /// several.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("invalid seed list `{s}`");
    if s.contains(',') {
        return s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect();
    }
    if let Some((a, b)) = s.split_once('-') {
        let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        return if a <= b { Ok((a..=b).collect()) } else { Err(bad()) };
    }
    match s.parse::<u64>() {
        Ok(n) if n > 0 => Ok((1..=n).collect()),
        _ => Err(bad()),
    }
}

fn load(path: &Path, o: &Overrides, out: Option<&PathBuf>) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if !o.arch.is_empty() {
        cfg.architectures = o.arch.clone();
    }
    if let Some(s) = &o.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(e) = o.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = o.beam_width {
        cfg.beam_width = b;
    }
    if let Some(d) = out {
        cfg.output_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run_stage(c: &Common, stages: Stages) -> Result<(), RunError> {
    let cfg = load(&c.config, &c.overrides, c.out.as_ref())?;
    let res = run_experiment(&cfg, stages)?;
    print_files(&write_reports(&res, &cfg.output_dir)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Split(c) => {
            let cfg = load(&c.config, &c.overrides, c.out.as_ref())?;
            let prep = prepare(&cfg)?;
            let dir = cfg.output_dir.join("data");
            std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
            for (name, part) in [("train", &prep.train), ("dev", &prep.dev), ("test", &prep.test)] {
                let path = dir.join(format!("{name}.tsv"));
                std::fs::write(&path, write_dataset(part, cfg.language)).map_err(|e| RunError::io(&path, e))?;
                println!("{}\t{}", path.display(), part.len());
            }
            Ok(())
        }
        Command::Train(c) => run_stage(&c, Stages::TRAIN),
        Command::Eval(c) => run_stage(&c, Stages { test: true, wug: false }),
        Command::Wug(c) => run_stage(&c, Stages { test: false, wug: true }),
        Command::Report(r) => {
            if r.config.len() == 1 {
                let c = Common {
                    config: r.config[0].clone(),
                    overrides: r.overrides,
                    out: r.out,
                };
                return run_stage(&c, Stages::ALL);
            }
            let combined = r
                .out
                .clone()
                .ok_or_else(|| RunError::Config("--out is required with several configs".into()))?;
            let mut results = Vec::new();
            for path in &r.config {
                let cfg = load(path, &r.overrides, None)?;
                let res = run_experiment(&cfg, Stages::ALL)?;
                print_files(&write_reports(&res, &cfg.output_dir)?);
                results.push(res);
            }
            print_files(&write_combined(&results, &combined)?);
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on a runtime error and 2
/// on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4-6").unwrap(), vec![4, 5, 6]);
        assert_eq!(parse_seeds("9,2").unwrap(), vec![9, 2]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("6-4").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["wugbench", "train"]), 2);
        assert_eq!(run(["wugbench", "train", "--config", "x.json", "--bogus"]), 2);
        assert_eq!(run(["wugbench", "train", "--config", "x.json", "--arch", "rnn"]), 2);
    }

    #[test]
    fn missing_config_file_exits_one() {
        assert_eq!(run(["wugbench", "train", "--config", "/nonexistent/cfg.json"]), 1);
    }
}
