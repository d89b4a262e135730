//! `otlab`: runs experiment configs and writes CSV traces and JSON reports.
//!
//! Exit status: 0 when every job passes its check, 1 when a check fails,
//! 2 on configuration or solver errors.

mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use otlab_core::config::{load_tree, parse_scalar, set_path};

use commands::Outcome;

#[derive(Parser, Debug)]
#[command(name = "otlab", version, about = "Discrete JKO flows and generalized log-Sobolev checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    options: Options,
}

#[derive(Args, Debug, Clone)]
pub struct Options {
    /// Experiment config (TOML, or JSON with a `.json` extension).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; the OTLAB_OUT environment variable takes precedence.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Fan the config over a list of values for a dotted key; repeatable.
    #[arg(long, global = true, value_name = "KEY=V1,V2,...")]
    sweep: Vec<String>,
    /// Enable brute-force cross-checks.
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Multiplier applied to the discretization tolerance.
    #[arg(long, global = true, default_value_t = 1.0, value_name = "FLOAT")]
    pub tol_scale: f64,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Pointwise criteria, modulus validation and test-function gaps per `checks`.
    Criterion,
    /// Run the JKO flow and certify the log-Sobolev inequality.
    Flow,
    /// A single JKO step from the initial measure, or every case of a step-case file.
    Step,
    /// Optimal transport from the initial to the target measure.
    Transport,
    /// The five-gradients functional between the initial and target measures.
    FiveGradients,
    /// The sharp p-power convexity constants.
    Ppower {
        #[arg(long)]
        p: f64,
    },
    /// Log-Sobolev gaps of test functions with `G = H + L`.
    LsiGap,
    /// Radial construction of the Young function from `[theta]`.
    ThetaLsi,
}

/// A config tree with the label of its sweep point.
struct Job {
    label: Option<String>,
    tree: toml::Value,
}

fn parse_sweep(arg: &str) -> anyhow::Result<(String, Vec<toml::Value>)> {
    let (key, values) = arg.split_once('=').with_context(|| format!("sweep `{arg}` is not KEY=V1,V2,..."))?;
    let values: Vec<toml::Value> = values.split(',').filter(|v| !v.trim().is_empty()).map(parse_scalar).collect();
    if key.trim().is_empty() || values.is_empty() {
        bail!("sweep `{arg}` needs a key and at least one value");
    }
    Ok((key.trim().to_string(), values))
}

fn format_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Cartesian product of the sweeps applied to the base tree, in order.
fn expand_jobs(base: toml::Value, sweeps: &[String]) -> anyhow::Result<Vec<Job>> {
    let mut jobs = vec![Job { label: None, tree: base }];
    for arg in sweeps {
        let (key, values) = parse_sweep(arg)?;
        let mut next = Vec::with_capacity(jobs.len() * values.len());
        for job in &jobs {
            for value in &values {
                let mut tree = job.tree.clone();
                set_path(&mut tree, &key, value.clone())?;
                let point = format!("{key}={}", format_value(value));
                let label = match &job.label {
                    Some(l) => format!("{l}_{point}"),
                    None => point,
                };
                next.push(Job { label: Some(label), tree });
            }
        }
        jobs = next;
    }
    Ok(jobs)
}

fn base_tree(command: Command, options: &Options) -> anyhow::Result<toml::Value> {
    if let Command::Ppower { p } = command {
        let mut table = toml::Table::new();
        table.insert("p".into(), toml::Value::Float(p));
        return Ok(toml::Value::Table(table));
    }
    let path = options.config.as_ref().context("--config is required for this subcommand")?;
    load_tree(path).with_context(|| format!("reading {}", path.display()))
}

fn output_dir(options: &Options) -> PathBuf {
    std::env::var_os("OTLAB_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| options.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run_job(command: Command, options: &Options, tree: toml::Value, out: &Path) -> anyhow::Result<Outcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match command {
        Command::Criterion => commands::criterion(tree, options, out),
        Command::Flow => commands::flow(tree, options, out),
        Command::Step => commands::step(tree, options, out),
        Command::Transport => commands::transport(tree, options, out),
        Command::FiveGradients => commands::five_gradients(tree, options, out),
        Command::Ppower { .. } => commands::ppower(tree, out),
        Command::LsiGap => commands::lsi_gap(tree, options, out),
        Command::ThetaLsi => commands::theta_lsi(tree, options, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let options = &cli.options;
    let jobs = match base_tree(cli.command, options).and_then(|base| expand_jobs(base, &options.sweep)) {
        Ok(jobs) => jobs,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let out = output_dir(options);
    let results: Vec<(Option<String>, anyhow::Result<Outcome>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|job| {
                let dir = match &job.label {
                    Some(l) => out.join(l),
                    None => out.clone(),
                };
                let label = job.label.clone();
                let handle = scope.spawn(move || run_job(cli.command, options, job.tree, &dir));
                (label, handle)
            })
            .collect();
        handles
            .into_iter()
            .map(|(label, h)| {
                let result = h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("job panicked")));
                (label, result)
            })
            .collect()
    });

    let mut code = 0u8;
    for (label, result) in results {
        let prefix = label.map(|l| format!("[{l}] ")).unwrap_or_default();
        match result {
            Ok(outcome) => {
                println!("{prefix}{} {}", if outcome.passed { "PASS" } else { "FAIL" }, outcome.summary);
                if !outcome.passed {
                    code = code.max(1);
                }
            }
            Err(e) => {
                eprintln!("{prefix}error: {e:#}");
                code = 2;
            }
        }
    }
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweeps_form_a_labelled_product() {
        let base: toml::Value = "[cost]\ntau = 0.1\n[potential]\nlambda = 1.0\n".parse::<toml::Table>().unwrap().into();
        let sweeps = vec!["cost.tau=0.5,1".to_string(), "potential.lambda=2".to_string()];
        let jobs = expand_jobs(base, &sweeps).unwrap();
        let labels: Vec<_> = jobs.iter().map(|j| j.label.clone().unwrap()).collect();
        assert_eq!(labels, ["cost.tau=0.5_potential.lambda=2", "cost.tau=1_potential.lambda=2"]);
        assert_eq!(jobs[1].tree["cost"]["tau"], toml::Value::Float(1.0));
    }

    #[test]
    fn malformed_sweeps_are_rejected() {
        assert!(parse_sweep("tau").is_err());
        assert!(parse_sweep("=1,2").is_err());
        assert!(parse_sweep("tau=").is_err());
    }
}
