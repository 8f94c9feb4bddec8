//! Command-line front end: argument parsing, config overrides and dispatch.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use commands::{cmd_fit, cmd_gof, cmd_reconstruct, cmd_run, cmd_simulate, cmd_validate};
pub use config::{BlockValue, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "netrecon", version, about = "Bayesian network reconstruction from noisy pair measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that the data suit the configured model.
    Validate,
    /// Sample parameters; writes trace.csv and diagnostics.json.
    Fit,
    /// Edge probabilities from a trace; writes edges.csv.
    Reconstruct {
        /// Trace to read instead of <output-dir>/trace.csv.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Posterior-predictive check from a trace; writes gof.csv, predicted.csv, summary.json.
    Gof {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Synthetic data and ground truth; writes data.csv, truth.csv, nodes.csv, params.json.
    Simulate,
    /// Fit, reconstruct and check in one go.
    Run,
}

/// Flags that override configuration values.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub warmup: Option<usize>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Minimum edge probability written to edges.csv.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub no_gof: bool,
    /// Node count for `simulate`.
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    /// Parameter block for `simulate`, as `name=v` or `name=v1,v2,...`. Repeatable.
    #[arg(long = "param", global = true, value_parser = parse_param)]
    pub params: Vec<(String, Vec<f64>)>,
}

fn parse_param(s: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let (name, values) = s.split_once('=').ok_or("expected name=value[,value...]")?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((name.trim().to_string(), values))
}

impl Overrides {
    /// Loads the config (if any) and applies the flags on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => return Err(Error::Config("--config is required".into())),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.data {
            cfg.data.path = Some(p.clone());
        }
        if let Some(p) = &self.output_dir {
            cfg.output.dir = p.clone();
        }
        let s = &mut cfg.sampler;
        s.seed = self.seed.unwrap_or(s.seed);
        s.chains = self.chains.unwrap_or(s.chains);
        s.samples = self.samples.unwrap_or(s.samples);
        s.warmup = self.warmup.unwrap_or(s.warmup);
        s.threads = self.threads.or(s.threads);
        if let Some(t) = self.threshold {
            cfg.output.threshold = t;
        }
        if self.no_gof {
            cfg.output.gof = false;
        }
        if let Some(n) = self.nodes {
            cfg.simulate.nodes = Some(n);
        }
        for (name, v) in &self.params {
            cfg.simulate.parameters.insert(name.clone(), BlockValue::Vector(v.clone()));
        }
    }
}

/// Runs one command; messages go to stdout, warnings to stderr.
pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    cfg.sampler.check()?;
    crate::sampler::with_pool(cfg.sampler.threads, || dispatch(&cli.command, &cfg))?
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    let dir = cfg.output.dir.display();
    match command {
        Command::Validate => {
            let (loaded, violations) = cmd_validate(cfg)?;
            if violations.is_empty() {
                println!(
                    "ok: {} nodes, {} records, model {}/{}",
                    loaded.obs.n(),
                    loaded.obs.record_count(),
                    loaded.model.spec().data.name(),
                    loaded.model.spec().network.name()
                );
                return Ok(());
            }
            for v in &violations {
                println!("violation: {v}");
            }
            Err(Error::Shape(format!("{} violation(s)", violations.len())))
        }
        Command::Fit => {
            let (_, draws, diag) = cmd_fit(cfg)?;
            report_diagnostics(&diag);
            println!("wrote {} draws to {dir}", draws.len());
            Ok(())
        }
        Command::Reconstruct { trace } => {
            cmd_reconstruct(cfg, trace.as_deref())?;
            println!("wrote edges.csv to {dir}");
            Ok(())
        }
        Command::Gof { trace } => {
            let r = cmd_gof(cfg, trace.as_deref())?;
            report_gof(&r);
            Ok(())
        }
        Command::Simulate => {
            let s = cmd_simulate(cfg)?;
            println!(
                "wrote {} records and {} true edges to {dir}",
                s.obs.record_count(),
                s.truth.edge_count()
            );
            Ok(())
        }
        Command::Run => {
            let (diag, report) = cmd_run(cfg)?;
            report_diagnostics(&diag);
            if let Some(r) = report {
                report_gof(&r);
            }
            println!("wrote results to {dir}");
            Ok(())
        }
    }
}

fn report_diagnostics(diag: &crate::sampler::Diagnostics) {
    for w in &diag.warnings {
        eprintln!("warning: {w}");
    }
    for p in &diag.parameters {
        let rhat = p.rhat.map_or("-".to_string(), |r| format!("{r:.3}"));
        println!("{:<24} mean {:>10.4}  sd {:>9.4}  rhat {rhat}", p.name, p.mean, p.sd);
    }
}

fn report_gof(r: &crate::gof::GofReport) {
    let r2 = r.r_squared.map_or("undefined".to_string(), |v| format!("{v:.3}"));
    println!("p-value {:.3}, R^2 {r2}", r.p_value);
    if r.floor_hits > 0 {
        eprintln!("warning: {} discrepancy terms hit the prediction floor", r.floor_hits);
    }
}
