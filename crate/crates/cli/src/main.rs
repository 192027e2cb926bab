use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};
use grokking_cli::{
    cmd_analyze, cmd_emit_figures, cmd_run, cmd_simulate, cmd_verify, CampaignConfig, GridFile,
    Scope,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "grokking",
    version,
    about = "Grokking-delay campaigns: train, analyse, check bounds, verify claims"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Desk,
    Full,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every run in a campaign config, skipping runs already complete.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Build reports from a campaign's runs.
    Analyze {
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the crossing-time bounds over a grid file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare emitted values against a claims file.
    Verify {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        scope: ScopeArg,
    },
    /// Write columnar figure data from a campaign's reports.
    EmitFigures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn real_main() -> Result<bool> {
    match Cli::parse().cmd {
        Cmd::Run { config, out, jobs } => {
            let cfg = CampaignConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.campaign_id));
            let report = cmd_run(&cfg, &out, jobs.unwrap_or(cfg.jobs))?;
            let done = report.count(|s| matches!(s, grokking_cli::campaign::RunStatus::Completed));
            let skipped = report.count(|s| matches!(s, grokking_cli::campaign::RunStatus::Skipped));
            println!(
                "{}: {done} completed, {skipped} already present, output in {}",
                cfg.campaign_id,
                out.display()
            );
            let failures = report.failures();
            for f in &failures {
                eprintln!("failed: {f}");
            }
            if !failures.is_empty() {
                bail!("{} runs failed; completed runs are kept", failures.len());
            }
            Ok(true)
        }
        Cmd::Analyze { out } => {
            let a = cmd_analyze(&out)?;
            println!(
                "analysed {} runs ({} excluded); reports in {}",
                a.runs.runs.len(),
                a.runs.excluded.len(),
                out.join("reports").display()
            );
            for n in &a.notes {
                println!("note: {n}");
            }
            Ok(true)
        }
        Cmd::Simulate { config, out } => {
            let r = cmd_simulate(&GridFile::load(&config)?, &out)?;
            println!(
                "{} grid points, band constant K = {:.4}",
                r.points.len(),
                r.k_fit
            );
            for (c1, s) in &r.scaling_spread {
                println!("c1 = {c1}: T·ηλ spread {:.3}%", 100.0 * s);
            }
            Ok(true)
        }
        Cmd::Verify { out, claims, scope } => {
            let scope = match scope {
                ScopeArg::Desk => Scope::Desk,
                ScopeArg::Full => Scope::Full,
            };
            let r = cmd_verify(&out, &claims, scope)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", r.table());
            Ok(r.passed())
        }
        Cmd::EmitFigures { out } => {
            for p in cmd_emit_figures(&out)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
