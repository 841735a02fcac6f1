use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use chainrec::config::{ModeSelection, RunConfig};
use chainrec::pipeline::{self, ConleyOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit code for configuration, I/O and budget errors.
const EXIT_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "chainrec", version, about = "Chain recurrent sets, attractors and basins on a gridded window")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides CHAINREC_WORKERS and the config.
    #[arg(long, env = "CHAINREC_WORKERS")]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Outer,
    Inner,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Outer/inner approximations of the chain recurrent set.
    Cr(Common),
    /// Trapping regions, attractors and basins.
    Attractors(Common),
    /// Complement check; exits 0 CONSISTENT, 2 VIOLATION, 3 INCONCLUSIVE.
    Conley {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt_record: bool,
    },
    /// Witness chain between two points; exits 1 when no chain exists.
    Chain {
        #[command(flatten)]
        common: Common,
        /// Comma-separated coordinates.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        from: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        to: Vec<f64>,
    },
    /// Trapping, invariance and conjugacy checks; exits 2 when one fails.
    Verify(Common),
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, PathBuf, Option<usize>)> {
    let mut cfg = RunConfig::from_file(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    if let Some(m) = common.mode {
        cfg.mode = match m {
            Mode::Outer => ModeSelection::Outer,
            Mode::Inner => ModeSelection::Inner,
            Mode::Both => ModeSelection::Both,
        };
    }
    let out = match (&common.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set output_dir in the config"),
    };
    let workers = common.workers.or(cfg.workers);
    Ok((cfg, out, workers))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Cr(common) => {
            let (cfg, out, workers) = load(&common)?;
            let run = pipeline::with_workers(workers, || pipeline::run_cr(&cfg, &out))??;
            for a in [&run.outer, &run.inner].into_iter().flatten() {
                println!("{}: {} cells ({} unknown)", a.meta.mode, a.cells.len(), a.unknown.len());
            }
            Ok(0)
        }
        Command::Attractors(common) => {
            let (cfg, out, workers) = load(&common)?;
            let run = pipeline::with_workers(workers, || pipeline::run_attractors(&cfg, &out))??;
            for r in &run.records {
                println!(
                    "{}: U {} cells, A {} cells, basin {} cells",
                    r.name.as_deref().unwrap_or("?"),
                    r.region.u.len(),
                    r.a.len(),
                    r.basin.len()
                );
            }
            for r in &run.unverified {
                println!("{}: {:?}", r.name, r.status);
            }
            Ok(0)
        }
        Command::Conley { common, corrupt_record } => {
            let (cfg, out, workers) = load(&common)?;
            let opts = ConleyOptions { corrupt_record };
            let run = pipeline::with_workers(workers, || pipeline::run_conley(&cfg, &out, opts))??;
            let r = &run.report;
            println!("{:?} (band {}, required {:?})", r.verdict, r.band_width_cells, r.required_band);
            for n in &r.notes {
                println!("  {n}");
            }
            Ok(r.verdict.exit_code() as u8)
        }
        Command::Chain { common, from, to } => {
            let (cfg, out, workers) = load(&common)?;
            match pipeline::with_workers(workers, || pipeline::run_chain(&cfg, &out, &from, &to))?? {
                Some(w) => {
                    println!("{w}");
                    Ok(0)
                }
                None => {
                    println!("ABSENT");
                    Ok(1)
                }
            }
        }
        Command::Verify(common) => {
            let (cfg, out, workers) = load(&common)?;
            let run = pipeline::with_workers(workers, || pipeline::run_verify(&cfg, &out))??;
            println!("{}", if run.pass { "PASS" } else { "FAIL" });
            Ok(if run.pass { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
