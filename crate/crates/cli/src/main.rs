use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use latentprobe_cli::arith::{cmd_arith, ArithArgs, Which};
use latentprobe_cli::checks::run_all;
use latentprobe_cli::eval::{cmd_eval, EvalArgs};
use latentprobe_cli::props::{cmd_props, PropsArgs};
use latentprobe_cli::search::cmd_search;
use latentprobe_cli::{Common, Outcome, EXIT_ERROR, EXIT_OK, EXIT_SHORTFALL};
use latentprobe_core::bridge::mock::{serve_stream, SyntheticHandler};
use latentprobe_core::lvec::FileFormat;
use latentprobe_core::synthetic::SyntheticSpec;

const PAIR_TABLE_GOLDEN: &str = include_str!("../tests/fixtures/pair_table.golden");

/// Latent-space identity search and diagnostics for generator/embedder pairs.
///
/// Exit codes: 0 success, 1 error, 2 search stopped by its round cap or a
/// probe above tolerance. Set LATENTPROBE_LOG (e.g. `info`, `debug`) for logs.
#[derive(Parser)]
#[command(name = "latentprobe", version)]
struct Cli {
    /// Run manifest (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed; overrides the manifest's `seed` and `search.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Output directory; overrides the manifest's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Json,
}

impl From<Format> for FileFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Binary => FileFormat::Binary,
            Format::Json => FileFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Add,
    Remove,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a latent matching the manifest's target identity.
    Search {
        /// Latent file format for best.lvec.
        #[arg(long, value_enum, default_value = "binary")]
        format: Format,
    },
    /// Apply attribute recipes to the latents in a file.
    Arith {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        /// Recipe JSON; repeat for several edits.
        #[arg(long = "recipe", value_name = "FILE", required = true)]
        recipes: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "add")]
        direction: DirectionArg,
        /// Apply each edit to the previous result.
        #[arg(long)]
        chain: bool,
        /// Write a rendered image per edited latent (needs --config).
        #[arg(long)]
        render: bool,
        #[arg(long, value_enum, default_value = "binary")]
        format: Format,
    },
    /// Probe the backend's noise, sign and scale invariances.
    Props {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0.5)]
        amplitude: f64,
        /// Smallest coordinate magnitude of the probed latents.
        #[arg(long, default_value_t = 0.6)]
        margin: f64,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Print the all-pairs distance table for embedding files.
    Eval {
        /// Latent-format files holding embedding vectors.
        files: Vec<PathBuf>,
        /// JSON list of {"pair": [i, j], "score": s} to lay out as given.
        #[arg(long, value_name = "FILE")]
        scores: Option<PathBuf>,
    },
    /// Run the synthetic end-to-end checks and print a summary.
    Demo,
    /// Serve the wire protocol on stdin/stdout from a synthetic model.
    #[command(hide = true)]
    ServeMock {
        #[arg(long = "latent-dim", default_value_t = 64)]
        latent_dim: usize,
        #[arg(long = "embedding-dim", default_value_t = 32)]
        embedding_dim: usize,
        #[arg(long = "attribute-dim", default_value_t = 16)]
        attribute_dim: usize,
        #[arg(long = "model-seed", default_value_t = 42)]
        model_seed: u64,
    },
}

fn run(cli: Cli) -> Result<Outcome> {
    let common = Common {
        config: cli.config,
        seed: cli.seed,
        json: cli.json,
        out: cli.out,
    };
    match cli.command {
        Command::Search { format } => cmd_search(&common, format.into()),
        Command::Arith {
            base,
            recipes,
            direction,
            chain,
            render,
            format,
        } => cmd_arith(
            &common,
            &ArithArgs {
                base,
                recipes,
                direction: match direction {
                    DirectionArg::Add => Which::Add,
                    DirectionArg::Remove => Which::Remove,
                    DirectionArg::Both => Which::Both,
                },
                chain,
                render,
                format: format.into(),
            },
        ),
        Command::Props {
            trials,
            amplitude,
            margin,
            samples,
            tolerance,
        } => cmd_props(
            &common,
            &PropsArgs {
                trials,
                amplitude,
                margin,
                samples,
                tolerance,
            },
        ),
        Command::Eval { files, scores } => cmd_eval(&common, &EvalArgs { files, scores }),
        Command::Demo => {
            let checks = run_all(PAIR_TABLE_GOLDEN);
            let mut stdout = String::new();
            for c in &checks {
                stdout.push_str(&c.line());
                stdout.push('\n');
            }
            let passed = checks.iter().filter(|c| c.passed).count();
            stdout.push_str(&format!("{passed}/{} checks passed\n", checks.len()));
            let code = if passed == checks.len() {
                EXIT_OK
            } else {
                EXIT_SHORTFALL
            };
            Ok(Outcome::new(code, stdout))
        }
        Command::ServeMock {
            latent_dim,
            embedding_dim,
            attribute_dim,
            model_seed,
        } => {
            let mut handler = SyntheticHandler::new(SyntheticSpec {
                latent_dim,
                embedding_dim,
                attribute_dim,
                seed: model_seed,
            })?;
            serve_stream(
                std::io::stdin().lock(),
                std::io::stdout().lock(),
                &mut handler,
            )?;
            Ok(Outcome::new(EXIT_OK, ""))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LATENTPROBE_LOG", "warn"))
        .init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(outcome.stdout.as_bytes());
            let _ = out.flush();
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("latentprobe: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
