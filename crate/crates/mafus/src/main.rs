use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mafus::pipeline::{self, PipelineConfig, PipelineError, Stage};
use mafus::service::{self, AppState};
use mafus::synth::{gen_synthetic, SynthSpec};
use mafus_core::artifact::ModelArtifact;

#[derive(Parser)]
#[command(name = "mafus", version, about = "Train, compare and explain mortality-risk classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic cohort as CSV.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        prevalence: f64,
        #[arg(long, default_value_t = 3.0)]
        signal: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Draw class labels independently instead of fixing the class-1 count.
        #[arg(long)]
        bernoulli: bool,
        #[arg(long, default_value_t = 0)]
        missing_rows: usize,
    },
    /// Explain every row of a raw-unit CSV with a saved model.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a saved model over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn fail(e: &PipelineError) -> ExitCode {
    eprintln!("error: {e}");
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
    ExitCode::from(e.exit_code() as u8)
}

fn stage_err(stage: Stage, source: mafus_core::Error) -> PipelineError {
    PipelineError::Stage { stage, source }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let res = pipeline::run_pipeline(&cfg)?;
            let chosen = res.report.chosen_result();
            println!(
                "chosen {}: class-1 errors {}, F1 {:.4}, AUC {}",
                chosen.algorithm,
                chosen.class1_errors,
                chosen.test.yes.f1.value,
                chosen.test.auc.map_or("n/a".into(), |a| format!("{a:.4}"))
            );
            println!(
                "explained {} test samples: |A| = {}, |B| = {}",
                res.partition.len(),
                res.partition.a.len(),
                res.partition.b.len()
            );
            println!("artifact {} in {}", res.artifact_hash, res.output_dir.display());
            Ok(())
        }
        Command::Synth {
            n,
            prevalence,
            signal,
            seed,
            out,
            bernoulli,
            missing_rows,
        } => {
            let spec = SynthSpec {
                n,
                prevalence,
                signal,
                seed,
                exact_count: !bernoulli,
                missing_rows,
            };
            let cohort = gen_synthetic(&spec).map_err(|e| PipelineError::Config(e.to_string()))?;
            cohort.save_csv(&out).map_err(|e| stage_err(Stage::Persist, e))?;
            println!("wrote {} rows to {}", cohort.len(), out.display());
            Ok(())
        }
        Command::Explain { model, input, out } => {
            let (artifact, _) = ModelArtifact::load(&model).map_err(|e| PipelineError::Config(e.to_string()))?;
            let file = std::fs::File::open(&input).map_err(|e| {
                stage_err(
                    Stage::Load,
                    mafus_core::Error::Io {
                        path: input.clone(),
                        source: e,
                    },
                )
            })?;
            let part = pipeline::explain_csv(&artifact, file)?;
            let mut bytes = serde_json::to_vec_pretty(&part).expect("partition serializes");
            bytes.push(b'\n');
            std::fs::write(&out, bytes)
                .map_err(|e| stage_err(Stage::Persist, mafus_core::Error::Io { path: out.clone(), source: e }))?;
            println!(
                "explained {} rows: |A| = {}, |B| = {}, failed {}",
                part.len(),
                part.a.len(),
                part.b.len(),
                part.failed.len()
            );
            Ok(())
        }
        Command::Serve { model, port, host } => {
            let state = AppState::load(&model).map_err(|e| PipelineError::Config(e.to_string()))?;
            let addr = SocketAddr::new(host, port);
            eprintln!("serving {} on http://{addr}", model.display());
            let rt = tokio::runtime::Runtime::new().map_err(|e| {
                stage_err(
                    Stage::Persist,
                    mafus_core::Error::Io {
                        path: model.clone(),
                        source: e,
                    },
                )
            })?;
            rt.block_on(service::serve(state, addr)).map_err(|e| {
                PipelineError::Config(format!("cannot serve on {addr}: {e}"))
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
