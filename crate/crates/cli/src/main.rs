use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Result;
use clap::{Parser, Subcommand};

use scenescope::service::Service;
use scenescope::Norm;
use scenescope_cli::commands::{self, AttackArgs, BenchArgs, FvisArgs, SweepArgs};
use scenescope_cli::server::{self, AppState};

/// Log filter, in `env_logger` syntax (e.g. `info`, `scenescope=debug`).
const LOG_ENV: &str = "SCENESCOPE_LOG";

#[derive(Parser)]
#[command(name = "scenescope", version, about = "Render, perturb and probe CNNs on a 3D scene")]
struct Cli {
    /// Directory of model containers and neuron-group sidecars.
    #[arg(long, global = true, default_value = "models", env = "SCENESCOPE_MODELS")]
    models: PathBuf,
    /// Directory holding `assets.json` with its meshes and backgrounds.
    #[arg(long, global = true, default_value = "assets", env = "SCENESCOPE_ASSETS")]
    assets: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the session protocol, catalog endpoints and the web client.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Feature-visualization catalog (a directory with `index.json`).
        #[arg(long)]
        fvis: Option<PathBuf>,
        /// Static files of the web client, served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Optional per-class thumbnails, served at `/thumbnails/<class>.png`.
        #[arg(long)]
        thumbnails: Option<PathBuf>,
        /// Seconds without a state change before a keepalive is sent.
        #[arg(long, default_value_t = 5.0)]
        keepalive: f64,
    },
    /// Yaw sweep with fluctuation scores.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PGD attack on a rendered scene.
    Attack {
        /// `id` or `id@checkpoint`.
        #[arg(long)]
        model: String,
        /// Scene state JSON; the default scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        eps: f32,
        #[arg(long, value_parser = ["l2", "linf"])]
        norm: String,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        /// Class index to increase; without it the top-1 class is suppressed.
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature visualizations for every channel of the given layers.
    Fvis {
        #[arg(long)]
        model: String,
        /// Comma-separated capture-eligible nodes.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Output side in pixels; the model input size by default.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Frame-rate benchmark while orbiting the camera.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the fixture models and assets.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve {
            port,
            host,
            fvis,
            static_dir,
            thumbnails,
            keepalive,
        } => {
            let service = Service::open(&cli.models, &cli.assets, fvis.as_deref())?;
            log::info!("{} models, {} meshes", service.list_models().len(), service.list_meshes().len());
            let state = AppState {
                service: Arc::new(service),
                keepalive: Duration::from_secs_f64(keepalive),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(
                state,
                static_dir.as_deref(),
                thumbnails.as_deref(),
                &format!("{host}:{port}"),
            ))?;
        }
        Command::Sweep { config, out } => {
            let report = commands::sweep(&SweepArgs {
                config,
                models: cli.models,
                assets: cli.assets,
                out: out.clone(),
            })?;
            for s in &report.summaries {
                println!(
                    "{}@{} {}: mean {:.4} std {:.4} over {} prototypes",
                    s.model_id,
                    s.checkpoint,
                    s.mesh.as_deref().unwrap_or("all"),
                    s.mean,
                    s.std,
                    s.prototypes
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Attack {
            model,
            scene,
            eps,
            norm,
            steps,
            target,
            out,
        } => {
            let report = commands::attack(&AttackArgs {
                model,
                scene,
                epsilon: eps,
                norm: norm.parse::<Norm>()?,
                steps,
                target,
                models: cli.models,
                assets: cli.assets,
                out: out.clone(),
            })?;
            let (b, f) = (&report.base_top[0], &report.final_top[0]);
            println!("top-1 before: {} ({:.3}), after: {} ({:.3})", b.label, b.logit, f.label, f.logit);
            println!("wrote {}", out.display());
        }
        Command::Fvis {
            model,
            layers,
            out,
            steps,
            size,
            seed,
        } => {
            let report = commands::fvis(&FvisArgs {
                model,
                layers,
                steps,
                size,
                seed,
                models: cli.models,
                out: out.clone(),
            })?;
            let dead = report.assets.iter().filter(|a| a.dead).count();
            println!(
                "{} assets ({} generated, {} already present, {} dead) in {}",
                report.assets.len(),
                report.generated,
                report.skipped,
                dead,
                out.display()
            );
        }
        Command::Bench { config, out } => {
            let reports = commands::bench_runs(&BenchArgs {
                config,
                models: cli.models,
                assets: cli.assets,
                out,
            })?;
            print!("{}", commands::bench_table(&reports));
        }
        Command::Fixtures { out } => {
            scenescope::fixtures::write_fixtures(&out)?;
            println!("wrote {0}/models and {0}/assets", out.display());
        }
    }
    Ok(())
}
