//! `deepbnd` command line. Talks to a running service (`--server`) or starts one
//! in-process on an ephemeral local port.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use deepbnd_client::Client;
use deepbnd_core::api::{
    CellSpec, DnsRequest, Fe2Request, MacroKind, OfflineRequest, PredictRequest, ReportRequest,
    SampleRequest, Stage, TangentRequest, ValidateRequest,
};
use deepbnd_core::macroscale::{DnsConfig, TangentProvider};
use deepbnd_core::micro::SamplingMethod;
use deepbnd_core::pipeline::PipelineConfig;
use deepbnd_core::store::DatasetUse;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "deepbnd", version, about = "Learned boundary conditions for microscale corrector problems")]
struct Cli {
    /// Service URL; an in-process server is started when absent.
    #[arg(long, global = true)]
    server: Option<String>,

    /// Root directory for artifacts and reports.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,

    /// Base seed. Pipeline datasets use seed, seed+1, seed+2.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for snapshot and micro solves.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Pipeline configuration (JSON); the desk-scale preset when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Lhs,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Use {
    TrainRb,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Macro {
    Cook,
    Bar,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bc {
    Taylor,
    Linear,
    Periodic,
    Minimal,
    Hf,
    Deepbnd,
}

impl From<Bc> for TangentProvider {
    fn from(b: Bc) -> Self {
        match b {
            Bc::Taylor => TangentProvider::Taylor,
            Bc::Linear => TangentProvider::Linear,
            Bc::Periodic => TangentProvider::Periodic,
            Bc::Minimal => TangentProvider::Minimal,
            Bc::Hf => TangentProvider::Hf,
            Bc::Deepbnd => TangentProvider::Deepbnd,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Latin hypercube (or iid) design in [-1, 1].
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dims: usize,
        #[arg(long, value_enum, default_value = "lhs")]
        method: Method,
        /// Output stem for `.bin` and `.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HF snapshot datasets (axial and shear goal traces).
    Snapshots {
        #[arg(long = "use", value_enum)]
        usage: Option<Use>,
    },
    /// POD bases of the training traces.
    Pod,
    /// Networks for the axial and shear coefficients.
    Train,
    /// Snapshots, bases, networks and the bundle manifest.
    Offline,
    /// Predicted boundary trace for given radii and strain.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        radii: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,0,0")]
        strain: Vec<f64>,
        #[arg(long)]
        n_rb: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Homogenised tangent of one microstructure.
    Tangent {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
        #[arg(long, value_enum)]
        bc: Bc,
    },
    /// Two-scale solve of the Cook membrane or the clamped bar.
    Fe2 {
        #[arg(long = "macro", value_enum)]
        geometry: Macro,
        #[arg(long, value_enum)]
        bc: Bc,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cook: divisions per side. Bar: macro elements per block side.
        #[arg(long)]
        divisions: Option<usize>,
        /// Bar: blocks across the height.
        #[arg(long, default_value_t = 4)]
        ny: usize,
    },
    /// Fully resolved clamped-bar simulation.
    Dns {
        #[arg(long)]
        ny: usize,
        #[arg(long)]
        divisions_per_block: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Online experiments and CSV reports.
    Report {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Checks manifests, hashes, orthonormality and dimension chains.
    Validate,
    /// Runs the service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn absolute(p: &Path) -> Result<PathBuf, Failure> {
    Ok(std::path::absolute(p)?)
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)
            .map_err(|e| Failure(format!("{}: {e}", p.display())))?,
        None => PipelineConfig::desk(),
    };
    if let Some(s) = cli.seed {
        cfg.datasets.train_rb.seed = s;
        cfg.datasets.validation.seed = s + 1;
        cfg.datasets.test.seed = s + 2;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn print<T: Serialize>(v: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

async fn offline(cli: &Cli, client: &Client, stage: Stage, usage: Option<DatasetUse>) -> Result<(), Failure> {
    let req = OfflineRequest {
        config: load_config(cli)?,
        workspace: absolute(&cli.workspace)?,
        stage,
        usage,
        workers: cli.workers,
    };
    let resp = match stage {
        Stage::Snapshots => client.snapshots(&req).await?,
        Stage::Pod => client.pod(&req).await?,
        Stage::Train => client.train(&req).await?,
        Stage::All => client.offline(&req).await?,
    };
    print(&resp)
}

fn bundle_path(cli: &Cli, model: Option<&PathBuf>) -> Result<PathBuf, Failure> {
    absolute(model.unwrap_or(&cli.workspace))
}

fn cell(cli: &Cli) -> Result<CellSpec, Failure> {
    let cfg = load_config(cli)?;
    Ok(CellSpec {
        lattice: cfg.lattice,
        mesh: cfg.mesh,
    })
}

async fn run(cli: &Cli, client: &Client) -> Result<bool, Failure> {
    match &cli.command {
        Command::Sample { n, dims, method, out } => {
            let req = SampleRequest {
                n: *n,
                dims: *dims,
                seed: cli.seed.unwrap_or(1),
                method: match method {
                    Method::Lhs => SamplingMethod::Lhs,
                    Method::Uniform => SamplingMethod::UniformIid,
                },
                out: out.as_deref().map(absolute).transpose()?,
            };
            let resp = client.sample(&req).await?;
            print(&resp)?;
        }
        Command::Snapshots { usage } => {
            let usage = usage.map(|u| match u {
                Use::TrainRb => DatasetUse::TrainRb,
                Use::Validation => DatasetUse::Validation,
                Use::Test => DatasetUse::Test,
            });
            offline(cli, client, Stage::Snapshots, usage).await?;
        }
        Command::Pod => offline(cli, client, Stage::Pod, None).await?,
        Command::Train => offline(cli, client, Stage::Train, None).await?,
        Command::Offline => offline(cli, client, Stage::All, None).await?,
        Command::Predict {
            model,
            radii,
            strain,
            n_rb,
            out,
        } => {
            let strain: [f64; 3] = strain
                .as_slice()
                .try_into()
                .map_err(|_| Failure("--strain takes three values e11,e22,2e12".into()))?;
            let req = PredictRequest {
                bundle: absolute(model)?,
                radii: radii.clone(),
                strain,
                n_rb: *n_rb,
                out: out.as_deref().map(absolute).transpose()?,
            };
            print(&client.predict(&req).await?)?;
        }
        Command::Tangent { model, radii, bc } => {
            let req = TangentRequest {
                bundle: model.as_deref().map(absolute).transpose()?,
                cell: if model.is_some() { None } else { Some(cell(cli)?) },
                radii: radii.clone(),
                provider: (*bc).into(),
            };
            print(&client.tangent(&req).await?)?;
        }
        Command::Fe2 {
            geometry,
            bc,
            model,
            out,
            divisions,
            ny,
        } => {
            let provider: TangentProvider = (*bc).into();
            let bundle = match (model, provider) {
                (Some(m), _) => Some(absolute(m)?),
                (None, TangentProvider::Deepbnd) => Some(bundle_path(cli, None)?),
                (None, _) => None,
            };
            let geometry = match geometry {
                Macro::Cook => MacroKind::Cook,
                Macro::Bar => MacroKind::Bar,
            };
            let req = Fe2Request {
                geometry,
                provider,
                cell: if bundle.is_none() { Some(cell(cli)?) } else { None },
                bundle,
                seed: cli.seed.unwrap_or(1),
                divisions: divisions.unwrap_or(match geometry {
                    MacroKind::Cook => 4,
                    MacroKind::Bar => 1,
                }),
                ny: *ny,
                traction: None,
                out: out.as_deref().map(absolute).transpose()?,
                workers: cli.workers,
            };
            print(&client.fe2(&req).await?)?;
        }
        Command::Dns {
            ny,
            divisions_per_block,
            out,
        } => {
            let defaults = DnsConfig::default();
            let req = DnsRequest {
                config: DnsConfig {
                    ny: *ny,
                    seed: cli.seed.unwrap_or(defaults.seed),
                    divisions_per_block: divisions_per_block.unwrap_or(defaults.divisions_per_block),
                    ..defaults
                },
                lattice: load_config(cli)?.lattice,
                out: out.as_deref().map(absolute).transpose()?,
                workers: cli.workers,
            };
            print(&client.dns(&req).await?)?;
        }
        Command::Report { model, out } => {
            let req = ReportRequest {
                config: load_config(cli)?,
                bundle: bundle_path(cli, model.as_ref())?,
                out: absolute(out)?,
                workers: cli.workers,
            };
            print(&client.report(&req).await?)?;
        }
        Command::Validate => {
            let report = client
                .validate(&ValidateRequest {
                    workspace: absolute(&cli.workspace)?,
                })
                .await?;
            for c in &report.checks {
                println!("{} {}: {}", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(report.ok());
        }
        Command::Serve { .. } => unreachable!("handled before a client exists"),
    }
    Ok(true)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();

    if let Command::Serve { addr } = &cli.command {
        return match deepbnd_server::serve(addr).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }

    let local = match &cli.server {
        Some(_) => None,
        None => match deepbnd_server::spawn("127.0.0.1:0").await {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: cannot start local service: {e}");
                return ExitCode::FAILURE;
            }
        },
    };
    let url = cli
        .server
        .clone()
        .or_else(|| local.as_ref().map(|s| s.url()))
        .expect("a server url");
    let result = run(&cli, &Client::new(url)).await;
    if let Some(s) = local {
        let _ = s.stop().await;
    }
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
