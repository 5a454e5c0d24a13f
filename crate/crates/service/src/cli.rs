//! `lensflow` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use lensflow_core::dsl::serialize_proposals;
use lensflow_core::planning::{evaluate_backend, load_corpus};
use lensflow_core::prompting::PlannerBackend;
use lensflow_core::registry::{ModelDescriptor, Registry};
use serde::Deserialize;

use crate::api::{image_id, ImageSpec};
use crate::config::ServiceConfig;
use crate::http::{App, Server};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lensflow", version, about = "Plan and run vision-model workflows from natural-language requests")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Registry file; overrides the configured one.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the selected proposal set for a request.
    Plan {
        text: String,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Plan and execute a request over images.
    Run {
        #[arg(long)]
        text: String,
        #[arg(long = "image", required = true, num_args = 1..)]
        images: Vec<String>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Verification threshold.
        #[arg(long)]
        tau: Option<f64>,
        /// Retries per model.
        #[arg(long)]
        retries: Option<u32>,
        #[arg(long)]
        parallel: Option<usize>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect or extend the model registry.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
    /// Score a planner backend against a JSONL corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Configured planner id; the rule-based planner by default.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Serve the HTTP interface.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModelsAction {
    List,
    /// Register descriptors from a file holding one descriptor or
    /// `{"models": [...]}`.
    Register {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Deserialize)]
struct DescriptorFile {
    models: Vec<ModelDescriptor>,
}

type Outcome = Result<(), String>;

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<ServiceConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => ServiceConfig::load(path).map_err(|e| e.to_string())?,
        None => ServiceConfig::default(),
    };
    if let Some(registry) = &cli.registry {
        cfg.registry = Some(registry.clone());
    }
    Ok(cfg)
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    writeln!(out, "{text}").map_err(|e| e.to_string())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Outcome {
    let cfg = load_config(&cli)?;
    let registry = Arc::new(cfg.load_registry().map_err(|e| e.to_string())?);
    match cli.command {
        Command::Plan { text, lambda } => {
            let engine = cfg.build_engine(registry).map_err(|e| e.to_string())?;
            let plan = engine
                .plan(&text, lambda.unwrap_or(cfg.engine.lambda))
                .map_err(|e| e.to_string())?;
            writeln!(out, "{}", serialize_proposals(&plan.selected)).map_err(|e| e.to_string())
        }
        Command::Run {
            text,
            images,
            lambda,
            tau,
            retries,
            parallel,
            out: run_dir,
        } => {
            let mut engine_cfg = cfg.engine.clone();
            if let Some(v) = lambda {
                engine_cfg.lambda = v;
            }
            if let Some(v) = tau {
                engine_cfg.verify_threshold = v;
            }
            if let Some(v) = retries {
                engine_cfg.retry_budget = v;
            }
            if let Some(v) = parallel {
                engine_cfg.max_parallel = v;
            }
            if let Some(dir) = run_dir {
                engine_cfg.run_dir = dir;
            }
            let refs = images
                .iter()
                .enumerate()
                .map(|(i, p)| ImageSpec::Path(p.clone()).resolve(image_id(i)))
                .collect::<Result<Vec<_>, _>>()?;
            let engine = cfg.build_engine(registry).map_err(|e| e.to_string())?;
            let record = engine
                .run_request(&text, &refs, &engine_cfg)
                .map_err(|e| e.to_string())?;
            let dir = engine_cfg.run_dir.join(&record.run_id).join("artifacts");
            let artifacts: Vec<String> = record
                .artifacts
                .iter()
                .map(|a| dir.join(&a.name).display().to_string())
                .collect();
            print_json(
                out,
                &serde_json::json!({
                    "run_id": record.run_id,
                    "summary": record.summary,
                    "artifacts": artifacts,
                }),
            )
        }
        Command::Models { action } => match action {
            ModelsAction::List => print_json(out, &registry.list()),
            ModelsAction::Register { file } => register(&cfg, &registry, &file, out),
        },
        Command::Eval {
            corpus,
            backend,
            lambda,
        } => {
            let items = load_corpus(&corpus).map_err(|e| e.to_string())?;
            let backend = match backend.as_deref() {
                None | Some("rule-based") => PlannerBackend::rule_based(),
                Some(id) => cfg
                    .planner_backends()
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .find(|b| b.id() == id)
                    .ok_or_else(|| format!("no configured planner `{id}`"))?,
            };
            let report = evaluate_backend(
                &backend,
                &items,
                &cfg.prompt,
                lambda.unwrap_or(cfg.engine.lambda),
            )
            .map_err(|e| e.to_string())?;
            print_json(out, &report)
        }
        Command::Serve {
            port,
            host,
            workers,
        } => {
            let engine = cfg.build_engine(registry).map_err(|e| e.to_string())?;
            let app = App::new(engine, cfg.engine.clone())
                .map_err(|e| e.to_string())?
                .with_registry_file(cfg.registry.clone());
            let server = Server::start(Arc::new(app), &format!("{host}:{port}"), workers)
                .map_err(|e| e.to_string())?;
            writeln!(out, "listening on http://{}", server.addr()).map_err(|e| e.to_string())?;
            out.flush().map_err(|e| e.to_string())?;
            server.join();
            Ok(())
        }
    }
}

fn register(cfg: &ServiceConfig, registry: &Registry, file: &Path, out: &mut dyn Write) -> Outcome {
    let path = cfg
        .registry
        .as_ref()
        .ok_or("no registry file configured; pass --registry or set `registry` in the config")?;
    let text = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let bad = |e: serde_json::Error| format!("{}: {e}", file.display());
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let descriptors = if value.get("models").is_some() {
        serde_json::from_value::<DescriptorFile>(value).map_err(bad)?.models
    } else {
        vec![serde_json::from_value::<ModelDescriptor>(value).map_err(bad)?]
    };
    for desc in descriptors {
        let id = desc.id.clone();
        registry.register(desc).map_err(|e| e.to_string())?;
        writeln!(out, "registered {id}").map_err(|e| e.to_string())?;
    }
    registry.save(path).map_err(|e| e.to_string())
}
