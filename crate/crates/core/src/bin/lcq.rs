use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use lcq::bench::{run_bench, BenchMode};
use lcq::client::{HttpSource, TrsSource};
use lcq::queries::{DirectQuery, Lcq};
use lcq::system::{RunningSystem, SystemConfig};
use lcq::toolchain::{resource_iri, ResourceKind};

const USAGE_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "lcq", version, about = "Lifecycle queries over a linked data warehouse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the tool services and the warehouse, then run until Ctrl-C.
    Up {
        #[arg(long)]
        config: Option<PathBuf>,
        /// direct | poll | push | push-with-safety-poll
        #[arg(long)]
        mode: Option<BenchMode>,
        #[arg(long)]
        poll_period: Option<u64>,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run a canned lifecycle query (lcq1, lcq2, lcq3) or a SPARQL file.
    Query {
        #[arg(required_unless_present = "file")]
        name: Option<String>,
        #[arg(long, conflicts_with = "name")]
        file: Option<PathBuf>,
        /// Change request for lcq2: an IRI or a short id such as CR1.
        #[arg(long)]
        cr: Option<String>,
        /// Requirement for lcq2: an IRI or a short id such as R1.
        #[arg(long)]
        req: Option<String>,
        #[arg(long, default_value = "http://127.0.0.1:7070")]
        endpoint: String,
        /// `direct` crawls the services instead of asking the warehouse.
        #[arg(long)]
        mode: Option<String>,
        /// Service base URL for direct mode, as `id=url`. Repeatable.
        #[arg(long = "service", value_parser = parse_service)]
        services: Vec<(String, String)>,
        /// Read service addresses for direct mode from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the benchmark across modes and print the report.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated modes, overriding the config.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<BenchMode>,
        #[arg(long)]
        poll_period: Option<u64>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the warehouse metrics as JSON.
    DumpMetrics {
        #[arg(long, default_value = "http://127.0.0.1:7070")]
        endpoint: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_service(s: &str) -> Result<(String, String), String> {
    let (id, url) = s.split_once('=').ok_or("expected id=url")?;
    Ok((id.to_owned(), url.trim_end_matches('/').to_owned()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE_ERROR)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(path: Option<&PathBuf>) -> Result<SystemConfig, Failure> {
    match path {
        Some(p) => SystemConfig::load(p).map_err(usage),
        None => Ok(SystemConfig::default()),
    }
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Up {
            config,
            mode,
            poll_period,
            listen,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.mode = mode.unwrap_or(cfg.mode);
            cfg.poll_period_ms = poll_period.unwrap_or(cfg.poll_period_ms);
            cfg.listen = listen.unwrap_or(cfg.listen);
            cfg.validate().map_err(usage)?;
            let system = RunningSystem::up(&cfg).map_err(runtime)?;
            system.health_check().map_err(runtime)?;
            for server in system.toolchain().servers() {
                println!("{:<8} {}", server.id(), system.service_url(server.id()).unwrap_or_default());
            }
            match system.warehouse_url() {
                Some(url) => println!("warehouse {url} ({} mode)", cfg.mode),
                None => println!("direct mode: no warehouse"),
            }
            println!("healthy; Ctrl-C to stop");
            tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(runtime)?
                .block_on(tokio::signal::ctrl_c())
                .map_err(runtime)?;
            system.shutdown().map_err(runtime)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Query {
            name,
            file,
            cr,
            req,
            endpoint,
            mode,
            services,
            config,
        } => {
            let direct = match mode.as_deref() {
                None | Some("warehouse") => false,
                Some("direct") => true,
                Some(other) => return Err(usage(format!("unknown query mode {other:?}"))),
            };
            let cr = cr.map(|s| expand(ResourceKind::ChangeRequest, &s)).transpose()?;
            let req = req.map(|s| expand(ResourceKind::Requirement, &s)).transpose()?;
            let canned = name
                .map(|n| Lcq::parse(&n, cr.as_deref(), req.as_deref()).map_err(usage))
                .transpose()?;
            if direct {
                let Some(q) = canned else {
                    return Err(usage("direct mode runs only the canned queries"));
                };
                let mut urls: BTreeMap<String, String> = match &config {
                    Some(p) => {
                        let cfg = SystemConfig::load(p).map_err(usage)?;
                        cfg.services.iter().map(|(id, a)| (id.clone(), format!("http://{a}"))).collect()
                    }
                    None => BTreeMap::new(),
                };
                urls.extend(services);
                let sources = urls
                    .into_iter()
                    .map(|(id, url)| {
                        let s: Arc<dyn TrsSource> = Arc::new(HttpSource::new(&id, url));
                        (id, s)
                    })
                    .collect();
                let table = DirectQuery::new(sources).run(&q).map_err(runtime)?;
                println!("{}", table.to_json());
                return Ok(ExitCode::SUCCESS);
            }
            let text = match (canned, file) {
                (Some(q), _) => q.sparql(),
                (None, Some(path)) => std::fs::read_to_string(&path)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?,
                (None, None) => unreachable!("clap requires a name or --file"),
            };
            let mut resp = agent()
                .post(&format!("{}/sparql", endpoint.trim_end_matches('/')))
                .header("content-type", "application/sparql-query")
                .send(text.as_str())
                .map_err(runtime)?;
            let status = resp.status().as_u16();
            let body = resp.body_mut().read_to_string().map_err(runtime)?;
            if status == 400 {
                return Err(usage(body.trim()));
            }
            if status != 200 {
                return Err(runtime(format!("warehouse answered HTTP {status}: {}", body.trim())));
            }
            println!("{}", body.trim_end());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            config,
            modes,
            poll_period,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if !modes.is_empty() {
                cfg.bench.modes = modes;
            }
            cfg.poll_period_ms = poll_period.unwrap_or(cfg.poll_period_ms);
            cfg.validate().map_err(usage)?;
            let report = run_bench(&cfg.bench_config()).map_err(runtime)?;
            print!("{}", report.to_table());
            if let Some(path) = out.or(cfg.bench.report.clone()) {
                std::fs::write(&path, report.to_json()).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            }
            Ok(if report.all_converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::DumpMetrics { endpoint, out } => {
            let mut resp = agent()
                .get(&format!("{}/metrics", endpoint.trim_end_matches('/')))
                .call()
                .map_err(runtime)?;
            let body = resp.body_mut().read_to_string().map_err(runtime)?;
            match out {
                Some(path) => std::fs::write(&path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))?,
                None => println!("{}", body.trim_end()),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

/// Short ids like `CR1` name toolchain resources; anything with a scheme is
/// taken as an IRI.
fn expand(kind: ResourceKind, s: &str) -> Result<String, Failure> {
    if s.contains(':') {
        return Ok(s.to_owned());
    }
    resource_iri(kind, s).map(|i| i.as_str().to_owned()).map_err(usage)
}
