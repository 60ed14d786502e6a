//! `hubforge` command line.
//!
//! Exit codes: 0 success, 1 validation or benchmark failure, 2 I/O or config
//! error, 3 model not found, 4 environment conflict (port in use, driver
//! unavailable, duplicate registration).

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{run_benchmark, BenchError, BenchOptions, DatasetManifest, Metric};
use crate::gateway::{registry_router, FetchPolicy, GatewayOptions, GatewayState, PORT_ENV};
use crate::registry::{load_index, save_index, ModelFilter, RegistryEntry, RegistryError, RegistryIndex, REGISTRY_ENV};
use crate::runtime::{plan_images, start_model, DriverKind, EnvManifest, ModelInstance, PlanOptions, RuntimeError, StartOptions};
use crate::template::{list_files, list_samples, Template, ENV_RECIPE};
use crate::validator::{check_template, validate, ValidationOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NOT_FOUND: i32 = 3;
pub const EXIT_CONFLICT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hubforge", version, about = "Package, register, serve, and benchmark inference models")]
pub struct Cli {
    /// Registry index file.
    #[arg(long, global = true, env = REGISTRY_ENV, default_value = "registry.json")]
    pub registry: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DriverArg {
    Process,
    Engine,
}

impl From<DriverArg> for DriverKind {
    fn from(d: DriverArg) -> Self {
        match d {
            DriverArg::Process => DriverKind::Process,
            DriverArg::Engine => DriverKind::Engine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Topk,
    Dice,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List registered models.
    List {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        area: Option<String>,
        #[arg(long = "data-type")]
        data_type: Option<String>,
    },
    /// Print a model's metadata and publication.
    Info {
        name: String,
        /// Print the full config document.
        #[arg(long)]
        raw: bool,
    },
    /// Start a model and serve it until interrupted.
    Run {
        name: String,
        #[arg(short = 'p', long = "port")]
        port: Option<u16>,
        /// Host directory mounted read-only at /data.
        #[arg(short = 'm', long)]
        mount: Option<PathBuf>,
        #[command(flatten)]
        launch: LaunchArgs,
    },
    /// Run the contribution checks on a template directory.
    Validate {
        template: PathBuf,
        /// Write a JSON report to PATH, or stdout when PATH is omitted or `-`.
        #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
        report: Option<String>,
        /// Skip the live endpoint checks.
        #[arg(long = "static-only")]
        static_only: bool,
        #[command(flatten)]
        launch: LaunchArgs,
    },
    /// Validate a template and add it to the registry.
    Add {
        template: PathBuf,
        /// Registry name; defaults to the config id.
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        launch: LaunchArgs,
    },
    /// Score a model or a running gateway against a manifest.
    Benchmark {
        /// Registered model name or gateway base URL.
        target: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "topk")]
        metric: MetricArg,
        #[arg(short = 'k', long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Write the JSON report to PATH.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        #[command(flatten)]
        launch: LaunchArgs,
    },
    /// Print the image stack for a template.
    Plan {
        template: PathBuf,
        /// Add a self-contained deployment layer.
        #[arg(long)]
        deployment: bool,
        #[arg(long = "image-registry")]
        image_registry: Option<String>,
    },
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Serve one template directly (used by the process driver).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct LaunchArgs {
    #[arg(long, value_enum, default_value = "process")]
    pub driver: DriverArg,
    /// Seconds to wait for the model to become ready.
    #[arg(long = "ready-timeout", default_value_t = 60)]
    pub ready_timeout: u64,
}

#[derive(Debug, Subcommand)]
pub enum RegistryCommand {
    /// Serve the read-only registry view.
    Serve {
        #[arg(short = 'p', long, default_value_t = 8000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub template: PathBuf,
    #[arg(short = 'p', long, env = PORT_ENV, default_value_t = crate::gateway::CONTAINER_PORT)]
    pub port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    pub bind: IpAddr,
    /// Directory for stored artifacts.
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Host glob allowed for `fileurl` fetches even when private; repeatable.
    #[arg(long = "fetch-allow")]
    pub fetch_allow: Vec<String>,
    #[arg(long = "upload-cap", default_value_t = crate::gateway::DEFAULT_UPLOAD_CAP)]
    pub upload_cap: usize,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

type Outcome = Result<i32, Failure>;

impl From<RegistryError> for Failure {
    fn from(e: RegistryError) -> Self {
        let code = match &e {
            RegistryError::NotFound(_) => EXIT_NOT_FOUND,
            RegistryError::DuplicateName(_) => EXIT_CONFLICT,
            RegistryError::GateNotPassed(_) => EXIT_FAILED,
            RegistryError::CorruptIndex { .. } | RegistryError::Io { .. } => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<RuntimeError> for Failure {
    fn from(e: RuntimeError) -> Self {
        let code = match &e {
            RuntimeError::PortInUse(_) | RuntimeError::DriverUnavailable(_) => EXIT_CONFLICT,
            RuntimeError::StartFailed(_) | RuntimeError::Timeout { .. } => EXIT_FAILED,
            _ => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        let code = match &e {
            BenchError::TooManyFailures { .. } | BenchError::NotReady(_) | BenchError::Metric(_) => EXIT_FAILED,
            _ => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> Outcome {
    let registry = cli.registry;
    match cli.command {
        Command::List { task, area, data_type } => cmd_list(&registry, ModelFilter { task, application_area: area, data_type }),
        Command::Info { name, raw } => cmd_info(&registry, &name, raw),
        Command::Run { name, port, mount, launch } => cmd_run(&registry, &name, port, mount, &launch),
        Command::Validate { template, report, static_only, launch } => cmd_validate(&template, report.as_deref(), static_only, &launch),
        Command::Add { template, name, launch } => cmd_add(&registry, &template, name, &launch),
        Command::Benchmark { target, manifest, metric, k, parallel, report, launch } => {
            let metric = match metric {
                MetricArg::Topk => Metric::TopK { k },
                MetricArg::Dice => Metric::Dice,
            };
            cmd_benchmark(&registry, &target, &manifest, metric, parallel, report.as_deref(), &launch)
        }
        Command::Plan { template, deployment, image_registry } => cmd_plan(&template, deployment, image_registry),
        Command::Registry(RegistryCommand::Serve { port, bind }) => cmd_registry_serve(&registry, SocketAddr::new(bind, port)),
        Command::Serve(args) => cmd_serve(args),
    }
}

fn lookup<'a>(index: &'a RegistryIndex, name: &str) -> Result<&'a RegistryEntry, Failure> {
    index.get_entry(name).map_err(|e| {
        let near = index.nearest_names(name, 3);
        let hint = if near.is_empty() { String::new() } else { format!("; did you mean: {}", near.join(", ")) };
        Failure::new(EXIT_NOT_FOUND, format!("{e}{hint}"))
    })
}

fn cmd_list(registry: &Path, filter: ModelFilter) -> Outcome {
    let index = load_index(registry)?;
    let rows = index.list_models(&filter);
    let header = ["NAME", "TASK", "AREA", "DATA TYPE"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|m| [m.name.clone(), m.meta.task.clone(), m.meta.application_area.clone(), m.meta.data_type.clone()])
        .collect();
    let widths: Vec<usize> =
        (0..4).map(|c| cells.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0)).collect();
    let fmt = |r: &[&str]| {
        r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    println!("{}", fmt(&header));
    for r in &cells {
        println!("{}", fmt(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    Ok(EXIT_OK)
}

fn cmd_info(registry: &Path, name: &str, raw: bool) -> Outcome {
    let index = load_index(registry)?;
    let entry = lookup(&index, name)?;
    let cfg = &entry.config;
    if raw {
        println!("{}", cfg.to_json_pretty());
        return Ok(EXIT_OK);
    }
    let p = &cfg.publication;
    println!("name:             {}", entry.name);
    println!("id:               {}", cfg.id);
    println!("title:            {}", cfg.meta.name);
    println!("task:             {}", cfg.meta.task);
    println!("application area: {}", cfg.meta.application_area);
    println!("data type:        {}", cfg.meta.data_type);
    println!("publication:      {} ({})", p.title, p.year);
    println!("authors:          {}", p.authors.join(", "));
    println!("source:           {}", p.source);
    println!("url:              {}", p.url);
    if let Some(doi) = &p.doi {
        println!("doi:              {doi}");
    }
    println!("license:          {}", cfg.legal.model_license);
    println!("config digest:    {}", entry.config_digest);
    for r in &entry.image_refs {
        println!("image:            {r}");
    }
    Ok(EXIT_OK)
}

fn launch(entry: &RegistryEntry, opts: &StartOptions, launch: &LaunchArgs) -> Result<ModelInstance, Failure> {
    let driver = DriverKind::from(launch.driver).connect()?;
    let mut instance = start_model(entry, opts, driver)?;
    instance.await_ready(Duration::from_secs(launch.ready_timeout))?;
    Ok(instance)
}

fn cmd_run(registry: &Path, name: &str, port: Option<u16>, mount: Option<PathBuf>, args: &LaunchArgs) -> Outcome {
    let index = load_index(registry)?;
    let entry = lookup(&index, name)?;
    let (tx, rx) = std::sync::mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| Failure::new(EXIT_IO, format!("cannot install interrupt handler: {e}")))?;
    let mut instance = launch(entry, &StartOptions { host_port: port, data_mount: mount }, args)?;
    println!("http://localhost:{}", instance.host_port());
    let _ = std::io::stdout().flush();
    let _ = rx.recv();
    instance.stop()?;
    Ok(EXIT_OK)
}

fn write_report(dest: &str, body: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(body).expect("report serializes");
    if dest == "-" {
        println!("{text}");
        return Ok(());
    }
    fs::write(dest, text).map_err(|e| Failure::new(EXIT_IO, format!("cannot write report {dest}: {e}")))
}

fn run_validation(template: &Path, static_only: bool, args: &LaunchArgs) -> Result<ValidationOutcome, Failure> {
    if !template.is_dir() {
        return Err(Failure::new(EXIT_IO, format!("template directory {} does not exist", template.display())));
    }
    if static_only {
        return Ok(check_template(template));
    }
    let driver = DriverKind::from(args.driver).connect()?;
    Ok(validate(template, Some(driver), Duration::from_secs(args.ready_timeout)))
}

fn cmd_validate(template: &Path, report: Option<&str>, static_only: bool, args: &LaunchArgs) -> Outcome {
    let outcome = run_validation(template, static_only, args)?;
    match report {
        Some(dest) => write_report(dest, &outcome.to_report())?,
        None => print!("{}", outcome.render()),
    }
    if report != Some("-") {
        println!("{}", if outcome.passed() { "PASSED" } else { "FAILED" });
    }
    Ok(if outcome.passed() { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_add(registry: &Path, dir: &Path, name: Option<String>, args: &LaunchArgs) -> Outcome {
    let mut index = load_index(registry)?;
    let template = Template::open(dir).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    let name = name.unwrap_or_else(|| template.config.id.clone());
    if index.entries.contains_key(&name) {
        return Err(RegistryError::DuplicateName(name).into());
    }
    let outcome = run_validation(dir, false, args)?;
    print!("{}", outcome.render());
    let source = dir.canonicalize().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    let mut entry = RegistryEntry::new(name.clone(), source.display().to_string(), template.config.clone());
    if let Some(env) = fs::read_to_string(dir.join(ENV_RECIPE)).ok().and_then(|r| EnvManifest::from_recipe(&r)) {
        entry.image_refs = plan_images(&template.config, &env, &PlanOptions::default()).refs();
    }
    entry.sample_locators = list_samples(dir).iter().map(|p| p.display().to_string()).collect();
    index.add_entry(entry, Some(&outcome))?;
    save_index(&index, registry)?;
    println!("added {name} to {}", registry.display());
    Ok(EXIT_OK)
}

fn cmd_benchmark(
    registry: &Path,
    target: &str,
    manifest: &Path,
    metric: Metric,
    parallel: usize,
    report: Option<&Path>,
    args: &LaunchArgs,
) -> Outcome {
    let manifest = DatasetManifest::load(manifest)?;
    let opts = BenchOptions { metric, parallel, ..Default::default() };
    let result = if target.starts_with("http://") || target.starts_with("https://") {
        run_benchmark(target, &manifest, &opts)
    } else {
        let index = load_index(registry)?;
        let entry = lookup(&index, target)?;
        let mut instance = launch(entry, &StartOptions::default(), args)?;
        let r = run_benchmark(&instance.base_url(), &manifest, &opts);
        instance.stop()?;
        r
    };
    let report_doc = result?;
    print!("{}", report_doc.render_table());
    for item in report_doc.per_item.iter().filter(|i| i.error.is_some()) {
        eprintln!("item {} failed: {}", item.input, item.error.as_deref().unwrap_or_default());
    }
    if let Some(path) = report {
        write_report(&path.display().to_string(), &serde_json::to_value(&report_doc).expect("report serializes"))?;
    }
    Ok(EXIT_OK)
}

fn cmd_plan(dir: &Path, deployment: bool, image_registry: Option<String>) -> Outcome {
    let template = Template::open(dir).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    let recipe = fs::read_to_string(dir.join(ENV_RECIPE)).map_err(|e| Failure::new(EXIT_IO, format!("{ENV_RECIPE}: {e}")))?;
    let env = EnvManifest::from_recipe(&recipe).ok_or_else(|| Failure::new(EXIT_IO, format!("{ENV_RECIPE} has no FROM")))?;
    let deployment_files = if deployment {
        Some(list_files(dir).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?)
    } else {
        None
    };
    let plan = plan_images(&template.config, &env, &PlanOptions { registry: image_registry, deployment_files });
    for layer in &plan.layers {
        println!("{:<10}  {}", layer.kind.as_str(), layer.name);
    }
    Ok(EXIT_OK)
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot start runtime: {e}")))
}

fn bind_failure(addr: SocketAddr, e: std::io::Error) -> Failure {
    let code = if e.kind() == std::io::ErrorKind::AddrInUse { EXIT_CONFLICT } else { EXIT_IO };
    Failure::new(code, format!("cannot listen on {addr}: {e}"))
}

fn cmd_registry_serve(registry: &Path, addr: SocketAddr) -> Outcome {
    load_index(registry)?;
    let path = registry.to_path_buf();
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| bind_failure(addr, e))?;
        println!("registry at http://{}/registry/models", listener.local_addr().map_err(|e| bind_failure(addr, e))?);
        axum::serve(listener, registry_router(path))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::new(EXIT_IO, e.to_string()))
    })?;
    Ok(EXIT_OK)
}

fn cmd_serve(args: ServeArgs) -> Outcome {
    let template = Template::open(&args.template).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    let fetch_policy = FetchPolicy::new(&args.fetch_allow).map_err(|e| Failure::new(EXIT_IO, format!("bad --fetch-allow: {e}")))?;
    let mut options = GatewayOptions { upload_cap: args.upload_cap, fetch_policy, data_dir: args.data, ..Default::default() };
    if let Some(dir) = args.artifacts {
        options.artifact_dir = dir;
    }
    let addr = SocketAddr::new(args.bind, args.port);
    let state = GatewayState::new(template, options);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| bind_failure(addr, e))?;
        crate::gateway::serve_listener(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Failure::new(EXIT_IO, e.to_string()))
    })?;
    Ok(EXIT_OK)
}

/// Entry point of the `hubforge` binary.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["hubforge", "list", "--bogus"]), EXIT_IO);
        assert_eq!(run(["hubforge", "--help"]), EXIT_OK);
    }

    #[test]
    fn corrupt_registry_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        fs::write(&path, "{not json").unwrap();
        assert_eq!(run(["hubforge", "--registry", path.to_str().unwrap(), "list"]), EXIT_IO);
        assert_eq!(run(["hubforge", "--registry", dir.path().join("absent.json").to_str().unwrap(), "info", "x"]), EXIT_NOT_FOUND);
    }
}
