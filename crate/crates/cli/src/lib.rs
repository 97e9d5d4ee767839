//! The `ncq` command-line runner.
//!
//! Every subcommand reads one configuration (defaults, then `--config`, then
//! `--set` overrides), writes its artifacts into the output directory and
//! finishes with `manifest.json` plus the resolved `config.toml`, from which
//! the run can be repeated bit for bit.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use ncq::experiments;
use ncq::export;
use ncq::observables;
use ncq::oracle;
use ncq::sampling;
use ncq::systems;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{Config, FieldError};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NCQ_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "ncq-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_DIVERGENT: i32 = 2;
pub const EXIT_BATTERY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ncq", version, about = "Path-space densities from delta sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; built-in defaults fill anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a dotted key, e.g. `--set kernel.m_delta=4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleFormat {
    Csv,
    Binary,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the catalog of classical systems.
    Systems,
    /// Draw a trajectory batch.
    Sample {
        #[arg(long, value_enum, default_value = "csv")]
        format: SampleFormat,
    },
    /// Estimate one expectation value.
    Expect,
    /// Tabulate a single-time marginal and locate its nodes.
    NodeScan,
    /// Sweep `m_delta` towards the classical limit.
    LimitSweep,
    /// Repeat a run over refined time grids.
    GridStudy,
    /// Compare Monte Carlo estimates with the lattice and quadrature oracles.
    OracleCheck,
    /// Run the regression battery of closed-form results.
    Battery,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Systems => "systems",
            Self::Sample { .. } => "sample",
            Self::Expect => "expect",
            Self::NodeScan => "node-scan",
            Self::LimitSweep => "limit-sweep",
            Self::GridStudy => "grid-study",
            Self::OracleCheck => "oracle-check",
            Self::Battery => "battery",
        }
    }
}

/// A failed run with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: format!("invalid configuration: {e}"),
        }
    }
}

impl From<ncq::Error> for CliError {
    fn from(e: ncq::Error) -> Self {
        let code = match e {
            ncq::Error::Divergent { .. } => EXIT_DIVERGENT,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: format!("i/o error: {e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Collects artifacts written during a run.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs the command and returns its exit status. Human-readable summaries
/// go to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> CliResult<i32> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError {
            code: EXIT_VALIDATION,
            message: format!("cannot read config {}: {e}", p.display()),
        })?,
        None => String::new(),
    };
    let cfg = Config::load(&text, &cli.overrides)?;
    if let Some(n) = cli.threads {
        // A pool can only be installed once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir)?;
    let mut art = Artifacts { dir, files: Vec::new() };
    let start = Instant::now();
    let (code, digest) = dispatch(&cli.command, &cfg, &mut art, stdout)?;
    let wall = start.elapsed().as_secs_f64();
    write_manifest(&cli.command, &cfg, &art, digest, wall, code)?;
    Ok(code)
}

fn write_manifest(
    command: &Command,
    cfg: &Config,
    art: &Artifacts,
    run_digest: Option<String>,
    wall: f64,
    code: i32,
) -> CliResult<()> {
    let resolved = cfg.to_toml();
    fs::write(art.dir.join("config.toml"), &resolved)?;
    let mut outputs = serde_json::Map::new();
    for name in &art.files {
        let bytes = fs::read(art.dir.join(name))?;
        outputs.insert(name.clone(), json!(sha256_hex(&bytes)));
    }
    let manifest = json!({
        "tool": "ncq",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": command.name(),
        "seed": cfg.sampler.seed,
        "config": serde_json::to_value(cfg).map_err(std::io::Error::other)?,
        "config_digest": sha256_hex(resolved.as_bytes()),
        "run_digest": run_digest,
        "outputs": outputs,
        "exit_code": code,
        "wall_time_seconds": wall,
    });
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(art.dir.join("manifest.json"), text)?;
    Ok(())
}

/// Refuses kernel/observable pairs whose expectation does not exist before
/// any sampling starts.
fn check_modes(density: &ncq::density::PathDensity, obs: &ncq::observables::Observable) -> CliResult<()> {
    observables::check_finite(density, obs)?;
    Ok(())
}

fn dispatch(
    command: &Command,
    cfg: &Config,
    art: &mut Artifacts,
    out: &mut dyn Write,
) -> CliResult<(i32, Option<String>)> {
    match command {
        Command::Systems => {
            let catalog = systems::catalog();
            art.json("systems.json", &catalog)?;
            for e in &catalog {
                writeln!(out, "{:<24} dim={} constants={} params=[{}]  {}", e.id, e.dimension, e.n_constants, e.params.join(", "), e.solution)?;
            }
            Ok((EXIT_OK, None))
        }
        Command::Sample { format } => {
            let density = cfg.density()?;
            let sampler = cfg.sampler()?;
            let digest = sha256_hex(format!("{}|{sampler:?}", density.describe()).as_bytes());
            let batch = sampling::sample(&density, &sampler)?;
            match format {
                SampleFormat::Csv => export::write_samples_csv(art.create("samples.csv")?, &batch)?,
                SampleFormat::Binary => {
                    export::write_samples_binary(art.create("samples.ncqb")?, &batch, sampler.seed, &digest)?
                }
            }
            art.json("diagnostics.json", &batch.diagnostics)?;
            writeln!(out, "{} trajectories written to {}", batch.len(), art.dir.display())?;
            Ok((EXIT_OK, Some(digest)))
        }
        Command::Expect => {
            let density = cfg.density()?;
            let obs = cfg.observable()?;
            check_modes(&density, &obs)?;
            let r = observables::expectation(&density, &obs, &cfg.sampler()?)?;
            art.json("expectation.json", &r)?;
            writeln!(out, "{} = {} ± {} (n={}, ess={:.1})", obs.name(), r.estimate, r.std_error, r.n_samples, r.ess)?;
            Ok((EXIT_OK, Some(r.config_digest)))
        }
        Command::NodeScan => {
            let density = cfg.density()?;
            let i = cfg.scan_index()?;
            let range = cfg.scan_range(&density, i)?;
            let scan = observables::node_scan(&density, i, range, cfg.scan.points)?;
            export::write_node_scan_csv(art.create("node_scan.csv")?, &scan)?;
            let centre = density.classical_spread(i, 0)?.0;
            art.json(
                "node_scan.json",
                &json!({
                    "t_index": i,
                    "time": density.grid().slice_time(i),
                    "classical_position": centre,
                    "max_density": scan.max_density,
                    "nodes": scan.nodes,
                    "node_offsets": scan.nodes.iter().map(|x| x - centre).collect::<Vec<_>>(),
                }),
            )?;
            writeln!(out, "{} nodes found at slice {i}", scan.nodes.len())?;
            Ok((EXIT_OK, None))
        }
        Command::LimitSweep => {
            let density = cfg.density()?;
            let obs = cfg.observable()?;
            let family = cfg.sweep_family()?;
            for &m in &cfg.sweep.m_values {
                let k = experiments::sweep_kernel(family, m, cfg.sweep.trunc_scale)?;
                check_modes(&density.with_kernel(k)?, &obs)?;
            }
            let r = experiments::classical_limit_sweep(&density, family, cfg.sweep.trunc_scale, &obs, &cfg.sweep.m_values, &cfg.sampler()?)?;
            export::write_sweep_csv(art.create("sweep.csv")?, &r)?;
            art.json("sweep.json", &r)?;
            writeln!(out, "classical {} ; slope {:?} ; monotone {}", r.classical, r.slope, r.monotone)?;
            Ok((EXIT_OK, None))
        }
        Command::GridStudy => {
            let density = cfg.density()?;
            check_modes(&density, &cfg.observable()?)?;
            let study = experiments::grid_refinement_study(
                &density,
                |g| cfg.observable_on(g).map_err(|e| ncq::Error::Config(e.to_string())),
                &cfg.study.slice_counts,
                &cfg.sampler()?,
            )?;
            export::write_grid_csv(art.create("grid_study.csv")?, &study)?;
            art.json("grid_study.json", &study)?;
            writeln!(out, "{} rows; r_squared {:?}", study.rows.len(), study.r_squared)?;
            Ok((EXIT_OK, None))
        }
        Command::OracleCheck => {
            let budget = cfg.triangle_budget();
            let reports = if cfg.oracle.builtin {
                oracle::triangle_battery(&budget)?
            } else {
                let case = oracle::TriangleCase {
                    id: "config",
                    density: cfg.density()?,
                    lattice: cfg.lattice()?,
                };
                vec![oracle::run_triangle(&case, &cfg.observable()?, &budget)?]
            };
            export::write_oracle_csv(art.create("oracle.csv")?, &reports)?;
            art.json("oracle.json", &reports)?;
            for r in &reports {
                writeln!(out, "{:<40} {}", r.case_id, r.verdict)?;
            }
            let ok = reports.iter().all(|r| r.passed());
            Ok((if ok { EXIT_OK } else { EXIT_BATTERY }, None))
        }
        Command::Battery => {
            let report = experiments::regression_battery();
            export::write_battery_csv(art.create("battery.csv")?, &report)?;
            art.json("battery.json", &report)?;
            for r in &report.rows {
                writeln!(out, "{:<28} {}", r.id, if r.pass { "pass" } else { "FAIL" })?;
            }
            Ok((if report.passed { EXIT_OK } else { EXIT_BATTERY }, None))
        }
    }
}
