mod config;
mod report;
mod workflows;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{RunConfig, FORMAT_VERSION};

#[derive(Parser)]
#[command(name = "metastab", version, about = "Metastable transition times: predictions and cross-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the workflow described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed` in the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize a finished run and write plot data next to it.
    Report { dir: PathBuf },
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    Parse(String),
    Validation(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Parse(_) => "parse",
            Failure::Validation(_) => "validation",
            Failure::Numerical(_) => "numerical",
            Failure::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Validation(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<metastab::Error> for Failure {
    fn from(e: metastab::Error) -> Self {
        match e {
            metastab::Error::Io(m) => Failure::Io(m),
            e if e.is_validation() => Failure::Validation(e.to_string()),
            e => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    format_version: &'static str,
    workflow: &'static str,
    seed: u64,
    threads: Option<usize>,
    config: &'a RunConfig,
    outputs: Vec<String>,
    wall_time_seconds: f64,
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> Result<(), Failure> {
    let text = fs::read_to_string(config).map_err(|e| Failure::Parse(format!("{}: {e}", config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Failure::Validation("no output directory (use --out or output_dir)".into()))?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }

    // Everything is written to a sibling staging directory and moved into
    // place only after the workflow succeeded.
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let staging = parent.join(format!(
        ".{}.partial-{}",
        out.file_name().and_then(|s| s.to_str()).unwrap_or("run"),
        std::process::id()
    ));
    let _ = fs::remove_dir_all(&staging);
    fs::create_dir_all(&staging)?;

    let start = Instant::now();
    let result = workflows::execute(&cfg, &staging).and_then(|mut outputs| {
        outputs.sort();
        let manifest = Manifest {
            tool: "metastab",
            version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            workflow: cfg.workflow.name(),
            seed: cfg.seed,
            threads,
            config: &cfg,
            outputs,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        };
        metastab::io::write_json(&staging.join("manifest.json"), &manifest)?;
        publish(&staging, &out)
    });
    let _ = fs::remove_dir_all(&staging);
    result
}

fn publish(staging: &Path, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    for entry in fs::read_dir(staging)? {
        let entry = entry?;
        let dest = out.join(entry.file_name());
        if dest.is_dir() {
            fs::remove_dir_all(&dest)?;
        }
        fs::rename(entry.path(), dest)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed, threads } => run(&config, out, seed, threads),
        Command::Report { dir } => report::report(&dir).map(|summary| print!("{summary}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({ "error": f.kind(), "message": f.message() });
            eprintln!("{line}");
            ExitCode::from(f.code())
        }
    }
}
