//! Command-line front end for the `subnav` library.

mod commands;
pub mod manifest;
pub mod plot;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use clap::{Parser, ValueEnum};
use serde::Serialize;
use subnav::navgraph::EnvGraph;

pub use commands::TrajectoryRecord;
pub use manifest::RunManifest;
pub use plot::plot_trajectory;

/// Exit status for a completed run whose checks failed.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for unknown flags, subcommands or malformed arguments.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Structured,
}

#[derive(Debug, Parser)]
#[command(name = "subnav", version, about = "Sub-instruction aware navigation toolkit")]
pub struct Cli {
    /// Seed for every random choice made by the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory of `<scan>.json` graphs or `<scan>_connectivity.json` files.
    #[arg(long, global = true)]
    pub graph_dir: Option<PathBuf>,
    /// Output file (or directory for gen-toy); standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Suppress progress logging and the manifest on standard error.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: commands::Command,
}

/// Per-run state: global flags, the manifest and cached graphs.
pub struct Context {
    pub seed: u64,
    pub graph_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub quiet: bool,
    pub manifest: RunManifest,
    graphs: BTreeMap<String, EnvGraph>,
}

impl Context {
    /// Read an input file and record its digest.
    pub fn read(&mut self, path: &Path) -> anyhow::Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.add_input(path, &bytes);
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn graph(&mut self, scan: &str) -> anyhow::Result<&EnvGraph> {
        if !self.graphs.contains_key(scan) {
            let dir = self
                .graph_dir
                .clone()
                .ok_or_else(|| anyhow!("--graph-dir is required to load scan `{scan}`"))?;
            let canonical = dir.join(format!("{scan}.json"));
            let connectivity = dir.join(format!("{scan}_connectivity.json"));
            let graph = if canonical.exists() {
                let text = self.read(&canonical)?;
                EnvGraph::from_json(&text)
                    .with_context(|| format!("loading {}", canonical.display()))?
            } else if connectivity.exists() {
                let text = self.read(&connectivity)?;
                EnvGraph::from_connectivity_json(scan, &text)
                    .with_context(|| format!("loading {}", connectivity.display()))?
            } else {
                return Err(anyhow!("no graph for scan `{scan}` in {}", dir.display()));
            };
            self.graphs.insert(scan.to_string(), graph);
        }
        Ok(&self.graphs[scan])
    }

    /// Write the primary output to `--out` or standard output.
    pub fn emit(&self, text: &str) -> anyhow::Result<()> {
        match &self.out {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                Ok(stdout.flush()?)
            }
        }
    }

    /// Print to standard output regardless of `--out`.
    pub fn report(&self, text: &str) -> anyhow::Result<()> {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(text.as_bytes())?;
        Ok(stdout.flush()?)
    }

    fn finish(&self) -> anyhow::Result<()> {
        match &self.out {
            Some(path) => {
                let target = manifest::manifest_path(path);
                fs::write(&target, self.manifest.to_json())
                    .with_context(|| format!("writing {}", target.display()))
            }
            None if !self.quiet => {
                eprintln!("{}", serde_json::to_string(&self.manifest)?);
                Ok(())
            }
            None => Ok(()),
        }
    }
}

/// Parse arguments, run the subcommand and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if !cli.quiet {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
            .try_init();
    }
    let (name, config) = cli.command.describe();
    let mut ctx = Context {
        seed: cli.seed,
        graph_dir: cli.graph_dir,
        out: cli.out,
        format: cli.format,
        quiet: cli.quiet,
        manifest: RunManifest::new(name, config, cli.seed),
        graphs: BTreeMap::new(),
    };
    ctx.manifest.config["format"] = serde_json::to_value(ctx.format).unwrap_or_default();
    match cli.command.execute(&mut ctx).and_then(|ok| ctx.finish().map(|_| ok)) {
        Ok(true) => 0,
        Ok(false) => EXIT_VALIDATION,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_VALIDATION
        }
    }
}
