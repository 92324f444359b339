//! Experiment driver: configuration parsing, experiment orchestration and
//! CSV/manifest output for the `nonlocal-lab` binary.

// `!(a < b)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod setup;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nonlocal_core::field::format_g17;

pub use config::{parse_config, ExperimentConfig, ParseError};
pub use setup::{resolve, Experiment, Setup};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Core(#[from] nonlocal_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Precondition = 2,
    Divergence = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl CliError {
    pub fn exit(&self) -> Exit {
        Exit::Precondition
    }
}

/// A CSV table with `%.17g` numbers and LF endings.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_g17(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

/// Output of one experiment before it is written.
#[derive(Clone, Debug, Default)]
pub struct Report {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    /// `(name, value)` lines for the manifest.
    pub results: Vec<(String, String)>,
    /// A divergence or non-convergence the experiment treats as a finding.
    pub diverged: bool,
}

impl Report {
    pub fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn result(&mut self, name: &str, value: impl ToString) {
        self.results.push((name.to_string(), value.to_string()));
    }

    pub fn num(&mut self, name: &str, v: f64) {
        self.result(name, format_g17(v));
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit: Exit,
    pub out_dir: PathBuf,
    pub report: Report,
}

/// Resolves and runs a configuration on a pool of `threads` workers
/// (`None`: the rayon default), writing all outputs under the resolved
/// output directory (`out` overrides `out_dir`).
pub fn run_config(cfg: &ExperimentConfig, out: Option<&Path>, threads: Option<usize>) -> Result<RunOutcome, CliError> {
    let (setup, resolver) = resolve(cfg)?;
    for key in resolver.ignored() {
        eprintln!("warning: key `{key}` is not used by experiment {}", setup.experiment.name());
    }
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| setup.out_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|source| CliError::Io { path: out_dir.clone(), source })?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Precondition("`--threads` must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Precondition(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();
    let start = Instant::now();
    let report = pool.install(|| experiments::run(&setup))?;
    let wall = start.elapsed().as_secs_f64();

    for (name, contents) in &report.files {
        write_atomic(&out_dir.join(name), contents.as_bytes())?;
    }
    let exit = if report.diverged { Exit::Divergence } else { Exit::Success };
    let mut manifest = String::from("# nonlocal-lab run manifest; the [config] block is itself a valid configuration\n");
    manifest.push_str("# [config]\n");
    manifest.push_str(&resolver.resolved_text());
    manifest.push_str("# [run]\n");
    manifest.push_str(&format!("# nonlocal-lab = {}\n", env!("CARGO_PKG_VERSION")));
    manifest.push_str(&format!("# nonlocal-core = {}\n", nonlocal_core::VERSION));
    manifest.push_str(&format!("# out = {}\n", out_dir.display()));
    manifest.push_str(&format!("# seed = {}\n", setup.seed));
    manifest.push_str(&format!("# threads = {workers}\n"));
    manifest.push_str(&format!("# wall_time_s = {}\n", format_g17(wall)));
    manifest.push_str(&format!("# exit = {}\n", exit.code()));
    manifest.push_str(&format!("# outputs = {}\n", report.files.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join(", ")));
    manifest.push_str("# [results]\n");
    for (k, v) in &report.results {
        manifest.push_str(&format!("# {k} = {v}\n"));
    }
    write_atomic(&out_dir.join("manifest.txt"), manifest.as_bytes())?;
    Ok(RunOutcome { exit, out_dir, report })
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(parse_config(&text)?)
}

/// `(name, value)` pairs of the `[results]` block of a manifest.
pub fn manifest_results(text: &str) -> Vec<(String, String)> {
    text.lines()
        .skip_while(|l| *l != "# [results]")
        .skip(1)
        .filter_map(|l| l.strip_prefix("# ")?.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}
