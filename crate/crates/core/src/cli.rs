//! Command-line front end. Every artifact is written under `--out` with a
//! fixed file name; JSON artifacts embed the resolved configuration, other
//! artifacts get a `<file>.config.json` sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arrangement::{exact_count_multi, weight_degeneracy, CountOptions, DEFAULT_BOX, NEURON_CAP};
use crate::bounds::{check_lower_hypothesis, BoundReport};
use crate::error::{Error, Result};
use crate::gcn::{init_kaiming, GcnSpec};
use crate::graph::{load_graph, normalize, Fixture};
use crate::render::{emit_figure_curves, emit_table1, emit_table2, rasterize_slice, SliceSpec, DEFAULT_GRID};
use crate::sampler::{estimate_regions, standard_sweep_with, InputDistribution, SamplingConfig, STANDARD_SAMPLES};
use crate::witness::{build_witness, verify_folding, witness_region_check};

pub const THREADS_ENV: &str = "REGION_ATLAS_THREADS";
pub const FAST_SAMPLES: u64 = 100_000;
const WITNESS_PROBES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Bounds,
    Count,
    Estimate,
    Witness,
    Slice,
    Reproduce,
}

#[derive(Debug, Parser)]
#[command(name = "region-atlas", version, about = "Count, bound, estimate and draw the linear regions of ReLU GCNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form bounds for an architecture.
    Bounds(Flags),
    /// Exact region count of a Kaiming-initialized network.
    Count(Flags),
    /// Monte Carlo region estimate.
    Estimate(Flags),
    /// Lower-bound witness network and its checks.
    Witness(Flags),
    /// 2-D slice image colored by activation pattern.
    Slice(Flags),
    /// Tables, figure curves and slice images.
    Reproduce(Flags),
}

impl Command {
    fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Bounds(f) => (CommandKind::Bounds, f),
            Command::Count(f) => (CommandKind::Count, f),
            Command::Estimate(f) => (CommandKind::Estimate, f),
            Command::Witness(f) => (CommandKind::Witness, f),
            Command::Slice(f) => (CommandKind::Slice, f),
            Command::Reproduce(f) => (CommandKind::Reproduce, f),
        }
    }
}

#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Fixture name or path to a graph JSON file.
    #[arg(long)]
    pub graph: Option<String>,
    /// Layer widths, e.g. 2,2,3.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<u64>,
    /// normal:<sigma> or uniform:<u>; omitted means the standard sweep.
    #[arg(long)]
    pub dist: Option<String>,
    /// Half-width of the input box for exact counting.
    #[arg(long = "box")]
    pub bound: Option<f64>,
    /// Worker threads (falls back to REGION_ATLAS_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use 10^5 samples per distribution instead of 2·10^6.
    #[arg(long)]
    pub fast: bool,
    /// JSON file with any of the above; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Partial configuration as read from a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    graph: Option<String>,
    widths: Option<Vec<usize>>,
    seed: Option<u64>,
    samples: Option<u64>,
    dist: Option<String>,
    #[serde(rename = "box")]
    bound: Option<f64>,
    threads: Option<usize>,
    output: Option<PathBuf>,
    fast: Option<bool>,
    grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub graph: String,
    pub widths: Vec<usize>,
    pub seed: u64,
    #[serde(rename = "box")]
    pub bound: f64,
    pub samples: u64,
    pub dist: Option<String>,
    pub output: PathBuf,
    pub threads: Option<usize>,
    pub fast: bool,
    pub grid: usize,
}

impl RunConfig {
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            graph: "path3".into(),
            widths: vec![2, 2, 3],
            seed: 0,
            bound: DEFAULT_BOX,
            samples: STANDARD_SAMPLES,
            dist: None,
            output: PathBuf::from("."),
            threads: None,
            fast: false,
            grid: DEFAULT_GRID,
        }
    }

    /// Defaults, then the config file, then flags, then the thread
    /// environment variable if no thread count was given.
    pub fn resolve(command: CommandKind, flags: Flags) -> Result<Self> {
        let mut cfg = Self::new(command);
        if let Some(path) = &flags.config {
            let file: ConfigFile = serde_json::from_str(&fs::read_to_string(path)?)?;
            cfg.apply(file);
        }
        cfg.apply(ConfigFile {
            graph: flags.graph,
            widths: flags.widths,
            seed: flags.seed,
            samples: flags.samples,
            dist: flags.dist,
            bound: flags.bound,
            threads: flags.threads,
            output: flags.out,
            fast: flags.fast.then_some(true),
            grid: None,
        });
        if cfg.threads.is_none() {
            if let Ok(v) = std::env::var(THREADS_ENV) {
                cfg.threads = Some(v.trim().parse().map_err(|_| {
                    Error::Config(format!("{THREADS_ENV}={v} is not a thread count"))
                })?);
            }
        }
        Ok(cfg)
    }

    fn apply(&mut self, f: ConfigFile) {
        let fast = f.fast.unwrap_or(false);
        if let Some(v) = f.graph {
            self.graph = v;
        }
        if let Some(v) = f.widths {
            self.widths = v;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if fast {
            self.fast = true;
            self.samples = FAST_SAMPLES;
        }
        if let Some(v) = f.samples {
            self.samples = v;
        }
        if f.dist.is_some() {
            self.dist = f.dist;
        }
        if let Some(v) = f.bound {
            self.bound = v;
        }
        if f.threads.is_some() {
            self.threads = f.threads;
        }
        if let Some(v) = f.output {
            self.output = v;
        }
        if let Some(v) = f.grid {
            self.grid = v;
        }
    }
}

/// Every violated precondition of `cfg`, without running anything.
pub fn validate(cfg: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    if !(cfg.bound > 0.0 && cfg.bound.is_finite()) {
        out.push(format!("box must be a positive number, got {}", cfg.bound));
    }
    if cfg.samples == 0 {
        out.push("samples must be at least 1".into());
    }
    if cfg.threads == Some(0) {
        out.push("threads must be at least 1".into());
    }
    if cfg.grid == 0 {
        out.push("grid must be at least 1".into());
    }
    if let Some(d) = &cfg.dist {
        if let Err(e) = d.parse::<InputDistribution>() {
            out.push(e.to_string());
        }
    }
    if cfg.command == CommandKind::Reproduce {
        return out;
    }
    let graph = match load_graph(&cfg.graph) {
        Ok(g) => Some(g),
        Err(e) => {
            out.push(e.to_string());
            None
        }
    };
    let spec = match GcnSpec::new(cfg.widths.clone()) {
        Ok(s) => Some(s),
        Err(e) => {
            out.push(e.to_string());
            None
        }
    };
    if let Some(spec) = &spec {
        if cfg.command == CommandKind::Witness {
            if let Err(e) = check_lower_hypothesis(spec, "witness") {
                out.push(e.to_string());
            }
        }
        if let (CommandKind::Count, Some(g)) = (cfg.command, &graph) {
            let neurons = spec.neuron_count(g.node_count());
            if neurons > NEURON_CAP {
                out.push(format!(
                    "count: {neurons} neurons exceed the exact counter's cap of {NEURON_CAP}; use `estimate` instead"
                ));
            }
        }
    }
    out
}

fn write_json(dir: &Path, name: &str, cfg: &RunConfig, result: serde_json::Value) -> Result<PathBuf> {
    let path = dir.join(name);
    let body = json!({ "config": cfg, "result": result });
    fs::write(&path, serde_json::to_string_pretty(&body)? + "\n")?;
    Ok(path)
}

fn write_with_sidecar(dir: &Path, name: &str, cfg: &RunConfig, bytes: &[u8], extra: serde_json::Value) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    let side = json!({ "config": cfg, "artifact": name, "details": extra });
    fs::write(dir.join(format!("{name}.config.json")), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(path)
}

/// What a run produced, for printing.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub artifacts: Vec<PathBuf>,
    pub message: String,
    /// Nonzero when a check inside the run failed.
    pub exit_code: i32,
}

/// Runs `cfg` on a thread pool of the configured size.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let violations = validate(cfg);
    if !violations.is_empty() {
        return Err(Error::Config(violations.join("; ")));
    }
    fs::create_dir_all(&cfg.output)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cfg))
}

fn dispatch(cfg: &RunConfig) -> Result<RunSummary> {
    if cfg.command == CommandKind::Reproduce {
        return reproduce(cfg);
    }
    let dir = cfg.output.as_path();
    let graph = load_graph(&cfg.graph)?;
    let adj = normalize(&graph);
    let spec = GcnSpec::new(cfg.widths.clone())?;
    let ok = |artifacts, message| Ok(RunSummary { artifacts, message, exit_code: 0 });
    match cfg.command {
        CommandKind::Bounds => {
            let report = BoundReport::new(&spec, &adj);
            let path = write_json(dir, "bounds.json", cfg, serde_json::to_value(&report)?)?;
            ok(vec![path], serde_json::to_string_pretty(&report)?)
        }
        CommandKind::Count => {
            let params = init_kaiming(&spec, cfg.seed);
            let counted = exact_count_multi(&spec, &adj, &params, CountOptions::with_bound(cfg.bound))?;
            let degeneracy = (spec.layers() == 1).then(|| weight_degeneracy(&params.weights[0])).flatten();
            let mut lines = String::new();
            for r in &counted.regions {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            let result = json!({
                "count": counted.count.to_string(),
                "stats": counted.stats,
                "degeneracy": degeneracy,
                "parameters": params,
            });
            let a = write_json(dir, "count.json", cfg, result)?;
            let b = write_with_sidecar(dir, "regions.jsonl", cfg, lines.as_bytes(), json!({ "regions": counted.regions.len() }))?;
            ok(vec![a, b], format!("exact count: {}", counted.count))
        }
        CommandKind::Estimate => {
            let params = init_kaiming(&spec, cfg.seed);
            let report = match &cfg.dist {
                Some(d) => {
                    let sc = SamplingConfig::new(d.parse()?, cfg.samples, cfg.seed);
                    estimate_regions(&spec, &adj, &params, &sc)?
                }
                None => standard_sweep_with(&spec, &adj, &params, cfg.seed, cfg.samples)?,
            };
            let path = write_json(dir, "estimate.json", cfg, serde_json::to_value(&report)?)?;
            ok(vec![path], format!("distinct patterns: {} (max over configs {})", report.distinct_patterns, report.max_over_configs))
        }
        CommandKind::Witness => {
            let (params, plan) = build_witness(&spec, &adj, cfg.seed)?;
            let verification = verify_folding(&adj, &plan, WITNESS_PROBES, cfg.seed);
            let region_check = if spec.neuron_count(adj.node_count()) <= NEURON_CAP {
                serde_json::to_value(witness_region_check(&spec, &adj, cfg.seed, cfg.bound)?)?
            } else {
                json!({ "skipped": format!("more than {NEURON_CAP} neurons") })
            };
            let passed = verification.pass && region_check.get("pass").is_none_or(|p| p == true);
            let result = json!({
                "parameters": params,
                "plan": plan,
                "verification": verification,
                "region_check": region_check,
            });
            let path = write_json(dir, "witness.json", cfg, result)?;
            Ok(RunSummary {
                artifacts: vec![path],
                message: format!("folding checks pass: {}; region check: {region_check}", verification.pass),
                exit_code: if passed { 0 } else { 1 },
            })
        }
        CommandKind::Slice => {
            let params = init_kaiming(&spec, cfg.seed);
            let slice = SliceSpec { grid: cfg.grid, ..SliceSpec::random(spec.input_dim(adj.node_count()), cfg.seed) };
            let img = rasterize_slice(&spec, &adj, &params, &slice)?;
            let mut bytes = Vec::new();
            img.write_ppm(&mut bytes)?;
            let path = write_with_sidecar(dir, "slice.ppm", cfg, &bytes, json!({
                "distinct_patterns": img.distinct_patterns,
                "slice": slice,
            }))?;
            ok(vec![path], format!("distinct patterns in slice: {}", img.distinct_patterns))
        }
        CommandKind::Reproduce => unreachable!("handled above"),
    }
}

fn reproduce(cfg: &RunConfig) -> Result<RunSummary> {
    let dir = cfg.output.as_path();
    let mut artifacts = Vec::new();
    let mut message = String::new();
    let mut table = |name: &str, t: crate::render::Table, artifacts: &mut Vec<PathBuf>| -> Result<()> {
        artifacts.push(write_with_sidecar(dir, name, cfg, t.to_csv().as_bytes(), json!({ "text": t.to_text() }))?);
        message.push_str(&format!("{name}\n{}\n", t.to_text()));
        Ok(())
    };
    table("table1.csv", emit_table1(&[1, 2, 3, 4, 5]), &mut artifacts)?;
    table("table2.csv", emit_table2(&[1, 2, 3, 4, 5], cfg.seed, cfg.samples)?, &mut artifacts)?;
    let fig2 = emit_figure_curves(Fixture::Fig2Graph4, &(1..=19).collect::<Vec<_>>())?;
    table("fig2_curves.csv", fig2.to_table(), &mut artifacts)?;
    let fig3 = emit_figure_curves(Fixture::Star3, &(2..=20).collect::<Vec<_>>())?;
    table("fig3_curves.csv", fig3.to_table(), &mut artifacts)?;

    let adj = normalize(&Fixture::Path3.graph());
    let slice = SliceSpec { grid: cfg.grid, ..SliceSpec::random(adj.node_count(), cfg.seed) };
    for depth in 1..=3 {
        let spec = GcnSpec::new(std::iter::once(1).chain(std::iter::repeat_n(4, depth)).collect())?;
        let params = init_kaiming(&spec, cfg.seed);
        let img = rasterize_slice(&spec, &adj, &params, &slice)?;
        let mut bytes = Vec::new();
        img.write_ppm(&mut bytes)?;
        let name = format!("slice_{depth}layer.ppm");
        artifacts.push(write_with_sidecar(dir, &name, cfg, &bytes, json!({
            "widths": spec.widths(),
            "distinct_patterns": img.distinct_patterns,
            "slice": slice,
        }))?);
        message.push_str(&format!("{name}: {} distinct patterns\n", img.distinct_patterns));
    }
    Ok(RunSummary { artifacts, message, exit_code: 0 })
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (kind, flags) = cli.command.split();
    let cfg = match RunConfig::resolve(kind, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let violations = validate(&cfg);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("error: {v}");
        }
        return 2;
    }
    match run(&cfg) {
        Ok(summary) => {
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", summary.message.trim_end());
            for a in &summary.artifacts {
                let _ = writeln!(out, "wrote {}", a.display());
            }
            summary.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
