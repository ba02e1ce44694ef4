//! `popgcn` command line: `synth`, `graph`, `run`, `sweep` and `report`.
//!
//! Experiments are described by a TOML file with the sections `[data]` or
//! `[synthetic]`, `[graph]`, `[model]`, `[selector]` and `[cv]`, plus a
//! top-level `name`. `--set section.key=value` overrides any entry. Each
//! output directory receives `config.toml`, the fully resolved config.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::featsel::SelectorConfig;
use crate::harness::{self, CvConfig, ExperimentConfig, ExperimentReport, ModelConfig, Summary};
use crate::popgraph::{self, GraphSpec};

/// Exit status for validation and runtime failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "popgcn", version, about = "Population-graph spectral GCN experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set model.cheb_order=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (features.csv, phenotypes.csv).
    Synth {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the population graph over all nodes and write edges.csv.
    Graph {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one cross-validated experiment.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
        /// Parallel fold jobs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Repeat an experiment over values of one parameter.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// `K` or any config key such as `graph.strategy`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check and summarise saved reports; optionally merge their plot CSVs.
    Report {
        /// report.json files or directories containing one.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub features: PathBuf,
    pub phenotypes: PathBuf,
}

/// Complete file format of an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub data: Option<DataConfig>,
    pub synthetic: Option<SyntheticConfig>,
    pub graph: GraphSpec,
    pub model: ModelConfig,
    pub selector: SelectorConfig,
    pub cv: CvConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            name: e.name,
            data: None,
            synthetic: None,
            graph: e.graph,
            model: e.model,
            selector: e.selector,
            cv: e.cv,
        }
    }
}

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            name: self.name.clone(),
            graph: self.graph.clone(),
            model: self.model.clone(),
            selector: self.selector.clone(),
            cv: self.cv.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "data",
                    "give either [data] or [synthetic], not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "data",
                    "missing data source: add [data] or [synthetic]",
                ))
            }
            (None, Some(s)) => s.validate()?,
            (Some(d), None) => {
                for p in [&d.features, &d.phenotypes] {
                    if !p.is_file() {
                        return Err(Error::io(
                            p.clone(),
                            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                        ));
                    }
                }
            }
        }
        self.experiment().validate()
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match (&self.data, &self.synthetic) {
            (Some(d), _) => Dataset::load(&d.features, &d.phenotypes),
            (None, Some(s)) => dataset::generate_synthetic(s),
            (None, None) => Err(Error::config("data", "missing data source")),
        }
    }

    /// Config with model presets expanded, as written to `config.toml`.
    pub fn resolved(&self) -> Self {
        Self {
            model: self.model.resolved(),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Parses `text` as a TOML scalar/array, falling back to a bare string.
fn parse_value(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_key(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let (last, path) = parts.split_last().expect("non-empty");
    let mut table = root;
    for p in path {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn apply_override(root: &mut toml::Table, item: &str) -> Result<()> {
    let (key, value) = item
        .split_once('=')
        .ok_or_else(|| Error::config(item, "override must look like key=value"))?;
    set_key(root, key.trim(), parse_value(value.trim()))
}

/// Sweep parameter aliases.
pub fn param_key(param: &str) -> &str {
    match param {
        "K" | "k" | "cheb_order" => "model.cheb_order",
        "L" | "hidden_layers" => "model.hidden_layers",
        "strategy" => "graph.strategy",
        "target_c" => "selector.target_c",
        other => other,
    }
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::config(path.display().to_string(), e.to_string().trim().to_owned()))
}

/// Data paths in a config file are relative to the file's directory.
fn anchor_paths(cfg: &mut RunConfig, base: Option<&Path>) {
    if let (Some(d), Some(base)) = (&mut cfg.data, base) {
        for p in [&mut d.features, &mut d.phenotypes] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

pub fn build_config(overrides: &Overrides, extra: &[(String, toml::Value)]) -> Result<RunConfig> {
    let mut table = match &overrides.config {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    for item in &overrides.set {
        apply_override(&mut table, item)?;
    }
    for (k, v) in extra {
        set_key(&mut table, k, v.clone())?;
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("config", e.message().to_owned()))?;
    anchor_paths(&mut cfg, overrides.config.as_deref().and_then(Path::parent));
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn synth(overrides: &Overrides, seed: Option<u64>, subjects: Option<usize>, out: &Path) -> Result<String> {
    let mut extra = Vec::new();
    if let Some(s) = seed {
        extra.push(("synthetic.seed".to_owned(), toml::Value::Integer(s as i64)));
    }
    if let Some(n) = subjects {
        extra.push(("synthetic.n_subjects".to_owned(), toml::Value::Integer(n as i64)));
    }
    let mut cfg = build_config(overrides, &extra)?;
    cfg.data = None;
    let syn = cfg.synthetic.get_or_insert_with(SyntheticConfig::default).clone();
    let ds = dataset::generate_synthetic(&syn)?;
    ensure_dir(out)?;
    dataset::write_features(&out.join("features.csv"), &ds.features)?;
    dataset::write_phenotypes(&out.join("phenotypes.csv"), &ds.records)?;
    write_file(&out.join("config.toml"), &cfg.resolved().to_toml()?)?;
    Ok(format!(
        "wrote {} acquisitions x {} features to {}\n",
        ds.len(),
        ds.features.n_cols(),
        out.display()
    ))
}

fn graph(overrides: &Overrides, out: &Path) -> Result<String> {
    let cfg = build_config(overrides, &[])?;
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let g = popgraph::build_graph(&ds.features, &ds.records, &cfg.graph, None)?;
    let (components, isolated) = g.component_counts();
    let lm = crate::spectral::estimate_lambda_max(&crate::spectral::normalized_laplacian(&g));
    ensure_dir(out)?;
    popgraph::write_edge_list(&out.join("edges.csv"), &g)?;
    write_file(&out.join("config.toml"), &cfg.resolved().to_toml()?)?;
    Ok(format!(
        "nodes {}\nedges {}\ncomponents {}\nisolated {}\nlambda_max {}{}\n",
        g.n_nodes(),
        g.n_edges(),
        components,
        isolated,
        lm.value,
        if lm.fallback { " (fallback)" } else { "" }
    ))
}

fn run_one(cfg: &RunConfig, ds: &Dataset, out: &Path, jobs: usize) -> Result<ExperimentReport> {
    let report = harness::run_experiment(ds, &cfg.experiment(), jobs)?;
    report.write(out)?;
    write_file(&out.join("config.toml"), &cfg.resolved().to_toml()?)?;
    Ok(report)
}

fn failures_error(report: &ExperimentReport) -> Result<()> {
    match report.failures.first() {
        None => Ok(()),
        Some(f) => Err(Error::Parameter(format!(
            "{} fold run(s) failed, first: fold {}: {}",
            report.failures.len(),
            f.fold,
            f.message
        ))),
    }
}

fn run(overrides: &Overrides, out: &Path, jobs: usize) -> Result<String> {
    let cfg = build_config(overrides, &[])?;
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let report = run_one(&cfg, &ds, out, jobs)?;
    failures_error(&report)?;
    Ok(report.summary_text())
}

fn fmt_stat_csv(s: Option<harness::Stat>) -> String {
    s.map_or_else(|| ",".into(), |s| format!("{},{}", s.mean, s.std))
}

fn sweep(overrides: &Overrides, param: &str, values: &[String], out: &Path, jobs: usize) -> Result<String> {
    let key = param_key(param);
    let base = build_config(overrides, &[])?;
    base.validate()?;
    let ds = base.load_dataset()?;
    ensure_dir(out)?;
    let mut table =
        String::from("param,value,mean_accuracy,std_accuracy,mean_auc,std_auc,vote_accuracy,vote_std\n");
    let mut plot = String::from("experiment,fold,seed,accuracy,auc\n");
    let mut text = String::new();
    let mut first_failure = Ok(());
    for value in values {
        let mut cfg = build_config(overrides, &[(key.to_owned(), parse_value(value))])?;
        cfg.name = format!("{}-{}={}", base.name, param, value);
        cfg.validate()?;
        let report = run_one(&cfg, &ds, &out.join(format!("{param}={value}")), jobs)?;
        let s = &report.summary;
        let _ = writeln!(
            table,
            "{param},{value},{},{},{}",
            fmt_stat_csv(s.accuracy),
            fmt_stat_csv(s.auc),
            fmt_stat_csv(s.majority_vote_accuracy)
        );
        plot.push_str(report.plot_csv().split_once('\n').map_or("", |(_, rows)| rows));
        let _ = writeln!(
            text,
            "{param}={value:<12} accuracy {:.4}",
            s.accuracy.map_or(f64::NAN, |a| a.mean)
        );
        if first_failure.is_ok() {
            first_failure = failures_error(&report);
        }
    }
    write_file(&out.join("sweep.csv"), &table)?;
    write_file(&out.join("plot.csv"), &plot)?;
    write_file(&out.join("config.toml"), &base.resolved().to_toml()?)?;
    first_failure.map(|_| text)
}

fn report(inputs: &[PathBuf], plot_out: Option<&Path>) -> Result<String> {
    let mut text = String::new();
    let mut plot = String::from("experiment,fold,seed,accuracy,auc\n");
    for input in inputs {
        let path = if input.is_dir() {
            input.join("report.json")
        } else {
            input.clone()
        };
        let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r = ExperimentReport::from_json(&body)?;
        if Summary::from_records(&r.records)? != r.summary {
            return Err(Error::Integrity(format!(
                "{}: summary does not match its records",
                path.display()
            )));
        }
        text.push_str(&r.summary_text());
        text.push('\n');
        plot.push_str(r.plot_csv().split_once('\n').map_or("", |(_, rows)| rows));
    }
    if let Some(p) = plot_out {
        write_file(p, &plot)?;
    }
    Ok(text)
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth {
            overrides,
            seed,
            subjects,
            out,
        } => synth(overrides, *seed, *subjects, out),
        Command::Graph { overrides, out } => graph(overrides, out),
        Command::Run { overrides, out, jobs } => run(overrides, out, *jobs),
        Command::Sweep {
            overrides,
            param,
            values,
            out,
            jobs,
        } => sweep(overrides, param, values, out, *jobs),
        Command::Report { inputs, plot } => report(inputs, plot.as_deref()),
    }
}

/// Parses `args` (program name first), runs, and returns the exit status:
/// 0 on success, 1 on validation or runtime errors, 2 on usage errors.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
