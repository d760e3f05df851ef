//! Batch experiments: refinement curves for several clustering variants over
//! repeated trials, with exact and greedy reference values, written as CSV.
//!
//! CSV columns are `trial, variant, clusters, value, bound_kind, millis`.
//! Reference methods use `clusters = -1`; per-cluster-count means over trials
//! use `trial = -1`. Rows are sorted by `(trial, variant, clusters)`, so two
//! runs of one config produce identical files apart from `millis`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    refine, ProbabilityMode, RefineOptions, SeedSelect, DEFAULT_REORDER_ITERS,
};
use crate::error::{Error, Result};
use crate::greedy::{greedy_diversified, greedy_pairwise};
use crate::model::{generate_instance, parse_instance, GeneratorParams, ProblemInstance};
use crate::recourse::{evaluate_exact, solve_exact, BoundKind};
use crate::seeding::splitmix64;

/// Where the experiment's instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// A JSON instance file; relative paths resolve against the config file.
    File(PathBuf),
    Generate(GeneratedInstance),
    Inline(ProblemInstance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedInstance {
    #[serde(flatten)]
    pub params: GeneratorParams,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Pairwise,
    Diversified,
    Cluster(ClusterVariant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterVariant {
    /// CSV label; derived from the settings when absent.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "heuristic")]
    pub seed_select: SeedSelect,
    #[serde(default = "yes")]
    pub reorder: bool,
}

fn heuristic() -> SeedSelect {
    SeedSelect::Heuristic
}

fn yes() -> bool {
    true
}

impl ClusterVariant {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let select = match self.seed_select {
                SeedSelect::Heuristic => "heuristic",
                SeedSelect::Random => "random",
            };
            let reorder = if self.reorder { "reorder" } else { "noreorder" };
            format!("{select}-{reorder}")
        })
    }
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Exact => "exact".into(),
            Method::Pairwise => "pairwise".into(),
            Method::Diversified => "diversified".into(),
            Method::Cluster(v) => v.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "thirty")]
    pub max_clusters: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub prob_mode: ProbabilityMode,
    /// Where the CLI writes the CSV unless told otherwise.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn thirty() -> usize {
    30
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Syntax(e.to_string()))
    }

    /// Reads a config file, resolving relative paths inside it against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let InstanceSource::File(f) = &mut config.instance {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if let Some(out) = &mut config.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trials", "must be at least 1"));
        }
        if self.max_clusters < 2 {
            return Err(Error::validation("max_clusters", "must be at least 2"));
        }
        if self.methods.is_empty() {
            return Err(Error::validation("methods", "must not be empty"));
        }
        let mut labels: Vec<String> = self.methods.iter().map(Method::label).collect();
        labels.sort();
        if let Some(pair) = labels.windows(2).find(|p| p[0] == p[1]) {
            return Err(Error::validation(
                "methods",
                format!("duplicate label {:?}", pair[0]),
            ));
        }
        Ok(())
    }

    pub fn load_instance(&self) -> Result<ProblemInstance> {
        match &self.instance {
            InstanceSource::File(path) => parse_instance(&std::fs::read_to_string(path)?),
            InstanceSource::Generate(g) => generate_instance(&g.params, g.seed),
            InstanceSource::Inline(instance) => Ok(instance.clone()),
        }
    }
}

/// Seed for trial `t`, independent of how many trials run.
pub fn trial_seed(rng_seed: u64, trial: usize) -> u64 {
    rng_seed ^ splitmix64(trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub trial: i64,
    pub variant: String,
    pub clusters: i64,
    pub value: f64,
    pub bound_kind: BoundKind,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    /// `-1` for reference methods.
    pub trial: i64,
    pub variant: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<CsvRow>,
    pub failures: Vec<TrialFailure>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "trial",
            "variant",
            "clusters",
            "value",
            "bound_kind",
            "millis",
        ])
        .map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([
                r.trial.to_string(),
                r.variant.clone(),
                r.clusters.to_string(),
                format!("{:.9}", r.value),
                r.bound_kind.to_string(),
                format!("{:.3}", r.millis),
            ])
            .map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Rows of one variant, in order.
    pub fn rows_for<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a CsvRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == variant)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn millis(started: Instant) -> f64 {
    started.elapsed().as_secs_f64() * 1e3
}

enum Task<'a> {
    Reference(&'a Method),
    Curve(usize, &'a ClusterVariant),
}

/// Runs every method of `config`. Failures of individual trials or reference
/// methods are recorded in the report and do not stop the others.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let instance = config.load_instance()?;

    let mut tasks = Vec::new();
    for method in &config.methods {
        match method {
            Method::Cluster(v) => tasks.extend((0..config.trials).map(|t| Task::Curve(t, v))),
            other => tasks.push(Task::Reference(other)),
        }
    }

    let outcomes: Vec<std::result::Result<Vec<CsvRow>, TrialFailure>> =
        tasks
            .par_iter()
            .map(|task| match *task {
                Task::Reference(method) => reference_row(&instance, method)
                    .map(|r| vec![r])
                    .map_err(|e| TrialFailure {
                        trial: -1,
                        variant: method.label(),
                        message: e.to_string(),
                    }),
                Task::Curve(trial, variant) => curve_rows(&instance, config, trial, variant)
                    .map_err(|e| TrialFailure {
                        trial: trial as i64,
                        variant: variant.label(),
                        message: e.to_string(),
                    }),
            })
            .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => rows.extend(r),
            Err(f) => failures.push(f),
        }
    }
    rows.extend(mean_rows(&rows));
    rows.sort_by(|a, b| (a.trial, &a.variant, a.clusters).cmp(&(b.trial, &b.variant, b.clusters)));
    failures.sort_by(|a, b| (a.trial, &a.variant).cmp(&(b.trial, &b.variant)));
    Ok(ExperimentReport { rows, failures })
}

fn reference_row(instance: &ProblemInstance, method: &Method) -> Result<CsvRow> {
    let started = Instant::now();
    let value = match method {
        Method::Exact => solve_exact(instance)?.objective_value,
        Method::Pairwise => evaluate_exact(instance, &greedy_pairwise(instance))?,
        Method::Diversified => evaluate_exact(instance, &greedy_diversified(instance)?)?,
        Method::Cluster(_) => unreachable!("cluster methods produce curves"),
    };
    Ok(CsvRow {
        trial: -1,
        variant: method.label(),
        clusters: -1,
        value,
        bound_kind: BoundKind::Exact,
        millis: millis(started),
    })
}

fn curve_rows(
    instance: &ProblemInstance,
    config: &ExperimentConfig,
    trial: usize,
    variant: &ClusterVariant,
) -> Result<Vec<CsvRow>> {
    let options = RefineOptions {
        max_clusters: config.max_clusters,
        prob_mode: config.prob_mode,
        seed_select: variant.seed_select,
        reorder: variant.reorder,
        max_reorder_iters: DEFAULT_REORDER_ITERS,
        track_upper: false,
        rng_seed: trial_seed(config.rng_seed, trial),
    };
    let trace = refine(instance, &options)?;
    let label = variant.label();
    Ok(trace
        .steps
        .iter()
        .map(|s| CsvRow {
            trial: trial as i64,
            variant: label.clone(),
            clusters: s.cluster_count as i64,
            value: s.lower,
            bound_kind: BoundKind::Lower,
            millis: s.elapsed.as_secs_f64() * 1e3,
        })
        .collect())
}

/// Mean value and time per (variant, cluster count) over the trials that
/// reached that count.
fn mean_rows(rows: &[CsvRow]) -> Vec<CsvRow> {
    let mut groups: std::collections::BTreeMap<(&str, i64), Vec<&CsvRow>> = Default::default();
    for r in rows.iter().filter(|r| r.trial >= 0) {
        groups.entry((&r.variant, r.clusters)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((variant, clusters), members)| {
            // Sum in trial order so the mean is independent of scheduling.
            let mut members = members;
            members.sort_by_key(|r| r.trial);
            let n = members.len() as f64;
            CsvRow {
                trial: -1,
                variant: variant.to_string(),
                clusters,
                value: members.iter().map(|r| r.value).sum::<f64>() / n,
                bound_kind: BoundKind::Lower,
                millis: members.iter().map(|r| r.millis).sum::<f64>() / n,
            }
        })
        .collect()
}
