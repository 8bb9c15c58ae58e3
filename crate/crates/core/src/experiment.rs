//! Experiment configuration, run records, variant comparisons and swarm-size
//! sweeps.
//!
//! A configuration is a TOML file. The field either comes from a preset
//! (`case = "case1"`) or from an included field file (`field = "path"`,
//! resolved relative to the configuration file). Everything that affects
//! simulated behavior is hashed into the record; seeds, output locations and
//! wall-clock timings are not.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::AcquisitionConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{CaseConfig, FieldFile, GaussianMixtureField, Preset};
use crate::metrics::MetricReport;
use crate::planner::{PlannerConfig, Variant};
use crate::swarm::{run_exhaustive_baseline, run_experiment, SimResult, SwarmConfig, Termination};

/// Version of the run-record layout written by this crate.
pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// What a run executes: one of the planner variants or the lawnmower baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Full,
    Sync,
    Explorative,
    Exhaustive,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Sync => "sync",
            Method::Explorative => "explorative",
            Method::Exhaustive => "exhaustive",
        }
    }

    /// Planner variant, `None` for the baseline.
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Full => Some(Variant::Full),
            Method::Sync => Some(Variant::Sync),
            Method::Explorative => Some(Variant::Explorative),
            Method::Exhaustive => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Method::Exhaustive),
            other => other
                .parse::<Variant>()
                .map(|v| match v {
                    Variant::Full => Method::Full,
                    Variant::Sync => Method::Sync,
                    Variant::Explorative => Method::Explorative,
                })
                .map_err(|_| Error::config("variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Optional overrides of the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub delta_theta: Option<f64>,
    pub n_max: Option<usize>,
    pub quadrature_nodes: Option<usize>,
    pub broadcast_cap: Option<usize>,
    pub noise_std: Option<f64>,
    pub arc_length: Option<bool>,
}

/// One column of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arm {
    pub variant: Method,
    #[serde(default = "yes")]
    pub penalty_enabled: bool,
    /// Row label; defaults to the variant name, suffixed when the penalty is
    /// off.
    #[serde(default)]
    pub label: Option<String>,
}

impl Arm {
    pub fn new(variant: Method, penalty_enabled: bool) -> Self {
        Self { variant, penalty_enabled, label: None }
    }

    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None if self.penalty_enabled || self.variant == Method::Exhaustive => self.variant.name().to_string(),
            None => format!("{}-no-penalty", self.variant.name()),
        }
    }
}

fn yes() -> bool {
    true
}

fn default_m() -> usize {
    5
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_grid() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in environment. When `field` is also given, only its mission
    /// parameters are used.
    #[serde(default)]
    pub case: Option<Preset>,
    /// Field file to include.
    #[serde(default)]
    pub field: Option<PathBuf>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub variant: Method,
    #[serde(default = "yes")]
    pub penalty_enabled: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Times (s) at which every robot's model is written out.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_grid")]
    pub snapshot_grid: usize,
    /// Arms of a comparison.
    #[serde(default)]
    pub arms: Vec<Arm>,
    /// Swarm sizes of a sweep.
    #[serde(default)]
    pub m_list: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            case: None,
            field: None,
            m: default_m(),
            variant: Method::Full,
            penalty_enabled: true,
            seeds: default_seeds(),
            overrides: Overrides::default(),
            output: None,
            snapshot_times: Vec::new(),
            snapshot_grid: default_grid(),
            arms: Vec::new(),
            m_list: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(case: Preset) -> Self {
        Self { case: Some(case), ..Self::default() }
    }

    /// Parses a configuration; a relative `field` path is resolved against
    /// `origin`'s directory.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        if let Some(f) = &cfg.field {
            if f.is_relative() {
                let base = origin.parent().unwrap_or(Path::new(""));
                cfg.field = Some(base.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::config("m", "swarm needs at least one robot"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.case.is_none() && self.field.is_none() {
            return Err(Error::config("case", "give a preset `case` or a `field` file"));
        }
        let o = &self.overrides;
        if let Some(b) = o.beta {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::config("overrides.beta", "must be positive"));
            }
        }
        if let Some(d) = o.delta_theta {
            if !(d > 0.0 && d <= 360.0) {
                return Err(Error::config("overrides.delta_theta", "must lie in (0, 360]"));
            }
        }
        if o.n_max == Some(0) {
            return Err(Error::config("overrides.n_max", "must be at least 1"));
        }
        if let Some(q) = o.quadrature_nodes {
            if q < 2 {
                return Err(Error::config("overrides.quadrature_nodes", "at least two nodes are required"));
            }
        }
        if o.broadcast_cap == Some(0) {
            return Err(Error::config("overrides.broadcast_cap", "must be at least 1"));
        }
        if let Some(s) = o.noise_std {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config("overrides.noise_std", "must be non-negative"));
            }
        }
        if self.snapshot_grid < 2 {
            return Err(Error::config("snapshot_grid", "must be at least 2"));
        }
        if self.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::config("snapshot_times", "times must be non-negative"));
        }
        Ok(())
    }

    /// Loads the field and mission and applies the overrides.
    pub fn resolve(&self) -> Result<Environment> {
        self.validate()?;
        let (field, case, name) = match (&self.field, self.case) {
            (Some(path), preset) => {
                if !path.exists() {
                    return Err(Error::config("field", format!("field file {} does not exist", path.display())));
                }
                let (field, file_case) = FieldFile::load(path)?.into_parts()?;
                let case = match (file_case, preset) {
                    (Some(c), _) => c,
                    (None, Some(p)) => p.build().1,
                    (None, None) => {
                        return Err(Error::config(
                            "field",
                            format!("{} has no [case] section and no preset `case` was given", path.display()),
                        ))
                    }
                };
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "custom".into());
                (field, case, name)
            }
            (None, Some(p)) => {
                let (f, c) = p.build();
                (f, c, p.name().to_string())
            }
            (None, None) => unreachable!("validated"),
        };
        let o = &self.overrides;
        let field = match o.noise_std {
            Some(s) => field.with_noise_std(s)?,
            None => field,
        };
        let mut case = case;
        if let Some(d) = o.delta_theta {
            case.delta_theta = d;
        }
        case.validate(&field.arena)?;
        let mut acquisition = AcquisitionConfig::default();
        if let Some(b) = o.beta {
            acquisition.beta = b;
        }
        if let Some(q) = o.quadrature_nodes {
            acquisition.quadrature_nodes = q;
        }
        if let Some(a) = o.arc_length {
            acquisition.arc_length = a;
        }
        acquisition.validate()?;
        let mut planner = PlannerConfig::from_case(&case, Variant::Full);
        if let Some(n) = o.n_max {
            planner.n_max = n;
        }
        planner.validate()?;
        Ok(Environment {
            name,
            field,
            case,
            planner,
            acquisition,
            broadcast_cap: o.broadcast_cap.unwrap_or(100),
            snapshot_times: self.snapshot_times.clone(),
            snapshot_grid: self.snapshot_grid,
        })
    }
}

/// A resolved configuration: everything needed to execute runs.
#[derive(Clone, Debug)]
pub struct Environment {
    pub name: String,
    pub field: GaussianMixtureField,
    pub case: CaseConfig,
    pub planner: PlannerConfig,
    pub acquisition: AcquisitionConfig,
    pub broadcast_cap: usize,
    pub snapshot_times: Vec<f64>,
    pub snapshot_grid: usize,
}

/// Every behavior-affecting setting of one run apart from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub case_name: String,
    pub field: FieldFile,
    pub method: Method,
    pub m: usize,
    pub penalty_enabled: bool,
    pub planner: PlannerConfig,
    pub acquisition: AcquisitionConfig,
    pub broadcast_cap: usize,
    pub snapshot_times: Vec<f64>,
    pub snapshot_grid: usize,
}

impl RunSettings {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}

impl Environment {
    pub fn settings(&self, method: Method, m: usize, penalty_enabled: bool) -> RunSettings {
        let mut planner = self.planner.clone();
        planner.variant = method.variant().unwrap_or_default();
        let mut acquisition = self.acquisition.clone();
        acquisition.penalty_enabled = penalty_enabled;
        RunSettings {
            case_name: self.name.clone(),
            field: FieldFile::new(&self.field, Some(self.case.clone())),
            method,
            m,
            penalty_enabled,
            planner,
            acquisition,
            broadcast_cap: self.broadcast_cap,
            snapshot_times: self.snapshot_times.clone(),
            snapshot_grid: self.snapshot_grid,
        }
    }

    /// Executes one seed.
    pub fn run(&self, method: Method, m: usize, penalty_enabled: bool, seed: u64) -> Result<SimResult> {
        match method.variant() {
            None => run_exhaustive_baseline(&self.field, &self.case, m, seed),
            Some(variant) => {
                let mut swarm = SwarmConfig::new(m, variant, seed);
                swarm.penalty_enabled = penalty_enabled;
                swarm.broadcast_cap = self.broadcast_cap;
                swarm.snapshot_times = self.snapshot_times.clone();
                swarm.snapshot_grid = self.snapshot_grid;
                swarm.final_snapshot = true;
                swarm.per_robot_rmse = true;
                let mut planner = self.planner.clone();
                // Seeds are the unit of parallelism; the planner stays
                // sequential inside a run.
                planner.execution = Execution::Sequential;
                run_experiment(&self.field, &self.case, &swarm, &planner, &self.acquisition)
            }
        }
    }
}

/// Outcome of one seed as stored in a run record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub termination: Termination,
    pub t_achieved: f64,
    pub finder: Option<usize>,
    pub metrics: MetricReport,
    pub plans: usize,
    pub fallbacks: usize,
    pub clipped: usize,
    pub evaluations: usize,
}

impl SeedRecord {
    fn new(seed: u64, r: &SimResult) -> Self {
        Self {
            seed,
            termination: r.termination,
            t_achieved: r.t_achieved,
            finder: r.finder,
            metrics: r.metrics.clone(),
            plans: r.plan_stats.plans,
            fallbacks: r.plan_stats.fallbacks,
            clipped: r.plan_stats.clipped,
            evaluations: r.plan_stats.evaluations,
        }
    }
}

/// Medians over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub source_found: usize,
    pub median_tau: f64,
    /// Absent when no run produced a model.
    pub median_rmse: Option<f64>,
}

impl Summary {
    fn of(seeds: &[SeedRecord]) -> Self {
        let taus: Vec<f64> = seeds.iter().map(|s| s.metrics.tau).collect();
        let rmses: Vec<f64> = seeds.iter().filter_map(|s| s.metrics.rmse).collect();
        Self {
            runs: seeds.len(),
            source_found: seeds.iter().filter(|s| s.termination == Termination::SourceFound).count(),
            median_tau: median(&taus).unwrap_or(f64::NAN),
            median_rmse: median(&rmses),
        }
    }
}

/// Median of `values`; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Deterministic result of `run`: identical inputs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub settings: RunSettings,
    pub seeds: Vec<SeedRecord>,
    pub summary: Summary,
}

impl RunRecord {
    /// Checks the structural rules of the record schema.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(field, reason));
        if self.schema_version != RECORD_SCHEMA_VERSION {
            return bad("schema_version", "unsupported version");
        }
        if self.config_hash.len() != 64 || !self.config_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return bad("config_hash", "expected 64 hex digits");
        }
        if self.config_hash != self.settings.hash() {
            return bad("config_hash", "does not match the settings");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "record holds no runs");
        }
        for s in &self.seeds {
            if !(s.metrics.tau >= -1.0) || !(s.t_achieved >= 0.0) {
                return bad("seeds.metrics.tau", "completion time out of range");
            }
            if s.metrics.rmse.is_some_and(|r| !(r >= 0.0)) {
                return bad("seeds.metrics.rmse", "must be non-negative");
            }
            if (s.termination == Termination::SourceFound) != s.finder.is_some() {
                return bad("seeds.finder", "present exactly when the source was found");
            }
        }
        if self.summary != Summary::of(&self.seeds) {
            return bad("summary", "does not match the seeds");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}

/// Non-deterministic companion of a record: timestamps and timings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub command: String,
    pub started: String,
    pub finished: String,
    pub wall_seconds: f64,
    pub parallel: bool,
    pub seeds: Vec<SeedTiming>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedTiming {
    pub label: String,
    pub seed: u64,
    pub wall_seconds: f64,
    pub plans: usize,
    pub plan_seconds_total: f64,
}

/// Finished job of a batch.
struct Job {
    label: String,
    seed: u64,
    result: SimResult,
    wall_seconds: f64,
}

struct Batch {
    jobs: Vec<Job>,
    started: chrono::DateTime<chrono::Utc>,
    clock: Instant,
}

impl Batch {
    /// Runs every `(label, method, m, penalty, seed)` on `exec`, keeping input order.
    fn execute(env: &Environment, specs: &[(String, Method, usize, bool, u64)], exec: Execution) -> Result<Self> {
        let started = chrono::Utc::now();
        let clock = Instant::now();
        let out = exec.map(specs, |(label, method, m, penalty, seed)| {
            let c = Instant::now();
            log::info!("{label}: m={m} seed={seed}");
            env.run(*method, *m, *penalty, *seed).map(|result| Job {
                label: label.clone(),
                seed: *seed,
                result,
                wall_seconds: c.elapsed().as_secs_f64(),
            })
        });
        Ok(Self { jobs: out.into_iter().collect::<Result<_>>()?, started, clock })
    }

    fn meta(&self, command: &str, exec: Execution) -> RunMeta {
        RunMeta {
            schema_version: RECORD_SCHEMA_VERSION,
            command: command.to_string(),
            started: self.started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            parallel: exec == Execution::Parallel && Execution::parallel_available(),
            seeds: self
                .jobs
                .iter()
                .map(|j| SeedTiming {
                    label: j.label.clone(),
                    seed: j.seed,
                    wall_seconds: j.wall_seconds,
                    plans: j.result.plan_stats.plans,
                    plan_seconds_total: j.result.plan_stats.wall_seconds,
                })
                .collect(),
        }
    }
}

/// Output of `run_seeds`.
pub struct RunOutput {
    pub record: RunRecord,
    pub meta: RunMeta,
    pub results: Vec<SimResult>,
}

/// Runs the configured method over every seed.
pub fn run_seeds(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    let env = cfg.resolve()?;
    let settings = env.settings(cfg.variant, cfg.m, cfg.penalty_enabled);
    let label = cfg.variant.name().to_string();
    let specs: Vec<_> = cfg.seeds.iter().map(|&s| (label.clone(), cfg.variant, cfg.m, cfg.penalty_enabled, s)).collect();
    let batch = Batch::execute(&env, &specs, exec)?;
    let meta = batch.meta("run", exec);
    let seeds: Vec<SeedRecord> = batch.jobs.iter().map(|j| SeedRecord::new(j.seed, &j.result)).collect();
    let record = RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        config_hash: settings.hash(),
        summary: Summary::of(&seeds),
        settings,
        seeds,
    };
    Ok(RunOutput { record, meta, results: batch.jobs.into_iter().map(|j| j.result).collect() })
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes `record.json`, `meta.json` and per-seed artifacts under `dir`.
/// Returns the paths written.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |rel: PathBuf, bytes: &[u8]| -> Result<()> {
        let p = dir.join(rel);
        write_atomic(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    let mut record = out.record.to_json();
    record.push('\n');
    put("record.json".into(), record.as_bytes())?;
    let mut meta = serde_json::to_string_pretty(&out.meta)?;
    meta.push('\n');
    put("meta.json".into(), meta.as_bytes())?;
    for (s, r) in out.record.seeds.iter().zip(&out.results) {
        let sd = PathBuf::from(format!("seed-{}", s.seed));
        put(sd.join("events.jsonl"), r.event_log_jsonl().as_bytes())?;
        put(sd.join("trajectory.csv"), r.trajectory_csv().as_bytes())?;
        put(sd.join("observations.csv"), r.dataset.to_csv().as_bytes())?;
        if let Some(f) = &r.final_snapshot {
            put(sd.join("final_mean.csv"), f.mean_csv().as_bytes())?;
            put(sd.join("final_std.csv"), f.std_csv().as_bytes())?;
        }
        for g in &r.snapshots {
            let stem = format!("snapshot_t{}_robot{}", g.t, g.robot.map(|r| r.to_string()).unwrap_or_else(|| "all".into()));
            put(sd.join(format!("{stem}_mean.csv")), g.mean_csv().as_bytes())?;
            put(sd.join(format!("{stem}_std.csv")), g.std_csv().as_bytes())?;
        }
    }
    Ok(written)
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub case: String,
    pub label: String,
    pub variant: Method,
    pub penalty_enabled: bool,
    pub m: usize,
    pub seeds: usize,
    pub source_found: usize,
    pub median_tau: f64,
    pub median_rmse: Option<f64>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub rows: Vec<ComparisonRow>,
    /// Per-arm records, in row order.
    pub records: Vec<RunRecord>,
}

impl Comparison {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvComparisonRow {
                case: &r.case,
                variant: &r.label,
                penalty: r.penalty_enabled,
                m: r.m,
                seeds: r.seeds,
                source_found: r.source_found,
                median_tau: r.median_tau,
                median_rmse: r.median_rmse,
                config_hash: &r.config_hash,
            })
            .expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8")
    }
}

#[derive(Serialize)]
struct CsvComparisonRow<'a> {
    case: &'a str,
    variant: &'a str,
    penalty: bool,
    m: usize,
    seeds: usize,
    source_found: usize,
    median_tau: f64,
    median_rmse: Option<f64>,
    config_hash: &'a str,
}

/// Runs every arm over every seed and tabulates medians.
pub fn compare(cfg: &ExperimentConfig, exec: Execution) -> Result<(Comparison, RunMeta)> {
    if cfg.arms.len() < 2 {
        return Err(Error::config("arms", "a comparison needs at least two arms"));
    }
    let env = cfg.resolve()?;
    let labels: Vec<String> = cfg.arms.iter().map(Arm::label).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::config("arms", format!("duplicate arm label `{l}`")));
        }
    }
    let specs: Vec<_> = cfg
        .arms
        .iter()
        .zip(&labels)
        .flat_map(|(a, l)| cfg.seeds.iter().map(move |&s| (l.clone(), a.variant, cfg.m, a.penalty_enabled, s)))
        .collect();
    let batch = Batch::execute(&env, &specs, exec)?;
    let meta = batch.meta("compare", exec);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (arm, label) in cfg.arms.iter().zip(&labels) {
        let settings = env.settings(arm.variant, cfg.m, arm.penalty_enabled);
        let seeds: Vec<SeedRecord> = batch
            .jobs
            .iter()
            .filter(|j| &j.label == label)
            .map(|j| SeedRecord::new(j.seed, &j.result))
            .collect();
        let summary = Summary::of(&seeds);
        rows.push(ComparisonRow {
            case: env.name.clone(),
            label: label.clone(),
            variant: arm.variant,
            penalty_enabled: arm.penalty_enabled,
            m: cfg.m,
            seeds: summary.runs,
            source_found: summary.source_found,
            median_tau: summary.median_tau,
            median_rmse: summary.median_rmse,
            config_hash: settings.hash(),
        });
        records.push(RunRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            config_hash: settings.hash(),
            settings,
            seeds,
            summary,
        });
    }
    Ok((Comparison { schema_version: RECORD_SCHEMA_VERSION, rows, records }, meta))
}

/// One swarm size of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub seeds: usize,
    pub source_found: usize,
    pub median_tau: f64,
    pub median_rmse: Option<f64>,
    /// Mean wall-clock seconds per planning instance, over all seeds.
    pub mean_plan_seconds: f64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub schema_version: u32,
    pub case: String,
    pub variant: Method,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8")
    }
}

/// Runs the configured method for each swarm size in `cfg.m_list`.
pub fn sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<(Sweep, RunMeta)> {
    if cfg.m_list.is_empty() {
        return Err(Error::config("m_list", "at least one swarm size is required"));
    }
    if cfg.m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("m_list", "swarm sizes must be strictly ascending"));
    }
    if cfg.m_list[0] < 1 {
        return Err(Error::config("m_list", "swarm sizes must be at least 1"));
    }
    let env = cfg.resolve()?;
    let specs: Vec<_> = cfg
        .m_list
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (format!("m={m}"), cfg.variant, m, cfg.penalty_enabled, s)))
        .collect();
    let batch = Batch::execute(&env, &specs, exec)?;
    let meta = batch.meta("sweep", exec);
    let rows = cfg
        .m_list
        .iter()
        .map(|&m| {
            let jobs: Vec<&Job> = batch.jobs.iter().filter(|j| j.label == format!("m={m}")).collect();
            let seeds: Vec<SeedRecord> = jobs.iter().map(|j| SeedRecord::new(j.seed, &j.result)).collect();
            let summary = Summary::of(&seeds);
            let plans: usize = jobs.iter().map(|j| j.result.plan_stats.plans).sum();
            let secs: f64 = jobs.iter().map(|j| j.result.plan_stats.wall_seconds).sum();
            SweepRow {
                m,
                seeds: summary.runs,
                source_found: summary.source_found,
                median_tau: summary.median_tau,
                median_rmse: summary.median_rmse,
                mean_plan_seconds: if plans == 0 { 0.0 } else { secs / plans as f64 },
                config_hash: env.settings(cfg.variant, m, cfg.penalty_enabled).hash(),
            }
        })
        .collect();
    Ok((Sweep { schema_version: RECORD_SCHEMA_VERSION, case: env.name.clone(), variant: cfg.variant, rows }, meta))
}

/// Writes `compare.csv`, `compare.json` and `meta.json` under `dir`.
pub fn write_comparison(dir: &Path, cmp: &Comparison, meta: &RunMeta) -> Result<()> {
    write_atomic(&dir.join("compare.csv"), cmp.to_csv().as_bytes())?;
    write_json(&dir.join("compare.json"), cmp)?;
    write_json(&dir.join("meta.json"), meta)
}

/// Writes `sweep.csv`, `sweep.json` and `meta.json` under `dir`.
pub fn write_sweep(dir: &Path, sw: &Sweep, meta: &RunMeta) -> Result<()> {
    write_atomic(&dir.join("sweep.csv"), sw.to_csv().as_bytes())?;
    write_json(&dir.join("sweep.json"), sw)?;
    write_json(&dir.join("meta.json"), meta)
}
