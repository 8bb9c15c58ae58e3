use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayes_swarm::exec::{init_thread_pool, Execution};
use bayes_swarm::experiment::{
    compare, run_seeds, sweep, write_atomic, write_comparison, write_run, write_sweep, Arm, ExperimentConfig, Method,
};
use bayes_swarm::field::{FieldFile, Preset};
use bayes_swarm::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Worker-pool size for seed batches.
const THREADS_VAR: &str = "BAYES_SWARM_THREADS";

#[derive(Parser)]
#[command(name = "bayes-swarm", version, about = "Swarm source-seeking simulator and experiment runner")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds and write a run record.
    Run(Common),
    /// Run the lawnmower baseline over the configured seeds.
    Baseline(Common),
    /// Compare variants (and penalty settings) by median over seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated arms, e.g. `full,explorative,exhaustive`.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Method>,
        /// Add a penalty-off arm for every planner variant.
        #[arg(long)]
        ablate_penalty: bool,
    },
    /// Sweep the swarm size.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending swarm sizes.
        #[arg(long, value_delimiter = ',')]
        m_list: Vec<usize>,
    },
    /// Print a built-in environment as a field file.
    Preset {
        #[arg(value_enum)]
        case: CaseArg,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Case1,
    Case2,
}

impl From<CaseArg> for Preset {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Case1 => Preset::Case1,
            CaseArg::Case2 => Preset::Case2,
        }
    }
}

/// Flags mirroring the configuration file; flags win over the file.
#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    case: Option<CaseArg>,
    /// Field file to use instead of (or together with) a preset.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    variant: Option<Method>,
    /// Disable the local penalty around peers' waypoints.
    #[arg(long)]
    no_penalty: bool,
    /// Seeds: `7`, `0,3,9`, `0..5` or `0..=4`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta_theta: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    quadrature_nodes: Option<usize>,
    #[arg(long)]
    broadcast_cap: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    noise_std: Option<f64>,
    /// Scale the explorative term by the path length.
    #[arg(long)]
    arc_length: bool,
    /// Comma-separated times (s) at which every robot's model is written.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Vec<f64>,
    #[arg(long)]
    snapshot_grid: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Run seeds one after another.
    #[arg(long)]
    sequential: bool,
}

/// Failure classes, mapped to exit codes.
enum Failure {
    /// Bad configuration or usage: exit code 2.
    Config(String),
    /// Anything that went wrong while running: exit code 1.
    Runtime(String),
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Config(format!("invalid configuration `seeds`: cannot parse `{text}`"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = text.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        return if a <= b { Ok((a..=b).collect()) } else { Err(bad()) };
    }
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        return if a < b { Ok((a..b).collect()) } else { Err(bad()) };
    }
    text.split(',').map(num).collect()
}

impl Common {
    fn build(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                if !path.exists() {
                    return Err(Failure::Config(format!("config file {} does not exist", path.display())));
                }
                ExperimentConfig::load(path).map_err(config_err)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(c) = self.case {
            cfg.case = Some(c.into());
        }
        if let Some(f) = &self.field {
            cfg.field = Some(f.clone());
        }
        if cfg.case.is_none() && cfg.field.is_none() {
            cfg.case = Some(Preset::Case1);
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if self.no_penalty {
            cfg.penalty_enabled = false;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        let o = &mut cfg.overrides;
        o.beta = self.beta.or(o.beta);
        o.delta_theta = self.delta_theta.or(o.delta_theta);
        o.n_max = self.n_max.or(o.n_max);
        o.quadrature_nodes = self.quadrature_nodes.or(o.quadrature_nodes);
        o.broadcast_cap = self.broadcast_cap.or(o.broadcast_cap);
        o.noise_std = self.noise_std.or(o.noise_std);
        if self.arc_length {
            o.arc_length = Some(true);
        }
        if !self.snapshot_times.is_empty() {
            cfg.snapshot_times = self.snapshot_times.clone();
        }
        if let Some(g) = self.snapshot_grid {
            cfg.snapshot_grid = g;
        }
        if let Some(out) = &self.output {
            cfg.output = Some(out.clone());
        }
        Ok(cfg)
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn output_dir(cfg: &ExperimentConfig, default: String) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| Path::new("runs").join(default))
}

fn case_label(cfg: &ExperimentConfig) -> String {
    match (&cfg.field, cfg.case) {
        (Some(f), _) => f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "custom".into()),
        (None, Some(p)) => p.name().into(),
        (None, None) => "case1".into(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn cmd_run(cfg: ExperimentConfig, exec: Execution) -> Result<(), Failure> {
    cfg.resolve().map_err(config_err)?;
    let dir = output_dir(&cfg, format!("{}-{}-m{}", case_label(&cfg), cfg.variant.name(), cfg.m));
    let out = run_seeds(&cfg, exec).map_err(runtime_err)?;
    write_run(&dir, &out).map_err(runtime_err)?;
    for s in &out.record.seeds {
        println!(
            "seed {:>4}  {:<12}  t = {:>9.3} s  tau = {:>7.3}  rmse = {}",
            s.seed,
            s.termination.name(),
            s.t_achieved,
            s.metrics.tau,
            fmt_opt(s.metrics.rmse)
        );
    }
    let sm = &out.record.summary;
    println!(
        "median tau = {:.4}  median rmse = {}  ({}/{} found the source)",
        sm.median_tau,
        fmt_opt(sm.median_rmse),
        sm.source_found,
        sm.runs
    );
    println!("record: {}", dir.join("record.json").display());
    Ok(())
}

fn cmd_compare(mut cfg: ExperimentConfig, variants: &[Method], ablate: bool, exec: Execution) -> Result<(), Failure> {
    if !variants.is_empty() {
        cfg.arms = variants.iter().map(|&v| Arm::new(v, cfg.penalty_enabled)).collect();
    }
    if ablate {
        let extra: Vec<Arm> = cfg
            .arms
            .iter()
            .filter(|a| a.variant != Method::Exhaustive && a.penalty_enabled)
            .map(|a| Arm::new(a.variant, false))
            .collect();
        cfg.arms.extend(extra);
    }
    if cfg.arms.len() < 2 {
        return Err(Failure::Config(
            "invalid configuration `arms`: a comparison needs at least two arms (use --variants)".into(),
        ));
    }
    cfg.resolve().map_err(config_err)?;
    let dir = output_dir(&cfg, format!("{}-compare-m{}", case_label(&cfg), cfg.m));
    let (cmp, meta) = compare(&cfg, exec).map_err(runtime_err)?;
    write_comparison(&dir, &cmp, &meta).map_err(runtime_err)?;
    print!("{}", cmp.to_csv());
    eprintln!("written to {}", dir.display());
    Ok(())
}

fn cmd_sweep(mut cfg: ExperimentConfig, m_list: &[usize], exec: Execution) -> Result<(), Failure> {
    if !m_list.is_empty() {
        cfg.m_list = m_list.to_vec();
    }
    if cfg.m_list.is_empty() {
        return Err(Failure::Config("invalid configuration `m_list`: give --m-list".into()));
    }
    cfg.resolve().map_err(config_err)?;
    let dir = output_dir(&cfg, format!("{}-sweep-{}", case_label(&cfg), cfg.variant.name()));
    let (sw, meta) = sweep(&cfg, exec).map_err(|e| match e {
        e @ Error::Config { .. } => config_err(e),
        e => runtime_err(e),
    })?;
    write_sweep(&dir, &sw, &meta).map_err(runtime_err)?;
    print!("{}", sw.to_csv());
    eprintln!("written to {}", dir.display());
    Ok(())
}

fn cmd_preset(case: Preset, output: Option<&Path>) -> Result<(), Failure> {
    let (field, mission) = case.build();
    let text = FieldFile::new(&field, Some(mission)).to_toml();
    match output {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(runtime_err),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn threads_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Config(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    init_thread_pool(threads_from_env()?);
    match cli.command {
        Command::Run(c) => cmd_run(c.build()?, c.execution()),
        Command::Baseline(c) => {
            let mut cfg = c.build()?;
            cfg.variant = Method::Exhaustive;
            cmd_run(cfg, c.execution())
        }
        Command::Compare { common, variants, ablate_penalty } => {
            cmd_compare(common.build()?, &variants, ablate_penalty, common.execution())
        }
        Command::Sweep { common, m_list } => cmd_sweep(common.build()?, &m_list, common.execution()),
        Command::Preset { case, output } => cmd_preset(case.into(), output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
