//! Command-line front end. Exit codes: 0 success, 1 domain or I/O error,
//! 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::detector::{detector_report, DetectorConfig, DetectorReport};
use crate::error::{Error, Result};
use crate::intervention::{
    adapt_choice_set, AdaptParams, AdaptationPlan, DetectorContext, DEFAULT_RHO_MAX,
};
use crate::learner::{fit_log, ChoiceLog, EstimateFile, LearnerConfig, MatrixEstimate};
use crate::model::{parse_ids, Catalog, ChoiceSpace, ItemId, MatrixFile, UtilityMatrix};
use crate::reversal::{analyze, greedy_tipping_set, minimal_tipping_sets, TippingBase};
use crate::service::{serve, ServeConfig};
use crate::sim::{run_experiment, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "choicectx",
    version,
    about = "Context-dependent choice analysis"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Utility table and winner of a space.
    Analyze(AnalyzeArgs),
    /// Minimal additions that make TARGET overtake CURRENT.
    Tipping(TippingArgs),
    /// Fit a matrix estimate to a choice log.
    Learn(LearnArgs),
    /// Detector report for a choice log.
    Detect(DetectArgs),
    /// Compose a choice set that protects a preference.
    Adapt(AdaptArgs),
    /// Run a synthetic experiment.
    Simulate(SimulateArgs),
    /// Start the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Comma-separated item ids.
    #[arg(long)]
    pub space: String,
}

#[derive(Debug, Args)]
pub struct TippingArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub current: String,
    #[arg(long)]
    pub target: String,
    /// Candidate additions, comma-separated.
    #[arg(long)]
    pub pool: String,
    /// Base space; defaults to {current, target}.
    #[arg(long)]
    pub space: Option<String>,
    /// Require the target to win the whole augmented space.
    #[arg(long)]
    pub validate_full: bool,
    /// Greedy single set instead of exhaustive search.
    #[arg(long, conflicts_with = "report")]
    pub greedy: bool,
    /// Full analysis report instead of the bare tipping base.
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Catalog order; inferred from the log when absent.
    #[arg(long)]
    pub catalog: Option<String>,
    /// Learner settings (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the estimate here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Further users' logs for suspect-item detection.
    #[arg(long = "population", num_args = 1..)]
    pub population: Vec<PathBuf>,
    #[arg(long)]
    pub catalog: Option<String>,
    /// Space for the regret estimate; defaults to the last observation's.
    #[arg(long)]
    pub space: Option<String>,
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
    #[arg(long, default_value_t = 5)]
    pub min_support: usize,
    #[arg(long, default_value_t = 3)]
    pub min_users: usize,
    #[arg(long, default_value_t = 2.0)]
    pub min_lift: f64,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Estimate or matrix JSON.
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub pool: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub required: Option<String>,
    #[arg(long)]
    pub protect: Option<String>,
    #[arg(long, default_value_t = DEFAULT_RHO_MAX)]
    pub rho_max: f64,
    /// Choice log used for regret risk.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Items to treat as suspect.
    #[arg(long)]
    pub suspects: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Seeds, comma-separated or a range like 1..50; overrides the config.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Include wall-clock runtime in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

fn item(s: &str) -> Result<ItemId> {
    ItemId::new(s.trim())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidParameter(format!("bad seed list `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|_| bad())?;
        return if a <= b {
            Ok((a..=b).collect())
        } else {
            Err(bad())
        };
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<w$}", w = widths[c]))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

#[derive(Serialize)]
struct AnalyzeOutput {
    space: ChoiceSpace,
    utilities: crate::model::UtilityTable,
    winner: ItemId,
}

fn cmd_analyze(a: &AnalyzeArgs, format: Format) -> Result<String> {
    let m = UtilityMatrix::load(&a.matrix)?;
    let space = ChoiceSpace::parse(&a.space)?;
    let out = AnalyzeOutput {
        utilities: m.utility_table(&space)?,
        winner: m.best_choice(&space)?,
        space,
    };
    Ok(match format {
        Format::Json => to_json(&out),
        Format::Table => {
            let mut rows = vec![vec![
                "item".into(),
                "label".into(),
                "utility".into(),
                String::new(),
            ]];
            for (id, u) in &out.utilities.entries {
                rows.push(vec![
                    id.to_string(),
                    m.catalog().label(id).to_string(),
                    u.to_string(),
                    if *id == out.winner {
                        "winner".into()
                    } else {
                        String::new()
                    },
                ]);
            }
            table(&rows)
        }
    })
}

fn cmd_tipping(a: &TippingArgs, format: Format) -> Result<String> {
    let m = UtilityMatrix::load(&a.matrix)?;
    let current = item(&a.current)?;
    let target = item(&a.target)?;
    let pool = parse_ids(&a.pool)?;
    let space = match &a.space {
        Some(s) => ChoiceSpace::parse(s)?,
        None => ChoiceSpace::new([current.clone(), target.clone()])?,
    };
    if a.report {
        let report = analyze(&m, &current, &target, &space, &pool, a.validate_full)?;
        return Ok(match format {
            Format::Json => to_json(&report),
            Format::Table => {
                let mut out = format!("gap in base space: {}\n", report.gap);
                let _ = writeln!(
                    out,
                    "max gap: {} (adding {})",
                    report.max_gap.gap,
                    join(&report.max_gap.added)
                );
                let class = serde_json::to_value(report.outcome_class).expect("enum serializes");
                let _ = writeln!(out, "outcome: {}", class.as_str().unwrap_or_default());
                out.push_str(&base_table(&report.base));
                out
            }
        });
    }
    let base = if a.greedy {
        TippingBase {
            sets: greedy_tipping_set(&m, &current, &target, &space, &pool)?
                .into_iter()
                .collect(),
        }
    } else {
        minimal_tipping_sets(&m, &current, &target, &space, &pool, a.validate_full)?
    };
    Ok(match format {
        Format::Json => to_json(&base),
        Format::Table => base_table(&base),
    })
}

fn join(ids: &[ItemId]) -> String {
    if ids.is_empty() {
        "nothing".into()
    } else {
        ids.iter()
            .map(ItemId::as_str)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn base_table(base: &TippingBase) -> String {
    if base.is_empty() {
        return "no tipping set\n".into();
    }
    let mut rows = vec![vec!["#".to_string(), "add".to_string()]];
    for (i, s) in base.sets.iter().enumerate() {
        rows.push(vec![(i + 1).to_string(), join(s)]);
    }
    table(&rows)
}

fn read_catalog(text: &Option<String>, log: &ChoiceLog) -> Result<Option<Catalog>> {
    match text {
        Some(ids) => Ok(Some(Catalog::new(parse_ids(ids)?)?)),
        None if log.is_empty() => Ok(None),
        None => Ok(Some(log.infer_catalog()?)),
    }
}

fn estimate_table(file: &EstimateFile) -> String {
    let ids = &file.matrix.catalog;
    let mut rows = vec![std::iter::once(String::new())
        .chain(ids.iter().map(|i| i.to_string()))
        .collect()];
    for (r, id) in ids.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(file.matrix.entries[r].iter().map(|v| format!("{v:.4}")));
        rows.push(row);
    }
    let mut out = table(&rows);
    if let Some(m) = file.margin {
        let _ = writeln!(out, "margin: {m}");
    }
    let _ = writeln!(out, "violated: {}", file.violated.len());
    out
}

fn cmd_learn(a: &LearnArgs, format: Format) -> Result<String> {
    let log = ChoiceLog::load(&a.log)?;
    let config: LearnerConfig = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => LearnerConfig::default(),
    };
    let file = match read_catalog(&a.catalog, &log)? {
        Some(catalog) => fit_log(&log, &catalog, &config)?.to_file(),
        // No items known at all: the prior over an empty catalog.
        None => EstimateFile {
            matrix: MatrixFile {
                catalog: Vec::new(),
                labels: Default::default(),
                entries: Vec::new(),
            },
            margin: Some(config.bounds),
            violated: Vec::new(),
        },
    };
    if let Some(path) = &a.out {
        std::fs::write(path, to_json(&file))?;
    }
    Ok(match format {
        Format::Json => to_json(&file),
        Format::Table => estimate_table(&file),
    })
}

fn detect_table(r: &DetectorReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "flags: {}", r.flags.len());
    if !r.flags.is_empty() {
        let mut rows = vec![vec![
            "obs".into(),
            "chosen".into(),
            "dominant".into(),
            "evidence".into(),
        ]];
        for f in &r.flags {
            rows.push(vec![
                f.observation.to_string(),
                f.chosen.to_string(),
                f.dominant.to_string(),
                format!("{}/{}", f.evidence.n_p, f.evidence.n_together),
            ]);
        }
        out.push_str(&table(&rows));
    }
    let _ = writeln!(out, "regret risk: {:.4}", r.regret_risk);
    let _ = writeln!(out, "suspects: {}", r.suspects.len());
    for s in &r.suspects {
        let _ = writeln!(
            out,
            "  {} (users {}, lift {:.3})",
            s.item, s.n_users, s.lift
        );
    }
    out
}

fn cmd_detect(a: &DetectArgs, format: Format) -> Result<String> {
    let log = ChoiceLog::load(&a.log)?;
    let mut population = vec![log.clone()];
    for p in &a.population {
        population.push(ChoiceLog::load(p)?);
    }
    let catalog = match &a.catalog {
        Some(ids) => Catalog::new(parse_ids(ids)?)?,
        None => {
            let mut ids: Vec<ItemId> = Vec::new();
            for l in &population {
                if l.is_empty() {
                    continue;
                }
                for id in l.infer_catalog()?.items() {
                    if !ids.contains(id) {
                        ids.push(id.clone());
                    }
                }
            }
            Catalog::new(ids)?
        }
    };
    let config = DetectorConfig {
        theta: a.theta,
        min_support: a.min_support,
        min_users: a.min_users,
        min_lift: a.min_lift,
    };
    let focus = a.space.as_deref().map(ChoiceSpace::parse).transpose()?;
    let report = detector_report(&log, &population, &catalog, &config, focus.as_ref())?;
    Ok(match format {
        Format::Json => to_json(&report),
        Format::Table => detect_table(&report),
    })
}

fn plan_table(p: &AdaptationPlan) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "choice set: {}", p.choice_set);
    let _ = writeln!(out, "predicted winner: {}", p.predicted_winner);
    if let Some(m) = p.margin {
        let _ = writeln!(out, "margin: {m}");
    }
    let _ = writeln!(out, "safe: {}", p.safety.safe);
    for v in &p.safety.violations {
        let _ = writeln!(out, "  - {v}");
    }
    let _ = writeln!(
        out,
        "alternatives considered: {}",
        p.alternatives_considered
    );
    out
}

fn cmd_adapt(a: &AdaptArgs, format: Format) -> Result<String> {
    let estimate = MatrixEstimate::from_json(&std::fs::read_to_string(&a.estimate)?)?;
    let history = a.history.as_ref().map(ChoiceLog::load).transpose()?;
    let params = AdaptParams {
        pool: parse_ids(&a.pool)?,
        k: a.k,
        required: a
            .required
            .as_deref()
            .map(parse_ids)
            .transpose()?
            .unwrap_or_default(),
        protect: a.protect.as_deref().map(item).transpose()?,
        rho_max: a.rho_max,
    };
    let context = DetectorContext {
        history: history.as_ref(),
        suspects: a
            .suspects
            .as_deref()
            .map(parse_ids)
            .transpose()?
            .unwrap_or_default(),
    };
    let plan = adapt_choice_set(&estimate, &params, &context)?;
    Ok(match format {
        Format::Json => to_json(&plan),
        Format::Table => plan_table(&plan),
    })
}

fn cmd_simulate(a: &SimulateArgs, format: Format) -> Result<String> {
    let mut config = ExperimentConfig::from_json(&std::fs::read_to_string(&a.config)?)?;
    if let Some(seeds) = &a.seeds {
        config.seeds = parse_seeds(seeds)?;
    }
    let report = run_experiment(&config, a.timing)?;
    Ok(match format {
        Format::Json => to_json(&report),
        Format::Table => report.to_table(),
    })
}

fn cmd_serve(a: &ServeArgs) -> Result<String> {
    let mut config = match &a.config {
        Some(p) => ServeConfig::load(p)?,
        None => ServeConfig::default(),
    }
    .apply_env(|k| std::env::var(k).ok())?;
    if let Some(port) = a.port {
        config.port = port;
    }
    if let Some(dir) = &a.data_dir {
        config.data_dir = Some(dir.clone());
    }
    if let Some(dir) = &a.static_dir {
        config.static_dir = Some(dir.clone());
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(config))?;
    Ok(String::new())
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, cli.format),
        Command::Tipping(a) => cmd_tipping(a, cli.format),
        Command::Learn(a) => cmd_learn(a, cli.format),
        Command::Detect(a) => cmd_detect(a, cli.format),
        Command::Adapt(a) => cmd_adapt(a, cli.format),
        Command::Simulate(a) => cmd_simulate(a, cli.format),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
