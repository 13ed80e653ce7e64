//! `nshap`: Shapley attribution jobs, neuron-game fixtures, model repair
//! and reporting from the command line.
//!
//! Exit codes: 0 success, 2 iteration cap reached, 3 invalid input or
//! configuration, 4 file errors, 1 anything else.

mod config;
mod report;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use log::warn;
use nshap_core::neuron::{
    repair, select_players, AttackConfig, Bundle, FixtureKind, MaskFill, Metric, RepairMode, Selection, Snapshot,
};
use nshap_core::runner::{ablate, random_ranking, run_job};
use nshap_core::{baseline_scores, BaselineMethod, RunStatus, ShapleyError, ShapleyResult};

use config::Family;

/// An input problem the user can fix: bad flags, keys or values.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

const EXIT_CAPPED: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "nshap", version, about = "Shapley values of cooperative games and of hidden units")]
struct Cli {
    /// Log progress (repeat for more detail). RUST_LOG also works.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact Shapley values by enumeration.
    Exact(ExactArgs),
    /// Monte Carlo permutation sampling (truncated when estimator.truncation is set).
    Mc(SeededJobArgs),
    /// Bandit search for the top-k players.
    Tmab(SeededJobArgs),
    /// Generate a neuron-game fixture bundle.
    Gen(GenArgs),
    /// Permanently mask players picked from a Shapley result.
    Repair(RepairArgs),
    /// Compare result documents.
    Report(ReportArgs),
    /// Metric of a bundle as ranked players are removed.
    Ablate(AblateArgs),
    /// Cheap importance scores for a bundle's hidden units.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct JobArgs {
    /// Job file (TOML).
    config: PathBuf,
    /// Override a key, e.g. `--set estimator.k=5`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Only needed by games with random parts (the adversarial metric).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SeededJobArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Default,
    Unskewed,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "default")]
    kind: KindArg,
    #[arg(long)]
    seed: u64,
    /// Output directory; must be empty or absent unless --force.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fairness,
    Adversarial,
}

#[derive(Args, Clone)]
struct AttackArgs {
    /// L-infinity radius of the attack.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
}

impl AttackArgs {
    fn config(&self) -> anyhow::Result<AttackConfig> {
        let d = AttackConfig::default();
        let c = AttackConfig {
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            steps: self.steps.unwrap_or(d.steps),
            step_size: self.step_size.unwrap_or(d.step_size),
            ..d
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
#[command(group(ArgGroup::new("selection").required(true).args(["count", "threshold"])))]
struct RepairArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    bundle: PathBuf,
    /// Shapley result computed for the matching metric.
    #[arg(long)]
    result: PathBuf,
    /// Mask this many players.
    #[arg(long)]
    count: Option<usize>,
    /// Mask every player below (fairness) or above (adversarial) this value.
    #[arg(long)]
    threshold: Option<f64>,
    /// Seeds the attack used for the adversarial report.
    #[arg(long)]
    seed: u64,
    /// Directory for the repaired bundle.
    #[arg(long)]
    out: PathBuf,
    /// Report path (default: `<out>/repair_report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    attack: AttackArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Result documents (JSON).
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Size of each top set whose union the correlations are computed on.
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Histogram bins for per-player oracle calls.
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Accuracy,
    ClassRecall,
    GroupFairness,
    Adversarial,
}

#[derive(Args, Clone)]
struct MetricArgs {
    #[arg(long, value_enum, default_value = "accuracy")]
    metric: MetricArg,
    /// Class of the class-recall metric.
    #[arg(long)]
    class: Option<usize>,
    #[command(flatten)]
    attack: AttackArgs,
}

impl MetricArgs {
    fn metric(&self, seed: u64) -> anyhow::Result<Metric> {
        if self.class.is_some() && !matches!(self.metric, MetricArg::ClassRecall) {
            bail!(Usage("--class only applies to --metric class-recall".into()));
        }
        Ok(match self.metric {
            MetricArg::Accuracy => Metric::Accuracy,
            MetricArg::GroupFairness => Metric::GroupFairness,
            MetricArg::ClassRecall => Metric::ClassRecall {
                class: self
                    .class
                    .ok_or_else(|| Usage("--metric class-recall needs --class".into()))?,
            },
            MetricArg::Adversarial => Metric::Adversarial {
                attack: self.attack.config()?,
                seed,
            },
        })
    }
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Ranking file: one player index per line, removed first to last.
    #[arg(long)]
    ranking: Vec<PathBuf>,
    /// Rank players by this result document.
    #[arg(long)]
    result: Vec<PathBuf>,
    /// Also remove players in this many seeded random orders.
    #[arg(long, default_value_t = 0)]
    random: u64,
    /// Removal counts, e.g. `0,1,2,5,10`. Defaults to every count.
    #[arg(long, value_delimiter = ',')]
    counts: Vec<usize>,
    #[arg(long)]
    seed: u64,
    /// CSV with columns ranking,removed,value.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    WeightNorm,
    ResponseNorm,
    LeaveOneOut,
    Random,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_enum)]
    method: BaselineArg,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    seed: u64,
    /// Result document with the scores as values.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() || cause.is::<toml::de::Error>() {
            return EXIT_VALIDATION;
        }
        if let Some(se) = cause.downcast_ref::<ShapleyError>() {
            if se.is_validation() {
                return EXIT_VALIDATION;
            }
            if matches!(
                se,
                ShapleyError::Io { .. }
                    | ShapleyError::Json { .. }
                    | ShapleyError::Csv { .. }
                    | ShapleyError::CorruptCheckpoint { .. }
            ) {
                return EXIT_IO;
            }
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    1
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Exact(a) => {
            let cfg = config::load(&a.job.config, &a.job.overrides)?;
            let seed = match (a.seed, cfg.needs_seed()) {
                (Some(s), _) => s,
                (None, false) => 0,
                (None, true) => bail!(Usage("this game has random parts; pass --seed".into())),
            };
            run_config(&cfg, Family::Exact, seed)
        }
        Command::Mc(a) => cmd_job(&a.job, Family::Mc, a.seed),
        Command::Tmab(a) => cmd_job(&a.job, Family::Tmab, a.seed),
        Command::Gen(a) => cmd_gen(&a),
        Command::Repair(a) => cmd_repair(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Baseline(a) => cmd_baseline(&a),
    }
}

fn cmd_job(args: &JobArgs, family: Family, seed: u64) -> anyhow::Result<u8> {
    let cfg = config::load(&args.config, &args.overrides)?;
    run_config(&cfg, family, seed)
}

fn run_config(cfg: &config::JobConfig, family: Family, seed: u64) -> anyhow::Result<u8> {
    let spec = cfg.job(family, seed)?;
    let result = run_job(&spec)?;
    print_summary(&result, cfg.output.top);
    Ok(match result.run.status {
        RunStatus::IterationCapped => {
            warn!("iteration cap reached before the stopping rule was met");
            EXIT_CAPPED
        }
        _ => 0,
    })
}

fn fmt_bound(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.6}"))
}

fn print_summary(r: &ShapleyResult, top: usize) {
    println!("{:>4}  {:>5}  {:<10} {:>12} {:>12} {:>12} {:>8}", "rank", "index", "label", "value", "lb", "ub", "samples");
    for i in r.top(top) {
        let p = &r.players[i];
        println!(
            "{:>4}  {:>5}  {:<10} {:>12.6} {:>12} {:>12} {:>8}",
            p.rank,
            p.index,
            p.label,
            p.value,
            fmt_bound(p.lb),
            fmt_bound(p.ub),
            p.samples
        );
    }
    let status = match r.run.status {
        RunStatus::Converged => "converged",
        RunStatus::IterationCapped => "iteration cap reached",
        RunStatus::Interrupted => "interrupted (resumable)",
    };
    println!(
        "{} on {}: {status}, {} iterations, {} oracle calls",
        r.run.estimator, r.run.game, r.run.iterations, r.run.eval_count
    );
}

fn cmd_gen(a: &GenArgs) -> anyhow::Result<u8> {
    let kind = match a.kind {
        KindArg::Default => FixtureKind::Default,
        KindArg::Unskewed => FixtureKind::Unskewed,
    };
    let bundle = Bundle::generate(kind, a.seed)?;
    bundle.save(&a.out, a.force)?;
    let s = &bundle.manifest.stats;
    println!("wrote {} ({} players)", a.out.display(), bundle.n_players());
    println!("holdout accuracy   {:.4}", s.holdout_accuracy);
    let groups: Vec<String> = s.group_accuracies.iter().map(|g| format!("{g:.4}")).collect();
    println!("group accuracies   [{}]", groups.join(", "));
    println!("all-masked accuracy {:.4}", s.all_masked_accuracy);
    println!("attack success     {:.4}", s.attack_success);
    Ok(0)
}

fn cmd_repair(a: &RepairArgs) -> anyhow::Result<u8> {
    let bundle = Bundle::load(&a.bundle)?;
    let result = ShapleyResult::read(&a.result)?;
    if result.n() != bundle.n_players() {
        bail!(Usage(format!(
            "{} scores {} players but the bundle has {}",
            a.result.display(),
            result.n(),
            bundle.n_players()
        )));
    }
    let (mode, expected) = match a.mode {
        ModeArg::Fairness => (RepairMode::Fairness, "metric=group_fairness"),
        ModeArg::Adversarial => (RepairMode::Adversarial, "metric=adversarial"),
    };
    if !result.run.game.contains(expected) {
        warn!("{} was computed on {}, not a {expected} game", a.result.display(), result.run.game);
    }
    let selection = match (a.count, a.threshold) {
        (Some(c), _) => Selection::Count(c),
        (None, Some(v)) => Selection::Threshold(v),
        (None, None) => unreachable!("clap enforces the selection group"),
    };
    let players = select_players(&result.values(), mode, selection)?;
    let attack = a.attack.config()?;
    let out = repair(&bundle, mode, &players, &attack, a.seed)?;
    bundle.with_network(out.network).save(&a.out, a.force)?;
    let report_path = a.report.clone().unwrap_or_else(|| a.out.join("repair_report.json"));
    let mut text = serde_json::to_string_pretty(&out.report)?;
    text.push('\n');
    fs::write(&report_path, text).map_err(|e| ShapleyError::io(&report_path, e))?;
    println!("masked {} players: {}", players.len(), out.report.masked_labels.join(" "));
    print_snapshot("before", &out.report.before);
    print_snapshot("after", &out.report.after);
    Ok(0)
}

fn print_snapshot(tag: &str, s: &Snapshot) {
    match s {
        Snapshot::Fairness {
            fairness,
            group_accuracies,
            worst_group_accuracy,
            overall_accuracy,
        } => {
            let g: Vec<String> = group_accuracies.iter().map(|x| format!("{x:.4}")).collect();
            println!(
                "{tag:<6} fairness {fairness:.4}  worst group {worst_group_accuracy:.4}  overall {overall_accuracy:.4}  groups [{}]",
                g.join(", ")
            );
        }
        Snapshot::Adversarial {
            original_attack_success,
            attack_success,
            clean_accuracy,
        } => println!(
            "{tag:<6} original-attack success {original_attack_success:.4}  fresh-attack success {attack_success:.4}  clean accuracy {clean_accuracy:.4}"
        ),
    }
}

fn cmd_report(a: &ReportArgs) -> anyhow::Result<u8> {
    let results = a
        .results
        .iter()
        .map(ShapleyResult::read)
        .collect::<Result<Vec<_>, _>>()?;
    let names = report::names_for(&a.results);
    let rep = report::build(&results, &names, a.top)?;
    report::write(&a.out, &rep, &results, a.bins)?;
    let width = names.iter().map(|n| n.len()).max().unwrap_or(6).max(6);
    print!("{:width$}", "");
    for n in &names {
        print!("  {n:>width$}");
    }
    println!();
    for (n, row) in names.iter().zip(&rep.correlation) {
        print!("{n:width$}");
        for v in row {
            print!("  {v:>width$.4}");
        }
        println!();
    }
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn cmd_ablate(a: &AblateArgs) -> anyhow::Result<u8> {
    let bundle = Bundle::load(&a.bundle)?;
    let game = bundle.game(a.metric.metric(a.seed)?)?;
    let n = bundle.n_players();
    let mut rankings: Vec<(String, Vec<usize>)> = Vec::new();
    for p in &a.ranking {
        rankings.push((stem(p), report::read_ranking(p)?));
    }
    for p in &a.result {
        let r = ShapleyResult::read(p)?;
        rankings.push((stem(p), r.ranking()));
    }
    for i in 0..a.random {
        rankings.push((format!("random_{i}"), random_ranking(n, a.seed, i)));
    }
    if rankings.is_empty() {
        bail!(Usage("give at least one of --ranking, --result, --random".into()));
    }
    let steps: Vec<usize> = if a.counts.is_empty() { (0..=n).collect() } else { a.counts.clone() };
    let mut csv = String::from("ranking,removed,value\n");
    for (name, ranking) in &rankings {
        let curve = ablate(&game, ranking, &steps).with_context(|| format!("ranking {name}"))?;
        for (c, v) in curve.steps.iter().zip(&curve.values) {
            csv.push_str(&format!("{name},{c},{v}\n"));
        }
    }
    fs::write(&a.out, csv).map_err(|e| ShapleyError::io(&a.out, e))?;
    println!("wrote {} ({} curves, {} steps)", a.out.display(), rankings.len(), steps.len());
    Ok(0)
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or("ranking".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_baseline(a: &BaselineArgs) -> anyhow::Result<u8> {
    let bundle = Bundle::load(&a.bundle)?;
    let game = bundle
        .neuron_game(a.metric.metric(a.seed)?, None, MaskFill::Mean)?
        .into_spec()?;
    let method = match a.method {
        BaselineArg::WeightNorm => BaselineMethod::WeightNorm,
        BaselineArg::ResponseNorm => BaselineMethod::ResponseNorm,
        BaselineArg::LeaveOneOut => BaselineMethod::LeaveOneOut,
        BaselineArg::Random => BaselineMethod::Random { seed: a.seed },
    };
    let scores = baseline_scores(&game, method)?;
    let result = ShapleyResult::from_scores(&game, scores, format!("baseline_{}", method.name()));
    result.write_json(&a.out)?;
    if let Some(p) = &a.csv {
        result.write_csv(p)?;
    }
    print_summary(&result, 10);
    Ok(0)
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        super::Cli::command().debug_assert();
    }
}
