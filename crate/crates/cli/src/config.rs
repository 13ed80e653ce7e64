//! Job configuration files.
//!
//! A job file is TOML with a `format_version` key and four sections:
//! `[game]`, `[estimator]`, `[runner]` and `[output]`. Only `[game]` is
//! required. The seed never lives in the file; it comes from `--seed`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use nshap_core::game::DEFAULT_CACHE_ENTRIES;
use nshap_core::neuron::Metric;
use nshap_core::runner::{ExactRoute, GameBinding, JobSpec};
use nshap_core::{CachePolicy, Convergence, EstimatorChoice, EstimatorConfig, Method};
use serde::Deserialize;

use crate::Usage;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// Checked on the raw table before deserializing.
    #[allow(dead_code)]
    pub format_version: u32,
    pub game: GameBinding,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub runner: RunnerSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Unset keys fall back to the library defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub k: Option<usize>,
    /// Chain threshold; setting it turns `mc` into truncated Monte Carlo.
    pub truncation: Option<f64>,
    pub max_iterations: Option<u64>,
    pub candidates: Option<Vec<usize>>,
    pub range: Option<f64>,
    pub bonferroni: Option<bool>,
    /// `mc` only: a fixed number of permutations. Without it `mc` stops on
    /// the all-players Bernstein rule.
    pub iterations: Option<u64>,
    /// `exact` only.
    pub route: Option<ExactRoute>,
    pub subset_cap: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunnerSection {
    pub workers: usize,
    pub checkpoint_interval: u64,
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
    pub halt_after: Option<u64>,
    /// Memoized coalitions; 0 disables the cache.
    pub cache_entries: usize,
    pub record_timing: bool,
}

impl Default for RunnerSection {
    fn default() -> Self {
        RunnerSection {
            workers: 1,
            checkpoint_interval: 50,
            checkpoint: None,
            resume: false,
            halt_after: None,
            cache_entries: DEFAULT_CACHE_ENTRIES,
            record_timing: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    /// Rows of the printed summary.
    pub top: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            json: None,
            csv: None,
            top: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Exact,
    Mc,
    Tmab,
}

/// Reads a job file and applies `section.key=value` overrides.
pub fn load(path: &Path, overrides: &[String]) -> anyhow::Result<JobConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text, overrides).with_context(|| format!("in config {}", path.display()))
}

pub fn parse(text: &str, overrides: &[String]) -> anyhow::Result<JobConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Usage(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    match table.get("format_version").and_then(|v| v.as_integer()) {
        Some(v) if v == CONFIG_VERSION as i64 => {}
        Some(v) => bail!(Usage(format!(
            "format_version: this build reads version {CONFIG_VERSION}, the file declares {v}"
        ))),
        None => bail!(Usage("format_version: missing (expected 1)".into())),
    }
    if table.get("estimator").and_then(|e| e.get("seed")).is_some() {
        bail!(Usage("estimator.seed: the seed is taken from --seed only".into()));
    }
    JobConfig::deserialize(toml::Value::Table(table)).map_err(|e| anyhow!(Usage(e.to_string())))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Usage(format!("--set {spec}: expected section.key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Usage(format!("--set {key}: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// A TOML literal when it parses as one, else a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl JobConfig {
    /// Whether the game itself draws random numbers.
    pub fn needs_seed(&self) -> bool {
        matches!(
            self.game,
            GameBinding::Neuron {
                metric: Metric::Adversarial { .. },
                ..
            }
        )
    }

    pub fn estimator_config(&self, seed: u64) -> EstimatorConfig {
        let e = &self.estimator;
        let d = EstimatorConfig::default();
        EstimatorConfig {
            delta: e.delta.unwrap_or(d.delta),
            epsilon: e.epsilon.unwrap_or(d.epsilon),
            k: e.k.unwrap_or(d.k),
            truncation: e.truncation,
            max_iterations: e.max_iterations.unwrap_or(d.max_iterations),
            seed,
            candidates: e.candidates.clone(),
            range: e.range.unwrap_or(d.range),
            bonferroni: e.bonferroni.unwrap_or(d.bonferroni),
        }
    }

    /// The job the command should run. Game-side randomness (the target
    /// classes of the adversarial metric) is also seeded from `seed`.
    pub fn job(&self, family: Family, seed: u64) -> anyhow::Result<JobSpec> {
        let e = &self.estimator;
        let estimator = match family {
            Family::Exact => EstimatorChoice::Exact {
                route: e.route.unwrap_or(ExactRoute::Subsets),
            },
            Family::Mc => {
                let convergence = e
                    .iterations
                    .map_or(Convergence::BernsteinAllPlayers, Convergence::FixedIterations);
                let method = if e.truncation.is_some() {
                    Method::TruncatedMc { convergence }
                } else {
                    Method::Mc { convergence }
                };
                EstimatorChoice::Sampling { method }
            }
            Family::Tmab => {
                if e.iterations.is_some() {
                    bail!(Usage("estimator.iterations: only applies to mc".into()));
                }
                EstimatorChoice::Sampling { method: Method::Tmab }
            }
        };
        if family != Family::Exact && (e.route.is_some() || e.subset_cap.is_some()) {
            bail!(Usage("estimator.route / estimator.subset_cap: only apply to exact".into()));
        }
        let mut game = self.game.clone();
        if let GameBinding::Neuron {
            metric: Metric::Adversarial { seed: s, .. },
            ..
        } = &mut game
        {
            *s = seed;
        }
        let r = &self.runner;
        let mut spec = JobSpec::new(game, estimator, self.estimator_config(seed));
        spec.workers = r.workers;
        spec.checkpoint_interval = r.checkpoint_interval;
        spec.checkpoint = r.checkpoint.clone();
        spec.resume = r.resume;
        spec.halt_after = r.halt_after;
        spec.record_timing = r.record_timing;
        spec.cache = match r.cache_entries {
            0 => CachePolicy::Off,
            n => CachePolicy::Bounded(n),
        };
        if let Some(cap) = e.subset_cap {
            spec.subset_cap = cap;
        }
        spec.output_json = self.output.json.clone();
        spec.output_csv = self.output.csv.clone();
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GLOVE: &str = "format_version = 1\n[game]\nkind = \"glove\"\nn_right = 2\n";

    #[test]
    fn minimal_file_takes_defaults() {
        let c = parse(GLOVE, &[]).unwrap();
        assert_eq!(c.game, GameBinding::Glove { n_right: 2 });
        assert_eq!(c.runner.workers, 1);
        assert_eq!(c.estimator_config(9), EstimatorConfig::with_seed(9));
    }

    #[test]
    fn overrides_replace_and_create_keys() {
        let c = parse(GLOVE, &["game.n_right=3".into(), "estimator.k=2".into(), "output.json=out.json".into()]).unwrap();
        assert_eq!(c.game, GameBinding::Glove { n_right: 3 });
        assert_eq!(c.estimator.k, Some(2));
        assert_eq!(c.output.json, Some(PathBuf::from("out.json")));
        assert!(parse(GLOVE, &["game".into()]).is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse(&format!("{GLOVE}[estimator]\nkk = 3\n"), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("kk"), "{err:#}");
        let err = parse(&format!("{GLOVE}[estimator]\nseed = 3\n"), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("estimator.seed"));
    }

    #[test]
    fn version_is_required() {
        assert!(parse("[game]\nkind = \"glove\"\nn_right = 2\n", &[]).is_err());
        let err = parse(&GLOVE.replace("= 1", "= 2"), &[]).unwrap_err();
        assert!(err.to_string().contains("format_version"));
    }

    #[test]
    fn mc_picks_convergence_and_truncation() {
        let c = parse(GLOVE, &["estimator.iterations=40".into()]).unwrap();
        let job = c.job(Family::Mc, 1).unwrap();
        assert_eq!(
            job.estimator,
            EstimatorChoice::Sampling {
                method: Method::Mc {
                    convergence: Convergence::FixedIterations(40)
                }
            }
        );
        let c = parse(GLOVE, &["estimator.truncation=0.1".into()]).unwrap();
        assert!(matches!(
            c.job(Family::Mc, 1).unwrap().estimator,
            EstimatorChoice::Sampling {
                method: Method::TruncatedMc {
                    convergence: Convergence::BernsteinAllPlayers
                }
            }
        ));
        assert!(c.job(Family::Tmab, 1).is_ok());
        let c = parse(GLOVE, &["estimator.iterations=40".into()]).unwrap();
        assert!(c.job(Family::Tmab, 1).is_err());
    }

    #[test]
    fn adversarial_metric_takes_the_cli_seed() {
        let text = "format_version = 1\n[game]\nkind = \"neuron\"\nbundle = \"b\"\nmetric = { kind = \"adversarial\" }\n";
        let job = parse(text, &[]).unwrap().job(Family::Tmab, 17).unwrap();
        match job.game {
            GameBinding::Neuron {
                metric: Metric::Adversarial { seed, .. },
                ..
            } => assert_eq!(seed, 17),
            other => panic!("{other:?}"),
        }
    }
}
