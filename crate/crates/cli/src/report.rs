//! Cross-method comparison of result documents.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nshap_core::estimators::spearman;
use nshap_core::ShapleyResult;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Accounting {
    pub name: String,
    pub estimator: String,
    pub eval_count: u64,
    pub player_evals: u64,
    pub grand_evals: u64,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub names: Vec<String>,
    /// Spearman correlation over the union of both results' top sets.
    pub correlation: Vec<Vec<f64>>,
    pub top: usize,
    pub accounting: Vec<Accounting>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bin {
    pub start: u64,
    /// Exclusive.
    pub end: u64,
    pub players: usize,
    pub evals: u64,
}

/// Distinct names from file stems: `mc`, `mc_2`, ...
pub fn names_for(paths: &[PathBuf]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().map_or("result".into(), |s| s.to_string_lossy().into_owned());
            let mut name = stem.clone();
            let mut k = 2;
            while !seen.insert(name.clone()) {
                name = format!("{stem}_{k}");
                k += 1;
            }
            name
        })
        .collect()
}

pub fn top_union_spearman(a: &ShapleyResult, b: &ShapleyResult, top: usize) -> f64 {
    let mut union: Vec<usize> = a.top(top);
    union.extend(b.top(top));
    union.sort_unstable();
    union.dedup();
    let (va, vb) = (a.values(), b.values());
    let x: Vec<f64> = union.iter().map(|&i| va[i]).collect();
    let y: Vec<f64> = union.iter().map(|&i| vb[i]).collect();
    spearman(&x, &y)
}

/// Equal-width bins over per-player oracle-call counts.
pub fn eval_histogram(r: &ShapleyResult, bins: usize) -> Vec<Bin> {
    let bins = bins.max(1) as u64;
    let max = r.players.iter().map(|p| p.evals).max().unwrap_or(0);
    let width = (max + 1).div_ceil(bins).max(1);
    let mut out: Vec<Bin> = (0..bins)
        .map(|b| Bin {
            start: b * width,
            end: (b + 1) * width,
            players: 0,
            evals: 0,
        })
        .collect();
    for p in &r.players {
        let b = &mut out[(p.evals / width) as usize];
        b.players += 1;
        b.evals += p.evals;
    }
    out
}

pub fn build(results: &[ShapleyResult], names: &[String], top: usize) -> anyhow::Result<Report> {
    let n = results[0].n();
    for (r, name) in results.iter().zip(names) {
        if r.n() != n {
            anyhow::bail!(crate::Usage(format!(
                "{name} has {} players, {} has {n}",
                r.n(),
                names[0]
            )));
        }
    }
    let correlation = results
        .iter()
        .map(|a| results.iter().map(|b| top_union_spearman(a, b, top)).collect())
        .collect();
    let accounting = results
        .iter()
        .zip(names)
        .map(|(r, name)| Accounting {
            name: name.clone(),
            estimator: r.run.estimator.clone(),
            eval_count: r.run.eval_count,
            player_evals: r.players.iter().map(|p| p.evals).sum(),
            grand_evals: r.run.grand_evals,
        })
        .collect();
    Ok(Report {
        names: names.to_vec(),
        correlation,
        top,
        accounting,
    })
}

/// Writes `report.json`, `correlation.csv`, and per result a
/// `samples_<name>.csv` histogram and a `ranking_<name>.txt` removal order.
pub fn write(dir: &Path, report: &Report, results: &[ShapleyResult], bins: usize) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_file(&dir.join("report.json"), &json)?;

    let mut corr = String::from("result");
    for name in &report.names {
        corr.push(',');
        corr.push_str(name);
    }
    corr.push('\n');
    for (name, row) in report.names.iter().zip(&report.correlation) {
        corr.push_str(name);
        for v in row {
            corr.push_str(&format!(",{v}"));
        }
        corr.push('\n');
    }
    write_file(&dir.join("correlation.csv"), &corr)?;

    for (r, name) in results.iter().zip(&report.names) {
        let mut hist = String::from("bin_start,bin_end,players,evals\n");
        for b in eval_histogram(r, bins) {
            hist.push_str(&format!("{},{},{},{}\n", b.start, b.end, b.players, b.evals));
        }
        write_file(&dir.join(format!("samples_{name}.csv")), &hist)?;
        let ranking: String = r.ranking().iter().map(|i| format!("{i}\n")).collect();
        write_file(&dir.join(format!("ranking_{name}.txt")), &ranking)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).map_err(|e| nshap_core::ShapleyError::io(path, e).into())
}

/// One player index per line, blank lines ignored.
pub fn read_ranking(path: &Path) -> anyhow::Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| nshap_core::ShapleyError::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<usize>()
                .map_err(|_| crate::Usage(format!("{}: entry {} is not a player index: `{l}`", path.display(), i + 1)).into())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nshap_core::{make_glove, mc_shapley, Convergence, EstimatorConfig};

    fn sample() -> ShapleyResult {
        let g = make_glove(3).unwrap();
        mc_shapley(&g, &EstimatorConfig::with_seed(1), Convergence::FixedIterations(50)).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let r = sample();
        assert_eq!(top_union_spearman(&r, &r, 20), 1.0);
    }

    #[test]
    fn histogram_covers_every_player() {
        let r = sample();
        let h = eval_histogram(&r, 3);
        assert_eq!(h.iter().map(|b| b.players).sum::<usize>(), r.n());
        let total: u64 = h.iter().map(|b| b.evals).sum();
        assert_eq!(total + r.run.grand_evals, r.run.eval_count);
    }

    #[test]
    fn names_are_unique() {
        let p = |s: &str| PathBuf::from(s);
        assert_eq!(names_for(&[p("a/mc.json"), p("b/mc.json"), p("tmab.json")]), vec!["mc", "mc_2", "tmab"]);
    }
}
