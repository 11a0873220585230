//! Bayesian pairwise comparison of uncertainty maps.
//!
//! For a metric and a pair of maps (A, B), each group (a model, or a patient)
//! contributes one paired comparison of group-averaged metric values. The
//! number of strict wins `k` out of `N` groups gives a `Beta(1 + k, 1 + N - k)`
//! posterior over the win proportion; a difference is significant when 0.5
//! falls outside the equal-tailed credible interval.

mod beta;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use beta::{
    credible_interval, ln_beta, ln_gamma, posterior, posterior_mode, regularized_incomplete_beta,
    BetaPosterior,
};

use crate::data::MapId;
use crate::error::{Error, Result};
use crate::eval::{EvalRecord, Metric};

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WinCount {
    pub wins: usize,
    pub ties: usize,
    pub n: usize,
}

/// Strict wins of A over B across paired groups.
pub fn count_wins(a: &[f64], b: &[f64]) -> Result<WinCount> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired values differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let ties = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(WinCount {
        wins,
        ties,
        n: a.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// One comparison per model, metric averaged over patients.
    Model,
    /// One comparison per patient, metric averaged over models.
    Patient,
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Grouping::Model),
            "patient" => Ok(Grouping::Patient),
            other => Err(Error::Argument(format!("unknown grouping '{other}'"))),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Model => "model",
            Grouping::Patient => "patient",
        })
    }
}

/// Model selection applied before grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModelFilter {
    /// Keep only the `top` models by mean Dice (ties broken by model id).
    pub top: Option<usize>,
    /// Drop models whose mean Dice is below this value.
    pub min_dice: Option<f64>,
}

impl ModelFilter {
    fn is_active(&self) -> bool {
        self.top.is_some() || self.min_dice.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCell {
    pub map_a: MapId,
    pub map_b: MapId,
    pub k: usize,
    pub ties: usize,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
    pub mode: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub metric: String,
    pub grouping: Grouping,
    pub level: f64,
    pub groups: Vec<String>,
    pub maps: Vec<MapId>,
    /// Ordered pairs, row-major over `maps` with the diagonal skipped.
    pub cells: Vec<PairCell>,
}

impl ComparisonMatrix {
    pub fn cell(&self, a: MapId, b: MapId) -> Option<&PairCell> {
        self.cells.iter().find(|c| c.map_a == a && c.map_b == b)
    }
}

/// Builds one cell from paired group values.
pub fn compare_pair(a: MapId, b: MapId, va: &[f64], vb: &[f64], level: f64) -> Result<PairCell> {
    let wins = count_wins(va, vb)?;
    let post = posterior(wins.wins, wins.n)?;
    let (lo, hi) = post.credible_interval(level)?;
    Ok(PairCell {
        map_a: a,
        map_b: b,
        k: wins.wins,
        ties: wins.ties,
        n: wins.n,
        alpha: post.alpha,
        beta: post.beta,
        lo,
        hi,
        mode: post.mode(),
        significant: 0.5 < lo || 0.5 > hi,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean Dice per model over all its patients and classes.
pub fn mean_dice_by_model(records: &[EvalRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Metric::Dice(_) = r.metric {
            acc.entry(r.model_id.clone()).or_default().push(r.value);
        }
    }
    acc.into_iter().map(|(m, v)| (m, mean(&v))).collect()
}

/// Models surviving `filter`, in id order.
pub fn select_models(records: &[EvalRecord], filter: &ModelFilter) -> Result<BTreeSet<String>> {
    let all: BTreeSet<String> = records.iter().map(|r| r.model_id.clone()).collect();
    if !filter.is_active() {
        return Ok(all);
    }
    let dice = mean_dice_by_model(records);
    if let Some(missing) = all.iter().find(|m| !dice.contains_key(*m)) {
        return Err(Error::MissingCell(format!(
            "model {missing} has no dice records to rank by"
        )));
    }
    let mut ranked: Vec<(String, f64)> = dice
        .into_iter()
        .filter(|(_, d)| filter.min_dice.is_none_or(|t| *d >= t))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(top) = filter.top {
        ranked.truncate(top);
    }
    Ok(ranked.into_iter().map(|(m, _)| m).collect())
}

/// Pairwise comparison of every map that has records for `metric`.
pub fn compare_maps(
    records: &[EvalRecord],
    metric: Metric,
    grouping: Grouping,
    filter: &ModelFilter,
    level: f64,
) -> Result<ComparisonMatrix> {
    let models = select_models(records, filter)?;
    let selected: Vec<&EvalRecord> = records
        .iter()
        .filter(|r| r.metric == metric && r.map_id.is_some() && models.contains(&r.model_id))
        .collect();

    let maps: BTreeSet<MapId> = selected.iter().filter_map(|r| r.map_id).collect();
    let models: BTreeSet<&str> = selected.iter().map(|r| r.model_id.as_str()).collect();
    let patients: BTreeSet<&str> = selected.iter().map(|r| r.patient_id.as_str()).collect();

    let mut cells: HashMap<(&str, &str, MapId), f64> = HashMap::with_capacity(selected.len());
    for r in &selected {
        let key = (r.model_id.as_str(), r.patient_id.as_str(), r.map_id.expect("filtered"));
        if cells.insert(key, r.value).is_some() {
            return Err(Error::Record(format!(
                "duplicate {metric} record for model {}, patient {}, map {}",
                key.0, key.1, key.2
            )));
        }
    }
    for &m in &models {
        for &p in &patients {
            for &map in &maps {
                if !cells.contains_key(&(m, p, map)) {
                    return Err(Error::MissingCell(format!(
                        "{metric}: no value for model {m}, patient {p}, map {map}"
                    )));
                }
            }
        }
    }

    let (groups, others): (Vec<&str>, Vec<&str>) = match grouping {
        Grouping::Model => (models.iter().copied().collect(), patients.iter().copied().collect()),
        Grouping::Patient => (patients.iter().copied().collect(), models.iter().copied().collect()),
    };
    fn key<'a>(grouping: Grouping, g: &'a str, o: &'a str, map: MapId) -> (&'a str, &'a str, MapId) {
        match grouping {
            Grouping::Model => (g, o, map),
            Grouping::Patient => (o, g, map),
        }
    }
    let group_values: BTreeMap<MapId, Vec<f64>> = maps
        .iter()
        .map(|&map| {
            let vals = groups
                .iter()
                .map(|&g| {
                    let inner: Vec<f64> = others.iter().map(|&o| cells[&key(grouping, g, o, map)]).collect();
                    mean(&inner)
                })
                .collect();
            (map, vals)
        })
        .collect();

    let maps: Vec<MapId> = maps.into_iter().collect();
    let mut out = Vec::new();
    for &a in &maps {
        for &b in &maps {
            if a != b {
                out.push(compare_pair(a, b, &group_values[&a], &group_values[&b], level)?);
            }
        }
    }
    Ok(ComparisonMatrix {
        metric: metric.to_string(),
        grouping,
        level,
        groups: groups.iter().map(|g| g.to_string()).collect(),
        maps,
        cells: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePoint {
    pub map_a: MapId,
    pub map_b: MapId,
    pub mode_subset: f64,
    pub mode_full: f64,
}

/// Scatter data of posterior modes: subset of the results against all of them.
pub fn mode_correlation(full: &ComparisonMatrix, subset: &ComparisonMatrix) -> Result<Vec<ModePoint>> {
    let pairs = |m: &ComparisonMatrix| -> BTreeSet<(MapId, MapId)> {
        m.cells.iter().map(|c| (c.map_a, c.map_b)).collect()
    };
    if pairs(full) != pairs(subset) {
        return Err(Error::Argument(
            "comparison matrices cover different map pairs".into(),
        ));
    }
    full.cells
        .iter()
        .map(|f| {
            let s = subset.cell(f.map_a, f.map_b).expect("same pair set");
            Ok(ModePoint {
                map_a: f.map_a,
                map_b: f.map_b,
                mode_subset: s.mode,
                mode_full: f.mode,
            })
        })
        .collect()
}
