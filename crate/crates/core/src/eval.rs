//! Scoring an uncertainty map against ground truth.
//!
//! Uncertainty is treated as a score predicting misclassification: the
//! precision-recall curve is traced over every distinct uncertainty value and
//! summarized as step-wise average precision. BRATS-UNC filters out voxels
//! above a sweep of thresholds and integrates filtered Dice and the filtered
//! TP/TN ratios with a left Riemann sum normalized by the map's value range.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{LabelMap, MapId, Scope, UncertaintyMap};
use crate::error::{Error, Result};

/// Range below which a map is treated as constant by [`brats_unc`].
pub const DEGENERATE_RANGE: f64 = 1e-12;

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} vs {b} voxels")));
    }
    Ok(())
}

pub fn misclassification_mask(pred: &LabelMap, gt: &LabelMap) -> Result<Vec<bool>> {
    check_len(pred.as_slice().len(), gt.as_slice().len(), "label maps differ")?;
    Ok(pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(p, g)| p != g)
        .collect())
}

/// Misclassified voxels where either the prediction or the ground truth is
/// class `c`; every other voxel counts as correctly classified.
pub fn class_specific_mask(pred: &LabelMap, gt: &LabelMap, c: usize) -> Result<Vec<bool>> {
    check_len(pred.as_slice().len(), gt.as_slice().len(), "label maps differ")?;
    let classes = pred.classes().max(gt.classes());
    if c >= classes {
        return Err(Error::ClassIndex { class: c, classes });
    }
    let c = c as u8;
    Ok(pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &g)| p != g && (p == c || g == c))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Points in order of decreasing threshold, one per distinct value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// `sum_i (R_i - R_{i-1}) P_i` with `R_0 = 0`.
    pub fn average_precision(&self) -> f64 {
        let mut prev = 0.0;
        let mut ap = 0.0;
        for p in &self.points {
            ap += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        ap
    }
}

pub fn pr_curve(u: &[f64], mask: &[bool]) -> Result<PrCurve> {
    check_len(u.len(), mask.len(), "uncertainty map and mask differ")?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Range("uncertainty map has non-finite values".into()));
    }
    let positives = mask.iter().filter(|&&m| m).count();
    if positives == 0 {
        return Err(Error::Undefined(
            "AUC-PR needs at least one misclassified voxel".into(),
        ));
    }
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_unstable_by(|&a, &b| u[b].total_cmp(&u[a]));

    let npos = positives as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let threshold = u[order[i]];
        // a tie group enters the positive set atomically
        while i < order.len() && u[order[i]] == threshold {
            if mask[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            recall: tp as f64 / npos,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(PrCurve { points })
}

pub fn auc_pr(u: &[f64], mask: &[bool]) -> Result<f64> {
    Ok(pr_curve(u, mask)?.average_precision())
}

/// Dice overlap; two empty masks score 1.
pub fn dice(pred: &[bool], gt: &[bool]) -> Result<f64> {
    check_len(pred.len(), gt.len(), "masks differ")?;
    let (mut both, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt) {
        both += (a && b) as usize;
        p += a as usize;
        g += b as usize;
    }
    Ok(dice_from_counts(both, p + g))
}

fn dice_from_counts(overlap: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        2.0 * overlap as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BratsPoint {
    pub threshold: f64,
    pub dice: f64,
    /// Ratio of filtered true positives.
    pub tpr: f64,
    /// Ratio of filtered true negatives.
    pub tnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BratsCurves {
    pub thresholds: Vec<f64>,
    pub dice: Vec<f64>,
    pub tpr: Vec<f64>,
    pub tnr: Vec<f64>,
}

impl BratsCurves {
    pub fn points(&self) -> impl Iterator<Item = BratsPoint> + '_ {
        (0..self.thresholds.len()).map(|k| BratsPoint {
            threshold: self.thresholds[k],
            dice: self.dice[k],
            tpr: self.tpr[k],
            tnr: self.tnr[k],
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

impl Confusion {
    fn add(&mut self, pred: bool, gt: bool) {
        match (pred, gt) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    fn point(&self, all: &Confusion, threshold: f64) -> BratsPoint {
        let ratio = |kept: usize, total: usize| {
            if total == 0 {
                0.0
            } else {
                (total - kept) as f64 / total as f64
            }
        };
        BratsPoint {
            threshold,
            dice: dice_from_counts(self.tp, 2 * self.tp + self.fp + self.fn_),
            tpr: ratio(self.tp, all.tp),
            tnr: ratio(self.tn, all.tn),
        }
    }
}

fn check_brats_inputs(u: &[f64], pred: &[bool], gt: &[bool]) -> Result<()> {
    check_len(u.len(), pred.len(), "uncertainty map and prediction differ")?;
    check_len(u.len(), gt.len(), "uncertainty map and ground truth differ")?;
    if u.is_empty() {
        return Err(Error::Shape("empty uncertainty map".into()));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Range("uncertainty map has non-finite values".into()));
    }
    Ok(())
}

/// Filtered Dice and TP/TN ratios when only voxels with `u <= threshold` are kept.
pub fn brats_point(u: &[f64], pred: &[bool], gt: &[bool], threshold: f64) -> Result<BratsPoint> {
    check_brats_inputs(u, pred, gt)?;
    let (mut all, mut kept) = (Confusion::default(), Confusion::default());
    for i in 0..u.len() {
        all.add(pred[i], gt[i]);
        if u[i] <= threshold {
            kept.add(pred[i], gt[i]);
        }
    }
    Ok(kept.point(&all, threshold))
}

/// BRATS-UNC score for a class-specific map and the binary class masks.
///
/// Thresholds are the `n_bins` left edges `min + k (max - min) / n_bins`.
/// A map whose range is below [`DEGENERATE_RANGE`] is evaluated once with
/// every voxel kept.
pub fn brats_unc(
    u: &[f64],
    pred: &[bool],
    gt: &[bool],
    n_bins: usize,
) -> Result<(f64, BratsCurves)> {
    check_brats_inputs(u, pred, gt)?;
    if n_bins < 2 {
        return Err(Error::Argument(format!("n_bins must be >= 2, got {n_bins}")));
    }
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let thresholds: Vec<f64> = if hi - lo <= DEGENERATE_RANGE {
        vec![hi]
    } else {
        let width = (hi - lo) / n_bins as f64;
        (0..n_bins).map(|k| lo + k as f64 * width).collect()
    };

    // Bucket each voxel by the first threshold that keeps it, then prefix-sum.
    let mut all = Confusion::default();
    let mut buckets = vec![Confusion::default(); thresholds.len() + 1];
    for i in 0..u.len() {
        all.add(pred[i], gt[i]);
        let k = thresholds.partition_point(|&t| t < u[i]);
        buckets[k].add(pred[i], gt[i]);
    }

    let mut curves = BratsCurves {
        thresholds: thresholds.clone(),
        dice: Vec::with_capacity(thresholds.len()),
        tpr: Vec::with_capacity(thresholds.len()),
        tnr: Vec::with_capacity(thresholds.len()),
    };
    let mut kept = Confusion::default();
    let mut acc = 0.0;
    for (k, &t) in thresholds.iter().enumerate() {
        kept.tp += buckets[k].tp;
        kept.fp += buckets[k].fp;
        kept.fn_ += buckets[k].fn_;
        kept.tn += buckets[k].tn;
        let p = kept.point(&all, t);
        acc += p.dice + (1.0 - p.tnr) + (1.0 - p.tpr);
        curves.dice.push(p.dice);
        curves.tpr.push(p.tpr);
        curves.tnr.push(p.tnr);
    }
    let score = (acc / 3.0 / thresholds.len() as f64).clamp(0.0, 1.0);
    Ok((score, curves))
}

/// Metric carried by an [`EvalRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    AucPrCombined,
    AucPrClass(usize),
    BratsUnc(usize),
    Dice(usize),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::AucPrCombined => "auc_pr_combined",
            Metric::AucPrClass(_) => "auc_pr_class",
            Metric::BratsUnc(_) => "brats_unc",
            Metric::Dice(_) => "dice",
        }
    }

    pub fn class(&self) -> Option<usize> {
        match *self {
            Metric::AucPrCombined => None,
            Metric::AucPrClass(c) | Metric::BratsUnc(c) | Metric::Dice(c) => Some(c),
        }
    }

    pub fn from_parts(name: &str, class: Option<usize>) -> Result<Self> {
        let need = |c: Option<usize>| {
            c.ok_or_else(|| Error::Argument(format!("metric '{name}' needs a class")))
        };
        match name {
            "auc_pr_combined" => match class {
                None => Ok(Metric::AucPrCombined),
                Some(_) => Err(Error::Argument("auc_pr_combined takes no class".into())),
            },
            "auc_pr_class" => Ok(Metric::AucPrClass(need(class)?)),
            "brats_unc" => Ok(Metric::BratsUnc(need(class)?)),
            "dice" => Ok(Metric::Dice(need(class)?)),
            other => Err(Error::Argument(format!("unknown metric '{other}'"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.class() {
            None => f.write_str(self.name()),
            Some(c) => write!(f, "{}[{c}]", self.name()),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    /// Accepts `auc_pr_combined`, or `name[c]` / `name:c` for class metrics.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((name, rest)) = s.split_once(['[', ':']) {
            let digits = rest.trim_end_matches(']');
            let c = digits
                .parse()
                .map_err(|_| Error::Argument(format!("bad class in metric '{s}'")))?;
            Metric::from_parts(name, Some(c))
        } else {
            Metric::from_parts(s, None)
        }
    }
}

/// One scalar result for a (model, patient, map, metric) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub model_id: String,
    pub patient_id: String,
    /// `None` for map-independent metrics (Dice).
    pub map_id: Option<MapId>,
    pub metric: Metric,
    pub value: f64,
}

/// Everything produced for one case.
#[derive(Debug, Clone, Default)]
pub struct CaseEvaluation {
    pub records: Vec<EvalRecord>,
    /// Metrics that were undefined for this case (no positives), as text.
    pub skipped: Vec<String>,
}

/// Scores every map of a case: combined AUC-PR for combined maps, class
/// AUC-PR and BRATS-UNC for class-specific maps, plus Dice per class.
pub fn evaluate_case(
    model_id: &str,
    patient_id: &str,
    pred: &LabelMap,
    gt: &LabelMap,
    maps: &[UncertaintyMap],
    n_bins: usize,
) -> Result<CaseEvaluation> {
    let classes = pred.classes();
    if gt.classes() != classes {
        return Err(Error::Shape(format!(
            "prediction has {classes} classes, ground truth {}",
            gt.classes()
        )));
    }
    let record = |map_id: Option<MapId>, metric: Metric, value: f64| EvalRecord {
        model_id: model_id.to_string(),
        patient_id: patient_id.to_string(),
        map_id,
        metric,
        value,
    };
    let mut out = CaseEvaluation::default();
    let combined_mask = misclassification_mask(pred, gt)?;
    let class_masks: Vec<Vec<bool>> = (0..classes)
        .map(|c| class_specific_mask(pred, gt, c))
        .collect::<Result<_>>()?;
    let pred_c: Vec<Vec<bool>> = (0..classes).map(|c| pred.class_mask(c)).collect();
    let gt_c: Vec<Vec<bool>> = (0..classes).map(|c| gt.class_mask(c)).collect();

    for map in maps {
        check_len(map.values().len(), combined_mask.len(), "map and labels differ")?;
        match map.scope {
            Scope::Combined => match auc_pr(map.values(), &combined_mask) {
                Ok(v) => out.records.push(record(Some(map.id), Metric::AucPrCombined, v)),
                Err(Error::Undefined(_)) => out.skipped.push(format!("{}:{}", map.id, Metric::AucPrCombined)),
                Err(e) => return Err(e),
            },
            Scope::Class(c) => {
                if c >= classes {
                    return Err(Error::ClassIndex { class: c, classes });
                }
                match auc_pr(map.values(), &class_masks[c]) {
                    Ok(v) => out.records.push(record(Some(map.id), Metric::AucPrClass(c), v)),
                    Err(Error::Undefined(_)) => {
                        out.skipped.push(format!("{}:{}", map.id, Metric::AucPrClass(c)))
                    }
                    Err(e) => return Err(e),
                }
                let (score, _) = brats_unc(map.values(), &pred_c[c], &gt_c[c], n_bins)?;
                out.records.push(record(Some(map.id), Metric::BratsUnc(c), score));
            }
        }
    }
    for c in 0..classes {
        out.records
            .push(record(None, Metric::Dice(c), dice(&pred_c[c], &gt_c[c])?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dims;
    use proptest::prelude::*;

    fn labels(v: &[u8], classes: usize) -> LabelMap {
        LabelMap::new(Dims::new(v.len(), 1, 1), classes, v.to_vec()).unwrap()
    }

    /// Brute-force: enumerate distinct thresholds, recount at each.
    fn ap_oracle(u: &[f64], mask: &[bool]) -> f64 {
        let mut ts: Vec<f64> = u.to_vec();
        ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ts.dedup_by(|a, b| a == b);
        let npos = mask.iter().filter(|&&m| m).count() as f64;
        let mut prev = 0.0;
        let mut ap = 0.0;
        for t in ts {
            let tp = (0..u.len()).filter(|&i| u[i] >= t && mask[i]).count();
            let fp = (0..u.len()).filter(|&i| u[i] >= t && !mask[i]).count();
            let r = tp as f64 / npos;
            ap += (r - prev) * (tp as f64 / (tp + fp) as f64);
            prev = r;
        }
        ap
    }

    #[test]
    fn masks() {
        let pred = labels(&[0, 1, 2, 1], 3);
        let gt = labels(&[0, 2, 2, 0], 3);
        assert_eq!(misclassification_mask(&pred, &pred).unwrap(), vec![false; 4]);
        assert_eq!(
            misclassification_mask(&pred, &gt).unwrap(),
            vec![false, true, false, true]
        );
        // voxel 1 is pred=1, gt=2: class 0 is uninvolved
        assert_eq!(
            class_specific_mask(&pred, &gt, 0).unwrap(),
            vec![false, false, false, true]
        );
        assert_eq!(
            class_specific_mask(&pred, &gt, 2).unwrap(),
            vec![false, true, false, false]
        );
        assert!(class_specific_mask(&pred, &gt, 3).is_err());
        let other = labels(&[1, 0, 0, 0], 3);
        assert_eq!(misclassification_mask(&pred, &other).unwrap(), vec![true; 4]);
        assert!(misclassification_mask(&pred, &labels(&[0, 1], 3)).is_err());
    }

    #[test]
    fn worked_three_voxel_example() {
        let u = [0.9, 0.8, 0.1];
        let mask = [true, false, true];
        let curve = pr_curve(&u, &mask).unwrap();
        let rp: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(rp, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        assert!((auc_pr(&u, &mask).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking_and_ties() {
        let mask = [true, false, false, true, false];
        let u: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let curve = pr_curve(&u, &mask).unwrap();
        assert_eq!(curve.points[0].recall, 1.0);
        assert_eq!(curve.points[0].precision, 1.0);
        assert_eq!(auc_pr(&u, &mask).unwrap(), 1.0);

        let curve = pr_curve(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!((curve.points[0].recall, curve.points[0].precision), (1.0, 0.5));

        // constant map scores the prevalence
        assert_eq!(auc_pr(&[0.3; 5], &mask).unwrap(), 2.0 / 5.0);
        assert!(matches!(auc_pr(&[0.1, 0.2], &[false, false]), Err(Error::Undefined(_))));
    }

    #[test]
    fn dice_examples() {
        assert_eq!(dice(&[true, false, true], &[true, false, true]).unwrap(), 1.0);
        assert_eq!(dice(&[true, false], &[false, true]).unwrap(), 0.0);
        assert_eq!(dice(&[false, false], &[false, false]).unwrap(), 1.0);
        assert_eq!(dice(&[true, true, false], &[true, false, false]).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn brats_perfect_constant_is_one() {
        let gt = [true, false, true, false, false];
        let (score, curves) = brats_unc(&[0.0; 5], &gt, &gt, 100).unwrap();
        assert_eq!(score, 1.0);
        assert_eq!(curves.thresholds.len(), 1);
    }

    #[test]
    fn brats_nothing_filtered_at_max() {
        let u = [0.1, 0.7, 0.3, 0.9, 0.2, 0.5];
        let pred = [true, true, false, false, true, false];
        let gt = [true, false, false, true, true, false];
        let p = brats_point(&u, &pred, &gt, 0.9).unwrap();
        assert_eq!(p.dice, dice(&pred, &gt).unwrap());
        assert_eq!((p.tpr, p.tnr), (0.0, 0.0));
    }

    /// Enumerates every grid threshold and recounts kept voxels directly.
    fn brats_oracle(u: &[f64], pred: &[bool], gt: &[bool], n: usize) -> f64 {
        let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / n as f64;
        let tp_all = (0..u.len()).filter(|&i| pred[i] && gt[i]).count();
        let tn_all = (0..u.len()).filter(|&i| !pred[i] && !gt[i]).count();
        let mut acc = 0.0;
        for k in 0..n {
            let t = lo + k as f64 * width;
            let keep: Vec<usize> = (0..u.len()).filter(|&i| u[i] <= t).collect();
            let tp = keep.iter().filter(|&&i| pred[i] && gt[i]).count();
            let tn = keep.iter().filter(|&&i| !pred[i] && !gt[i]).count();
            let p = keep.iter().filter(|&&i| pred[i]).count();
            let g = keep.iter().filter(|&&i| gt[i]).count();
            let d = if p + g == 0 { 1.0 } else { 2.0 * tp as f64 / (p + g) as f64 };
            let tpr = if tp_all == 0 { 0.0 } else { (tp_all - tp) as f64 / tp_all as f64 };
            let tnr = if tn_all == 0 { 0.0 } else { (tn_all - tn) as f64 / tn_all as f64 };
            acc += d + (1.0 - tnr) + (1.0 - tpr);
        }
        acc / 3.0 / n as f64
    }

    #[test]
    fn brats_eight_voxel_case_matches_oracle() {
        let u = [0.05, 0.9, 0.4, 0.62, 0.11, 0.33, 0.78, 0.2];
        let pred = [true, true, false, true, false, false, true, false];
        let gt = [true, false, false, true, true, false, true, true];
        let (score, curves) = brats_unc(&u, &pred, &gt, 100).unwrap();
        assert!((score - brats_oracle(&u, &pred, &gt, 100)).abs() < 1e-12);
        assert_eq!(curves.thresholds.len(), 100);
        assert!(curves.tpr.windows(2).all(|w| w[1] <= w[0]));
        assert!(curves.tnr.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn brats_rejects_bad_input() {
        assert!(brats_unc(&[0.1, 0.2], &[true], &[true, false], 100).is_err());
        assert!(brats_unc(&[0.1, 0.2], &[true, false], &[true, false], 1).is_err());
        assert!(brats_unc(&[0.1, f64::NAN], &[true, false], &[true, false], 10).is_err());
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("auc_pr_combined".parse::<Metric>().unwrap(), Metric::AucPrCombined);
        assert_eq!("brats_unc[2]".parse::<Metric>().unwrap(), Metric::BratsUnc(2));
        assert_eq!("auc_pr_class:1".parse::<Metric>().unwrap(), Metric::AucPrClass(1));
        assert!("dice".parse::<Metric>().is_err());
        assert!("nope".parse::<Metric>().is_err());
        for m in [Metric::AucPrCombined, Metric::Dice(0), Metric::BratsUnc(4)] {
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
    }

    #[test]
    fn evaluate_case_emits_every_metric() {
        let dims = Dims::new(4, 1, 1);
        let pred = labels(&[0, 1, 1, 0], 2);
        let gt = labels(&[0, 1, 0, 0], 2);
        let maps = vec![
            UncertaintyMap::new(MapId::MuEntropy, Scope::Combined, dims, vec![0.1, 0.2, 0.9, 0.0]).unwrap(),
            UncertaintyMap::new(MapId::CwVariance, Scope::Class(0), dims, vec![0.1, 0.2, 0.9, 0.0]).unwrap(),
            UncertaintyMap::new(MapId::CwVariance, Scope::Class(1), dims, vec![0.1, 0.2, 0.9, 0.0]).unwrap(),
        ];
        let ev = evaluate_case("m", "p", &pred, &gt, &maps, 100).unwrap();
        assert!(ev.skipped.is_empty());
        assert_eq!(ev.records.len(), 1 + 2 * 2 + 2);
        assert_eq!(ev.records[0].value, 1.0);

        let ev = evaluate_case("m", "p", &pred, &pred, &maps, 100).unwrap();
        assert_eq!(ev.skipped.len(), 3);
        assert!(ev
            .records
            .iter()
            .filter(|r| matches!(r.metric, Metric::Dice(_)))
            .all(|r| r.value == 1.0));
    }

    proptest! {
        #[test]
        fn ap_matches_oracle_and_is_rank_invariant(
            raw in proptest::collection::vec((0u32..40, any::<bool>()), 1..200),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let u: Vec<f64> = raw.iter().map(|(q, _)| *q as f64 / 40.0).collect();
            let mut mask: Vec<bool> = raw.iter().map(|(_, m)| *m).collect();
            mask[0] = true;
            let ap = auc_pr(&u, &mask).unwrap();
            prop_assert_eq!(ap.to_bits(), ap_oracle(&u, &mask).to_bits());
            let ex: Vec<f64> = u.iter().map(|x| x.exp()).collect();
            prop_assert_eq!(ap.to_bits(), auc_pr(&ex, &mask).unwrap().to_bits());
            let af: Vec<f64> = u.iter().map(|x| a * x + b).collect();
            prop_assert_eq!(ap.to_bits(), auc_pr(&af, &mask).unwrap().to_bits());
            prop_assert!(ap > 0.0 && ap <= 1.0);
        }

        #[test]
        fn brats_score_in_unit_interval(
            raw in proptest::collection::vec((0.0f64..1.0, any::<bool>(), any::<bool>()), 1..100),
        ) {
            let u: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let pred: Vec<bool> = raw.iter().map(|r| r.1).collect();
            let gt: Vec<bool> = raw.iter().map(|r| r.2).collect();
            let (score, curves) = brats_unc(&u, &pred, &gt, 100).unwrap();
            prop_assert!((0.0..=1.0).contains(&score));
            prop_assert!(curves.tpr.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(curves.tnr.windows(2).all(|w| w[1] <= w[0]));
            for k in 0..curves.dice.len() {
                prop_assert!((0.0..=1.0).contains(&curves.dice[k]));
            }
        }

        #[test]
        fn dice_is_symmetric(raw in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..64)) {
            let p: Vec<bool> = raw.iter().map(|r| r.0).collect();
            let g: Vec<bool> = raw.iter().map(|r| r.1).collect();
            prop_assert_eq!(dice(&p, &g).unwrap(), dice(&g, &p).unwrap());
        }
    }
}
