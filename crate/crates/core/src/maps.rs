//! Uncertainty maps: a measure from [`crate::measures`] combined with an
//! aggregation over classes.
//!
//! Six maps are combined (one value per voxel) and four are class-specific
//! (one value per voxel and class). All maps are computed by a shared
//! per-voxel kernel, so a fused pass over the tensor ([`compute_maps`]) gives
//! bit-identical results to the single-map entry points.

use rayon::prelude::*;

use crate::data::{
    argmax, sorted_mean, LabelMap, MapId, SampleTensor, Scope, UncertaintyMap,
};
use crate::error::{Error, Result};
use crate::measures::{bhattacharyya_counts, count_valid_into, entropy_unchecked, CountTables, MeasureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Description {
    Variance,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Bhattacharyya,
    KullbackLeibler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiClass {
    Entropy,
    MutualInformation,
}

/// One map to compute: its identity plus the class it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MapRequest {
    pub id: MapId,
    pub scope: Scope,
}

impl MapRequest {
    pub fn combined(id: MapId) -> Self {
        MapRequest {
            id,
            scope: Scope::Combined,
        }
    }

    pub fn class(id: MapId, c: usize) -> Self {
        MapRequest {
            id,
            scope: Scope::Class(c),
        }
    }

    fn validate(&self, classes: usize) -> Result<()> {
        match self.scope {
            Scope::Combined if self.id.is_combined() => Ok(()),
            Scope::Class(c) if !self.id.is_combined() => {
                if c < classes {
                    Ok(())
                } else {
                    Err(Error::ClassIndex { class: c, classes })
                }
            }
            _ => Err(Error::Argument(format!(
                "{} cannot be computed with scope {:?}",
                self.id, self.scope
            ))),
        }
    }
}

/// The full catalog for `classes` classes: 6 combined maps followed by the
/// 4 class-specific maps for every class.
pub fn all_requests(classes: usize) -> Vec<MapRequest> {
    let mut out: Vec<MapRequest> = MapId::COMBINED.iter().map(|&id| MapRequest::combined(id)).collect();
    for id in MapId::CLASS_SPECIFIC {
        for c in 0..classes {
            out.push(MapRequest::class(id, c));
        }
    }
    out
}

/// Expands map ids to requests, class-specific ids for every class.
pub fn requests_for(ids: &[MapId], classes: usize) -> Vec<MapRequest> {
    let mut out = Vec::new();
    for &id in ids {
        if id.is_combined() {
            out.push(MapRequest::combined(id));
        } else {
            out.extend((0..classes).map(|c| MapRequest::class(id, c)));
        }
    }
    out
}

/// Per-voxel scratch state. Columns are kept sorted; only the multiset of a
/// class's samples matters for every measure, so all of them are evaluated
/// on sorted columns. Histograms, descriptions and logarithms are computed
/// lazily and shared between requests for the same voxel.
struct VoxelWork<'a> {
    tensor: &'a SampleTensor,
    cfg: MeasureConfig,
    tables: CountTables,
    columns: Vec<Vec<f64>>,
    mean: Vec<f64>,
    counts: Vec<Vec<u32>>,
    has_counts: Vec<bool>,
    described: Vec<[Option<f64>; 2]>,
    logs: Vec<Vec<f64>>,
    has_logs: bool,
    order: Vec<usize>,
    top2: Option<(usize, usize)>,
    scratch: Vec<f64>,
    keys: Vec<u32>,
}

fn ln_or_zero(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        0.0
    }
}

impl<'a> VoxelWork<'a> {
    fn new(tensor: &'a SampleTensor, cfg: MeasureConfig) -> Self {
        let c = tensor.classes();
        let t = tensor.samples();
        VoxelWork {
            tensor,
            cfg,
            tables: CountTables::new(t as u32, cfg),
            columns: vec![Vec::with_capacity(t); c],
            mean: vec![0.0; c],
            counts: vec![Vec::with_capacity(cfg.n_bins); c],
            has_counts: vec![false; c],
            described: vec![[None; 2]; c],
            logs: vec![Vec::with_capacity(t); c],
            has_logs: false,
            order: Vec::with_capacity(c),
            top2: None,
            scratch: Vec::with_capacity(t),
            keys: Vec::with_capacity(t),
        }
    }

    fn load(&mut self, v: usize) {
        for c in 0..self.tensor.classes() {
            self.tensor
                .sorted_class_samples_into(c, v, &mut self.keys, &mut self.columns[c]);
            self.mean[c] = sorted_mean(&self.columns[c]);
            self.has_counts[c] = false;
            self.described[c] = [None; 2];
        }
        self.has_logs = false;
        self.top2 = None;
    }

    fn counts(&mut self, c: usize) -> Result<()> {
        if !self.has_counts[c] {
            count_valid_into(&self.columns[c], self.cfg.n_bins, &mut self.counts[c]);
            self.has_counts[c] = true;
        }
        Ok(())
    }

    fn describe(&mut self, c: usize, d: Description) -> Result<f64> {
        let slot = d as usize;
        if let Some(x) = self.described[c][slot] {
            return Ok(x);
        }
        let x = match d {
            Description::Variance => {
                let m = self.mean[c];
                let col = &self.columns[c];
                col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64
            }
            Description::Entropy => {
                self.counts(c)?;
                self.tables.entropy(&self.counts[c])
            }
        };
        self.described[c][slot] = Some(x);
        Ok(x)
    }

    fn top_two(&mut self) -> (usize, usize) {
        if let Some(p) = self.top2 {
            return p;
        }
        self.order.clear();
        self.order.extend(0..self.mean.len());
        let mean = &self.mean;
        // descending mean, ties toward the lower class index
        self.order
            .sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
        let p = (self.order[0], self.order[1]);
        self.top2 = Some(p);
        p
    }

    fn similarity(&mut self, sim: Similarity) -> Result<f64> {
        let (c1, c2) = self.top_two();
        self.counts(c1)?;
        self.counts(c2)?;
        let (h1, h2) = (&self.counts[c1], &self.counts[c2]);
        let t = self.tensor.samples() as u32;
        Ok(match sim {
            Similarity::Bhattacharyya => bhattacharyya_counts(h1, h2, t, t),
            Similarity::KullbackLeibler => self.tables.neg_kl(h1, h2),
        })
    }

    fn ensure_logs(&mut self) {
        if self.has_logs {
            return;
        }
        for (col, logs) in self.columns.iter().zip(self.logs.iter_mut()) {
            logs.clear();
            logs.extend(col.iter().map(|&p| ln_or_zero(p)));
        }
        self.has_logs = true;
    }

    fn multiclass(&mut self, m: MultiClass) -> f64 {
        match m {
            MultiClass::Entropy => entropy_unchecked(&self.mean),
            MultiClass::MutualInformation => {
                // (1/T) sum_t sum_c p (ln p - ln m_c), summed class by class
                self.ensure_logs();
                let mut acc = 0.0;
                for c in 0..self.mean.len() {
                    let lm = ln_or_zero(self.mean[c]);
                    acc += self.columns[c]
                        .iter()
                        .zip(&self.logs[c])
                        .filter(|(p, _)| **p > 0.0)
                        .map(|(&p, &lp)| p * (lp - lm))
                        .sum::<f64>();
                }
                (acc / self.tensor.samples() as f64).max(0.0)
            }
        }
    }

    /// Multi-class measure on the two-class block `(y^c, 1 - y^c)`.
    fn one_vs_all(&mut self, c: usize, m: MultiClass) -> f64 {
        self.scratch.clear();
        // the reversed column gives the complement in ascending order; 1 - y
        // is exact for f32 inputs
        self.scratch
            .extend(self.columns[c].iter().rev().map(|y| 1.0 - y));
        let binary_mean = [self.mean[c], sorted_mean(&self.scratch)];
        match m {
            MultiClass::Entropy => entropy_unchecked(&binary_mean),
            MultiClass::MutualInformation => {
                self.ensure_logs();
                let (lm, lq) = (ln_or_zero(binary_mean[0]), ln_or_zero(binary_mean[1]));
                let acc: f64 = self.columns[c]
                    .iter()
                    .zip(&self.logs[c])
                    .map(|(&y, &ly)| {
                        let q = 1.0 - y;
                        let a = if y > 0.0 { y * (ly - lm) } else { 0.0 };
                        let b = if q > 0.0 { q * (q.ln() - lq) } else { 0.0 };
                        a + b
                    })
                    .sum();
                (acc / self.tensor.samples() as f64).max(0.0)
            }
        }
    }

    fn value(&mut self, req: MapRequest) -> Result<f64> {
        let classes = self.tensor.classes();
        let class = match req.scope {
            Scope::Class(c) => c,
            Scope::Combined => 0,
        };
        match req.id {
            MapId::AvVariance | MapId::AvEntropy => {
                let d = if req.id == MapId::AvVariance {
                    Description::Variance
                } else {
                    Description::Entropy
                };
                let mut acc = 0.0;
                for c in 0..classes {
                    acc += self.describe(c, d)?;
                }
                Ok(acc / classes as f64)
            }
            MapId::SimBc => self.similarity(Similarity::Bhattacharyya),
            MapId::SimKl => self.similarity(Similarity::KullbackLeibler),
            MapId::MuEntropy => Ok(self.multiclass(MultiClass::Entropy)),
            MapId::MuMi => Ok(self.multiclass(MultiClass::MutualInformation)),
            MapId::CwVariance => self.describe(class, Description::Variance),
            MapId::CwEntropy => self.describe(class, Description::Entropy),
            MapId::OvaEntropy => Ok(self.one_vs_all(class, MultiClass::Entropy)),
            MapId::OvaMi => Ok(self.one_vs_all(class, MultiClass::MutualInformation)),
        }
    }
}

/// Computes several maps in one pass over the voxels.
pub fn compute_maps(
    s: &SampleTensor,
    requests: &[MapRequest],
    cfg: MeasureConfig,
) -> Result<Vec<UncertaintyMap>> {
    Ok(fused(s, requests, cfg, false)?.0)
}

/// [`compute_maps`] plus the predicted labels of the averaged prediction,
/// taken from the same pass. The labels equal
/// `predicted_labels(&bayesian_average(s))`.
pub fn compute_maps_with_labels(
    s: &SampleTensor,
    requests: &[MapRequest],
    cfg: MeasureConfig,
) -> Result<(Vec<UncertaintyMap>, LabelMap)> {
    let (maps, labels) = fused(s, requests, cfg, true)?;
    Ok((maps, LabelMap::new(s.dims(), s.classes(), labels)?))
}

fn fused(
    s: &SampleTensor,
    requests: &[MapRequest],
    cfg: MeasureConfig,
    want_labels: bool,
) -> Result<(Vec<UncertaintyMap>, Vec<u8>)> {
    cfg.validate()?;
    for r in requests {
        r.validate(s.classes())?;
    }
    let (r_count, v_count) = (requests.len(), s.voxels());
    if r_count == 0 && !want_labels {
        return Ok((Vec::new(), Vec::new()));
    }
    // one row per voxel: the requested values, then the label if wanted
    let width = r_count + usize::from(want_labels);
    let mut table = vec![0.0; width * v_count];
    table
        .par_chunks_mut(width)
        .enumerate()
        .try_for_each_init(
            || VoxelWork::new(s, cfg),
            |work, (v, out)| -> Result<()> {
                work.load(v);
                for (slot, &req) in out.iter_mut().zip(requests) {
                    *slot = work.value(req)?;
                }
                if want_labels {
                    out[r_count] = argmax(&work.mean) as f64;
                }
                Ok(())
            },
        )?;
    let labels = if want_labels {
        (0..v_count).map(|v| table[v * width + r_count] as u8).collect()
    } else {
        Vec::new()
    };
    let maps = requests
        .iter()
        .enumerate()
        .map(|(i, req)| {
            let values = (0..v_count).map(|v| table[v * width + i]).collect();
            UncertaintyMap::new(req.id, req.scope, s.dims(), values)
        })
        .collect::<Result<_>>()?;
    Ok((maps, labels))
}

fn single(s: &SampleTensor, req: MapRequest, cfg: MeasureConfig) -> Result<UncertaintyMap> {
    Ok(compute_maps(s, &[req], cfg)?.pop().expect("one request, one map"))
}

/// Mean over classes of a description measure.
pub fn averaged_map(s: &SampleTensor, d: Description, cfg: MeasureConfig) -> Result<UncertaintyMap> {
    let id = match d {
        Description::Variance => MapId::AvVariance,
        Description::Entropy => MapId::AvEntropy,
    };
    single(s, MapRequest::combined(id), cfg)
}

/// Similarity between the two most probable classes' sample histograms.
pub fn similarity_map(s: &SampleTensor, sim: Similarity, cfg: MeasureConfig) -> Result<UncertaintyMap> {
    let id = match sim {
        Similarity::Bhattacharyya => MapId::SimBc,
        Similarity::KullbackLeibler => MapId::SimKl,
    };
    single(s, MapRequest::combined(id), cfg)
}

pub fn multiclass_map(s: &SampleTensor, m: MultiClass, cfg: MeasureConfig) -> Result<UncertaintyMap> {
    let id = match m {
        MultiClass::Entropy => MapId::MuEntropy,
        MultiClass::MutualInformation => MapId::MuMi,
    };
    single(s, MapRequest::combined(id), cfg)
}

pub fn classwise_map(
    s: &SampleTensor,
    c: usize,
    d: Description,
    cfg: MeasureConfig,
) -> Result<UncertaintyMap> {
    let id = match d {
        Description::Variance => MapId::CwVariance,
        Description::Entropy => MapId::CwEntropy,
    };
    single(s, MapRequest::class(id, c), cfg)
}

pub fn one_vs_all_map(
    s: &SampleTensor,
    c: usize,
    m: MultiClass,
    cfg: MeasureConfig,
) -> Result<UncertaintyMap> {
    let id = match m {
        MultiClass::Entropy => MapId::OvaEntropy,
        MultiClass::MutualInformation => MapId::OvaMi,
    };
    single(s, MapRequest::class(id, c), cfg)
}
