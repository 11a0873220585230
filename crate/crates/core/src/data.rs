//! Tensor data model shared by every other module.
//!
//! Samples are kept as `f32` (the on-disk precision) and every reduction is
//! carried out in `f64`. Voxels are linearized with x fastest, then y, then z.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on per-voxel class sums.
pub const SIMPLEX_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub fn voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    pub fn coords(&self, v: usize) -> (usize, usize, usize) {
        let x = v % self.nx;
        let y = (v / self.nx) % self.ny;
        let z = v / (self.nx * self.ny);
        (x, y, z)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// `T x C x V` class probabilities drawn with MC dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor {
    dims: Dims,
    samples: usize,
    classes: usize,
    data: Vec<f32>,
}

impl SampleTensor {
    /// Validates and wraps a flat `[t][c][v]` buffer.
    pub fn new(dims: Dims, samples: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        let tensor = SampleTensor {
            dims,
            samples,
            classes,
            data,
        };
        tensor.validate()?;
        Ok(tensor)
    }

    fn validate(&self) -> Result<()> {
        let (t, c, v) = (self.samples, self.classes, self.dims.voxels());
        if t < 2 {
            return Err(Error::Shape(format!("need at least 2 samples, got {t}")));
        }
        if c < 2 {
            return Err(Error::Shape(format!("need at least 2 classes, got {c}")));
        }
        if c > u8::MAX as usize + 1 {
            return Err(Error::Shape(format!("at most 256 classes supported, got {c}")));
        }
        if v == 0 {
            return Err(Error::Shape("empty voxel grid".into()));
        }
        if self.data.len() != t * c * v {
            return Err(Error::Shape(format!(
                "buffer holds {} values, expected {t}x{c}x{v}",
                self.data.len()
            )));
        }
        if let Some(i) = self
            .data
            .iter()
            .position(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Range(format!(
                "sample value {} at flat index {i} outside [0, 1]",
                self.data[i]
            )));
        }
        // class planes are contiguous, so sums are accumulated plane by plane
        let mut sums = vec![0.0f64; v];
        for (s, block) in self.data.chunks_exact(c * v).enumerate() {
            sums.fill(0.0);
            for plane in block.chunks_exact(v) {
                for (acc, &p) in sums.iter_mut().zip(plane) {
                    *acc += p as f64;
                }
            }
            if let Some(vox) = sums.iter().position(|x| (x - 1.0).abs() > SIMPLEX_TOL) {
                return Err(Error::Simplex(format!(
                    "sample {s}, voxel {vox}: class sum {}",
                    sums[vox]
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn voxels(&self) -> usize {
        self.dims.voxels()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, v: usize) -> f64 {
        self.data[(t * self.classes + c) * self.dims.voxels() + v] as f64
    }

    /// Fills `out` with the `T` samples of class `c` at voxel `v`.
    pub fn class_samples_into(&self, c: usize, v: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.samples).map(|t| self.get(t, c, v)));
    }

    /// Class samples in ascending order. Non-negative f32 values order like
    /// their bit patterns, so the sort runs on integers.
    pub(crate) fn sorted_class_samples_into(
        &self,
        c: usize,
        v: usize,
        keys: &mut Vec<u32>,
        out: &mut Vec<f64>,
    ) {
        let stride = self.classes * self.dims.voxels();
        let start = c * self.dims.voxels() + v;
        keys.clear();
        // -0.0 passes validation; fold it onto +0.0
        keys.extend(
            self.data[start..]
                .iter()
                .step_by(stride)
                .take(self.samples)
                .map(|p| p.to_bits() & 0x7fff_ffff),
        );
        keys.sort_unstable();
        out.clear();
        out.extend(keys.iter().map(|&k| f32::from_bits(k) as f64));
    }

    /// Fills `out` with the `T x C` sample rows at voxel `v` (row-major).
    pub fn voxel_samples_into(&self, v: usize, out: &mut Vec<f64>) {
        out.clear();
        for t in 0..self.samples {
            out.extend((0..self.classes).map(|c| self.get(t, c, v)));
        }
    }
}

/// Per-voxel class probabilities averaged over the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPrediction {
    dims: Dims,
    classes: usize,
    mean: Vec<f64>,
}

impl MeanPrediction {
    pub fn new(dims: Dims, classes: usize, mean: Vec<f64>) -> Result<Self> {
        let v = dims.voxels();
        if classes < 2 || v == 0 || mean.len() != classes * v {
            return Err(Error::Shape(format!(
                "mean buffer of {} values does not match {classes} classes x {v} voxels",
                mean.len()
            )));
        }
        if let Some(i) = mean.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Range(format!("mean value {} at {i}", mean[i])));
        }
        for vox in 0..v {
            let sum: f64 = (0..classes).map(|c| mean[c * v + vox]).sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Simplex(format!("voxel {vox}: class sum {sum}")));
            }
        }
        Ok(MeanPrediction { dims, classes, mean })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, c: usize, v: usize) -> f64 {
        self.mean[c * self.dims.voxels() + v]
    }

    pub fn voxel_into(&self, v: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.classes).map(|c| self.get(c, v)));
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mean
    }
}

/// Ground-truth or predicted class index per voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    dims: Dims,
    classes: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(dims: Dims, classes: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.voxels() {
            return Err(Error::Shape(format!(
                "{} labels for {} voxels",
                labels.len(),
                dims.voxels()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= classes) {
            return Err(Error::ClassIndex {
                class: labels[i] as usize,
                classes,
            });
        }
        Ok(LabelMap {
            dims,
            classes,
            labels,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    /// Binary mask of voxels labelled `c`.
    pub fn class_mask(&self, c: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l as usize == c).collect()
    }
}

/// Identity of one of the ten uncertainty maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapId {
    AvVariance,
    AvEntropy,
    SimBc,
    SimKl,
    MuEntropy,
    MuMi,
    CwVariance,
    CwEntropy,
    OvaEntropy,
    OvaMi,
}

impl MapId {
    pub const ALL: [MapId; 10] = [
        MapId::AvVariance,
        MapId::AvEntropy,
        MapId::SimBc,
        MapId::SimKl,
        MapId::MuEntropy,
        MapId::MuMi,
        MapId::CwVariance,
        MapId::CwEntropy,
        MapId::OvaEntropy,
        MapId::OvaMi,
    ];

    pub const COMBINED: [MapId; 6] = [
        MapId::AvVariance,
        MapId::AvEntropy,
        MapId::SimBc,
        MapId::SimKl,
        MapId::MuEntropy,
        MapId::MuMi,
    ];

    pub const CLASS_SPECIFIC: [MapId; 4] = [
        MapId::CwVariance,
        MapId::CwEntropy,
        MapId::OvaEntropy,
        MapId::OvaMi,
    ];

    pub fn is_combined(self) -> bool {
        Self::COMBINED.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MapId::AvVariance => "av_variance",
            MapId::AvEntropy => "av_entropy",
            MapId::SimBc => "sim_bc",
            MapId::SimKl => "sim_kl",
            MapId::MuEntropy => "mu_entropy",
            MapId::MuMi => "mu_mi",
            MapId::CwVariance => "cw_variance",
            MapId::CwEntropy => "cw_entropy",
            MapId::OvaEntropy => "1va_entropy",
            MapId::OvaMi => "1va_mi",
        }
    }

    /// Human-readable name, as used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            MapId::AvVariance => "Av Variance",
            MapId::AvEntropy => "Av Entropy",
            MapId::SimBc => "Sim BC",
            MapId::SimKl => "Sim KL",
            MapId::MuEntropy => "Mu Entropy",
            MapId::MuMi => "Mu MI",
            MapId::CwVariance => "CW Variance",
            MapId::CwEntropy => "CW Entropy",
            MapId::OvaEntropy => "1vA Entropy",
            MapId::OvaMi => "1vA MI",
        }
    }
}

impl fmt::Display for MapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MapId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown map id '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    Combined,
    Class(usize),
}

/// One scalar per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub id: MapId,
    pub scope: Scope,
    dims: Dims,
    values: Vec<f64>,
}

impl UncertaintyMap {
    pub fn new(id: MapId, scope: Scope, dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.voxels() {
            return Err(Error::Shape(format!(
                "{} map values for {} voxels",
                values.len(),
                dims.voxels()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Range(format!(
                "{id} value at voxel {i} is not finite"
            )));
        }
        if id.is_combined() != (scope == Scope::Combined) {
            return Err(Error::Argument(format!("{id} cannot have scope {scope:?}")));
        }
        Ok(UncertaintyMap {
            id,
            scope,
            dims,
            values,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// File stem used when writing the map: `mu_entropy`, `cw_variance_c1`, ...
    pub fn file_stem(&self) -> String {
        match self.scope {
            Scope::Combined => self.id.as_str().to_string(),
            Scope::Class(c) => format!("{}_c{c}", self.id.as_str()),
        }
    }
}

/// Order-independent mean: sorted, then shifted by the minimum so that
/// identical inputs return themselves exactly.
pub(crate) fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    sorted_mean(values)
}

/// [`stable_mean`] of values already in ascending order.
pub(crate) fn sorted_mean(values: &[f64]) -> f64 {
    debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
    let base = values[0];
    let offset: f64 = values.iter().map(|x| x - base).sum();
    base + offset / values.len() as f64
}

/// Bayesian model averaging: the per-voxel mean over the `T` samples.
pub fn bayesian_average(s: &SampleTensor) -> MeanPrediction {
    let (c_count, v_count) = (s.classes(), s.voxels());
    let per_voxel: Vec<Vec<f64>> = (0..v_count)
        .into_par_iter()
        .map_init(Vec::new, |buf, v| {
            (0..c_count)
                .map(|c| {
                    s.class_samples_into(c, v, buf);
                    stable_mean(buf)
                })
                .collect()
        })
        .collect();
    let mut mean = vec![0.0; c_count * v_count];
    for (v, row) in per_voxel.into_iter().enumerate() {
        for (c, m) in row.into_iter().enumerate() {
            mean[c * v_count + v] = m;
        }
    }
    MeanPrediction {
        dims: s.dims(),
        classes: c_count,
        mean,
    }
}

/// Argmax over classes; ties go to the lowest class index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best
}

pub fn predicted_labels(m: &MeanPrediction) -> LabelMap {
    let v_count = m.dims().voxels();
    let mut row = Vec::with_capacity(m.classes());
    let labels = (0..v_count)
        .map(|v| {
            m.voxel_into(v, &mut row);
            argmax(&row) as u8
        })
        .collect();
    LabelMap {
        dims: m.dims(),
        classes: m.classes(),
        labels,
    }
}
