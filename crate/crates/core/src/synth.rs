//! Synthetic MC-dropout phantoms with known ground truth.
//!
//! Each slice holds concentric regions around a slowly drifting center: the
//! innermost disk is the highest class index (lumen), surrounded by rings of
//! decreasing index, with class 0 as background. Per-class logits are scaled
//! signed distances to each region; every sample multiplies them by a dropout
//! factor, adds Gaussian noise and maps the result through a softmax.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, Dims, LabelMap, SampleTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutKind {
    /// `1/(1-p) * Bernoulli(1-p)`
    Bernoulli,
    /// `Normal(1, p/(1-p))`, second parameter a variance.
    Gaussian,
}

impl FromStr for DropoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(DropoutKind::Bernoulli),
            "gaussian" => Ok(DropoutKind::Gaussian),
            other => Err(Error::Argument(format!("unknown dropout kind '{other}'"))),
        }
    }
}

impl fmt::Display for DropoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropoutKind::Bernoulli => "bernoulli",
            DropoutKind::Gaussian => "gaussian",
        })
    }
}

fn check_rate(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("dropout rate must be in (0, 1), got {p}")));
    }
    Ok(())
}

/// Draws one multiplicative dropout factor; both laws have mean 1 and
/// variance `p / (1 - p)`.
pub fn sample_dropout_factor<R: Rng + ?Sized>(kind: DropoutKind, p: f64, rng: &mut R) -> Result<f64> {
    check_rate(p)?;
    Ok(draw_factor(kind, p, rng))
}

#[inline]
fn draw_factor<R: Rng + ?Sized>(kind: DropoutKind, p: f64, rng: &mut R) -> f64 {
    match kind {
        DropoutKind::Bernoulli => {
            if rng.random::<f64>() < p {
                0.0
            } else {
                1.0 / (1.0 - p)
            }
        }
        DropoutKind::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            1.0 + (p / (1.0 - p)).sqrt() * z
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub classes: usize,
    pub samples: usize,
    /// `None` leaves the logits unscaled (every factor is 1).
    pub dropout: Option<DropoutKind>,
    pub dropout_rate: f64,
    /// Standard deviation of the additive logit noise.
    pub noise_scale: f64,
    /// Logit units per voxel of signed distance.
    pub sharpness: f64,
    /// Seed of the per-sample noise streams.
    pub seed: u64,
    /// Seed of the geometry; phantoms sharing it share their labels.
    pub anatomy_seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: Dims::new(64, 64, 8),
            classes: 3,
            samples: 50,
            dropout: Some(DropoutKind::Bernoulli),
            dropout_rate: 0.3,
            noise_scale: 1.0,
            sharpness: 1.0,
            seed: 0,
            anatomy_seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.nx < 4 || d.ny < 4 || d.nz < 1 {
            return Err(Error::Shape(format!("phantom needs at least 4x4x1 voxels, got {d}")));
        }
        if self.classes < 2 || self.classes > 256 {
            return Err(Error::Shape(format!("classes must be in 2..=256, got {}", self.classes)));
        }
        if self.samples < 2 {
            return Err(Error::Shape(format!("need at least 2 samples, got {}", self.samples)));
        }
        check_rate(self.dropout_rate)?;
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Argument(format!("noise scale must be >= 0, got {}", self.noise_scale)));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::Argument(format!("sharpness must be > 0, got {}", self.sharpness)));
        }
        Ok(())
    }
}

/// Concentric geometry of every slice.
#[derive(Debug, Clone)]
struct Anatomy {
    centers: Vec<(f64, f64)>,
    /// Per slice, the `classes - 1` increasing ring radii.
    radii: Vec<Vec<f64>>,
}

impl Anatomy {
    fn new(spec: &PhantomSpec) -> Self {
        let d = spec.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.anatomy_seed);
        let half = d.nx.min(d.ny) as f64 / 2.0;
        let outer = half * rng.random_range(0.45..0.6);
        let inner_frac = rng.random_range(0.45..0.6);
        let drift = half * 0.15;
        let (phase_x, phase_y, phase_r) = (
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
        );
        let rings = spec.classes - 1;
        let mut centers = Vec::with_capacity(d.nz);
        let mut radii = Vec::with_capacity(d.nz);
        for z in 0..d.nz {
            let s = 2.0 * PI * z as f64 / d.nz.max(2) as f64;
            centers.push((
                (d.nx as f64 - 1.0) / 2.0 + drift * (s + phase_x).sin(),
                (d.ny as f64 - 1.0) / 2.0 + drift * (s + phase_y).cos(),
            ));
            let r_out = outer * (1.0 + 0.1 * (s + phase_r).sin());
            let r_in = r_out * inner_frac;
            let ring: Vec<f64> = (0..rings)
                .map(|i| {
                    if rings == 1 {
                        r_out
                    } else {
                        r_in + (r_out - r_in) * i as f64 / (rings - 1) as f64
                    }
                })
                .collect();
            radii.push(ring);
        }
        Anatomy { centers, radii }
    }

    /// Signed distance scores, one per class; positive inside the class region.
    fn scores(&self, dims: Dims, v: usize, out: &mut [f64]) {
        let (x, y, z) = dims.coords(v);
        let (cx, cy) = self.centers[z];
        let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        let radii = &self.radii[z];
        let classes = out.len();
        for (c, slot) in out.iter_mut().enumerate() {
            // ring index counted from the center: class C-1 is innermost
            let ring = classes - 1 - c;
            let inner = if ring == 0 { None } else { Some(radii[ring - 1]) };
            let outer = radii.get(ring).copied();
            *slot = match (inner, outer) {
                (None, Some(o)) => o - r,
                (Some(i), None) => r - i,
                (Some(i), Some(o)) => (r - i).min(o - r),
                (None, None) => unreachable!("at least one ring"),
            };
        }
    }
}

fn softmax_into(logits: &[f64], out: &mut [f32]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut exps = [0.0f64; 16];
    let mut heap;
    let buf: &mut [f64] = if logits.len() <= exps.len() {
        &mut exps[..logits.len()]
    } else {
        heap = vec![0.0; logits.len()];
        &mut heap
    };
    for (e, &l) in buf.iter_mut().zip(logits) {
        *e = (l - max).exp();
        total += *e;
    }
    for (o, e) in out.iter_mut().zip(buf.iter()) {
        *o = (e / total) as f32;
    }
}

/// Generates a phantom: the sample tensor and the noise-free labels.
///
/// Random draws are keyed by `(seed, voxel)`, so the output does not depend
/// on the worker count.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(SampleTensor, LabelMap)> {
    spec.validate()?;
    let dims = spec.dims;
    let (t_count, c_count, v_count) = (spec.samples, spec.classes, dims.voxels());
    let anatomy = Anatomy::new(spec);

    // Voxels are processed in blocks; each block fills its own t-major
    // buffer, which is then copied into the tensor plane by plane.
    const BLOCK: usize = 1024;
    let blocks: Vec<(Vec<u8>, Vec<f32>)> = (0..v_count.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let len = BLOCK.min(v_count - start);
            let mut labels = Vec::with_capacity(len);
            let mut probs = vec![0f32; t_count * c_count * len];
            let mut base = vec![0.0; c_count];
            let mut logits = vec![0.0; c_count];
            let mut row = vec![0f32; c_count];
            for i in 0..len {
                let v = start + i;
                anatomy.scores(dims, v, &mut base);
                for s in base.iter_mut() {
                    *s *= spec.sharpness;
                }
                labels.push(argmax(&base) as u8);

                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(v as u64);
                for t in 0..t_count {
                    for c in 0..c_count {
                        let factor = match spec.dropout {
                            Some(kind) => draw_factor(kind, spec.dropout_rate, &mut rng),
                            None => 1.0,
                        };
                        let noise: f64 = rng.sample(StandardNormal);
                        logits[c] = factor * base[c] + spec.noise_scale * noise;
                    }
                    softmax_into(&logits, &mut row);
                    for (c, &p) in row.iter().enumerate() {
                        probs[(t * c_count + c) * len + i] = p;
                    }
                }
            }
            (labels, probs)
        })
        .collect();

    let mut data = vec![0f32; t_count * c_count * v_count];
    let mut labels = Vec::with_capacity(v_count);
    for (b, (block_labels, probs)) in blocks.into_iter().enumerate() {
        let (start, len) = (b * BLOCK, block_labels.len());
        labels.extend(block_labels);
        for (plane, chunk) in probs.chunks_exact(len).enumerate() {
            let at = plane * v_count + start;
            data[at..at + len].copy_from_slice(chunk);
        }
    }
    Ok((
        SampleTensor::new(dims, t_count, c_count, data)?,
        LabelMap::new(dims, c_count, labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bayesian_average, predicted_labels};
    use crate::eval::misclassification_mask;
    use crate::maps::{multiclass_map, MultiClass};
    use crate::measures::MeasureConfig;

    fn small(seed: u64) -> PhantomSpec {
        PhantomSpec {
            dims: Dims::new(24, 24, 3),
            samples: 10,
            seed,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn bernoulli_support_is_two_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let f = sample_dropout_factor(DropoutKind::Bernoulli, 0.5, &mut rng).unwrap();
            assert!(f == 0.0 || f == 2.0);
        }
        assert!(sample_dropout_factor(DropoutKind::Gaussian, 1.0, &mut rng).is_err());
        assert!(sample_dropout_factor(DropoutKind::Bernoulli, 0.0, &mut rng).is_err());
    }

    #[test]
    fn noise_free_phantom_has_identical_samples() {
        let spec = PhantomSpec {
            dropout: None,
            noise_scale: 0.0,
            ..small(3)
        };
        let (s, _) = generate_phantom(&spec).unwrap();
        let v = s.voxels();
        let first = &s.as_slice()[..s.classes() * v];
        for t in 1..s.samples() {
            assert_eq!(&s.as_slice()[t * s.classes() * v..(t + 1) * s.classes() * v], first);
        }
        let mi = multiclass_map(&s, MultiClass::MutualInformation, MeasureConfig::default()).unwrap();
        assert!(mi.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn same_seed_same_phantom() {
        let a = generate_phantom(&small(7)).unwrap();
        let b = generate_phantom(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&small(8)).unwrap();
        assert_ne!(a.0, c.0);
        assert_eq!(a.1, c.1);
    }

    #[test]
    fn output_independent_of_thread_count() {
        let spec = small(11);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| generate_phantom(&spec).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn labels_are_concentric() {
        let spec = PhantomSpec {
            dims: Dims::new(64, 64, 1),
            ..small(0)
        };
        let (_, labels) = generate_phantom(&spec).unwrap();
        let d = spec.dims;
        // corners are background, and all three classes occur
        assert_eq!(labels.as_slice()[d.index(0, 0, 0)], 0);
        for c in 0..3 {
            assert!(labels.as_slice().contains(&(c as u8)), "class {c} missing");
        }
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        for bad in [
            PhantomSpec { dims: Dims::new(0, 10, 1), ..small(0) },
            PhantomSpec { dims: Dims::new(10, 10, 0), ..small(0) },
            PhantomSpec { samples: 1, ..small(0) },
            PhantomSpec { classes: 1, ..small(0) },
            PhantomSpec { dropout_rate: 1.0, ..small(0) },
            PhantomSpec { noise_scale: -1.0, ..small(0) },
        ] {
            assert!(generate_phantom(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn entropy_grows_with_noise() {
        let mut last = -1.0;
        for sigma in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let spec = PhantomSpec {
                noise_scale: sigma,
                ..small(5)
            };
            let (s, _) = generate_phantom(&spec).unwrap();
            let h = multiclass_map(&s, MultiClass::Entropy, MeasureConfig::default()).unwrap();
            let mean = h.values().iter().sum::<f64>() / h.values().len() as f64;
            assert!(mean >= last, "sigma {sigma}: {mean} < {last}");
            last = mean;
        }
    }

    #[test]
    fn more_classes_make_more_rings() {
        let spec = PhantomSpec {
            classes: 5,
            dims: Dims::new(48, 48, 1),
            ..small(1)
        };
        let (s, labels) = generate_phantom(&spec).unwrap();
        assert_eq!(s.classes(), 5);
        for c in 0..5 {
            assert!(labels.as_slice().contains(&(c as u8)));
        }
        let pred = predicted_labels(&bayesian_average(&s));
        let err = misclassification_mask(&pred, &labels).unwrap();
        assert!(err.iter().filter(|&&e| e).count() < s.voxels() / 4);
    }

    fn moments(kind: DropoutKind, p: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_dropout_factor(kind, p, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        (mean, var)
    }

    #[test]
    fn noise_laws_match_their_moments() {
        for kind in [DropoutKind::Bernoulli, DropoutKind::Gaussian] {
            for p in [0.1, 0.3, 0.5, 0.9] {
                let (mean, var) = moments(kind, p, 1_000_000, 2024);
                let target = p / (1.0 - p);
                assert!((mean - 1.0).abs() < 5e-3, "{kind} p={p}: mean {mean}");
                assert!(((var - target) / target).abs() < 0.02, "{kind} p={p}: var {var}");
            }
        }
        assert!(sample_dropout_factor(DropoutKind::Gaussian, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    /// Fraction of misclassified voxels with a differently labelled voxel
    /// within in-slice Chebyshev distance 2.
    fn near_boundary_fraction(pred: &LabelMap, gt: &LabelMap) -> (f64, f64) {
        let d = gt.dims();
        let g = gt.as_slice();
        let (mut wrong, mut near) = (0usize, 0usize);
        for (v, (&p, &t)) in pred.as_slice().iter().zip(g).enumerate() {
            if p == t {
                continue;
            }
            wrong += 1;
            let (x, y, z) = d.coords(v);
            let hit = (-2i64..=2).any(|dy| {
                (-2i64..=2).any(|dx| {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    nx >= 0
                        && ny >= 0
                        && (nx as usize) < d.nx
                        && (ny as usize) < d.ny
                        && g[d.index(nx as usize, ny as usize, z)] != t
                })
            });
            near += usize::from(hit);
        }
        (wrong as f64 / g.len() as f64, near as f64 / wrong.max(1) as f64)
    }

    #[test]
    fn errors_concentrate_near_boundaries() {
        // noise scale tuned so that about 5% of voxels are misclassified
        let spec = PhantomSpec {
            noise_scale: 14.0,
            seed: 3,
            anatomy_seed: 7,
            ..PhantomSpec::default()
        };
        let (s, gt) = generate_phantom(&spec).unwrap();
        let pred = predicted_labels(&bayesian_average(&s));
        let (error_rate, near) = near_boundary_fraction(&pred, &gt);
        assert!((0.03..0.07).contains(&error_rate), "error rate {error_rate}");
        assert!(near >= 0.80, "near-boundary fraction {near}");
    }
}
