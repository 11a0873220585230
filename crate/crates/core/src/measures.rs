//! Per-voxel uncertainty measures.
//!
//! Description measures (variance, histogram entropy) act on the samples of a
//! single class; similarity measures (Bhattacharyya, symmetric KL) compare two
//! classes' sample histograms; multi-class measures (entropy, mutual
//! information) act on the full `T x C` block of one voxel. Logarithms are
//! natural throughout.

use serde::{Deserialize, Serialize};

use crate::data::{stable_mean, SIMPLEX_TOL};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_KL_SMOOTHING: f64 = 1e-3;

/// Discretization shared by the histogram-based measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub n_bins: usize,
    /// Pseudo-count added to every bin before the KL densities are formed.
    pub kl_smoothing: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            n_bins: DEFAULT_BINS,
            kl_smoothing: DEFAULT_KL_SMOOTHING,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::Argument(format!("n_bins must be >= 2, got {}", self.n_bins)));
        }
        if !(self.kl_smoothing > 0.0 && self.kl_smoothing.is_finite()) {
            return Err(Error::Argument(format!(
                "KL smoothing must be positive, got {}",
                self.kl_smoothing
            )));
        }
        Ok(())
    }
}

/// Fixed-width histogram over `[0, 1]`.
///
/// Bins are half-open `[b/n, (b+1)/n)` except the last, which is closed so
/// that a sample of exactly 1.0 is counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u32>,
    total: u32,
}

impl Histogram {
    pub fn from_samples(samples: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::Argument(format!("n_bins must be >= 2, got {n_bins}")));
        }
        let mut counts = Vec::new();
        count_into(samples, n_bins, &mut counts)?;
        Ok(Histogram {
            counts,
            total: samples.len() as u32,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.n_bins() as f64
    }

    /// Density `counts_b / (T * dv)`.
    pub fn density(&self, b: usize) -> f64 {
        self.counts[b] as f64 * self.n_bins() as f64 / self.total as f64
    }
}

pub fn bin_index(x: f64, n_bins: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Range(format!("sample {x} outside [0, 1]")));
    }
    Ok(((x * n_bins as f64).floor() as usize).min(n_bins - 1))
}

pub(crate) fn count_into(samples: &[f64], n_bins: usize, counts: &mut Vec<u32>) -> Result<()> {
    counts.clear();
    counts.resize(n_bins, 0);
    for &x in samples {
        counts[bin_index(x, n_bins)?] += 1;
    }
    Ok(())
}

/// Bin counts of validated samples in `[0, 1]`; truncation equals the floor
/// of [`bin_index`] for non-negative values.
pub(crate) fn count_valid_into(samples: &[f64], n_bins: usize, counts: &mut Vec<u32>) {
    counts.clear();
    counts.resize(n_bins, 0);
    let n = n_bins as f64;
    for &x in samples {
        counts[((x * n) as usize).min(n_bins - 1)] += 1;
    }
}

pub fn estimate_histogram(samples: &[f64], n_bins: usize) -> Result<Histogram> {
    Histogram::from_samples(samples, n_bins)
}

/// Population variance of the class samples.
pub fn distribution_variance(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Argument(format!(
            "variance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut scratch = samples.to_vec();
    let mean = stable_mean(&mut scratch);
    let ss: f64 = scratch.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok(ss / samples.len() as f64)
}

/// Differential entropy of the histogram density, left Riemann sum.
///
/// Can be negative: a density concentrated in one bin of width `1/n` has
/// entropy `-ln n`.
pub fn distribution_entropy(h: &Histogram) -> f64 {
    let n = h.n_bins() as f64;
    let total = h.total as f64;
    -h.counts
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let f = k as f64 * n / total;
            f * f.ln()
        })
        .sum::<f64>()
        / n
}

fn check_bins(h1: &Histogram, h2: &Histogram) -> Result<()> {
    if h1.n_bins() != h2.n_bins() {
        return Err(Error::Argument(format!(
            "histogram bin counts differ: {} vs {}",
            h1.n_bins(),
            h2.n_bins()
        )));
    }
    if h1.total == 0 || h2.total == 0 {
        return Err(Error::Argument("empty histogram".into()));
    }
    Ok(())
}

/// Bhattacharyya coefficient of the two densities, in `[0, 1]`.
pub fn bhattacharyya(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    check_bins(h1, h2)?;
    // sqrt(f1 f2) dv == sqrt(k1 k2) / sqrt(T1 T2); the integer form makes
    // identical histograms come out as exactly 1.
    Ok(bhattacharyya_counts(&h1.counts, &h2.counts, h1.total, h2.total))
}

pub(crate) fn bhattacharyya_counts(c1: &[u32], c2: &[u32], t1: u32, t2: u32) -> f64 {
    let overlap: f64 = c1
        .iter()
        .zip(c2)
        .filter(|(a, b)| **a > 0 && **b > 0)
        .map(|(&a, &b)| ((a as u64 * b as u64) as f64).sqrt())
        .sum();
    let norm = ((t1 as u64 * t2 as u64) as f64).sqrt();
    (overlap / norm).min(1.0)
}

/// `-KL(f1||f2) - KL(f2||f1)` on densities smoothed by `alpha` pseudo-counts.
pub fn symmetric_negative_kl(h1: &Histogram, h2: &Histogram, alpha: f64) -> Result<f64> {
    check_bins(h1, h2)?;
    if !(alpha > 0.0) {
        return Err(Error::Argument(format!("smoothing must be positive, got {alpha}")));
    }
    let n = h1.n_bins() as f64;
    let z1 = h1.total as f64 + n * alpha;
    let z2 = h2.total as f64 + n * alpha;
    let same_basis = h1.total == h2.total;
    // KL(f1||f2) + KL(f2||f1) = sum (f1 - f2)(ln f1 - ln f2) dv; every term is
    // non-negative and the expression is symmetric bit for bit.
    let sum: f64 = h1
        .counts
        .iter()
        .zip(&h2.counts)
        .filter(|(a, b)| !(same_basis && a == b))
        .map(|(&a, &b)| {
            let f1 = (a as f64 + alpha) / z1 * n;
            let f2 = (b as f64 + alpha) / z2 * n;
            (f1 - f2) * (f1.ln() - f2.ln())
        })
        .sum();
    Ok(-(sum / n))
}

fn check_simplex(row: &[f64]) -> Result<()> {
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Range(format!("probability {p} outside [0, 1]")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Simplex(format!("row sums to {sum}")));
    }
    Ok(())
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy of the mean class distribution at one voxel.
pub fn multiclass_entropy(mean: &[f64]) -> Result<f64> {
    check_simplex(mean)?;
    Ok(entropy_unchecked(mean))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    (-p.iter().map(|&x| plogp(x)).sum::<f64>()).max(0.0)
}

/// Mutual information between the prediction and the sampled parameters.
///
/// `rows` is the `T x C` block of one voxel, row-major.
pub fn mutual_information(rows: &[f64], classes: usize) -> Result<f64> {
    if classes < 2 || rows.is_empty() || rows.len() % classes != 0 {
        return Err(Error::Shape(format!(
            "{} values cannot form rows of {classes} classes",
            rows.len()
        )));
    }
    for row in rows.chunks_exact(classes) {
        check_simplex(row)?;
    }
    let mut scratch = Vec::new();
    let mean = column_means(rows, classes, &mut scratch);
    Ok(mi_with_mean(rows, classes, &mean))
}

pub(crate) fn column_means(rows: &[f64], classes: usize, scratch: &mut Vec<f64>) -> Vec<f64> {
    (0..classes)
        .map(|c| {
            scratch.clear();
            scratch.extend(rows.iter().skip(c).step_by(classes));
            stable_mean(scratch)
        })
        .collect()
}

/// `(1/T) sum_t sum_c p_tc (ln p_tc - ln m_c)`, which equals
/// `H(m) + (1/T) sum_t sum_c p_tc ln p_tc` when `m` is the column mean.
pub(crate) fn mi_with_mean(rows: &[f64], classes: usize, mean: &[f64]) -> f64 {
    let log_mean: Vec<f64> = mean
        .iter()
        .map(|&m| if m > 0.0 { m.ln() } else { 0.0 })
        .collect();
    let t = rows.len() / classes;
    let acc: f64 = rows
        .chunks_exact(classes)
        .map(|row| {
            row.iter()
                .zip(&log_mean)
                .filter(|(p, _)| **p > 0.0)
                .map(|(&p, &lm)| p * (p.ln() - lm))
                .sum::<f64>()
        })
        .sum();
    (acc / t as f64).max(0.0)
}

/// Per-count terms of histograms with a fixed total and bin count.
///
/// Every voxel of a tensor has the same number of samples, so the entropy and
/// KL terms depend only on the bin count. Entries use the same expressions as
/// [`distribution_entropy`] and [`symmetric_negative_kl`], which keeps the
/// results bit-identical.
#[derive(Debug, Clone)]
pub(crate) struct CountTables {
    n_bins: usize,
    f_ln_f: Vec<f64>,
    kl_density: Vec<f64>,
    kl_log: Vec<f64>,
}

impl CountTables {
    pub(crate) fn new(total: u32, cfg: MeasureConfig) -> Self {
        let n = cfg.n_bins as f64;
        let z = total as f64 + n * cfg.kl_smoothing;
        let f_ln_f = (0..=total)
            .map(|k| {
                let f = k as f64 * n / total as f64;
                if k == 0 {
                    0.0
                } else {
                    f * f.ln()
                }
            })
            .collect();
        let kl_density: Vec<f64> = (0..=total)
            .map(|k| (k as f64 + cfg.kl_smoothing) / z * n)
            .collect();
        let kl_log = kl_density.iter().map(|f| f.ln()).collect();
        CountTables {
            n_bins: cfg.n_bins,
            f_ln_f,
            kl_density,
            kl_log,
        }
    }

    pub(crate) fn entropy(&self, counts: &[u32]) -> f64 {
        -counts
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| self.f_ln_f[k as usize])
            .sum::<f64>()
            / self.n_bins as f64
    }

    /// Symmetric negative KL of two histograms sharing this table's total.
    pub(crate) fn neg_kl(&self, c1: &[u32], c2: &[u32]) -> f64 {
        let sum: f64 = c1
            .iter()
            .zip(c2)
            .filter(|(a, b)| a != b)
            .map(|(&a, &b)| {
                let (f1, f2) = (self.kl_density[a as usize], self.kl_density[b as usize]);
                (f1 - f2) * (self.kl_log[a as usize] - self.kl_log[b as usize])
            })
            .sum();
        -(sum / self.n_bins as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_simplex_rows;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn histogram_boundaries() {
        let h = estimate_histogram(&[0.0; 7], 100).unwrap();
        assert_eq!(h.counts()[0], 7);
        assert_eq!(h.counts()[1..].iter().sum::<u32>(), 0);
        let h = estimate_histogram(&[1.0], 100).unwrap();
        assert_eq!(h.counts()[99], 1);
        assert!(matches!(estimate_histogram(&[1.01], 100), Err(Error::Range(_))));
        assert!(matches!(estimate_histogram(&[f64::NAN], 100), Err(Error::Range(_))));
        assert!(estimate_histogram(&[0.5], 1).is_err());
    }

    #[test]
    fn histogram_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let h = estimate_histogram(&xs, 100).unwrap();
        for b in 0..100 {
            let lo = b as f64 / 100.0;
            let hi = (b + 1) as f64 / 100.0;
            // brute-force: count by comparing against the bin edges
            let expected = xs
                .iter()
                .filter(|&&x| (x * 100.0).floor() as usize == b || (b == 99 && x == 1.0))
                .count();
            assert_eq!(h.counts()[b] as usize, expected, "bin {b} [{lo}, {hi})");
        }
        assert_eq!(h.total(), 1000);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(distribution_variance(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert_eq!(distribution_variance(&[0.0, 1.0]).unwrap(), 0.25);
        assert!(distribution_variance(&[0.5]).is_err());
    }

    #[test]
    fn variance_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let mean = xs.iter().sum::<f64>() / 50.0;
        let oracle = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 50.0;
        assert!(close(distribution_variance(&xs).unwrap(), oracle, 1e-12));
    }

    #[test]
    fn entropy_closed_forms() {
        let single = estimate_histogram(&[0.42; 50], 100).unwrap();
        assert!(close(distribution_entropy(&single), -(100f64).ln(), 1e-12));

        let uniform: Vec<f64> = (0..100).map(|b| (b as f64 + 0.5) / 100.0).collect();
        let h = estimate_histogram(&uniform, 100).unwrap();
        assert!(close(distribution_entropy(&h), 0.0, 1e-12));

        let mut two = vec![0.105; 25];
        two.extend(vec![0.905; 25]);
        let h = estimate_histogram(&two, 100).unwrap();
        assert!(close(distribution_entropy(&h), -(50f64).ln(), 1e-12));
    }

    #[test]
    fn bhattacharyya_extremes_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..50).map(|_| rng.random::<f64>().powi(2)).collect();
        let h1 = estimate_histogram(&xs, 100).unwrap();
        let h2 = estimate_histogram(&ys, 100).unwrap();
        assert_eq!(bhattacharyya(&h1, &h1).unwrap(), 1.0);

        let low = estimate_histogram(&[0.001; 10], 100).unwrap();
        let high = estimate_histogram(&[0.995; 10], 100).unwrap();
        assert_eq!(bhattacharyya(&low, &high).unwrap(), 0.0);

        let dv = 0.01;
        let oracle: f64 = (0..100)
            .map(|b| (h1.density(b) * h2.density(b)).sqrt() * dv)
            .sum();
        assert!(close(bhattacharyya(&h1, &h2).unwrap(), oracle, 1e-12));

        let coarse = estimate_histogram(&xs, 10).unwrap();
        assert!(bhattacharyya(&h1, &coarse).is_err());
    }

    #[test]
    fn kl_identity_symmetry_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..50).map(|_| rng.random::<f64>().sqrt()).collect();
        let h1 = estimate_histogram(&xs, 100).unwrap();
        let h2 = estimate_histogram(&ys, 100).unwrap();
        let a = DEFAULT_KL_SMOOTHING;
        assert_eq!(symmetric_negative_kl(&h1, &h1, a).unwrap(), 0.0);
        let s12 = symmetric_negative_kl(&h1, &h2, a).unwrap();
        let s21 = symmetric_negative_kl(&h2, &h1, a).unwrap();
        assert_eq!(s12.to_bits(), s21.to_bits());
        assert!(s12 < 0.0);

        // direct KL(f||g) = sum f ln(f/g) dv on smoothed densities
        let smooth = |h: &Histogram| -> Vec<f64> {
            let z = 50.0 + 100.0 * a;
            h.counts().iter().map(|&k| (k as f64 + a) / z * 100.0).collect()
        };
        let (f, g) = (smooth(&h1), smooth(&h2));
        let kl = |p: &[f64], q: &[f64]| -> f64 {
            p.iter().zip(q).map(|(x, y)| x * (x / y).ln() * 0.01).sum()
        };
        let oracle = -kl(&f, &g) - kl(&g, &f);
        assert!(close(s12, oracle, 1e-12), "{s12} vs {oracle}");
        assert!(symmetric_negative_kl(&h1, &h2, 0.0).is_err());
    }

    #[test]
    fn multiclass_entropy_examples() {
        assert!(close(multiclass_entropy(&[0.5, 0.5]).unwrap(), 2f64.ln(), 1e-15));
        assert_eq!(multiclass_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(close(
            multiclass_entropy(&[0.7, 0.2, 0.1]).unwrap(),
            0.801818_7,
            1e-6
        ));
        let hand = -(0.7f64 * 0.7f64.ln() + 0.2 * 0.2f64.ln() + 0.1 * 0.1f64.ln());
        assert!(close(multiclass_entropy(&[0.7, 0.2, 0.1]).unwrap(), hand, 1e-15));
        assert!(matches!(
            multiclass_entropy(&[0.7, 0.7]),
            Err(Error::Simplex(_))
        ));
    }

    #[test]
    fn mutual_information_examples() {
        let same = [0.2, 0.3, 0.5].repeat(10);
        assert_eq!(mutual_information(&same, 3).unwrap(), 0.0);
        let split = [1.0, 0.0, 0.0, 1.0];
        assert!(close(mutual_information(&split, 2).unwrap(), 2f64.ln(), 1e-15));
        assert!(matches!(
            mutual_information(&[0.5, 0.6, 0.5, 0.5], 2),
            Err(Error::Simplex(_))
        ));
    }

    #[test]
    fn mutual_information_matches_two_term_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows = random_simplex_rows(&mut rng, 50, 3);
        let mut mean = [0.0; 3];
        for row in rows.chunks(3) {
            for c in 0..3 {
                mean[c] += row[c] / 50.0;
            }
        }
        let h: f64 = -mean.iter().map(|m| m * m.ln()).sum::<f64>();
        let cond: f64 = rows.iter().map(|p| p * p.ln()).sum::<f64>() / 50.0;
        assert!(close(mutual_information(&rows, 3).unwrap(), h + cond, 1e-12));
    }

    proptest! {
        #[test]
        fn variance_nonnegative_and_permutation_invariant(
            xs in proptest::collection::vec(0.0f64..=1.0, 2..60),
            rot in 0usize..60,
        ) {
            let v = distribution_variance(&xs).unwrap();
            prop_assert!(v >= 0.0 && v <= 0.25 + 1e-15);
            let mut ys = xs.clone();
            ys.rotate_left(rot % xs.len());
            prop_assert!((distribution_variance(&ys).unwrap() - v).abs() < 1e-15);
            let all_equal = xs.iter().all(|x| *x == xs[0]);
            prop_assert_eq!(v == 0.0, all_equal);
        }

        #[test]
        fn similarity_bounds(
            xs in proptest::collection::vec(0.0f64..=1.0, 2..60),
            ys in proptest::collection::vec(0.0f64..=1.0, 2..60),
        ) {
            let h1 = estimate_histogram(&xs, 100).unwrap();
            let h2 = estimate_histogram(&ys, 100).unwrap();
            let bc = bhattacharyya(&h1, &h2).unwrap();
            prop_assert!((0.0..=1.0).contains(&bc));
            let kl = symmetric_negative_kl(&h1, &h2, DEFAULT_KL_SMOOTHING).unwrap();
            prop_assert!(kl <= 0.0);
            prop_assert_eq!(kl.to_bits(), symmetric_negative_kl(&h2, &h1, DEFAULT_KL_SMOOTHING).unwrap().to_bits());
            if h1 == h2 {
                prop_assert_eq!(bc, 1.0);
                prop_assert_eq!(kl, 0.0);
            }
        }

        #[test]
        fn information_bounds(seed in any::<u64>(), t in 2usize..40, c in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = random_simplex_rows(&mut rng, t, c);
            let mut scratch = Vec::new();
            let mean = column_means(&rows, c, &mut scratch);
            let h = multiclass_entropy(&mean).unwrap();
            prop_assert!(h >= 0.0 && h <= (c as f64).ln() + 1e-12);
            let mi = mutual_information(&rows, c).unwrap();
            prop_assert!(mi >= 0.0 && mi <= h + 1e-9);

            let mut reversed: Vec<f64> = Vec::new();
            for row in rows.chunks(c).rev() {
                reversed.extend_from_slice(row);
            }
            prop_assert!((mutual_information(&reversed, c).unwrap() - mi).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_peaks_at_uniform() {
        for c in 2..8 {
            let u = vec![1.0 / c as f64; c];
            assert!(close(multiclass_entropy(&u).unwrap(), (c as f64).ln(), 1e-12));
        }
    }

    #[test]
    fn count_tables_agree_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = MeasureConfig::default();
        let tables = CountTables::new(40, cfg);
        for _ in 0..200 {
            let a: Vec<f64> = (0..40).map(|_| rng.random::<f64>().powi(3)).collect();
            let b: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
            let (ha, hb) = (estimate_histogram(&a, 100).unwrap(), estimate_histogram(&b, 100).unwrap());
            assert_eq!(tables.entropy(ha.counts()), distribution_entropy(&ha));
            assert_eq!(
                tables.neg_kl(ha.counts(), hb.counts()),
                symmetric_negative_kl(&ha, &hb, cfg.kl_smoothing).unwrap()
            );
        }
    }
}
