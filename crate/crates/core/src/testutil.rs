use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dims, SampleTensor};

/// Random valid tensor: each (t, v) row is a normalized vector of uniforms.
pub(crate) fn random_tensor(t: usize, c: usize, dims: Dims, seed: u64) -> SampleTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = dims.voxels();
    let mut data = vec![0f32; t * c * v];
    for s in 0..t {
        for vox in 0..v {
            let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            for k in 0..c {
                data[(s * c + k) * v + vox] = (raw[k] / total) as f32;
            }
        }
    }
    SampleTensor::new(dims, t, c, data).unwrap()
}

pub(crate) fn random_simplex_rows(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t * c);
    for _ in 0..t {
        let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|x| x / total));
    }
    out
}
