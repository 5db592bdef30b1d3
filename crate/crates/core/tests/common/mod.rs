#![allow(dead_code)]

use nrv_core::{Kind, Provenance, Volume3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_normalized(dims: [usize; 3], seed: u64) -> Volume3D {
    let mut r = rng(seed);
    let n = dims.iter().product();
    let data = (0..n).map(|_| r.random::<f32>()).collect();
    Volume3D::new(dims, [1.0; 3], data, Kind::Normalized, Provenance::Real).unwrap()
}

/// Mostly background with sparse bright voxels, so thresholds matter.
pub fn random_sparse(dims: [usize; 3], seed: u64, fg: f64) -> Volume3D {
    let mut r = rng(seed);
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| if r.random_bool(fg) { r.random_range(0.1f32..=1.0) } else { r.random_range(0.0f32..0.1) })
        .collect();
    Volume3D::new(dims, [1.0; 3], data, Kind::Normalized, Provenance::Real).unwrap()
}

pub fn random_u16(dims: [usize; 3], seed: u64) -> Volume3D {
    let mut r = rng(seed);
    let n = dims.iter().product();
    let data: Vec<u16> = (0..n).map(|_| r.random()).collect();
    Volume3D::from_u16(dims, [0.325, 0.325, 1.0], &data, Provenance::Real).unwrap()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
