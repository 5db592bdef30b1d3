use nrv_core::{nonlinear_rescale, Provenance, Volume3D};
use rand::Rng;

use crate::oracle::{percentile, rng};
use crate::{ensure, Outcome};

pub fn check() -> Outcome {
    let mut r = rng(3);
    let mut exact_hits = 0usize;
    for case in 0..1000 {
        let dims = [r.random_range(4..=24), r.random_range(4..=24), r.random_range(1..=12)];
        let n: usize = dims.iter().product();
        // a dim background plus a sparse bright tail, with a varying ceiling
        let ceiling = r.random_range(16..=u16::MAX as u32);
        let bright = r.random_range(0.0..0.2);
        let samples: Vec<u16> = (0..n)
            .map(|_| {
                let top = if r.random_bool(bright) { ceiling } else { ceiling / 8 };
                r.random_range(0..=top) as u16
            })
            .collect();
        let raw = Volume3D::from_u16(dims, [1.0; 3], &samples, Provenance::Real).unwrap();
        let out = nonlinear_rescale(&raw).map_err(|e| e.to_string())?;

        let p95 = percentile(raw.data(), 95);
        let max = raw.data().iter().copied().fold(0.0f32, f32::max);
        ensure!(max > p95, "case {case}: degenerate sample (max == p95)");
        let mut pairs: Vec<(f32, f32)> = raw.data().iter().copied().zip(out.data().iter().copied()).collect();
        for &(x, y) in &pairs {
            if x == p95 {
                ensure!(y == 0.75, "case {case}: p95 {p95} maps to {y}");
                exact_hits += 1;
            }
            if x == max {
                ensure!(y == 1.0, "case {case}: max {max} maps to {y}");
            }
            ensure!((0.0..=1.0).contains(&y), "case {case}: {y} out of range");
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            ensure!(w[0].1 <= w[1].1, "case {case}: not monotone between {:?} and {:?}", w[0], w[1]);
        }
    }
    Ok(format!("1000 random raw volumes: p95 -> 0.75 and max -> 1.0 exactly ({exact_hits} p95 voxels), monotone"))
}
