//! Independent reference implementations shared by the criteria.

use std::collections::VecDeque;

use nrv_core::components::connected_components;
use nrv_core::volume::{coords, linear_index};
use nrv_core::{Domain, Kind, Mask, Provenance, Volume3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(dims: [usize; 3], r: &mut ChaCha8Rng) -> Volume3D {
    let n = dims.iter().product();
    let data = (0..n).map(|_| r.random::<f32>()).collect();
    Volume3D::new(dims, [1.0; 3], data, Kind::Normalized, Provenance::Real).unwrap()
}

/// Mostly dim voxels with a fraction `fg` of bright ones.
pub fn random_sparse(dims: [usize; 3], r: &mut ChaCha8Rng, fg: f64) -> Volume3D {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| if r.random_bool(fg) { r.random_range(0.1f32..=1.0) } else { r.random_range(0.0f32..0.1) })
        .collect();
    Volume3D::new(dims, [1.0; 3], data, Kind::Normalized, Provenance::Real).unwrap()
}

/// Lateral `w x w` window at `(x0, y0)` through all z.
pub fn window(v: &Volume3D, x0: usize, y0: usize, w: usize) -> Vec<f32> {
    let nz = v.dims()[2];
    let mut out = Vec::with_capacity(w * w * nz);
    for z in 0..nz {
        for y in y0..y0 + w {
            for x in x0..x0 + w {
                out.push(v.get(x, y, z));
            }
        }
    }
    out
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

/// Nearest-rank percentile by full sort.
pub fn percentile(values: &[f32], p: usize) -> f32 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p * s.len()) as f64 / 100.0).ceil().max(1.0) as usize;
    s[rank - 1]
}

pub fn naive_delta(a: &Volume3D, b: &Volume3D, t: f32) -> f64 {
    let mut active = 0i64;
    for (x, y) in a.data().iter().zip(b.data()) {
        if *x > t || *y > t {
            active += 1;
        }
    }
    1.0 / active.max(1) as f64
}

pub fn naive_l1(a: &Volume3D, b: &Volume3D) -> f64 {
    let [nx, ny, nz] = a.dims();
    let mut s = 0.0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                s += (a.get(x, y, z) as f64 - b.get(x, y, z) as f64).abs();
            }
        }
    }
    s
}

/// Sum of `clip(over - under, 0, 1)`.
pub fn naive_excess(over: &Volume3D, under: &Volume3D) -> f64 {
    over.data()
        .iter()
        .zip(under.data())
        .map(|(&o, &u)| (o as f64 - u as f64).clamp(0.0, 1.0))
        .sum()
}

fn neighbors(dims: [usize; 3], i: usize) -> Vec<(usize, [i64; 3])> {
    let c = coords(dims, i);
    let mut out = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let n = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                if (dx, dy, dz) != (0, 0, 0) && (0..3).all(|a| n[a] >= 0 && n[a] < dims[a] as i64) {
                    out.push((linear_index(dims, n[0] as usize, n[1] as usize, n[2] as usize), [dx, dy, dz]));
                }
            }
        }
    }
    out
}

pub fn step_length(off: [i64; 3], s: [f64; 3]) -> f64 {
    ((off[0] as f64 * s[0]).powi(2) + (off[1] as f64 * s[1]).powi(2) + (off[2] as f64 * s[2]).powi(2)).sqrt()
}

/// Label-correcting relaxation (Bellman-Ford with a FIFO queue) to a fixpoint.
fn relax(dims: [usize; 3], sources: &[usize], allowed: &Mask, dist: &mut [f64]) {
    let mut queue: VecDeque<usize> = sources.iter().copied().collect();
    for &s in sources {
        dist[s] = 0.0;
    }
    while let Some(u) = queue.pop_front() {
        for (v, off) in neighbors(dims, u) {
            if allowed.get(v) {
                let nd = dist[u] + step_length(off, [1.0; 3]);
                if nd < dist[v] {
                    dist[v] = nd;
                    queue.push_back(v);
                }
            }
        }
    }
}

/// Voxel closest to the component centroid, exact in integers; ties go to
/// the lowest index.
pub fn mass_center(dims: [usize; 3], voxels: &[usize]) -> usize {
    let n = voxels.len() as i128;
    let mut sum = [0i128; 3];
    for &v in voxels {
        let c = coords(dims, v);
        for a in 0..3 {
            sum[a] += c[a] as i128;
        }
    }
    let mut best = (i128::MAX, usize::MAX);
    for &v in voxels {
        let c = coords(dims, v);
        let d: i128 = (0..3).map(|a| (n * c[a] as i128 - sum[a]).pow(2)).sum();
        if d < best.0 || (d == best.0 && v < best.1) {
            best = (d, v);
        }
    }
    best.1
}

/// Shortest-path distances on unit spacing: from the static set through the
/// dynamic set, then from the mass centre of each unreachable component.
pub fn morph_distances(st: &Mask, dy: &Mask) -> Vec<f64> {
    let dims = st.dims();
    let mut dist = vec![f64::INFINITY; st.len()];
    let sources: Vec<usize> = st.ones().collect();
    relax(dims, &sources, dy, &mut dist);
    let unreached = Mask::from_indices(dims, dy.ones().filter(|&i| dist[i].is_infinite()));
    for comp in connected_components(&unreached, Domain::Young, Provenance::Real) {
        relax(dims, &[mass_center(dims, &comp.voxels)], &unreached, &mut dist);
    }
    dist
}

pub fn threshold_mask(v: &Volume3D, t: f32) -> Mask {
    Mask::from_bits(v.dims(), v.data().iter().map(|&x| x > t).collect()).unwrap()
}
