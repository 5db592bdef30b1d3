//! Separable Gaussian smoothing, finite differences and the exact Euclidean
//! distance transform, all on x-fastest `f64` grids with physical spacing.

use rayon::prelude::*;

use crate::volume::{linear_index, voxel_count};

/// Normalized 1-D Gaussian kernel truncated at 4 sigma (in voxels).
pub fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    if !(sigma_vox > 0.0) {
        return vec![1.0];
    }
    let radius = (4.0 * sigma_vox).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Convolves along one axis with clamp-to-edge boundaries.
fn convolve_axis(src: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    if kernel.len() == 1 {
        return src.to_vec();
    }
    let radius = (kernel.len() / 2) as i64;
    let [nx, ny, nz] = dims;
    let n_axis = dims[axis] as i64;
    let mut out = vec![0.0; src.len()];

    // Each z-slab is independent for axes 0 and 1; for axis 2 split by y rows.
    match axis {
        0 | 1 => {
            out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
                for y in 0..ny {
                    for x in 0..nx {
                        let pos = if axis == 0 { x } else { y } as i64;
                        let mut acc = 0.0;
                        for (k, w) in kernel.iter().enumerate() {
                            let p = (pos + k as i64 - radius).clamp(0, n_axis - 1) as usize;
                            let idx = if axis == 0 {
                                linear_index(dims, p, y, z)
                            } else {
                                linear_index(dims, x, p, z)
                            };
                            acc += w * src[idx];
                        }
                        slab[x + nx * y] = acc;
                    }
                }
            });
        }
        _ => {
            let plane = nx * ny;
            let columns: Vec<Vec<f64>> = (0..plane)
                .into_par_iter()
                .map(|xy| {
                    (0..nz as i64)
                        .map(|z| {
                            kernel
                                .iter()
                                .enumerate()
                                .map(|(k, w)| {
                                    let p = (z + k as i64 - radius).clamp(0, n_axis - 1) as usize;
                                    w * src[xy + plane * p]
                                })
                                .sum()
                        })
                        .collect()
                })
                .collect();
            for (xy, col) in columns.into_iter().enumerate() {
                for (z, v) in col.into_iter().enumerate() {
                    out[xy + plane * z] = v;
                }
            }
        }
    }
    out
}

/// Separable Gaussian blur with per-axis sigma given in voxels.
pub fn gaussian_blur(src: &[f64], dims: [usize; 3], sigma_vox: [f64; 3]) -> Vec<f64> {
    debug_assert_eq!(src.len(), voxel_count(dims));
    let mut buf = src.to_vec();
    for axis in 0..3 {
        buf = convolve_axis(&buf, dims, axis, &gaussian_kernel(sigma_vox[axis]));
    }
    buf
}

#[inline]
fn at(src: &[f64], dims: [usize; 3], x: i64, y: i64, z: i64) -> f64 {
    let cx = x.clamp(0, dims[0] as i64 - 1) as usize;
    let cy = y.clamp(0, dims[1] as i64 - 1) as usize;
    let cz = z.clamp(0, dims[2] as i64 - 1) as usize;
    src[linear_index(dims, cx, cy, cz)]
}

/// Central-difference gradient magnitude (per micrometre), clamped at borders.
pub fn gradient_magnitude(src: &[f64], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, _] = dims;
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        let z = z as i64;
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                let gx = (at(src, dims, x + 1, y, z) - at(src, dims, x - 1, y, z)) / (2.0 * spacing[0]);
                let gy = (at(src, dims, x, y + 1, z) - at(src, dims, x, y - 1, z)) / (2.0 * spacing[1]);
                let gz = (at(src, dims, x, y, z + 1) - at(src, dims, x, y, z - 1)) / (2.0 * spacing[2]);
                slab[x as usize + nx * y as usize] = (gx * gx + gy * gy + gz * gz).sqrt();
            }
        }
    });
    out
}

/// Symmetric Hessian `[xx, yy, zz, xy, xz, yz]` at one voxel by central differences.
#[inline]
pub fn hessian_at(src: &[f64], dims: [usize; 3], spacing: [f64; 3], x: i64, y: i64, z: i64) -> [f64; 6] {
    let c = at(src, dims, x, y, z);
    let [sx, sy, sz] = spacing;
    let dxx = (at(src, dims, x + 1, y, z) - 2.0 * c + at(src, dims, x - 1, y, z)) / (sx * sx);
    let dyy = (at(src, dims, x, y + 1, z) - 2.0 * c + at(src, dims, x, y - 1, z)) / (sy * sy);
    let dzz = (at(src, dims, x, y, z + 1) - 2.0 * c + at(src, dims, x, y, z - 1)) / (sz * sz);
    let dxy = (at(src, dims, x + 1, y + 1, z) - at(src, dims, x + 1, y - 1, z)
        - at(src, dims, x - 1, y + 1, z)
        + at(src, dims, x - 1, y - 1, z))
        / (4.0 * sx * sy);
    let dxz = (at(src, dims, x + 1, y, z + 1) - at(src, dims, x + 1, y, z - 1)
        - at(src, dims, x - 1, y, z + 1)
        + at(src, dims, x - 1, y, z - 1))
        / (4.0 * sx * sz);
    let dyz = (at(src, dims, x, y + 1, z + 1) - at(src, dims, x, y + 1, z - 1)
        - at(src, dims, x, y - 1, z + 1)
        + at(src, dims, x, y - 1, z - 1))
        / (4.0 * sy * sz);
    [dxx, dyy, dzz, dxy, dxz, dyz]
}

/// Eigenvalues of a symmetric 3x3 matrix `[a00, a11, a22, a01, a02, a12]`,
/// ascending. Closed-form trigonometric solution.
pub fn symmetric_eigenvalues(m: [f64; 6]) -> [f64; 3] {
    let [a00, a11, a22, a01, a02, a12] = m;
    let p1 = a01 * a01 + a02 * a02 + a12 * a12;
    let q = (a00 + a11 + a22) / 3.0;
    let scale = a00.abs().max(a11.abs()).max(a22.abs()).max(p1.sqrt());
    if p1 <= 1e-30 * scale * scale || scale == 0.0 {
        let mut e = [a00, a11, a22];
        e.sort_by(f64::total_cmp);
        return e;
    }
    let p2 = (a00 - q).powi(2) + (a11 - q).powi(2) + (a22 - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b00 = (a00 - q) / p;
    let b11 = (a11 - q) / p;
    let b22 = (a22 - q) / p;
    let b01 = a01 / p;
    let b02 = a02 / p;
    let b12 = a12 / p;
    let det = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) + b02 * (b01 * b12 - b11 * b02);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e_max = q + 2.0 * p * phi.cos();
    let e_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e_mid = 3.0 * q - e_max - e_min;
    let mut e = [e_min, e_mid, e_max];
    e.sort_by(f64::total_cmp);
    e
}

/// Lower envelope of the parabolas `w * (i - q)^2 + f(q)` over finite `f(q)`.
fn edt_1d(f: &[f64], w: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut zb = vec![0.0f64; n + 1];
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                zb[0] = f64::NEG_INFINITY;
                zb[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let (qf, pf) = (q as f64, p as f64);
            let s = ((f[q] + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf));
            if s <= zb[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            zb[k as usize] = s;
            zb[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (i, o) in out.iter_mut().enumerate() {
        while zb[j + 1] < i as f64 {
            j += 1;
        }
        let d = i as f64 - v[j] as f64;
        *o = w * d * d + f[v[j]];
    }
}

/// Exact Euclidean distance (micrometres) from every voxel to the nearest
/// `true` voxel of `features`; `INFINITY` everywhere when there are none.
pub fn distance_transform(features: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut sq: Vec<f64> = features
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in 0..3 {
        let n = dims[axis];
        let w = spacing[axis] * spacing[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let lines: Vec<(usize, usize)> = (0..dims[o2])
            .flat_map(|b| (0..dims[o1]).map(move |a| (a, b)))
            .collect();
        let results: Vec<Vec<f64>> = lines
            .par_iter()
            .map(|&(a, b)| {
                let idx = |t: usize| {
                    let mut c = [0usize; 3];
                    c[axis] = t;
                    c[o1] = a;
                    c[o2] = b;
                    linear_index(dims, c[0], c[1], c[2])
                };
                let f: Vec<f64> = (0..n).map(|t| sq[idx(t)]).collect();
                let mut out = vec![0.0; n];
                edt_1d(&f, w, &mut out);
                out
            })
            .collect();
        for (&(a, b), line) in lines.iter().zip(results) {
            for (t, val) in line.into_iter().enumerate() {
                let mut c = [0usize; 3];
                c[axis] = t;
                c[o1] = a;
                c[o2] = b;
                sq[linear_index(dims, c[0], c[1], c[2])] = val;
            }
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}
