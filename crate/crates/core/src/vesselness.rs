//! Widefield preprocessing: gradient-distance background suppression, the
//! multiscale Jerman tubularity response and thresholding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{distance_transform, gaussian_blur, gradient_magnitude, hessian_at, symmetric_eigenvalues};
use crate::intensity::{foreground_mask, nearest_rank};
use crate::volume::{coords, Kind, Mask, Volume3D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VesselnessParams {
    /// Smoothing scales in micrometres, strictly increasing.
    pub sigmas_um: Vec<f64>,
    /// Regularization of the largest eigenvalue, in (0, 1].
    pub tau: f64,
    /// Extra intensity cut levels in (0, 1). The response is also evaluated on
    /// `min(v, c) / c` for each level `c`, lifting weak structures.
    pub intensity_scales: Vec<f64>,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        VesselnessParams {
            sigmas_um: vec![1.0, 2.0, 3.0],
            tau: 0.5,
            intensity_scales: Vec::new(),
        }
    }
}

impl VesselnessParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas_um.is_empty() {
            return Err(Error::InvalidParameter("at least one sigma is required".into()));
        }
        if self.sigmas_um.iter().any(|s| !(*s > 0.0)) || self.sigmas_um.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("sigmas must be positive and strictly increasing".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParameter("tau must lie in (0, 1]".into()));
        }
        if self.intensity_scales.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
            return Err(Error::InvalidParameter("intensity scales must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Attenuation length of the background suppression: twice the largest scale.
    pub fn attenuation_um(&self) -> f64 {
        2.0 * self.sigmas_um.iter().copied().fold(0.0, f64::max)
    }
}

pub const DEFAULT_GRAD_PERCENTILE: u8 = 90;

/// `v * exp(-dist / rho)` where `dist` is the distance in micrometres to the
/// nearest voxel whose gradient magnitude exceeds the given percentile and
/// `rho = 2 * max(sigma)`. With no such voxel the output is zero.
pub fn suppress_background(v: &Volume3D, grad_percentile: u8, params: &VesselnessParams) -> Result<Volume3D> {
    params.validate()?;
    if grad_percentile > 100 {
        return Err(Error::InvalidParameter("gradient percentile must be <= 100".into()));
    }
    let src: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
    let grad = gradient_magnitude(&src, v.dims(), v.spacing());
    let mut sorted: Vec<f32> = grad.iter().map(|&g| g as f32).collect();
    sorted.sort_unstable_by(f32::total_cmp);
    let cut = nearest_rank(&sorted, grad_percentile) as f64;
    let edges: Vec<bool> = grad.iter().map(|&g| g as f32 as f64 > cut).collect();
    let dist = distance_transform(&edges, v.dims(), v.spacing());
    let rho = params.attenuation_um();
    let data = v
        .data()
        .iter()
        .zip(&dist)
        .map(|(&x, &d)| {
            if d.is_finite() {
                ((x as f64 * (-d / rho).exp()) as f32).min(x)
            } else {
                0.0
            }
        })
        .collect();
    Ok(v.derive(data, v.kind()))
}

/// Jerman's tubularity for the two largest (sign-flipped) eigenvalues.
#[inline]
pub fn jerman_value(lambda2: f64, lambda_rho: f64) -> f64 {
    if lambda2 <= 0.0 || lambda_rho <= 0.0 {
        0.0
    } else if lambda2 >= lambda_rho / 2.0 {
        1.0
    } else {
        let s = 3.0 / (lambda2 + lambda_rho);
        (lambda2 * lambda2 * (lambda_rho - lambda2) * s * s * s).clamp(0.0, 1.0)
    }
}

/// Response plus the index of the scale that produced it.
#[derive(Debug, Clone)]
pub struct JermanOutput {
    pub response: Volume3D,
    /// Index into `sigmas_um` of the winning scale (0 where the response is 0).
    pub best_scale: Vec<u8>,
}

struct ScaleResponse {
    response: Vec<f64>,
    /// Scale-normalized `sigma^2 * lambda2`, used to break ties between
    /// saturated scales.
    strength: Vec<f64>,
}

fn single_scale(src: &[f64], dims: [usize; 3], spacing: [f64; 3], sigma_um: f64, tau: f64) -> ScaleResponse {
    let smoothed = gaussian_blur(src, dims, [sigma_um / spacing[0], sigma_um / spacing[1], sigma_um / spacing[2]]);
    let eig: Vec<(f64, f64)> = (0..src.len())
        .into_par_iter()
        .map(|i| {
            let [x, y, z] = coords(dims, i);
            let h = hessian_at(&smoothed, dims, spacing, x as i64, y as i64, z as i64);
            // Bright tubes on a dark background: flip the sign so the two
            // cross-sectional eigenvalues are positive, then sort ascending.
            let e = symmetric_eigenvalues([-h[0], -h[1], -h[2], -h[3], -h[4], -h[5]]);
            (e[1], e[2])
        })
        .collect();
    let max_l3 = eig.iter().map(|e| e.1).fold(0.0, f64::max);
    let floor = tau * max_l3;
    let s2 = sigma_um * sigma_um;
    let (response, strength) = eig
        .par_iter()
        .map(|&(l2, l3)| {
            let lrho = if l3 > floor {
                l3
            } else if l3 > 0.0 {
                floor
            } else {
                0.0
            };
            (jerman_value(l2, lrho), s2 * l2)
        })
        .unzip();
    ScaleResponse { response, strength }
}

pub fn jerman_detailed(v: &Volume3D, p: &VesselnessParams) -> Result<JermanOutput> {
    p.validate()?;
    if v.dims().iter().any(|&n| n < 3) {
        return Err(Error::InvalidParameter(format!(
            "vesselness needs at least 3 voxels per axis, got {:?}",
            v.dims()
        )));
    }
    if p.sigmas_um.len() > u8::MAX as usize {
        return Err(Error::InvalidParameter("too many scales".into()));
    }
    let n = v.len();
    let mut best = vec![0.0f64; n];
    let mut best_strength = vec![f64::NEG_INFINITY; n];
    let mut best_scale = vec![0u8; n];

    let mut levels = vec![1.0];
    levels.extend(p.intensity_scales.iter().copied());
    for level in levels {
        let src: Vec<f64> = v.data().iter().map(|&x| (x as f64).min(level) / level).collect();
        for (k, &sigma) in p.sigmas_um.iter().enumerate() {
            let r = single_scale(&src, v.dims(), v.spacing(), sigma, p.tau);
            for i in 0..n {
                let (resp, strength) = (r.response[i], r.strength[i]);
                if resp > best[i] || (resp == best[i] && resp > 0.0 && strength > best_strength[i]) {
                    best[i] = resp;
                    best_strength[i] = strength;
                    best_scale[i] = k as u8;
                }
            }
        }
    }
    let data = best.into_iter().map(|x| x as f32).collect();
    Ok(JermanOutput {
        response: v.derive(data, Kind::Normalized),
        best_scale,
    })
}

/// Voxel-wise maximum of the Jerman response over scales and intensity cut
/// levels; values in `[0, 1]`.
pub fn jerman_response(v: &Volume3D, p: &VesselnessParams) -> Result<Volume3D> {
    Ok(jerman_detailed(v, p)?.response)
}

/// The interactive threshold applied to a response volume.
pub fn threshold_response(r: &Volume3D, t: f32) -> Mask {
    foreground_mask(r, t)
}
