//! Histogram analytics and the global piecewise-linear intensity normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Kind, Mask, Volume3D};

/// Fraction of the output range given to intensities up to the 95th percentile.
pub const LOWER_BAND: f64 = 0.75;
pub const BREAK_PERCENTILE: u8 = 95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    /// Nearest-rank percentiles, keyed 0..=100.
    pub percentiles: BTreeMap<u8, f32>,
    pub mean: f64,
    pub stddev: f64,
    pub max: f32,
}

impl HistogramSummary {
    pub fn percentile(&self, p: u8) -> f32 {
        self.percentiles[&p.min(100)]
    }

    pub fn p95(&self) -> f32 {
        self.percentile(BREAK_PERCENTILE)
    }
}

/// Nearest-rank percentile of an ascending slice: the smallest value `t`
/// with at least `p`% of the samples `<= t`. `p = 0` yields the minimum.
pub fn nearest_rank(sorted: &[f32], p: u8) -> f32 {
    let n = sorted.len();
    let rank = ((p as usize * n).div_ceil(100)).max(1);
    sorted[rank - 1]
}

pub fn histogram(v: &Volume3D) -> Result<HistogramSummary> {
    if v.is_empty() {
        return Err(Error::Empty("histogram of an empty volume"));
    }
    let mut sorted = v.data().to_vec();
    sorted.sort_unstable_by(f32::total_cmp);

    let percentiles = (0..=100u8).map(|p| (p, nearest_rank(&sorted, p))).collect();
    let n = sorted.len() as f64;
    let mean = sorted.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = sorted
        .iter()
        .map(|&x| {
            let d = x as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(HistogramSummary {
        percentiles,
        mean,
        stddev: var.sqrt(),
        max: *sorted.last().unwrap(),
    })
}

/// The two-segment map `[0, p95] -> [0, 0.75]`, `(p95, max] -> (0.75, 1]`.
///
/// Computed once per volume; tiles cut from that volume reuse the same map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub p95: f32,
    pub max: f32,
}

impl RescaleMap {
    pub fn from_histogram(h: &HistogramSummary) -> RescaleMap {
        RescaleMap {
            p95: h.p95(),
            max: h.max,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= 0.0
    }

    pub fn apply(&self, x: f32) -> f32 {
        if self.is_degenerate() {
            return 0.0;
        }
        let (x, p95, max) = (x as f64, self.p95 as f64, self.max as f64);
        let y = if x <= p95 {
            if p95 > 0.0 {
                LOWER_BAND * (x.max(0.0) / p95)
            } else {
                0.0
            }
        } else if max > p95 {
            LOWER_BAND + (1.0 - LOWER_BAND) * ((x.min(max) - p95) / (max - p95))
        } else {
            1.0
        };
        y.clamp(0.0, 1.0) as f32
    }

    pub fn apply_volume(&self, v: &Volume3D) -> Volume3D {
        let data = v.data().iter().map(|&x| self.apply(x)).collect();
        v.derive(data, Kind::Normalized)
    }
}

/// Globally rescales a raw volume into `[0, 1]`. An all-zero volume maps to
/// all zeros with a warning.
pub fn nonlinear_rescale(v: &Volume3D) -> Result<Volume3D> {
    if v.kind() != Kind::Raw {
        return Err(Error::InvalidParameter(
            "nonlinear_rescale expects a raw volume".into(),
        ));
    }
    let map = RescaleMap::from_histogram(&histogram(v)?);
    if map.is_degenerate() {
        log::warn!("degenerate histogram (max == 0); emitting an all-zero volume");
    }
    Ok(map.apply_volume(v))
}

/// `mask[i] = data[i] > threshold`.
pub fn foreground_mask(v: &Volume3D, threshold: f32) -> Mask {
    let bits = v.data().iter().map(|&x| x > threshold).collect();
    Mask::from_bits(v.dims(), bits).expect("volume and mask share dims")
}
