//! Synthetic tube phantoms, an aging operator (thinning and fragmentation),
//! widefield-style blur and the predictor backends that stand in for a
//! trained translation network.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::io::load_volume;
use crate::volume::{voxel_count, Direction, Kind, Provenance, Volume3D};

/// Shoulder width of the tube falloff, relative to the local radius.
pub const SHOULDER: f64 = 0.5;
/// The shoulder is cut to zero beyond this many shoulder widths.
const SHOULDER_CUTOFF: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    /// Centerline vertices in micrometres.
    pub centerline: Vec<[f64; 3]>,
    /// Radius (micrometres) at each centerline vertex.
    pub radius_profile: Vec<f64>,
    /// Peak normalized intensity.
    pub intensity: f32,
}

impl TubeSpec {
    pub fn straight(from: [f64; 3], to: [f64; 3], radius: f64, intensity: f32) -> TubeSpec {
        TubeSpec {
            centerline: vec![from, to],
            radius_profile: vec![radius, radius],
            intensity,
        }
    }

    pub fn length(&self) -> f64 {
        self.centerline.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    fn validate(&self, index: usize, dims: [usize; 3], spacing: [f64; 3]) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidTube { index, reason });
        if self.centerline.len() < 2 {
            return bad("centerline needs at least two points".into());
        }
        if self.radius_profile.len() != self.centerline.len() {
            return bad("radius_profile length differs from centerline".into());
        }
        if self.radius_profile.iter().any(|r| !(*r > 0.0)) {
            return bad("radius must be positive".into());
        }
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return bad("intensity must lie in (0, 1]".into());
        }
        for p in &self.centerline {
            for a in 0..3 {
                let extent = (dims[a].max(1) - 1) as f64 * spacing[a];
                if !(p[a] >= 0.0 && p[a] <= extent + 1e-9) {
                    return bad(format!("point {p:?} lies outside the volume"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerationParams {
    /// Fraction of each tube's centerline length that is removed.
    pub fragment_fraction: f64,
    /// Mean gap length in micrometres.
    pub gap_length_um: f64,
    /// Radius multiplier in (0, 1].
    pub thinning_factor: f64,
    pub seed: u64,
}

impl Default for DegenerationParams {
    fn default() -> Self {
        DegenerationParams {
            fragment_fraction: 0.5,
            gap_length_um: 8.0,
            thinning_factor: 0.5,
            seed: 0,
        }
    }
}

impl DegenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fragment_fraction) {
            return Err(Error::InvalidParameter("fragment_fraction must lie in [0, 1]".into()));
        }
        if !(self.thinning_factor > 0.0 && self.thinning_factor <= 1.0) {
            return Err(Error::InvalidParameter("thinning_factor must lie in (0, 1]".into()));
        }
        if !(self.gap_length_um > 0.0) {
            return Err(Error::InvalidParameter("gap_length_um must be positive".into()));
        }
        Ok(())
    }

    fn is_identity(&self) -> bool {
        self.fragment_fraction == 0.0 && self.thinning_factor == 1.0
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Intensity multiplier at distance `d` from a centerline of local radius `r`.
pub fn falloff(d: f64, r: f64) -> f64 {
    if d <= r {
        return 1.0;
    }
    let w = SHOULDER * r;
    let t = (d - r) / w;
    if t > SHOULDER_CUTOFF {
        0.0
    } else {
        (-0.5 * t * t).exp()
    }
}

struct Segment {
    a: [f64; 3],
    b: [f64; 3],
    ra: f64,
    rb: f64,
    intensity: f64,
}

impl Segment {
    fn value_at(&self, p: [f64; 3]) -> f64 {
        let ab = [self.b[0] - self.a[0], self.b[1] - self.a[1], self.b[2] - self.a[2]];
        let ap = [p[0] - self.a[0], p[1] - self.a[1], p[2] - self.a[2]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
        let t = if len2 > 0.0 {
            ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [self.a[0] + t * ab[0], self.a[1] + t * ab[1], self.a[2] + t * ab[2]];
        let r = self.ra + t * (self.rb - self.ra);
        self.intensity * falloff(dist(p, q), r)
    }

    /// Voxel index range along `axis` that the segment can touch.
    fn reach(&self, axis: usize, spacing: f64, n: usize) -> (usize, usize) {
        let r = self.ra.max(self.rb) * (1.0 + SHOULDER * SHOULDER_CUTOFF);
        let lo = self.a[axis].min(self.b[axis]) - r;
        let hi = self.a[axis].max(self.b[axis]) + r;
        let lo = (lo / spacing).floor().max(0.0) as usize;
        let hi = ((hi / spacing).ceil().max(0.0) as usize).min(n.saturating_sub(1));
        (lo, hi)
    }
}

/// Renders tubes into a normalized volume: each voxel takes the maximum over
/// tubes of `intensity * falloff(distance / radius)`.
pub fn rasterize_tubes(specs: &[TubeSpec], dims: [usize; 3], spacing: [f64; 3]) -> Result<Volume3D> {
    for (i, s) in specs.iter().enumerate() {
        s.validate(i, dims, spacing)?;
    }
    let segments: Vec<Segment> = specs
        .iter()
        .flat_map(|s| {
            (0..s.centerline.len() - 1).map(move |k| Segment {
                a: s.centerline[k],
                b: s.centerline[k + 1],
                ra: s.radius_profile[k],
                rb: s.radius_profile[k + 1],
                intensity: s.intensity as f64,
            })
        })
        .collect();
    Ok(render_segments(&segments, dims, spacing))
}

fn render_segments(segments: &[Segment], dims: [usize; 3], spacing: [f64; 3]) -> Volume3D {
    let [nx, ny, nz] = dims;
    let mut data = vec![0.0f32; voxel_count(dims)];
    if nx * ny > 0 {
        data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
            for seg in segments {
                let (z0, z1) = seg.reach(2, spacing[2], nz);
                if z < z0 || z > z1 {
                    continue;
                }
                let (y0, y1) = seg.reach(1, spacing[1], ny);
                let (x0, x1) = seg.reach(0, spacing[0], nx);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let p = [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]];
                        let v = seg.value_at(p) as f32;
                        let slot = &mut slab[x + nx * y];
                        if v > *slot {
                            *slot = v;
                        }
                    }
                }
            }
        });
    }
    Volume3D::from_parts_unchecked(
        dims,
        spacing,
        data,
        crate::volume::DType::F32,
        Kind::Normalized,
        Provenance::Real,
    )
}

/// Splits the polyline at arclength positions, keeping `[start, end]`.
fn sub_polyline(spec: &TubeSpec, start: f64, end: f64, thinning: f64) -> Option<TubeSpec> {
    if end - start <= 1e-9 {
        return None;
    }
    let mut points = Vec::new();
    let mut radii = Vec::new();
    let mut acc = 0.0;
    for k in 0..spec.centerline.len() - 1 {
        let (a, b) = (spec.centerline[k], spec.centerline[k + 1]);
        let (ra, rb) = (spec.radius_profile[k], spec.radius_profile[k + 1]);
        let len = dist(a, b);
        let (s0, s1) = (acc, acc + len);
        acc = s1;
        if s1 < start || s0 > end || len == 0.0 {
            continue;
        }
        let lerp = |s: f64| {
            let t = ((s - s0) / len).clamp(0.0, 1.0);
            (
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])],
                ra + t * (rb - ra),
            )
        };
        let (p0, r0) = lerp(start.max(s0));
        let (p1, r1) = lerp(end.min(s1));
        if points.is_empty() {
            points.push(p0);
            radii.push(r0 * thinning);
        }
        points.push(p1);
        radii.push(r1 * thinning);
    }
    (points.len() >= 2).then(|| TubeSpec {
        centerline: points,
        radius_profile: radii,
        intensity: spec.intensity,
    })
}

/// Thins and fragments the tubes. Gaps are placed as a Poisson process along
/// each tube's arclength; gap lengths are exponential with the requested
/// mean, rescaled so their total equals `fragment_fraction * length`.
pub fn degenerate_specs(specs: &[TubeSpec], p: &DegenerationParams) -> Result<Vec<TubeSpec>> {
    p.validate()?;
    let mut out = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let length = spec.length();
        let removed = p.fragment_fraction * length;
        if removed <= 0.0 {
            out.extend(sub_polyline(spec, 0.0, length, p.thinning_factor));
            continue;
        }
        if p.fragment_fraction >= 1.0 {
            continue;
        }
        let n_gaps = ((removed / p.gap_length_um).round() as usize).max(1);
        let raw_gaps: Vec<f64> = (0..n_gaps)
            .map(|_| -(1.0 - rng.random::<f64>()).ln() * p.gap_length_um + f64::EPSILON)
            .collect();
        let total: f64 = raw_gaps.iter().sum();
        let gaps: Vec<f64> = raw_gaps.iter().map(|g| g * removed / total).collect();

        let kept = length - removed;
        let mut cuts: Vec<f64> = (0..n_gaps).map(|_| rng.random::<f64>() * kept).collect();
        cuts.sort_by(f64::total_cmp);

        // Interleave kept pieces and gaps along the arclength.
        let mut cursor = 0.0;
        let mut kept_before = 0.0;
        for (cut, gap) in cuts.iter().zip(&gaps) {
            let piece = cut - kept_before;
            out.extend(sub_polyline(spec, cursor, cursor + piece, p.thinning_factor));
            cursor += piece + gap;
            kept_before = *cut;
        }
        out.extend(sub_polyline(spec, cursor, length, p.thinning_factor));
    }
    Ok(out)
}

/// Renders the aged counterpart of `v_young`. The result never exceeds
/// `v_young` at any voxel, so aged foreground stays inside young foreground.
pub fn degenerate(v_young: &Volume3D, specs: &[TubeSpec], p: &DegenerationParams) -> Result<Volume3D> {
    p.validate()?;
    if p.is_identity() {
        return Ok(v_young.clone());
    }
    let old_specs = degenerate_specs(specs, p)?;
    let rendered = rasterize_tubes(&old_specs, v_young.dims(), v_young.spacing())?;
    let data = rendered
        .data()
        .iter()
        .zip(v_young.data())
        .map(|(o, y)| o.min(*y))
        .collect();
    Ok(v_young.derive(data, v_young.kind()))
}

/// Separable Gaussian blur, sigmas in micrometres, clamp-to-edge borders.
/// Widefield data has the axial sigma at least as large as the lateral one.
pub fn widefield_blur(v: &Volume3D, sigma_xy_um: f64, sigma_z_um: f64) -> Result<Volume3D> {
    if !(sigma_xy_um >= 0.0 && sigma_z_um >= 0.0) {
        return Err(Error::InvalidParameter("blur sigmas must be non-negative".into()));
    }
    if sigma_xy_um == 0.0 && sigma_z_um == 0.0 {
        return Ok(v.clone());
    }
    let s = v.spacing();
    let src: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
    let out = gaussian_blur(&src, v.dims(), [sigma_xy_um / s[0], sigma_xy_um / s[1], sigma_z_um / s[2]]);
    let data = out
        .into_iter()
        .map(|x| match v.kind() {
            Kind::Normalized => (x as f32).clamp(0.0, 1.0),
            Kind::Raw => x as f32,
        })
        .collect();
    Ok(v.derive(data, v.kind()))
}

/// Source of age-translated volumes.
#[derive(Debug, Clone)]
pub enum PredictorBackend {
    /// Knows the ground-truth tubes and applies or undoes [`degenerate`].
    SyntheticOracle {
        specs: Vec<TubeSpec>,
        params: DegenerationParams,
    },
    /// A prediction produced elsewhere and stored as an nrv file.
    ExternalFile(PathBuf),
}

pub fn predict(v_in: &Volume3D, direction: Direction, backend: &PredictorBackend) -> Result<Volume3D> {
    let out = match backend {
        PredictorBackend::SyntheticOracle { specs, params } => match direction {
            Direction::YoungToOld => degenerate(v_in, specs, params)?,
            Direction::OldToYoung => {
                let young = rasterize_tubes(specs, v_in.dims(), v_in.spacing())?;
                young.with_provenance(v_in.provenance())?
            }
        },
        PredictorBackend::ExternalFile(path) => {
            if !path.exists() {
                return Err(Error::MissingPrediction(path.display().to_string()));
            }
            let loaded = load_volume(path)?;
            v_in.same_dims(&loaded)?;
            loaded
        }
    };
    let provenance = out.provenance().combine(Provenance::Predicted);
    out.with_provenance(provenance)
}

/// Random gently bent tubes that stay inside the volume, for tests and demos.
pub fn random_tube_specs(
    dims: [usize; 3],
    spacing: [f64; 3],
    count: usize,
    radius_um: (f64, f64),
    seed: u64,
) -> Vec<TubeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent: Vec<f64> = (0..3).map(|a| (dims[a].max(1) - 1) as f64 * spacing[a]).collect();
    let margin = radius_um.1 * 2.0;
    let pick = |rng: &mut ChaCha8Rng, a: usize| {
        let lo = margin.min(extent[a] / 2.0);
        let hi = (extent[a] - margin).max(lo);
        lo + rng.random::<f64>() * (hi - lo)
    };
    (0..count)
        .map(|_| {
            let radius = radius_um.0 + rng.random::<f64>() * (radius_um.1 - radius_um.0);
            let main = rng.random_range(0..2usize);
            let n_pts = 4;
            let mut pts = Vec::with_capacity(n_pts);
            let (lo, hi) = (margin.min(extent[main] / 2.0), (extent[main] - margin).max(0.0));
            let mut cross = [pick(&mut rng, 0), pick(&mut rng, 1), pick(&mut rng, 2)];
            for k in 0..n_pts {
                let t = k as f64 / (n_pts - 1) as f64;
                let mut p = cross;
                p[main] = lo + t * (hi - lo);
                pts.push(p);
                for a in 0..3 {
                    if a != main {
                        let lo_a = margin.min(extent[a] / 2.0);
                        let hi_a = (extent[a] - margin).max(lo_a);
                        let jitter = (rng.random::<f64>() - 0.5) * 2.0 * radius;
                        cross[a] = (cross[a] + jitter).clamp(lo_a, hi_a);
                    }
                }
            }
            TubeSpec {
                radius_profile: vec![radius; pts.len()],
                centerline: pts,
                intensity: 1.0,
            }
        })
        .collect()
}
