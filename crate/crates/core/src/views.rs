//! Transfer-function presets, bounded views, slice images and fiber density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::HistogramSummary;
use crate::volume::{linear_index, Domain, Kind, Mask, Volume3D};

/// Piecewise-linear opacity and colour over intensity. At a repeated
/// abscissa the earlier point wins, so a step `(x, a), (x, b)` evaluates to
/// `a` at `x` and approaches `b` from the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub opacity_points: Vec<(f64, f64)>,
    pub color_points: Vec<(f64, [f64; 3])>,
}

fn lerp_points<const N: usize>(points: &[(f64, [f64; N])], x: f64) -> [f64; N] {
    let Some(first) = points.first() else {
        return [0.0; N];
    };
    if x <= first.0 {
        return first.1;
    }
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            if x1 == x0 {
                return y0;
            }
            let t = (x - x0) / (x1 - x0);
            let mut out = [0.0; N];
            for k in 0..N {
                out[k] = y0[k] + t * (y1[k] - y0[k]);
            }
            return out;
        }
    }
    points[points.len() - 1].1
}

impl TransferFunction {
    pub fn validate(&self) -> Result<()> {
        let sorted = |xs: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = xs.collect();
            v.windows(2).all(|w| w[0] <= w[1])
        };
        if !sorted(&mut self.opacity_points.iter().map(|p| p.0)) || !sorted(&mut self.color_points.iter().map(|p| p.0)) {
            return Err(Error::InvalidParameter("transfer function points must be sorted".into()));
        }
        if self.opacity_points.iter().any(|p| !(0.0..=1.0).contains(&p.1))
            || self.color_points.iter().any(|p| p.1.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(Error::InvalidParameter("transfer function values must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn opacity(&self, x: f64) -> f64 {
        let pts: Vec<(f64, [f64; 1])> = self.opacity_points.iter().map(|&(x, a)| (x, [a])).collect();
        lerp_points(&pts, x)[0]
    }

    pub fn color(&self, x: f64) -> [f64; 3] {
        lerp_points(&self.color_points, x)
    }

    /// Colour premultiplied by opacity, as 8-bit RGB.
    pub fn shade(&self, x: f64) -> [u8; 3] {
        let a = self.opacity(x);
        self.color(x).map(|c| (c * a * 255.0).round().clamp(0.0, 255.0) as u8)
    }
}

pub fn domain_color(domain: Domain) -> [f64; 3] {
    match domain {
        Domain::Young => [0.0, 1.0, 0.0],
        Domain::Old => [1.0, 0.0, 0.0],
    }
}

/// Two linear ramps: opacity 0 to 0.75 over `[0, p95]` and 0.76 to 1 over
/// `(p95, max]`; colour black to green (young) or red (old).
pub fn default_tf(domain: Domain, hist: &HistogramSummary) -> TransferFunction {
    let p95 = hist.p95() as f64;
    let max = hist.max as f64;
    let opacity_points = if max > p95 && p95 > 0.0 {
        vec![(0.0, 0.0), (p95, 0.75), (p95, 0.76), (max, 1.0)]
    } else {
        vec![(0.0, 0.0), (max.max(f64::MIN_POSITIVE), 1.0)]
    };
    let top = max.max(f64::MIN_POSITIVE);
    TransferFunction {
        opacity_points,
        color_points: vec![(0.0, [0.0; 3]), (top, domain_color(domain))],
    }
}

/// `raw` where the mask is set, 0 elsewhere. Provenance is unchanged.
pub fn bounded_mask(raw: &Volume3D, bounds: &Mask) -> Result<Volume3D> {
    if raw.dims() != bounds.dims() {
        return Err(Error::DimsMismatch {
            left: raw.dims(),
            right: bounds.dims(),
        });
    }
    let data = raw
        .data()
        .iter()
        .zip(bounds.bits())
        .map(|(&x, &b)| if b { x } else { 0.0 })
        .collect();
    Ok(Volume3D::from_parts_unchecked(
        raw.dims(),
        raw.spacing(),
        data,
        raw.dtype(),
        raw.kind(),
        raw.provenance(),
    ))
}

/// Foreground fraction of the whole mask, in `[0, 1]`.
pub fn fiber_density(mask: &Mask) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.count() as f64 / mask.len() as f64
}

/// `(d_young - d_old) / d_young * 100`.
pub fn percentage_difference(d_young: f64, d_old: f64) -> Result<f64> {
    if d_young == 0.0 || !d_young.is_finite() {
        return Err(Error::InvalidParameter("young density must be non-zero".into()));
    }
    Ok((d_young - d_old) / d_young * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    fn letter(self) -> char {
        ['x', 'y', 'z'][self.index()]
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidParameter(format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SliceShading {
    /// Linear gray ramp from 0 to 1 (normalized volumes) or to the volume
    /// maximum (raw volumes).
    Gray,
    /// Opacity-premultiplied colour from a transfer function.
    Transfer(TransferFunction),
}

/// Row-major 8-bit image, one (gray) or three (RGB) channels per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

/// Renders slice `index` perpendicular to `axis`. Image columns follow the
/// lower remaining axis and rows the higher one (x/y for a z slice). Every
/// channel value `c` in `[0, 1]` is shaped as `c^(1 / gamma)` before
/// quantization.
pub fn render_slice(v: &Volume3D, axis: Axis, index: usize, shading: &SliceShading, gamma: f64) -> Result<SliceImage> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must be positive")));
    }
    let dims = v.dims();
    let a = axis.index();
    if index >= dims[a] {
        return Err(Error::IndexOutOfRange {
            axis: axis.letter(),
            index,
            len: dims[a],
        });
    }
    if let SliceShading::Transfer(tf) = shading {
        tf.validate()?;
    }
    let (u, w) = match axis {
        Axis::X => (1, 2),
        Axis::Y => (0, 2),
        Axis::Z => (0, 1),
    };
    let (width, height) = (dims[u], dims[w]);
    let scale = match v.kind() {
        Kind::Normalized => 1.0,
        Kind::Raw => (v.max_value() as f64).max(f64::MIN_POSITIVE),
    };
    let quantize = |c: f64| (c.clamp(0.0, 1.0).powf(1.0 / gamma) * 255.0).round() as u8;
    let channels = match shading {
        SliceShading::Gray => 1,
        SliceShading::Transfer(_) => 3,
    };
    let mut pixels = Vec::with_capacity(width * height * channels);
    for row in 0..height {
        for col in 0..width {
            let mut c = [0usize; 3];
            c[a] = index;
            c[u] = col;
            c[w] = row;
            let x = v.data()[linear_index(dims, c[0], c[1], c[2])] as f64;
            match shading {
                SliceShading::Gray => pixels.push(quantize(x / scale)),
                SliceShading::Transfer(tf) => {
                    let alpha = tf.opacity(x);
                    pixels.extend(tf.color(x).map(|k| quantize(k * alpha)));
                }
            }
        }
    }
    Ok(SliceImage {
        width,
        height,
        channels,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::histogram;
    use crate::volume::{Kind, Provenance};

    fn ramp() -> Volume3D {
        let data: Vec<f32> = (1..=100).map(|x| x as f32).collect();
        Volume3D::new([10, 10, 1], [1.0; 3], data, Kind::Raw, Provenance::Real).unwrap()
    }

    #[test]
    fn tf_breakpoints() {
        let h = histogram(&ramp()).unwrap();
        let tf = default_tf(Domain::Old, &h);
        tf.validate().unwrap();
        assert_eq!(tf.opacity(0.0), 0.0);
        assert_eq!(tf.opacity(95.0), 0.75);
        assert_eq!(tf.opacity(100.0), 1.0);
        assert!((tf.opacity(47.5) - 0.375).abs() < 1e-12);
        assert!(tf.opacity(95.0001) > 0.76 - 1e-9);
        assert_eq!(tf.color(100.0), [1.0, 0.0, 0.0]);
        assert_eq!(default_tf(Domain::Young, &h).color(100.0), [0.0, 1.0, 0.0]);
        assert_eq!(tf.color(0.0), [0.0; 3]);
    }

    #[test]
    fn density_and_difference() {
        let m = Mask::from_indices([10, 10, 10], 0..425);
        assert!((fiber_density(&m) * 100.0 - 42.5).abs() < 1e-12);
        assert_eq!(fiber_density(&Mask::new([4, 4, 4])), 0.0);
        assert!((percentage_difference(42.5, 6.8).unwrap() - 84.0).abs() < 1e-12);
        assert_eq!(percentage_difference(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(percentage_difference(3.0, 0.0).unwrap(), 100.0);
        assert!(percentage_difference(0.0, 1.0).is_err());
    }

    #[test]
    fn slice_layout_and_bounds() {
        let v = ramp();
        let img = render_slice(&v, Axis::Z, 0, &SliceShading::Gray, 1.0).unwrap();
        assert_eq!((img.width, img.height, img.channels), (10, 10, 1));
        assert_eq!(img.pixels[99], 255);
        assert_eq!(img.pixels[0], (255.0f64 / 100.0).round() as u8);
        let col = render_slice(&v, Axis::X, 3, &SliceShading::Gray, 1.0).unwrap();
        assert_eq!((col.width, col.height), (10, 1));
        assert_eq!(col.pixels[2], img.pixels[2 * 10 + 3]);
        let err = render_slice(&v, Axis::Z, 1, &SliceShading::Gray, 1.0).unwrap_err();
        assert_eq!(err.code(), "index_out_of_range");
        let tf = default_tf(Domain::Old, &histogram(&v).unwrap());
        let rgb = render_slice(&v, Axis::Z, 0, &SliceShading::Transfer(tf), 1.0).unwrap();
        assert_eq!(rgb.pixels.len(), 300);
        assert_eq!(&rgb.pixels[297..], &[255, 0, 0]);
    }

    #[test]
    fn bounded_mask_basics() {
        let v = ramp();
        let full = Mask::from_indices(v.dims(), 0..v.len());
        assert_eq!(bounded_mask(&v, &full).unwrap(), v);
        let empty = bounded_mask(&v, &Mask::new(v.dims())).unwrap();
        assert!(empty.data().iter().all(|&x| x == 0.0));
        assert!(bounded_mask(&v, &Mask::new([3, 3, 3])).is_err());
    }
}
