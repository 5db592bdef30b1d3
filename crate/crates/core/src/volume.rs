//! Dense scalar voxel grids and boolean masks.
//!
//! Voxels are stored x-fastest, then y, then z. A linear index `i` maps to
//! `(x, y, z)` with `i = x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage type used when the volume is serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U16,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Raw,
    Normalized,
}

/// Where the voxel values came from. Anything derived from a predicted or
/// morphed volume stays predicted or morphed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Predicted,
    Morphed,
}

impl Provenance {
    /// Provenance of a value computed from two sources.
    pub fn combine(self, other: Provenance) -> Provenance {
        self.max(other)
    }

    pub fn is_real(self) -> bool {
        self == Provenance::Real
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Predicted => "predicted",
            Provenance::Morphed => "morphed",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Age domain of a structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Young,
    Old,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Young => "young",
            Domain::Old => "old",
        }
    }
}

/// Direction of an age translation or morph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "y2o")]
    YoungToOld,
    #[serde(rename = "o2y")]
    OldToYoung,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::YoungToOld => "y2o",
            Direction::OldToYoung => "o2y",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "y2o" | "young-to-old" | "youngtoold" => Ok(Direction::YoungToOld),
            "o2y" | "old-to-young" | "oldtoyoung" => Ok(Direction::OldToYoung),
            other => Err(Error::InvalidParameter(format!("unknown direction `{other}`"))),
        }
    }
}

#[inline]
pub fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn coords(dims: [usize; 3], i: usize) -> [usize; 3] {
    let x = i % dims[0];
    let yz = i / dims[0];
    [x, yz % dims[1], yz / dims[1]]
}

pub fn voxel_count(dims: [usize; 3]) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Calls `f` with the linear index of every in-bounds 26-neighbour of `i`.
#[inline]
pub fn for_each_neighbor26(dims: [usize; 3], i: usize, mut f: impl FnMut(usize)) {
    let [x, y, z] = coords(dims, i);
    for dz in -1i64..=1 {
        let nz = z as i64 + dz;
        if nz < 0 || nz >= dims[2] as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            let ny = y as i64 + dy;
            if ny < 0 || ny >= dims[1] as i64 {
                continue;
            }
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let nx = x as i64 + dx;
                if nx < 0 || nx >= dims[0] as i64 {
                    continue;
                }
                f(linear_index(dims, nx as usize, ny as usize, nz as usize));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f32>,
    dtype: DType,
    kind: Kind,
    provenance: Provenance,
}

impl Volume3D {
    /// Builds an f32 volume, checking the size and range invariants.
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        data: Vec<f32>,
        kind: Kind,
        provenance: Provenance,
    ) -> Result<Self> {
        let v = Volume3D {
            dims,
            spacing,
            data,
            dtype: DType::F32,
            kind,
            provenance,
        };
        v.validate()?;
        Ok(v)
    }

    /// Builds a raw 16-bit volume.
    pub fn from_u16(
        dims: [usize; 3],
        spacing: [f64; 3],
        data: &[u16],
        provenance: Provenance,
    ) -> Result<Self> {
        let v = Volume3D {
            dims,
            spacing,
            data: data.iter().map(|&x| x as f32).collect(),
            dtype: DType::U16,
            kind: Kind::Raw,
            provenance,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], kind: Kind, provenance: Provenance) -> Self {
        Volume3D {
            dims,
            spacing,
            data: vec![0.0; voxel_count(dims)],
            dtype: DType::F32,
            kind,
            provenance,
        }
    }

    pub(crate) fn from_parts_unchecked(
        dims: [usize; 3],
        spacing: [f64; 3],
        data: Vec<f32>,
        dtype: DType,
        kind: Kind,
        provenance: Provenance,
    ) -> Self {
        Volume3D {
            dims,
            spacing,
            data,
            dtype,
            kind,
            provenance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if voxel_count(self.dims) != self.data.len() {
            return Err(Error::InvalidVolume(format!(
                "dims {:?} hold {} voxels but data has {}",
                self.dims,
                voxel_count(self.dims),
                self.data.len()
            )));
        }
        if self.spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "spacing {:?} must be positive",
                self.spacing
            )));
        }
        if self.kind == Kind::Normalized
            && self.data.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidVolume(
                "normalized volume has values outside [0, 1]".into(),
            ));
        }
        if self.dtype == DType::U16
            && self
                .data
                .iter()
                .any(|&v| v < 0.0 || v > u16::MAX as f32 || v.fract() != 0.0)
        {
            return Err(Error::InvalidVolume(
                "u16 volume holds non-integral values".into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        linear_index(self.dims, x, y, z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Value at signed coordinates, clamped to the nearest edge voxel.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64, z: i64) -> f32 {
        let cx = x.clamp(0, self.dims[0] as i64 - 1) as usize;
        let cy = y.clamp(0, self.dims[1] as i64 - 1) as usize;
        let cz = z.clamp(0, self.dims[2] as i64 - 1) as usize;
        self.get(cx, cy, cz)
    }

    /// A volume with the same geometry and provenance, holding new f32 data.
    pub fn with_data(&self, data: Vec<f32>, kind: Kind) -> Result<Volume3D> {
        let v = Volume3D {
            dims: self.dims,
            spacing: self.spacing,
            data,
            dtype: DType::F32,
            kind,
            provenance: self.provenance,
        };
        v.validate()?;
        Ok(v)
    }

    /// Same as [`with_data`](Self::with_data) without the range scan; callers
    /// guarantee the invariants.
    pub(crate) fn derive(&self, data: Vec<f32>, kind: Kind) -> Volume3D {
        debug_assert_eq!(data.len(), self.data.len());
        Volume3D {
            dims: self.dims,
            spacing: self.spacing,
            data,
            dtype: DType::F32,
            kind,
            provenance: self.provenance,
        }
    }

    /// Returns a copy tagged with `provenance`. Downgrading to `Real` is refused.
    pub fn with_provenance(mut self, provenance: Provenance) -> Result<Volume3D> {
        if provenance.is_real() && !self.provenance.is_real() {
            return Err(Error::InvalidParameter(format!(
                "cannot relabel a {} volume as real",
                self.provenance
            )));
        }
        self.provenance = provenance;
        Ok(self)
    }

    pub fn same_dims(&self, other: &Volume3D) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(())
    }

    /// Copies a box `[origin, origin + size)`; coordinates outside the volume
    /// are clamped to the edge.
    pub fn crop_clamped(&self, origin: [i64; 3], size: [usize; 3]) -> Volume3D {
        let mut data = Vec::with_capacity(voxel_count(size));
        for z in 0..size[2] {
            for y in 0..size[1] {
                for x in 0..size[0] {
                    data.push(self.get_clamped(
                        origin[0] + x as i64,
                        origin[1] + y as i64,
                        origin[2] + z as i64,
                    ));
                }
            }
        }
        Volume3D {
            dims: size,
            spacing: self.spacing,
            data,
            dtype: self.dtype,
            kind: self.kind,
            provenance: self.provenance,
        }
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// Boolean voxel mask sharing the volume index layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3]) -> Mask {
        Mask {
            dims,
            bits: vec![false; voxel_count(dims)],
        }
    }

    pub fn from_bits(dims: [usize; 3], bits: Vec<bool>) -> Result<Mask> {
        if bits.len() != voxel_count(dims) {
            return Err(Error::InvalidVolume(format!(
                "mask dims {:?} hold {} voxels but {} bits given",
                dims,
                voxel_count(dims),
                bits.len()
            )));
        }
        Ok(Mask { dims, bits })
    }

    pub fn from_indices(dims: [usize; 3], indices: impl IntoIterator<Item = usize>) -> Mask {
        let mut m = Mask::new(dims);
        for i in indices {
            m.bits[i] = true;
        }
        m
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
    }

    pub fn same_dims(&self, other: &Mask) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(self.dims, other.dims, "mask dims differ");
        Mask {
            dims: self.dims,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims == other.dims && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}
