//! Overlapping tile decomposition with a neighbourhood margin, the five-crop
//! quadrant scheme used for spatial consistency, and partition stitching.
//!
//! A core region of `d x d` voxels is read together with a margin of `delta`
//! voxels on every lateral side, giving input tiles of edge `d + 2*delta`.
//! Each input tile yields four corner quadrants and one centre crop, all of
//! edge `d + delta`. Depth is never tiled.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoverageFault, Error, Result};
use crate::io::{load_volume, save_volume};
use crate::volume::{voxel_count, DType, Kind, Provenance, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    /// Core edge in voxels.
    pub d: usize,
    /// Neighbourhood margin in voxels.
    pub delta: usize,
    /// Depth in voxels.
    pub z: usize,
    /// `(x, y)` of the core region in parent coordinates.
    pub origin: [usize; 2],
    /// Lateral size of the parent volume.
    pub parent: [usize; 2],
}

impl TileSpec {
    pub fn input_edge(&self) -> usize {
        self.d + 2 * self.delta
    }

    pub fn quadrant_edge(&self) -> usize {
        self.d + self.delta
    }
}

fn check_geometry(d: usize, delta: usize) -> Result<()> {
    if d == 0 || !d.is_multiple_of(2) || !delta.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "tile edge d={d} must be positive and even, delta={delta} even"
        )));
    }
    Ok(())
}

/// Cuts `v` into input tiles whose cores partition the lateral plane. Tiles
/// at the border read clamp-to-edge padding.
pub fn split_tiles(v: &Volume3D, d: usize, delta: usize) -> Result<Vec<(TileSpec, Volume3D)>> {
    check_geometry(d, delta)?;
    let [nx, ny, nz] = v.dims();
    let edge = d + 2 * delta;
    if nx < edge || ny < edge {
        return Err(Error::VolumeTooSmall { dims: v.dims(), edge });
    }
    let mut tiles = Vec::new();
    for oy in (0..ny).step_by(d) {
        for ox in (0..nx).step_by(d) {
            let spec = TileSpec {
                d,
                delta,
                z: nz,
                origin: [ox, oy],
                parent: [nx, ny],
            };
            let tile = v.crop_clamped(
                [ox as i64 - delta as i64, oy as i64 - delta as i64, 0],
                [edge, edge, nz],
            );
            tiles.push((spec, tile));
        }
    }
    Ok(tiles)
}

/// The five `(d + delta)`-edge crops of one input tile.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantSet {
    pub top_left: Volume3D,
    pub top_right: Volume3D,
    pub bottom_left: Volume3D,
    pub bottom_right: Volume3D,
    pub center: Volume3D,
}

impl QuadrantSet {
    /// Applies `f` to every crop, e.g. a generator under test.
    pub fn try_map(&self, mut f: impl FnMut(&Volume3D) -> Result<Volume3D>) -> Result<QuadrantSet> {
        Ok(QuadrantSet {
            top_left: f(&self.top_left)?,
            top_right: f(&self.top_right)?,
            bottom_left: f(&self.bottom_left)?,
            bottom_right: f(&self.bottom_right)?,
            center: f(&self.center)?,
        })
    }

    pub fn quadrants(&self) -> [&Volume3D; 4] {
        [&self.top_left, &self.top_right, &self.bottom_left, &self.bottom_right]
    }
}

/// Origins of the crops inside an input tile, in the order top-left,
/// top-right, bottom-left, bottom-right, centre. `x` grows to the right and
/// `y` downwards.
pub fn quadrant_origins(_d: usize, delta: usize) -> [[usize; 2]; 5] {
    let h = delta / 2;
    [[0, 0], [delta, 0], [0, delta], [delta, delta], [h, h]]
}

fn square_edge(v: &Volume3D) -> Option<usize> {
    let [nx, ny, _] = v.dims();
    (nx == ny).then_some(nx)
}

pub fn make_quadrants(tile: &Volume3D, d: usize, delta: usize) -> Result<QuadrantSet> {
    check_geometry(d, delta)?;
    let edge = d + 2 * delta;
    match square_edge(tile) {
        Some(e) if e == edge => {}
        _ => {
            return Err(Error::SizeMismatch {
                expected: edge,
                found: tile.dims()[0],
            })
        }
    }
    let q = d + delta;
    let nz = tile.dims()[2];
    let crop = |o: [usize; 2]| tile.crop_clamped([o[0] as i64, o[1] as i64, 0], [q, q, nz]);
    let [tl, tr, bl, br, c] = quadrant_origins(d, delta);
    Ok(QuadrantSet {
        top_left: crop(tl),
        top_right: crop(tr),
        bottom_left: crop(bl),
        bottom_right: crop(br),
        center: crop(c),
    })
}

/// Where each quadrant's `((d + delta) / 2)`-edge crop is read from, in
/// quadrant coordinates. Each crop is the part of the quadrant that overlaps
/// the matching quarter of the centre tile.
pub fn assembly_offsets(d: usize, delta: usize) -> [[usize; 2]; 4] {
    let h = (d + delta) / 2;
    let m = delta / 2;
    [[m, m], [h - m, m], [m, h - m], [h - m, h - m]]
}

/// Rebuilds a centre tile from four processed quadrants. The `center` field
/// of `processed` is not read.
pub fn assemble_center(processed: &QuadrantSet, d: usize, delta: usize) -> Result<Volume3D> {
    check_geometry(d, delta)?;
    let q = d + delta;
    let quads = processed.quadrants();
    for v in quads {
        match square_edge(v) {
            Some(e) if e == q => {}
            _ => {
                return Err(Error::SizeMismatch {
                    expected: q,
                    found: v.dims()[0],
                })
            }
        }
    }
    let nz = quads[0].dims()[2];
    if quads.iter().any(|v| v.dims()[2] != nz) {
        return Err(Error::SizeMismatch {
            expected: nz,
            found: quads.iter().map(|v| v.dims()[2]).find(|&z| z != nz).unwrap(),
        });
    }
    let h = q / 2;
    let offsets = assembly_offsets(d, delta);
    let placements = [[0, 0], [h, 0], [0, h], [h, h]];
    let dims = [q, q, nz];
    let mut data = vec![0.0f32; voxel_count(dims)];
    let mut provenance = Provenance::Real;
    for ((quad, off), place) in quads.iter().zip(offsets).zip(placements) {
        provenance = provenance.combine(quad.provenance());
        for z in 0..nz {
            for y in 0..h {
                for x in 0..h {
                    data[(place[0] + x) + q * ((place[1] + y) + q * z)] =
                        quad.get(off[0] + x, off[1] + y, z);
                }
            }
        }
    }
    let first = quads[0];
    Ok(Volume3D::from_parts_unchecked(
        dims,
        first.spacing(),
        data,
        if quads.iter().all(|v| v.dtype() == DType::U16) { DType::U16 } else { DType::F32 },
        first.kind(),
        provenance,
    ))
}

/// Writes the central `d x d` core of every tile into the parent plane.
/// Cores must partition the plane: a voxel covered twice or never is an error.
/// The result does not depend on tile order.
pub fn stitch(tiles: &[(TileSpec, Volume3D)]) -> Result<Volume3D> {
    let (first_spec, first) = tiles.first().ok_or(Error::Empty("no tiles to stitch"))?;
    let [px, py] = first_spec.parent;
    let nz = first.dims()[2];
    let d = first_spec.d;
    for (spec, tile) in tiles {
        if spec.parent != first_spec.parent || spec.d != d {
            return Err(Error::InvalidParameter("tiles disagree on parent size or core edge".into()));
        }
        let edge = square_edge(tile).ok_or(Error::SizeMismatch {
            expected: tile.dims()[0],
            found: tile.dims()[1],
        })?;
        if edge < d || (edge - d) % 2 != 0 || tile.dims()[2] != nz {
            return Err(Error::SizeMismatch { expected: d, found: edge });
        }
    }

    let core_range = |spec: &TileSpec| {
        let xs = spec.origin[0]..(spec.origin[0] + d).min(px);
        let ys = spec.origin[1]..(spec.origin[1] + d).min(py);
        (xs, ys)
    };

    let mut counts = vec![0u32; px * py];
    for (spec, _) in tiles {
        let (xs, ys) = core_range(spec);
        for y in ys {
            for x in xs.clone() {
                counts[x + px * y] += 1;
            }
        }
    }
    for (fault, pred) in [
        (CoverageFault::Overlap, (|c: u32| c > 1) as fn(u32) -> bool),
        (CoverageFault::Gap, |c: u32| c == 0),
    ] {
        if let Some(i) = counts.iter().position(|&c| pred(c)) {
            return Err(Error::Coverage {
                kind: fault,
                x: i % px,
                y: i / px,
            });
        }
    }

    let dims = [px, py, nz];
    let mut data = vec![0.0f32; voxel_count(dims)];
    let mut provenance = Provenance::Real;
    for (spec, tile) in tiles {
        provenance = provenance.combine(tile.provenance());
        let off = (tile.dims()[0] - d) / 2;
        let (xs, ys) = core_range(spec);
        for z in 0..nz {
            for y in ys.clone() {
                for x in xs.clone() {
                    data[x + px * (y + py * z)] =
                        tile.get(off + x - spec.origin[0], off + y - spec.origin[1], z);
                }
            }
        }
    }
    let dtype = if tiles.iter().all(|(_, t)| t.dtype() == DType::U16) { DType::U16 } else { DType::F32 };
    let kind = if tiles.iter().all(|(_, t)| t.kind() == Kind::Normalized) { Kind::Normalized } else { Kind::Raw };
    Ok(Volume3D::from_parts_unchecked(dims, first.spacing(), data, dtype, kind, provenance))
}

/// On-disk listing of a tile directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileManifest {
    pub parent_dims: [usize; 3],
    pub spacing_um: [f64; 3],
    pub d: usize,
    pub delta: usize,
    pub tiles: Vec<TileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub spec: TileSpec,
    pub file: String,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes every tile as `tile_<x>_<y>.nrv` plus `manifest.json` into `dir`.
pub fn write_tiles(tiles: &[(TileSpec, Volume3D)], parent: &Volume3D, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let first = tiles.first().ok_or(Error::Empty("no tiles to write"))?.0;
    let mut entries = Vec::with_capacity(tiles.len());
    for (spec, tile) in tiles {
        let file = format!("tile_{:05}_{:05}.nrv", spec.origin[0], spec.origin[1]);
        save_volume(tile, dir.join(&file))?;
        entries.push(TileEntry { spec: *spec, file });
    }
    let manifest = TileManifest {
        parent_dims: parent.dims(),
        spacing_um: parent.spacing(),
        d: first.d,
        delta: first.delta,
        tiles: entries,
    };
    let path = dir.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    fs::write(&path, json)?;
    Ok(path)
}

/// Loads the tiles listed in a manifest; file names resolve against the
/// manifest's directory.
pub fn read_tiles(manifest_path: &Path) -> Result<Vec<(TileSpec, Volume3D)>> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: TileManifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .tiles
        .iter()
        .map(|e| Ok((e.spec, load_volume(base.join(&e.file))?)))
        .collect()
}
