//! Morphing between age domains along shortest voxel paths.
//!
//! Young foreground voxels that are also old foreground are *static*; the
//! remaining young voxels are *dynamic*. Every dynamic voxel gets a shortest
//! 26-connected path (Euclidean, spacing-aware edge lengths) through dynamic
//! voxels back to a static voxel. A young component with no static voxel at
//! all is anchored at its mass-centre voxel instead. Intermediate frames
//! switch voxels on or off along these paths as a function of
//! `sigma in [0, 1]`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{connected_components, NeuriteComponent};
use crate::error::{Error, Result};
use crate::intensity::foreground_mask;
use crate::volume::{
    coords, linear_index, voxel_count, Direction, Domain, Kind, Mask, Provenance, Volume3D,
};

pub type MorphDirection = Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    NotAssociated,
    Queued,
    Associated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicVoxel {
    pub index: usize,
    /// Geodesic distance to the anchor in micrometres.
    pub dist: f64,
    pub status: Status,
    /// Previous voxel on the path; `None` for a mass-centre anchor.
    pub parent: Option<usize>,
    /// First voxel of the path: a static voxel or a mass-centre anchor.
    pub anchor: usize,
    /// Number of path voxels after the anchor.
    pub hops: u32,
}

/// A young component and the old components whose voxels it shares. An empty
/// `old` list is the null case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub young: usize,
    pub old: Vec<usize>,
}

impl Pairing {
    pub fn is_null(&self) -> bool {
        self.old.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphField {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub threshold: f32,
    /// Sorted static voxels.
    pub static_voxels: Vec<usize>,
    /// Sorted mass-centre anchors of components without static voxels.
    pub seeds: Vec<usize>,
    /// Sorted old foreground voxels outside the young foreground.
    pub old_only: Vec<usize>,
    /// Sorted by `index`.
    pub dynamic: Vec<DynamicVoxel>,
    pub pairings: Vec<Pairing>,
}

/// `static = young & old`, `dynamic = young & !old`.
pub fn classify_voxels(young: &Mask, old: &Mask) -> Result<(Mask, Mask)> {
    young.same_dims(old)?;
    Ok((young.and(old), young.and_not(old)))
}

/// Pairs each young component with every old component it overlaps.
pub fn pair_components(young: &[NeuriteComponent], old: &[NeuriteComponent]) -> Vec<Pairing> {
    young
        .iter()
        .map(|y| Pairing {
            young: y.id,
            old: old.iter().filter(|o| y.overlaps(o)).map(|o| o.id).collect(),
        })
        .collect()
}

/// The voxel closest (in micrometres) to the centroid of `voxels`; ties go
/// to the smallest linear index. Distances are compared as
/// `sum_a s_a^2 (n c_a - S_a)^2`, which is exact integer arithmetic when the
/// spacing is isotropic.
pub fn mass_center_voxel(voxels: &[usize], dims: [usize; 3], spacing: [f64; 3]) -> Option<usize> {
    if voxels.is_empty() {
        return None;
    }
    let n = voxels.len() as i128;
    let mut sum = [0i128; 3];
    for &i in voxels {
        let c = coords(dims, i);
        for a in 0..3 {
            sum[a] += c[a] as i128;
        }
    }
    let diffs = |i: usize| {
        let c = coords(dims, i);
        [0, 1, 2].map(|a| n * c[a] as i128 - sum[a])
    };
    let isotropic = spacing[0] == spacing[1] && spacing[1] == spacing[2];
    let mut best: Option<(usize, i128, f64)> = None;
    for &i in voxels {
        let d = diffs(i);
        let exact: i128 = d.iter().map(|x| x * x).sum();
        let approx: f64 = (0..3).map(|a| (spacing[a] * d[a] as f64).powi(2)).sum();
        let better = match best {
            None => true,
            Some((bi, be, ba)) => {
                let ord = if isotropic { exact.cmp(&be) } else { approx.total_cmp(&ba) };
                ord.is_lt() || (ord.is_eq() && i < bi)
            }
        };
        if better {
            best = Some((i, exact, approx));
        }
    }
    best.map(|(i, _, _)| i)
}

pub fn mass_center_seed(component: &NeuriteComponent, dims: [usize; 3], spacing: [f64; 3]) -> Option<usize> {
    mass_center_voxel(&component.voxels, dims, spacing)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapKey(f64, usize);

impl Eq for HeapKey {}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 26 neighbour offsets with their Euclidean lengths.
fn neighbor_steps(spacing: [f64; 3]) -> Vec<([i64; 3], f64)> {
    let mut steps = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let len = ((dx as f64 * spacing[0]).powi(2)
                    + (dy as f64 * spacing[1]).powi(2)
                    + (dz as f64 * spacing[2]).powi(2))
                .sqrt();
                steps.push(([dx, dy, dz], len));
            }
        }
    }
    steps
}

struct Grid {
    dims: [usize; 3],
    steps: Vec<([i64; 3], f64)>,
}

impl Grid {
    #[inline]
    fn for_each(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let c = coords(self.dims, i);
        for (off, len) in &self.steps {
            let n = [c[0] as i64 + off[0], c[1] as i64 + off[1], c[2] as i64 + off[2]];
            if (0..3).all(|a| n[a] >= 0 && n[a] < self.dims[a] as i64) {
                f(linear_index(self.dims, n[0] as usize, n[1] as usize, n[2] as usize), *len);
            }
        }
    }
}

struct Search {
    dist: Vec<f64>,
    status: Vec<Status>,
    parent: Vec<Option<usize>>,
    anchor: Vec<usize>,
    hops: Vec<u32>,
    heap: BinaryHeap<Reverse<HeapKey>>,
}

impl Search {
    fn new(n: usize) -> Search {
        Search {
            dist: vec![f64::INFINITY; n],
            status: vec![Status::NotAssociated; n],
            parent: vec![None; n],
            anchor: vec![usize::MAX; n],
            hops: vec![0; n],
            heap: BinaryHeap::new(),
        }
    }

    /// Pops until the heap is empty. A queued voxel whose tentative path is
    /// beaten by a shorter one takes the new parent (path exchange).
    fn run(&mut self, grid: &Grid, dynamic: &Mask) {
        while let Some(Reverse(HeapKey(d, a))) = self.heap.pop() {
            if self.status[a] == Status::Associated || d > self.dist[a] {
                continue;
            }
            self.status[a] = Status::Associated;
            let (base, anchor, hops) = (self.dist[a], self.anchor[a], self.hops[a]);
            grid.for_each(a, |b, len| {
                if !dynamic.get(b) || self.status[b] == Status::Associated {
                    return;
                }
                let nd = base + len;
                let take = match self.status[b] {
                    Status::NotAssociated => true,
                    Status::Queued => nd < self.dist[b],
                    Status::Associated => false,
                };
                if take {
                    self.dist[b] = nd;
                    self.status[b] = Status::Queued;
                    self.parent[b] = Some(a);
                    self.anchor[b] = anchor;
                    self.hops[b] = hops + 1;
                    self.heap.push(Reverse(HeapKey(nd, b)));
                }
            });
        }
    }
}

/// Shortest paths from the static set to every dynamic voxel through dynamic
/// voxels. Dynamic voxels that cannot be reached are grouped into their
/// 26-connected components and anchored at each component's mass centre.
pub fn assign_paths(static_set: &Mask, dynamic_set: &Mask, spacing: [f64; 3]) -> Result<MorphField> {
    static_set.same_dims(dynamic_set)?;
    let dims = static_set.dims();
    let grid = Grid {
        dims,
        steps: neighbor_steps(spacing),
    };
    let mut s = Search::new(static_set.len());

    // Seed the frontier: dynamic neighbours of static voxels, at their
    // shortest single-step distance.
    for a in static_set.ones() {
        grid.for_each(a, |b, len| {
            if dynamic_set.get(b) && len < s.dist[b] {
                s.dist[b] = len;
                s.status[b] = Status::Queued;
                s.parent[b] = Some(a);
                s.anchor[b] = a;
                s.hops[b] = 1;
            }
        });
    }
    for b in dynamic_set.ones() {
        if s.status[b] == Status::Queued {
            s.heap.push(Reverse(HeapKey(s.dist[b], b)));
        }
    }
    s.run(&grid, dynamic_set);

    let unreached = Mask::from_indices(
        dims,
        dynamic_set.ones().filter(|&i| s.status[i] != Status::Associated),
    );
    let mut seeds = Vec::new();
    if unreached.count() > 0 {
        for comp in connected_components(&unreached, Domain::Young, Provenance::Real) {
            let seed = mass_center_voxel(&comp.voxels, dims, spacing).expect("component is non-empty");
            log::debug!("anchoring {} unreachable dynamic voxels at {seed}", comp.len());
            s.dist[seed] = 0.0;
            s.status[seed] = Status::Queued;
            s.parent[seed] = None;
            s.anchor[seed] = seed;
            s.hops[seed] = 0;
            s.heap.push(Reverse(HeapKey(0.0, seed)));
            seeds.push(seed);
        }
        s.run(&grid, &unreached);
    }
    seeds.sort_unstable();

    let dynamic = dynamic_set
        .ones()
        .map(|i| DynamicVoxel {
            index: i,
            dist: s.dist[i],
            status: s.status[i],
            parent: s.parent[i],
            anchor: s.anchor[i],
            hops: s.hops[i],
        })
        .collect();
    Ok(MorphField {
        dims,
        spacing,
        threshold: 0.0,
        static_voxels: static_set.ones().collect(),
        seeds,
        old_only: Vec::new(),
        dynamic,
        pairings: Vec::new(),
    })
}

/// Extracts a component into its bounding box; returns the local masks
/// (static, dynamic) and the box origin.
fn local_problem(comp: &NeuriteComponent, old: &Mask, dims: [usize; 3]) -> (Mask, Mask, [usize; 3]) {
    let size = comp.bbox.size();
    let origin = comp.bbox.min;
    let mut st = Mask::new(size);
    let mut dy = Mask::new(size);
    for &i in &comp.voxels {
        let c = coords(dims, i);
        let l = linear_index(size, c[0] - origin[0], c[1] - origin[1], c[2] - origin[2]);
        if old.get(i) {
            st.set(l, true);
        } else {
            dy.set(l, true);
        }
    }
    (st, dy, origin)
}

/// Builds the morph field for a registered young/old pair. Each young
/// component is solved independently (and in parallel) inside its bounding
/// box.
pub fn build_morph_field(young: &Volume3D, old: &Volume3D, threshold: f32) -> Result<MorphField> {
    young.same_dims(old)?;
    let dims = young.dims();
    let spacing = young.spacing();
    let ym = foreground_mask(young, threshold);
    let om = foreground_mask(old, threshold);
    let ycomps = connected_components(&ym, Domain::Young, young.provenance());
    let ocomps = connected_components(&om, Domain::Old, old.provenance());
    let pairings = pair_components(&ycomps, &ocomps);

    let parts: Vec<MorphField> = ycomps
        .par_iter()
        .map(|comp| {
            let (st, dy, origin) = local_problem(comp, &om, dims);
            let size = st.dims();
            let to_global = |l: usize| {
                let c = coords(size, l);
                linear_index(dims, c[0] + origin[0], c[1] + origin[1], c[2] + origin[2])
            };
            let local = assign_paths(&st, &dy, spacing)?;
            Ok(MorphField {
                dims,
                spacing,
                threshold,
                static_voxels: local.static_voxels.iter().map(|&l| to_global(l)).collect(),
                seeds: local.seeds.iter().map(|&l| to_global(l)).collect(),
                old_only: Vec::new(),
                dynamic: local
                    .dynamic
                    .iter()
                    .map(|d| DynamicVoxel {
                        index: to_global(d.index),
                        dist: d.dist,
                        status: d.status,
                        parent: d.parent.map(to_global),
                        anchor: to_global(d.anchor),
                        hops: d.hops,
                    })
                    .collect(),
                pairings: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;

    let mut field = MorphField {
        dims,
        spacing,
        threshold,
        static_voxels: Vec::new(),
        seeds: Vec::new(),
        old_only: om.and_not(&ym).ones().collect(),
        dynamic: Vec::new(),
        pairings,
    };
    for p in parts {
        field.static_voxels.extend(p.static_voxels);
        field.seeds.extend(p.seeds);
        field.dynamic.extend(p.dynamic);
    }
    field.static_voxels.sort_unstable();
    field.seeds.sort_unstable();
    field.dynamic.sort_unstable_by_key(|d| d.index);
    Ok(field)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} outside [0, 1]")));
    }
    Ok(())
}

impl MorphField {
    pub fn entry(&self, index: usize) -> Option<&DynamicVoxel> {
        self.dynamic
            .binary_search_by_key(&index, |d| d.index)
            .ok()
            .map(|k| &self.dynamic[k])
    }

    pub fn is_static(&self, index: usize) -> bool {
        self.static_voxels.binary_search(&index).is_ok()
    }

    /// The stored path of a dynamic voxel, from its anchor to itself.
    pub fn path(&self, index: usize) -> Option<Vec<usize>> {
        let mut cur = self.entry(index)?;
        let mut out = vec![cur.index];
        loop {
            match cur.parent {
                None => break,
                Some(p) => match self.entry(p) {
                    Some(e) => {
                        out.push(p);
                        cur = e;
                    }
                    None => {
                        out.push(p);
                        break;
                    }
                },
            }
        }
        out.reverse();
        Some(out)
    }

    /// Voxels retained per path for a dynamic voxel with `hops` path voxels.
    fn reach(hops: u32, sigma: f64, dir: Direction) -> u32 {
        let scaled = sigma * hops as f64;
        match dir {
            Direction::OldToYoung => scaled.floor() as u32,
            Direction::YoungToOld => hops - (scaled.ceil() as u32).min(hops),
        }
    }

    /// Foreground of the frame at `sigma`. Static voxels, mass-centre anchors
    /// and old-only voxels are always on; a dynamic voxel at depth `k` on its
    /// path is on when some path through it retains at least `k` voxels.
    pub fn intermediate_mask(&self, sigma: f64, dir: Direction) -> Result<Mask> {
        check_sigma(sigma)?;
        let n = self.dynamic.len();
        let mut reach: Vec<u32> = self.dynamic.iter().map(|d| Self::reach(d.hops, sigma, dir)).collect();
        let parent_pos: Vec<Option<usize>> = self
            .dynamic
            .iter()
            .map(|d| d.parent.and_then(|p| self.dynamic.binary_search_by_key(&p, |e| e.index).ok()))
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by_key(|&k| Reverse(self.dynamic[k].hops));
        for &k in &order {
            if let Some(p) = parent_pos[k] {
                reach[p] = reach[p].max(reach[k]);
            }
        }
        let mut mask = Mask::from_indices(
            self.dims,
            self.static_voxels.iter().chain(&self.seeds).chain(&self.old_only).copied(),
        );
        for (k, d) in self.dynamic.iter().enumerate() {
            if reach[k] >= d.hops {
                mask.set(d.index, true);
            }
        }
        Ok(mask)
    }

    /// Foreground of the morph target (`sigma = 1` young-to-old, or
    /// `sigma = 0` old-to-young): old foreground plus mass-centre anchors.
    pub fn old_side_mask(&self) -> Mask {
        Mask::from_indices(
            self.dims,
            self.static_voxels.iter().chain(&self.seeds).chain(&self.old_only).copied(),
        )
    }

    /// Renders the frame at `sigma`: young intensity on switched-on dynamic
    /// voxels, old intensity on static and old-only voxels, zero elsewhere.
    pub fn intermediate_volume(&self, young: &Volume3D, old: &Volume3D, sigma: f64, dir: Direction) -> Result<Volume3D> {
        young.same_dims(old)?;
        if young.dims() != self.dims {
            return Err(Error::DimsMismatch {
                left: young.dims(),
                right: self.dims,
            });
        }
        let mask = self.intermediate_mask(sigma, dir)?;
        let mut data = vec![0.0f32; voxel_count(self.dims)];
        for i in mask.ones() {
            data[i] = young.data()[i];
        }
        for &i in self.static_voxels.iter().chain(&self.old_only) {
            data[i] = old.data()[i];
        }
        let provenance = young.provenance().combine(old.provenance()).combine(Provenance::Morphed);
        let kind = if young.kind() == Kind::Normalized && old.kind() == Kind::Normalized {
            Kind::Normalized
        } else {
            Kind::Raw
        };
        Volume3D::new(self.dims, young.spacing(), data, kind, provenance)
    }

    pub fn null_pairings(&self) -> impl Iterator<Item = &Pairing> {
        self.pairings.iter().filter(|p| p.is_null())
    }

    /// Binary sidecar so a field can be reloaded without recomputing paths.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SIDECAR_MAGIC)?;
        w.write_u32::<LittleEndian>(SIDECAR_VERSION)?;
        for &n in &self.dims {
            w.write_u64::<LittleEndian>(n as u64)?;
        }
        for &s in &self.spacing {
            w.write_f64::<LittleEndian>(s)?;
        }
        w.write_f32::<LittleEndian>(self.threshold)?;
        for list in [&self.static_voxels, &self.seeds, &self.old_only] {
            w.write_u64::<LittleEndian>(list.len() as u64)?;
            for &i in list {
                w.write_u64::<LittleEndian>(i as u64)?;
            }
        }
        w.write_u64::<LittleEndian>(self.dynamic.len() as u64)?;
        for d in &self.dynamic {
            w.write_u64::<LittleEndian>(d.index as u64)?;
            w.write_f64::<LittleEndian>(d.dist)?;
            w.write_u8(match d.status {
                Status::NotAssociated => 0,
                Status::Queued => 1,
                Status::Associated => 2,
            })?;
            w.write_u64::<LittleEndian>(d.parent.map_or(u64::MAX, |p| p as u64))?;
            w.write_u64::<LittleEndian>(d.anchor as u64)?;
            w.write_u32::<LittleEndian>(d.hops)?;
        }
        w.write_u64::<LittleEndian>(self.pairings.len() as u64)?;
        for p in &self.pairings {
            w.write_u64::<LittleEndian>(p.young as u64)?;
            w.write_u64::<LittleEndian>(p.old.len() as u64)?;
            for &o in &p.old {
                w.write_u64::<LittleEndian>(o as u64)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<MorphField> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SIDECAR_MAGIC {
            return Err(Error::MalformedHeader("not a morph field sidecar".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != SIDECAR_VERSION {
            return Err(Error::MalformedHeader(format!("unsupported sidecar version {version}")));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = r.read_u64::<LittleEndian>()? as usize;
        }
        let mut spacing = [0.0; 3];
        for s in &mut spacing {
            *s = r.read_f64::<LittleEndian>()?;
        }
        let threshold = r.read_f32::<LittleEndian>()?;
        let read_list = |r: &mut R| -> Result<Vec<usize>> {
            let n = r.read_u64::<LittleEndian>()? as usize;
            (0..n).map(|_| Ok(r.read_u64::<LittleEndian>()? as usize)).collect()
        };
        let static_voxels = read_list(&mut r)?;
        let seeds = read_list(&mut r)?;
        let old_only = read_list(&mut r)?;
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut dynamic = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let index = r.read_u64::<LittleEndian>()? as usize;
            let dist = r.read_f64::<LittleEndian>()?;
            let status = match r.read_u8()? {
                0 => Status::NotAssociated,
                1 => Status::Queued,
                2 => Status::Associated,
                s => return Err(Error::MalformedHeader(format!("bad status byte {s}"))),
            };
            let parent = match r.read_u64::<LittleEndian>()? {
                u64::MAX => None,
                p => Some(p as usize),
            };
            let anchor = r.read_u64::<LittleEndian>()? as usize;
            let hops = r.read_u32::<LittleEndian>()?;
            dynamic.push(DynamicVoxel {
                index,
                dist,
                status,
                parent,
                anchor,
                hops,
            });
        }
        let np = r.read_u64::<LittleEndian>()? as usize;
        let mut pairings = Vec::with_capacity(np.min(1 << 20));
        for _ in 0..np {
            let young = r.read_u64::<LittleEndian>()? as usize;
            let old = read_list(&mut r)?;
            pairings.push(Pairing { young, old });
        }
        Ok(MorphField {
            dims,
            spacing,
            threshold,
            static_voxels,
            seeds,
            old_only,
            dynamic,
            pairings,
        })
    }
}

const SIDECAR_MAGIC: &[u8; 4] = b"NRMF";
const SIDECAR_VERSION: u32 = 1;

/// Frame at `sigma` for a prepared field; see [`MorphField::intermediate_volume`].
pub fn intermediate_volume(
    field: &MorphField,
    young: &Volume3D,
    old: &Volume3D,
    sigma: f64,
    dir: Direction,
) -> Result<Volume3D> {
    field.intermediate_volume(young, old, sigma, dir)
}
