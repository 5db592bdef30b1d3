//! 26-connected component labelling of boolean masks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::volume::{coords, for_each_neighbor26, Domain, Mask, Provenance, Volume3D};

/// Inclusive axis-aligned voxel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BBox {
    pub fn point(c: [usize; 3]) -> BBox {
        BBox { min: c, max: c }
    }

    pub fn include(&mut self, c: [usize; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(c[a]);
            self.max[a] = self.max[a].max(c[a]);
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    pub fn size(&self) -> [usize; 3] {
        [
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuriteComponent {
    pub id: usize,
    /// Linear voxel indices, ascending.
    pub voxels: Vec<usize>,
    pub bbox: BBox,
    pub domain: Domain,
    pub provenance: Provenance,
}

impl NeuriteComponent {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.voxels.binary_search(&i).is_ok()
    }

    /// True when the two sorted voxel lists share at least one voxel.
    pub fn overlaps(&self, other: &NeuriteComponent) -> bool {
        if !self.bbox.intersects(&other.bbox) {
            return false;
        }
        let (mut a, mut b) = (0, 0);
        while a < self.voxels.len() && b < other.voxels.len() {
            match self.voxels[a].cmp(&other.voxels[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Labels the 26-connected components of `mask`. Component ids follow the
/// order of each component's smallest linear index.
pub fn connected_components(
    mask: &Mask,
    domain: Domain,
    provenance: Provenance,
) -> Vec<NeuriteComponent> {
    let dims = mask.dims();
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask.get(start) || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        let mut bbox = BBox::point(coords(dims, start));
        while let Some(i) = queue.pop_front() {
            voxels.push(i);
            bbox.include(coords(dims, i));
            for_each_neighbor26(dims, i, |j| {
                if mask.get(j) && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            });
        }
        voxels.sort_unstable();
        out.push(NeuriteComponent {
            id: out.len(),
            voxels,
            bbox,
            domain,
            provenance,
        });
    }
    out
}

/// Label volume (u16): 0 background, component `id + 1` elsewhere.
/// Ids beyond `u16::MAX - 1` saturate.
pub fn label_volume(components: &[NeuriteComponent], template: &Volume3D) -> Volume3D {
    let mut labels = vec![0u16; template.len()];
    for c in components {
        let label = (c.id + 1).min(u16::MAX as usize) as u16;
        for &i in &c.voxels {
            labels[i] = label;
        }
    }
    Volume3D::from_u16(template.dims(), template.spacing(), &labels, template.provenance())
        .expect("template geometry is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::linear_index;

    #[test]
    fn empty_mask() {
        let m = Mask::new([4, 4, 4]);
        assert!(connected_components(&m, Domain::Young, Provenance::Real).is_empty());
    }

    #[test]
    fn two_cubes() {
        let dims = [10, 10, 10];
        let mut m = Mask::new(dims);
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    m.set(linear_index(dims, x, y, z), true);
                    m.set(linear_index(dims, x + 6, y + 6, z + 6), true);
                }
            }
        }
        let cs = connected_components(&m, Domain::Young, Provenance::Real);
        assert_eq!(cs.len(), 2);
        assert!(cs.iter().all(|c| c.len() == 27));
        assert_eq!(cs[0].bbox, BBox { min: [0, 0, 0], max: [2, 2, 2] });
        assert_eq!(cs[1].bbox, BBox { min: [6, 6, 6], max: [8, 8, 8] });
    }

    #[test]
    fn diagonal_touch_is_connected() {
        let dims = [3, 3, 3];
        let m = Mask::from_indices(dims, [linear_index(dims, 0, 0, 0), linear_index(dims, 1, 1, 1)]);
        assert_eq!(connected_components(&m, Domain::Old, Provenance::Real).len(), 1);
    }
}
