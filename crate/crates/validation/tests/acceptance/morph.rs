use nrv_core::components::connected_components;
use nrv_core::neuromorph::{assign_paths, build_morph_field, MorphField};
use nrv_core::phantom::{degenerate_specs, random_tube_specs, rasterize_tubes};
use nrv_core::{DegenerationParams, Direction, Domain, Kind, Mask, Provenance, TubeSpec};
use rand::Rng;

use crate::oracle::{mass_center, morph_distances, rng, threshold_mask};
use crate::{ensure, Outcome};

struct Pair {
    young: Mask,
    old: Mask,
    field: MorphField,
}

/// Thinned, fragmented old tubes inside the young ones, plus one young-only
/// tube that has no old counterpart.
fn phantom_pair(seed: u64) -> Pair {
    let dims = [48, 40, 16];
    let specs = random_tube_specs([36, 40, 16], [1.0; 3], 3, (1.5, 3.0), seed);
    let p = DegenerationParams { seed, ..Default::default() };
    let old_specs = degenerate_specs(&specs, &p).unwrap();
    let mut young_specs = specs;
    young_specs.push(TubeSpec::straight([44.0, 5.0, 8.0], [44.0, 35.0, 8.0], 1.0, 1.0));
    let young = rasterize_tubes(&young_specs, dims, [1.0; 3]).unwrap();
    let old_raw = rasterize_tubes(&old_specs, dims, [1.0; 3]).unwrap();
    let data = old_raw.data().iter().zip(young.data()).map(|(o, y)| o.min(*y)).collect();
    let old = young.with_data(data, Kind::Normalized).unwrap();
    let field = build_morph_field(&young, &old, 0.1).unwrap();
    Pair { young: threshold_mask(&young, 0.1), old: threshold_mask(&old, 0.1), field }
}

fn with(m: &Mask, extra: &[usize]) -> Mask {
    let mut m = m.clone();
    for &i in extra {
        m.set(i, true);
    }
    m
}

pub fn check() -> Outcome {
    let mut r = rng(4);
    let mut compared = 0usize;
    for case in 0..1000 {
        let dims = [r.random_range(1..=16), r.random_range(1..=16), r.random_range(1..=16)];
        let fill = r.random_range(0.2..0.9);
        let static_frac = r.random_range(0.0..0.3);
        let n: usize = dims.iter().product();
        let (mut st, mut dy) = (Mask::new(dims), Mask::new(dims));
        for i in 0..n {
            if r.random_bool(fill) {
                if r.random_bool(static_frac) {
                    st.set(i, true);
                } else {
                    dy.set(i, true);
                }
            }
        }
        let f = assign_paths(&st, &dy, [1.0; 3]).map_err(|e| e.to_string())?;
        let want = morph_distances(&st, &dy);
        ensure!(f.dynamic.len() == dy.count(), "case {case}: {} of {} dynamic voxels", f.dynamic.len(), dy.count());
        for d in &f.dynamic {
            ensure!(d.dist == want[d.index], "case {case}: voxel {} dist {} vs {}", d.index, d.dist, want[d.index]);
            compared += 1;
        }
    }

    let mut nulls = 0;
    let mut nest_checks = 0;
    for seed in 0..50u64 {
        let Pair { young, old, field: f } = phantom_pair(seed);
        let old_seeds = with(&old, &f.seeds);
        let at = |s: f64, d: Direction| f.intermediate_mask(s, d).unwrap();
        ensure!(at(0.0, Direction::YoungToOld) == young, "pair {seed}: y2o sigma 0 != young");
        ensure!(at(1.0, Direction::YoungToOld) == old_seeds, "pair {seed}: y2o sigma 1 != old + seeds");
        ensure!(at(0.0, Direction::OldToYoung) == old_seeds, "pair {seed}: o2y sigma 0 != old + seeds");
        ensure!(at(1.0, Direction::OldToYoung) == young, "pair {seed}: o2y sigma 1 != young");

        let comps = connected_components(&young, Domain::Young, Provenance::Real);
        let end = at(1.0, Direction::YoungToOld);
        for c in &comps {
            if c.voxels.iter().any(|&v| old.get(v)) {
                continue;
            }
            let left: Vec<usize> = c.voxels.iter().copied().filter(|&v| end.get(v)).collect();
            ensure!(
                left == vec![mass_center(young.dims(), &c.voxels)],
                "pair {seed}: null component leaves {left:?}"
            );
            nulls += 1;
        }

        for _ in 0..100 {
            let (a, b) = (r.random::<f64>(), r.random::<f64>());
            let (lo, hi) = (a.min(b), a.max(b));
            ensure!(
                at(lo, Direction::OldToYoung).is_subset_of(&at(hi, Direction::OldToYoung)),
                "pair {seed}: o2y not nested at {lo} < {hi}"
            );
            ensure!(
                at(hi, Direction::YoungToOld).is_subset_of(&at(lo, Direction::YoungToOld)),
                "pair {seed}: y2o not nested at {lo} < {hi}"
            );
            nest_checks += 1;
        }
    }
    ensure!(nulls >= 50, "only {nulls} null components exercised");
    Ok(format!(
        "{compared} distances exact over 1000 masks; endpoints on 50 pairs; {nest_checks} sigma pairs nested; {nulls} null components collapse to their mass centre"
    ))
}
