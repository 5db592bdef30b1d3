use nrv_core::tiling::{assemble_center, make_quadrants, split_tiles, stitch, QuadrantSet};
use nrv_core::{Kind, Provenance, Volume3D};
use rand::Rng;

use crate::oracle::{random_volume, rng, window};
use crate::{ensure, Outcome};

fn constant(edge: usize, nz: usize, value: f32) -> Volume3D {
    Volume3D::new([edge, edge, nz], [1.0; 3], vec![value; edge * edge * nz], Kind::Normalized, Provenance::Real).unwrap()
}

pub fn check() -> Outcome {
    let mut r = rng(1);

    // published sizes
    let v = random_volume([256, 256, 20], &mut r);
    let tiles = split_tiles(&v, 128, 32).map_err(|e| e.to_string())?;
    ensure!(tiles.len() == 4, "expected 4 tiles, got {}", tiles.len());
    for (_, t) in &tiles {
        ensure!(t.dims() == [192, 192, 20], "tile dims {:?}", t.dims());
        let q = make_quadrants(t, 128, 32).map_err(|e| e.to_string())?;
        for c in q.quadrants().into_iter().chain([&q.center]) {
            ensure!(c.dims() == [160, 160, 20], "quadrant dims {:?}", c.dims());
        }
    }
    // each quadrant contributes one 80 x 80 block to the assembled centre
    let marked = QuadrantSet {
        top_left: constant(160, 20, 0.25),
        top_right: constant(160, 20, 0.5),
        bottom_left: constant(160, 20, 0.75),
        bottom_right: constant(160, 20, 1.0),
        center: constant(160, 20, 0.0),
    };
    let a = assemble_center(&marked, 128, 32).map_err(|e| e.to_string())?;
    ensure!(a.dims() == [160, 160, 20], "assembled dims {:?}", a.dims());
    for (k, &(x0, y0)) in [(0, 0), (80, 0), (0, 80), (80, 80)].iter().enumerate() {
        ensure!(
            window(&a, x0, y0, 80).iter().all(|&x| x == (k + 1) as f32 / 4.0),
            "block {k} is not an 80 x 80 crop of quadrant {k}"
        );
    }

    // identity round trip
    let mut roundtrips = 0;
    for delta in [0, 32] {
        let v = random_volume([512, 512, 20], &mut r);
        ensure!(stitch(&split_tiles(&v, 128, delta).unwrap()).unwrap() == v, "512x512x20 delta {delta}");
        roundtrips += 1;
    }
    for _ in 0..40 {
        let d = 2 * r.random_range(1..=32usize);
        let delta = 2 * r.random_range(0..=16usize);
        let nx = d + 2 * delta + r.random_range(0..200);
        let ny = d + 2 * delta + r.random_range(0..200);
        let nz = r.random_range(1..=20);
        let v = random_volume([nx, ny, nz], &mut r);
        let mut tiles = split_tiles(&v, d, delta).unwrap();
        tiles.reverse();
        ensure!(stitch(&tiles).unwrap() == v, "round trip {nx}x{ny}x{nz} d={d} delta={delta}");
        roundtrips += 1;
    }

    // assembly of unprocessed quadrants equals the direct centre crop
    let mut pairs = 0;
    for d in (8..=128).step_by(2) {
        for delta in (0..=32).step_by(2) {
            let e = d + 2 * delta;
            let tile = random_volume([e, e, 2], &mut r);
            let q = make_quadrants(&tile, d, delta).unwrap();
            let assembled = assemble_center(&q, d, delta).unwrap();
            ensure!(
                assembled.data() == window(&tile, delta / 2, delta / 2, d + delta).as_slice(),
                "assemble != centre crop at d={d} delta={delta}"
            );
            pairs += 1;
        }
    }
    Ok(format!(
        "192x192x20 tiles, 160x160x20 quadrants, 80x80 crops; {roundtrips} bit-exact round trips; {pairs} (d, delta) pairs"
    ))
}
