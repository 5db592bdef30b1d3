use nrv_core::phantom::rasterize_tubes;
use nrv_core::vesselness::{jerman_detailed, jerman_response};
use nrv_core::volume::linear_index;
use nrv_core::{Kind, Provenance, TubeSpec, VesselnessParams, Volume3D};

use crate::{ensure, Outcome};

const SIGMAS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

fn params(sigmas: &[f64]) -> VesselnessParams {
    VesselnessParams { sigmas_um: sigmas.to_vec(), ..Default::default() }
}

fn tube(dims: [usize; 3], from: [f64; 3], to: [f64; 3], r: f64) -> Volume3D {
    rasterize_tubes(&[TubeSpec::straight(from, to, r, 1.0)], dims, [1.0; 3]).unwrap()
}

pub fn check() -> Outcome {
    let uniform = Volume3D::new([16, 16, 16], [1.0; 3], vec![0.6; 4096], Kind::Normalized, Provenance::Real).unwrap();
    let u = jerman_response(&uniform, &params(&SIGMAS)).unwrap();
    ensure!(u.data().iter().all(|&x| x == 0.0), "uniform volume has a non-zero response");

    for r in [2.0, 3.0, 4.0, 5.0] {
        let v = tube([40, 40, 40], [4.0, 20.0, 20.0], [35.0, 20.0, 20.0], r);
        let out = jerman_detailed(&v, &params(&SIGMAS)).unwrap();
        for x in 12..28 {
            let chosen = SIGMAS[out.best_scale[linear_index(v.dims(), x, 20, 20)] as usize];
            ensure!((chosen - r).abs() <= 1.0, "radius {r}: core voxel {x} picked scale {chosen}");
        }
    }

    let dims = [40, 40, 24];
    let p = params(&[1.0, 2.0, 3.0]);
    let straight = jerman_response(&tube(dims, [4.0, 20.0, 12.0], [35.0, 20.0, 12.0], 2.5), &p).unwrap();
    let a = 12.0 / 2f64.sqrt();
    let diagonal = jerman_response(&tube(dims, [20.0 - a, 20.0 - a, 12.0], [20.0 + a, 20.0 + a, 12.0], 2.5), &p).unwrap();
    let m1 = (12..28).map(|x| straight.get(x, 20, 12) as f64).sum::<f64>() / 16.0;
    let m2 = (14..27).map(|x| diagonal.get(x, x, 12) as f64).sum::<f64>() / 13.0;
    let rotation = (m1 - m2).abs() / m1;
    ensure!(rotation < 0.15, "45 degree rotation changes mean core response by {:.1}%", 100.0 * rotation);

    // tube of radius 3 against an isolated bright voxel of the same peak intensity
    let dims = [40, 40, 40];
    let t = tube(dims, [4.0, 20.0, 20.0], [35.0, 20.0, 20.0], 3.0);
    let mut point = vec![0.0f32; 40 * 40 * 40];
    point[linear_index(dims, 20, 20, 20)] = 1.0;
    let b = t.with_data(point, Kind::Normalized).unwrap();
    let core = jerman_response(&t, &params(&SIGMAS)).unwrap().get(20, 20, 20);
    let blob = jerman_response(&b, &params(&SIGMAS)).unwrap().get(20, 20, 20);
    ensure!(
        core > blob,
        "blob not rejected: tube core {core:.3} vs bright point {blob:.3} (uniform 0, scale selection and rotation {:.1}% pass)",
        100.0 * rotation
    );
    Ok(format!(
        "uniform 0; scale within 1 for r = 2..5; rotation {:.1}%; tube {core:.3} > point {blob:.3}",
        100.0 * rotation
    ))
}
