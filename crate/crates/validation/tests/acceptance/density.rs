use nrv_core::phantom::{degenerate, predict, random_tube_specs, rasterize_tubes};
use nrv_core::views::{fiber_density, percentage_difference};
use nrv_core::{DegenerationParams, Direction, PredictorBackend};

use crate::oracle::threshold_mask;
use crate::{ensure, Outcome};

fn density(v: &nrv_core::Volume3D, t: f32) -> f64 {
    let m = threshold_mask(v, t);
    m.count() as f64 / m.len() as f64
}

pub fn check() -> Outcome {
    let dims = [96, 96, 96];
    let mut diffs = Vec::new();
    for seed in [7u64, 8, 9] {
        let specs = random_tube_specs(dims, [1.0; 3], 10, (1.5, 3.5), seed);
        let young = rasterize_tubes(&specs, dims, [1.0; 3]).unwrap();
        let params = DegenerationParams {
            thinning_factor: 0.5,
            fragment_fraction: 0.5,
            seed,
            ..Default::default()
        };
        let old = degenerate(&young, &specs, &params).unwrap();
        let (dy, dold) = (density(&young, 0.5), density(&old, 0.5));
        ensure!(fiber_density(&threshold_mask(&young, 0.5)) == dy, "library density differs from voxel count");
        let diff = percentage_difference(dy, dold).unwrap();
        ensure!((dy - dold) / dy * 100.0 == diff, "percentage difference formula");
        ensure!((70.0..=95.0).contains(&diff), "seed {seed}: young {dy:.4}, old {dold:.4}, difference {diff:.1}%");
        diffs.push(diff);

        let backend = PredictorBackend::SyntheticOracle { specs: specs.clone(), params };
        let restored = predict(&old, Direction::OldToYoung, &backend).unwrap();
        ensure!(density(&restored, 0.5) == dy, "seed {seed}: oracle round trip changes density");
        ensure!(restored.data() == young.data(), "seed {seed}: oracle round trip changes voxels");
    }
    let table = percentage_difference(42.5, 6.8).unwrap();
    ensure!((table - 84.0).abs() < 1e-9, "(42.5, 6.8) gives {table}");
    let listed: Vec<String> = diffs.iter().map(|d| format!("{d:.1}%")).collect();
    Ok(format!(
        "differences {} on three phantoms; oracle round trip exact; (42.5, 6.8) -> {table:.1}%",
        listed.join(", ")
    ))
}
