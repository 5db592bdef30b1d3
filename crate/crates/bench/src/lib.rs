//! Shared inputs for the benchmarks.

use nrv_core::phantom::{degenerate, random_tube_specs, rasterize_tubes};
use nrv_core::{DegenerationParams, Volume3D};

/// A young phantom and its degenerated old counterpart.
pub fn phantom_pair(dims: [usize; 3], tubes: usize, seed: u64) -> (Volume3D, Volume3D) {
    let specs = random_tube_specs(dims, [1.0; 3], tubes, (1.5, 3.5), seed);
    let young = rasterize_tubes(&specs, dims, [1.0; 3]).expect("specs fit the volume");
    let old = degenerate(&young, &specs, &DegenerationParams { seed, ..Default::default() }).expect("valid params");
    (young, old)
}
