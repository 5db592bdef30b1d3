//! Volumetric neurite processing: global intensity normalization, overlapping
//! tile decomposition, reference loss oracles for age-translation networks,
//! Hessian vesselness, shortest-path morphing between age domains, and the
//! mesh, transfer-function and density assets used by the viewers.

pub mod components;
pub mod error;
pub mod filter;
pub mod intensity;
pub mod io;
pub mod losses;
mod mc_tables;
pub mod mesh;
pub mod neuromorph;
pub mod phantom;
pub mod tiling;
pub mod vesselness;
pub mod views;
pub mod volume;

pub use components::{connected_components, BBox, NeuriteComponent};
pub use error::{Error, Result};
pub use intensity::{foreground_mask, histogram, nonlinear_rescale, HistogramSummary};
pub use io::{load_volume, save_volume};
pub use losses::{LossConfig, TileLossBreakdown};
pub use mesh::{extract_isosurface, TriMesh};
pub use neuromorph::{MorphField, MorphDirection};
pub use phantom::{DegenerationParams, PredictorBackend, TubeSpec};
pub use tiling::{QuadrantSet, TileSpec};
pub use vesselness::VesselnessParams;
pub use views::{render_slice, Axis, SliceImage, SliceShading, TransferFunction};
pub use volume::{DType, Direction, Domain, Kind, Mask, Provenance, Volume3D};
