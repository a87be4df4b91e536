//! Tiled, parallel, out-of-core flow accumulation for non-divergent (D8)
//! flow-direction rasters.
//!
//! The engine splits a DEM-sized flow-direction raster into fixed-size tiles
//! and computes flow accumulation in two stages driven by a single producer
//! and any number of consumer workers:
//!
//! 1. every tile is solved independently and only its perimeter (flow
//!    direction, accumulation, link target per boundary cell) is sent to the
//!    producer;
//! 2. the producer aggregates all perimeters into a global flow graph, solves
//!    it, and sends back per-tile accumulation offsets which the workers
//!    apply along the downstream flow paths inside each tile.
//!
//! Between the stages a worker can discard its intermediate accumulations and
//! recompute them later ([`Strategy::Evict`]), spill them to disk compressed
//! ([`Strategy::Cache`]), or keep them in RAM ([`Strategy::Retain`]). All
//! three produce byte-identical output.

pub mod error;
pub mod finalize;
pub mod flowdir;
pub mod global;
pub mod grid;
pub mod layout;
pub mod oracle;
pub mod perimeter;
pub mod pipeline;
pub mod solver;
pub mod store;
pub mod synth;
pub mod wire;

pub use error::{Error, Result};
pub use flowdir::FlowDir;
pub use grid::Grid;
pub use layout::{Location, TileId, TileLayout};
pub use perimeter::{perimeter_count, perimeter_to_xy, xy_to_perimeter, Link, PerimeterIndex};
pub use pipeline::{JobConfig, RunReport, Strategy};
pub use solver::{solve_tile, TileSolution, WeightGrid};
pub use wire::{OffsetPayload, PerimeterPayload};
