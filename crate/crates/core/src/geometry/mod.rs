//! Measurement instruments: region counters, the 2-D partition image,
//! hyperplane-arrangement bounds and ε-thresholded attention intrinsic
//! dimension.

mod bound;
mod id;
mod partition;
mod regions;

pub use bound::{log10_big, zaslavsky_bound};
pub use id::{id_epsilon, relative_id_change, IdProfile, IdRecord, IdSlice, RowPolicy, DEFAULT_EPSILON};
pub(crate) use id::check_epsilon;
pub use partition::{grid_point, grid_points, partition_grid_2d, Bounds2d, PartitionGrid};
pub use regions::{
    affine_dimension, count_regions_1d_exact, count_regions_patterns, distinct_patterns, RegionCount,
    RegionMethod, RegionRecord,
};
