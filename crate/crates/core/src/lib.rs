//! Benchmarking toolkit for volumetric lesion segmentation.
//!
//! * [`volume`]: 3-D grids with physical spacing, NIfTI-1 and raw I/O,
//!   resampling and connected components.
//! * [`taxonomy`]: raw lesion labels and their evaluation groups.
//! * [`metrics`]: Dice, HD95, ASD, AVD and sensitivity.
//! * [`ensemble`]: majority voting and probability averaging.
//! * [`losses`]: the generalized Wasserstein Dice loss.
//! * [`stats`]: paired bootstrap tests and confidence intervals.
//! * [`report`]: per-case and summary tables and the manifest runner.

pub mod ensemble;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod taxonomy;
pub mod volume;

pub use error::{Error, Result};
pub use metrics::{AsdMode, ClassMetrics, MetricValue};
pub use taxonomy::{EvalClass, RawClass, Task, Taxonomy};
pub use volume::{BinaryMask, LabelVolume, ProbVolume, ScalarVolume, Spacing, Volume};
