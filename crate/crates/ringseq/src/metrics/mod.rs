//! Polygon-quality evaluation: raster overlap, vertex-distance and
//! tangent-angle metrics, complexity-aware IoU, and boundary-band
//! topology scores, combined into a per-scene [`MetricsReport`].

mod instance;
mod mta;
mod polis;
mod raster;
mod report;

pub use instance::{match_instances, InstanceMatching};
pub use mta::{mta, mta_pair, MtaOutcome};
pub use polis::{polis, polis_pair};
pub use raster::{fill_rings, raster_iou, rasterize, trace_outlines, MaskOverlap, RasterMask};
pub use report::{
    c_iou_and_nratio, evaluate_scene, topo_mask_metrics, topo_mask_metrics_with_band,
    MetricsReport, BOUNDARY_BAND_PX,
};
