//! Region decompositions: SLIC superpixels and edge-bounded regions, plus the
//! per-region utilities built on top of them (RoIs, coarse masks, labels, means).

mod edges;
mod mask;
mod regions;
mod slic;

pub use edges::{clamp_edges, close_edges, edge_regions, thin_edges, EdgeMap, EdgeProbMap};
pub use mask::{connected_components, region_rois, Rect, RegionMask, RoI};
pub use regions::{
    downsample_mask, label_means, region_label, region_mean_map, region_mean_map_labels, DownsampledMask,
    RegionLabel, LABEL_FRACTION,
};
pub use slic::{enforce_connectivity, rgb_to_lab, slic_superpixels, SlicParams};
