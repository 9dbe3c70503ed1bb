//! XMD encoding: uniform-grid values, observation masks and log-scaled
//! time deltas, cut into labeled fixed-length windows.

mod grid;
mod io;
mod kinematics;
mod labels;
mod pipeline;
mod window;

pub use grid::{
    build_grid_series, compute_deltas, compute_masks, grid_cell, grid_steps, impute_values, normalize,
    resample_to_grid, GridSeries, MaskMode, RawGrid,
};
pub use io::{
    load_windows, serialize_windows, DatasetMeta, LabelDistribution, Manifest, ProvenanceNote, WindowSet, BINARY_FILE,
    MANIFEST_FILE, WINDOW_FORMAT_VERSION,
};
pub use kinematics::derive_gaze_kinematics;
pub use labels::{LabelTrack, DEFAULT_RATING_THRESHOLD};
pub use pipeline::{preprocess_dataset, PipelineConfig};
pub use window::{check_window_invariants, encode_xmd, window_and_label, Windowing, XmdWindow, XMD_WIDTH};

#[cfg(test)]
mod tests;
