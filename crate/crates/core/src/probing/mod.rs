//! Linear phone probes over per-layer encoder representations, with
//! stride-aware downsampling of frame labels.

mod labels;
mod probe;

pub use labels::{downsample_labels, read_labels, subsample_labels, write_labels, UttLabels};
pub use probe::{
    evaluate_probe, extract_layer_reps, probe_layers, split_frames, train_probe, LayerReps,
    LayerResult, LinearProbe, ProbeFrameSet, ProbeOptions, ProbeReport, Split, DEFAULT_FRAME_CAP,
    DEFAULT_TRAIN_FRACTION, PROBE_L2,
};
