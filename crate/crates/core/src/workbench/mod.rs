//! Desk-scale experiment plumbing: manifests, the synthetic speech
//! generator, seed derivation and the pipeline stages behind the CLI.

mod config;
mod e2e;
mod manifest;
pub mod pipeline;
mod seeds;
mod synth;

pub use config::{ExperimentConfig, SynthOptions};
pub use e2e::{run_synthetic, E2eOptions, E2eSummary};
pub use manifest::{downsample_manifest, resolve, Manifest, ManifestRow, MAX_REFERENCES};
pub use pipeline::{Metric, Outcome, Task};
pub use seeds::derive_seed;
pub use synth::{
    phone_means, synth_dataset, write_synth, GraphemeMap, SynthData, SynthSpec, TranslationRule,
    SYNTH_FRAME_SHIFT,
};
