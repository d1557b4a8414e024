//! Dataset ingestion, synthetic data, the evaluation protocol and model files.

pub mod dataset;
pub mod model_io;
pub mod protocol;
pub mod synth;

pub use dataset::{
    ingest, ingest_manifest, write_dataset, DatasetManifest, IngestOptions, PixelScale,
};
pub use model_io::{load_model, save_model};
pub use protocol::{
    run_experiment, run_experiment_modeled, sweep, ExperimentReport, ProbeCount, SplitConfig,
    SweepAxis, SweepTable,
};
pub use synth::{synth_generate, SynthConfig, SynthPreset};
