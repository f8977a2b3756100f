//! Dataset files, feature extraction, synthetic data, splits and metrics.

pub mod features;
pub mod manifest;
pub mod metrics;
pub mod split;
pub mod synth;

pub use features::{kinect_upper_body_features, mocap_features, FeaturePipeline, KinectFeatures};
pub use manifest::{load_dataset, read_frames_csv, save_dataset, write_frames_csv};
pub use metrics::{metrics, TaskMetrics};
pub use split::{kfold_by_source, select_split, split_by_source, SplitSide};
pub use synth::{make_synthetic, SynthConfig};
