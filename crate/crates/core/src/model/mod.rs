//! Domain types: tasks, sequences, layer parameters, model bundles and their
//! file format.

mod bundle;
mod io;
mod layer;
mod sequence;
mod task;

pub use bundle::{new_model, Layers, ModalitySpec, ModelBundle, ModelConfig, ModelKind};
pub use io::{from_json, load_model, save_model, to_json, FORMAT_VERSION};
pub use layer::{CrbmLayerParams, FusionModel, TaskHead, VisibleKind, INIT_WEIGHT_SCALE};
pub use sequence::{Dataset, FrameSequence, MultimodalSequence};
pub use task::{label_edge_audit, validate_task_list, FlatLabeling, LabelEdgeAudit, TaskSpec};

pub(crate) use layer::init_heads;
pub(crate) use sequence::validate_labels;
