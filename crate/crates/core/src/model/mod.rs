//! Architectures, the runtime graph and checkpoints.

mod checkpoint;
mod graph;
mod spec;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta,
    MAGIC, VERSION,
};
pub use graph::ModelGraph;
pub use spec::{
    count_params, preset_by_name, preset_proposed, preset_tiny, preset_vgg16, ActShape,
    LayerParams, LayerSpec, ModelSpec, ProposedOptions, DROPOUT_P, NUM_CLASSES,
    PROPOSED_CHANNELS,
};

/// Recorded in checkpoint metadata.
pub const INIT_SCHEME: &str = "kaiming_uniform;head_gain=0.01";
