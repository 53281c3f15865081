//! The U-net and context aggregation network (CAN), their weights file and
//! the end-to-end raw-to-RGB forward pipeline.

mod network;
mod pipeline;
mod spec;
mod weights;

pub use network::{can_receptive_field, forward, Weights};
pub use pipeline::{crop_to_image, forward_pipeline, network_input, pad_to_multiple};
pub use spec::{InputLayout, ModelKind, ModelSpec, ParamInfo, Preset};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
