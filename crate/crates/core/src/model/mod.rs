//! The DeepVQE graph: configuration, tensor layout and the assembled network.

mod config;
mod graph;
mod layout;

pub use config::{AlignSettings, ModelConfig, Variant, CONFIG_FORMAT_VERSION, KERNEL_F, KERNEL_T};
pub use graph::{
    build_model, force_identity_mask, skip_project, BlockTrace, ForwardOutput, Model, ModelStreamState, TraceEntry,
};
pub use layout::{count_parameters, tensor_layout, TensorRole, TensorSpec};
