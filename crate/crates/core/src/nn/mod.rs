//! Minimal CPU neural-network engine: architectures, parameters,
//! forward/backward passes, SGD, and evaluation.

mod arch;
mod engine;
mod model;

pub use arch::{
    Activation, ArchitectureSpec, FeatureShape, InputShape, LayerKind, LayerSpec, Segment, SegmentKind,
    KERNEL, KERNEL_AREA,
};
pub use engine::{argmax, evaluate, forward, loss, loss_and_backward, sgd_step, Batch, Evaluation, Logits};
pub(crate) use engine::apply_sgd;
pub use model::{init_model, Gradients, LayerGrads, LayerParams, ModelParams};
