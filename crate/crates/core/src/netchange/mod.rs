//! Function-preserving architecture transformations and the planner that
//! maps one architecture onto another.

mod ops;
mod plan;

pub use ops::{apply_plan, net_change, to_deeper, to_narrower, to_shallower, to_wider, NeuronMap};
pub use plan::{diff_arch, union_arch, TransformPlan, TransformStep};
