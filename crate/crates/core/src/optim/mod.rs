//! Optimizers and learning-rate schedules.

mod optimizer;
mod schedule;

pub use optimizer::{
    AdadeltaParams, AdagradParams, AdamParams, AsgdParams, Optimizer, OptimizerConfig, OptimizerKind,
    RmsPropParams, SgdParams,
};
pub use schedule::LrSchedule;
