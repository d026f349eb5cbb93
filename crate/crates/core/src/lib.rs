// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod kdtree;
pub mod matching;
pub mod merging;
pub mod pipeline;
pub mod sensor;
pub mod simulator;
pub mod skeleton;
