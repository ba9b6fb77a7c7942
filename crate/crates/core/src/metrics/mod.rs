//! Multiply-accumulate accounting, inference timing and top-1 accuracy.

mod eval;
mod flops;
mod timing;

pub use eval::{argmax, evaluate_logits, evaluate_top1, EvalReport};
pub use flops::{count_flops, FlopsReport, LayerFlops};
pub use timing::{time_inference, TimingReport};
