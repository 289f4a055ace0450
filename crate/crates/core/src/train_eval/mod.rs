//! Batched actor-critic training and the evaluation harness.

mod eval;
mod report;
mod train;

pub use eval::{
    evaluate, run_episode, split_confounded, split_degenerate, split_parent_orphan, trace_episodes, EpisodeResult,
    EpisodeRngs, EvalPlan, EvalReport, SplitLabel, SplitSummary, Summary,
};
pub use report::{render_csv, render_json, render_svg, CSV_HEADER};
pub use train::{
    train_episode, Checkpoint, CurveRow, LrSchedule, TrainConfig, Trainer, CHECKPOINT_VERSION, CURVE_HEADER,
};
