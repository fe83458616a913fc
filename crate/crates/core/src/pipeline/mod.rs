//! Configuration, stage training, checkpoints, windowed inference and evaluation.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod infer;
pub mod train;
pub mod windows;

pub use checkpoint::{find_checkpoint, CheckpointArchive, CheckpointManifest};
pub use config::{OptimizerConfig, PipelineConfig, Preset, Schedules, Stage, StageSchedule};
pub use evaluate::{evaluate, write_report, EvalOptions};
pub use infer::{generate_motion, infer, InferenceManifest, Models, MotionDump, Subject, FACES_FILE, FRAMES_DIR, MOTION_FILE};
pub use train::{train, TrainSummary};
pub use windows::{blend_windows, sliding_windows};
