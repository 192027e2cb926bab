//! Training engine: loop, logging, event detection, interventions.

pub mod config;
pub mod detect;
pub mod log;
pub mod run;

pub use config::{Intervention, ModelConfig, PlateauConfig, RunConfig, TaskConfig, Thresholds};
pub use detect::{
    detect_t_grok, detect_t_mem, detect_v_post_plateau, find_plateau, MemMode, VPost, VPostMethod,
};
pub use log::{LogRow, TrajectoryLog, TRAJECTORY_COLUMNS, TRAJECTORY_SCHEMA};
pub use run::{apply_intervention, project_to_norm, run_training, RunOutput, RunSummary, Trainer};
