//! WGD, RWCD, WPG and RWCP with work accounting.
//!
//! One coordinate step costs one work unit and a full step costs `d`.

mod prox;
mod run;
mod schedule;
mod steps;

pub use prox::{bisect, solve_scalar, solve_vector, ScalarSolution, VectorSolution, DEFAULT_NEWTON_ITERS};
pub use run::{run, ConvergenceTrace, Method, Objective, RunFailure, SolverConfig, TraceRecord};
pub use schedule::{schedule_from_profile, Schedule, ScheduleMode};
pub use steps::{rwcd_step, rwcd_step_on, rwcp_step, rwcp_step_on, wgd_step, wpg_step, StepOutcome};
