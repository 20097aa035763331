//! Metrics, checks, sweeps and audits over simulator traces.

mod audit;
mod metrics;
mod report;
mod schedule;
mod sweep;

pub use audit::{audit, AuditError, AuditReport};
pub use metrics::{
    check_liveness, correct_processes, measure_recovery, measure_rollback, timelines, LivenessReport, MetricError,
    RecoveryMeasure, Snapshot,
};
pub use report::{report, Check, RunReport, REPORT_SCHEMA};
pub use schedule::{ratio, removed_fraction, resilience_schedule, violation_bound, ScheduleError};
pub use sweep::{aggregate, sweep, SeedOutcome, SweepReport, TailPoint};
