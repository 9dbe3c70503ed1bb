//! Raw eye-tracker CSVs to canonical per-channel samples, plus resting-state
//! baseline statistics.

mod baseline;
mod canon;
mod layout;
mod recording;
mod schema;

pub use baseline::{
    baseline_stats, median_sorted, population_std, quantile_sorted, robust_stats, BaselineFlag, BaselineFlagKind,
    BaselineStats, MIN_FILTER_OBSERVATIONS,
};
pub use canon::{Feature, NUM_FEATURES};
pub use layout::{discover_participants, ParticipantFiles, SessionFiles};
pub use recording::{
    coalesce_timestamps, parse_reader, parse_recording, write_generic_csv, RawRecording, Sample, SessionKind,
};
pub use schema::{ColumnMapping, LabelColumns, SchemaProfile, TimestampColumn, Transform, BUILTIN_PROFILES};
