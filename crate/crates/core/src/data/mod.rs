//! Trip ingestion, origin-destination indexing and temporal flow matrices.

mod flow;
mod od;
mod synth;
mod trips;

pub use flow::{build_od_flow_matrix, build_user_flow_matrix, filter_users_by_trip_count, FlowMatrix, RowKind};
pub use od::ODPairIndex;
pub use synth::{generate_synthetic_trips, Archetype, GroundTruth, SyntheticSpec};
pub use trips::{
    parse_trip_csv, parse_trip_reader, OnBadRecord, ParseOutcome, TripDatabase, TripRecord, TRIP_CSV_HEADER,
};

/// Default number of hourly epochs per day.
pub const DEFAULT_EPOCHS: usize = 24;
