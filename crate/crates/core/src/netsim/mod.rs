//! Deterministic round-based simulation of a discovery network.

pub mod config;
mod growth;
pub mod placement;
mod run;
mod sim;
mod sweep;
pub mod topology;

pub use config::{ExperimentSpec, ReestablishPolicy, ReestablishTrigger, SimConfig, INF};
pub use growth::{density_ratio, intra_cluster_distance, GrowthReport};
pub use placement::{place_streams, place_streams_detailed, Placement, PlacementDetail, PlacementMode};
pub use run::{completeness_holds, finish, gen_queries, prepare, run_experiment, run_scenario, stage, Metrics, Outcome, Staged, METRIC_COLUMNS};
pub use sim::{brute_force_answer, build_codec, shape_for_density, HashShape, Network, QueryRecord};
pub use sweep::{csv_header, csv_record, run_points, run_sweep};
pub use topology::{gen_topology, Topology};
