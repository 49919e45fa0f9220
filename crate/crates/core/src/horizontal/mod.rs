//! Dynamic lane exchange on a multi-lane link feeding a bottleneck with
//! horizontal (spatial) queues.

mod config;
mod epoch;
mod kinematics;
mod output;
mod sim;

pub use config::{SimConfig, MAX_PARTICIPANT_CAP};
pub use epoch::{build_epoch_pfg, build_epoch_pfg_with, leaf_valuations, EpochGame, EpochParticipant};
pub use kinematics::{departure_time, join_time, predict_delay};
pub use output::write_report;
pub use sim::{
    run_simulation, EpochRecord, Event, EventKind, Simulation, SimulationReport, SimulationSummary,
    Vehicle, VehicleRecord, VehicleStatus, STABLE_TOL,
};
