//! Plant simulation, Hankel matrices, excitation checks and disturbance
//! estimation from recorded trajectories.

mod estimate;
mod hankel;
mod plant;
mod record;

pub use estimate::{
    estimate_disturbances, identify_model, with_estimated_disturbances, OnlineEstimator,
};
pub use hankel::{hankel, input_disturbance_signal, is_persistently_exciting, HankelStack};
pub use plant::{Plant, Trajectory};
pub use record::{DataRecord, DisturbanceFlag};
