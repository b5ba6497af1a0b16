//! Track geometry, car kinematics, and episodes.

mod dynamics;
mod episode;
mod track;

pub use dynamics::{step_dynamics, step_on_track, CarState, VehicleParams};
pub use episode::{
    load_trajectory, reward, save_trajectory, Driver, Environment, EpisodeLimits, FixedAction, PurePursuit,
    RewardConfig, StepContext, Step, Terminal, Trajectory,
};
pub use track::{is_off_track, Projection, Track, TrackFile};
