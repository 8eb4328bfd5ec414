//! Frame-level simulator of a cellular Internet of UAVs with underlay
//! UAV-to-Device links.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] loads configuration, places targets and devices, and projects
//!   raw policy outputs onto feasible sensing/transmission locations.
//! * [`channel`], [`sensing`] and [`link`] hold the air-to-ground channel
//!   model, the probabilistic sensing model and the link-level successful
//!   transmission probability / expected throughput math.
//! * [`allocation`] assigns subchannels every frame by swap matching.
//! * [`env`] is the sensing-and-transmission protocol as an MDP.
//! * [`drl`] contains the from-scratch networks and the multi-agent DDPG
//!   trainer; [`baselines`] the greedy and REINFORCE comparison policies.
//! * [`harness`] runs the experiments and writes CSV artifacts.

pub mod allocation;
pub mod baselines;
pub mod channel;
pub mod drl;
pub mod env;
pub mod geometry;
pub mod harness;
pub mod link;
pub mod scenario;
pub mod sensing;
pub mod special;

pub use geometry::Position;
pub use scenario::{ConfigError, ScenarioConfig};
