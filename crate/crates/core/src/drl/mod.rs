//! Multi-agent DDPG: one actor-critic pair per UAV, trained on per-cycle
//! samples of the shared joint state.

pub mod ddpg;
pub mod nn;
pub mod noise;
pub mod replay;
mod train;

use thiserror::Error;

pub use ddpg::{actor_act, actor_network, critic_network, ddpg_update, DdpgAgent, UpdateStats};
pub use nn::{Activation, Gradients, Layer, Network, NnError, Tape};
pub use noise::OuNoise;
pub use replay::ReplayMemory;
pub use train::{reward_scale, train, DdpgPolicy, EpisodeStats, TrainOutput};

use crate::env::EnvError;
use crate::scenario::{ScenarioConfig, WorldState};

/// Raw action: sensing `(x, y, z)` then transmission `(x, y, z)`.
pub const ACTION_DIM: usize = 6;
pub const HIDDEN: [usize; 2] = [200, 100];
pub const FEATURES_PER_UAV: usize = 14;

#[derive(Debug, Error)]
pub enum DrlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("training diverged: {detail}")]
    Divergence { detail: String },
    #[error("training diverged in episode {episode}: {detail}")]
    Diverged {
        episode: usize,
        detail: String,
        /// Episodes completed before the failure.
        curve: Vec<EpisodeStats>,
    },
}

pub fn state_dim(num_uavs: usize) -> usize {
    FEATURES_PER_UAV * num_uavs
}

/// Ego-centric encoding of the joint state for agent `ego`.
///
/// Blocks follow index rotation starting at `ego`. Each block holds the
/// position, sensing and transmission locations (x and y over the cell
/// radius, z over `h_max`), remaining over collected data, `tau / N_f`, the
/// stage flag, `cycle / N_f` and `frame / N_f`.
pub fn encode_state(world: &WorldState, ego: usize, config: &ScenarioConfig) -> Vec<f64> {
    let n = world.num_uavs();
    let r = config.cell_radius_m;
    let h = config.h_max_m;
    let nf = config.n_f as f64;
    let mut out = Vec::with_capacity(state_dim(n));
    for k in 0..n {
        let u = &world.uavs[(ego + k) % n];
        for p in [u.position, u.sensing_loc, u.transmission_loc] {
            out.extend_from_slice(&[p.x / r, p.y / r, p.z / h]);
        }
        out.push(if u.cycle_data > 0.0 {
            u.remaining_data / u.cycle_data
        } else {
            0.0
        });
        out.push(u.aoi as f64 / nf);
        out.push(u.stage.flag() as f64);
        out.push(u.cycle as f64 / nf);
        out.push(world.frame as f64 / nf);
    }
    out
}
