//! Comparison policies: a greedy hover-above heuristic and an episodic
//! REINFORCE learner with a fixed-variance Gaussian policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::drl::{actor_network, encode_state, reward_scale, state_dim, DrlError, Network, ACTION_DIM};
use crate::env::{action_required, Action, Environment, Policy};
use crate::geometry::Position;
use crate::scenario::{project_action, ScenarioConfig, Site, WorldState};

/// Variance of every action dimension of the REINFORCE policy.
pub const REINFORCE_VARIANCE: f64 = 0.1;
const REINFORCE_STREAM: u64 = 0x2E1F_0CE5;

/// Sense directly above the target and transmit directly above the
/// receiver, both at the minimum altitude.
pub fn greedy_action(site: &Site, config: &ScenarioConfig) -> Action {
    let h = config.h_min_m;
    Action {
        sensing: Position::new(site.target.x, site.target.y, h),
        transmission: Position::new(site.receiver.x, site.receiver.y, h),
    }
}

#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    config: ScenarioConfig,
}

impl GreedyPolicy {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self {
            config: config.clone(),
        }
    }
}

impl Policy for GreedyPolicy {
    fn act(&mut self, world: &WorldState, uav: usize) -> Action {
        greedy_action(&world.sites[uav], &self.config)
    }
}

/// Gaussian policy around per-UAV mean networks. With `std = 0` it plays
/// the mean action.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub means: Vec<Network>,
    pub std: f64,
    config: ScenarioConfig,
    rng: ChaCha8Rng,
}

impl GaussianPolicy {
    pub fn new(means: Vec<Network>, std: f64, config: &ScenarioConfig, seed: u64) -> Self {
        Self {
            means,
            std,
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn mean(&self, state: &[f64], uav: usize) -> Vec<f64> {
        self.means[uav].forward(state).expect("mean input matches the layout")
    }

    /// Unclipped sample and its mean.
    fn sample(&mut self, state: &[f64], uav: usize) -> ([f64; ACTION_DIM], Vec<f64>) {
        let mu = self.mean(state, uav);
        let mut a = [0.0; ACTION_DIM];
        for (k, v) in a.iter_mut().enumerate() {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            *v = mu[k] + self.std * w;
        }
        (a, mu)
    }
}

fn clip(a: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
    a.map(|v| v.clamp(-1.0, 1.0))
}

impl Policy for GaussianPolicy {
    fn act(&mut self, world: &WorldState, uav: usize) -> Action {
        let state = encode_state(world, uav, &self.config);
        let (a, _) = self.sample(&state, uav);
        project_action(&clip(&a), world.sites[uav].target, &self.config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReinforceStats {
    pub episode: usize,
    pub mean_aoi: f64,
    /// Mean scaled return over UAVs.
    pub mean_return: f64,
}

pub struct ReinforceOutput {
    pub means: Vec<Network>,
    pub curve: Vec<ReinforceStats>,
}

impl ReinforceOutput {
    /// Mean-action policy for evaluation.
    pub fn policy(&self, config: &ScenarioConfig) -> GaussianPolicy {
        GaussianPolicy::new(self.means.clone(), 0.0, config, 0)
    }
}

struct Decision {
    state: Vec<f64>,
    action: [f64; ACTION_DIM],
}

/// Episodic REINFORCE on `env`'s fixed layout. Each UAV's return is the
/// scaled `-sum tau` of the episode; the baseline is the mean of that UAV's
/// earlier returns.
pub fn reinforce_train(env: &mut Environment, seed: u64) -> Result<ReinforceOutput, DrlError> {
    let config = env.config().clone();
    let num = config.num_uavs();
    let sd = state_dim(num);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ REINFORCE_STREAM);
    let means = (0..num).map(|_| actor_network(sd, &mut init_rng)).collect();
    let mut policy = GaussianPolicy::new(means, REINFORCE_VARIANCE.sqrt(), &config, seed ^ !REINFORCE_STREAM);
    let scale = reward_scale(&config);
    let mut return_sums = vec![0.0; num];
    let mut curve = Vec::with_capacity(config.n_epi);

    for episode in 0..config.n_epi {
        let lr = config.alpha * config.lr_decay.powi(episode as i32);
        env.reset();
        let mut decisions: Vec<Vec<Decision>> = (0..num).map(|_| Vec::new()).collect();
        let mut returns = vec![0.0; num];
        for _ in 0..config.n_f {
            let world = env.world();
            let mut actions = vec![None; num];
            for i in 0..num {
                if action_required(&world.uavs[i]) {
                    let state = encode_state(world, i, &config);
                    let (a, _) = policy.sample(&state, i);
                    actions[i] = Some(project_action(&clip(&a), world.sites[i].target, &config));
                    decisions[i].push(Decision { state, action: a });
                }
            }
            let out = env.step(&actions)?;
            for (g, r) in returns.iter_mut().zip(&out.rewards) {
                *g += scale * r;
            }
        }
        if episode > 0 {
            let var = policy.std * policy.std;
            for i in 0..num {
                let advantage = returns[i] - return_sums[i] / episode as f64;
                let steps = &decisions[i];
                if steps.is_empty() {
                    continue;
                }
                let net = &mut policy.means[i];
                let states: Vec<f64> = steps.iter().flat_map(|d| d.state.iter().copied()).collect();
                let tape = net.forward_batch(&states, steps.len())?;
                // descend on -(G - b) sum log pi
                let grad: Vec<f64> = steps
                    .iter()
                    .zip(tape.output().chunks_exact(ACTION_DIM))
                    .flat_map(|(d, mu)| (0..ACTION_DIM).map(move |k| -advantage * (d.action[k] - mu[k]) / var))
                    .collect();
                let (g, _) = net.backward(&tape, &grad)?;
                net.apply_gradients(&g, lr);
                if !net.is_finite() {
                    return Err(DrlError::Diverged {
                        episode,
                        detail: "non-finite policy weights".into(),
                        curve: Vec::new(),
                    });
                }
            }
        }
        for (s, g) in return_sums.iter_mut().zip(&returns) {
            *s += g;
        }
        curve.push(ReinforceStats {
            episode,
            mean_aoi: -returns.iter().sum::<f64>() / (scale * (config.n_f * num) as f64),
            mean_return: returns.iter().sum::<f64>() / num as f64,
        });
    }
    Ok(ReinforceOutput {
        means: policy.means,
        curve,
    })
}
