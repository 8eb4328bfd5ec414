use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ddpg::{actor_act, ddpg_update, DdpgAgent};
use super::nn::Network;
use super::noise::OuNoise;
use super::replay::ReplayMemory;
use super::{encode_state, state_dim, DrlError, ACTION_DIM};
use crate::env::{action_required, Action, CycleSample, Environment, Policy};
use crate::scenario::{project_action, ScenarioConfig, WorldState};

const INIT_STREAM: u64 = 0xA11C_E5ED;
const EXPLORE_STREAM: u64 = 0x0B5E_55ED;

/// Factor applied to `-tau` before it enters a sample: ages are counted in
/// episode lengths, as in the state encoding.
pub fn reward_scale(config: &ScenarioConfig) -> f64 {
    1.0 / config.n_f as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean_aoi: f64,
    /// Mean over the episode's updates; NaN when there were none.
    pub critic_loss: f64,
    pub mean_q: f64,
}

/// Noise-free actors of a trained run.
#[derive(Debug, Clone)]
pub struct DdpgPolicy {
    pub actors: Vec<Network>,
    config: ScenarioConfig,
}

impl DdpgPolicy {
    pub fn new(actors: Vec<Network>, config: &ScenarioConfig) -> Self {
        Self {
            actors,
            config: config.clone(),
        }
    }

    pub fn raw_action(&self, world: &WorldState, uav: usize) -> [f64; ACTION_DIM] {
        let out = self.actors[uav]
            .forward(&encode_state(world, uav, &self.config))
            .expect("actor input matches the layout");
        let mut raw = [0.0; ACTION_DIM];
        for (r, v) in raw.iter_mut().zip(out) {
            *r = v.clamp(-1.0, 1.0);
        }
        raw
    }
}

impl Policy for DdpgPolicy {
    fn act(&mut self, world: &WorldState, uav: usize) -> Action {
        project_action(&self.raw_action(world, uav), world.sites[uav].target, &self.config)
    }
}

pub struct TrainOutput {
    pub agents: Vec<DdpgAgent>,
    pub curve: Vec<EpisodeStats>,
}

impl TrainOutput {
    pub fn policy(&self, config: &ScenarioConfig) -> DdpgPolicy {
        DdpgPolicy::new(self.agents.iter().map(|a| a.actor.clone()).collect(), config)
    }
}

struct OpenCycle {
    state: Vec<f64>,
    action: [f64; ACTION_DIM],
    reward: f64,
}

struct Learner {
    agent: DdpgAgent,
    replay: ReplayMemory<CycleSample>,
    noise: OuNoise,
    open: Option<OpenCycle>,
}

impl Learner {
    fn store_and_learn(
        &mut self,
        sample: CycleSample,
        config: &ScenarioConfig,
        lr: f64,
        rng: &mut ChaCha8Rng,
        stats: &mut (f64, f64, usize),
    ) -> Result<(), DrlError> {
        self.replay.push(sample);
        let batch = self.replay.sample(config.n_mini, rng);
        let s = ddpg_update(&mut self.agent, &batch, lr, config.nu)?;
        stats.0 += s.critic_loss;
        stats.1 += s.mean_q;
        stats.2 += 1;
        Ok(())
    }
}

/// Runs `N_epi` training episodes on `env`'s fixed layout.
///
/// Every UAV picks a noisy action at each cycle start; the completed cycle
/// becomes one sample (accumulated reward, discount one) and triggers one
/// mini-batch update of that UAV's networks. Cycles still open when an
/// episode ends are stored as terminal samples.
pub fn train(env: &mut Environment, seed: u64) -> Result<TrainOutput, DrlError> {
    let config = env.config().clone();
    let num = config.num_uavs();
    let sd = state_dim(num);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EXPLORE_STREAM);
    let mut learners: Vec<Learner> = (0..num)
        .map(|_| Learner {
            agent: DdpgAgent::new(sd, &mut init_rng),
            replay: ReplayMemory::new(config.n_rm),
            noise: OuNoise::new(ACTION_DIM, config.ou_theta, config.ou_sigma),
            open: None,
        })
        .collect();
    let scale = reward_scale(&config);
    let mut curve = Vec::with_capacity(config.n_epi);

    for episode in 0..config.n_epi {
        let lr = config.alpha * config.lr_decay.powi(episode as i32);
        let sigma = config.ou_sigma * config.ou_decay.powi(episode as i32);
        for l in &mut learners {
            l.noise.reset();
            l.noise.sigma = sigma;
            l.open = None;
        }
        env.reset();
        let mut stats = (0.0, 0.0, 0usize);
        let mut aoi_sum = 0.0;
        let diverged = |detail: String, curve: &Vec<EpisodeStats>| DrlError::Diverged {
            episode,
            detail,
            curve: curve.clone(),
        };
        let result: Result<(), DrlError> = (|| {
            for _ in 0..config.n_f {
                let mut actions = vec![None; num];
                for (i, l) in learners.iter_mut().enumerate() {
                    let world = env.world();
                    if !action_required(&world.uavs[i]) {
                        continue;
                    }
                    let state = encode_state(world, i, &config);
                    if let Some(open) = l.open.take() {
                        let sample = CycleSample {
                            state: open.state,
                            action: open.action,
                            reward: open.reward,
                            next_state: state.clone(),
                            terminal: false,
                        };
                        l.store_and_learn(sample, &config, lr, &mut rng, &mut stats)?;
                    }
                    let raw = actor_act(&l.agent.actor, &state, &mut l.noise, &mut rng)?;
                    actions[i] = Some(project_action(&raw, world.sites[i].target, &config));
                    l.open = Some(OpenCycle {
                        state,
                        action: raw,
                        reward: 0.0,
                    });
                }
                let out = env.step(&actions)?;
                for (l, r) in learners.iter_mut().zip(&out.rewards) {
                    aoi_sum -= r;
                    if let Some(open) = &mut l.open {
                        open.reward += scale * r;
                    }
                }
            }
            for (i, l) in learners.iter_mut().enumerate() {
                if let Some(open) = l.open.take() {
                    let sample = CycleSample {
                        state: open.state,
                        action: open.action,
                        reward: open.reward,
                        next_state: encode_state(env.world(), i, &config),
                        terminal: true,
                    };
                    l.store_and_learn(sample, &config, lr, &mut rng, &mut stats)?;
                }
            }
            Ok(())
        })();
        match result {
            Ok(()) => {}
            Err(DrlError::Divergence { detail }) => return Err(diverged(detail, &curve)),
            Err(e) => return Err(e),
        }
        let updates = stats.2.max(1) as f64;
        let (loss, q) = if stats.2 == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (stats.0 / updates, stats.1 / updates)
        };
        curve.push(EpisodeStats {
            episode,
            mean_aoi: aoi_sum / (config.n_f * num) as f64,
            critic_loss: loss,
            mean_q: q,
        });
    }
    Ok(TrainOutput {
        agents: learners.into_iter().map(|l| l.agent).collect(),
        curve,
    })
}
