//! Per-agent actor-critic pair and its DDPG update.

use rand::Rng;

use super::nn::{Activation, Network, NnError};
use super::noise::OuNoise;
use super::{DrlError, ACTION_DIM, HIDDEN};
use crate::env::CycleSample;

pub fn actor_network(state_dim: usize, rng: &mut impl Rng) -> Network {
    Network::new(
        &[state_dim, HIDDEN[0], HIDDEN[1], ACTION_DIM],
        Activation::Relu,
        Activation::Tanh,
        rng,
    )
}

pub fn critic_network(state_dim: usize, rng: &mut impl Rng) -> Network {
    Network::new(
        &[state_dim + ACTION_DIM, HIDDEN[0], HIDDEN[1], 1],
        Activation::Relu,
        Activation::Linear,
        rng,
    )
}

/// Actor output plus the next OU noise sample, clipped to `[-1, 1]`.
pub fn actor_act(
    actor: &Network,
    state: &[f64],
    noise: &mut OuNoise,
    rng: &mut impl Rng,
) -> Result<[f64; ACTION_DIM], NnError> {
    let mu = actor.forward(state)?;
    let eps = noise.sample(rng);
    let mut out = [0.0; ACTION_DIM];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (mu[k] + eps[k]).clamp(-1.0, 1.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgAgent {
    pub actor: Network,
    pub critic: Network,
    pub target_actor: Network,
    pub target_critic: Network,
}

impl DdpgAgent {
    /// Online networks freshly initialised; targets start as copies.
    pub fn new(state_dim: usize, rng: &mut impl Rng) -> Self {
        let actor = actor_network(state_dim, rng);
        let critic = critic_network(state_dim, rng);
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critic.is_finite()
            && self.target_actor.is_finite()
            && self.target_critic.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Mean squared TD error before the critic step.
    pub critic_loss: f64,
    /// Mean critic value of the batch before the critic step.
    pub mean_q: f64,
}

fn join_state_action(states: &[f64], actions: &[f64], state_dim: usize) -> Vec<f64> {
    let batch = actions.len() / ACTION_DIM;
    let mut out = Vec::with_capacity(batch * (state_dim + ACTION_DIM));
    for b in 0..batch {
        out.extend_from_slice(&states[b * state_dim..(b + 1) * state_dim]);
        out.extend_from_slice(&actions[b * ACTION_DIM..(b + 1) * ACTION_DIM]);
    }
    out
}

/// One DDPG step on `batch`: critic descent on the squared error to
/// `y = r + Q'(s', mu'(s'))` (just `r` for terminal samples), then actor
/// ascent along `dQ/da dmu/dtheta` through the updated critic, then soft
/// target updates with rate `nu`.
pub fn ddpg_update(
    agent: &mut DdpgAgent,
    batch: &[&CycleSample],
    lr: f64,
    nu: f64,
) -> Result<UpdateStats, DrlError> {
    if batch.is_empty() {
        return Err(DrlError::EmptyBatch);
    }
    let n = batch.len();
    let sd = agent.state_dim();
    let mut states = Vec::with_capacity(n * sd);
    let mut next_states = Vec::with_capacity(n * sd);
    let mut actions = Vec::with_capacity(n * ACTION_DIM);
    for s in batch {
        if s.state.len() != sd || s.next_state.len() != sd {
            return Err(NnError::DimensionMismatch {
                expected: sd,
                got: s.state.len(),
            }
            .into());
        }
        states.extend_from_slice(&s.state);
        next_states.extend_from_slice(&s.next_state);
        actions.extend_from_slice(&s.action);
    }

    let next_actions = agent.target_actor.forward_batch(&next_states, n)?;
    let next_q = agent
        .target_critic
        .forward_batch(&join_state_action(&next_states, next_actions.output(), sd), n)?;
    let targets: Vec<f64> = batch
        .iter()
        .zip(next_q.output())
        .map(|(s, q)| if s.terminal { s.reward } else { s.reward + q })
        .collect();

    let tape = agent.critic.forward_batch(&join_state_action(&states, &actions, sd), n)?;
    let q = tape.output();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (qi, yi) in q.iter().zip(&targets) {
        let e = qi - yi;
        loss += e * e;
        grad.push(2.0 * e / n as f64);
    }
    loss /= n as f64;
    let mean_q = q.iter().sum::<f64>() / n as f64;
    if !loss.is_finite() {
        return Err(DrlError::Divergence {
            detail: format!("critic loss {loss}"),
        });
    }
    let (critic_grads, _) = agent.critic.backward(&tape, &grad)?;
    agent.critic.apply_gradients(&critic_grads, lr);

    let actor_tape = agent.actor.forward_batch(&states, n)?;
    let critic_tape = agent
        .critic
        .forward_batch(&join_state_action(&states, actor_tape.output(), sd), n)?;
    // maximise mean Q by descending on -mean Q
    let (_, d_input) = agent.critic.backward(&critic_tape, &vec![-1.0 / n as f64; n])?;
    let mut d_action = Vec::with_capacity(n * ACTION_DIM);
    for row in d_input.chunks_exact(sd + ACTION_DIM) {
        d_action.extend_from_slice(&row[sd..]);
    }
    let (actor_grads, _) = agent.actor.backward(&actor_tape, &d_action)?;
    agent.actor.apply_gradients(&actor_grads, lr);

    agent.target_actor.soft_update(&agent.actor, nu)?;
    agent.target_critic.soft_update(&agent.critic, nu)?;
    if !agent.is_finite() {
        return Err(DrlError::Divergence {
            detail: "non-finite network weights".into(),
        });
    }
    Ok(UpdateStats {
        critic_loss: loss,
        mean_q,
    })
}
