//! Frame-level environment of the joint sensing and transmission protocol.
//!
//! Each UAV loops through cycles. In the sensing stage it flies to its
//! sensing location, hovers one frame and collects `D_V / P^ss` bits/Hz; in
//! the transmission stage it flies toward its transmission location while
//! the BS-allocated subchannel (if any) drains the buffer by `t_f ER` per
//! frame. The AoI of a UAV is the number of frames since its last completed
//! delivery.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::allocation::{allocate_swap, AllocationError, AllocationMatrix, AllocationProblem, WorldThroughput};
use crate::geometry::Position;
use crate::link::{LinkError, LinkEvaluator};
use crate::scenario::{init_scenario, ConfigError, ScenarioConfig, WorldState};
use crate::sensing::{required_data, ssp, SensingParams};

/// Distance below which a UAV counts as having reached a waypoint.
pub const ARRIVAL_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    U2N,
    U2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Stage {
    Sensing,
    Transmission,
}

impl Stage {
    pub fn flag(self) -> u8 {
        match self {
            Stage::Sensing => 0,
            Stage::Transmission => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub sensing: Position,
    pub transmission: Position,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    pub mode: Mode,
    /// Index of the current cycle, from 1.
    pub cycle: usize,
    pub position: Position,
    pub sensing_loc: Position,
    pub transmission_loc: Position,
    /// Data still to deliver in this cycle, bit/Hz.
    pub remaining_data: f64,
    /// Data collected at the start of the current transmission stage.
    pub cycle_data: f64,
    /// Frames since the last completed delivery.
    pub aoi: usize,
    pub stage: Stage,
    /// Frame from which the current AoI is counted.
    pub last_completion: usize,
}

impl UavState {
    pub fn initial(mode: Mode, start: Position) -> Self {
        Self {
            mode,
            cycle: 1,
            position: start,
            sensing_loc: start,
            transmission_loc: start,
            remaining_data: 0.0,
            cycle_data: 0.0,
            aoi: 0,
            stage: Stage::Sensing,
            last_completion: 1,
        }
    }
}

/// Transition between two consecutive cycle starts of one UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSample {
    /// Encoded joint state when the cycle began.
    pub state: Vec<f64>,
    /// Raw action vector in `[-1, 1]^6` chosen at that point.
    pub action: [f64; 6],
    /// Accumulated (scaled) reward over the cycle's frames.
    pub reward: f64,
    /// Encoded joint state when the next cycle began.
    pub next_state: Vec<f64>,
    /// The episode ended before the cycle completed; no bootstrap.
    pub terminal: bool,
}

/// True when the UAV starts a new cycle and must pick new locations.
pub fn action_required(state: &UavState) -> bool {
    state.aoi == 0 || (state.remaining_data == 0.0 && state.stage == Stage::Transmission)
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("UAV {0} starts a cycle but got no action")]
    ActionMissing(usize),
    #[error("UAV {0} is mid-cycle and cannot take a new action")]
    ActionForbidden(usize),
    #[error("UAV {0}: action is infeasible ({1})")]
    InfeasibleAction(usize, &'static str),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("empty AoI trace")]
    EmptyTrace,
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace export failed: {0}")]
    Trace(#[from] csv::Error),
}

/// What one frame produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// `-tau` of every UAV before the frame.
    pub rewards: Vec<f64>,
    /// UAVs that finished delivering this frame.
    pub completed: Vec<bool>,
    pub allocation: AllocationMatrix,
}

fn check_action(i: usize, a: &Action, target: Position, config: &ScenarioConfig) -> Result<(), EnvError> {
    let tol = 1e-9;
    for p in [a.sensing, a.transmission] {
        if !p.is_finite() {
            return Err(EnvError::InfeasibleAction(i, "non-finite location"));
        }
        if p.z < config.h_min_m - tol || p.z > config.h_max_m + tol {
            return Err(EnvError::InfeasibleAction(i, "altitude out of bounds"));
        }
        if p.horizontal_norm() > config.cell_radius_m * (1.0 + tol) {
            return Err(EnvError::InfeasibleAction(i, "outside the cell"));
        }
    }
    if ssp(&a.sensing, &target, &SensingParams::from_config(config)) <= 0.0 {
        return Err(EnvError::InfeasibleAction(i, "zero sensing probability"));
    }
    Ok(())
}

/// Advances the world by one frame.
///
/// `actions[i]` must be `Some` exactly for the UAVs with
/// [`action_required`]. Subchannels are allocated on the positions at the
/// start of the frame.
pub fn step(
    world: &WorldState,
    actions: &[Option<Action>],
    config: &ScenarioConfig,
    evaluator: &mut LinkEvaluator,
) -> Result<(WorldState, StepOutcome), EnvError> {
    let num = world.num_uavs();
    if actions.len() != num {
        return Err(EnvError::ActionCount {
            expected: num,
            got: actions.len(),
        });
    }
    let mut next = world.clone();
    for (i, (uav, action)) in next.uavs.iter_mut().zip(actions).enumerate() {
        match (action_required(uav), action) {
            (true, None) => return Err(EnvError::ActionMissing(i)),
            (false, Some(_)) => return Err(EnvError::ActionForbidden(i)),
            (true, Some(a)) => {
                check_action(i, a, world.sites[i].target, config)?;
                uav.sensing_loc = a.sensing;
                uav.transmission_loc = a.transmission;
                uav.stage = Stage::Sensing;
            }
            (false, None) => {}
        }
    }

    let problem = AllocationProblem::from_world(&next, config);
    let mut ers = vec![0.0; num];
    let allocation = {
        let mut oracle = WorldThroughput {
            world: &next,
            evaluator,
        };
        let alloc = allocate_swap(&problem, &mut oracle)?;
        for k in 0..config.k {
            let members = alloc.members(k);
            for &i in &members {
                let ints = problem.interferers_of(i, &members);
                let positions: Vec<Position> = ints.iter().map(|j| next.uavs[*j].position).collect();
                ers[i] = oracle.evaluator.expected_throughput(
                    next.uavs[i].position,
                    next.sites[i].receiver,
                    &positions,
                )?;
            }
        }
        alloc
    };

    let n = world.frame;
    let step_len = config.max_step_m();
    let params = SensingParams::from_config(config);
    let mut rewards = Vec::with_capacity(num);
    let mut completed = vec![false; num];
    for (i, uav) in next.uavs.iter_mut().enumerate() {
        rewards.push(-(uav.aoi as f64));
        match uav.stage {
            Stage::Sensing => {
                if uav.position.distance(&uav.sensing_loc) <= ARRIVAL_TOLERANCE_M {
                    let p = ssp(&uav.sensing_loc, &next.sites[i].target, &params);
                    let data = required_data(config.d_v, p)
                        .map_err(|_| EnvError::InfeasibleAction(i, "zero sensing probability"))?;
                    uav.remaining_data = data;
                    uav.cycle_data = data;
                    uav.stage = Stage::Transmission;
                } else {
                    uav.position = uav.position.step_toward(&uav.sensing_loc, step_len);
                }
            }
            Stage::Transmission => {
                if allocation.channel_of(i).is_some() {
                    uav.remaining_data = (uav.remaining_data - config.t_f_s * ers[i]).max(0.0);
                }
                uav.position = uav.position.step_toward(&uav.transmission_loc, step_len);
                if uav.remaining_data == 0.0 {
                    completed[i] = true;
                    uav.cycle += 1;
                    uav.last_completion = n + 1;
                    uav.stage = Stage::Sensing;
                }
            }
        }
        uav.aoi = n + 1 - uav.last_completion;
    }
    next.frame = n + 1;
    next.allocation = allocation.clone();
    Ok((
        next,
        StepOutcome {
            rewards,
            completed,
            allocation,
        },
    ))
}

/// Mean of a per-frame, per-UAV AoI trace.
pub fn average_aoi(trace: &[Vec<f64>]) -> Result<f64, EnvError> {
    let count: usize = trace.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(EnvError::EmptyTrace);
    }
    Ok(trace.iter().flatten().sum::<f64>() / count as f64)
}

/// One row of the per-frame trace export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub frame: usize,
    pub uav: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub stage: u8,
    pub remaining_data: f64,
    pub aoi: usize,
    /// Allocated subchannel, -1 when none.
    pub channel: i64,
}

impl TraceRow {
    fn snapshot(world: &WorldState) -> Vec<TraceRow> {
        world
            .uavs
            .iter()
            .enumerate()
            .map(|(i, u)| TraceRow {
                frame: world.frame,
                uav: i,
                x: u.position.x,
                y: u.position.y,
                z: u.position.z,
                stage: u.stage.flag(),
                remaining_data: u.remaining_data,
                aoi: u.aoi,
                channel: world.allocation.channel_of(i).map_or(-1, |k| k as i64),
            })
            .collect()
    }
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Decides a new action for a UAV at a cycle boundary.
pub trait Policy {
    fn act(&mut self, world: &WorldState, uav: usize) -> Action;
}

/// Environment with a fixed layout that can be replayed episode after
/// episode.
#[derive(Debug, Clone)]
pub struct Environment {
    config: ScenarioConfig,
    initial: WorldState,
    world: WorldState,
    evaluator: LinkEvaluator,
    trace: Option<Vec<TraceRow>>,
}

impl Environment {
    /// Builds the layout from `layout_seed`.
    pub fn new(config: &ScenarioConfig, layout_seed: u64) -> Result<Self, EnvError> {
        let initial = init_scenario(config, layout_seed)?;
        Ok(Self {
            config: config.clone(),
            world: initial.clone(),
            initial,
            evaluator: LinkEvaluator::new(config)?,
            trace: None,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Starts recording a per-frame trace, from the current frame on.
    pub fn record_trace(&mut self) {
        self.trace = Some(TraceRow::snapshot(&self.world));
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.take().unwrap_or_default()
    }

    /// `(hits, misses)` of the link-throughput cache.
    pub fn link_cache_stats(&self) -> (u64, u64) {
        self.evaluator.cache_stats()
    }

    /// Back to the start of an episode on the same layout.
    pub fn reset(&mut self) -> &WorldState {
        self.world = self.initial.clone();
        &self.world
    }

    pub fn step(&mut self, actions: &[Option<Action>]) -> Result<StepOutcome, EnvError> {
        let (next, outcome) = step(&self.world, actions, &self.config, &mut self.evaluator)?;
        self.world = next;
        if let Some(t) = &mut self.trace {
            t.extend(TraceRow::snapshot(&self.world));
        }
        Ok(outcome)
    }

    /// Queries `policy` for every UAV that starts a cycle.
    pub fn actions_from(&self, policy: &mut impl Policy) -> Vec<Option<Action>> {
        (0..self.world.num_uavs())
            .map(|i| action_required(&self.world.uavs[i]).then(|| policy.act(&self.world, i)))
            .collect()
    }

    /// Plays one `N_f`-frame episode from the initial layout and returns the
    /// per-frame AoI trace.
    pub fn rollout(&mut self, policy: &mut impl Policy) -> Result<Vec<Vec<f64>>, EnvError> {
        self.reset();
        let mut trace = Vec::with_capacity(self.config.n_f);
        for _ in 0..self.config.n_f {
            let actions = self.actions_from(policy);
            let out = self.step(&actions)?;
            trace.push(out.rewards.iter().map(|r| -r).collect());
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            m: 1,
            n: 1,
            k: 1,
            link_samples: 500,
            n_f: 40,
            ..ScenarioConfig::default()
        }
    }

    fn hover_action(env: &Environment, i: usize) -> Action {
        let t = env.world().sites[i].target;
        let r = env.world().sites[i].receiver;
        Action {
            sensing: Position::new(t.x, t.y, 50.0),
            transmission: Position::new(r.x, r.y, 50.0),
        }
    }

    struct Fixed;
    impl Policy for Fixed {
        fn act(&mut self, world: &WorldState, i: usize) -> Action {
            let t = world.sites[i].target;
            let r = world.sites[i].receiver;
            Action {
                sensing: Position::new(t.x, t.y, 50.0),
                transmission: Position::new(r.x, r.y, 50.0),
            }
        }
    }

    #[test]
    fn action_gating() {
        let mut s = UavState::initial(Mode::U2N, Position::new(0.0, 0.0, 100.0));
        assert!(action_required(&s));
        s.aoi = 3;
        s.stage = Stage::Transmission;
        s.remaining_data = 0.0;
        assert!(action_required(&s));
        s.remaining_data = 2.0;
        assert!(!action_required(&s));
        s.stage = Stage::Sensing;
        assert!(!action_required(&s));
    }

    #[test]
    fn step_rejects_bad_action_sets() {
        let cfg = small_config();
        let mut env = Environment::new(&cfg, 1).unwrap();
        assert!(matches!(env.step(&[None, None]), Err(EnvError::ActionMissing(0))));
        let a0 = hover_action(&env, 0);
        let a1 = hover_action(&env, 1);
        let mut far = a0;
        far.sensing = Position::new(a0.sensing.x + 200.0, a0.sensing.y, 50.0);
        if far.sensing.horizontal_norm() <= 500.0 {
            assert!(matches!(env.step(&[Some(far), Some(a1)]), Err(EnvError::InfeasibleAction(0, _))));
        }
        env.step(&[Some(a0), Some(a1)]).unwrap();
        assert!(matches!(env.step(&[Some(a0), None]), Err(EnvError::ActionForbidden(0))));
    }

    #[test]
    fn movement_follows_unit_vector_steps() {
        let cfg = small_config();
        let mut world = init_scenario(&cfg, 3).unwrap();
        world.sites[0].target = Position::ground(100.0, 0.0);
        world.uavs[0].position = Position::new(0.0, 0.0, 100.0);
        let mut ev = LinkEvaluator::new(&cfg).unwrap();
        let a = Action {
            sensing: Position::new(100.0, 0.0, 100.0),
            transmission: Position::new(0.0, 0.0, 50.0),
        };
        let b = Action {
            sensing: Position::new(world.sites[1].target.x, world.sites[1].target.y, 60.0),
            transmission: Position::new(0.0, 0.0, 60.0),
        };
        let (w1, _) = step(&world, &[Some(a), Some(b)], &cfg, &mut ev).unwrap();
        assert_relative_eq!(w1.uavs[0].position.x, 15.0, epsilon = 1e-12);
        assert_eq!(w1.uavs[0].position.z, 100.0);
        let mut w = w1;
        for _ in 0..5 {
            w = step(&w, &[None, None], &cfg, &mut ev).unwrap().0;
        }
        // 90 m flown; 10 m remain, covered exactly
        assert_relative_eq!(w.uavs[0].position.x, 90.0, epsilon = 1e-9);
        w = step(&w, &[None, None], &cfg, &mut ev).unwrap().0;
        assert_eq!(w.uavs[0].position, Position::new(100.0, 0.0, 100.0));
        assert_eq!(w.uavs[0].stage, Stage::Sensing);
        w = step(&w, &[None, None], &cfg, &mut ev).unwrap().0;
        assert_eq!(w.uavs[0].stage, Stage::Transmission);
        assert_relative_eq!(w.uavs[0].remaining_data, 10.0 / (-0.5f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn aoi_is_a_sawtooth() {
        let cfg = ScenarioConfig {
            n_f: 200,
            ..small_config()
        };
        let mut env = Environment::new(&cfg, 5).unwrap();
        env.reset();
        let mut prev: Option<Vec<usize>> = None;
        let mut completions = 0;
        for _ in 0..cfg.n_f {
            let actions = env.actions_from(&mut Fixed);
            let out = env.step(&actions).unwrap();
            let now: Vec<usize> = env.world().uavs.iter().map(|u| u.aoi).collect();
            if let Some(p) = &prev {
                for i in 0..now.len() {
                    if out.completed[i] {
                        assert_eq!(now[i], 0);
                        completions += 1;
                    } else {
                        assert_eq!(now[i], p[i] + 1);
                    }
                }
            }
            prev = Some(now);
        }
        assert!(completions > 0);
    }

    #[test]
    fn completion_resets_cycle() {
        let cfg = small_config();
        let mut env = Environment::new(&cfg, 9).unwrap();
        let mut seen = false;
        for _ in 0..cfg.n_f {
            let before = env.world().uavs.clone();
            let actions = env.actions_from(&mut Fixed);
            let out = env.step(&actions).unwrap();
            for (i, done) in out.completed.iter().enumerate() {
                if *done {
                    let u = &env.world().uavs[i];
                    assert_eq!(u.aoi, 0);
                    assert_eq!(u.stage, Stage::Sensing);
                    assert_eq!(u.cycle, before[i].cycle + 1);
                    assert_eq!(u.remaining_data, 0.0);
                    seen = true;
                }
            }
        }
        assert!(seen);
    }

    #[test]
    fn no_channel_means_unbounded_aoi() {
        let cfg = ScenarioConfig {
            k: 0,
            ..small_config()
        };
        let mut env = Environment::new(&cfg, 2).unwrap();
        let trace = env.rollout(&mut Fixed).unwrap();
        for (n, row) in trace.iter().enumerate() {
            for v in row {
                assert_eq!(*v, n as f64);
            }
        }
    }

    #[test]
    fn average_aoi_examples() {
        assert_eq!(average_aoi(&vec![vec![0.0, 0.0]; 4]).unwrap(), 0.0);
        let n = 7;
        let trace: Vec<Vec<f64>> = (1..=n).map(|t| vec![t as f64]).collect();
        assert_relative_eq!(average_aoi(&trace).unwrap(), (n as f64 + 1.0) / 2.0);
        let two: Vec<Vec<f64>> = (0..4).map(|t| vec![t as f64, 10.0]).collect();
        assert_relative_eq!(average_aoi(&two).unwrap(), (1.5 + 10.0) / 2.0);
        assert!(matches!(average_aoi(&[]), Err(EnvError::EmptyTrace)));
    }

    #[test]
    fn rollouts_are_deterministic() {
        let cfg = small_config();
        let mut a = Environment::new(&cfg, 4).unwrap();
        let mut b = Environment::new(&cfg, 4).unwrap();
        let ta = a.rollout(&mut Fixed).unwrap();
        let tb = b.rollout(&mut Fixed).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a.rollout(&mut Fixed).unwrap(), ta);
    }

    #[test]
    fn trace_export_has_one_row_per_uav_frame() {
        let cfg = ScenarioConfig {
            n_f: 5,
            ..small_config()
        };
        let mut env = Environment::new(&cfg, 4).unwrap();
        env.record_trace();
        for _ in 0..5 {
            let actions = env.actions_from(&mut Fixed);
            env.step(&actions).unwrap();
        }
        let rows = env.take_trace();
        assert_eq!(rows.len(), 6 * 2);
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("frame,uav,x,y,z,stage,remaining_data,aoi,channel"));
        assert_eq!(text.lines().count(), 13);
    }
}
