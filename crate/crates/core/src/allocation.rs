//! Per-frame subchannel allocation at the BS.
//!
//! The objective of a frame is the total expected data delivered,
//! `sum_i t_f ER_i`, where each UAV's expected throughput depends on which
//! other UAVs share its subchannel. A U2N receiver (the BS) is only disturbed
//! by co-channel U2D transmitters; a U2D receiver hears every other co-channel
//! UAV.

use std::collections::HashMap;

use thiserror::Error;

use crate::env::{Mode, Stage};
use crate::link::{LinkError, LinkEvaluator};
use crate::scenario::{ScenarioConfig, WorldState};

/// Relative margin a move must beat to count as an improvement.
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("allocation violates the subchannel constraints")]
    Infeasible,
    #[error("brute force limited to 6 UAVs and 4 subchannels, got {uavs} and {channels}")]
    TooLarge { uavs: usize, channels: usize },
    #[error("allocation shape {got:?} does not match {expected:?}")]
    Shape {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error(transparent)]
    Link(#[from] LinkError),
}

/// Binary UAV-by-subchannel matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AllocationMatrix {
    uavs: usize,
    channels: usize,
    cells: Vec<bool>,
}

impl AllocationMatrix {
    pub fn zeros(uavs: usize, channels: usize) -> Self {
        Self {
            uavs,
            channels,
            cells: vec![false; uavs * channels],
        }
    }

    /// Matrix with UAV `i` on `assignment[i]`, if any.
    pub fn from_assignment(assignment: &[Option<usize>], channels: usize) -> Self {
        let mut m = Self::zeros(assignment.len(), channels);
        for (i, c) in assignment.iter().enumerate() {
            if let Some(k) = c {
                m.set(i, *k, true);
            }
        }
        m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.uavs, self.channels)
    }

    pub fn get(&self, uav: usize, channel: usize) -> bool {
        self.cells[uav * self.channels + channel]
    }

    pub fn set(&mut self, uav: usize, channel: usize, value: bool) {
        self.cells[uav * self.channels + channel] = value;
    }

    /// First subchannel assigned to `uav`.
    pub fn channel_of(&self, uav: usize) -> Option<usize> {
        (0..self.channels).find(|k| self.get(uav, *k))
    }

    pub fn members(&self, channel: usize) -> Vec<usize> {
        (0..self.uavs).filter(|i| self.get(*i, channel)).collect()
    }

    pub fn assignment(&self) -> Vec<Option<usize>> {
        (0..self.uavs).map(|i| self.channel_of(i)).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|c| *c)
    }

    /// At most one subchannel per UAV, at most one U2N and `v_s` U2D UAVs per
    /// subchannel, and nothing for UAVs that are not allowed to transmit.
    pub fn is_feasible(&self, modes: &[Mode], eligible: &[bool], v_s: usize) -> bool {
        if modes.len() != self.uavs || eligible.len() != self.uavs {
            return false;
        }
        for i in 0..self.uavs {
            let row = (0..self.channels).filter(|k| self.get(i, *k)).count();
            if row > 1 || (row == 1 && !eligible[i]) {
                return false;
            }
        }
        (0..self.channels).all(|k| {
            let members = self.members(k);
            let u2n = members.iter().filter(|i| modes[**i] == Mode::U2N).count();
            u2n <= 1 && members.len() - u2n <= v_s
        })
    }
}

/// Expected throughput (bps/Hz) of a UAV given the UAVs interfering with it.
pub trait ThroughputOracle {
    fn expected_throughput(&mut self, uav: usize, interferers: &[usize]) -> Result<f64, LinkError>;
}

impl<F> ThroughputOracle for F
where
    F: FnMut(usize, &[usize]) -> f64,
{
    fn expected_throughput(&mut self, uav: usize, interferers: &[usize]) -> Result<f64, LinkError> {
        Ok(self(uav, interferers))
    }
}

/// Static description of one frame's allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub modes: Vec<Mode>,
    /// UAVs in the transmission stage.
    pub eligible: Vec<bool>,
    pub channels: usize,
    pub v_s: usize,
    pub t_f: f64,
    /// Per-UAV cap on the delivered data, when capping is enabled.
    pub caps: Option<Vec<f64>>,
}

impl AllocationProblem {
    pub fn from_world(world: &WorldState, config: &ScenarioConfig) -> Self {
        Self {
            modes: world.uavs.iter().map(|u| u.mode).collect(),
            eligible: world
                .uavs
                .iter()
                .map(|u| u.stage == Stage::Transmission && u.remaining_data > 0.0)
                .collect(),
            channels: config.k,
            v_s: config.v_s,
            t_f: config.t_f_s,
            caps: config
                .cap_objective
                .then(|| world.uavs.iter().map(|u| u.remaining_data).collect()),
        }
    }

    pub fn num_uavs(&self) -> usize {
        self.modes.len()
    }

    /// Co-channel UAVs that disturb `uav`'s receiver.
    pub fn interferers_of(&self, uav: usize, members: &[usize]) -> Vec<usize> {
        members
            .iter()
            .copied()
            .filter(|j| *j != uav && (self.modes[uav] == Mode::U2D || self.modes[*j] == Mode::U2D))
            .collect()
    }

    fn check_shape(&self, alloc: &AllocationMatrix) -> Result<(), AllocationError> {
        let expected = (self.num_uavs(), self.channels);
        if alloc.shape() != expected {
            return Err(AllocationError::Shape {
                got: alloc.shape(),
                expected,
            });
        }
        Ok(())
    }

    fn feasible_assignment(&self, assignment: &[Option<usize>]) -> bool {
        let mut u2n = vec![0usize; self.channels];
        let mut u2d = vec![0usize; self.channels];
        for (i, c) in assignment.iter().enumerate() {
            if let Some(k) = c {
                if !self.eligible[i] {
                    return false;
                }
                match self.modes[i] {
                    Mode::U2N => u2n[*k] += 1,
                    Mode::U2D => u2d[*k] += 1,
                }
            }
        }
        u2n.iter().all(|c| *c <= 1) && u2d.iter().all(|c| *c <= self.v_s)
    }
}

/// Objective evaluator memoising per-link throughput and per-channel value.
struct Objective<'a, O: ThroughputOracle> {
    problem: &'a AllocationProblem,
    oracle: &'a mut O,
    links: HashMap<(usize, Vec<usize>), f64>,
    channels: HashMap<Vec<usize>, f64>,
}

impl<'a, O: ThroughputOracle> Objective<'a, O> {
    fn new(problem: &'a AllocationProblem, oracle: &'a mut O) -> Self {
        Self {
            problem,
            oracle,
            links: HashMap::new(),
            channels: HashMap::new(),
        }
    }

    fn term(&mut self, uav: usize, members: &[usize]) -> Result<f64, LinkError> {
        let ints = self.problem.interferers_of(uav, members);
        let key = (uav, ints);
        let er = match self.links.get(&key) {
            Some(v) => *v,
            None => {
                let v = self.oracle.expected_throughput(uav, &key.1)?;
                self.links.insert(key, v);
                v
            }
        };
        let data = self.problem.t_f * er;
        Ok(match &self.problem.caps {
            Some(caps) => data.min(caps[uav]),
            None => data,
        })
    }

    fn channel_value(&mut self, members: &[usize]) -> Result<f64, LinkError> {
        if members.is_empty() {
            return Ok(0.0);
        }
        if let Some(v) = self.channels.get(members) {
            return Ok(*v);
        }
        let mut total = 0.0;
        for &i in members {
            total += self.term(i, members)?;
        }
        self.channels.insert(members.to_vec(), total);
        Ok(total)
    }

    fn value(&mut self, assignment: &[Option<usize>]) -> Result<f64, LinkError> {
        let mut groups = vec![Vec::new(); self.problem.channels];
        for (i, c) in assignment.iter().enumerate() {
            if let Some(k) = c {
                groups[*k].push(i);
            }
        }
        let mut total = 0.0;
        for g in &groups {
            total += self.channel_value(g)?;
        }
        Ok(total)
    }
}

fn improves(candidate: f64, current: f64) -> bool {
    candidate > current + IMPROVEMENT_EPS * current.abs().max(1.0)
}

/// Total expected data delivered in the frame under `alloc`, bit/Hz.
pub fn frame_objective<O: ThroughputOracle>(
    alloc: &AllocationMatrix,
    problem: &AllocationProblem,
    oracle: &mut O,
) -> Result<f64, AllocationError> {
    problem.check_shape(alloc)?;
    if !alloc.is_feasible(&problem.modes, &problem.eligible, problem.v_s) {
        return Err(AllocationError::Infeasible);
    }
    Ok(Objective::new(problem, oracle).value(&alloc.assignment())?)
}

/// Single-UAV relocations and pairwise swaps of `assignment`, in
/// deterministic order: moves by UAV then target (unassigned first), then
/// swaps by UAV pair.
fn neighbours(problem: &AllocationProblem, assignment: &[Option<usize>]) -> Vec<Vec<Option<usize>>> {
    let n = problem.num_uavs();
    let mut out = Vec::new();
    for i in (0..n).filter(|i| problem.eligible[*i]) {
        for target in std::iter::once(None).chain((0..problem.channels).map(Some)) {
            if target == assignment[i] {
                continue;
            }
            let mut next = assignment.to_vec();
            next[i] = target;
            if problem.feasible_assignment(&next) {
                out.push(next);
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if assignment[i] == assignment[j] || !problem.eligible[i] || !problem.eligible[j] {
                continue;
            }
            let mut next = assignment.to_vec();
            next.swap(i, j);
            if problem.feasible_assignment(&next) {
                out.push(next);
            }
        }
    }
    out
}

/// Greedy start: UAVs in descending standalone data (ties to the lower
/// index) each claim the subchannel that maximises the objective, staying
/// unassigned when every option would lower it.
fn greedy_start<O: ThroughputOracle>(obj: &mut Objective<'_, O>) -> Result<Vec<Option<usize>>, LinkError> {
    let problem = obj.problem;
    let n = problem.num_uavs();
    let mut order = Vec::new();
    for i in (0..n).filter(|i| problem.eligible[*i]) {
        order.push((i, obj.term(i, &[i])?));
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut assignment = vec![None; n];
    let mut current = 0.0;
    for (i, _) in order {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..problem.channels {
            let mut next = assignment.clone();
            next[i] = Some(k);
            if !problem.feasible_assignment(&next) {
                continue;
            }
            let v = obj.value(&next)?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        if let Some((k, v)) = best {
            if v >= current {
                assignment[i] = Some(k);
                current = v;
            }
        }
    }
    Ok(assignment)
}

fn swap_search<O: ThroughputOracle>(
    obj: &mut Objective<'_, O>,
    start: Vec<Option<usize>>,
) -> Result<Vec<Option<usize>>, LinkError> {
    let mut current = start;
    let mut value = obj.value(&current)?;
    loop {
        let mut best: Option<(Vec<Option<usize>>, f64)> = None;
        for cand in neighbours(obj.problem, &current) {
            let v = obj.value(&cand)?;
            let threshold = best.as_ref().map_or(value, |b| b.1);
            if improves(v, threshold) {
                best = Some((cand, v));
            }
        }
        match best {
            Some((next, v)) => {
                current = next;
                value = v;
            }
            None => return Ok(current),
        }
    }
}

/// Greedy initialisation followed by best-improvement swap/move search until
/// no single move or swap strictly increases the objective.
pub fn allocate_swap<O: ThroughputOracle>(
    problem: &AllocationProblem,
    oracle: &mut O,
) -> Result<AllocationMatrix, AllocationError> {
    let mut obj = Objective::new(problem, oracle);
    let start = greedy_start(&mut obj)?;
    let result = swap_search(&mut obj, start)?;
    Ok(AllocationMatrix::from_assignment(&result, problem.channels))
}

/// The greedy initial allocation alone.
pub fn allocate_greedy<O: ThroughputOracle>(
    problem: &AllocationProblem,
    oracle: &mut O,
) -> Result<AllocationMatrix, AllocationError> {
    let mut obj = Objective::new(problem, oracle);
    let start = greedy_start(&mut obj)?;
    Ok(AllocationMatrix::from_assignment(&start, problem.channels))
}

/// True when no feasible single move or swap strictly improves `alloc`.
pub fn is_exchange_stable<O: ThroughputOracle>(
    alloc: &AllocationMatrix,
    problem: &AllocationProblem,
    oracle: &mut O,
) -> Result<bool, AllocationError> {
    problem.check_shape(alloc)?;
    let mut obj = Objective::new(problem, oracle);
    let assignment = alloc.assignment();
    let value = obj.value(&assignment)?;
    for cand in neighbours(problem, &assignment) {
        if improves(obj.value(&cand)?, value) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exhaustive argmax of the objective; the first maximiser in enumeration
/// order wins ties.
pub fn allocate_bruteforce<O: ThroughputOracle>(
    problem: &AllocationProblem,
    oracle: &mut O,
) -> Result<AllocationMatrix, AllocationError> {
    let n = problem.num_uavs();
    if n > 6 || problem.channels > 4 {
        return Err(AllocationError::TooLarge {
            uavs: n,
            channels: problem.channels,
        });
    }
    let eligible: Vec<usize> = (0..n).filter(|i| problem.eligible[*i]).collect();
    let base = problem.channels + 1;
    let total = base.pow(eligible.len() as u32);
    let mut obj = Objective::new(problem, oracle);
    let mut best = (vec![None; n], 0.0);
    for code in 0..total {
        let mut assignment = vec![None; n];
        let mut c = code;
        for &i in &eligible {
            let digit = c % base;
            c /= base;
            assignment[i] = (digit > 0).then(|| digit - 1);
        }
        if !problem.feasible_assignment(&assignment) {
            continue;
        }
        let v = obj.value(&assignment)?;
        if v > best.1 {
            best = (assignment, v);
        }
    }
    Ok(AllocationMatrix::from_assignment(&best.0, problem.channels))
}

/// Throughput oracle over the current world geometry: transmitters at their
/// positions, receivers at their sites.
pub struct WorldThroughput<'a> {
    pub world: &'a WorldState,
    pub evaluator: &'a mut LinkEvaluator,
}

impl ThroughputOracle for WorldThroughput<'_> {
    fn expected_throughput(&mut self, uav: usize, interferers: &[usize]) -> Result<f64, LinkError> {
        let tx = self.world.uavs[uav].position;
        let rx = self.world.sites[uav].receiver;
        let ints: Vec<_> = interferers.iter().map(|j| self.world.uavs[*j].position).collect();
        self.evaluator.expected_throughput(tx, rx, &ints)
    }
}
