//! Experiment runner producing versioned CSV artifacts.
//!
//! Every CSV starts with a `# aoi-uav-sim <experiment> v<N>` comment line
//! followed by a header row. Cells (configuration x seed) are evaluated in
//! parallel and written in a fixed order, so output bytes depend only on the
//! [`ExperimentSpec`].

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::baselines::{reinforce_train, GreedyPolicy};
use crate::channel::ChannelGains;
use crate::drl::{train, DrlError, EpisodeStats};
use crate::env::{average_aoi, EnvError, Environment, Policy};
use crate::geometry::Position;
use crate::link::{LinkContext, LinkError, QuadratureLink};
use crate::scenario::{ConfigError, ScenarioConfig};
use crate::sensing::{ssp, SensingParams};

pub const CSV_SCHEMA_VERSION: u32 = 1;
/// Upper bound on the frames one distance-sweep cycle may take.
const MAX_CYCLE_FRAMES: usize = 100_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("invalid experiment parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Drl(#[from] DrlError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("no sensing/transmission pair completes a cycle")]
    NoFeasibleCycle,
}

impl HarnessError {
    /// Short machine-readable error class.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::UnknownExperiment(_) => "unknown_experiment",
            HarnessError::UnknownPolicy(_) => "unknown_policy",
            HarnessError::NoSeeds => "no_seeds",
            HarnessError::InvalidParameter(_) => "invalid_parameter",
            HarnessError::Io { .. } => "io",
            HarnessError::Csv(_) => "csv",
            HarnessError::Config(_) => "config",
            HarnessError::Env(_) => "environment",
            HarnessError::Drl(_) => "training",
            HarnessError::Link(_) => "link",
            HarnessError::NoFeasibleCycle => "no_feasible_cycle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ComparePolicies,
    ConvergenceSweep,
    DvSweep,
    KSweep,
    DistanceSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::ComparePolicies,
        Experiment::ConvergenceSweep,
        Experiment::DvSweep,
        Experiment::KSweep,
        Experiment::DistanceSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ComparePolicies => "compare_policies",
            Experiment::ConvergenceSweep => "convergence_sweep",
            Experiment::DvSweep => "dv_sweep",
            Experiment::KSweep => "k_sweep",
            Experiment::DistanceSweep => "distance_sweep",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| HarnessError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Ddpg,
    Greedy,
    Reinforce,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Ddpg, PolicyKind::Greedy, PolicyKind::Reinforce];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ddpg => "ddpg",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Reinforce => "reinforce",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| HarnessError::UnknownPolicy(s.to_string()))
    }
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub config: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Policies for `compare_policies`; the first one drives the D_V and K
    /// sweeps.
    pub policies: Vec<PolicyKind>,
    /// Total UAV counts for `compare_policies`, split as M = count / 2.
    pub uav_counts: Vec<usize>,
    pub dv_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub alphas: Vec<f64>,
    pub nus: Vec<f64>,
    /// Device-target distances for `distance_sweep`, meters.
    pub distances: Vec<f64>,
    pub sweep_altitude_m: f64,
    pub grid_m: f64,
}

impl ExperimentSpec {
    /// Spec with the default grids of `experiment`.
    pub fn new(experiment: Experiment, config: ScenarioConfig, seeds: Vec<u64>, out_dir: impl Into<PathBuf>) -> Self {
        let policies = match experiment {
            Experiment::ComparePolicies => PolicyKind::ALL.to_vec(),
            _ => vec![PolicyKind::Greedy],
        };
        let dv_values = match experiment {
            Experiment::DistanceSweep => vec![10.0, 20.0],
            _ => vec![5.0, 10.0, 15.0, 20.0, 25.0],
        };
        Self {
            experiment,
            config,
            seeds,
            out_dir: out_dir.into(),
            policies,
            uav_counts: vec![2, 4, 6],
            dv_values,
            k_values: vec![2, 3, 5, 8, 10, 12, 15],
            alphas: vec![1e-2, 1e-3, 1e-4],
            nus: vec![0.9, 0.5],
            distances: vec![100.0, 200.0, 300.0, 400.0, 500.0],
            sweep_altitude_m: 100.0,
            grid_m: 5.0,
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}.csv", self.experiment.name()))
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() && self.experiment != Experiment::DistanceSweep {
            return Err(HarnessError::NoSeeds);
        }
        if !(self.grid_m > 0.0) {
            return Err(HarnessError::InvalidParameter("grid step must be positive".into()));
        }
        if self.policies.is_empty() {
            return Err(HarnessError::InvalidParameter("no policy selected".into()));
        }
        self.config.validate()?;
        Ok(())
    }
}

/// Average AoI of `policy` on the layout of `seed`, training it first when
/// it learns.
pub fn evaluate_policy(config: &ScenarioConfig, seed: u64, policy: PolicyKind) -> Result<f64, HarnessError> {
    let mut env = Environment::new(config, seed)?;
    let trace = match policy {
        PolicyKind::Greedy => env.rollout(&mut GreedyPolicy::new(config))?,
        PolicyKind::Ddpg => {
            let out = train(&mut env, seed)?;
            env.rollout(&mut out.policy(config))?
        }
        PolicyKind::Reinforce => {
            let out = reinforce_train(&mut env, seed)?;
            env.rollout(&mut out.policy(config))?
        }
    };
    Ok(average_aoi(&trace)?)
}

/// Average AoI of any policy over one episode of `seed`'s layout.
pub fn rollout_aoi(config: &ScenarioConfig, seed: u64, policy: &mut impl Policy) -> Result<f64, HarnessError> {
    let mut env = Environment::new(config, seed)?;
    Ok(average_aoi(&env.rollout(policy)?)?)
}

#[derive(Debug, Serialize)]
struct CompareRow {
    policy: &'static str,
    uavs: usize,
    m: usize,
    n: usize,
    k: usize,
    d_v: f64,
    seed: u64,
    mean_aoi: f64,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    policy: &'static str,
    m: usize,
    n: usize,
    k: usize,
    d_v: f64,
    seed: u64,
    mean_aoi: f64,
}

#[derive(Debug, Serialize)]
struct ConvergenceRow {
    alpha: f64,
    nu: f64,
    seed: u64,
    episode: usize,
    mean_aoi: f64,
    critic_loss: f64,
    mean_q: f64,
    diverged: u8,
}

#[derive(Debug, Serialize)]
struct DistanceRow {
    l_dt: f64,
    d_v: f64,
    altitude: f64,
    grid_m: f64,
    sensing_x: f64,
    transmission_x: f64,
    cycle_frames: usize,
    mean_aoi: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv<R: Serialize>(path: &Path, experiment: Experiment, rows: &[R]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# aoi-uav-sim {} v{}", experiment.name(), CSV_SCHEMA_VERSION).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Outcome of one training run in the convergence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRun {
    pub alpha: f64,
    pub nu: f64,
    pub seed: u64,
    pub curve: Vec<EpisodeStats>,
    pub diverged: bool,
}

/// Trains DDPG once and keeps its learning curve, including partial curves
/// of runs that diverged.
pub fn convergence_run(config: &ScenarioConfig, seed: u64) -> Result<ConvergenceRun, HarnessError> {
    let mut env = Environment::new(config, seed)?;
    let (curve, diverged) = match train(&mut env, seed) {
        Ok(out) => (out.curve, false),
        Err(DrlError::Diverged { curve, .. }) => (curve, true),
        Err(e) => return Err(e.into()),
    };
    Ok(ConvergenceRun {
        alpha: config.alpha,
        nu: config.nu,
        seed,
        curve,
        diverged,
    })
}

/// Runs the experiment and returns the CSV files it wrote.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<PathBuf>, HarnessError> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir).map_err(io_err(&spec.out_dir))?;
    let path = spec.output_path();
    match spec.experiment {
        Experiment::ComparePolicies => {
            let mut cells = Vec::new();
            for &count in &spec.uav_counts {
                if count == 0 {
                    return Err(HarnessError::InvalidParameter("UAV count must be positive".into()));
                }
                let mut cfg = spec.config.clone();
                cfg.m = count / 2;
                cfg.n = count - cfg.m;
                for &policy in &spec.policies {
                    for &seed in &spec.seeds {
                        cells.push((cfg.clone(), policy, seed));
                    }
                }
            }
            let rows = cells
                .par_iter()
                .map(|(cfg, policy, seed)| {
                    Ok(CompareRow {
                        policy: policy.name(),
                        uavs: cfg.num_uavs(),
                        m: cfg.m,
                        n: cfg.n,
                        k: cfg.k,
                        d_v: cfg.d_v,
                        seed: *seed,
                        mean_aoi: evaluate_policy(cfg, *seed, *policy)?,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            write_csv(&path, spec.experiment, &rows)?;
        }
        Experiment::DvSweep | Experiment::KSweep => {
            let policy = spec.policies[0];
            let mut cells = Vec::new();
            if spec.experiment == Experiment::DvSweep {
                for &dv in &spec.dv_values {
                    for &seed in &spec.seeds {
                        let mut cfg = spec.config.clone();
                        cfg.d_v = dv;
                        cells.push((cfg, seed));
                    }
                }
            } else {
                for &k in &spec.k_values {
                    for &seed in &spec.seeds {
                        let mut cfg = spec.config.clone();
                        cfg.k = k;
                        cells.push((cfg, seed));
                    }
                }
            }
            let rows = cells
                .par_iter()
                .map(|(cfg, seed)| {
                    cfg.validate()?;
                    Ok(SweepRow {
                        policy: policy.name(),
                        m: cfg.m,
                        n: cfg.n,
                        k: cfg.k,
                        d_v: cfg.d_v,
                        seed: *seed,
                        mean_aoi: evaluate_policy(cfg, *seed, policy)?,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            write_csv(&path, spec.experiment, &rows)?;
        }
        Experiment::ConvergenceSweep => {
            let mut cells = Vec::new();
            for &alpha in &spec.alphas {
                for &nu in &spec.nus {
                    for &seed in &spec.seeds {
                        let mut cfg = spec.config.clone();
                        cfg.alpha = alpha;
                        cfg.nu = nu;
                        cells.push((cfg, seed));
                    }
                }
            }
            let runs = cells
                .par_iter()
                .map(|(cfg, seed)| {
                    cfg.validate()?;
                    convergence_run(cfg, *seed)
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            let rows: Vec<ConvergenceRow> = runs
                .iter()
                .flat_map(|run| {
                    run.curve.iter().map(move |s| ConvergenceRow {
                        alpha: run.alpha,
                        nu: run.nu,
                        seed: run.seed,
                        episode: s.episode,
                        mean_aoi: s.mean_aoi,
                        critic_loss: s.critic_loss,
                        mean_q: s.mean_q,
                        diverged: run.diverged as u8,
                    })
                })
                .collect();
            write_csv(&path, spec.experiment, &rows)?;
        }
        Experiment::DistanceSweep => {
            let mut cells = Vec::new();
            for &dv in &spec.dv_values {
                for &l in &spec.distances {
                    cells.push((l, dv));
                }
            }
            let rows = cells
                .par_iter()
                .map(|(l, dv)| {
                    let r = distance_sweep(*l, *dv, spec.sweep_altitude_m, spec.grid_m, &spec.config)?;
                    Ok(DistanceRow {
                        l_dt: *l,
                        d_v: *dv,
                        altitude: spec.sweep_altitude_m,
                        grid_m: spec.grid_m,
                        sensing_x: r.sensing_x,
                        transmission_x: r.transmission_x,
                        cycle_frames: r.cycle_frames,
                        mean_aoi: r.mean_aoi,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            write_csv(&path, spec.experiment, &rows)?;
        }
    }
    Ok(vec![path])
}

/// Best sensing/transmission pair found by [`distance_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSweepResult {
    /// Positions along the device-target line, meters from the device.
    pub sensing_x: f64,
    pub transmission_x: f64,
    pub cycle_frames: usize,
    pub mean_aoi: f64,
}

fn segment_grid(length: f64, step: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..)
        .map(|i| i as f64 * step)
        .take_while(|x| *x < length - 1e-9)
        .collect();
    xs.push(length);
    xs
}

/// Single-UAV U2D enumeration without interference.
///
/// The device sits at the origin and the target `l_dt` meters away on the x
/// axis. Sensing and transmission candidates lie on the segment between
/// them at altitude `h`, spaced by `grid_m` (endpoints included). A cycle
/// starts where the previous one completed: fly to the sensing point, sense
/// for one frame, then transmit while flying toward the transmission point,
/// draining `t_f ER` per frame with ER evaluated at the frame's starting
/// position. The completion point depends only on the pair, so the
/// steady-state cycle length `N_c` follows directly and the average AoI is
/// `(N_c - 1) / 2`.
///
/// The candidate directly above the target is always inside the sensing
/// cone, so the segment never lacks a feasible sensing point.
pub fn distance_sweep(
    l_dt: f64,
    d_v: f64,
    h: f64,
    grid_m: f64,
    config: &ScenarioConfig,
) -> Result<DistanceSweepResult, HarnessError> {
    if !(grid_m > 0.0) || !(l_dt >= 0.0) || !(h > 0.0) || !(d_v > 0.0) {
        return Err(HarnessError::InvalidParameter(
            "distance sweep needs grid > 0, L >= 0, h > 0, D_V > 0".into(),
        ));
    }
    let device = Position::ground(0.0, 0.0);
    let target = Position::ground(l_dt, 0.0);
    let at = |x: f64| Position::new(x, 0.0, h);
    let params = SensingParams::from_config(config);
    let step = config.max_step_m();
    let xs = segment_grid(l_dt, grid_m);
    let mut er_cache: HashMap<i64, f64> = HashMap::new();
    let mut er_at = |x: f64| -> Result<f64, HarnessError> {
        let key = (x * 1e6).round() as i64;
        if let Some(v) = er_cache.get(&key) {
            return Ok(*v);
        }
        let ctx = LinkContext {
            own: ChannelGains::between(at(x), device, config.fc_ghz).map_err(LinkError::from)?,
            interferers: Vec::new(),
            p_u: config.p_u_watts(),
            n0: config.n0_watts(),
            r_th: config.r_th,
        };
        let v = QuadratureLink::new(&ctx, 2)?.expected_throughput();
        er_cache.insert(key, v);
        Ok(v)
    };

    let mut best: Option<DistanceSweepResult> = None;
    for &s in &xs {
        let p_ss = ssp(&at(s), &target, &params);
        if p_ss <= 0.0 {
            continue;
        }
        let data = d_v / p_ss;
        for &t in &xs {
            // transmit while flying from s toward t
            let mut pos = s;
            let mut left = data;
            let mut tx_frames = 0;
            while left > 0.0 && tx_frames < MAX_CYCLE_FRAMES {
                left = (left - config.t_f_s * er_at(pos)?).max(0.0);
                let gap = t - pos;
                pos = if gap.abs() <= step { t } else { pos + step * gap.signum() };
                tx_frames += 1;
            }
            if left > 0.0 {
                continue;
            }
            let travel = ((pos - s).abs() / step - 1e-9).ceil().max(0.0) as usize;
            let cycle = travel + 1 + tx_frames;
            let aoi = (cycle as f64 - 1.0) / 2.0;
            if best.is_none_or(|b| aoi < b.mean_aoi) {
                best = Some(DistanceSweepResult {
                    sensing_x: s,
                    transmission_x: t,
                    cycle_frames: cycle,
                    mean_aoi: aoi,
                });
            }
        }
    }
    best.ok_or(HarnessError::NoFeasibleCycle)
}
