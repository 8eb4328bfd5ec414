//! Scenario configuration, world layout and action projection.
//!
//! Configuration files are flat `key: value` documents, one key per line, keys
//! spelled exactly like the [`ScenarioConfig`] field names listed in
//! [`ScenarioConfig::KEYS`]. Blank lines and `#` comments are ignored and any
//! key that is absent keeps its default.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::allocation::AllocationMatrix;
use crate::env::{Action, Mode, UavState};
use crate::geometry::Position;

/// Altitude every UAV starts an episode at.
pub const INITIAL_ALTITUDE_M: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key: value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("key `{key}`: cannot parse `{value}`")]
    Malformed { key: String, value: String },
    #[error("key `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

/// All simulation and training parameters. Defaults are the published
/// simulation table plus the geometry bounds used throughout the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// UAVs reporting to the BS (U2N).
    pub m: usize,
    /// UAVs reporting to their own mobile device (U2D).
    pub n: usize,
    /// Orthogonal subchannels.
    pub k: usize,
    pub p_u_dbm: f64,
    pub n0_dbm: f64,
    pub fc_ghz: f64,
    pub h0_m: f64,
    pub h_min_m: f64,
    pub h_max_m: f64,
    pub v_max_mps: f64,
    pub t_f_s: f64,
    pub phi_deg: f64,
    /// Sensing factor, per second-meter.
    pub lambda_s: f64,
    /// QoS threshold, bps/Hz.
    pub r_th: f64,
    /// Valid data size per cycle, bit/Hz.
    pub d_v: f64,
    /// Maximum U2D links per subchannel.
    pub v_s: usize,
    pub cell_radius_m: f64,
    pub n_epi: usize,
    pub n_f: usize,
    pub n_mini: usize,
    pub n_rm: usize,
    pub alpha: f64,
    pub nu: f64,
    pub seed: u64,
    /// Monte Carlo samples per link evaluation inside the environment.
    pub link_samples: usize,
    /// Per-episode multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    /// Per-episode multiplicative decay of the OU volatility.
    pub ou_decay: f64,
    /// Cap each allocation term at the UAV's remaining data.
    pub cap_objective: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            m: 5,
            n: 5,
            k: 5,
            p_u_dbm: 10.0,
            n0_dbm: -85.0,
            fc_ghz: 2.0,
            h0_m: 10.0,
            h_min_m: 50.0,
            h_max_m: 150.0,
            v_max_mps: 15.0,
            t_f_s: 1.0,
            phi_deg: 30.0,
            lambda_s: 0.005,
            r_th: 1.0,
            d_v: 10.0,
            v_s: 3,
            cell_radius_m: 500.0,
            n_epi: 500,
            n_f: 300,
            n_mini: 64,
            n_rm: 10_000,
            alpha: 1e-3,
            nu: 0.9,
            seed: 0,
            link_samples: 20_000,
            lr_decay: 0.995,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_decay: 0.995,
            cap_objective: false,
        }
    }
}

impl ScenarioConfig {
    pub const KEYS: [&'static str; 30] = [
        "M",
        "N",
        "K",
        "P_u_dBm",
        "N0_dBm",
        "fc_GHz",
        "H0_m",
        "h_min_m",
        "h_max_m",
        "v_max_mps",
        "t_f_s",
        "phi_deg",
        "lambda_s",
        "R_th",
        "D_V",
        "V_s",
        "cell_radius_m",
        "N_epi",
        "N_f",
        "N_mini",
        "N_rm",
        "alpha",
        "nu",
        "seed",
        "link_samples",
        "lr_decay",
        "ou_theta",
        "ou_sigma",
        "ou_decay",
        "cap_objective",
    ];

    /// Parses a flat key-value document on top of the defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let Some(&canonical) = Self::KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                });
            };
            if seen.contains(&canonical) {
                return Err(ConfigError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            seen.push(canonical);
            cfg.set(canonical, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets a single key from its textual value, without validating.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Malformed {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        match key {
            "M" => self.m = parse(key, value)?,
            "N" => self.n = parse(key, value)?,
            "K" => self.k = parse(key, value)?,
            "P_u_dBm" => self.p_u_dbm = parse(key, value)?,
            "N0_dBm" => self.n0_dbm = parse(key, value)?,
            "fc_GHz" => self.fc_ghz = parse(key, value)?,
            "H0_m" => self.h0_m = parse(key, value)?,
            "h_min_m" => self.h_min_m = parse(key, value)?,
            "h_max_m" => self.h_max_m = parse(key, value)?,
            "v_max_mps" => self.v_max_mps = parse(key, value)?,
            "t_f_s" => self.t_f_s = parse(key, value)?,
            "phi_deg" => self.phi_deg = parse(key, value)?,
            "lambda_s" => self.lambda_s = parse(key, value)?,
            "R_th" => self.r_th = parse(key, value)?,
            "D_V" => self.d_v = parse(key, value)?,
            "V_s" => self.v_s = parse(key, value)?,
            "cell_radius_m" => self.cell_radius_m = parse(key, value)?,
            "N_epi" => self.n_epi = parse(key, value)?,
            "N_f" => self.n_f = parse(key, value)?,
            "N_mini" => self.n_mini = parse(key, value)?,
            "N_rm" => self.n_rm = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "nu" => self.nu = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "link_samples" => self.link_samples = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "ou_theta" => self.ou_theta = parse(key, value)?,
            "ou_sigma" => self.ou_sigma = parse(key, value)?,
            "ou_decay" => self.ou_decay = parse(key, value)?,
            "cap_objective" => self.cap_objective = parse(key, value)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, key: &'static str, reason: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    key,
                    reason: reason.to_string(),
                })
            }
        }
        let finite = [
            ("P_u_dBm", self.p_u_dbm),
            ("N0_dBm", self.n0_dbm),
            ("fc_GHz", self.fc_ghz),
            ("H0_m", self.h0_m),
            ("R_th", self.r_th),
            ("D_V", self.d_v),
        ];
        for (key, v) in finite {
            check(v.is_finite(), key, "must be finite")?;
        }
        check(self.fc_ghz > 0.0, "fc_GHz", "must be positive")?;
        check(self.h_min_m > 0.0, "h_min_m", "must be positive")?;
        check(
            self.h_min_m <= self.h_max_m,
            "h_max_m",
            "must not be below h_min_m",
        )?;
        check(
            self.phi_deg > 0.0 && self.phi_deg < 90.0,
            "phi_deg",
            "must lie strictly between 0 and 90 degrees",
        )?;
        check(self.lambda_s > 0.0, "lambda_s", "must be positive")?;
        check(self.t_f_s > 0.0, "t_f_s", "must be positive")?;
        check(self.v_max_mps > 0.0, "v_max_mps", "must be positive")?;
        check(self.v_s >= 1, "V_s", "must be at least 1")?;
        check(self.cell_radius_m > 0.0, "cell_radius_m", "must be positive")?;
        check(self.r_th >= 0.0, "R_th", "must be non-negative")?;
        check(self.d_v > 0.0, "D_V", "must be positive")?;
        check(self.n_f >= 1, "N_f", "must be at least 1")?;
        check(self.n_mini >= 1, "N_mini", "must be at least 1")?;
        check(self.n_rm >= 1, "N_rm", "must be at least 1")?;
        check(self.alpha > 0.0, "alpha", "must be positive")?;
        check((0.0..=1.0).contains(&self.nu), "nu", "must lie in [0, 1]")?;
        check(self.link_samples >= 1, "link_samples", "must be at least 1")?;
        check(
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            "lr_decay",
            "must lie in (0, 1]",
        )?;
        check(self.ou_theta >= 0.0, "ou_theta", "must be non-negative")?;
        check(self.ou_sigma >= 0.0, "ou_sigma", "must be non-negative")?;
        check(
            self.ou_decay > 0.0 && self.ou_decay <= 1.0,
            "ou_decay",
            "must lie in (0, 1]",
        )?;
        Ok(())
    }

    pub fn num_uavs(&self) -> usize {
        self.m + self.n
    }

    pub fn mode_of(&self, uav: usize) -> Mode {
        if uav < self.m {
            Mode::U2N
        } else {
            Mode::U2D
        }
    }

    pub fn phi_rad(&self) -> f64 {
        self.phi_deg.to_radians()
    }

    pub fn p_u_watts(&self) -> f64 {
        dbm_to_watts(self.p_u_dbm)
    }

    pub fn n0_watts(&self) -> f64 {
        dbm_to_watts(self.n0_dbm)
    }

    pub fn bs_position(&self) -> Position {
        Position::new(0.0, 0.0, self.h0_m)
    }

    /// Distance covered in one frame at full speed.
    pub fn max_step_m(&self) -> f64 {
        self.v_max_mps * self.t_f_s
    }

    fn value_string(&self, key: &str) -> String {
        match key {
            "M" => self.m.to_string(),
            "N" => self.n.to_string(),
            "K" => self.k.to_string(),
            "P_u_dBm" => self.p_u_dbm.to_string(),
            "N0_dBm" => self.n0_dbm.to_string(),
            "fc_GHz" => self.fc_ghz.to_string(),
            "H0_m" => self.h0_m.to_string(),
            "h_min_m" => self.h_min_m.to_string(),
            "h_max_m" => self.h_max_m.to_string(),
            "v_max_mps" => self.v_max_mps.to_string(),
            "t_f_s" => self.t_f_s.to_string(),
            "phi_deg" => self.phi_deg.to_string(),
            "lambda_s" => self.lambda_s.to_string(),
            "R_th" => self.r_th.to_string(),
            "D_V" => self.d_v.to_string(),
            "V_s" => self.v_s.to_string(),
            "cell_radius_m" => self.cell_radius_m.to_string(),
            "N_epi" => self.n_epi.to_string(),
            "N_f" => self.n_f.to_string(),
            "N_mini" => self.n_mini.to_string(),
            "N_rm" => self.n_rm.to_string(),
            "alpha" => self.alpha.to_string(),
            "nu" => self.nu.to_string(),
            "seed" => self.seed.to_string(),
            "link_samples" => self.link_samples.to_string(),
            "lr_decay" => self.lr_decay.to_string(),
            "ou_theta" => self.ou_theta.to_string(),
            "ou_sigma" => self.ou_sigma.to_string(),
            "ou_decay" => self.ou_decay.to_string(),
            "cap_objective" => self.cap_objective.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }
}

impl fmt::Display for ScenarioConfig {
    /// Writes the config back in the file format, one key per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in Self::KEYS {
            writeln!(f, "{key}: {}", self.value_string(key))?;
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Reads a config file; absent keys keep their defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_kv_str(&text)
}

/// Where a UAV senses and where its data must be delivered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub target: Position,
    /// The BS for U2N UAVs, the UAV's mobile device for U2D UAVs.
    pub receiver: Position,
}

/// Joint state of all UAVs before frame `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub frame: usize,
    pub uavs: Vec<UavState>,
    pub sites: Vec<Site>,
    /// Allocation used during the most recent frame.
    pub allocation: AllocationMatrix,
}

impl WorldState {
    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn aoi(&self) -> Vec<f64> {
        self.uavs.iter().map(|u| u.aoi as f64).collect()
    }
}

fn uniform_in_disc(rng: &mut impl Rng, radius: f64) -> Position {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    Position::ground(r * theta.cos(), r * theta.sin())
}

/// Places targets and devices uniformly in the cell and puts every UAV at its
/// start location (U2N above the BS, U2D above its device).
pub fn init_scenario(config: &ScenarioConfig, seed: u64) -> Result<WorldState, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num = config.num_uavs();
    let targets: Vec<Position> = (0..num)
        .map(|_| uniform_in_disc(&mut rng, config.cell_radius_m))
        .collect();
    let devices: Vec<Position> = (0..config.n)
        .map(|_| uniform_in_disc(&mut rng, config.cell_radius_m))
        .collect();
    let start_z = INITIAL_ALTITUDE_M.clamp(config.h_min_m, config.h_max_m);
    let mut sites = Vec::with_capacity(num);
    let mut uavs = Vec::with_capacity(num);
    for (i, target) in targets.into_iter().enumerate() {
        let mode = config.mode_of(i);
        let (receiver, start) = match mode {
            Mode::U2N => (config.bs_position(), Position::new(0.0, 0.0, start_z)),
            Mode::U2D => {
                let d = devices[i - config.m];
                (d, Position::new(d.x, d.y, start_z))
            }
        };
        sites.push(Site { target, receiver });
        uavs.push(UavState::initial(mode, start));
    }
    Ok(WorldState {
        frame: 1,
        uavs,
        sites,
        allocation: AllocationMatrix::zeros(num, config.k),
    })
}

/// Clamps a point's horizontal offset from `center` to at most `radius`.
fn clamp_horizontal(p: Position, center: Position, radius: f64) -> Position {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    let rho = dx.hypot(dy);
    // slack keeps the projection exactly idempotent under rounding
    if rho > radius * (1.0 + 1e-12) + 1e-12 {
        let s = radius / rho;
        Position::new(center.x + dx * s, center.y + dy * s, p.z)
    } else {
        p
    }
}

/// Maps a location into the cell cylinder: altitude into `[h_min, h_max]`,
/// horizontal distance from the BS at most the cell radius.
pub fn project_location(p: Position, config: &ScenarioConfig) -> Position {
    let z = p.z.clamp(config.h_min_m, config.h_max_m);
    clamp_horizontal(
        Position::new(p.x, p.y, z),
        Position::ground(0.0, 0.0),
        config.cell_radius_m,
    )
}

/// Projects an action onto the feasible set: both locations inside the cell
/// cylinder and the sensing location inside the target's sensing cone
/// (horizontal offset at most `z tan(phi)`).
pub fn project_locations(action: Action, target: Position, config: &ScenarioConfig) -> Action {
    let sensing = project_location(action.sensing, config);
    let cone = sensing.z * config.phi_rad().tan();
    let sensing = clamp_horizontal(sensing, target, cone);
    Action {
        sensing,
        transmission: project_location(action.transmission, config),
    }
}

/// Decodes a raw policy output in `[-1, 1]^6` into a feasible action.
///
/// Components 0..3 are the sensing location, 3..6 the transmission location;
/// x and y map linearly onto `[-R, R]` and z onto `[h_min, h_max]`.
pub fn project_action(raw: &[f64; 6], target: Position, config: &ScenarioConfig) -> Action {
    let r = config.cell_radius_m;
    let decode = |v: &[f64]| {
        let c = |x: f64| x.clamp(-1.0, 1.0);
        Position::new(
            c(v[0]) * r,
            c(v[1]) * r,
            config.h_min_m + 0.5 * (c(v[2]) + 1.0) * (config.h_max_m - config.h_min_m),
        )
    };
    let action = Action {
        sensing: decode(&raw[0..3]),
        transmission: decode(&raw[3..6]),
    };
    project_locations(action, target, config)
}
