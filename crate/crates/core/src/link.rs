//! Link-level analysis: SINR, successful transmission probability (STP) and
//! expected throughput of U2N and U2D links under underlay interference.
//!
//! Two independent routes are provided. Monte Carlo draws the joint fading of
//! the link and its co-channel interferers, each link LoS with its own
//! probability. Quadrature discretises the distribution of the aggregate
//! interference `I = sum_j g_j zeta_j` on a uniform grid by convolving the
//! per-interferer Rice/Rayleigh mixtures, then integrates the own-link
//! survival against it:
//!
//! `STP(R) = E_I[ p_los S_ri(kappa (N0/P + I) / g_los) + (1 - p_los) S_ra(kappa (N0/P + I) / g_nlos) ]`
//!
//! with `kappa = 2^R - 1`. Writing the interference in unscaled gain units
//! makes one grid serve every threshold, which the expected-throughput
//! integral needs.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::channel::{rayleigh_from_normals, rice_from_normals, ChannelError, ChannelGains};
use crate::geometry::Position;
use crate::scenario::ScenarioConfig;
use crate::special::{rayleigh_survival, rice_survival};

/// STP level below which the throughput integral is truncated.
pub const STP_TRUNCATION: f64 = 1e-6;
/// Default quadrature grid size.
pub const DEFAULT_GRID_POINTS: usize = 4096;
/// Tail probability left outside the interference grid.
const GRID_TAIL: f64 = 1e-6;
const RICE_TABLE_POINTS: usize = 8192;
const THROUGHPUT_INTERVALS: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("Monte Carlo needs at least one sample")]
    NoSamples,
    #[error("quadrature grid must have at least two points")]
    EmptyGrid,
    #[error("invalid link context: {0}")]
    InvalidContext(&'static str),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Everything needed to evaluate one receiver on one subchannel.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkContext {
    pub own: ChannelGains,
    /// Co-channel transmitters as seen by this receiver.
    pub interferers: Vec<ChannelGains>,
    /// Transmit power, watts.
    pub p_u: f64,
    /// Noise power, watts.
    pub n0: f64,
    /// QoS threshold, bps/Hz.
    pub r_th: f64,
}

impl LinkContext {
    /// Builds the context of a UAV at `tx` delivering to `rx` while the UAVs
    /// at `interferers` share its subchannel.
    pub fn from_positions(
        tx: Position,
        rx: Position,
        interferers: &[Position],
        config: &ScenarioConfig,
    ) -> Result<Self, LinkError> {
        let own = ChannelGains::between(tx, rx, config.fc_ghz)?;
        let interferers = interferers
            .iter()
            .map(|p| ChannelGains::between(*p, rx, config.fc_ghz))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            own,
            interferers,
            p_u: config.p_u_watts(),
            n0: config.n0_watts(),
            r_th: config.r_th,
        })
    }

    fn validate(&self) -> Result<(), LinkError> {
        if !(self.r_th >= 0.0) {
            return Err(LinkError::InvalidContext("R_th must be non-negative"));
        }
        if !(self.p_u > 0.0 && self.n0 > 0.0) {
            return Err(LinkError::InvalidContext("powers must be positive"));
        }
        for g in std::iter::once(&self.own).chain(&self.interferers) {
            if !(g.g_los > 0.0 && g.g_nlos > 0.0 && g.k_rice > 0.0) {
                return Err(LinkError::InvalidContext("gains must be positive"));
            }
            if !(0.0..=1.0).contains(&g.p_los) {
                return Err(LinkError::InvalidContext("LoS probability outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        threshold_kappa(self.r_th)
    }
}

pub fn threshold_kappa(r: f64) -> f64 {
    r.exp2() - 1.0
}

/// Propagation state and small-scale fading of one link in one realisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingDraw {
    pub los: bool,
    pub zeta: f64,
}

/// Instantaneous SINR for one joint fading realisation.
pub fn sinr_sample(ctx: &LinkContext, own: FadingDraw, interferers: &[FadingDraw]) -> f64 {
    assert_eq!(
        interferers.len(),
        ctx.interferers.len(),
        "one fading draw per interferer"
    );
    let signal = ctx.p_u * ctx.own.gain(own.los) * own.zeta;
    let interference: f64 = ctx
        .interferers
        .iter()
        .zip(interferers)
        .map(|(g, d)| ctx.p_u * g.gain(d.los) * d.zeta)
        .sum();
    signal / (ctx.n0 + interference)
}

/// Shannon throughput in bps/Hz for a linear SINR.
pub fn throughput(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    MonteCarlo { samples: usize, seed: u64 },
    Quadrature { grid_points: usize },
}

impl Method {
    pub fn quadrature() -> Self {
        Method::Quadrature {
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// Probability that the throughput exceeds `ctx.r_th`.
pub fn stp(ctx: &LinkContext, method: Method) -> Result<f64, LinkError> {
    match method {
        Method::MonteCarlo { samples, seed } => Ok(monte_carlo(ctx, samples, seed)?.stp),
        Method::Quadrature { grid_points } => {
            Ok(QuadratureLink::new(ctx, grid_points)?.stp(ctx.r_th))
        }
    }
}

/// Expected throughput where failed transmissions (rate at or below `R_th`)
/// deliver nothing.
pub fn expected_throughput(ctx: &LinkContext, method: Method) -> Result<f64, LinkError> {
    match method {
        Method::MonteCarlo { samples, seed } => {
            Ok(monte_carlo(ctx, samples, seed)?.expected_throughput)
        }
        Method::Quadrature { grid_points } => {
            Ok(QuadratureLink::new(ctx, grid_points)?.expected_throughput())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub stp: f64,
    /// Sample mean of `R 1{R > R_th}`.
    pub expected_throughput: f64,
}

fn draw_link(g: &ChannelGains, rng: &mut impl Rng) -> FadingDraw {
    let los = rng.random::<f64>() < g.p_los;
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    let zeta = if los {
        rice_from_normals(g.k_rice, x, y)
    } else {
        rayleigh_from_normals(x, y)
    };
    FadingDraw { los, zeta }
}

/// Joint-fading Monte Carlo estimate of STP and expected throughput.
pub fn monte_carlo(ctx: &LinkContext, samples: usize, seed: u64) -> Result<MonteCarloEstimate, LinkError> {
    if samples == 0 {
        return Err(LinkError::NoSamples);
    }
    ctx.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kappa = ctx.kappa();
    let mut draws = vec![FadingDraw { los: false, zeta: 0.0 }; ctx.interferers.len()];
    let mut hits = 0usize;
    let mut rate_sum = 0.0;
    for _ in 0..samples {
        let own = draw_link(&ctx.own, &mut rng);
        for (d, g) in draws.iter_mut().zip(&ctx.interferers) {
            *d = draw_link(g, &mut rng);
        }
        let gamma = sinr_sample(ctx, own, &draws);
        if gamma > kappa {
            hits += 1;
            rate_sum += throughput(gamma);
        }
    }
    Ok(MonteCarloEstimate {
        stp: hits as f64 / samples as f64,
        expected_throughput: rate_sum / samples as f64,
    })
}

/// `P(zeta g > x)` for the LoS/NLoS mixture of one link.
pub fn mixture_survival(g: &ChannelGains, x: f64) -> f64 {
    let mut s = 0.0;
    if g.p_los > 0.0 {
        s += g.p_los * rice_survival(x / g.g_los, g.k_rice);
    }
    if g.p_los < 1.0 {
        s += (1.0 - g.p_los) * rayleigh_survival(x / g.g_nlos);
    }
    s
}

/// Density of `chi = g zeta` for the LoS/NLoS mixture of one link.
pub fn mixture_pdf(g: &ChannelGains, y: f64) -> f64 {
    use crate::special::{rayleigh_pdf, rice_pdf};
    g.p_los * rice_pdf(y / g.g_los, g.k_rice) / g.g_los
        + (1.0 - g.p_los) * rayleigh_pdf(y / g.g_nlos) / g.g_nlos
}

/// Smallest `x` with `mixture_survival(g, x) <= tail`, to bisection accuracy.
fn mixture_quantile(g: &ChannelGains, tail: f64) -> f64 {
    let mut hi = g.g_los.max(g.g_nlos);
    while mixture_survival(g, hi) > tail {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mixture_survival(g, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Probability masses of `g zeta` on grid cells centred at `k * step`.
fn cell_masses(g: &ChannelGains, step: f64, points: usize) -> Vec<f64> {
    let mut masses = Vec::with_capacity(points);
    let mut prev = 1.0;
    for k in 0..points {
        let upper = mixture_survival(g, (k as f64 + 0.5) * step);
        masses.push((prev - upper).max(0.0));
        prev = upper;
    }
    masses
}

fn convolve_truncated(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    let b_last = b.iter().rposition(|v| *v > 0.0).unwrap_or(0);
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let upper = (n - i).min(b_last + 1);
        for j in 0..upper {
            out[i + j] += ai * b[j];
        }
    }
    out
}

/// Tabulated Rice survival in the fading argument, linearly interpolated.
#[derive(Debug, Clone)]
struct RiceSurvivalTable {
    k_rice: f64,
    step: f64,
    values: Vec<f64>,
}

impl RiceSurvivalTable {
    fn new(k_rice: f64) -> Self {
        let mut hi = 2.0;
        while rice_survival(hi, k_rice) > 1e-17 {
            hi *= 1.5;
        }
        let step = hi / (RICE_TABLE_POINTS - 1) as f64;
        let values = (0..RICE_TABLE_POINTS)
            .map(|i| rice_survival(i as f64 * step, k_rice))
            .collect();
        Self {
            k_rice,
            step,
            values,
        }
    }

    fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let pos = x / self.step;
        let i = pos as usize;
        if i + 1 >= self.values.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Grid-quadrature evaluator of one link. Building it does the convolution
/// once; `stp` can then be queried at any rate.
#[derive(Debug, Clone)]
pub struct QuadratureLink {
    own: ChannelGains,
    noise_ratio: f64,
    r_th: f64,
    /// Interference levels (gain units) carrying non-zero mass.
    levels: Vec<f64>,
    masses: Vec<f64>,
    rice: Option<RiceSurvivalTable>,
}

impl QuadratureLink {
    pub fn new(ctx: &LinkContext, grid_points: usize) -> Result<Self, LinkError> {
        if grid_points < 2 {
            return Err(LinkError::EmptyGrid);
        }
        ctx.validate()?;
        let (levels, masses) = if ctx.interferers.is_empty() {
            (vec![0.0], vec![1.0])
        } else {
            let tail = GRID_TAIL / ctx.interferers.len() as f64;
            // union bound: P(I > sum of per-link quantiles) <= GRID_TAIL
            let x_max: f64 = ctx
                .interferers
                .iter()
                .map(|g| mixture_quantile(g, tail))
                .sum();
            let step = x_max / (grid_points - 1) as f64;
            let mut dist = cell_masses(&ctx.interferers[0], step, grid_points);
            for g in &ctx.interferers[1..] {
                dist = convolve_truncated(&dist, &cell_masses(g, step, grid_points));
            }
            dist.iter()
                .enumerate()
                .filter(|(_, m)| **m > 0.0)
                .map(|(k, m)| (k as f64 * step, *m))
                .unzip()
        };
        Ok(Self {
            own: ctx.own,
            noise_ratio: ctx.n0 / ctx.p_u,
            r_th: ctx.r_th,
            levels,
            masses,
            rice: (ctx.own.p_los > 0.0).then(|| RiceSurvivalTable::new(ctx.own.k_rice)),
        })
    }

    /// Total probability mass retained on the grid.
    pub fn retained_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `P(log2(1 + gamma) > rate)`.
    pub fn stp(&self, rate: f64) -> f64 {
        let kappa = threshold_kappa(rate);
        let p = self.own.p_los;
        let mut acc = 0.0;
        for (x, m) in self.levels.iter().zip(&self.masses) {
            let t = kappa * (self.noise_ratio + x);
            let mut s = 0.0;
            if let Some(table) = &self.rice {
                s += p * table.survival(t / self.own.g_los);
            }
            if p < 1.0 {
                s += (1.0 - p) * rayleigh_survival(t / self.own.g_nlos);
            }
            acc += m * s;
        }
        acc.clamp(0.0, 1.0)
    }

    pub fn expected_throughput(&self) -> f64 {
        expected_throughput_from_stp(|r| self.stp(r), self.r_th)
    }

    #[doc(hidden)]
    pub fn rice_k(&self) -> Option<f64> {
        self.rice.as_ref().map(|t| t.k_rice)
    }
}

/// Expected throughput from an STP curve:
/// `int_{R_th}^{r_max} STP(r) dr + R_th STP(R_th)`, where `r_max` is where the
/// STP drops below [`STP_TRUNCATION`] (located by bisection to float
/// resolution).
pub fn expected_throughput_from_stp(stp: impl Fn(f64) -> f64, r_th: f64) -> f64 {
    let at_threshold = stp(r_th);
    if at_threshold < STP_TRUNCATION {
        return r_th * at_threshold;
    }
    let mut lo = r_th;
    let mut width = 1.0;
    let mut hi = r_th + width;
    while stp(hi) >= STP_TRUNCATION {
        lo = hi;
        width *= 2.0;
        hi = r_th + width;
        if width > 256.0 {
            break;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if stp(mid) >= STP_TRUNCATION {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `lo` and `hi` now straddle the cutoff as neighbouring floats; ending at
    // `hi` with the left-limit value keeps a step STP exact
    let r_max = hi;
    let n = THROUGHPUT_INTERVALS;
    let h = (r_max - r_th) / n as f64;
    let mut integral = 0.5 * (at_threshold + stp(lo));
    for i in 1..n {
        integral += stp(r_th + i as f64 * h);
    }
    integral * h + r_th * at_threshold
}

/// Pre-drawn uniforms and normal pairs shared by every link evaluation of an
/// environment, so expected throughput is a pure function of geometry.
#[derive(Debug, Clone)]
pub struct FadingBank {
    samples: usize,
    seed: u64,
    slots: Vec<BankSlot>,
    scratch: Vec<f64>,
    scratch_signal: Vec<f64>,
}

#[derive(Debug, Clone)]
struct BankSlot {
    uniform: Vec<f64>,
    x: Vec<f64>,
    radius_sq: Vec<f64>,
    rayleigh: Vec<f64>,
    max_radius: f64,
}

impl BankSlot {
    fn new(samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = Vec::with_capacity(samples);
        let mut x: Vec<f64> = Vec::with_capacity(samples);
        let mut y: Vec<f64> = Vec::with_capacity(samples);
        for _ in 0..samples {
            uniform.push(rng.random::<f64>());
            x.push(StandardNormal.sample(&mut rng));
            y.push(StandardNormal.sample(&mut rng));
        }
        let radius_sq: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * a + b * b).collect();
        let rayleigh: Vec<f64> = radius_sq.iter().map(|r| r.sqrt()).collect();
        let max_radius = rayleigh.iter().cloned().fold(0.0, f64::max);
        Self {
            uniform,
            x,
            radius_sq,
            rayleigh,
            max_radius,
        }
    }

    /// Adds `g * zeta` of every realisation to `out`. Branch-free so the
    /// sweep vectorises.
    fn accumulate_gains(&self, g: &ChannelGains, out: &mut [f64]) {
        let (nu, sigma) = rice_params(g.k_rice);
        let (c0, c1, c2) = (nu * nu, 2.0 * nu * sigma, sigma * sigma);
        let n = out.len();
        let (u, x, r2, ray) = (&self.uniform[..n], &self.x[..n], &self.radius_sq[..n], &self.rayleigh[..n]);
        for s in 0..n {
            // |nu + sigma (x + iy)| expanded so only one sqrt is needed
            let rice = g.g_los * (c0 + c1 * x[s] + c2 * r2[s]).max(0.0).sqrt();
            let nlos = g.g_nlos * ray[s];
            out[s] += if u[s] < g.p_los { rice } else { nlos };
        }
    }
}

fn rice_params(k: f64) -> (f64, f64) {
    ((k / (k + 1.0)).sqrt(), (0.5 / (k + 1.0)).sqrt())
}

impl FadingBank {
    pub fn new(samples: usize, seed: u64) -> Result<Self, LinkError> {
        if samples == 0 {
            return Err(LinkError::NoSamples);
        }
        Ok(Self {
            samples,
            seed,
            slots: Vec::new(),
            scratch: Vec::new(),
            scratch_signal: Vec::new(),
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn ensure_slots(&mut self, n: usize) {
        while self.slots.len() < n {
            let idx = self.slots.len() as u64;
            let seed = self.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(idx + 1));
            self.slots.push(BankSlot::new(self.samples, seed));
        }
    }

    /// Expected throughput of `ctx` over the bank's realisations. The own link
    /// uses slot 0 and interferer `j` slot `j + 1`.
    pub fn expected_throughput(&mut self, ctx: &LinkContext) -> f64 {
        self.ensure_slots(1 + ctx.interferers.len());
        let kappa = ctx.kappa();
        let own = &ctx.own;
        let (nu0, sig0) = rice_params(own.k_rice);
        let slot0 = &self.slots[0];
        // no realisation can clear the threshold: skip the sweep
        let mut best = 0.0f64;
        if own.p_los > 0.0 {
            best = best.max(own.g_los * (nu0 + sig0 * slot0.max_radius));
        }
        if own.p_los < 1.0 {
            best = best.max(own.g_nlos * slot0.max_radius);
        }
        if ctx.p_u * best / ctx.n0 <= kappa {
            return 0.0;
        }
        let noise_ratio = ctx.n0 / ctx.p_u;
        let mut interference = std::mem::take(&mut self.scratch);
        interference.clear();
        interference.resize(self.samples, noise_ratio);
        for (j, g) in ctx.interferers.iter().enumerate() {
            self.slots[j + 1].accumulate_gains(g, &mut interference);
        }
        let mut signal = std::mem::take(&mut self.scratch_signal);
        signal.clear();
        signal.resize(self.samples, 0.0);
        slot0.accumulate_gains(own, &mut signal);
        let sum = sum_throughput(&signal, &interference, kappa);
        self.scratch = interference;
        self.scratch_signal = signal;
        sum / self.samples as f64
    }
}

/// Splits a positive finite `v` into `(m, e)` with `v = m 2^e`, `m` in [1, 2).
#[inline]
fn split_exponent(v: f64) -> (f64, i64) {
    let bits = v.to_bits();
    let e = ((bits >> 52) & 0x7ff) as i64 - 1023;
    (f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000), e)
}

/// `sum_s log2(1 + gamma_s) 1{gamma_s > kappa}` with `gamma_s = sig_s / int_s`,
/// taken as the log of a running product whose exponent is peeled off
/// exactly every few factors. Four lanes hide the multiply latency.
fn sum_throughput(signal: &[f64], interference: &[f64], kappa: f64) -> f64 {
    const LANES: usize = 4;
    // each factor is below 2^256 for any physical SINR, so four fit a double
    const RENORM: usize = 4;
    let factor = |s: f64, i: f64| {
        let gamma = s / i;
        if gamma > kappa {
            1.0 + gamma
        } else {
            1.0
        }
    };
    let mut prod = [1.0f64; LANES];
    let mut exps = 0i64;
    let chunks = signal.chunks_exact(LANES).zip(interference.chunks_exact(LANES));
    for (c, (sig, int)) in chunks.enumerate() {
        for l in 0..LANES {
            prod[l] *= factor(sig[l], int[l]);
        }
        if c % RENORM == RENORM - 1 {
            for p in &mut prod {
                let (m, e) = split_exponent(*p);
                *p = m;
                exps += e;
            }
        }
    }
    let tail = signal.len() - signal.len() % LANES;
    let mut total = exps as f64;
    for (s, i) in signal[tail..].iter().zip(&interference[tail..]) {
        total += factor(*s, *i).log2();
    }
    total + prod.iter().map(|p| p.log2()).sum::<f64>()
}

type QuantizedPoint = [i64; 3];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct LinkKey {
    tx: QuantizedPoint,
    rx: QuantizedPoint,
    interferers: Vec<QuantizedPoint>,
}

const QUANTUM_M: f64 = 1e-3;
const CACHE_LIMIT: usize = 200_000;

fn quantize(p: &Position) -> QuantizedPoint {
    [
        (p.x / QUANTUM_M).round() as i64,
        (p.y / QUANTUM_M).round() as i64,
        (p.z / QUANTUM_M).round() as i64,
    ]
}

fn dequantize(q: &QuantizedPoint) -> Position {
    Position::new(
        q[0] as f64 * QUANTUM_M,
        q[1] as f64 * QUANTUM_M,
        q[2] as f64 * QUANTUM_M,
    )
}

/// Expected-throughput oracle used by the environment: Monte Carlo over a
/// fixed [`FadingBank`], memoised on millimetre-quantised geometry. Values are
/// computed from the quantised positions, so a cache hit and a fresh
/// evaluation return identical numbers.
#[derive(Debug, Clone)]
pub struct LinkEvaluator {
    bank: FadingBank,
    config: ScenarioConfig,
    cache: HashMap<LinkKey, f64>,
    hits: u64,
    misses: u64,
}

impl LinkEvaluator {
    pub fn new(config: &ScenarioConfig) -> Result<Self, LinkError> {
        Ok(Self {
            bank: FadingBank::new(config.link_samples, config.seed ^ 0x5EED_F00D)?,
            config: config.clone(),
            cache: HashMap::new(),
            hits: 0,
            misses: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Expected throughput (bps/Hz) of the link `tx -> rx` with co-channel
    /// transmitters at `interferers`.
    pub fn expected_throughput(
        &mut self,
        tx: Position,
        rx: Position,
        interferers: &[Position],
    ) -> Result<f64, LinkError> {
        let mut ints: Vec<QuantizedPoint> = interferers.iter().map(quantize).collect();
        ints.sort_unstable();
        let key = LinkKey {
            tx: quantize(&tx),
            rx: quantize(&rx),
            interferers: ints,
        };
        if let Some(v) = self.cache.get(&key) {
            self.hits += 1;
            return Ok(*v);
        }
        self.misses += 1;
        let positions: Vec<Position> = key.interferers.iter().map(dequantize).collect();
        let ctx = LinkContext::from_positions(dequantize(&key.tx), dequantize(&key.rx), &positions, &self.config)?;
        let value = self.bank.expected_throughput(&ctx);
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(key, value);
        Ok(value)
    }

    pub fn cache_stats(&self) -> (u64, u64) {
        (self.hits, self.misses)
    }
}
