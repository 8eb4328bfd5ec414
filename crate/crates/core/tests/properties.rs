//! Randomised invariants that span modules.

use aoi_uav::allocation::{
    allocate_greedy, allocate_swap, frame_objective, is_exchange_stable, AllocationProblem,
};
use aoi_uav::baselines::greedy_action;
use aoi_uav::channel::{path_loss_db, ChannelGains, LinkGeometry};
use aoi_uav::drl::{encode_state, Activation, Network, ReplayMemory};
use aoi_uav::env::{action_required, Environment, Mode, Stage};
use aoi_uav::link::{LinkContext, QuadratureLink};
use aoi_uav::scenario::{project_action, project_locations, Site};
use aoi_uav::sensing::{required_data, ssp, SensingParams};
use aoi_uav::{Position, ScenarioConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point_in_cell(r: f64) -> impl Strategy<Value = Position> {
    (0.0..1.0f64, 0.0..std::f64::consts::TAU)
        .prop_map(move |(u, t)| Position::ground(r * u.sqrt() * t.cos(), r * u.sqrt() * t.sin()))
}

fn gains() -> impl Strategy<Value = ChannelGains> {
    (0.0..=1.0f64, -11.0..-8.0f64, 0.0..20.0f64, 1.0..30.0f64).prop_map(|(p, lg, db, k)| {
        let g_los = 10f64.powf(lg);
        ChannelGains {
            p_los: p,
            g_los,
            g_nlos: g_los * 10f64.powf(-db / 10.0),
            k_rice: k,
        }
    })
}

fn context(own: ChannelGains, interferers: Vec<ChannelGains>, r_th: f64) -> LinkContext {
    let cfg = ScenarioConfig::default();
    LinkContext {
        own,
        interferers,
        p_u: cfg.p_u_watts(),
        n0: cfg.n0_watts(),
        r_th,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ssp_is_largest_above_the_target_at_minimum_altitude(
        target in point_in_cell(500.0),
        raw in prop::array::uniform6(-1.0..=1.0f64),
    ) {
        let cfg = ScenarioConfig::default();
        let params = SensingParams::from_config(&cfg);
        let a = project_action(&raw, target, &cfg);
        let best = Position::new(target.x, target.y, cfg.h_min_m);
        let p = ssp(&a.sensing, &target, &params);
        prop_assert!(p > 0.0);
        prop_assert!(p <= ssp(&best, &target, &params) + 1e-15);
    }

    #[test]
    fn required_data_never_below_valid_size(d_v in 0.1..100.0f64, p in 1e-6..=1.0f64) {
        prop_assert!(required_data(d_v, p).unwrap() >= d_v);
    }

    #[test]
    fn path_loss_increases_with_distance(
        h in 10.0..300.0f64,
        d in 1.0..2000.0f64,
        extra in 1e-3..500.0f64,
        los in any::<bool>(),
    ) {
        let near = LinkGeometry::new(Position::new(0.0, 0.0, h), Position::ground(d, 0.0));
        let far = LinkGeometry::new(Position::new(0.0, 0.0, h), Position::ground(d + extra, 0.0));
        prop_assert!(path_loss_db(&far, h, 2.0, los).unwrap() > path_loss_db(&near, h, 2.0, los).unwrap());
    }

    #[test]
    fn greedy_is_feasible_everywhere(target in point_in_cell(500.0), receiver in point_in_cell(500.0)) {
        let cfg = ScenarioConfig::default();
        let a = greedy_action(&Site { target, receiver }, &cfg);
        prop_assert_eq!(project_locations(a, target, &cfg), a);
        prop_assert!(ssp(&a.sensing, &target, &SensingParams::from_config(&cfg)) > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stp_and_throughput_bounds(
        own in gains(),
        ints in prop::collection::vec(gains(), 0..3),
        r_th in 0.05..4.0f64,
        r_hi in 0.0..4.0f64,
        scale in 1.0..10.0f64,
    ) {
        let ctx = context(own, ints.clone(), r_th);
        let q = QuadratureLink::new(&ctx, 1024).unwrap();
        // non-increasing in the rate threshold
        prop_assert!(q.stp(r_th + r_hi) <= q.stp(r_th) + 1e-12);
        let er = q.expected_throughput();
        let stp = q.stp(r_th);
        prop_assert!(er >= r_th * stp * (1.0 - 1e-9));
        if stp == 0.0 {
            prop_assert_eq!(er, 0.0);
        }
        // non-increasing as an interferer grows stronger
        if !ints.is_empty() {
            let mut louder = ints.clone();
            louder[0].g_los *= scale;
            louder[0].g_nlos *= scale;
            let q2 = QuadratureLink::new(&context(own, louder, r_th), 1024).unwrap();
            prop_assert!(q2.stp(r_th) <= stp + 2e-3);
        }
    }
}

/// Rates that shrink with co-channel load, different per pair.
fn pair_oracle(seed: u64, n: usize) -> impl FnMut(usize, &[usize]) -> f64 {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..6.0)).collect();
    let coupling: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..3.0)).collect();
    move |i, ints| base[i] / (1.0 + ints.iter().map(|j| coupling[i * n + j]).sum::<f64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn swap_matching_is_feasible_stable_and_no_worse_than_its_start(
        modes in prop::collection::vec(any::<bool>(), 1..9),
        eligible_bits in any::<u16>(),
        channels in 1usize..6,
        v_s in 1usize..4,
        seed in any::<u64>(),
    ) {
        let n = modes.len();
        let p = AllocationProblem {
            modes: modes.iter().map(|u| if *u { Mode::U2N } else { Mode::U2D }).collect(),
            eligible: (0..n).map(|i| eligible_bits >> i & 1 == 1).collect(),
            channels,
            v_s,
            t_f: 1.0,
            caps: None,
        };
        let mut o = pair_oracle(seed, n);
        let swap = allocate_swap(&p, &mut o).unwrap();
        prop_assert!(swap.is_feasible(&p.modes, &p.eligible, v_s));
        prop_assert!(is_exchange_stable(&swap, &p, &mut o).unwrap());
        let start = allocate_greedy(&p, &mut o).unwrap();
        prop_assert!(
            frame_objective(&swap, &p, &mut o).unwrap() >= frame_objective(&start, &p, &mut o).unwrap()
        );
    }

    #[test]
    fn replay_never_exceeds_capacity(capacity in 1usize..50, pushes in 0usize..200, batch in 1usize..60) {
        let mut m = ReplayMemory::new(capacity);
        for i in 0..pushes {
            m.push(i);
            prop_assert!(m.len() <= capacity);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(pushes as u64);
        let mut drawn: Vec<usize> = m.sample(batch, &mut rng).into_iter().copied().collect();
        prop_assert_eq!(drawn.len(), batch.min(m.len()));
        drawn.sort_unstable();
        drawn.dedup();
        prop_assert_eq!(drawn.len(), batch.min(m.len()));
    }

    #[test]
    fn soft_update_is_a_convex_combination(nu in 0.0..=1.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Network::new(&[3, 4, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let before = Network::new(&[3, 4, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let mut target = before.clone();
        target.soft_update(&online, nu).unwrap();
        for ((t, b), o) in target.layers.iter().zip(&before.layers).zip(&online.layers) {
            for ((t, b), o) in t.weights.iter().zip(&b.weights).zip(&o.weights) {
                prop_assert!(*t >= b.min(*o) - 1e-15 && *t <= b.max(*o) + 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Random raw actions on a small world: sawtooth AoI, bounded speed,
    /// monotone drain, alternating stages and bounded features.
    #[test]
    fn rollouts_respect_protocol_invariants(layout in 0u64..1000, seed in any::<u64>()) {
        use rand::Rng;
        let cfg = ScenarioConfig { m: 1, n: 2, k: 2, n_f: 60, link_samples: 400, ..ScenarioConfig::default() };
        let mut env = Environment::new(&cfg, layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reach = cfg.max_step_m() + 1e-9;
        for _ in 0..cfg.n_f {
            let before = env.world().clone();
            for i in 0..before.num_uavs() {
                for f in encode_state(&before, i, &cfg) {
                    prop_assert!((-1.0..=2.0).contains(&f), "feature {f}");
                }
            }
            let actions: Vec<_> = (0..before.num_uavs())
                .map(|i| {
                    action_required(&before.uavs[i]).then(|| {
                        let raw: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
                        project_action(&raw, before.sites[i].target, &cfg)
                    })
                })
                .collect();
            let out = env.step(&actions).unwrap();
            let after = env.world();
            for (i, (b, a)) in before.uavs.iter().zip(&after.uavs).enumerate() {
                prop_assert!(b.position.distance(&a.position) <= reach);
                if out.completed[i] {
                    prop_assert_eq!(a.aoi, 0);
                    prop_assert_eq!(a.stage, Stage::Sensing);
                    prop_assert_eq!(a.cycle, b.cycle + 1);
                } else {
                    prop_assert_eq!(a.aoi, b.aoi + 1);
                    prop_assert_eq!(a.cycle, b.cycle);
                }
                if b.stage == Stage::Transmission && a.stage == Stage::Transmission {
                    prop_assert!(a.remaining_data <= b.remaining_data);
                }
                if b.stage == Stage::Sensing && a.stage == Stage::Transmission {
                    prop_assert!(a.remaining_data > 0.0);
                }
            }
        }
    }
}
