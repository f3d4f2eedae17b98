//! The crime environment on synthetic district data: replay, bounds and
//! limiting cases.

use std::sync::{Arc, OnceLock};

use chrono::Weekday;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skywatch::crime::events::locate_events;
use skywatch::crime::parse::parse_reader;
use skywatch::crime::synth::{generate_csv, SynthConfig};
use skywatch::crime::{
    filter_window, BlockMap, SchemaConfig, SeverityClassifier, Split, WindowSpec,
};
use skywatch::env::{
    deterrence_ratio, split_episodes, ActionVector, CrimeEnv, EnvConfig, Episode, YearSplit,
};
use skywatch::nn::Tensor;
use skywatch::ppo::Environment;
use skywatch::predictor::{predict_counts, PredictorConfig, PredictorModel};
use skywatch::world::{Role, WorldConfig};

const BLOCKS: usize = 12;
const WINDOW: usize = 4;

struct Fixture {
    train: Arc<Vec<Episode>>,
    test: Arc<Vec<Episode>>,
    predictor: Arc<PredictorModel>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let blocks = BlockMap::tiling(41.75, -87.63, 4, 3, 600.0, 600.0);
        let (bytes, _) = generate_csv(&SynthConfig::default(), &blocks, 17).unwrap();
        let (raw, _) = parse_reader(bytes.as_slice(), &SchemaConfig::default()).unwrap();
        let windowed = filter_window(&raw, &WindowSpec::default());
        let (events, _) = locate_events(&windowed, &blocks, &SeverityClassifier::default());
        let years = YearSplit::default();
        let episodes = |split| {
            Arc::new(split_episodes(&events, &years, split, Weekday::Fri, WINDOW, BLOCKS).unwrap())
        };
        let cfg = PredictorConfig {
            hidden_units: 8,
            window_len: WINDOW,
            ..Default::default()
        };
        Fixture {
            train: episodes(Split::Train),
            test: episodes(Split::Test),
            predictor: Arc::new(PredictorModel::new(cfg, BLOCKS, 5)),
        }
    })
}

fn env(split: Split, range: f64, cycles: usize) -> CrimeEnv {
    let f = fixture();
    let config = EnvConfig {
        world: WorldConfig {
            placement_radius_m: 1500.0,
            grid_spacing_m: 250.0,
            deterrence_range_m: range,
            ..Default::default()
        },
        episode_cycles: cycles,
        split,
        predictor_checkpoint: None,
    };
    let episodes = match split {
        Split::Train => f.train.clone(),
        Split::Test => f.test.clone(),
    };
    CrimeEnv::new(config, episodes, Some(f.predictor.clone())).unwrap()
}

fn random_action(env: &CrimeEnv, r: &mut impl Rng) -> ActionVector {
    let n = env.config().world.uav_total;
    ActionVector {
        cells: (0..n)
            .map(|_| r.random_range(0..env.grid().len()))
            .collect(),
        roles: (0..n)
            .map(|_| Role::from_index(r.random_range(0..3)).unwrap())
            .collect(),
    }
}

#[test]
fn logged_episode_replays_bit_exactly() {
    let mut first = env(Split::Train, 320.0, 20);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let obs0 = first.reset(11).unwrap();
    let mut actions = Vec::new();
    let mut trace = Vec::new();
    while !first.is_done() {
        let a = random_action(&first, &mut r);
        let s = first.step(&a).unwrap();
        trace.push((s.observation, s.reward.to_bits(), s.info));
        actions.push(a);
    }

    let mut second = env(Split::Train, 320.0, 20);
    assert_eq!(second.reset(11).unwrap(), obs0);
    for (a, (obs, reward, info)) in actions.iter().zip(&trace) {
        let s = second.step(a).unwrap();
        assert_eq!(&s.observation, obs);
        assert_eq!(s.reward.to_bits(), *reward);
        assert_eq!(&s.info, info);
    }
    assert_eq!(first.log(), second.log());
    assert_eq!(first.stats(), second.stats());
}

#[test]
fn reset_seed_selects_the_same_training_year() {
    let mut a = env(Split::Train, 320.0, 5);
    let mut b = env(Split::Train, 320.0, 5);
    for seed in 0..20 {
        assert_eq!(a.reset(seed).unwrap(), b.reset(seed).unwrap());
        assert_eq!(a.render().unwrap().episode, b.render().unwrap().episode);
    }
}

#[test]
fn no_sensing_leaves_only_zero_history() {
    let mut e = env(Split::Test, 320.0, 12);
    e.reset(0).unwrap();
    let action = ActionVector::uniform(0, Role::Deterrence, e.config().world.uav_total);
    let mut obs = Vec::new();
    for _ in 0..WINDOW {
        obs = e.step(&action).unwrap().observation;
    }
    let zeros = Tensor::zeros(&[WINDOW, BLOCKS]);
    assert_eq!(obs, predict_counts(&fixture().predictor, &zeros).unwrap());
    assert!(e
        .render()
        .unwrap()
        .history
        .iter()
        .all(|row| row.iter().all(|&v| v == 0.0)));
}

#[test]
fn unbounded_range_deters_every_major() {
    let mut e = env(Split::Test, f64::INFINITY, 52);
    e.reset(0).unwrap();
    let action = ActionVector::uniform(3, Role::Deterrence, e.config().world.uav_total);
    while !e.is_done() {
        e.step(&action).unwrap();
    }
    let stats = e.stats().unwrap();
    assert!(stats.potential_majors > 0);
    assert_eq!(deterrence_ratio(&stats), 1.0);
}

#[test]
fn policy_interface_shapes() {
    let e = env(Split::Train, 320.0, 4);
    let heads = e.action_heads();
    let n = e.config().world.uav_total;
    assert_eq!(heads.len(), 2 * n);
    assert!(heads[..n].iter().all(|&h| h == e.grid().len()));
    assert!(heads[n..].iter().all(|&h| h == 3));
    assert_eq!(e.observation_size(), BLOCKS);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn deterred_never_exceeds_potential(seed in 0u64..1000, range in 10.0f64..3000.0) {
        let mut e = env(Split::Train, range, 10);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        e.reset(seed).unwrap();
        while !e.is_done() {
            let a = random_action(&e, &mut r);
            let s = e.step(&a).unwrap();
            prop_assert!(s.info.deterred <= s.info.potential_majors);
            prop_assert_eq!(s.reward, s.info.deterred as f64);
        }
    }
}
