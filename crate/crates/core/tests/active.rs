use lcscale::active::{al_step, init_state, select_query, ALConfig, QueryStrategy};
use lcscale::data::{synth_generate, ComputeAxis, SynthConfig, Trend};
use lcscale::hier::HierConfig;
use lcscale::kernels::ModelKind;
use lcscale::scaling::{ScalingConfig, ScalingLaw};
use proptest::prelude::*;

fn bench(seed: u64) -> lcscale::data::CurveDataset {
    synth_generate(&SynthConfig {
        tasks: 3,
        withins: 3,
        points_per_curve: 4,
        x_min: 100.0,
        x_max: 1e5,
        kernel: [(0.02, 1.0), (0.05, 1.0), (0.002, 1.0)],
        noise_std: 0.005,
        trend: Trend {
            intercept: 5.0,
            slope_x: -0.3,
            slope_size: -0.2,
        },
        compute: Some(ComputeAxis::default()),
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn config() -> ALConfig {
    ALConfig {
        runs: 2,
        kind: ModelKind::Magp,
        scaling: ScalingConfig {
            hier: HierConfig {
                max_iters: 20,
                ..Default::default()
            },
            fit_range: (1e10, 1e25),
            ..Default::default()
        },
        master_seed: 0,
    }
}

#[test]
fn step_moves_one_key_from_pool_to_train() {
    let ds = bench(4);
    let state = init_state(&ds).unwrap();
    let pool = state.pool_keys.len();
    let train = state.train_keys.len();
    let gt = ScalingLaw::new(3.0, -0.05);
    let state = al_step(&ds, state, QueryStrategy::Uncertainty, &config(), &gt).unwrap();
    assert_eq!(state.pool_keys.len(), pool - 1);
    assert_eq!(state.train_keys.len(), train + 1);
    assert_eq!(state.history.len(), 2);
    let q = state.history[1].queried.clone().unwrap();
    assert!(state.train_keys.contains(&q));
    assert!(state.history[1].cum_cost_pflops > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn queries_come_from_the_pool(seed in 0u64..1000, step in 0usize..5) {
        let ds = bench(1);
        let state = init_state(&ds).unwrap();
        for s in [QueryStrategy::LargestFirst, QueryStrategy::SmallestFirst, QueryStrategy::Random { seed }] {
            let k = select_query(&ds, &state, s, step, None).unwrap();
            prop_assert!(state.pool_keys.contains(&k));
            prop_assert!(!state.train_keys.contains(&k));
        }
    }
}
