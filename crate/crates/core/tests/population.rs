use cavity_core::bethe::{bethe_functional, BetheOptions};
use cavity_core::popdyn::{init_population, run_to_fixed_point_with, sweep_with, FixedPointOptions, InitKind, Kernel};
use cavity_core::{make_model, rs_value, Model, ModelKind, ModelSpec};
use proptest::prelude::*;

fn model(spec: serde_json::Value) -> Model {
    make_model(&serde_json::from_value(spec).unwrap()).unwrap()
}

fn zoo() -> Vec<Model> {
    use serde_json::json;
    vec![
        model(json!({"kind": "potts", "q": 3, "beta": 1.0})),
        model(json!({"kind": "coloring", "q": 3})),
        model(json!({"kind": "sbm", "q": 2, "beta": 1.0986})),
        model(json!({"kind": "ldgm", "k": 3, "eta": 0.1})),
        model(json!({"kind": "ksat", "k": 3, "beta": 1.0})),
        model(json!({"kind": "naesat", "k": 3, "beta": 1.0})),
        model(json!({"kind": "hypergraph_potts", "q": 3, "k": 3, "beta": 1.0})),
    ]
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn fixed_point_and_bethe_do_not_depend_on_thread_count() {
    let m = model(serde_json::json!({"kind": "ldgm", "k": 3, "eta": 0.1}));
    let opts = FixedPointOptions { n: 3000, max_sweeps: 20, window: 5, ..Default::default() };
    let run = || {
        let kernel = Kernel::preferred(&m).unwrap();
        let fp = run_to_fixed_point_with(InitKind::Planted, &kernel, 3.0, &opts, 42).unwrap();
        let b = bethe_functional(&fp.population, &m, 3.0, &BetheOptions::with_samples(20_000), 7).unwrap();
        (fp.population.raw().to_vec(), fp.distance_trace, b.mean, b.stderr)
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one, four);
}

#[test]
fn planted_sweeps_keep_the_mean_uniform() {
    let n = 4000;
    let bound = 5.0 / (n as f64).sqrt();
    for m in zoo() {
        let kernel = Kernel::preferred(&m).unwrap();
        let mut pop = init_population(InitKind::Planted, m.q(), n, 0.0, 1).unwrap();
        for t in 0..5 {
            pop = sweep_with(&pop, &kernel, 3.0, 100 + t).unwrap();
            assert!(pop.mean_deviation() < bound, "{:?}: deviation {}", m.kind(), pop.mean_deviation());
        }
    }
}

#[test]
fn trivial_population_reproduces_the_rs_value() {
    // k-SAT clauses are balanced only on average over literal signs.
    for m in zoo().into_iter().filter(|m| m.is_soft() && m.kind() != ModelKind::Ksat) {
        let pop = init_population(InitKind::Trivial, m.q(), 100, 0.0, 0).unwrap();
        for d in [0.0, 1.5, 4.0] {
            let b = bethe_functional(&pop, &m, d, &BetheOptions::with_samples(10_000), 3).unwrap();
            let rs = rs_value(&m, d);
            assert!((b.mean - rs).abs() < 1e-9, "{:?} d={d}: {} vs {rs}", m.kind(), b.mean);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trivial_population_is_a_fixed_point(q in 2usize..6, beta in 0.05f64..4.0, d in 0.0f64..8.0, seed in any::<u64>()) {
        let m = make_model(&ModelSpec::Potts { q, beta: Some(beta), c: None }).unwrap();
        let kernel = Kernel::preferred(&m).unwrap();
        let pop = init_population(InitKind::Trivial, q, 200, 0.0, 0).unwrap();
        let next = sweep_with(&pop, &kernel, d, seed).unwrap();
        let u = 1.0 / q as f64;
        prop_assert!(next.raw().iter().all(|x| (x - u).abs() < 1e-12));
    }

    #[test]
    fn sweeps_stay_on_the_simplex(eta in 0.01f64..0.49, d in 0.0f64..6.0, seed in any::<u64>()) {
        let m = make_model(&ModelSpec::Ldgm { k: 3, eta }).unwrap();
        let kernel = Kernel::preferred(&m).unwrap();
        let pop = init_population(InitKind::Planted, 2, 200, 0.0, seed).unwrap();
        let next = sweep_with(&pop, &kernel, d, seed).unwrap();
        for mu in next.members() {
            prop_assert!(mu.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
