mod common;

use common::*;
use proptest::prelude::*;
use spongedim::scale::gamma;
use spongedim::sim::rng::{uniform, word_key};
use spongedim::sim::{sample_tree, AlphaSchedule, TreeOptions};
use spongedim::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn entropy_bounds(seed in any::<u64>(), n in 1usize..8) {
        let p = random_simplex(&mut rng(seed), n, 0.0);
        let h = entropy(&p);
        prop_assert!(h >= -1e-15 && h <= (n as f64).ln() + 1e-12);
    }

    #[test]
    fn mandelbrot_dimension_in_range(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ifs = random_grid(&mut r);
        let w = random_model(&mut r, ifs.len());
        if let Ok(m) = dim_mandelbrot(&ifs, &w) {
            prop_assert!(m.value >= 0.0 && m.value <= ifs.dimension() as f64 + 1e-12, "{}", m.value);
        }
    }

    #[test]
    fn deterministic_dimension_below_similarity_bound(seed in any::<u64>()) {
        // dim of a deterministic measure never exceeds h(p)/min_k χ_k(p)
        let mut r = rng(seed);
        let ifs = random_grid(&mut r);
        let p = random_simplex(&mut r, ifs.len(), 0.01);
        let m = dim_mandelbrot(&ifs, &WeightModel::deterministic(pv(&p)).unwrap()).unwrap();
        let chi = lyapunov_of(&ifs, &p).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(m.value <= entropy(&p) / chi + 1e-12);
    }

    #[test]
    fn gamma_monotone_in_scale(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ifs = random_grid(&mut r);
        let seq = random_sequence(&mut r, ifs.len(), 300);
        let prefix = spongedim::PrefixTable::new(&ifs, &seq, 300).unwrap();
        for k in 0..ifs.dimension() {
            let mut last = 0;
            for n in 1..100 {
                let g = gamma(&prefix, n as f64, k).unwrap();
                prop_assert!(g >= last);
                last = g;
            }
        }
    }

    #[test]
    fn partition_function_vanishes_at_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ifs = random_grid(&mut r);
        let seq = random_sequence(&mut r, ifs.len(), 200);
        let engine = Engine::new(&ifs, &seq, 200).unwrap();
        let dec = engine.decompose(40).unwrap();
        let k = dec.g[0];
        prop_assert!(engine.partition_function(&seq, &dec, k, 1.0).unwrap().abs() < 1e-10);
    }

    #[test]
    fn d_tilde_is_min_of_profile(seed in any::<u64>(), n in 2usize..60) {
        let mut r = rng(seed);
        let ifs = random_grid(&mut r);
        let seq = random_sequence(&mut r, ifs.len(), 300);
        let engine = Engine::new(&ifs, &seq, 300).unwrap();
        let dec = engine.decompose(n).unwrap();
        let d = engine.d_sequences_with(&dec).unwrap();
        let (g1, gs) = (dec.g[0], *dec.g.last().unwrap());
        let brute = (g1..=gs).map(|k| engine.entropy_profile(&dec, k).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert!((d.d_tilde - brute / n as f64).abs() < 1e-12);
        prop_assert!(d.d_n <= d.d_tilde + 1e-12);
    }

    #[test]
    fn model_json_round_trip(seed in any::<u64>(), n in 2usize..6) {
        let w = random_model(&mut rng(seed), n);
        let back = WeightModel::from_json(&serde_json::to_string(&w).unwrap()).unwrap();
        prop_assert_eq!(w, back);
    }

    #[test]
    fn ifs_json_round_trip(seed in any::<u64>()) {
        let ifs = random_grid(&mut rng(seed));
        prop_assert_eq!(DiagonalIfs::from_json(&ifs.to_json()).unwrap(), ifs);
    }

    #[test]
    fn tree_is_prefix_closed(seed in any::<u64>(), a in 0.3f64..1.0) {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let t = sample_tree(&ifs, &AlphaSchedule::Constant(SurvivalVector::constant(4, a).unwrap()), 6, seed, TreeOptions::default()).unwrap();
        for k in 2..=6 {
            let parents = t.words(k - 1).unwrap();
            for w in t.words(k).unwrap() {
                prop_assert!(parents.contains(&w[..k - 1].to_vec()));
            }
        }
    }

    #[test]
    fn counter_rng_is_pure(seed in any::<u64>(), word in proptest::collection::vec(0usize..8, 0..6), c in any::<u64>()) {
        let u = uniform(word_key(seed, &word), c);
        prop_assert_eq!(u, uniform(word_key(seed, &word), c));
        prop_assert!((0.0..1.0).contains(&u));
    }
}
