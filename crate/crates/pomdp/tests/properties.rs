//! Property tests for the structural invariants: divergence bounds,
//! serialization identity, window packing, and belief normalization.

use pomdp::belief::{
    approx_belief, bayes_update_probs, chi2, exact_belief, hellinger2, kl, linf_ratio, obs_dist,
    push_forward, renyi2, tv,
};
use pomdp::gen::gen_random_observable;
use pomdp::model::{from_json, to_json, History};
use pomdp::smp::{pack_window, unpack_window};
use proptest::prelude::*;

/// A random probability vector with the given support size.
fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / sum).collect()
    })
}

proptest! {
    #[test]
    fn divergence_invariants((p, q) in (2usize..6).prop_flat_map(|n| (distribution(n), distribution(n)))) {
        let tv_pq = tv(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv_pq));
        prop_assert!((tv_pq - tv(&q, &p)).abs() < 1e-12);
        let kl_pq = kl(&p, &q);
        prop_assert!(kl_pq >= -1e-12);
        // Pinsker: 2 TV^2 <= KL.
        prop_assert!(2.0 * tv_pq * tv_pq <= kl_pq + 1e-9);
        let h2 = hellinger2(&p, &q);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&h2));
        prop_assert!((renyi2(&p, &q) - (1.0 + chi2(&p, &q)).ln()).abs() < 1e-12);
        prop_assert!((linf_ratio(&p, &p) - 1.0).abs() < 1e-12);
        // KL upper-bounded by the log infinity-ratio.
        prop_assert!(kl_pq <= linf_ratio(&p, &q).ln() + 1e-9);
    }

    #[test]
    fn model_json_round_trip(seed in 0u64..200, s in 2usize..5, a in 1usize..3, h in 2usize..6) {
        let m = gen_random_observable(s, a, h, 0.5, seed).unwrap();
        let loaded = from_json(&to_json(&m)).unwrap();
        prop_assert_eq!(m, loaded);
    }

    #[test]
    fn window_packing_round_trip(
        (a_n, o_n, w, seed) in (1usize..5, 1usize..6, 0usize..7, 0u64..1000)
    ) {
        let mut acc = seed;
        let actions: Vec<usize> = (0..w).map(|i| { acc = acc.wrapping_mul(6364136223846793005).wrapping_add(i as u64); (acc >> 33) as usize % a_n }).collect();
        let observations: Vec<usize> = (0..w).map(|i| { acc = acc.wrapping_mul(6364136223846793005).wrapping_add(i as u64 + 7); (acc >> 33) as usize % o_n }).collect();
        let key = pack_window(&actions, &observations, a_n, o_n);
        let (a2, o2) = unpack_window(key, w, a_n, o_n);
        prop_assert_eq!(actions, a2);
        prop_assert_eq!(observations, o2);
    }

    #[test]
    fn posteriors_stay_normalized(seed in 0u64..100, y in 0usize..3, a in 0usize..2) {
        let m = gen_random_observable(3, 2, 4, 0.4, seed).unwrap();
        let pushed = push_forward(&m, &m.initial_belief, 1, a);
        let post = bayes_update_probs(&m, &pushed, 2, y).unwrap();
        let sum: f64 = post.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(post.iter().all(|&v| v >= 0.0));
        let dist = obs_dist(&m, &pushed, 2);
        let total: f64 = dist.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_window_equals_exact(seed in 0u64..60) {
        let m = gen_random_observable(3, 2, 5, 0.5, seed).unwrap();
        // Walk a positive-probability history pseudo-derived from the seed.
        let mut hist = History::empty();
        let mut acc = seed;
        for h in 1..m.horizon {
            acc = acc.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            let a = (acc >> 33) as usize % m.num_actions;
            let b = exact_belief(&m, &hist).unwrap();
            let dist = obs_dist(&m, &push_forward(&m, &b.probs, h, a), h + 1);
            let y = dist
                .iter()
                .enumerate()
                .max_by(|x, z| x.1.partial_cmp(z.1).unwrap())
                .unwrap()
                .0;
            hist.push(a, y);
        }
        let exact = exact_belief(&m, &hist).unwrap();
        let windowed = approx_belief(&m, &hist.window(m.horizon - 1)).unwrap();
        for (e, w) in exact.probs.iter().zip(&windowed.probs) {
            prop_assert!((e - w).abs() < 1e-12);
        }
    }
}
