//! Property tests for the algebraic invariants the selection procedures
//! rely on.

use std::collections::BTreeSet;

use proptest::prelude::*;

use mlkf_core::filter::candidate_grid;
use mlkf_core::importance::Combiner;
use mlkf_core::model::{induce_group_selections, LayerSpec};
use mlkf_core::pfilter::{bh, fisher, simes};

fn arb_partition(n: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    // random group sizes chunked over 0..n
    proptest::collection::vec(1usize..4, 1..=n)
        .prop_map(move |sizes| {
            let mut groups = Vec::new();
            let mut j = 0;
            let mut it = sizes.into_iter();
            while j < n {
                let take = it.next().unwrap_or(1).min(n - j);
                groups.push((j..j + take).collect());
                j += take;
            }
            groups
        })
}

proptest! {
    #[test]
    fn induction_is_monotone(
        bits_small in proptest::collection::vec(any::<bool>(), 12),
        extra in proptest::collection::vec(any::<bool>(), 12),
        partition in arb_partition(12),
    ) {
        let spec = LayerSpec::new(12, vec![LayerSpec::singleton_partition(12), partition]).unwrap();
        let small: BTreeSet<usize> = bits_small
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| j)
            .collect();
        let mut big = small.clone();
        for (j, &b) in extra.iter().enumerate() {
            if b {
                big.insert(j);
            }
        }
        let s = induce_group_selections(&small, &spec).unwrap();
        let b = induce_group_selections(&big, &spec).unwrap();
        for m in 0..spec.num_layers() {
            prop_assert!(s.groups(m).is_subset(b.groups(m)));
        }
        // singleton layer: groups are exactly the variables
        prop_assert_eq!(s.groups(0), &small);
    }

    #[test]
    fn combiners_antisymmetric(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        for comb in [Combiner::Difference, Combiner::SignedMax] {
            prop_assert_eq!(comb.apply(a, b), -comb.apply(b, a));
            prop_assert_eq!(comb.apply(a, a), 0.0);
        }
        // signed-max magnitude is the larger argument whenever they differ
        if a != b {
            prop_assert_eq!(Combiner::SignedMax.apply(a, b).abs(), a.max(b));
        }
    }

    #[test]
    fn candidate_grid_sorted_unique_positive(w in proptest::collection::vec(-5.0f64..5.0, 0..40)) {
        let grid = candidate_grid(&w);
        prop_assert!(grid.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(grid.iter().all(|&t| t > 0.0));
        let nonzero: BTreeSet<u64> = w
            .iter()
            .filter(|v| **v != 0.0)
            .map(|v| v.abs().to_bits())
            .collect();
        prop_assert_eq!(grid.len(), nonzero.len());
    }

    #[test]
    fn simes_fisher_in_unit_interval_and_monotone(
        p in proptest::collection::vec(0.0f64..=1.0, 1..8),
        idx in any::<prop::sample::Index>(),
        shrink in 0.0f64..1.0,
    ) {
        let s = simes(&p).unwrap();
        let f = fisher(&p).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((0.0..=1.0).contains(&f));
        // decreasing one input never increases the output
        let mut lowered = p.clone();
        let i = idx.index(lowered.len());
        lowered[i] *= shrink;
        prop_assert!(simes(&lowered).unwrap() <= s + 1e-12);
        prop_assert!(fisher(&lowered).unwrap().value <= f + 1e-12);
    }

    #[test]
    fn bh_rejections_are_step_up_consistent(
        p in proptest::collection::vec(0.0f64..=1.0, 1..20),
        q in 0.01f64..0.5,
    ) {
        let rejected = bh(&p, q).unwrap();
        let n = p.len() as f64;
        let k = rejected.len();
        if k > 0 {
            // every rejected p-value is at most the step-up cutoff
            let cutoff = k as f64 * q / n;
            prop_assert!(rejected.iter().all(|&j| p[j] <= cutoff));
            // and exactly the k smallest were rejected
            let mut sorted = p.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            prop_assert!(rejected.iter().all(|&j| p[j] <= sorted[k - 1]));
        } else {
            // no k satisfies the step-up inequality
            let mut sorted = p.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            for (i, &pi) in sorted.iter().enumerate() {
                prop_assert!(pi > (i as f64 + 1.0) * q / n);
            }
        }
        // monotone in q
        let bigger = bh(&p, (q * 1.5).min(0.9)).unwrap();
        let small_set: BTreeSet<usize> = rejected.into_iter().collect();
        let big_set: BTreeSet<usize> = bigger.into_iter().collect();
        prop_assert!(small_set.is_subset(&big_set));
    }
}
