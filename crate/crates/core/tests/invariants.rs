use batchrobust::detect::{
    brute_force_detect, build_matrices, quad_form, relaxation_detect, MatrixTriple, RelaxationConfig, SymMatrix,
};
use batchrobust::model::{l1_distance, subset_prob};
use batchrobust::prune::delete_by_scores;
use batchrobust::stats::{collection_empirical, empirical_variance, median, variance_fn};
use batchrobust::{Batch, BatchCollection, Distribution, SubsetMask};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn distribution(k: usize) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(0.0f64..1.0, k)
        .prop_filter("needs mass", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| Distribution::from_weights(&w).unwrap())
}

/// Collections of `m` batches of `n` samples over `k` symbols, with the
/// counts of each batch drawn by splitting `n` at random cut points.
fn collection(
    k: std::ops::RangeInclusive<usize>,
    m: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = BatchCollection> {
    (k, m, 1u32..40).prop_flat_map(|(k, m, n)| {
        prop::collection::vec(prop::collection::vec(0..=n, k - 1), m).prop_map(move |cuts| {
            let batches = cuts
                .into_iter()
                .map(|mut c| {
                    c.sort_unstable();
                    let mut counts = Vec::with_capacity(k);
                    let mut prev = 0;
                    for x in c.into_iter().chain([n]) {
                        counts.push(x - prev);
                        prev = x;
                    }
                    Batch::new(counts).unwrap()
                })
                .collect();
            BatchCollection::new(batches).unwrap()
        })
    })
}

fn all_masks(k: usize) -> impl Iterator<Item = SubsetMask> {
    (1u64..(1 << k)).map(move |b| SubsetMask::from_bits(k, b))
}

/// Symmetric matrices with zero row sums: `P A P` with `P = I - 11'/k`.
fn centered_sym(k: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0f64..1.0, k * k).prop_map(move |a| {
        let row_mean: Vec<f64> = (0..k).map(|i| a[i * k..(i + 1) * k].iter().sum::<f64>() / k as f64).collect();
        let col_mean: Vec<f64> = (0..k).map(|j| (0..k).map(|i| a[i * k + j]).sum::<f64>() / k as f64).collect();
        let all = row_mean.iter().sum::<f64>() / k as f64;
        let v = (0..k * k).map(|t| a[t] - row_mean[t / k] - col_mean[t % k] + all).collect();
        SymMatrix::from_rows(k, v).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l1_is_twice_largest_subset_gap((p, q) in (2usize..=12).prop_flat_map(|k| (distribution(k), distribution(k)))) {
        let k = p.k();
        let widest = all_masks(k)
            .map(|s| (subset_prob(&p, &s).unwrap() - subset_prob(&q, &s).unwrap()).abs())
            .fold(0.0, f64::max);
        prop_assert!((l1_distance(&p, &q).unwrap() - 2.0 * widest).abs() < 1e-12);
    }

    #[test]
    fn subset_prob_is_additive(p in (2usize..=40).prop_flat_map(distribution), seed in any::<u64>()) {
        let k = p.k();
        let flags: Vec<u8> = (0..k).map(|i| ((seed >> (i % 64)) as u8 ^ i as u8) % 3).collect();
        let s = SubsetMask::from_indices(k, (0..k).filter(|&i| flags[i] == 1));
        let t = SubsetMask::from_indices(k, (0..k).filter(|&i| flags[i] == 2));
        let both = SubsetMask::from_indices(k, (0..k).filter(|&i| flags[i] != 0));
        let lhs = subset_prob(&p, &both).unwrap();
        let rhs = subset_prob(&p, &s).unwrap() + subset_prob(&p, &t).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        prop_assert!((subset_prob(&p, &both.complement()).unwrap() - (1.0 - lhs)).abs() < 1e-12);
    }

    #[test]
    fn variance_fn_is_bounded_and_symmetric(r in 0.0f64..=1.0, n in 1usize..5000) {
        let v = variance_fn(r, n).unwrap();
        prop_assert!(v >= 0.0 && v <= 0.25 / n as f64 + 1e-18);
        prop_assert!((v - variance_fn(1.0 - r, n).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn median_ignores_order(mut v in prop::collection::vec(-10.0f64..10.0, 1..40), rot in 0usize..40) {
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let want = median(&mut sorted.clone()).unwrap();
        let len = v.len();
        v.rotate_left(rot % len);
        v.reverse();
        prop_assert_eq!(median(&mut v).unwrap(), want);
        prop_assert!(sorted[0] <= want && want <= sorted[len - 1]);
    }

    #[test]
    fn matrix_rows_sum_to_zero(c in collection(2..=10, 2..=30)) {
        let t = build_matrices(&c).unwrap();
        for m in [&t.c_ev, &t.c_em, &t.d] {
            for i in 0..m.k() {
                prop_assert!(m.row(i).iter().sum::<f64>().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quadratic_forms_are_variances(c in collection(2..=8, 2..=20)) {
        let t = build_matrices(&c).unwrap();
        let n = c.n();
        for s in all_masks(c.k()) {
            let ev = empirical_variance(&c, &s).unwrap();
            let em = variance_fn(collection_empirical(&c, &s).unwrap(), n).unwrap();
            prop_assert!((t.c_ev.subset_quad(&s) - ev).abs() < 1e-9);
            prop_assert!((t.c_em.subset_quad(&s) - em).abs() < 1e-9);
            prop_assert!((quad_form(&t, &s) - (ev - em)).abs() < 1e-9);
        }
    }

    #[test]
    fn sign_vectors_give_quarter_form(c in collection(2..=8, 2..=20)) {
        let t = build_matrices(&c).unwrap();
        for s in all_masks(c.k()) {
            let y: Vec<f64> = s.indicator().iter().map(|x| 2.0 * x - 1.0).collect();
            let x: Vec<f64> = y.iter().map(|v| (v + 1.0) / 2.0).collect();
            for m in [&t.c_ev, &t.c_em, &t.d] {
                prop_assert!((m.quad(&x) - 0.25 * m.quad(&y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn complement_has_same_gap(c in collection(2..=10, 2..=30), bits in any::<u64>()) {
        let t = build_matrices(&c).unwrap();
        let k = c.k();
        let s = SubsetMask::from_bits(k, bits & ((1 << k) - 1));
        let full = quad_form(&t, &SubsetMask::full(k));
        prop_assert!(full.abs() < 1e-12);
        prop_assert!((quad_form(&t, &s) - quad_form(&t, &s.complement())).abs() < 1e-9);
    }

    #[test]
    fn relaxation_never_beats_exhaustive(d in (2usize..=10).prop_flat_map(centered_sym), seed in any::<u64>()) {
        let t = MatrixTriple::from_difference(d);
        let exact = brute_force_detect(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let relaxed = relaxation_detect(&t, &mut rng, &RelaxationConfig::default()).unwrap();
        prop_assert!(relaxed.abs_delta <= exact.abs_delta + 1e-12);
        prop_assert!(relaxed.abs_delta >= 0.56 * exact.abs_delta);
        prop_assert!((relaxed.abs_delta - quad_form(&t, &relaxed.subset).abs()).abs() < 1e-12);
    }

    #[test]
    fn deletion_postconditions(
        scores in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 1..200),
        threshold in 0.01f64..5.0,
        seed in any::<u64>(),
    ) {
        let pairs: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = delete_by_scores(&pairs, threshold, &mut rng);
        let initial: f64 = scores.iter().sum();
        let remaining: f64 = (0..scores.len()).filter(|i| !out.deleted.contains(i)).map(|i| scores[i]).sum();
        prop_assert!((out.initial_score - initial).abs() < 1e-9);
        prop_assert!(out.final_score < threshold || remaining == 0.0);
        prop_assert!((out.final_score - remaining).abs() < 1e-9);
        prop_assert!(out.deleted.iter().all(|&i| scores[i] > 0.0));
        // every score is at most 1
        prop_assert!(out.deleted.len() as f64 >= initial - threshold);
        let mut uniq = out.deleted.clone();
        uniq.sort_unstable();
        uniq.dedup();
        prop_assert_eq!(uniq.len(), out.deleted.len());
    }
}
