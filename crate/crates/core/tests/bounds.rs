mod common;

use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

use common::frac;
use ratdup::bounds::{
    classify_bound, classify_bound_by_name, duplication_decision, duplication_success_probability,
    ks_dup_expected_utility, ks_dup_expected_utility_sweep, ks_incentive, ks_max_duplication,
    ks_optimal_duplication, ks_raw_incentive, leader_dup_expected_utility, leader_incentive,
    BoundClass, KnowledgeBound,
};
use ratdup::engine::ProblemKind;

fn kb(alpha: usize, beta: usize) -> KnowledgeBound {
    KnowledgeBound { alpha, beta }
}

fn bound() -> impl Strategy<Value = KnowledgeBound> {
    (3usize..40)
        .prop_flat_map(|a| (Just(a), a..3 * a))
        .prop_map(|(a, b)| kb(a, b))
}

fn payoff(k: u64) -> impl Strategy<Value = BigRational> {
    (1i64..=12)
        .prop_flat_map(move |den| (1..=den).prop_map(move |num| frac(num, den)))
        .prop_filter("above 1/k", move |x| *x > frac(1, k as i64))
}

#[test]
fn leader_worked_examples() {
    assert_eq!(
        duplication_success_probability(kb(3, 4), 2).unwrap(),
        frac(1, 2)
    );
    assert_eq!(
        duplication_success_probability(kb(3, 5), 2).unwrap(),
        frac(2, 3)
    );
    assert_eq!(
        duplication_success_probability(kb(3, 3), 2).unwrap(),
        BigRational::zero()
    );
    assert_eq!(
        duplication_success_probability(kb(3, 9), 1).unwrap(),
        BigRational::one()
    );
    assert_eq!(
        leader_dup_expected_utility(kb(3, 4), 3, 2).unwrap(),
        frac(1, 4)
    );
    assert!(!leader_incentive(kb(3, 4), 3).unwrap());
    assert_eq!(
        leader_dup_expected_utility(kb(3, 5), 3, 2).unwrap(),
        frac(1, 3)
    );
    assert!(!leader_incentive(kb(3, 5), 3).unwrap());
    assert_eq!(
        leader_dup_expected_utility(kb(4, 6), 4, 2).unwrap(),
        frac(4, 15)
    );
    assert!(leader_incentive(kb(4, 6), 4).unwrap());
    assert!(leader_dup_expected_utility(kb(3, 5), 6, 2).is_err());
}

#[test]
fn decision_examples() {
    assert!(duplication_decision(&frac(1, 4), &frac(1, 2), &frac(2, 3)).unwrap());
    assert!(!duplication_decision(&frac(1, 3), &frac(1, 2), &frac(2, 3)).unwrap());
    assert!(!duplication_decision(&frac(1, 2), &BigRational::one(), &frac(1, 2)).unwrap());
    assert!(duplication_decision(&frac(3, 2), &frac(1, 2), &frac(1, 2)).is_err());
}

#[test]
fn overshooting_argmax_example() {
    // Past the largest size, every run of the widest segment fails, so the
    // sweep favours the smallest segment while the closed form keeps d*.
    let b = kb(3, 8);
    let x = frac(1, 2);
    let sweep: Vec<BigRational> = (3..=ks_max_duplication(b))
        .map(|d| ks_dup_expected_utility_sweep(b, d, 3, &x))
        .collect();
    assert_eq!(sweep[0], frac(2, 9));
    assert!(sweep.iter().all(|v| *v <= sweep[0]));
    let opt = ks_optimal_duplication(b, 3, &x).unwrap();
    assert_eq!(opt.d_star, 5);
    assert_eq!(opt.payoff, frac(1, 6));
    assert_eq!(sweep[2], frac(1, 6));
}

#[test]
fn classification_table() {
    assert_eq!(
        classify_bound(ProblemKind::Coloring),
        BoundClass::InfinityBound
    );
    assert_eq!(
        classify_bound(ProblemKind::Orientation),
        BoundClass::Unbounded
    );
    assert_eq!(
        classify_bound_by_name("leader election")
            .unwrap()
            .to_string(),
        "α+1"
    );
    assert_eq!(
        classify_bound_by_name("Knowledge-Sharing")
            .unwrap()
            .to_string(),
        "2α-2"
    );
    assert!(classify_bound_by_name("sorting").is_err());
}

proptest! {
    #[test]
    fn closed_form_matches_the_sweep_at_d_star(b in bound(), k in 2u64..12, x in payoff(12)) {
        prop_assume!(x > frac(1, k as i64));
        let opt = ks_optimal_duplication(b, k, &x).unwrap();
        prop_assume!(opt.feasible);
        prop_assert_eq!(opt.d_star, b.beta / 2 + 1);
        prop_assert_eq!(&opt.payoff, &ks_dup_expected_utility_sweep(b, opt.d_star, k, &x));
        prop_assert_eq!(&opt.payoff, &ks_dup_expected_utility(b, opt.d_star, k, &x).unwrap());
    }

    #[test]
    fn two_outputs_never_pay(b in bound(), x in payoff(2)) {
        prop_assert!(!ks_incentive(b, 2, &x).unwrap());
    }

    #[test]
    fn wider_bounds_only_add_incentive(alpha in 3usize..40, beta in 3usize..120) {
        prop_assume!(beta >= alpha);
        if ks_raw_incentive(kb(alpha, beta)) {
            prop_assert!(ks_raw_incentive(kb(alpha, beta + 1)));
        }
        prop_assert_eq!(ks_raw_incentive(kb(alpha, beta)), beta >= 2 * alpha);
        for p in ProblemKind::ALL {
            let c = classify_bound(p);
            if !c.admits(kb(alpha, beta)) {
                prop_assert!(!c.admits(kb(alpha, beta + 1)));
            }
        }
    }

    #[test]
    fn success_probability_counts_sizes(b in bound(), d in 1usize..80) {
        let good = (b.alpha..=b.beta).filter(|n| d + n - 1 <= b.beta).count() as i64;
        prop_assert_eq!(
            duplication_success_probability(b, d).unwrap(),
            frac(good, (b.beta - b.alpha + 1) as i64)
        );
    }

    #[test]
    fn sweep_lies_in_the_unit_interval(b in bound(), k in 2u64..12, x in payoff(2), d in 1usize..80) {
        let v = ks_dup_expected_utility_sweep(b, d, k, &x);
        prop_assert!(v >= BigRational::zero() && v <= BigRational::one());
    }
}
