use ppm_core::labeling::{eval_on_activities, LtlFormula};
use proptest::prelude::*;

fn letters() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..=8)
}

fn formula() -> impl Strategy<Value = LtlFormula> {
    let leaf = prop::sample::select(vec!["a", "b", "c"]).prop_map(LtlFormula::atom);
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(LtlFormula::not),
            inner.clone().prop_map(LtlFormula::next),
            inner.clone().prop_map(LtlFormula::eventually),
            inner.clone().prop_map(LtlFormula::globally),
            (inner.clone(), inner.clone()).prop_map(|(f, g)| LtlFormula::and(f, g)),
            (inner.clone(), inner.clone()).prop_map(|(f, g)| LtlFormula::or(f, g)),
            (inner.clone(), inner.clone()).prop_map(|(f, g)| LtlFormula::implies(f, g)),
            (inner.clone(), inner).prop_map(|(f, g)| LtlFormula::until(f, g)),
        ]
    })
}

fn truth(f: &LtlFormula) -> LtlFormula {
    LtlFormula::or(f.clone(), LtlFormula::not(f.clone()))
}

proptest! {
    #[test]
    fn eventually_globally_duality(acts in letters(), f in formula()) {
        let lhs = LtlFormula::not(LtlFormula::eventually(f.clone()));
        let rhs = LtlFormula::globally(LtlFormula::not(f));
        prop_assert_eq!(lhs.truth_table(&acts), rhs.truth_table(&acts));
    }

    #[test]
    fn eventually_is_true_until(acts in letters(), f in formula()) {
        let until = LtlFormula::until(truth(&f), f.clone());
        prop_assert_eq!(until.truth_table(&acts), LtlFormula::eventually(f).truth_table(&acts));
    }

    #[test]
    fn next_fails_at_last_position(acts in letters(), f in formula()) {
        let x = LtlFormula::next(f);
        prop_assert!(!eval_on_activities(&acts, &x, acts.len()).unwrap());
    }

    #[test]
    fn display_round_trips(f in formula()) {
        prop_assert_eq!(LtlFormula::parse(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn position_out_of_range_errors(acts in letters(), f in formula()) {
        prop_assert!(eval_on_activities(&acts, &f, 0).is_err());
        prop_assert!(eval_on_activities(&acts, &f, acts.len() + 1).is_err());
    }
}
