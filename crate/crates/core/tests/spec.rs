use std::collections::BTreeMap;

use proptest::prelude::*;
use swarmsynth::spec::{eval_prop, parse_gr1, parse_prop, PropFormula, Valuation};

const ATOMS: [&str; 4] = ["a", "b", "home", "battery"];

fn formula() -> impl Strategy<Value = PropFormula> {
    let leaf = prop_oneof![
        Just(PropFormula::True),
        Just(PropFormula::False),
        (0usize..4).prop_map(|k| PropFormula::atom(ATOMS[k])),
        (0usize..4).prop_map(|k| PropFormula::next(ATOMS[k])),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(PropFormula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| PropFormula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| PropFormula::or(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| PropFormula::implies(a, b)),
        ]
    })
}

/// Truth-table semantics, written out independently of the library.
fn truth(f: &PropFormula, now: &Valuation, next: &Valuation) -> bool {
    match f {
        PropFormula::True => true,
        PropFormula::False => false,
        PropFormula::Atom(a) => now[a],
        PropFormula::Next(a) => next[a],
        PropFormula::Not(a) => !truth(a, now, next),
        PropFormula::And(a, b) => truth(a, now, next) && truth(b, now, next),
        PropFormula::Or(a, b) => truth(a, now, next) || truth(b, now, next),
        PropFormula::Implies(a, b) => !truth(a, now, next) || truth(b, now, next),
    }
}

fn valuation(bits: u32) -> Valuation {
    ATOMS.iter().enumerate().map(|(k, a)| (a.to_string(), bits >> k & 1 == 1)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn printer_and_parser_round_trip(f in formula()) {
        let text = f.to_string();
        let back = parse_prop(&text).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(parse_prop(&back.to_string()).unwrap(), back);
    }

    #[test]
    fn evaluation_matches_truth_tables(f in formula()) {
        for now in 0..16 {
            for next in 0..16 {
                let (v, n) = (valuation(now), valuation(next));
                prop_assert_eq!(eval_prop(&f, &v, Some(&n)).unwrap(), truth(&f, &v, &n));
            }
        }
    }
}

#[test]
fn missing_atoms_are_errors() {
    let f = parse_prop("a & X(b)").unwrap();
    let empty = BTreeMap::new();
    assert!(eval_prop(&f, &empty, Some(&valuation(0))).is_err());
    assert!(eval_prop(&f, &valuation(1), None).is_err());
    assert!(!eval_prop(&f, &valuation(1), Some(&valuation(0))).unwrap());
}

#[test]
fn case_study_assumption_allows_recharge_at_home() {
    let f = parse_prop("!battery & home -> X(battery)").unwrap();
    let now: Valuation = [("battery".to_string(), false), ("home".to_string(), true)].into();
    let next: Valuation = [("battery".to_string(), true)].into();
    assert!(eval_prop(&f, &now, Some(&next)).unwrap());
    let next: Valuation = [("battery".to_string(), false)].into();
    assert!(!eval_prop(&f, &now, Some(&next)).unwrap());
}

#[test]
fn gr1_document_round_trips() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs/paper_patrol.spec");
    let spec = parse_gr1(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(spec.env_safety.len(), 2);
    assert_eq!(spec.sys_justice.len(), 2);
    assert_eq!(spec.env_justice, vec![PropFormula::True]);
    let again = parse_gr1(&spec.to_text()).unwrap();
    assert_eq!(again, spec);
}
