//! Tabled resolution against a naive bottom-up fixpoint.

use std::collections::BTreeSet;

use nmp_core::logic::{parse_deterministic, read_term, solve, Limits, Term};
use proptest::prelude::*;

const RULES: [&str; 4] = [
    // right recursion
    "path(X,Y) :- edge(X,Y).\npath(X,Y) :- edge(X,Z), path(Z,Y).",
    // left recursion
    "path(X,Y) :- path(X,Z), edge(Z,Y).\npath(X,Y) :- edge(X,Y).",
    // double recursion
    "path(X,Y) :- edge(X,Y).\npath(X,Y) :- path(X,Z), path(Z,Y).",
    // mutual recursion through a second predicate
    "path(X,Y) :- edge(X,Y).\npath(X,Y) :- hop(X,Z), path(Z,Y).\nhop(X,Y) :- path(X,Y).",
];

/// Transitive closure by iterating to a fixpoint.
fn closure(edges: &BTreeSet<(u8, u8)>) -> BTreeSet<(u8, u8)> {
    let mut path = edges.clone();
    loop {
        let mut next = path.clone();
        for &(a, b) in &path {
            for &(c, d) in edges {
                if b == c {
                    next.insert((a, d));
                }
            }
        }
        if next == path {
            return path;
        }
        path = next;
    }
}

fn program(edges: &BTreeSet<(u8, u8)>, rules: &str) -> String {
    let mut s: String = edges.iter().map(|(a, b)| format!("edge(n{a},n{b}).\n")).collect();
    s.push_str(rules);
    s
}

fn pairs(answers: &[nmp_core::logic::Substitution]) -> BTreeSet<(String, String)> {
    answers
        .iter()
        .map(|s| (s.get("X").unwrap().to_string(), s.get("Y").unwrap().to_string()))
        .collect()
}

fn named(set: &BTreeSet<(u8, u8)>) -> BTreeSet<(String, String)> {
    set.iter().map(|(a, b)| (format!("n{a}"), format!("n{b}"))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursive_paths_match_fixpoint(
        raw in proptest::collection::btree_set((0u8..6, 0u8..6), 0..14),
        variant in 0usize..4,
    ) {
        let clauses = parse_deterministic(&program(&raw, RULES[variant])).unwrap();
        let goal = read_term("path(X,Y)").unwrap();
        let got = pairs(&solve(&clauses, &[goal], &Limits::default()).unwrap());
        prop_assert_eq!(got, named(&closure(&raw)));
    }

    #[test]
    fn bound_first_argument(
        raw in proptest::collection::btree_set((0u8..6, 0u8..6), 0..14),
        variant in 0usize..4,
        start in 0u8..6,
    ) {
        let clauses = parse_deterministic(&program(&raw, RULES[variant])).unwrap();
        let goal = read_term(&format!("path(n{start},Y)")).unwrap();
        let got: BTreeSet<String> = solve(&clauses, &[goal], &Limits::default())
            .unwrap()
            .iter()
            .map(|s| s.get("Y").unwrap().to_string())
            .collect();
        let want: BTreeSet<String> = closure(&raw).iter().filter(|p| p.0 == start).map(|p| format!("n{}", p.1)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn answers_are_sorted_and_repeatable(raw in proptest::collection::btree_set((0u8..5, 0u8..5), 0..10)) {
        let clauses = parse_deterministic(&program(&raw, RULES[1])).unwrap();
        let goal = read_term("path(X,Y)").unwrap();
        let a = solve(&clauses, std::slice::from_ref(&goal), &Limits::default()).unwrap();
        let b = solve(&clauses, &[goal], &Limits::default()).unwrap();
        prop_assert_eq!(&a, &b);
        let listed: Vec<(String, String)> = a.iter().map(|s| (s.get("X").unwrap().to_string(), s.get("Y").unwrap().to_string())).collect();
        let set = pairs(&a);
        prop_assert_eq!(listed.len(), set.len());
    }
}

#[test]
fn cycle_terminates() {
    let clauses = parse_deterministic(&format!("edge(a,b).\nedge(b,a).\n{}", RULES[2])).unwrap();
    let r = solve(&clauses, &[read_term("path(a,Y)").unwrap()], &Limits::default()).unwrap();
    let ys: Vec<Term> = r.iter().map(|s| s.get("Y").unwrap().clone()).collect();
    assert_eq!(ys, [Term::atom("a"), Term::atom("b")]);
}
