#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use recmech::expr::{Expr, ParticipantId, RealAssignment};
use recmech::krelation::{AnnotatedRelation, Schema};

pub fn pid(name: &str) -> ParticipantId {
    ParticipantId::new(name).unwrap()
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

/// Positive Boolean expressions over `p0..p{nvars-1}` with the given depth bound.
pub fn arb_expr(nvars: usize, depth: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        1 => Just(Expr::True),
        1 => Just(Expr::False),
        8 => (0..nvars).prop_map(|i| Expr::Var(pid(&format!("p{i}")))),
    ];
    leaf.prop_recursive(depth, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(x, y)| Expr::and(x, y)),
            (inner.clone(), inner).prop_map(|(x, y)| Expr::or(x, y)),
        ]
    })
}

/// Values in `[0, 1]` for every participant, with exact 0/1 fairly often.
pub fn arb_point(nvars: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![1 => Just(0.0), 1 => Just(1.0), 4 => 0.0..=1.0f64],
        nvars,
    )
}

pub fn assignment(values: &[f64]) -> RealAssignment {
    values.iter().enumerate().map(|(i, &v)| (pid(&format!("p{i}")), v)).collect()
}

/// Relation with schema `T`, participants `p0..p{n-1}`, up to `rows` rows.
pub fn arb_relation(max_participants: usize, rows: usize, depth: u32) -> impl Strategy<Value = AnnotatedRelation> {
    (1..=max_participants).prop_flat_map(move |n| {
        prop::collection::vec(arb_expr(n, depth), 0..=rows).prop_map(move |ks| relation(n, ks))
    })
}

pub fn relation(n: usize, annotations: Vec<Expr>) -> AnnotatedRelation {
    let schema = Schema::new(["T"]).unwrap();
    let rows = annotations.into_iter().enumerate().map(|(i, k)| (vec![format!("t{i}")], k));
    let ps: BTreeSet<ParticipantId> = names(n).iter().map(|s| pid(s)).collect();
    AnnotatedRelation::new(schema, rows, Some(ps)).unwrap()
}

pub fn bool_assignment(vars: &[ParticipantId], mask: usize) -> HashMap<ParticipantId, bool> {
    vars.iter().enumerate().map(|(i, p)| (p.clone(), mask >> i & 1 == 1)).collect()
}

/// Relations whose annotations are conjunctions of distinct participants.
pub fn arb_conjunctive_relation(max_participants: usize, rows: usize) -> impl Strategy<Value = AnnotatedRelation> {
    (1..=max_participants).prop_flat_map(move |n| {
        prop::collection::vec(prop::collection::btree_set(0..n, 1..=n), 0..=rows).prop_map(move |sets| {
            let ks = sets
                .into_iter()
                .map(|s| Expr::all(s.into_iter().map(|i| Expr::Var(pid(&format!("p{i}"))))))
                .collect();
            relation(n, ks)
        })
    })
}
