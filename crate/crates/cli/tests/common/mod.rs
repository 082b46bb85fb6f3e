#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use recmech::expr::{Expr, ParticipantId, RealAssignment};
use recmech::krelation::{AnnotatedRelation, Schema};

pub fn pid(name: &str) -> ParticipantId {
    ParticipantId::new(name).unwrap()
}

pub fn var(i: usize) -> ParticipantId {
    pid(&format!("p{i}"))
}

/// Random positive expression over `p0..p{nvars-1}` of depth at most `depth`.
pub fn gen_expr(rng: &mut impl Rng, nvars: usize, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..10) {
            0 => Expr::True,
            1 => Expr::False,
            _ => Expr::Var(var(rng.gen_range(0..nvars))),
        };
    }
    let x = gen_expr(rng, nvars, depth - 1);
    let y = gen_expr(rng, nvars, depth - 1);
    if rng.gen_bool(0.5) {
        Expr::and(x, y)
    } else {
        Expr::or(x, y)
    }
}

pub fn gen_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.gen_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen(),
        })
        .collect()
}

pub fn assignment(values: &[f64]) -> RealAssignment {
    values.iter().enumerate().map(|(i, &v)| (var(i), v)).collect()
}

pub fn relation(n: usize, annotations: Vec<Expr>) -> AnnotatedRelation {
    let schema = Schema::new(["T"]).unwrap();
    let rows = annotations.into_iter().enumerate().map(|(i, k)| (vec![format!("t{i}")], k));
    let ps: BTreeSet<ParticipantId> = (0..n).map(var).collect();
    AnnotatedRelation::new(schema, rows, Some(ps)).unwrap()
}

/// Relation over `1..=max_p` participants with up to `max_rows` rows.
pub fn gen_relation(rng: &mut impl Rng, max_p: usize, max_rows: usize, depth: u32) -> AnnotatedRelation {
    let n = rng.gen_range(1..=max_p);
    let rows = rng.gen_range(0..=max_rows);
    relation(n, (0..rows).map(|_| gen_expr(rng, n, depth)).collect())
}

pub fn has_disjunction(k: &Expr) -> bool {
    match k {
        Expr::Or(..) => true,
        Expr::And(x, y) => has_disjunction(x) || has_disjunction(y),
        _ => false,
    }
}

pub fn relation_has_disjunction(r: &AnnotatedRelation) -> bool {
    r.tuples().any(|(_, k)| has_disjunction(k))
}

/// Applies one identity, annihilator, associativity or distributivity rewrite
/// (either direction) at a random node.
pub fn transform(k: &Expr, rng: &mut impl Rng, nvars: usize) -> Expr {
    let target = rng.gen_range(0..k.size());
    let mut counter = 0;
    rewrite_at(k, target, &mut counter, rng, nvars)
}

fn rewrite_at(k: &Expr, target: usize, counter: &mut usize, rng: &mut impl Rng, nvars: usize) -> Expr {
    let here = *counter;
    *counter += 1;
    if here == target {
        return rewrite_node(k, rng, nvars);
    }
    match k {
        Expr::And(x, y) => {
            let x = rewrite_at(x, target, counter, rng, nvars);
            Expr::and(x, rewrite_at(y, target, counter, rng, nvars))
        }
        Expr::Or(x, y) => {
            let x = rewrite_at(x, target, counter, rng, nvars);
            Expr::or(x, rewrite_at(y, target, counter, rng, nvars))
        }
        leaf => leaf.clone(),
    }
}

fn rewrite_node(k: &Expr, rng: &mut impl Rng, nvars: usize) -> Expr {
    use Expr::*;
    let c = |e: &Expr| e.clone();
    let mut options: Vec<Expr> = vec![Expr::and(c(k), True), Expr::or(c(k), False)];
    let filler = gen_expr(rng, nvars, 2);
    match k {
        False => options.push(Expr::and(filler, False)),
        True => options.push(Expr::or(filler, True)),
        _ => {}
    }
    match k {
        And(x, y) => {
            if **y == True {
                options.push(c(x));
            }
            if **y == False {
                options.push(False);
            }
            if let And(a, b) = &**y {
                options.push(Expr::and(Expr::and(c(x), c(a)), c(b)));
            }
            if let And(a, b) = &**x {
                options.push(Expr::and(c(a), Expr::and(c(b), c(y))));
            }
            if let Or(a, b) = &**y {
                options.push(Expr::or(Expr::and(c(x), c(a)), Expr::and(c(x), c(b))));
            }
        }
        Or(x, y) => {
            if **y == False {
                options.push(c(x));
            }
            if **y == True {
                options.push(True);
            }
            if let Or(a, b) = &**y {
                options.push(Expr::or(Expr::or(c(x), c(a)), c(b)));
            }
            if let Or(a, b) = &**x {
                options.push(Expr::or(c(a), Expr::or(c(b), c(y))));
            }
            if let (And(a, b), And(cc, d)) = (&**x, &**y) {
                if a == cc {
                    options.push(Expr::and(c(a), Expr::or(c(b), c(d))));
                }
            }
        }
        _ => {}
    }
    options.swap_remove(rng.gen_range(0..options.len()))
}
