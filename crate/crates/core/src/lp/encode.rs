//! Linear encoding of the relaxation φ.
//!
//! Every ∧ or ∨ node gets a column `z` bounded in `[0, 1]` and rows that keep
//! `z` above `φ` of its children. The encodings are only exact for
//! minimisation: `z` is pushed down to `φ` because it appears downstream with
//! nonnegative coefficients.
//!
//! Chains of the same operator are encoded with a single column. Both
//! operators are associative under φ (`max(0, x + y + w - 2)` and
//! `max(x, y, w)`), so this is exact and keeps the program small.

use std::collections::HashMap;

use super::simplex::{LinearProgram, Relation};
use crate::expr::{Expr, ParticipantId};

/// An affine leaf of the encoding: either a constant or an LP column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Const(f64),
    Col(usize),
}

/// Encodes `φ_k` into `lp`, returning the term that equals `φ_k(f)` at a
/// minimising optimum. `var` maps each participant to its `f_p` term.
pub fn encode_phi<F>(lp: &mut LinearProgram, k: &Expr, var: &F) -> Term
where
    F: Fn(&ParticipantId) -> Term,
{
    let mut memo = HashMap::new();
    encode(lp, k, var, &mut memo)
}

fn encode<'a, F>(
    lp: &mut LinearProgram,
    k: &'a Expr,
    var: &F,
    memo: &mut HashMap<&'a Expr, Term>,
) -> Term
where
    F: Fn(&ParticipantId) -> Term,
{
    if let Some(&t) = memo.get(k) {
        return t;
    }
    let term = match k {
        Expr::True => Term::Const(1.0),
        Expr::False => Term::Const(0.0),
        Expr::Var(p) => var(p),
        Expr::And(..) => {
            let mut leaves = Vec::new();
            chain(k, true, &mut leaves);
            let n = leaves.len() as f64;
            let mut cols = Vec::new();
            let mut constant = 0.0;
            for leaf in leaves {
                match encode(lp, leaf, var, memo) {
                    Term::Const(c) => constant += c,
                    Term::Col(j) => cols.push(j),
                }
            }
            // φ = max(0, Σ cols + constant - (n - 1))
            let shift = constant - (n - 1.0);
            if cols.is_empty() {
                Term::Const(shift.max(0.0))
            } else if cols.len() == 1 && shift == 0.0 {
                Term::Col(cols[0])
            } else {
                let z = lp.add_var(0.0, 1.0, 0.0);
                let mut row: Vec<(usize, f64)> = cols.into_iter().map(|j| (j, 1.0)).collect();
                row.push((z, -1.0));
                lp.add_constraint(row, Relation::Le, -shift);
                Term::Col(z)
            }
        }
        Expr::Or(..) => {
            let mut leaves = Vec::new();
            chain(k, false, &mut leaves);
            let mut cols = Vec::new();
            let mut constant: f64 = 0.0;
            for leaf in leaves {
                match encode(lp, leaf, var, memo) {
                    Term::Const(c) => constant = constant.max(c),
                    Term::Col(j) => cols.push(j),
                }
            }
            cols.sort_unstable();
            cols.dedup();
            if cols.is_empty() || constant >= 1.0 {
                Term::Const(constant.min(1.0))
            } else if cols.len() == 1 && constant <= 0.0 {
                Term::Col(cols[0])
            } else {
                let z = lp.add_var(constant, 1.0, 0.0);
                for j in cols {
                    lp.add_constraint(vec![(j, 1.0), (z, -1.0)], Relation::Le, 0.0);
                }
                Term::Col(z)
            }
        }
    };
    memo.insert(k, term);
    term
}

/// Operands of a maximal chain of ∧ (`conj`) or ∨ nodes rooted at `k`.
fn chain<'a>(k: &'a Expr, conj: bool, out: &mut Vec<&'a Expr>) {
    match (k, conj) {
        (Expr::And(x, y), true) | (Expr::Or(x, y), false) => {
            chain(x, conj, out);
            chain(y, conj, out);
        }
        _ => out.push(k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::RealAssignment;
    use crate::lp::LpStatus;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Minimises the encoded term with `f` pinned, returning the optimum.
    fn pinned_value(k: &Expr, f: &RealAssignment) -> f64 {
        let mut lp = LinearProgram::new();
        let mut cols = HashMap::new();
        for (p, &v) in f {
            cols.insert(p.clone(), lp.add_var(v, v, 0.0));
        }
        let t = encode_phi(&mut lp, k, &|p: &ParticipantId| Term::Col(cols[p]));
        match t {
            Term::Const(c) => c,
            Term::Col(j) => {
                lp.set_cost(j, 1.0);
                let s = lp.solve().unwrap();
                assert_eq!(s.status, LpStatus::Optimal);
                s.objective
            }
        }
    }

    fn assignment(pairs: &[(&str, f64)]) -> RealAssignment {
        pairs.iter().map(|&(p, v)| (ParticipantId::new(p).unwrap(), v)).collect()
    }

    #[test]
    fn variable_needs_no_rows() {
        let mut lp = LinearProgram::new();
        let fa = lp.add_var(0.0, 1.0, 0.0);
        let t = encode_phi(&mut lp, &"a".parse().unwrap(), &|_: &ParticipantId| Term::Col(fa));
        assert_eq!(t, Term::Col(fa));
        assert_eq!(lp.num_constraints(), 0);
        assert_eq!(lp.num_vars(), 1);
    }

    #[test]
    fn conjunction_and_disjunction_values() {
        let f = assignment(&[("a", 0.6), ("b", 0.6)]);
        assert!((pinned_value(&"a & b".parse().unwrap(), &f) - 0.2).abs() < 1e-12);
        let f = assignment(&[("a", 0.3), ("b", 0.7)]);
        assert!((pinned_value(&"a | b".parse().unwrap(), &f) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn shared_subtrees_are_encoded_once() {
        let k: Expr = "((a | b) & c) | ((a | b) & d)".parse().unwrap();
        let mut lp = LinearProgram::new();
        let cols: HashMap<&str, usize> =
            ["a", "b", "c", "d"].iter().map(|&p| (p, lp.add_var(0.0, 1.0, 0.0))).collect();
        encode_phi(&mut lp, &k, &|p: &ParticipantId| Term::Col(cols[p.as_str()]));
        // one column each for a|b, the two conjunctions and the root
        assert_eq!(lp.num_vars(), 4 + 4);
    }

    #[test]
    fn matches_phi_on_random_points() {
        let exprs = [
            "a & b & c",
            "(a | b) & (c | d)",
            "(a & b) | (b & c & d) | true",
            "a & (b | (c & (d | a)))",
            "(a & false) | (b & true)",
            "a & a",
            "(a | a) & (b | c)",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for text in exprs {
            let k: Expr = text.parse().unwrap();
            for _ in 0..50 {
                let f = assignment(&[
                    ("a", rng.gen()),
                    ("b", rng.gen()),
                    ("c", rng.gen()),
                    ("d", rng.gen()),
                ]);
                let want = k.phi(&f).unwrap();
                let got = pinned_value(&k, &f);
                assert!((want - got).abs() < 1e-9, "{text}: {want} vs {got}");
            }
        }
    }
}
