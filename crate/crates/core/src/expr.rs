//! Positive Boolean annotation expressions and their piecewise-linear relaxation.
//!
//! An [`Expr`] records the condition under which a tuple is present: a tree of
//! conjunctions and disjunctions over participant variables, with no negation.
//! The relaxation [`Expr::phi`] extends each expression from Boolean points to
//! `[0,1]^P`, mapping `x ∧ y` to `max(0, x + y - 1)` and `x ∨ y` to
//! `max(x, y)`. It agrees with [`Expr::evaluate`] on Boolean assignments and is
//! monotone and convex everywhere.
//!
//! The relaxation depends on how an expression is written, not only on its
//! truth table. Only identity, annihilator, associativity, distributivity of
//! `∧` over `∨` and child swaps leave it unchanged, so [`Expr::to_dnf`] never
//! applies absorption or idempotence.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Maximum number of distinct variables [`truth_equivalent`] will enumerate.
pub const TRUTH_TABLE_MAX_VARS: usize = 20;

/// Default clause limit for [`Expr::to_dnf`].
pub const DEFAULT_DNF_CLAUSE_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("invalid participant identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("variable {0} is not bound by the assignment")]
    Unbound(ParticipantId),
    #[error("expression has {found} variables, more than the limit of {limit}")]
    TooManyVariables { found: usize, limit: usize },
    #[error("disjunctive normal form exceeds {limit} clauses")]
    ClauseLimit { limit: usize },
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

/// Identifier of a participant whose data may be withdrawn.
///
/// Matches `[A-Za-z_][A-Za-z0-9_.-]*`. The words `true` and `false` are valid
/// identifiers but cannot be written as variables in the text grammar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParticipantId(String);

impl ParticipantId {
    pub fn new(name: impl Into<String>) -> Result<Self, ExprError> {
        let name = name.into();
        if is_identifier(&name) {
            Ok(ParticipantId(name))
        } else {
            Err(ExprError::InvalidIdentifier(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for ParticipantId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl FromStr for ParticipantId {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParticipantId::new(s)
    }
}

pub type BoolAssignment = HashMap<ParticipantId, bool>;

/// Values are expected in `[0,1]`; [`Expr::phi_star`] also accepts scaled values.
pub type RealAssignment = HashMap<ParticipantId, f64>;

/// Sum of the assigned values, written `|f|`.
pub fn mass(f: &RealAssignment) -> f64 {
    f.values().sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    True,
    False,
    Var(ParticipantId),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Result<Expr, ExprError> {
        Ok(Expr::Var(ParticipantId::new(name)?))
    }

    pub fn and(x: Expr, y: Expr) -> Expr {
        Expr::And(Box::new(x), Box::new(y))
    }

    pub fn or(x: Expr, y: Expr) -> Expr {
        Expr::Or(Box::new(x), Box::new(y))
    }

    /// Left-nested conjunction; `TRUE` for an empty iterator.
    pub fn all<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
        let mut it = items.into_iter();
        match it.next() {
            None => Expr::True,
            Some(first) => it.fold(first, Expr::and),
        }
    }

    /// Left-nested disjunction; `FALSE` for an empty iterator.
    pub fn any<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
        let mut it = items.into_iter();
        match it.next() {
            None => Expr::False,
            Some(first) => it.fold(first, Expr::or),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::True | Expr::False)
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::True | Expr::False | Expr::Var(_) => 1,
            Expr::And(x, y) | Expr::Or(x, y) => 1 + x.size() + y.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::True | Expr::False | Expr::Var(_) => 1,
            Expr::And(x, y) | Expr::Or(x, y) => 1 + x.depth().max(y.depth()),
        }
    }

    pub fn variables(&self) -> BTreeSet<&ParticipantId> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a ParticipantId>) {
        match self {
            Expr::True | Expr::False => {}
            Expr::Var(p) => {
                out.insert(p);
            }
            Expr::And(x, y) | Expr::Or(x, y) => {
                x.collect_vars(out);
                y.collect_vars(out);
            }
        }
    }

    pub fn contains_var(&self, p: &ParticipantId) -> bool {
        match self {
            Expr::True | Expr::False => false,
            Expr::Var(q) => q == p,
            Expr::And(x, y) | Expr::Or(x, y) => x.contains_var(p) || y.contains_var(p),
        }
    }

    /// Boolean semantics with `TRUE = 1` and `FALSE = 0`.
    pub fn evaluate(&self, f: &BoolAssignment) -> Result<bool, ExprError> {
        Ok(match self {
            Expr::True => true,
            Expr::False => false,
            Expr::Var(p) => *f.get(p).ok_or_else(|| ExprError::Unbound(p.clone()))?,
            Expr::And(x, y) => x.evaluate(f)? & y.evaluate(f)?,
            Expr::Or(x, y) => x.evaluate(f)? | y.evaluate(f)?,
        })
    }

    /// Replaces every occurrence of `p` with a constant. No simplification.
    pub fn substitute_const(&self, p: &ParticipantId, value: bool) -> Expr {
        match self {
            Expr::Var(q) if q == p => {
                if value {
                    Expr::True
                } else {
                    Expr::False
                }
            }
            Expr::True | Expr::False | Expr::Var(_) => self.clone(),
            Expr::And(x, y) => Expr::and(x.substitute_const(p, value), y.substitute_const(p, value)),
            Expr::Or(x, y) => Expr::or(x.substitute_const(p, value), y.substitute_const(p, value)),
        }
    }

    /// Removes constants with the identity and annihilator rules.
    ///
    /// The result is either a constant or contains no constant node.
    pub fn fold_constants(&self) -> Expr {
        match self {
            Expr::True | Expr::False | Expr::Var(_) => self.clone(),
            Expr::And(x, y) => match (x.fold_constants(), y.fold_constants()) {
                (Expr::False, _) | (_, Expr::False) => Expr::False,
                (Expr::True, e) | (e, Expr::True) => e,
                (a, b) => Expr::and(a, b),
            },
            Expr::Or(x, y) => match (x.fold_constants(), y.fold_constants()) {
                (Expr::True, _) | (_, Expr::True) => Expr::True,
                (Expr::False, e) | (e, Expr::False) => e,
                (a, b) => Expr::or(a, b),
            },
        }
    }

    /// Expands into an OR of ANDs by distributing `∧` over `∨`.
    ///
    /// Constants are folded first. Clauses keep repeated variables and are
    /// emitted in distribution order, each as a left-nested conjunction.
    pub fn to_dnf(&self, clause_limit: usize) -> Result<Expr, ExprError> {
        let folded = self.fold_constants();
        if folded.is_const() {
            return Ok(folded);
        }
        let clauses = dnf_clauses(&folded, clause_limit)?;
        Ok(Expr::any(
            clauses
                .into_iter()
                .map(|c| Expr::all(c.into_iter().map(|p| Expr::Var(p.clone())))),
        ))
    }

    /// True when the tree is an OR of ANDs of variables, or a lone constant.
    pub fn is_dnf(&self) -> bool {
        fn conj(e: &Expr) -> bool {
            match e {
                Expr::Var(_) => true,
                Expr::And(x, y) => conj(x) && conj(y),
                _ => false,
            }
        }
        fn disj(e: &Expr) -> bool {
            match e {
                Expr::Or(x, y) => disj(x) && disj(y),
                e => conj(e),
            }
        }
        self.is_const() || disj(self)
    }

    /// The relaxation `φ_k(f)`.
    pub fn phi(&self, f: &RealAssignment) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::True => 1.0,
            Expr::False => 0.0,
            Expr::Var(p) => *f.get(p).ok_or_else(|| ExprError::Unbound(p.clone()))?,
            Expr::And(x, y) => (x.phi(f)? + y.phi(f)? - 1.0).max(0.0),
            Expr::Or(x, y) => x.phi(f)?.max(y.phi(f)?),
        })
    }

    /// `φ*_k(c·f) = 1 - φ_k(1 - min(1, c·f))`.
    pub fn phi_star(&self, f: &RealAssignment, c: f64) -> Result<f64, ExprError> {
        let flipped: RealAssignment = f
            .iter()
            .map(|(p, v)| (p.clone(), 1.0 - (c * v).min(1.0)))
            .collect();
        Ok(1.0 - self.phi(&flipped)?)
    }

    /// The φ-sensitivity `S_{k,p}`: a bound on the slope of `φ_k` along `p`.
    ///
    /// Repeated occurrences inside one conjunction add up.
    pub fn phi_sensitivity(&self, p: &ParticipantId) -> u32 {
        match self {
            Expr::True | Expr::False => 0,
            Expr::Var(q) => u32::from(q == p),
            Expr::And(x, y) => x.phi_sensitivity(p) + y.phi_sensitivity(p),
            Expr::Or(x, y) => x.phi_sensitivity(p).max(y.phi_sensitivity(p)),
        }
    }

    /// Largest φ-sensitivity over the variables of the expression.
    pub fn max_phi_sensitivity(&self) -> u32 {
        self.variables()
            .into_iter()
            .map(|p| self.phi_sensitivity(p))
            .max()
            .unwrap_or(0)
    }
}

fn dnf_clauses(e: &Expr, limit: usize) -> Result<Vec<Vec<&ParticipantId>>, ExprError> {
    match e {
        Expr::Var(p) => Ok(vec![vec![p]]),
        Expr::Or(x, y) => {
            let mut out = dnf_clauses(x, limit)?;
            out.extend(dnf_clauses(y, limit)?);
            if out.len() > limit {
                return Err(ExprError::ClauseLimit { limit });
            }
            Ok(out)
        }
        Expr::And(x, y) => {
            let left = dnf_clauses(x, limit)?;
            let right = dnf_clauses(y, limit)?;
            if left.len().saturating_mul(right.len()) > limit {
                return Err(ExprError::ClauseLimit { limit });
            }
            let mut out = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    let mut clause = l.clone();
                    clause.extend(r.iter().copied());
                    out.push(clause);
                }
            }
            Ok(out)
        }
        // folded input never has constants below the root
        Expr::True | Expr::False => unreachable!("constants are folded before expansion"),
    }
}

/// Whether two expressions agree on every Boolean assignment.
///
/// A necessary condition for φ-equivalence, not a sufficient one.
pub fn truth_equivalent(k1: &Expr, k2: &Expr) -> Result<bool, ExprError> {
    let vars: Vec<&ParticipantId> = k1.variables().union(&k2.variables()).copied().collect();
    if vars.len() > TRUTH_TABLE_MAX_VARS {
        return Err(ExprError::TooManyVariables {
            found: vars.len(),
            limit: TRUTH_TABLE_MAX_VARS,
        });
    }
    let mut f: BoolAssignment = vars.iter().map(|&p| (p.clone(), false)).collect();
    for mask in 0u32..(1u32 << vars.len()) {
        for (bit, p) in vars.iter().enumerate() {
            *f.get_mut(*p).unwrap() = mask & (1 << bit) != 0;
        }
        if k1.evaluate(&f)? != k2.evaluate(&f)? {
            return Ok(false);
        }
    }
    Ok(true)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `&` binds tighter than `|`, both associate to the left
        fn write(e: &Expr, f: &mut fmt::Formatter<'_>, paren: bool) -> fmt::Result {
            if paren {
                f.write_str("(")?;
                write(e, f, false)?;
                return f.write_str(")");
            }
            match e {
                Expr::True => f.write_str("true"),
                Expr::False => f.write_str("false"),
                Expr::Var(p) => f.write_str(p.as_str()),
                Expr::And(x, y) => {
                    write(x, f, matches!(**x, Expr::Or(..)))?;
                    f.write_str(" & ")?;
                    write(y, f, matches!(**y, Expr::Or(..) | Expr::And(..)))
                }
                Expr::Or(x, y) => {
                    write(x, f, false)?;
                    f.write_str(" | ")?;
                    write(y, f, matches!(**y, Expr::Or(..)))
                }
            }
        }
        write(self, f, false)
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parser = Parser { src: s, pos: 0 };
        let e = parser.expr()?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.term()?;
        while self.eat('|') {
            e = Expr::or(e, self.term()?);
        }
        Ok(e)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.factor()?;
        while self.eat('&') {
            e = Expr::and(e, self.factor()?);
        }
        Ok(e)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.eat('(') {
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(e);
        }
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| {
                !(c.is_ascii_alphanumeric() || c == '_' || (i > 0 && matches!(c, '.' | '-')))
            })
            .map_or(rest.len(), |(i, _)| i);
        let word = &rest[..len];
        if word.is_empty() {
            return Err(self.error("expected 'true', 'false', an identifier or '('"));
        }
        let e = match word {
            "true" => Expr::True,
            "false" => Expr::False,
            w => Expr::Var(ParticipantId::new(w).map_err(|_| self.error("invalid identifier"))?),
        };
        self.pos += len;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expr {
        s.parse().unwrap()
    }

    fn p(s: &str) -> ParticipantId {
        ParticipantId::new(s).unwrap()
    }

    fn bools(pairs: &[(&str, bool)]) -> BoolAssignment {
        pairs.iter().map(|(k, v)| (p(k), *v)).collect()
    }

    fn reals(pairs: &[(&str, f64)]) -> RealAssignment {
        pairs.iter().map(|(k, v)| (p(k), *v)).collect()
    }

    #[test]
    fn identifiers() {
        assert!(ParticipantId::new("e_ab").is_ok());
        assert!(ParticipantId::new("_x.1-2").is_ok());
        assert!(ParticipantId::new("1a").is_err());
        assert!(ParticipantId::new("").is_err());
        assert!(ParticipantId::new("a b").is_err());
    }

    #[test]
    fn evaluate_examples() {
        let f = bools(&[("a", true), ("b", true), ("c", true)]);
        assert!(e("a & b & c").evaluate(&f).unwrap());
        assert!(!e("a | b").evaluate(&bools(&[("a", false), ("b", false)])).unwrap());
        let f = bools(&[("a", false), ("b", true), ("c", false)]);
        assert!(!e("(a | b) & (a | c)").evaluate(&f).unwrap());
    }

    #[test]
    fn evaluate_unbound() {
        let err = e("a & z").evaluate(&bools(&[("a", true)])).unwrap_err();
        assert_eq!(err, ExprError::Unbound(p("z")));
    }

    #[test]
    fn substitute_examples() {
        assert_eq!(e("a & b").substitute_const(&p("a"), false), e("false & b"));
        assert_eq!(e("a | (b & a)").substitute_const(&p("a"), true), e("true | (b & true)"));
        assert_eq!(e("b").substitute_const(&p("a"), false), e("b"));
    }

    #[test]
    fn fold_examples() {
        assert_eq!(e("false & b").fold_constants(), Expr::False);
        assert_eq!(e("true | (b & true)").fold_constants(), Expr::True);
        assert_eq!(e("(a | false) & (true & b)").fold_constants(), e("a & b"));
    }

    #[test]
    fn dnf_examples() {
        let dnf = e("b & c & (a | d)").to_dnf(DEFAULT_DNF_CLAUSE_LIMIT).unwrap();
        assert_eq!(dnf, e("(b & c & a) | (b & c & d)"));
        assert_eq!(e("a & b").to_dnf(10).unwrap(), e("a & b"));
        assert_eq!(
            e("(a | b) & (c | d)").to_dnf(10).unwrap(),
            e("a & c | a & d | b & c | b & d")
        );
        assert!(dnf.is_dnf());
    }

    #[test]
    fn dnf_keeps_repeats_and_checks_limit() {
        assert_eq!(e("a & (a | b)").to_dnf(10).unwrap(), e("a & a | a & b"));
        let big = e("(a | b) & (c | d) & (e | f)");
        assert_eq!(big.to_dnf(7), Err(ExprError::ClauseLimit { limit: 7 }));
        assert!(big.to_dnf(8).is_ok());
    }

    #[test]
    fn phi_examples() {
        let f = reals(&[("a", 1.0), ("b", 1.0), ("c", 0.0)]);
        assert_eq!(e("a & b & c").phi(&f).unwrap(), 0.0);
        assert_eq!(e("a | b").phi(&reals(&[("a", 0.5), ("b", 0.5)])).unwrap(), 0.5);
        let f = reals(&[("a", 0.6), ("b", 0.2), ("c", 0.3)]);
        let v = e("(a | b) & (a | c)").phi(&f).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
    }

    #[test]
    fn phi_star_examples() {
        let f = reals(&[("a", 0.3)]);
        let k = e("a");
        assert!((k.phi_star(&f, 1.0).unwrap() - 0.3).abs() < 1e-12);
        assert!((k.phi_star(&f, 2.0).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(Expr::True.phi_star(&f, 3.0).unwrap(), 0.0);
        let f = reals(&[("a", 0.4), ("b", 0.4)]);
        let k = e("a & b");
        let lhs = k.phi_star(&f, 3.0).unwrap();
        let rhs = (3.0 * k.phi_star(&f, 1.0).unwrap()).min(1.0);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_figure_rows() {
        let cnf = e("(a | b) & (a | c) & (b | d)");
        let got: Vec<u32> = ["a", "b", "c", "d"].iter().map(|v| cnf.phi_sensitivity(&p(v))).collect();
        assert_eq!(got, vec![2, 2, 1, 1]);
        let conj = e("a & b & c");
        assert!(["a", "b", "c"].iter().all(|v| conj.phi_sensitivity(&p(v)) == 1));
        let dnf = e("(a & b) | (a & c) | (b & d)");
        assert!(["a", "b", "c", "d"].iter().all(|v| dnf.phi_sensitivity(&p(v)) == 1));
        assert_eq!(e("a & a").phi_sensitivity(&p("a")), 2);
        assert_eq!(Expr::True.phi_sensitivity(&p("a")), 0);
    }

    #[test]
    fn truth_equivalence_examples() {
        assert!(truth_equivalent(&e("a | b"), &e("b | a")).unwrap());
        assert!(truth_equivalent(&e("b & c & (a | d)"), &e("(a & b & c) | (b & c & d)")).unwrap());
        assert!(!truth_equivalent(&e("a & b"), &e("a | b")).unwrap());
        let wide = Expr::all((0..21).map(|i| Expr::var(&format!("x{i}")).unwrap()));
        assert!(matches!(
            truth_equivalent(&wide, &Expr::True),
            Err(ExprError::TooManyVariables { found: 21, .. })
        ));
    }

    #[test]
    fn truth_table_is_not_phi_equivalence() {
        // same truth table, different relaxations
        let k1 = e("(a | b) & (a | c)");
        let k2 = e("a | (b & c)");
        assert!(truth_equivalent(&k1, &k2).unwrap());
        let f = reals(&[("a", 0.5), ("b", 0.5), ("c", 0.5)]);
        assert_ne!(k1.phi(&f).unwrap(), k2.phi(&f).unwrap());
    }

    #[test]
    fn parse_precedence_and_errors() {
        assert_eq!(e("a | b & c"), Expr::or(e("a"), e("b & c")));
        assert_eq!(e(" ( a|b ) &c "), Expr::and(e("a | b"), e("c")));
        assert_eq!(e("a & b & c"), Expr::and(e("a & b"), e("c")));
        assert!(matches!("a &".parse::<Expr>(), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!("(a | b".parse::<Expr>(), Err(ExprError::Syntax { .. })));
        assert!(matches!("a b".parse::<Expr>(), Err(ExprError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn display_round_trips_tree_shape() {
        for s in ["a & (b & c)", "(a | b) | c", "a | (b | c)", "(a | b) & c", "a & b | c & true"] {
            let k = e(s);
            assert_eq!(k.to_string().parse::<Expr>().unwrap(), k, "{s}");
        }
        assert_eq!(e("a & (b & c)").to_string(), "a & (b & c)");
    }
}
