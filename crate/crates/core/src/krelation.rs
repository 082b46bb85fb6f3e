//! Annotated relations (K-relations over positive Boolean expressions).
//!
//! Every stored tuple carries the condition under which it is present. The
//! positive relational operators combine annotations with `∨` (union,
//! projection) and `∧` (join), so the output of any positive query records how
//! it depends on each participant. Annotations are kept constant-folded and
//! rows annotated `FALSE` are never stored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{Expr, ExprError, ParticipantId};

pub mod io;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelationError {
    #[error("schemas differ: [{left}] vs [{right}]")]
    SchemaMismatch { left: String, right: String },
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("renaming is not a bijection: {0}")]
    NotBijective(String),
    #[error("tuple has {found} values, schema has {expected} attributes")]
    Arity { expected: usize, found: usize },
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("annotation uses {0}, which is not a declared participant")]
    UndeclaredParticipant(ParticipantId),
    #[error("weight of tuple ({tuple}) is negative: {weight}")]
    NegativeWeight { tuple: String, weight: f64 },
    #[error("weight column {column:?} holds non-numeric value {value:?}")]
    NonNumericWeight { column: String, value: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Ordered set of attribute names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Schema(Vec<String>);

impl Schema {
    pub fn new<I, S>(attrs: I) -> Result<Schema, RelationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let attrs: Vec<String> = attrs.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for a in &attrs {
            if !seen.insert(a.as_str()) {
                return Err(RelationError::DuplicateAttribute(a.clone()));
            }
        }
        Ok(Schema(attrs))
    }

    pub fn attrs(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, attr: &str) -> Option<usize> {
        self.0.iter().position(|a| a == attr)
    }

    fn index_of(&self, attr: &str) -> Result<usize, RelationError> {
        self.position(attr)
            .ok_or_else(|| RelationError::UnknownAttribute(attr.to_string()))
    }

    /// Same attributes, ignoring order.
    pub fn same_set(&self, other: &Schema) -> bool {
        self.len() == other.len() && self.0.iter().all(|a| other.position(a).is_some())
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(","))
    }
}

/// Borrowed view of one tuple together with its schema.
#[derive(Debug, Clone, Copy)]
pub struct Tuple<'a> {
    schema: &'a Schema,
    values: &'a [String],
}

impl<'a> Tuple<'a> {
    pub fn new(schema: &'a Schema, values: &'a [String]) -> Self {
        Tuple { schema, values }
    }

    pub fn get(&self, attr: &str) -> Option<&'a str> {
        self.schema.position(attr).map(|i| self.values[i].as_str())
    }

    pub fn values(&self) -> &'a [String] {
        self.values
    }

    pub fn schema(&self) -> &'a Schema {
        self.schema
    }
}

impl fmt::Display for Tuple<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .schema
            .attrs()
            .iter()
            .zip(self.values)
            .map(|(a, v)| format!("{a}={v}"))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Selection condition: a conjunction of equality atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    AttrEq(String, String),
    AttrConst(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Predicate(pub Vec<Atom>);

impl Predicate {
    fn check(&self, schema: &Schema) -> Result<(), RelationError> {
        for atom in &self.0 {
            match atom {
                Atom::AttrEq(a, b) => {
                    schema.index_of(a)?;
                    schema.index_of(b)?;
                }
                Atom::AttrConst(a, _) => {
                    schema.index_of(a)?;
                }
            }
        }
        Ok(())
    }

    pub fn holds(&self, t: Tuple<'_>) -> bool {
        self.0.iter().all(|atom| match atom {
            Atom::AttrEq(a, b) => t.get(a).is_some() && t.get(a) == t.get(b),
            Atom::AttrConst(a, v) => t.get(a) == Some(v.as_str()),
        })
    }
}

type WeightFn = dyn Fn(Tuple<'_>) -> f64 + Send + Sync;

/// Nonnegative per-tuple weight `q(t)`; the answer is `Σ_t q(t)` over the support.
#[derive(Clone)]
pub enum LinearQuery {
    /// `q ≡ 1`.
    Count,
    /// Numeric value of the named attribute.
    Column(String),
    Custom(Arc<WeightFn>),
}

impl fmt::Debug for LinearQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearQuery::Count => f.write_str("Count"),
            LinearQuery::Column(c) => write!(f, "Column({c:?})"),
            LinearQuery::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl LinearQuery {
    pub fn custom<F>(weight: F) -> Self
    where
        F: Fn(Tuple<'_>) -> f64 + Send + Sync + 'static,
    {
        LinearQuery::Custom(Arc::new(weight))
    }

    pub fn weight(&self, t: Tuple<'_>) -> Result<f64, RelationError> {
        let w = match self {
            LinearQuery::Count => 1.0,
            LinearQuery::Column(col) => {
                let raw = t
                    .get(col)
                    .ok_or_else(|| RelationError::UnknownAttribute(col.clone()))?;
                raw.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite())
                    .ok_or_else(|| RelationError::NonNumericWeight {
                        column: col.clone(),
                        value: raw.to_string(),
                    })?
            }
            LinearQuery::Custom(f) => f(t),
        };
        if w < 0.0 || w.is_nan() {
            return Err(RelationError::NegativeWeight {
                tuple: t.to_string(),
                weight: w,
            });
        }
        Ok(w)
    }

    /// Weights of every stored row, in row order.
    pub fn weights(&self, r: &AnnotatedRelation) -> Result<Vec<f64>, RelationError> {
        r.tuples().map(|(t, _)| self.weight(t)).collect()
    }
}

/// A finite mapping from tuples to annotations, plus the participant set `P`.
///
/// Participants may include identifiers that occur in no annotation; they
/// still count towards `|P|`.
#[derive(Debug, Clone)]
pub struct AnnotatedRelation {
    schema: Schema,
    rows: BTreeMap<Vec<String>, Expr>,
    participants: BTreeSet<ParticipantId>,
}

impl AnnotatedRelation {
    pub fn empty(schema: Schema, participants: BTreeSet<ParticipantId>) -> Self {
        AnnotatedRelation {
            schema,
            rows: BTreeMap::new(),
            participants,
        }
    }

    /// Builds a relation, folding annotations and dropping `FALSE` rows.
    ///
    /// Duplicate tuples are merged with `∨` in input order. When
    /// `participants` is `None` it defaults to the annotation variables.
    pub fn new<I>(
        schema: Schema,
        rows: I,
        participants: Option<BTreeSet<ParticipantId>>,
    ) -> Result<Self, RelationError>
    where
        I: IntoIterator<Item = (Vec<String>, Expr)>,
    {
        let mut merged: BTreeMap<Vec<String>, Expr> = BTreeMap::new();
        for (values, annotation) in rows {
            if values.len() != schema.len() {
                return Err(RelationError::Arity {
                    expected: schema.len(),
                    found: values.len(),
                });
            }
            let next = match merged.remove(&values) {
                Some(prev) => Expr::or(prev, annotation),
                None => annotation,
            };
            merged.insert(values, next);
        }
        let rows: BTreeMap<_, _> = merged
            .into_iter()
            .map(|(t, k)| (t, k.fold_constants()))
            .filter(|(_, k)| *k != Expr::False)
            .collect();
        let participants = match participants {
            Some(ps) => {
                for k in rows.values() {
                    if let Some(p) = k.variables().into_iter().find(|p| !ps.contains(*p)) {
                        return Err(RelationError::UndeclaredParticipant(p.clone()));
                    }
                }
                ps
            }
            None => rows
                .values()
                .flat_map(|k| k.variables().into_iter().cloned())
                .collect(),
        };
        Ok(AnnotatedRelation {
            schema,
            rows,
            participants,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn participants(&self) -> &BTreeSet<ParticipantId> {
        &self.participants
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in lexicographic tuple order.
    pub fn tuples(&self) -> impl Iterator<Item = (Tuple<'_>, &Expr)> + '_ {
        self.rows
            .iter()
            .map(move |(values, k)| (Tuple::new(&self.schema, values), k))
    }

    /// Annotation of the tuple given as attribute/value pairs in any order.
    pub fn annotation(&self, assignments: &[(&str, &str)]) -> Option<&Expr> {
        if assignments.len() != self.schema.len() {
            return None;
        }
        let mut values = vec![String::new(); self.schema.len()];
        for (attr, v) in assignments {
            values[self.schema.position(attr)?] = v.to_string();
        }
        self.rows.get(&values)
    }

    /// Total length of all annotations, in expression nodes.
    pub fn annotation_size(&self) -> usize {
        self.rows.values().map(Expr::size).sum()
    }

    /// Rows keyed by attribute-sorted tuples, for order-insensitive comparison.
    fn canonical_rows(&self) -> BTreeMap<Vec<(&str, &str)>, &Expr> {
        self.rows
            .iter()
            .map(|(values, k)| {
                let mut key: Vec<(&str, &str)> = self
                    .schema
                    .attrs()
                    .iter()
                    .map(String::as_str)
                    .zip(values.iter().map(String::as_str))
                    .collect();
                key.sort();
                (key, k)
            })
            .collect()
    }

    fn reorder_to(&self, schema: &Schema) -> BTreeMap<Vec<String>, Expr> {
        let perm: Vec<usize> = schema
            .attrs()
            .iter()
            .map(|a| self.schema.position(a).expect("schemas compared as sets"))
            .collect();
        self.rows
            .iter()
            .map(|(values, k)| (perm.iter().map(|&i| values[i].clone()).collect(), k.clone()))
            .collect()
    }

    pub fn union(&self, other: &AnnotatedRelation) -> Result<AnnotatedRelation, RelationError> {
        if !self.schema.same_set(&other.schema) {
            return Err(RelationError::SchemaMismatch {
                left: self.schema.to_string(),
                right: other.schema.to_string(),
            });
        }
        let mut rows = self.rows.clone();
        for (values, k) in other.reorder_to(&self.schema) {
            let next = match rows.remove(&values) {
                Some(prev) => Expr::or(prev, k).fold_constants(),
                None => k,
            };
            if next != Expr::False {
                rows.insert(values, next);
            }
        }
        Ok(AnnotatedRelation {
            schema: self.schema.clone(),
            rows,
            participants: self.participants.union(&other.participants).cloned().collect(),
        })
    }

    /// Groups rows by their restriction to `attrs`; each group annotation is
    /// the left-folded `∨` of its members in tuple order.
    pub fn project(&self, attrs: &[&str]) -> Result<AnnotatedRelation, RelationError> {
        let schema = Schema::new(attrs.iter().copied())?;
        let idx: Vec<usize> = attrs
            .iter()
            .map(|a| self.schema.index_of(a))
            .collect::<Result<_, _>>()?;
        let mut groups: BTreeMap<Vec<String>, Expr> = BTreeMap::new();
        for (values, k) in &self.rows {
            let key: Vec<String> = idx.iter().map(|&i| values[i].clone()).collect();
            let next = match groups.remove(&key) {
                Some(prev) => Expr::or(prev, k.clone()).fold_constants(),
                None => k.clone(),
            };
            groups.insert(key, next);
        }
        Ok(AnnotatedRelation {
            schema,
            rows: groups,
            participants: self.participants.clone(),
        })
    }

    pub fn select(&self, pred: &Predicate) -> Result<AnnotatedRelation, RelationError> {
        pred.check(&self.schema)?;
        Ok(self.select_by(|t| pred.holds(t)))
    }

    /// Selection with an arbitrary total predicate.
    pub fn select_by<F: Fn(Tuple<'_>) -> bool>(&self, pred: F) -> AnnotatedRelation {
        let rows = self
            .rows
            .iter()
            .filter(|(values, _)| pred(Tuple::new(&self.schema, values)))
            .map(|(v, k)| (v.clone(), k.clone()))
            .collect();
        AnnotatedRelation {
            schema: self.schema.clone(),
            rows,
            participants: self.participants.clone(),
        }
    }

    /// Natural join; the output schema is `self`'s attributes followed by the
    /// attributes only `other` has.
    pub fn natural_join(&self, other: &AnnotatedRelation) -> AnnotatedRelation {
        let shared: Vec<(usize, usize)> = self
            .schema
            .attrs()
            .iter()
            .enumerate()
            .filter_map(|(i, a)| other.schema.position(a).map(|j| (i, j)))
            .collect();
        let extra: Vec<usize> = (0..other.schema.len())
            .filter(|&j| !shared.iter().any(|&(_, sj)| sj == j))
            .collect();
        let mut attrs = self.schema.attrs().to_vec();
        attrs.extend(extra.iter().map(|&j| other.schema.attrs()[j].clone()));
        let schema = Schema(attrs);

        let mut index: HashMap<Vec<&str>, Vec<(&Vec<String>, &Expr)>> = HashMap::new();
        for (values, k) in &other.rows {
            let key = shared.iter().map(|&(_, j)| values[j].as_str()).collect();
            index.entry(key).or_default().push((values, k));
        }
        let mut rows = BTreeMap::new();
        for (left, k1) in &self.rows {
            let key: Vec<&str> = shared.iter().map(|&(i, _)| left[i].as_str()).collect();
            let Some(matches) = index.get(&key) else { continue };
            for (right, k2) in matches {
                let mut values = left.clone();
                values.extend(extra.iter().map(|&j| right[j].clone()));
                let k = Expr::and(k1.clone(), (*k2).clone()).fold_constants();
                if k != Expr::False {
                    rows.insert(values, k);
                }
            }
        }
        AnnotatedRelation {
            schema,
            rows,
            participants: self.participants.union(&other.participants).cloned().collect(),
        }
    }

    /// Renames attributes. Attributes not mentioned keep their names; the
    /// completed mapping must be a bijection.
    pub fn rename(&self, mapping: &[(&str, &str)]) -> Result<AnnotatedRelation, RelationError> {
        let mut attrs = self.schema.attrs().to_vec();
        let mut sources = BTreeSet::new();
        for (from, to) in mapping {
            let i = self.schema.index_of(from)?;
            if !sources.insert(i) {
                return Err(RelationError::NotBijective(format!("{from} renamed twice")));
            }
            attrs[i] = to.to_string();
        }
        let schema = Schema::new(attrs)
            .map_err(|e| RelationError::NotBijective(e.to_string()))?;
        Ok(AnnotatedRelation {
            schema,
            rows: self.rows.clone(),
            participants: self.participants.clone(),
        })
    }

    /// The neighbouring relation without `p`: every occurrence of `p` becomes
    /// `FALSE`, annotations are folded and rows folding to `FALSE` are dropped.
    pub fn remove_participant(&self, p: &ParticipantId) -> Result<AnnotatedRelation, RelationError> {
        if !self.participants.contains(p) {
            return Err(RelationError::UnknownParticipant(p.clone()));
        }
        let rows = self
            .rows
            .iter()
            .map(|(values, k)| {
                let k = if k.contains_var(p) {
                    k.substitute_const(p, false).fold_constants()
                } else {
                    k.clone()
                };
                (values.clone(), k)
            })
            .filter(|(_, k)| *k != Expr::False)
            .collect();
        let mut participants = self.participants.clone();
        participants.remove(p);
        Ok(AnnotatedRelation {
            schema: self.schema.clone(),
            rows,
            participants,
        })
    }

    /// Tuples whose folded annotation mentions `p`.
    ///
    /// Any tuple outside this set is syntactically unchanged when `p` is set
    /// to `FALSE`, so the set over-approximates the φ-inequivalent tuples.
    pub fn impact(&self, p: &ParticipantId) -> Vec<Tuple<'_>> {
        self.tuples()
            .filter(|(_, k)| k.contains_var(p))
            .map(|(t, _)| t)
            .collect()
    }

    /// Per-participant `Σ_{t ∈ impact(p)} q(t)` and its maximum (0 when `P` is empty).
    pub fn universal_empirical_sensitivity(
        &self,
        q: &LinearQuery,
    ) -> Result<(BTreeMap<ParticipantId, f64>, f64), RelationError> {
        let mut per: BTreeMap<ParticipantId, f64> =
            self.participants.iter().map(|p| (p.clone(), 0.0)).collect();
        for (t, k) in self.tuples() {
            let w = q.weight(t)?;
            for p in k.variables() {
                *per.get_mut(p).expect("annotation variables are participants") += w;
            }
        }
        let max = per.values().copied().fold(0.0, f64::max);
        Ok((per, max))
    }

    pub fn query_true_answer(&self, q: &LinearQuery) -> Result<f64, RelationError> {
        Ok(q.weights(self)?.iter().sum())
    }

    /// Largest φ-sensitivity of any stored annotation for any participant.
    pub fn max_phi_sensitivity(&self) -> u32 {
        self.rows.values().map(Expr::max_phi_sensitivity).max().unwrap_or(0)
    }
}

/// Equal schemas as sets, equal participants, and the same annotation for
/// every tuple (compared attribute-wise).
impl PartialEq for AnnotatedRelation {
    fn eq(&self, other: &Self) -> bool {
        self.schema.same_set(&other.schema)
            && self.participants == other.participants
            && self.canonical_rows() == other.canonical_rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> ParticipantId {
        ParticipantId::new(s).unwrap()
    }

    fn e(s: &str) -> Expr {
        s.parse().unwrap()
    }

    fn rel(attrs: &[&str], rows: &[(&[&str], &str)]) -> AnnotatedRelation {
        AnnotatedRelation::new(
            Schema::new(attrs.iter().copied()).unwrap(),
            rows.iter()
                .map(|(v, k)| (v.iter().map(|s| s.to_string()).collect(), e(k))),
            None,
        )
        .unwrap()
    }

    fn triangles() -> AnnotatedRelation {
        rel(
            &["X", "Y", "Z"],
            &[
                (&["a", "b", "c"], "a & b & c"),
                (&["b", "c", "d"], "b & c & d"),
                (&["c", "d", "e"], "c & d & e"),
            ],
        )
    }

    #[test]
    fn construction_folds_and_drops_false() {
        let r = rel(&["A"], &[(&["1"], "a & false"), (&["2"], "b | true"), (&["3"], "c")]);
        assert_eq!(r.len(), 2);
        assert_eq!(r.annotation(&[("A", "2")]), Some(&Expr::True));
        // participants default to annotation variables after folding
        assert_eq!(r.participants().len(), 1);
        let undeclared = AnnotatedRelation::new(
            Schema::new(["A"]).unwrap(),
            [(vec!["1".to_string()], e("z"))],
            Some([p("a")].into()),
        );
        assert_eq!(undeclared.unwrap_err(), RelationError::UndeclaredParticipant(p("z")));
        assert!(matches!(Schema::new(["A", "A"]), Err(RelationError::DuplicateAttribute(_))));
    }

    #[test]
    fn union_examples() {
        let r1 = rel(&["T"], &[(&["t"], "a")]);
        let r2 = rel(&["T"], &[(&["t"], "b")]);
        assert_eq!(r1.union(&r2).unwrap(), rel(&["T"], &[(&["t"], "a | b")]));
        let empty = AnnotatedRelation::empty(Schema::new(["T"]).unwrap(), BTreeSet::new());
        assert_eq!(r1.union(&empty).unwrap(), r1);
        let r3 = rel(&["T"], &[(&["u"], "b")]);
        assert_eq!(r1.union(&r3).unwrap(), rel(&["T"], &[(&["t"], "a"), (&["u"], "b")]));
        let other = rel(&["S"], &[(&["t"], "a")]);
        assert!(matches!(r1.union(&other), Err(RelationError::SchemaMismatch { .. })));
    }

    #[test]
    fn union_matches_attributes_by_name() {
        let r1 = rel(&["A", "B"], &[(&["1", "2"], "a")]);
        let r2 = rel(&["B", "A"], &[(&["2", "1"], "b")]);
        let u = r1.union(&r2).unwrap();
        assert_eq!(u.annotation(&[("A", "1"), ("B", "2")]), Some(&e("a | b")));
    }

    #[test]
    fn project_examples() {
        let r = rel(
            &["X", "Y", "W"],
            &[(&["b", "c", "a"], "a & b & c"), (&["b", "c", "d"], "b & c & d")],
        );
        let out = r.project(&["X", "Y"]).unwrap();
        let k = out.annotation(&[("X", "b"), ("Y", "c")]).unwrap();
        assert_eq!(*k, e("(a & b & c) | (b & c & d)"));
        assert!(crate::expr::truth_equivalent(k, &e("b & c & (a | d)")).unwrap());

        assert_eq!(r.project(&["X", "Y", "W"]).unwrap(), r);
        let single = rel(&["A"], &[(&["1"], "a & b")]);
        let none = single.project(&[]).unwrap();
        assert_eq!(none.len(), 1);
        assert_eq!(none.annotation(&[]), Some(&e("a & b")));
        assert!(matches!(r.project(&["Q"]), Err(RelationError::UnknownAttribute(_))));
    }

    #[test]
    fn select_examples() {
        let r = rel(&["A"], &[(&["1"], "a"), (&["2"], "b")]);
        assert_eq!(r.select_by(|_| true), r);
        assert!(r.select_by(|_| false).is_empty());
        let pred = Predicate(vec![Atom::AttrConst("A".into(), "1".into())]);
        assert_eq!(r.select(&pred).unwrap(), rel(&["A"], &[(&["1"], "a")]).with_participants(&r));
        let bad = Predicate(vec![Atom::AttrEq("A".into(), "B".into())]);
        assert!(matches!(r.select(&bad), Err(RelationError::UnknownAttribute(_))));
    }

    impl AnnotatedRelation {
        fn with_participants(mut self, other: &AnnotatedRelation) -> Self {
            self.participants = other.participants.clone();
            self
        }
    }

    #[test]
    fn join_examples() {
        let r1 = rel(&["A", "B"], &[(&["1", "2"], "a")]);
        let r2 = rel(&["B", "C"], &[(&["2", "3"], "b")]);
        let j = r1.natural_join(&r2);
        assert_eq!(j, rel(&["A", "B", "C"], &[(&["1", "2", "3"], "a & b")]));

        let empty = AnnotatedRelation::empty(Schema::new(["B", "C"]).unwrap(), BTreeSet::new());
        assert!(r1.natural_join(&empty).is_empty());

        let r1 = rel(&["A"], &[(&["1"], "a")]);
        let r2 = rel(&["B"], &[(&["7"], "b"), (&["8"], "c")]);
        let j = r1.natural_join(&r2);
        assert_eq!(j.len(), 2);
        assert_eq!(j.annotation(&[("A", "1"), ("B", "7")]), Some(&e("a & b")));
        assert_eq!(j.annotation(&[("A", "1"), ("B", "8")]), Some(&e("a & c")));
    }

    #[test]
    fn join_on_equal_schemas_intersects() {
        let r1 = rel(&["A"], &[(&["1"], "a"), (&["2"], "b")]);
        let r2 = rel(&["A"], &[(&["2"], "c"), (&["3"], "d")]);
        let j = r1.natural_join(&r2);
        assert_eq!(j.len(), 1);
        assert_eq!(j.annotation(&[("A", "2")]), Some(&e("b & c")));
    }

    #[test]
    fn rename_examples() {
        let r = rel(&["A"], &[(&["1"], "a")]);
        assert_eq!(r.rename(&[]).unwrap(), r);
        assert_eq!(r.rename(&[("A", "B")]).unwrap(), rel(&["B"], &[(&["1"], "a")]));
        let r = rel(&["A", "B"], &[(&["1", "2"], "x")]);
        let swapped = r.rename(&[("A", "B"), ("B", "A")]).unwrap();
        assert_eq!(swapped, rel(&["A", "B"], &[(&["2", "1"], "x")]));
        assert!(matches!(r.rename(&[("A", "B")]), Err(RelationError::NotBijective(_))));
        assert!(matches!(r.rename(&[("Q", "B")]), Err(RelationError::UnknownAttribute(_))));
    }

    #[test]
    fn remove_participant_examples() {
        let r = rel(&["T"], &[(&["abc"], "a & b & c")]);
        let out = r.remove_participant(&p("c")).unwrap();
        assert!(out.is_empty());
        assert!(!out.participants().contains(&p("c")));

        let r = rel(&["T"], &[(&["t"], "a | b")]);
        let out = r.remove_participant(&p("a")).unwrap();
        assert_eq!(out.annotation(&[("T", "t")]), Some(&e("b")));

        let mut ps: BTreeSet<_> = [p("a"), p("z")].into();
        let r = AnnotatedRelation::new(Schema::new(["T"]).unwrap(), [(vec!["t".into()], e("a"))], Some(ps.clone()))
            .unwrap();
        let out = r.remove_participant(&p("z")).unwrap();
        ps.remove(&p("z"));
        assert_eq!(out.participants(), &ps);
        assert_eq!(out.annotation(&[("T", "t")]), Some(&e("a")));
        assert!(matches!(r.remove_participant(&p("q")), Err(RelationError::UnknownParticipant(_))));
    }

    #[test]
    fn impact_examples() {
        let r = triangles();
        assert_eq!(r.impact(&p("c")).len(), 3);
        let a: Vec<_> = r.impact(&p("a")).iter().map(|t| t.values().join("")).collect();
        assert_eq!(a, vec!["abc"]);
        let folded = rel(&["T"], &[(&["t"], "a | true")]);
        assert!(folded.impact(&p("a")).is_empty());
    }

    #[test]
    fn sensitivity_and_answer_examples() {
        let r = triangles();
        let (per, max) = r.universal_empirical_sensitivity(&LinearQuery::Count).unwrap();
        let got: Vec<f64> = per.values().copied().collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(max, 3.0);
        assert_eq!(r.query_true_answer(&LinearQuery::Count).unwrap(), 3.0);

        let empty = AnnotatedRelation::empty(Schema::new(["T"]).unwrap(), BTreeSet::new());
        assert_eq!(empty.universal_empirical_sensitivity(&LinearQuery::Count).unwrap().1, 0.0);
        assert_eq!(empty.query_true_answer(&LinearQuery::Count).unwrap(), 0.0);

        let r = rel(&["T", "W"], &[(&["t1", "2"], "a"), (&["t2", "3"], "a")]);
        let q = LinearQuery::Column("W".into());
        let (per, _) = r.universal_empirical_sensitivity(&q).unwrap();
        assert_eq!(per[&p("a")], 5.0);

        let r = rel(&["T", "W"], &[(&["t1", "2.5"], "a")]);
        assert_eq!(r.query_true_answer(&q).unwrap(), 2.5);
    }

    #[test]
    fn weights_must_be_nonnegative_numbers() {
        let r = rel(&["W"], &[(&["-1"], "a")]);
        let q = LinearQuery::Column("W".into());
        assert!(matches!(r.query_true_answer(&q), Err(RelationError::NegativeWeight { .. })));
        let r = rel(&["W"], &[(&["x"], "a")]);
        assert!(matches!(r.query_true_answer(&q), Err(RelationError::NonNumericWeight { .. })));
        let q = LinearQuery::custom(|_| -0.5);
        assert!(r.query_true_answer(&q).is_err());
    }
}
