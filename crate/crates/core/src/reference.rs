//! Brute-force oracles for small instances.
//!
//! A [`SensitiveDatabase`] maps every subset of participants (a bitmask) to the
//! set of tuples present when exactly those participants take part. The
//! exhaustive sequences of the general mechanism and grid minimisers of the
//! relaxed H and G live here too. None of this is differentially private; it
//! exists to check the efficient path.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::expr::{Expr, ParticipantId};
use crate::krelation::{AnnotatedRelation, LinearQuery, RelationError};
use crate::mechanism::{MechanismError, Sequences};

/// Participant cap for [`SensitiveDatabase::from_krelation`].
pub const MAX_DATABASE_PARTICIPANTS: usize = 20;
/// Participant cap for the exhaustive global sensitivity and sequences.
pub const MAX_EXHAUSTIVE_PARTICIPANTS: usize = 12;
/// Participant cap for the grid oracles.
pub const MAX_GRID_PARTICIPANTS: usize = 4;
/// Grid resolution used by the acceptance checks.
pub const DEFAULT_GRID_RESOLUTION: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("{what} supports at most {limit} participants, found {found}")]
    Capacity { what: &'static str, found: usize, limit: usize },
    #[error("mapping must list 2^{n} subsets, found {found}")]
    MappingSize { n: usize, found: usize },
    #[error("query value of the empty subset must be 0, got {0}")]
    NonzeroEmpty(f64),
    #[error("query is not monotone at subset {mask:#b}")]
    NotMonotone { mask: usize },
    #[error(transparent)]
    Relation(#[from] RelationError),
}

fn capacity(what: &'static str, found: usize, limit: usize) -> Result<(), ReferenceError> {
    if found > limit {
        return Err(ReferenceError::Capacity { what, found, limit });
    }
    Ok(())
}

/// Annotation with participants replaced by bit positions.
#[derive(Debug, Clone)]
enum Node {
    Const(bool),
    Var(usize),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
}

impl Node {
    fn compile(k: &Expr, index: &HashMap<&ParticipantId, usize>) -> Node {
        match k {
            Expr::True => Node::Const(true),
            Expr::False => Node::Const(false),
            Expr::Var(p) => Node::Var(index[p]),
            Expr::And(x, y) => Node::And(Box::new(Self::compile(x, index)), Box::new(Self::compile(y, index))),
            Expr::Or(x, y) => Node::Or(Box::new(Self::compile(x, index)), Box::new(Self::compile(y, index))),
        }
    }

    fn holds(&self, mask: usize) -> bool {
        match self {
            Node::Const(b) => *b,
            Node::Var(i) => mask >> i & 1 == 1,
            Node::And(x, y) => x.holds(mask) && y.holds(mask),
            Node::Or(x, y) => x.holds(mask) || y.holds(mask),
        }
    }

    fn phi(&self, f: &[f64]) -> f64 {
        match self {
            Node::Const(b) => f64::from(u8::from(*b)),
            Node::Var(i) => f[*i],
            Node::And(x, y) => (x.phi(f) + y.phi(f) - 1.0).max(0.0),
            Node::Or(x, y) => x.phi(f).max(y.phi(f)),
        }
    }
}

#[derive(Debug, Clone)]
enum Backing {
    /// Rows of a K-relation: label, compiled annotation, weight.
    Relation(Vec<(String, Node, f64)>),
    Explicit { content: Vec<BTreeSet<String>>, values: Vec<f64> },
}

/// Participants plus the subset-to-tuples mapping and query values.
#[derive(Debug, Clone)]
pub struct SensitiveDatabase {
    participants: Vec<ParticipantId>,
    backing: Backing,
}

impl SensitiveDatabase {
    /// Subset `P′` maps to the tuples whose annotation holds when exactly
    /// `P′` is present. Contents are computed on demand.
    pub fn from_krelation(r: &AnnotatedRelation, q: &LinearQuery) -> Result<Self, ReferenceError> {
        capacity("from_krelation", r.participants().len(), MAX_DATABASE_PARTICIPANTS)?;
        let participants: Vec<ParticipantId> = r.participants().iter().cloned().collect();
        let index: HashMap<&ParticipantId, usize> = participants.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let weights = q.weights(r)?;
        let rows = r
            .tuples()
            .zip(weights)
            .map(|((t, k), w)| (t.to_string(), Node::compile(k, &index), w))
            .collect();
        Ok(SensitiveDatabase { participants, backing: Backing::Relation(rows) })
    }

    /// A hand-built mapping: `content[mask]` for every bitmask over
    /// `participants`, with the query summing `weight` over a content set.
    pub fn from_mapping<F>(
        participants: Vec<ParticipantId>,
        content: Vec<BTreeSet<String>>,
        weight: F,
    ) -> Result<Self, ReferenceError>
    where
        F: Fn(&str) -> f64,
    {
        let n = participants.len();
        capacity("from_mapping", n, MAX_DATABASE_PARTICIPANTS)?;
        if content.len() != 1 << n {
            return Err(ReferenceError::MappingSize { n, found: content.len() });
        }
        let values: Vec<f64> = content.iter().map(|c| c.iter().map(|t| weight(t)).sum()).collect();
        if values[0] != 0.0 {
            return Err(ReferenceError::NonzeroEmpty(values[0]));
        }
        for mask in 0..values.len() {
            for p in 0..n {
                if mask >> p & 1 == 1 && values[mask & !(1 << p)] > values[mask] {
                    return Err(ReferenceError::NotMonotone { mask });
                }
            }
        }
        Ok(SensitiveDatabase { participants, backing: Backing::Explicit { content, values } })
    }

    pub fn participants(&self) -> &[ParticipantId] {
        &self.participants
    }

    pub fn num_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn full_mask(&self) -> usize {
        (1 << self.participants.len()) - 1
    }

    /// Bitmask of the named participants; unknown names are ignored.
    pub fn mask_of<'a, I: IntoIterator<Item = &'a ParticipantId>>(&self, present: I) -> usize {
        let set: BTreeSet<&ParticipantId> = present.into_iter().collect();
        self.participants
            .iter()
            .enumerate()
            .filter(|(_, p)| set.contains(p))
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn content(&self, mask: usize) -> BTreeSet<String> {
        match &self.backing {
            Backing::Relation(rows) => rows
                .iter()
                .filter(|(_, k, _)| k.holds(mask))
                .map(|(t, _, _)| t.clone())
                .collect(),
            Backing::Explicit { content, .. } => content[mask].clone(),
        }
    }

    /// `q(M(P′))`.
    pub fn query(&self, mask: usize) -> f64 {
        match &self.backing {
            Backing::Relation(rows) => rows.iter().filter(|(_, k, _)| k.holds(mask)).map(|(_, _, w)| w).sum(),
            Backing::Explicit { values, .. } => values[mask],
        }
    }

    /// Local empirical sensitivity at the subset `mask`.
    pub fn local_sensitivity_at(&self, mask: usize) -> f64 {
        let here = self.query(mask);
        (0..self.participants.len())
            .filter(|p| mask >> p & 1 == 1)
            .map(|p| (here - self.query(mask & !(1 << p))).abs())
            .fold(0.0, f64::max)
    }

    /// `L̃S_q(P)`.
    pub fn local_empirical_sensitivity(&self) -> f64 {
        self.local_sensitivity_at(self.full_mask())
    }

    fn exhaustive_tables(&self) -> Result<(Vec<f64>, Vec<f64>), ReferenceError> {
        let n = self.participants.len();
        capacity("exhaustive enumeration", n, MAX_EXHAUSTIVE_PARTICIPANTS)?;
        let values: Vec<f64> = (0..1usize << n).map(|m| self.query(m)).collect();
        // G̃S over ancestors: a subset-max over the local sensitivities
        let mut gs = vec![0.0; 1 << n];
        for mask in 0..1usize << n {
            let mut best: f64 = 0.0;
            for p in 0..n {
                if mask >> p & 1 == 1 {
                    let below = mask & !(1 << p);
                    best = best.max((values[mask] - values[below]).abs()).max(gs[below]);
                }
            }
            gs[mask] = best;
        }
        Ok((values, gs))
    }

    /// `G̃S_q(P)`: the largest local sensitivity over all subsets.
    pub fn global_empirical_sensitivity(&self) -> Result<f64, ReferenceError> {
        let (_, gs) = self.exhaustive_tables()?;
        Ok(gs[self.full_mask()])
    }

    /// `(H_i, G_i)` of the general mechanism: minima of `q` and of `G̃S` over
    /// subsets of size `i`, for every `i` in `0..=|P|`.
    pub fn general_sequence_tables(&self) -> Result<(Vec<f64>, Vec<f64>), ReferenceError> {
        let n = self.participants.len();
        let (values, gs) = self.exhaustive_tables()?;
        let mut h = vec![f64::INFINITY; n + 1];
        let mut g = vec![f64::INFINITY; n + 1];
        for mask in 0..1usize << n {
            let i = mask.count_ones() as usize;
            h[i] = h[i].min(values[mask]);
            g[i] = g[i].min(gs[mask]);
        }
        Ok((h, g))
    }

    pub fn general_sequences(&self, i: usize) -> Result<(f64, f64), ReferenceError> {
        let (h, g) = self.general_sequence_tables()?;
        Ok((h[i], g[i]))
    }
}

/// The general mechanism's exhaustive sequences, a 1-bounding pair.
#[derive(Debug, Clone)]
pub struct ReferenceSequences {
    h: Vec<f64>,
    g: Vec<f64>,
}

impl ReferenceSequences {
    pub fn new(db: &SensitiveDatabase) -> Result<Self, ReferenceError> {
        let (h, g) = db.general_sequence_tables()?;
        Ok(ReferenceSequences { h, g })
    }

    pub fn h_table(&self) -> &[f64] {
        &self.h
    }

    pub fn g_table(&self) -> &[f64] {
        &self.g
    }
}

impl Sequences for ReferenceSequences {
    fn num_participants(&self) -> usize {
        self.h.len() - 1
    }

    fn bounding_factor(&self) -> u32 {
        1
    }

    fn h(&mut self, i: usize) -> Result<f64, MechanismError> {
        Ok(self.h[i])
    }

    fn g(&mut self, i: usize) -> Result<f64, MechanismError> {
        Ok(self.g[i])
    }

    fn argmin_hint(&mut self, delta_hat: f64) -> Result<f64, MechanismError> {
        let n = self.h.len() - 1;
        let mut best = (f64::INFINITY, n);
        for i in (0..=n).rev() {
            let x = self.h[i] + (n - i) as f64 * delta_hat;
            if x < best.0 {
                best = (x, i);
            }
        }
        Ok(best.1 as f64)
    }
}

/// Objective of the grid oracles over `f ∈ [0,1]^P` (indexed like the
/// relation's sorted participants).
struct Relaxation {
    n: usize,
    rows: Vec<(Node, f64)>,
    /// `q(t)·S_{t,p}` per participant and row.
    loads: Vec<Vec<f64>>,
}

impl Relaxation {
    fn new(r: &AnnotatedRelation, q: &LinearQuery) -> Result<Self, ReferenceError> {
        let n = r.participants().len();
        capacity("grid oracle", n, MAX_GRID_PARTICIPANTS)?;
        let index: HashMap<&ParticipantId, usize> = r.participants().iter().enumerate().map(|(i, p)| (p, i)).collect();
        let weights = q.weights(r)?;
        let mut rows = Vec::new();
        let mut loads = vec![Vec::new(); n];
        for ((_, k), w) in r.tuples().zip(weights) {
            rows.push((Node::compile(k, &index), w));
            for (p, &i) in &index {
                loads[i].push(w * f64::from(k.phi_sensitivity(p)));
            }
        }
        Ok(Relaxation { n, rows, loads })
    }

    fn h(&self, f: &[f64]) -> f64 {
        self.rows.iter().map(|(k, w)| w * k.phi(f)).sum()
    }

    fn g(&self, f: &[f64]) -> f64 {
        let phis: Vec<f64> = self.rows.iter().map(|(k, _)| k.phi(f)).collect();
        let worst = self
            .loads
            .iter()
            .map(|l| l.iter().zip(&phis).map(|(a, b)| a * b).sum::<f64>())
            .fold(0.0, f64::max);
        2.0 * worst
    }

    /// Grid search on `{0, 1/m, …, 1}^P ∩ {|f| ≈ i}`, then pattern search
    /// along mass-preserving directions with shrinking steps.
    fn minimise<F: Fn(&[f64]) -> f64>(&self, objective: F, i: f64, m: usize) -> f64 {
        let n = self.n;
        if n == 0 {
            return objective(&[]);
        }
        let target = (i * m as f64).round() as usize;
        let mut best = (f64::INFINITY, vec![0.0; n]);
        let mut k = vec![0usize; n];
        loop {
            let head: usize = k[..n - 1].iter().sum();
            if head <= target && target - head <= m {
                k[n - 1] = target - head;
                let f: Vec<f64> = k.iter().map(|&v| v as f64 / m as f64).collect();
                let v = objective(&f);
                if v < best.0 {
                    best = (v, f);
                }
            }
            // odometer over the first n - 1 coordinates
            let mut pos = 0;
            while pos < n - 1 && k[pos] == m {
                k[pos] = 0;
                pos += 1;
            }
            if pos >= n - 1 {
                break;
            }
            k[pos] += 1;
        }
        let mut f = best.1;
        project_mass(&mut f, i);
        let mut value = objective(&f);

        let directions = mass_preserving_directions(n);
        let mut step = 1.0 / m as f64;
        while step > 1e-10 {
            let mut improved = true;
            let mut rounds = 0;
            while improved && rounds < 10_000 {
                improved = false;
                rounds += 1;
                for d in &directions {
                    let cand: Vec<f64> = f.iter().zip(d).map(|(x, &di)| x + step * di).collect();
                    if cand.iter().any(|&x| !(-1e-15..=1.0 + 1e-15).contains(&x)) {
                        continue;
                    }
                    let v = objective(&cand);
                    if v < value - 1e-15 {
                        f = cand;
                        value = v;
                        improved = true;
                    }
                }
            }
            step /= 2.0;
        }
        value
    }
}

/// Shifts `f` so that `Σf = i`, respecting `[0, 1]`.
fn project_mass(f: &mut [f64], i: f64) {
    for _ in 0..f.len() {
        let gap = i - f.iter().sum::<f64>();
        if gap.abs() < 1e-15 {
            return;
        }
        let room: Vec<usize> = (0..f.len())
            .filter(|&j| if gap > 0.0 { f[j] < 1.0 } else { f[j] > 0.0 })
            .collect();
        let share = gap / room.len() as f64;
        for j in room {
            f[j] = (f[j] + share).clamp(0.0, 1.0);
        }
    }
}

/// Integer directions in `{-2..2}^n` with zero sum, nonzero.
fn mass_preserving_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let total = 5usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let d: Vec<i32> = (0..n)
            .map(|_| {
                let v = (c % 5) as i32 - 2;
                c /= 5;
                v
            })
            .collect();
        if d.iter().sum::<i32>() == 0 && d.iter().any(|&v| v != 0) {
            out.push(d.into_iter().map(f64::from).collect());
        }
    }
    out
}

/// Grid-and-polish minimum of `Σ_t q(t) φ_{R(t)}(f)` over `|f| = i`.
pub fn grid_min_h(r: &AnnotatedRelation, q: &LinearQuery, i: f64, m: usize) -> Result<f64, ReferenceError> {
    let rel = Relaxation::new(r, q)?;
    Ok(rel.minimise(|f| rel.h(f), i, m))
}

/// Grid-and-polish minimum of `2 max_p Σ_t q(t) S_{t,p} φ_{R(t)}(f)` over `|f| = i`.
pub fn grid_min_g(r: &AnnotatedRelation, q: &LinearQuery, i: f64, m: usize) -> Result<f64, ReferenceError> {
    let rel = Relaxation::new(r, q)?;
    Ok(rel.minimise(|f| rel.g(f), i, m))
}
