//! H and G as linear programs over a fixed relation and query.
//!
//! Participants that occur in no weighted annotation only contribute mass to
//! `|f|`, so they are pooled into one column `w ∈ [0, n_free]`.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::encode::{encode_phi, Term};
use super::simplex::{LinearProgram, LpError, LpStatus, Relation};
use crate::expr::ParticipantId;
use crate::krelation::{AnnotatedRelation, LinearQuery, RelationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceError {
    #[error("index {i} outside [0, {n}]")]
    OutOfRange { i: f64, n: usize },
    #[error("delta_hat must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("internal error: relaxation program reported infeasible")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// Evaluates `H_i`, `G_i` and the fractional minimiser `i′` for one relation.
#[derive(Debug, Clone)]
pub struct SequenceEvaluator {
    n: usize,
    /// Encoding columns and rows; objective is `Σ_t q(t) φ_{R(t)}`.
    base: LinearProgram,
    /// Columns whose sum is `|f|`.
    mass_cols: Vec<usize>,
    /// Per participant: coefficients and constant of `Σ_t q(t) S_{t,p} φ_t`.
    load_rows: Vec<(Vec<(usize, f64)>, f64)>,
    load_bound: f64,
    true_answer: f64,
    h_cache: BTreeMap<usize, f64>,
    g_cache: BTreeMap<usize, f64>,
}

impl SequenceEvaluator {
    pub fn new(r: &AnnotatedRelation, q: &LinearQuery) -> Result<Self, SequenceError> {
        let weights = q.weights(r)?;
        let true_answer = r.query_true_answer(q)?;
        let rows: Vec<_> = r
            .tuples()
            .zip(&weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|((_, k), &w)| (k, w))
            .collect();

        let mut occurring: Vec<&ParticipantId> = rows.iter().flat_map(|(k, _)| k.variables()).collect();
        occurring.sort();
        occurring.dedup();

        let mut base = LinearProgram::new();
        let mut col_of: HashMap<&ParticipantId, usize> = HashMap::new();
        let mut mass_cols = Vec::new();
        for &p in &occurring {
            let j = base.add_var(0.0, 1.0, 0.0);
            col_of.insert(p, j);
            mass_cols.push(j);
        }
        let n = r.participants().len();
        let n_free = n - occurring.len();
        if n_free > 0 {
            mass_cols.push(base.add_var(0.0, n_free as f64, 0.0));
        }

        let var = |p: &ParticipantId| Term::Col(col_of[p]);
        let mut loads: BTreeMap<&ParticipantId, (HashMap<usize, f64>, f64)> = BTreeMap::new();
        for &(k, w) in &rows {
            let term = encode_phi(&mut base, k, &var);
            match term {
                Term::Const(c) => base.add_offset(w * c),
                Term::Col(j) => base.add_cost(j, w),
            }
            for p in k.variables() {
                let s = f64::from(k.phi_sensitivity(p));
                if s == 0.0 {
                    continue;
                }
                let entry = loads.entry(p).or_default();
                match term {
                    Term::Const(c) => entry.1 += w * s * c,
                    Term::Col(j) => *entry.0.entry(j).or_default() += w * s,
                }
            }
        }
        let mut load_bound: f64 = 0.0;
        let load_rows = loads
            .into_values()
            .map(|(coeffs, c)| {
                let mut coeffs: Vec<(usize, f64)> = coeffs.into_iter().collect();
                coeffs.sort_by_key(|&(j, _)| j);
                load_bound = load_bound.max(coeffs.iter().map(|&(_, a)| a).sum::<f64>() + c);
                (coeffs, c)
            })
            .collect();

        Ok(SequenceEvaluator {
            n,
            base,
            mass_cols,
            load_rows,
            load_bound,
            true_answer,
            h_cache: BTreeMap::new(),
            g_cache: BTreeMap::new(),
        })
    }

    /// `|P|`.
    pub fn num_participants(&self) -> usize {
        self.n
    }

    /// `q(R)` on the full relation.
    pub fn true_answer(&self) -> f64 {
        self.true_answer
    }

    /// Columns of the H program (participants, pooled mass and φ nodes).
    pub fn num_lp_vars(&self) -> usize {
        self.base.num_vars()
    }

    pub fn h_values(&self) -> &BTreeMap<usize, f64> {
        &self.h_cache
    }

    pub fn g_values(&self) -> &BTreeMap<usize, f64> {
        &self.g_cache
    }

    fn check_index(&self, i: f64) -> Result<(), SequenceError> {
        if !(0.0..=self.n as f64).contains(&i) {
            return Err(SequenceError::OutOfRange { i, n: self.n });
        }
        Ok(())
    }

    /// Adds `|f| = i`. Every other row holds at both the all-lower and the
    /// all-upper corner, so the simplex starts from the nearer one.
    fn with_mass(&self, mut lp: LinearProgram, i: f64) -> LinearProgram {
        lp.add_constraint(self.mass_cols.iter().map(|&j| (j, 1.0)).collect(), Relation::Eq, i);
        lp.start_at_upper_bounds(2.0 * i > self.n as f64);
        lp
    }

    fn solve_value(lp: &LinearProgram) -> Result<f64, SequenceError> {
        let s = lp.solve()?;
        match s.status {
            LpStatus::Optimal => Ok(s.objective.max(0.0)),
            LpStatus::Infeasible => Err(SequenceError::Infeasible),
        }
    }

    /// `H_i`: min of `Σ_t q(t) φ_{R(t)}(f)` over `f ∈ [0,1]^P` with `|f| = i`.
    /// Fractional `i` is allowed; integer values are cached.
    pub fn eval_h(&mut self, i: f64) -> Result<f64, SequenceError> {
        self.check_index(i)?;
        let integral = i.fract() == 0.0;
        if integral {
            if let Some(&v) = self.h_cache.get(&(i as usize)) {
                return Ok(v);
            }
        }
        let v = Self::solve_value(&self.with_mass(self.base.clone(), i))?;
        if integral {
            self.h_cache.insert(i as usize, v);
        }
        Ok(v)
    }

    /// `G_i = 2 min_{|f| = i} max_p Σ_t q(t) S_{t,p} φ_{R(t)}(f)`.
    pub fn eval_g(&mut self, i: usize) -> Result<f64, SequenceError> {
        self.check_index(i as f64)?;
        if let Some(&v) = self.g_cache.get(&i) {
            return Ok(v);
        }
        let mut lp = self.base.clone();
        for j in 0..lp.num_vars() {
            lp.set_cost(j, 0.0);
        }
        lp.add_offset(-self.base.objective_value(&vec![0.0; lp.num_vars()]));
        let u = lp.add_var(0.0, self.load_bound.max(0.0) + 1.0, 2.0);
        for (coeffs, c) in &self.load_rows {
            let mut row = coeffs.clone();
            row.push((u, -1.0));
            lp.add_constraint(row, Relation::Le, -c);
        }
        let v = Self::solve_value(&self.with_mass(lp, i as f64))?;
        self.g_cache.insert(i, v);
        Ok(v)
    }

    /// `i′ = |f|` at the minimum of `Σ_t q(t) φ_{R(t)}(f) - Δ̂ |f|` over the
    /// whole cube; among optimal points the one with the largest `|f|`.
    pub fn fractional_argmin_i(&mut self, delta_hat: f64) -> Result<f64, SequenceError> {
        if !(delta_hat > 0.0 && delta_hat.is_finite()) {
            return Err(SequenceError::InvalidDelta(delta_hat));
        }
        let mut lp = self.base.clone();
        for &j in &self.mass_cols {
            lp.add_cost(j, -delta_hat);
        }
        lp.set_tiebreak(self.mass_cols.iter().map(|&j| (j, -1.0)).collect());
        lp.start_at_upper_bounds(true);
        let s = lp.solve()?;
        if s.status != LpStatus::Optimal {
            return Err(SequenceError::Infeasible);
        }
        let mass: f64 = self.mass_cols.iter().map(|&j| s.values[j]).sum();
        Ok(mass.clamp(0.0, self.n as f64))
    }
}
