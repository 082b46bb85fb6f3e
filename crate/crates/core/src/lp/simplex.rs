//! Dense bounded-variable primal simplex.
//!
//! Variables carry explicit `[lower, upper]` boxes, so a nonbasic variable
//! sits at one of its bounds and an entering variable may simply flip to the
//! other bound instead of pivoting. Phase one minimises the sum of
//! artificials, phase two the objective. An optional secondary objective is
//! then optimised over the optimal face by fixing every nonbasic variable
//! with a nonzero reduced cost.
//!
//! Pricing is steepest edge, with the squared column norms of the tableau
//! updated during each pivot. After a run of degenerate pivots the solver
//! switches to Bland's rule until the objective moves again.

use std::fmt;

use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-7;
const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;
const DEGENERATE_RUN: usize = 50;
/// Pivots between recomputations of the basic values from `B⁻¹b`.
const REFRESH_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("variable {var} has bounds [{lower}, {upper}]; finite bounds with lower <= upper required")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("constraint {row} references variable {var}, which does not exist")]
    UnknownVariable { row: usize, var: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("objective is unbounded")]
    Unbounded,
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primary objective at the returned point (including the constant offset).
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// `minimize c·x + offset` subject to linear rows and finite variable boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    offset: f64,
    rows: Vec<Constraint>,
    tiebreak: Option<Vec<f64>>,
    start_upper: bool,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds and objective coefficient; returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        if let Some(t) = self.tiebreak.as_mut() {
            t.push(0.0);
        }
        self.lower.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(Constraint { coeffs, relation, rhs });
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.cost[var] = cost;
    }

    pub fn add_cost(&mut self, var: usize, cost: f64) {
        self.cost[var] += cost;
    }

    pub fn add_offset(&mut self, c: f64) {
        self.offset += c;
    }

    /// Starts the simplex with every variable at its upper bound instead of
    /// its lower bound. Only the path to the optimum changes.
    pub fn start_at_upper_bounds(&mut self, yes: bool) {
        self.start_upper = yes;
    }

    /// Secondary objective, minimised among the optima of the primary one.
    pub fn set_tiebreak(&mut self, costs: Vec<(usize, f64)>) {
        let mut t = vec![0.0; self.num_vars()];
        for (j, c) in costs {
            t[j] += c;
        }
        self.tiebreak = Some(t);
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    fn validate(&self) -> Result<(), LpError> {
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(LpError::InvalidBounds { var: j, lower: lo, upper: hi });
            }
        }
        if !self.cost.iter().all(|c| c.is_finite()) || !self.offset.is_finite() {
            return Err(LpError::NonFinite("objective"));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite("right-hand side"));
            }
            for &(j, a) in &row.coeffs {
                if j >= self.num_vars() {
                    return Err(LpError::UnknownVariable { row: i, var: j });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite("constraint"));
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.validate()?;
        let mut tab = Tableau::build(self);
        let iter_limit = 200 * (tab.m + tab.ncols) + 10_000;

        let phase1: Vec<f64> = (0..tab.ncols)
            .map(|j| if j >= tab.first_artificial { 1.0 } else { 0.0 })
            .collect();
        tab.optimize(&phase1, iter_limit)?;
        let infeasibility: f64 = (0..tab.m)
            .filter(|&i| tab.basis[i] >= tab.first_artificial)
            .map(|i| tab.beta[i].max(0.0))
            .sum();
        if infeasibility > FEASIBILITY_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                values: tab.structural_values(),
                iterations: tab.iterations,
            });
        }
        tab.retire_artificials();

        let mut cost = self.cost.clone();
        cost.resize(tab.ncols, 0.0);
        tab.optimize(&cost, iter_limit)?;

        if let Some(tiebreak) = &self.tiebreak {
            tab.fix_nonoptimal_face();
            let mut t = tiebreak.clone();
            t.resize(tab.ncols, 0.0);
            tab.optimize(&t, iter_limit)?;
        }

        let values = tab.structural_values();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: self.objective_value(&values),
            values,
            iterations: tab.iterations,
        })
    }
}

/// Plain-text dump: `minimize`, `subject to`, `bounds` sections.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn terms(coeffs: impl Iterator<Item = (usize, f64)>) -> String {
            let parts: Vec<String> = coeffs
                .filter(|&(_, c)| c != 0.0)
                .map(|(j, c)| format!("{c:+} x{j}"))
                .collect();
            if parts.is_empty() {
                "0".into()
            } else {
                parts.join(" ")
            }
        }
        writeln!(f, "minimize")?;
        writeln!(f, "  {} {:+}", terms(self.cost.iter().copied().enumerate()), self.offset)?;
        writeln!(f, "subject to")?;
        for (i, row) in self.rows.iter().enumerate() {
            let op = match row.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            writeln!(f, "  c{i}: {} {op} {}", terms(row.coeffs.iter().copied()), row.rhs)?;
        }
        writeln!(f, "bounds")?;
        for j in 0..self.num_vars() {
            writeln!(f, "  {} <= x{j} <= {}", self.lower[j], self.upper[j])?;
        }
        Ok(())
    }
}

const NONBASIC: usize = usize::MAX;

struct Tableau {
    m: usize,
    ncols: usize,
    nstruct: usize,
    first_artificial: usize,
    /// `B⁻¹A`, row-major.
    t: Vec<f64>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    /// `B⁻¹b`, pivoted along with `t`.
    rhs: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    at_upper: Vec<bool>,
    d: Vec<f64>,
    /// `1 + ‖column j‖²` of the tableau.
    gamma: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let m = lp.rows.len();
        let nstruct = lp.num_vars();
        let nslack = lp.rows.iter().filter(|r| r.relation != Relation::Eq).count();

        // rows normalised to `≤` or `=`, and their residual at the start point
        let start = if lp.start_upper { &lp.upper } else { &lp.lower };
        let mut dense = vec![vec![]; m];
        let mut rhs = vec![0.0; m];
        let mut residual = vec![0.0; m];
        let mut needs_artificial = vec![false; m];
        for (i, row) in lp.rows.iter().enumerate() {
            let sign = if row.relation == Relation::Ge { -1.0 } else { 1.0 };
            let coeffs: Vec<(usize, f64)> = row.coeffs.iter().map(|&(j, a)| (j, sign * a)).collect();
            let at_start: f64 = coeffs.iter().map(|&(j, a)| a * start[j]).sum();
            rhs[i] = sign * row.rhs;
            residual[i] = rhs[i] - at_start;
            needs_artificial[i] = row.relation == Relation::Eq || residual[i] < 0.0;
            dense[i] = coeffs;
        }
        let nart = needs_artificial.iter().filter(|&&b| b).count();
        let ncols = nstruct + nslack + nart;
        let first_artificial = nstruct + nslack;

        let mut tab = Tableau {
            m,
            ncols,
            nstruct,
            first_artificial,
            t: vec![0.0; m * ncols],
            beta: vec![0.0; m],
            rhs,
            basis: vec![0; m],
            row_of: vec![NONBASIC; ncols],
            lo: vec![0.0; ncols],
            hi: vec![f64::INFINITY; ncols],
            at_upper: vec![false; ncols],
            d: vec![0.0; ncols],
            gamma: vec![1.0; ncols],
            iterations: 0,
        };
        tab.lo[..nstruct].copy_from_slice(&lp.lower);
        tab.hi[..nstruct].copy_from_slice(&lp.upper);
        if lp.start_upper {
            tab.at_upper[..nstruct].fill(true);
        }

        let mut slack = nstruct;
        let mut art = first_artificial;
        for i in 0..m {
            let row = &mut tab.t[i * ncols..(i + 1) * ncols];
            for &(j, a) in &dense[i] {
                row[j] += a;
            }
            let slack_col = if lp.rows[i].relation != Relation::Eq {
                row[slack] = 1.0;
                slack += 1;
                Some(slack - 1)
            } else {
                None
            };
            if needs_artificial[i] {
                // artificial enters with the sign that makes it nonnegative
                let sigma = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
                row[art] = sigma;
                if sigma < 0.0 {
                    row.iter_mut().for_each(|v| *v = -*v);
                    tab.rhs[i] = -tab.rhs[i];
                }
                tab.basis[i] = art;
                tab.row_of[art] = i;
                tab.beta[i] = residual[i].abs();
                art += 1;
            } else {
                let s = slack_col.expect("rows without artificials are inequalities");
                tab.basis[i] = s;
                tab.row_of[s] = i;
                tab.beta[i] = residual[i];
            }
        }
        tab.refresh_gamma();
        tab
    }

    fn value(&self, j: usize) -> f64 {
        if self.row_of[j] != NONBASIC {
            self.beta[self.row_of[j]]
        } else if self.at_upper[j] {
            self.hi[j]
        } else {
            self.lo[j]
        }
    }

    /// Recomputes the basic values as `B⁻¹b - B⁻¹N x_N`, discarding the
    /// drift of the incremental updates.
    fn refresh_beta(&mut self) {
        let nonbasic: Vec<(usize, f64)> = (0..self.ncols)
            .filter(|&j| self.row_of[j] == NONBASIC)
            .map(|j| (j, self.value(j)))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        for i in 0..self.m {
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            self.beta[i] = self.rhs[i] - nonbasic.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
        }
    }

    fn refresh_gamma(&mut self) {
        self.gamma.fill(1.0);
        for row in self.t.chunks_exact(self.ncols) {
            for (g, &a) in self.gamma.iter_mut().zip(row) {
                *g += a * a;
            }
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        (0..self.nstruct)
            .map(|j| self.value(j).clamp(self.lo[j], self.hi[j]))
            .collect()
    }

    fn reset_reduced_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for (dj, &a) in self.d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncols {
            if self.row_of[j] != NONBASIC || self.hi[j] <= self.lo[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if !self.at_upper[j] && dj < -OPTIMALITY_TOL {
                1.0
            } else if self.at_upper[j] && dj > OPTIMALITY_TOL {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            let score = dj * dj / self.gamma[j];
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn optimize(&mut self, cost: &[f64], iter_limit: usize) -> Result<(), LpError> {
        self.reset_reduced_costs(cost);
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let Some((q, dir)) = self.choose_entering(bland) else {
                self.refresh_beta();
                return Ok(());
            };
            self.iterations += 1;
            if self.iterations.is_multiple_of(REFRESH_EVERY) {
                self.refresh_beta();
                self.refresh_gamma();
            }
            if self.iterations > iter_limit {
                return Err(LpError::IterationLimit(iter_limit));
            }

            // ratio test
            let mut step = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0;
            for i in 0..self.m {
                let alpha = self.t[i * self.ncols + q] * dir;
                let b = self.basis[i];
                let limit = if alpha > PIVOT_TOL {
                    ((self.beta[i] - self.lo[b]) / alpha).max(0.0)
                } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                    ((self.hi[b] - self.beta[i]) / -alpha).max(0.0)
                } else {
                    continue;
                };
                let better = if limit < step - 1e-12 {
                    true
                } else if limit <= step + 1e-12 {
                    match leave {
                        Some((r, _)) if bland => b < self.basis[r],
                        Some(_) => alpha.abs() > leave_alpha,
                        None => true,
                    }
                } else {
                    false
                };
                if better {
                    step = limit;
                    leave = Some((i, alpha < 0.0));
                    leave_alpha = alpha.abs();
                }
            }
            if !step.is_finite() {
                return Err(LpError::Unbounded);
            }
            if step > 1e-12 {
                degenerate = 0;
            } else {
                degenerate += 1;
            }

            let entering_value = self.value(q) + dir * step;
            if step != 0.0 {
                for i in 0..self.m {
                    let a = self.t[i * self.ncols + q];
                    if a != 0.0 {
                        self.beta[i] -= a * dir * step;
                    }
                }
            }
            match leave {
                None => self.at_upper[q] = !self.at_upper[q],
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.at_upper[out] = to_upper;
                    self.row_of[out] = NONBASIC;
                    self.beta[r] = entering_value;
                    self.basis[r] = q;
                    self.row_of[q] = r;
                    self.pivot(r, q);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.ncols;
        let piv = self.t[r * n + q];
        let mut nz = Vec::new();
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            let inv = 1.0 / piv;
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    let old = *v;
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        nz.push(j);
                    }
                    self.gamma[j] += *v * *v - old * old;
                }
            }
            row[q] = 1.0;
            self.rhs[r] *= inv;
        }
        let rhs_r = self.rhs[r];
        let (before, rest) = self.t.split_at_mut(r * n);
        let (pivot_row, after) = rest.split_at_mut(n);
        for (i, row) in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)).enumerate() {
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            let i = if i < r { i } else { i + 1 };
            self.rhs[i] -= f * rhs_r;
            for &j in &nz {
                let old = row[j];
                let v = old - f * pivot_row[j];
                let v = if v.abs() < DROP_TOL { 0.0 } else { v };
                row[j] = v;
                self.gamma[j] += v * v - old * old;
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * pivot_row[j];
            }
            self.d[q] = 0.0;
        }
    }

    /// Pivots basic artificials out where possible and fixes all artificials at zero.
    fn retire_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let row = &self.t[r * self.ncols..(r + 1) * self.ncols];
            let candidate = (0..self.first_artificial)
                .filter(|&j| self.row_of[j] == NONBASIC)
                .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()))
                .filter(|&j| row[j].abs() > PIVOT_TOL);
            let Some(j) = candidate else { continue };
            // degenerate exchange: move x_j just enough to zero the artificial
            let shift = self.beta[r] / row[j];
            let entering_value = self.value(j) + shift;
            for i in 0..self.m {
                let a = self.t[i * self.ncols + j];
                if a != 0.0 {
                    self.beta[i] -= a * shift;
                }
            }
            let out = self.basis[r];
            self.row_of[out] = NONBASIC;
            self.at_upper[out] = false;
            self.beta[r] = entering_value;
            self.basis[r] = j;
            self.row_of[j] = r;
            self.pivot(r, j);
        }
        for j in self.first_artificial..self.ncols {
            self.lo[j] = 0.0;
            self.hi[j] = 0.0;
            self.at_upper[j] = false;
        }
    }

    /// Restricts the feasible set to the optimal face of the current objective.
    fn fix_nonoptimal_face(&mut self) {
        for j in 0..self.ncols {
            if self.row_of[j] == NONBASIC && self.d[j].abs() > OPTIMALITY_TOL {
                let v = self.value(j);
                self.lo[j] = v;
                self.hi[j] = v;
                self.at_upper[j] = false;
            }
        }
    }
}
