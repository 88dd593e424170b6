//! Deterministic linear programming: a self-contained dense two-phase
//! simplex with Bland's anti-cycling pivot rule, and the witness-region
//! dominance test built on it.
//!
//! Determinism is the point: identical inputs take identical pivot paths
//! and yield bit-identical answers, which keeps pruning output and LP
//! counts reproducible across runs and algorithm variants.

use crate::error::{Error, Result};
use crate::model::Belief;
use crate::pwlc::{AlphaVector, FilterStats};

/// Strict-positivity threshold for the dominance margin delta.
pub const EPSILON_DELTA: f64 = 1e-9;

/// Sentinel margin returned when a vector is compared against nothing:
/// its witness region is the whole simplex.
pub const MAX_MARGIN: f64 = f64::MAX;

/// Pivot budget before the solver reports a degenerate cycling instance.
pub const PIVOT_BUDGET: usize = 10_000;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const RATIO_RELAX: f64 = 1e-9;
// Margins this close to EPSILON_DELTA are reclassified exactly; a clean
// game-form solve carries ~1e-12 error, so the band is generous while
// excluding the common exact-tie case (margin 0).
const BORDERLINE_BAND: f64 = 5e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    GreaterEq,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub bound: f64,
}

/// `maximize objective . v` subject to the listed constraints. Variables
/// marked in `nonneg` are restricted to `v >= 0`; the rest are free.
/// `names` is optional debugging metadata (`x(s)` variables plus `delta`
/// in dominance usage).
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub nonneg: Vec<bool>,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { assignment: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// A belief and strictly positive margin certifying a non-empty witness
/// region.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceWitness {
    pub x: Belief,
    pub delta: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m rows, each ncols + 1 wide (rhs last)
    obj: Vec<f64>,       // reduced-cost row, ncols + 1 wide
    basis: Vec<usize>,
    ncols: usize,
    pivots: usize,
    trace: bool,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let scale = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= scale;
        }
        for r in 0..self.rows.len() {
            if r == row {
                continue;
            }
            let factor = self.rows[r][col];
            if factor != 0.0 {
                for c in 0..=self.ncols {
                    let delta = factor * self.rows[row][c];
                    self.rows[r][c] -= delta;
                }
            }
        }
        let factor = self.obj[col];
        if factor != 0.0 {
            for c in 0..=self.ncols {
                self.obj[c] -= factor * self.rows[row][c];
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Runs simplex iterations until optimal or unbounded.
    ///
    /// Entering column: smallest index with positive reduced cost (Bland).
    /// Leaving row: two-pass ratio test — a slightly relaxed ratio limit
    /// first, then the largest pivot element among rows inside the limit
    /// (ties toward the smallest basic variable index). The relaxation
    /// keeps degenerate ties from forcing pivots on near-zero elements.
    fn iterate(&mut self, allowed_cols: usize) -> Result<bool> {
        loop {
            let mut entering = None;
            for c in 0..allowed_cols {
                if self.obj[c] > PIVOT_TOL {
                    entering = Some(c);
                    break;
                }
            }
            let col = match entering {
                None => return Ok(true), // optimal
                Some(c) => c,
            };
            // rhs entries can drift a hair negative on degenerate rows.
            let mut limit = f64::INFINITY;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_TOL {
                    limit = limit.min((self.rhs(r).max(0.0) + RATIO_RELAX) / a);
                }
            }
            if limit == f64::INFINITY {
                if self.trace {
                    eprintln!(
                        "unbounded at pivot {}: col {col} obj {:.3e}, column max {:.3e}",
                        self.pivots,
                        self.obj[col],
                        (0..self.rows.len())
                            .map(|r| self.rows[r][col])
                            .fold(f64::NEG_INFINITY, f64::max)
                    );
                }
                return Ok(false); // unbounded direction
            }
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_TOL && self.rhs(r).max(0.0) / a <= limit {
                    match leave {
                        None => leave = Some((r, a)),
                        Some((best_r, best_a)) => {
                            if a > best_a || (a == best_a && self.basis[r] < self.basis[best_r]) {
                                leave = Some((r, a));
                            }
                        }
                    }
                }
            }
            let (row, _) = leave.expect("a finite ratio limit admits at least one row");
            if self.trace {
                eprintln!(
                    "pivot {}: col {col} (obj {:.3e}) row {row} (basis {} a {:.3e} rhs {:.3e}) limit {:.3e}",
                    self.pivots, self.obj[col], self.basis[row], self.rows[row][col],
                    self.rhs(row), limit
                );
            }
            self.pivot(row, col);
            if self.pivots > PIVOT_BUDGET {
                return Err(Error::NumericalFailure {
                    pivots: self.pivots,
                });
            }
        }
    }
}

/// Solves the problem with a two-phase dense simplex.
///
/// Double precision is the fast path. Any outcome it cannot certify as a
/// clean optimum (infeasible, unbounded, or a stalled pivot sequence) is
/// settled by the exact rational-arithmetic simplex, where Bland's rule
/// provably terminates. Deterministic: identical inputs yield bit-identical
/// outcomes. Optimal assignments satisfy every constraint within 1e-9.
pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome> {
    match solve_lp_f64(p) {
        Ok(LpOutcome::Optimal {
            assignment,
            objective,
        }) => Ok(LpOutcome::Optimal {
            assignment,
            objective,
        }),
        Ok(LpOutcome::Infeasible) | Ok(LpOutcome::Unbounded) | Err(Error::NumericalFailure { .. }) => {
            exact::solve(p)
        }
        Err(e) => Err(e),
    }
}

fn solve_lp_f64(p: &LpProblem) -> Result<LpOutcome> {
    let nvars = p.objective.len();
    assert_eq!(p.nonneg.len(), nvars, "nonneg flags must cover all variables");

    // Structural columns: one per nonnegative variable, a (plus, minus)
    // pair per free variable.
    let mut plus_col = Vec::with_capacity(nvars);
    let mut minus_col = Vec::with_capacity(nvars);
    let mut ncols = 0;
    for &nn in &p.nonneg {
        plus_col.push(ncols);
        ncols += 1;
        if nn {
            minus_col.push(None);
        } else {
            minus_col.push(Some(ncols));
            ncols += 1;
        }
    }
    let nstruct = ncols;

    // Rows normalized to b >= 0 with relation tracked per row.
    enum Row {
        Le,
        Ge,
        Eq,
    }
    let m = p.constraints.len();
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rels: Vec<Row> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    for c in &p.constraints {
        assert_eq!(c.coeffs.len(), nvars, "constraint width mismatch");
        // Negating rows keeps b >= 0; a >= row with b = 0 also flips so its
        // slack can start basic instead of wasting an artificial.
        let flip = c.bound < 0.0 || (c.bound == 0.0 && c.relation == Relation::GreaterEq);
        let sign = if flip { -1.0 } else { 1.0 };
        let mut row = vec![0.0; nstruct];
        for (j, &v) in c.coeffs.iter().enumerate() {
            row[plus_col[j]] = sign * v;
            if let Some(mc) = minus_col[j] {
                row[mc] = -sign * v;
            }
        }
        coeffs.push(row);
        rhs.push(sign * c.bound);
        rels.push(match (c.relation, flip) {
            (Relation::Eq, _) => Row::Eq,
            (Relation::GreaterEq, false) => Row::Ge,
            (Relation::GreaterEq, true) => Row::Le,
        });
    }

    // Slack / surplus columns, then artificials.
    let mut nslack = 0;
    for r in &rels {
        if !matches!(r, Row::Eq) {
            nslack += 1;
        }
    }
    let mut nart = 0;
    for (i, r) in rels.iter().enumerate() {
        match r {
            Row::Le => {}
            Row::Ge | Row::Eq => {
                let _ = i;
                nart += 1;
            }
        }
    }
    let total = nstruct + nslack + nart;
    let art_start = nstruct + nslack;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis = vec![0usize; m];
    let mut slack_idx = nstruct;
    let mut art_idx = art_start;
    for i in 0..m {
        let mut row = vec![0.0; total + 1];
        row[..nstruct].copy_from_slice(&coeffs[i]);
        row[total] = rhs[i];
        match rels[i] {
            Row::Le => {
                row[slack_idx] = 1.0;
                basis[i] = slack_idx;
                slack_idx += 1;
            }
            Row::Ge => {
                row[slack_idx] = -1.0;
                slack_idx += 1;
                row[art_idx] = 1.0;
                basis[i] = art_idx;
                art_idx += 1;
            }
            Row::Eq => {
                row[art_idx] = 1.0;
                basis[i] = art_idx;
                art_idx += 1;
            }
        }
        rows.push(row);
    }

    let mut t = Tableau {
        rows,
        obj: vec![0.0; total + 1],
        basis,
        ncols: total,
        pivots: 0,
        trace: std::env::var_os("INCPRUNE_LP_TRACE").is_some(),
    };

    // Phase 1: maximize -(sum of artificials). Price out basic artificials.
    if nart > 0 {
        for c in art_start..total {
            t.obj[c] = -1.0;
        }
        for r in 0..m {
            if t.basis[r] >= art_start {
                for c in 0..=total {
                    let v = t.rows[r][c];
                    t.obj[c] += v;
                }
            }
        }
        if !t.iterate(total)? {
            // Phase-1 objective is bounded above by zero.
            return Err(Error::NumericalFailure { pivots: t.pivots });
        }
        // The objective row's rhs tracks the artificial sum directly.
        let infeasibility = t.obj[total];
        if infeasibility > FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining basic artificials out, or drop their redundant rows.
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= art_start {
                let mut pivot_col = None;
                for c in 0..art_start {
                    if t.rows[r][c].abs() > PIVOT_TOL {
                        pivot_col = Some(c);
                        break;
                    }
                }
                match pivot_col {
                    Some(c) => t.pivot(r, c),
                    None => {
                        t.rows.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    // Phase 2 over structural + slack columns only.
    for c in 0..=total {
        t.obj[c] = 0.0;
    }
    for j in 0..nvars {
        t.obj[plus_col[j]] = p.objective[j];
        if let Some(mc) = minus_col[j] {
            t.obj[mc] = -p.objective[j];
        }
    }
    for r in 0..t.rows.len() {
        let factor = t.obj[t.basis[r]];
        if factor != 0.0 {
            for c in 0..=total {
                let v = t.rows[r][c];
                t.obj[c] -= factor * v;
            }
        }
    }
    if !t.iterate(art_start)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut cols = vec![0.0; total];
    for r in 0..t.rows.len() {
        cols[t.basis[r]] = t.rhs(r);
    }
    let mut assignment = Vec::with_capacity(nvars);
    for j in 0..nvars {
        let v = cols[plus_col[j]]
            - minus_col[j].map(|mc| cols[mc]).unwrap_or(0.0);
        assignment.push(v);
    }
    let objective = p
        .objective
        .iter()
        .zip(&assignment)
        .map(|(c, v)| c * v)
        .sum();
    Ok(LpOutcome::Optimal {
        assignment,
        objective,
    })
}

/// Exact simplex over arbitrary-precision rationals. Used to settle
/// instances the floating-point path cannot: with exact arithmetic,
/// Bland's rule terminates and every verdict is provable.
mod exact {
    use super::{Error, LpOutcome, LpProblem, Relation, Result};
    use num_rational::BigRational;
    use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

    type Q = BigRational;

    fn q(x: f64) -> Q {
        Q::from_f64(x).expect("LP coefficients are finite")
    }

    struct Tableau {
        rows: Vec<Vec<Q>>,
        obj: Vec<Q>,
        basis: Vec<usize>,
        ncols: usize,
        pivots: usize,
    }

    impl Tableau {
        fn pivot(&mut self, row: usize, col: usize) {
            let scale = self.rows[row][col].clone();
            for v in self.rows[row].iter_mut() {
                *v /= scale.clone();
            }
            for r in 0..self.rows.len() {
                if r == row {
                    continue;
                }
                let factor = self.rows[r][col].clone();
                if !factor.is_zero() {
                    for c in 0..=self.ncols {
                        let delta = &factor * &self.rows[row][c];
                        self.rows[r][c] -= delta;
                    }
                }
            }
            let factor = self.obj[col].clone();
            if !factor.is_zero() {
                for c in 0..=self.ncols {
                    let delta = &factor * &self.rows[row][c];
                    self.obj[c] -= delta;
                }
            }
            self.basis[row] = col;
            self.pivots += 1;
        }

        /// Bland's rule with exact comparisons: smallest improving column,
        /// minimum ratio with ties toward the smallest basic variable.
        fn iterate(&mut self, allowed_cols: usize) -> Result<bool> {
            loop {
                let mut entering = None;
                for c in 0..allowed_cols {
                    if self.obj[c].is_positive() {
                        entering = Some(c);
                        break;
                    }
                }
                let col = match entering {
                    None => return Ok(true),
                    Some(c) => c,
                };
                let mut leave: Option<(usize, Q)> = None;
                for r in 0..self.rows.len() {
                    if self.rows[r][col].is_positive() {
                        let ratio = &self.rows[r][self.ncols] / &self.rows[r][col];
                        let better = match &leave {
                            None => true,
                            Some((best_r, best_ratio)) => {
                                ratio < *best_ratio
                                    || (ratio == *best_ratio
                                        && self.basis[r] < self.basis[*best_r])
                            }
                        };
                        if better {
                            leave = Some((r, ratio));
                        }
                    }
                }
                let row = match leave {
                    None => return Ok(false),
                    Some((r, _)) => r,
                };
                self.pivot(row, col);
                if self.pivots > 1_000_000 {
                    return Err(Error::NumericalFailure {
                        pivots: self.pivots,
                    });
                }
            }
        }
    }

    pub(super) fn solve(p: &LpProblem) -> Result<LpOutcome> {
        let nvars = p.objective.len();
        let mut plus_col = Vec::with_capacity(nvars);
        let mut minus_col = Vec::with_capacity(nvars);
        let mut ncols = 0;
        for &nn in &p.nonneg {
            plus_col.push(ncols);
            ncols += 1;
            if nn {
                minus_col.push(None);
            } else {
                minus_col.push(Some(ncols));
                ncols += 1;
            }
        }
        let nstruct = ncols;

        enum Row {
            Le,
            Ge,
            Eq,
        }
        let m = p.constraints.len();
        let mut coeffs: Vec<Vec<Q>> = Vec::with_capacity(m);
        let mut rels: Vec<Row> = Vec::with_capacity(m);
        let mut rhs: Vec<Q> = Vec::with_capacity(m);
        for c in &p.constraints {
            let flip = c.bound < 0.0 || (c.bound == 0.0 && c.relation == Relation::GreaterEq);
            let sign = if flip { -1.0 } else { 1.0 };
            let mut row = vec![Q::zero(); nstruct];
            for (j, &v) in c.coeffs.iter().enumerate() {
                row[plus_col[j]] = q(sign * v);
                if let Some(mc) = minus_col[j] {
                    row[mc] = q(-sign * v);
                }
            }
            coeffs.push(row);
            rhs.push(q(sign * c.bound));
            rels.push(match (c.relation, flip) {
                (Relation::Eq, _) => Row::Eq,
                (Relation::GreaterEq, false) => Row::Ge,
                (Relation::GreaterEq, true) => Row::Le,
            });
        }

        let mut nslack = 0;
        for r in &rels {
            if !matches!(r, Row::Eq) {
                nslack += 1;
            }
        }
        let mut nart = 0;
        for r in &rels {
            if matches!(r, Row::Ge | Row::Eq) {
                nart += 1;
            }
        }
        let total = nstruct + nslack + nart;
        let art_start = nstruct + nslack;

        let mut rows: Vec<Vec<Q>> = Vec::with_capacity(m);
        let mut basis = vec![0usize; m];
        let mut slack_idx = nstruct;
        let mut art_idx = art_start;
        for i in 0..m {
            let mut row = vec![Q::zero(); total + 1];
            row[..nstruct].clone_from_slice(&coeffs[i]);
            row[total] = rhs[i].clone();
            match rels[i] {
                Row::Le => {
                    row[slack_idx] = q(1.0);
                    basis[i] = slack_idx;
                    slack_idx += 1;
                }
                Row::Ge => {
                    row[slack_idx] = q(-1.0);
                    slack_idx += 1;
                    row[art_idx] = q(1.0);
                    basis[i] = art_idx;
                    art_idx += 1;
                }
                Row::Eq => {
                    row[art_idx] = q(1.0);
                    basis[i] = art_idx;
                    art_idx += 1;
                }
            }
            rows.push(row);
        }

        let mut t = Tableau {
            rows,
            obj: vec![Q::zero(); total + 1],
            basis,
            ncols: total,
            pivots: 0,
        };

        if nart > 0 {
            for c in art_start..total {
                t.obj[c] = q(-1.0);
            }
            for r in 0..m {
                if t.basis[r] >= art_start {
                    for c in 0..=total {
                        let v = t.rows[r][c].clone();
                        t.obj[c] += v;
                    }
                }
            }
            if !t.iterate(total)? {
                return Err(Error::NumericalFailure { pivots: t.pivots });
            }
            if t.obj[total].is_positive() {
                return Ok(LpOutcome::Infeasible);
            }
            let mut r = 0;
            while r < t.rows.len() {
                if t.basis[r] >= art_start {
                    let mut pivot_col = None;
                    for c in 0..art_start {
                        if !t.rows[r][c].is_zero() {
                            pivot_col = Some(c);
                            break;
                        }
                    }
                    match pivot_col {
                        Some(c) => t.pivot(r, c),
                        None => {
                            t.rows.remove(r);
                            t.basis.remove(r);
                            continue;
                        }
                    }
                }
                r += 1;
            }
        }

        for c in 0..=total {
            t.obj[c] = Q::zero();
        }
        for j in 0..nvars {
            t.obj[plus_col[j]] = q(p.objective[j]);
            if let Some(mc) = minus_col[j] {
                t.obj[mc] = q(-p.objective[j]);
            }
        }
        for r in 0..t.rows.len() {
            let factor = t.obj[t.basis[r]].clone();
            if !factor.is_zero() {
                for c in 0..=total {
                    let delta = &factor * &t.rows[r][c];
                    t.obj[c] -= delta;
                }
            }
        }
        if !t.iterate(art_start)? {
            return Ok(LpOutcome::Unbounded);
        }

        let mut cols = vec![Q::zero(); total];
        for r in 0..t.rows.len() {
            cols[t.basis[r]] = t.rows[r][total].clone();
        }
        let mut assignment = Vec::with_capacity(nvars);
        let mut objective = Q::zero();
        for j in 0..nvars {
            let mut v = cols[plus_col[j]].clone();
            if let Some(mc) = minus_col[j] {
                v -= cols[mc].clone();
            }
            objective += q(p.objective[j]) * &v;
            assignment.push(v.to_f64().expect("rational optimum fits in f64"));
        }
        Ok(LpOutcome::Optimal {
            assignment,
            objective: objective.to_f64().expect("rational optimum fits in f64"),
        })
    }
}

/// Re-solves exactly; used for margins too close to the acceptance
/// threshold for floating point to classify.
pub(crate) fn solve_lp_exact(p: &LpProblem) -> Result<LpOutcome> {
    exact::solve(p)
}

// ---------------------------------------------------------------------------
// Game-form solver for the dominance LP
// ---------------------------------------------------------------------------
//
// The Fig-2-style program `max delta s.t. x . d_k >= delta, x on the simplex`
// is the value of the matrix game with payoff columns d_k. Its dual
//
//     max 1.y   s.t.   sum_k (d_k + shift) y_k <= 1 per state,  y >= 0
//
// has only |S| rows, no phase-1, and cannot be infeasible or unbounded, so
// it solves in a handful of O(|S| m) pivots where the primal tableau would
// carry m rows. The witness x falls out of the slack reduced costs.

fn maximin_f64(columns: &[Vec<f64>], n: usize) -> Result<(Vec<f64>, f64)> {
    let m = columns.len();
    debug_assert!(m > 0);
    let mut min_entry = f64::INFINITY;
    for c in columns {
        for &v in c {
            min_entry = min_entry.min(v);
        }
    }
    let shift = 1.0 - min_entry;
    let ncols = m + n;
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut row = vec![0.0; ncols + 1];
            for (k, col) in columns.iter().enumerate() {
                row[k] = col[r] + shift;
            }
            row[m + r] = 1.0;
            row[ncols] = 1.0;
            row
        })
        .collect();
    let mut obj = vec![0.0; ncols + 1];
    for v in obj.iter_mut().take(m) {
        *v = 1.0;
    }
    let mut basis: Vec<usize> = (m..m + n).collect();
    let mut pivots = 0usize;

    loop {
        let mut entering = None;
        for (c, &v) in obj.iter().enumerate().take(ncols) {
            if v > PIVOT_TOL {
                entering = Some(c);
                break;
            }
        }
        let col = match entering {
            None => break,
            Some(c) => c,
        };
        let mut limit = f64::INFINITY;
        for row in rows.iter() {
            if row[col] > PIVOT_TOL {
                limit = limit.min((row[ncols].max(0.0) + RATIO_RELAX) / row[col]);
            }
        }
        if limit == f64::INFINITY {
            // Every shifted payoff entry is >= 1, so this cannot happen
            // except through noise; let the exact path settle it.
            return Err(Error::NumericalFailure { pivots });
        }
        let mut leave: Option<(usize, f64)> = None;
        for (r, row) in rows.iter().enumerate() {
            let a = row[col];
            if a > PIVOT_TOL && row[ncols].max(0.0) / a <= limit {
                let better = match leave {
                    None => true,
                    Some((best_r, best_a)) => {
                        a > best_a || (a == best_a && basis[r] < basis[best_r])
                    }
                };
                if better {
                    leave = Some((r, a));
                }
            }
        }
        let (lr, _) = leave.expect("a finite ratio limit admits at least one row");
        let scale = rows[lr][col];
        for v in rows[lr].iter_mut() {
            *v /= scale;
        }
        for r in 0..n {
            if r == lr {
                continue;
            }
            let factor = rows[r][col];
            if factor != 0.0 {
                for c in 0..=ncols {
                    let delta = factor * rows[lr][c];
                    rows[r][c] -= delta;
                }
            }
        }
        let factor = obj[col];
        if factor != 0.0 {
            for c in 0..=ncols {
                obj[c] -= factor * rows[lr][c];
            }
        }
        basis[lr] = col;
        pivots += 1;
        if pivots > PIVOT_BUDGET {
            return Err(Error::NumericalFailure { pivots });
        }
    }

    let u: Vec<f64> = (0..n).map(|r| (-obj[m + r]).max(0.0)).collect();
    let total: f64 = u.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NumericalFailure { pivots });
    }
    let x: Vec<f64> = u.iter().map(|v| v / total).collect();
    Ok((x, 1.0 / total - shift))
}

/// Exact-rational twin of [`maximin_f64`] with textbook Bland pivoting;
/// cheap because the tableau keeps only |S| rows.
fn maximin_exact(columns: &[Vec<f64>], n: usize) -> Result<(Vec<f64>, f64)> {
    if std::env::var_os("INCPRUNE_LP_TRACE").is_some() {
        eprintln!("exact maximin: m = {}", columns.len());
    }
    use num_rational::BigRational;
    use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};
    type Q = BigRational;
    let q = |x: f64| Q::from_f64(x).expect("finite coefficients");

    let m = columns.len();
    let mut min_entry = f64::INFINITY;
    for c in columns {
        for &v in c {
            min_entry = min_entry.min(v);
        }
    }
    let shift = q(1.0 - min_entry);
    let ncols = m + n;
    let mut rows: Vec<Vec<Q>> = (0..n)
        .map(|r| {
            let mut row = vec![Q::zero(); ncols + 1];
            for (k, col) in columns.iter().enumerate() {
                row[k] = q(col[r]) + &shift;
            }
            row[m + r] = q(1.0);
            row[ncols] = q(1.0);
            row
        })
        .collect();
    let mut obj = vec![Q::zero(); ncols + 1];
    for v in obj.iter_mut().take(m) {
        *v = q(1.0);
    }
    let mut basis: Vec<usize> = (m..m + n).collect();
    let mut pivots = 0usize;

    loop {
        let mut entering = None;
        for (c, v) in obj.iter().enumerate().take(ncols) {
            if v.is_positive() {
                entering = Some(c);
                break;
            }
        }
        let col = match entering {
            None => break,
            Some(c) => c,
        };
        let mut leave: Option<(usize, Q)> = None;
        for (r, row) in rows.iter().enumerate() {
            if row[col].is_positive() {
                let ratio = &row[ncols] / &row[col];
                let better = match &leave {
                    None => true,
                    Some((best_r, best_ratio)) => {
                        ratio < *best_ratio || (ratio == *best_ratio && basis[r] < basis[*best_r])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (lr, _) = leave.expect("shifted payoffs are strictly positive");
        let scale = rows[lr][col].clone();
        for v in rows[lr].iter_mut() {
            *v /= scale.clone();
        }
        for r in 0..n {
            if r == lr {
                continue;
            }
            let factor = rows[r][col].clone();
            if !factor.is_zero() {
                for c in 0..=ncols {
                    let delta = &factor * &rows[lr][c];
                    rows[r][c] -= delta;
                }
            }
        }
        let factor = obj[col].clone();
        if !factor.is_zero() {
            for c in 0..=ncols {
                let delta = &factor * &rows[lr][c];
                obj[c] -= delta;
            }
        }
        basis[lr] = col;
        pivots += 1;
        if pivots > 1_000_000 {
            return Err(Error::NumericalFailure { pivots });
        }
    }

    let u: Vec<Q> = (0..n)
        .map(|r| {
            let v = -obj[m + r].clone();
            if v.is_negative() {
                Q::zero()
            } else {
                v
            }
        })
        .collect();
    let total: Q = u.iter().fold(Q::zero(), |acc, v| acc + v);
    if !total.is_positive() {
        return Err(Error::NumericalFailure { pivots });
    }
    let x: Vec<f64> = u
        .iter()
        .map(|v| (v / &total).to_f64().expect("witness fits in f64"))
        .collect();
    let value = (q(1.0) / &total - &shift)
        .to_f64()
        .expect("margin fits in f64");
    Ok((x, value))
}

/// The witness-region test: is there an information state where `alpha`
/// strictly beats every other vector of `others`?
///
/// The program is `maximize delta` subject to `x.alpha >= delta + x.alpha'`
/// for every rival, `x.1 = 1`, `x >= 0`, with `delta` free in sign — the
/// value of the matrix game whose payoff columns are `alpha - alpha'`. It is
/// solved through the game-form dual (see [`maximin_f64`]); margins too
/// close to the threshold are reclassified in exact arithmetic so the
/// verdict never hinges on floating-point noise. Returns the witness iff
/// the optimum has `delta > EPSILON_DELTA`. Vectors in `others` whose
/// coefficients equal `alpha`'s are skipped (set semantics).
///
/// Records one solved LP and its constraint count (region rows plus the two
/// simplex rows) into `stats`. An empty rival set solves nothing and returns
/// the whole-simplex witness `(e_0, MAX_MARGIN)`.
pub fn dominate(
    alpha: &AlphaVector,
    others: &[AlphaVector],
    stats: &mut FilterStats,
) -> Result<Option<DominanceWitness>> {
    let n = alpha.dim();
    let rivals: Vec<&AlphaVector> = others
        .iter()
        .filter(|o| o.coeffs != alpha.coeffs)
        .collect();
    if rivals.is_empty() {
        return Ok(Some(DominanceWitness {
            x: Belief::corner(0, n),
            delta: MAX_MARGIN,
        }));
    }

    let columns: Vec<Vec<f64>> = rivals
        .iter()
        .map(|r| {
            assert_eq!(r.dim(), n, "dominance inputs must share dimension");
            (0..n).map(|s| alpha.coeffs[s] - r.coeffs[s]).collect()
        })
        .collect();

    stats.lp_count += 1;
    stats.constraint_total += rivals.len() as u64 + 2;

    let (x, delta) = match maximin_f64(&columns, n) {
        Ok((x, delta)) if (delta - EPSILON_DELTA).abs() > BORDERLINE_BAND => (x, delta),
        Ok(_) => maximin_exact(&columns, n)?,
        Err(Error::NumericalFailure { .. }) => maximin_exact(&columns, n)?,
        Err(e) => return Err(e),
    };

    if delta > EPSILON_DELTA {
        Ok(Some(DominanceWitness {
            x: Belief::normalized(x)?,
            delta,
        }))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_delta(constraints: Vec<Constraint>) -> Result<LpOutcome> {
        solve_lp(&LpProblem {
            objective: vec![1.0],
            constraints,
            nonneg: vec![false],
            names: vec!["delta".into()],
        })
    }

    #[test]
    fn single_upper_bound() {
        let out = max_delta(vec![Constraint {
            coeffs: vec![-1.0],
            relation: Relation::GreaterEq,
            bound: -3.0,
        }])
        .unwrap();
        match out {
            LpOutcome::Optimal {
                assignment,
                objective,
            } => {
                assert!((objective - 3.0).abs() < 1e-9);
                assert!((assignment[0] - 3.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let out = max_delta(vec![
            Constraint {
                coeffs: vec![-1.0],
                relation: Relation::GreaterEq,
                bound: -1.0,
            },
            Constraint {
                coeffs: vec![1.0],
                relation: Relation::GreaterEq,
                bound: 2.0,
            },
        ])
        .unwrap();
        assert_eq!(out, LpOutcome::Infeasible);
    }

    #[test]
    fn missing_upper_bound_is_unbounded() {
        let out = max_delta(vec![Constraint {
            coeffs: vec![1.0],
            relation: Relation::GreaterEq,
            bound: 0.0,
        }])
        .unwrap();
        assert_eq!(out, LpOutcome::Unbounded);
    }

    #[test]
    fn optimal_assignment_satisfies_constraints() {
        // max x0 + x1 s.t. x0 + 2 x1 <= 4, 3 x0 + x1 <= 6, x >= 0
        let p = LpProblem {
            objective: vec![1.0, 1.0],
            constraints: vec![
                Constraint {
                    coeffs: vec![-1.0, -2.0],
                    relation: Relation::GreaterEq,
                    bound: -4.0,
                },
                Constraint {
                    coeffs: vec![-3.0, -1.0],
                    relation: Relation::GreaterEq,
                    bound: -6.0,
                },
            ],
            nonneg: vec![true, true],
            names: vec![],
        };
        match solve_lp(&p).unwrap() {
            LpOutcome::Optimal {
                assignment,
                objective,
            } => {
                assert!(assignment[0] + 2.0 * assignment[1] <= 4.0 + 1e-9);
                assert!(3.0 * assignment[0] + assignment[1] <= 6.0 + 1e-9);
                assert!((objective - 2.8).abs() < 1e-9); // x = (1.6, 1.2)
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    fn alpha(coeffs: &[f64]) -> AlphaVector {
        AlphaVector::new(coeffs.to_vec())
    }

    #[test]
    fn dominate_finds_the_obvious_witness() {
        let mut stats = FilterStats::default();
        let w = dominate(&alpha(&[1.0, 0.0]), &[alpha(&[0.0, 1.0])], &mut stats)
            .unwrap()
            .expect("witness");
        assert_eq!(w.x.probs(), &[1.0, 0.0]);
        assert!((w.delta - 1.0).abs() < 1e-9);
        assert_eq!(stats.lp_count, 1);
        assert_eq!(stats.constraint_total, 3);
    }

    #[test]
    fn dominate_rejects_the_everywhere_loser() {
        let mut stats = FilterStats::default();
        let out = dominate(
            &alpha(&[0.5, 0.5]),
            &[alpha(&[1.0, 0.0]), alpha(&[0.0, 1.0])],
            &mut stats,
        )
        .unwrap();
        assert!(out.is_none());
        assert_eq!(stats.constraint_total, 4);
    }

    #[test]
    fn dominate_tie_region_resolves_deterministically() {
        // Margin 0.5 everywhere; the pivot rule lands on the first corner.
        let mut stats = FilterStats::default();
        let w = dominate(&alpha(&[1.0, 1.0]), &[alpha(&[0.5, 0.5])], &mut stats)
            .unwrap()
            .expect("witness");
        assert!((w.delta - 0.5).abs() < 1e-9);
        assert_eq!(w.x.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn dominate_empty_rivals_returns_sentinel() {
        let mut stats = FilterStats::default();
        let w = dominate(&alpha(&[0.3, 0.3]), &[], &mut stats)
            .unwrap()
            .expect("witness");
        assert_eq!(w.delta, MAX_MARGIN);
        assert_eq!(w.x.probs(), &[1.0, 0.0]);
        assert_eq!(stats.lp_count, 0);
    }

    fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<AlphaVector> {
        (0..n)
            .map(|_| AlphaVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn dominate_witnesses_are_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let dim = rng.gen_range(2..=4);
            let count = rng.gen_range(2..=6);
            let vs = random_vectors(&mut rng, count, dim);
            let mut stats = FilterStats::default();
            if let Some(w) = dominate(&vs[0], &vs[1..], &mut stats).unwrap() {
                let own = vs[0].dot(w.x.probs());
                let best_rival = vs[1..]
                    .iter()
                    .filter(|r| r.coeffs != vs[0].coeffs)
                    .map(|r| r.dot(w.x.probs()))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    own - best_rival >= w.delta - 1e-9,
                    "margin {} below reported delta {}",
                    own - best_rival,
                    w.delta
                );
                assert!(own - best_rival > 0.0);
            }
        }
    }

    #[test]
    fn dominate_rejections_are_complete_on_a_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut rejections = 0;
        for _ in 0..100 {
            let dim = rng.gen_range(2..=3);
            let count = rng.gen_range(2..=5);
            let vs = random_vectors(&mut rng, count, dim);
            let mut stats = FilterStats::default();
            if dominate(&vs[0], &vs[1..], &mut stats).unwrap().is_none() {
                rejections += 1;
                let resolution = if dim == 2 { 10_000 } else { 140 };
                for x in crate::solver::simplex_grid(dim, resolution) {
                    let own = vs[0].dot(x.probs());
                    let best = vs[1..]
                        .iter()
                        .map(|r| r.dot(x.probs()))
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert!(
                        own - best <= 1e-6,
                        "rejected vector beats rivals by {} at {:?}",
                        own - best,
                        x.probs()
                    );
                }
            }
        }
        assert!(rejections > 0, "suite never exercised a rejection");
    }

    #[test]
    fn stage_twelve_degenerate_lp_from_the_two_state_diagnostic() {
        // Captured from a late value-iteration stage where vector
        // differences shrink to 1e-5..1e-8 and the dominance LP becomes
        // heavily degenerate at its optimum.
        let phi = vec![7.175661256398408, 0.47410390495432386];
        let winners: Vec<Vec<f64>> = vec![
            vec![7.1757046351900025, 0.0],
            vec![1.0, 5.275704635190003],
            vec![6.421437685427238, 4.701437685427238],
            vec![7.0185989169162095, 3.5908627397438164],
            vec![7.143570511529727, 2.6610849466135944],
            vec![7.1692914752287, 1.898027295124999],
            vec![7.174491943461228, 1.2796517538403565],
            vec![7.175483378696839, 0.8122247955321158],
            vec![7.175669939774704, 0.45725632686251366],
            vec![7.1756991887287676, 0.23909001254982518],
            vec![7.175704097636325, 0.08891777326233166],
            vec![7.175704567351126, 0.03369515618362043],
            vec![7.175701655436743, 0.16473187467547756],
            vec![3.6610849466135944, 5.243570511529727],
            vec![2.898027295124999, 5.269291475228701],
            vec![2.2796517538403567, 5.274491943461228],
            vec![1.8122247955321158, 5.275483378696839],
            vec![1.4572563268625136, 5.275669939774703],
            vec![1.2390900125498252, 5.275699188728767],
            vec![5.829262739743817, 4.988998916916208],
            vec![5.573766633778588, 5.023664480795658],
            vec![6.242397468190427, 4.798895404888866],
            vec![6.237048508392615, 4.801429122687829],
            vec![5.586665560755129, 5.021962539041808],
            vec![6.9817894732200445, 3.670730849813479],
            vec![6.458913336557688, 4.632752086567376],
            vec![6.425646330031576, 4.693887718248508],
            vec![6.3955938360982225, 4.715619317164156],
            vec![6.413887718248507, 4.705646330031575],
            vec![6.984290285593047, 3.6654513570260274],
            vec![7.134861826883455, 2.7352209091342594],
            vec![7.1365811353898945, 2.722190360453876],
            vec![7.167934941395134, 1.944924077666355],
            vec![7.147115919463957, 2.5577095492975324],
            vec![7.1446226726808115, 2.6308850778986743],
            vec![7.1424380164529175, 2.6711856936640075],
            vec![7.168222863872289, 1.9351986962157874],
            vec![7.173953263808839, 1.3490891939544165],
            vec![7.1742832321080545, 1.3090761959863675],
            vec![7.175446715552482, 0.8323316808910874],
            vec![7.17464976763389, 1.2071720689245482],
            vec![7.174397568871494, 1.2931194165742417],
            vec![7.17562857948235, 0.538660288290689],
            vec![7.175465224854584, 0.8223284313990751],
            vec![7.174961423481784, 1.0608210117222643],
            vec![7.175666569253642, 0.4649521341390195],
            vec![7.175683091789092, 0.3606167469747691],
            vec![7.175698674581487, 0.24353590121294172],
        ];
        let n = phi.len();
        let mut constraints = Vec::new();
        for w in &winners {
            let mut coeffs: Vec<f64> = (0..n).map(|s| phi[s] - w[s]).collect();
            coeffs.push(-1.0);
            constraints.push(Constraint {
                coeffs,
                relation: Relation::GreaterEq,
                bound: 0.0,
            });
        }
        let mut simplex = vec![1.0; n];
        simplex.push(0.0);
        constraints.push(Constraint {
            coeffs: simplex,
            relation: Relation::Eq,
            bound: 1.0,
        });
        let mut objective = vec![0.0; n];
        objective.push(1.0);
        let mut nonneg = vec![true; n];
        nonneg.push(false);
        let p = LpProblem {
            objective,
            constraints,
            nonneg,
            names: vec![],
        };
        let out = solve_lp_f64(&p);
        eprintln!("f64 outcome: {out:?}");
        match out.unwrap() {
            LpOutcome::Optimal { objective, .. } => {
                eprintln!("delta = {objective:.6e}");
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn dominate_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..50 {
            let vs = random_vectors(&mut rng, 5, 3);
            let mut s1 = FilterStats::default();
            let mut s2 = FilterStats::default();
            let w1 = dominate(&vs[0], &vs[1..], &mut s1).unwrap();
            let w2 = dominate(&vs[0], &vs[1..], &mut s2).unwrap();
            match (w1, w2) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert_eq!(a.x.probs(), b.x.probs());
                    assert_eq!(a.delta.to_bits(), b.delta.to_bits());
                }
                other => panic!("nondeterministic outcome: {other:?}"),
            }
        }
    }
}
