//! Bounded-variable primal simplex with a dense basis inverse.
//!
//! The engine keeps one slack column per constraint row, so variable bounds
//! never become rows. A composite phase 1 drives bound violations of basic
//! variables to zero from any starting basis, which is what makes warm
//! starting across branch-and-bound nodes cheap: changing bounds never
//! touches the basis matrix, only nonbasic values, so the current inverse
//! stays valid and reoptimization usually takes a handful of pivots.
//!
//! Pivoting is deterministic: Dantzig pricing with lowest-index tie breaks,
//! and a switch to Bland's rule after a stall of `10 * (rows + cols)`
//! iterations without progress, which guarantees termination.

use std::time::Instant;

use crate::formulation::{Model, Sense};

/// Bound violation beyond this counts as infeasible.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost optimality tolerance.
pub const RC_TOL: f64 = 1e-7;
/// Minimum magnitude for an acceptable pivot element.
const PIVOT_TOL: f64 = 1e-9;
/// Ties in the ratio test within this are broken toward larger pivots.
const RATIO_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Outcome of one linear programming solve.
#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    /// Values of the model's (structural) variables.
    pub primal: Vec<f64>,
    /// Row multipliers, one per constraint.
    pub duals: Vec<f64>,
    pub iterations: u64,
}

/// Per-solve options.
#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub max_iterations: u64,
    /// After reaching optimality at the standard tolerance, keep pivoting
    /// under Bland's rule down to a 1e-9 reduced-cost tolerance.
    pub polish: bool,
    /// Deterministic work budget in model seconds (see [`Simplex::work_done`]):
    /// the solve stops with `IterationLimit` once the engine's accumulated
    /// work estimate passes this value. Unlike a wall-clock deadline this
    /// makes timeout behavior reproducible run to run.
    pub work_budget: Option<f64>,
    /// Coarse wall-clock backstop; checked rarely so determinism is only
    /// lost when a solve overshoots its work model badly.
    pub deadline: Option<Instant>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            max_iterations: u64::MAX,
            polish: false,
            work_budget: None,
            deadline: None,
        }
    }
}

/// Calibration of the deterministic work model, in seconds: a fixed cost per
/// simplex iteration plus a quadratic term for the dense inverse updates and
/// a cubic term per refactorization.
pub(crate) const WORK_PER_ITER: f64 = 2.0e-6;
pub(crate) const WORK_PER_ITER_M2: f64 = 2.5e-10;
pub(crate) const WORK_PER_REFACTOR_M3: f64 = 1.0e-10;

/// Solve the continuous relaxation of `model` from a fresh slack basis.
///
/// Integrality tags are ignored; callers wanting the mixed-binary optimum use
/// the branch-and-bound driver.
pub fn solve_lp(model: &Model) -> LpResult {
    solve_lp_with(model, LpOptions::default())
}

pub fn solve_lp_with(model: &Model, options: LpOptions) -> LpResult {
    let mut spx = Simplex::from_model(model);
    spx.reoptimize(options)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    AtZero,
}

pub(crate) struct Simplex {
    m: usize,
    n_struct: usize,
    /// Structural plus one slack per row.
    n_total: usize,

    // Structural columns, compressed sparse column.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_val: Vec<f64>,

    cost: Vec<f64>,
    orig_lb: Vec<f64>,
    orig_ub: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    rhs: Vec<f64>,

    state: Vec<VarState>,
    basic: Vec<usize>,
    /// Basis inverse, column major: `binv[c * m + i]` is element (i, c).
    binv: Vec<f64>,
    xb: Vec<f64>,

    pub iterations: u64,
    /// Accumulated deterministic work estimate in model seconds.
    pub work_done: f64,
    pivots_since_refactor: u64,

    // Scratch buffers reused across iterations.
    work_col: Vec<f64>,
    work_y: Vec<f64>,
}

enum Pricing {
    Dantzig,
    Bland,
}

struct Entering {
    var: usize,
    /// +1.0 when the entering variable increases, -1.0 when it decreases.
    direction: f64,
}

enum RatioOutcome {
    /// Pivot: blocking basic row and the bound it leaves to.
    Pivot { row: usize, to_upper: bool, step: f64 },
    /// The entering variable hits its own opposite bound.
    BoundFlip { step: f64 },
    Unbounded,
}

enum PhaseOutcome {
    Feasible,
    Stopped(LpStatus),
}

impl Simplex {
    pub fn from_model(model: &Model) -> Simplex {
        let m = model.constraints.len();
        let n_struct = model.variables.len();
        let n_total = n_struct + m;

        // CSC construction from row-wise constraints.
        let mut counts = vec![0usize; n_struct];
        for c in &model.constraints {
            for &(j, _) in &c.terms {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n_struct + 1];
        for j in 0..n_struct {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n_struct];
        let mut row_idx = vec![0usize; nnz];
        let mut col_val = vec![0f64; nnz];
        let mut next = col_ptr.clone();
        for (i, c) in model.constraints.iter().enumerate() {
            for &(j, v) in &c.terms {
                row_idx[next[j]] = i;
                col_val[next[j]] = v;
                next[j] += 1;
            }
        }

        let mut cost = vec![0.0; n_total];
        for &(j, c) in &model.objective {
            cost[j] = c;
        }

        let mut lb = Vec::with_capacity(n_total);
        let mut ub = Vec::with_capacity(n_total);
        for v in &model.variables {
            lb.push(v.lower);
            ub.push(v.upper);
        }
        let mut rhs = Vec::with_capacity(m);
        for c in &model.constraints {
            rhs.push(c.rhs);
            match c.sense {
                Sense::Le => {
                    lb.push(0.0);
                    ub.push(f64::INFINITY);
                }
                Sense::Ge => {
                    lb.push(f64::NEG_INFINITY);
                    ub.push(0.0);
                }
                Sense::Eq => {
                    lb.push(0.0);
                    ub.push(0.0);
                }
            }
        }

        let mut spx = Simplex {
            m,
            n_struct,
            n_total,
            col_ptr,
            row_idx,
            col_val,
            cost,
            orig_lb: lb.clone(),
            orig_ub: ub.clone(),
            lb,
            ub,
            rhs,
            state: vec![VarState::AtLower; n_total],
            basic: Vec::new(),
            binv: Vec::new(),
            xb: vec![0.0; m],
            iterations: 0,
            work_done: 0.0,
            pivots_since_refactor: 0,
            work_col: vec![0.0; m],
            work_y: vec![0.0; m],
        };
        spx.reset_to_slack_basis();
        spx
    }

    /// Replace the working bounds of structural variables: reset to the model
    /// bounds, then apply `changes` of `(var, lower, upper)`.
    pub fn set_structural_bounds(&mut self, changes: &[(usize, f64, f64)]) {
        self.lb[..self.n_struct].copy_from_slice(&self.orig_lb[..self.n_struct]);
        self.ub[..self.n_struct].copy_from_slice(&self.orig_ub[..self.n_struct]);
        for &(j, lo, hi) in changes {
            debug_assert!(j < self.n_struct && lo <= hi);
            self.lb[j] = lo;
            self.ub[j] = hi;
        }
    }

    pub fn reset_to_slack_basis(&mut self) {
        self.basic = (self.n_struct..self.n_total).collect();
        for j in 0..self.n_struct {
            self.state[j] = initial_state(self.lb[j], self.ub[j]);
        }
        for (i, j) in (self.n_struct..self.n_total).enumerate() {
            self.state[j] = VarState::Basic(i);
        }
        self.binv = vec![0.0; self.m * self.m];
        for i in 0..self.m {
            self.binv[i * self.m + i] = 1.0;
        }
        self.pivots_since_refactor = 0;
    }

    /// Value of a nonbasic variable under the working bounds.
    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lb[j],
            VarState::AtUpper => self.ub[j],
            VarState::AtZero => 0.0,
            VarState::Basic(_) => unreachable!("basic variable has no nonbasic value"),
        }
    }

    /// Snap nonbasic states onto the current working bounds (bounds may have
    /// moved since the last solve).
    fn normalize_nonbasic(&mut self) {
        for j in 0..self.n_total {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            self.state[j] = match self.state[j] {
                VarState::AtLower if self.lb[j].is_finite() => VarState::AtLower,
                VarState::AtUpper if self.ub[j].is_finite() => VarState::AtUpper,
                _ => initial_state(self.lb[j], self.ub[j]),
            };
        }
    }

    /// Recompute basic values from scratch with the current inverse.
    fn recompute_xb(&mut self) {
        let mut q = self.rhs.clone();
        for j in 0..self.n_total {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let val = self.nonbasic_value(j);
            if val != 0.0 {
                self.axpy_column(j, -val, &mut q);
            }
        }
        // xb = binv * q, accumulated column by column.
        self.xb.iter_mut().for_each(|x| *x = 0.0);
        for (c, &qc) in q.iter().enumerate() {
            if qc != 0.0 {
                let col = &self.binv[c * self.m..(c + 1) * self.m];
                for i in 0..self.m {
                    self.xb[i] += qc * col[i];
                }
            }
        }
    }

    /// `target += scale * A[:, j]` for a structural or slack column.
    fn axpy_column(&self, j: usize, scale: f64, target: &mut [f64]) {
        if j < self.n_struct {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                target[self.row_idx[k]] += scale * self.col_val[k];
            }
        } else {
            target[j - self.n_struct] += scale;
        }
    }

    /// `work_col = binv * A[:, j]` (the entering column in basis coordinates).
    fn ftran(&mut self, j: usize) {
        self.work_col.iter_mut().for_each(|x| *x = 0.0);
        if j < self.n_struct {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = self.row_idx[k];
                let v = self.col_val[k];
                let col = &self.binv[r * self.m..(r + 1) * self.m];
                for i in 0..self.m {
                    self.work_col[i] += v * col[i];
                }
            }
        } else {
            let r = j - self.n_struct;
            self.work_col
                .copy_from_slice(&self.binv[r * self.m..(r + 1) * self.m]);
        }
    }

    /// `work_y[c] = sum_i coef[i] * binv[i, c]` for a sparse coefficient list.
    fn btran_sparse(&mut self, coefs: &[(usize, f64)]) {
        for c in 0..self.m {
            let col = &self.binv[c * self.m..(c + 1) * self.m];
            let mut acc = 0.0;
            for &(i, d) in coefs {
                acc += d * col[i];
            }
            self.work_y[c] = acc;
        }
    }

    /// Reduced cost of nonbasic `j` given multipliers in `work_y`.
    fn reduced_cost(&self, j: usize, objective: bool) -> f64 {
        let base = if objective { self.cost[j] } else { 0.0 };
        let mut dot = 0.0;
        if j < self.n_struct {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                dot += self.work_y[self.row_idx[k]] * self.col_val[k];
            }
        } else {
            dot = self.work_y[j - self.n_struct];
        }
        base - dot
    }

    fn total_infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for (i, &j) in self.basic.iter().enumerate() {
            let x = self.xb[i];
            if x < self.lb[j] - FEAS_TOL {
                total += self.lb[j] - x;
            } else if x > self.ub[j] + FEAS_TOL {
                total += x - self.ub[j];
            }
        }
        total
    }

    /// Signature of basic bound violations: +1 above, -1 below, else absent.
    fn infeasibility_costs(&self) -> Vec<(usize, f64)> {
        let mut coefs = Vec::new();
        for (i, &j) in self.basic.iter().enumerate() {
            let x = self.xb[i];
            if x < self.lb[j] - FEAS_TOL {
                coefs.push((i, -1.0));
            } else if x > self.ub[j] + FEAS_TOL {
                coefs.push((i, 1.0));
            }
        }
        coefs
    }

    /// Pick an entering variable, or `None` at (phase-local) optimality.
    fn choose_entering(&mut self, phase2: bool, pricing: &Pricing, rc_tol: f64) -> Option<Entering> {
        let mut best: Option<(f64, usize, f64)> = None; // (score, var, direction)
        for j in 0..self.n_total {
            let (can_up, can_down) = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => (true, false),
                VarState::AtUpper => (false, true),
                VarState::AtZero => (true, true),
            };
            if self.lb[j] == self.ub[j] {
                continue; // fixed variable can never move
            }
            let rc = self.reduced_cost(j, phase2);
            let (eligible, direction) = if can_up && rc < -rc_tol {
                (true, 1.0)
            } else if can_down && rc > rc_tol {
                (true, -1.0)
            } else {
                (false, 0.0)
            };
            if !eligible {
                continue;
            }
            match pricing {
                Pricing::Bland => return Some(Entering { var: j, direction }),
                Pricing::Dantzig => {
                    let score = rc.abs();
                    if best.map_or(true, |(s, _, _)| score > s) {
                        best = Some((score, j, direction));
                    }
                }
            }
        }
        best.map(|(_, var, direction)| Entering { var, direction })
    }

    /// Bounded ratio test. In phase 1 (`phase2 == false`) basic variables
    /// outside their bounds block at the bound they are returning to, which
    /// keeps the feasible set of basics monotone. Ties within `RATIO_TIE_TOL`
    /// are broken toward the largest pivot magnitude, then the lowest row.
    fn ratio_test(&self, ent: &Entering, phase2: bool) -> RatioOutcome {
        let t = ent.direction;
        let span = self.ub[ent.var] - self.lb[ent.var];

        // Blocking step of each basic row with a usable pivot.
        let block = |i: usize| -> Option<(f64, bool)> {
            let w = self.work_col[i];
            if w.abs() <= PIVOT_TOL {
                return None;
            }
            let j = self.basic[i];
            let x = self.xb[i];
            let delta = -t * w; // movement of basic i per unit step
            let below = x < self.lb[j] - FEAS_TOL;
            let above = x > self.ub[j] + FEAS_TOL;
            let (target, to_upper) = if delta > 0.0 {
                if !phase2 && below {
                    (self.lb[j], false) // returning to feasibility from below
                } else if !phase2 && above {
                    return None; // moving further above: no blocking bound
                } else {
                    (self.ub[j], true)
                }
            } else if !phase2 && above {
                (self.ub[j], true) // returning to feasibility from above
            } else if !phase2 && below {
                return None; // moving further below: no blocking bound
            } else {
                (self.lb[j], false)
            };
            if !target.is_finite() {
                return None;
            }
            Some((((target - x) / delta).max(0.0), to_upper))
        };

        let mut min_step = if span.is_finite() { span } else { f64::INFINITY };
        for i in 0..self.m {
            if let Some((step, _)) = block(i) {
                min_step = min_step.min(step);
            }
        }
        if min_step.is_infinite() {
            return RatioOutcome::Unbounded;
        }

        // Among rows blocking within the tie band, take the largest pivot.
        let mut chosen: Option<(usize, bool, f64, f64)> = None; // (row, to_upper, step, |w|)
        for i in 0..self.m {
            if let Some((step, to_upper)) = block(i) {
                if step <= min_step + RATIO_TIE_TOL {
                    let w_abs = self.work_col[i].abs();
                    let better = match chosen {
                        None => true,
                        Some((_, _, _, best_w)) => w_abs > best_w,
                    };
                    if better {
                        chosen = Some((i, to_upper, step, w_abs));
                    }
                }
            }
        }

        match chosen {
            Some((row, to_upper, step, _)) => RatioOutcome::Pivot { row, to_upper, step },
            None => RatioOutcome::BoundFlip { step: span },
        }
    }

    fn apply_bound_flip(&mut self, ent: &Entering, step: f64) {
        let j = ent.var;
        let t = ent.direction;
        for i in 0..self.m {
            self.xb[i] -= t * step * self.work_col[i];
        }
        self.state[j] = match self.state[j] {
            VarState::AtLower => VarState::AtUpper,
            VarState::AtUpper => VarState::AtLower,
            other => other,
        };
    }

    fn apply_pivot(&mut self, ent: &Entering, row: usize, to_upper: bool, step: f64) {
        let j = ent.var;
        let t = ent.direction;
        let entering_value = match self.state[j] {
            VarState::AtLower => self.lb[j] + t * step,
            VarState::AtUpper => self.ub[j] + t * step,
            VarState::AtZero => t * step,
            VarState::Basic(_) => unreachable!("entering variable is nonbasic"),
        };
        for i in 0..self.m {
            self.xb[i] -= t * step * self.work_col[i];
        }

        let leaving = self.basic[row];
        self.state[leaving] = if to_upper {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
        // Snap the leaving variable's stored value exactly onto its bound.
        self.basic[row] = j;
        self.state[j] = VarState::Basic(row);
        self.xb[row] = entering_value;

        self.pivots_since_refactor += 1;
        // binv update: eliminate the entering column from all other rows.
        let wr = self.work_col[row];
        debug_assert!(wr.abs() > 0.0);
        let m = self.m;
        for c in 0..m {
            let col = &mut self.binv[c * m..(c + 1) * m];
            let pivot_elem = col[row] / wr;
            if pivot_elem != 0.0 {
                for i in 0..m {
                    col[i] -= pivot_elem * self.work_col[i];
                }
                // The row update overwrote the pivot position; restore it.
                col[row] = pivot_elem;
            }
        }
    }

    /// Run phase 1 and phase 2 from the current basis and bounds.
    pub fn reoptimize(&mut self, options: LpOptions) -> LpResult {
        let stall_limit = 10 * (self.m + self.n_total) as u64;
        let mut iterations_here = 0u64;

        if self.pivots_since_refactor > self.refactor_interval() && !self.refactorize() {
            self.reset_to_slack_basis();
        }

        // Numerical drift in phase 2 falls back here for another round of
        // phase 1; a few rounds suffice or the solve is declared stuck.
        let mut status = LpStatus::IterationLimit;
        let mut refactors = 0;
        for _round in 0..6 {
            self.normalize_nonbasic();
            self.recompute_xb();
            match self.run_phase1(&options, &mut iterations_here, stall_limit) {
                PhaseOutcome::Feasible => {}
                PhaseOutcome::Stopped(LpStatus::Infeasible) => {
                    // Trust an infeasibility verdict only from a fresh basis:
                    // a stale inverse can misprice phase-1 directions.
                    if refactors < 2 && self.pivots_since_refactor > 0 {
                        refactors += 1;
                        if !self.refactorize() {
                            self.reset_to_slack_basis();
                        }
                        continue;
                    }
                    return self.finish(LpStatus::Infeasible);
                }
                PhaseOutcome::Stopped(s) => return self.finish(s),
            }
            status = self.optimize_phase2(&options, &mut iterations_here, stall_limit, RC_TOL);
            if status == LpStatus::Optimal {
                // Verify the claim against the original data, not the
                // (possibly drifted) inverse; refactor and rerun on failure.
                let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if self.true_residual() <= FEAS_TOL * scale {
                    break;
                }
                if refactors >= 2 {
                    status = LpStatus::IterationLimit;
                    break;
                }
                refactors += 1;
                if !self.refactorize() {
                    self.reset_to_slack_basis();
                }
                status = LpStatus::IterationLimit;
                continue;
            }
            if status != LpStatus::Infeasible {
                break;
            }
            // Infeasible here means drift was detected mid-phase-2; retry.
        }
        if status == LpStatus::Infeasible {
            // Drift persisted through every repair round.
            status = LpStatus::IterationLimit;
        }
        if status != LpStatus::Optimal {
            return self.finish(status);
        }

        if options.polish {
            // Refresh the inverse so the tight tolerance is meaningful, then
            // Bland pivots to shave residual reduced costs; cheap because the
            // iterate is already optimal at 1e-7.
            if !self.refactorize() {
                self.reset_to_slack_basis();
            }
            self.recompute_xb();
            let mut polish_iters = 0u64;
            loop {
                if polish_iters > 20_000 {
                    break;
                }
                let coefs: Vec<(usize, f64)> = self
                    .basic
                    .iter()
                    .enumerate()
                    .filter(|&(_, &j)| self.cost[j] != 0.0)
                    .map(|(i, &j)| (i, self.cost[j]))
                    .collect();
                self.btran_sparse(&coefs);
                let Some(entering) = self.choose_entering(true, &Pricing::Bland, 1e-9) else {
                    break;
                };
                self.ftran(entering.var);
                match self.ratio_test(&entering, true) {
                    RatioOutcome::Pivot { row, to_upper, step } => {
                        self.apply_pivot(&entering, row, to_upper, step)
                    }
                    RatioOutcome::BoundFlip { step } => self.apply_bound_flip(&entering, step),
                    RatioOutcome::Unbounded => break,
                }
                self.iterations += 1;
                polish_iters += 1;
            }
            self.recompute_xb();
        }

        self.finish(LpStatus::Optimal)
    }

    fn run_phase1(
        &mut self,
        options: &LpOptions,
        iterations_here: &mut u64,
        stall_limit: u64,
    ) -> PhaseOutcome {
        let mut best_infeas = f64::INFINITY;
        let mut stall = 0u64;
        loop {
            let infeas = self.total_infeasibility();
            if infeas <= FEAS_TOL {
                return PhaseOutcome::Feasible;
            }
            if *iterations_here >= options.max_iterations
                || self.budget_hit(options, *iterations_here)
            {
                return PhaseOutcome::Stopped(LpStatus::IterationLimit);
            }
            if infeas < best_infeas - 1e-12 {
                best_infeas = infeas;
                stall = 0;
            } else {
                stall += 1;
            }
            let pricing = if stall > stall_limit {
                Pricing::Bland
            } else {
                Pricing::Dantzig
            };
            let coefs = self.infeasibility_costs();
            self.btran_sparse(&coefs);
            let Some(entering) = self.choose_entering(false, &pricing, RC_TOL) else {
                return PhaseOutcome::Stopped(LpStatus::Infeasible);
            };
            self.ftran(entering.var);
            match self.ratio_test(&entering, false) {
                RatioOutcome::Pivot { row, to_upper, step } => {
                    self.apply_pivot(&entering, row, to_upper, step)
                }
                RatioOutcome::BoundFlip { step } => self.apply_bound_flip(&entering, step),
                RatioOutcome::Unbounded => {
                    // Infeasibility decreasing without limit cannot happen
                    // with finite violated bounds; numerical dead end.
                    return PhaseOutcome::Stopped(LpStatus::IterationLimit);
                }
            }
            self.iterations += 1;
            *iterations_here += 1;
        }
    }

    /// Returns `Optimal` / `Unbounded` / `IterationLimit`, or `Infeasible`
    /// as the internal signal that numerical drift needs a phase-1 repair.
    fn optimize_phase2(
        &mut self,
        options: &LpOptions,
        iterations_here: &mut u64,
        stall_limit: u64,
        rc_tol: f64,
    ) -> LpStatus {
        let mut best_obj = f64::INFINITY;
        let mut stall = 0u64;
        loop {
            if *iterations_here >= options.max_iterations
                || self.budget_hit(options, *iterations_here)
            {
                return LpStatus::IterationLimit;
            }
            let obj = self.current_objective();
            if obj < best_obj - 1e-12 {
                best_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
            let pricing = if stall > stall_limit {
                Pricing::Bland
            } else {
                Pricing::Dantzig
            };
            let coefs: Vec<(usize, f64)> = self
                .basic
                .iter()
                .enumerate()
                .filter(|&(_, &j)| self.cost[j] != 0.0)
                .map(|(i, &j)| (i, self.cost[j]))
                .collect();
            self.btran_sparse(&coefs);
            let Some(entering) = self.choose_entering(true, &pricing, rc_tol) else {
                return LpStatus::Optimal;
            };
            self.ftran(entering.var);
            match self.ratio_test(&entering, true) {
                RatioOutcome::Pivot { row, to_upper, step } => {
                    self.apply_pivot(&entering, row, to_upper, step)
                }
                RatioOutcome::BoundFlip { step } => self.apply_bound_flip(&entering, step),
                RatioOutcome::Unbounded => return LpStatus::Unbounded,
            }
            self.iterations += 1;
            *iterations_here += 1;
            if self.iterations % 512 == 0 {
                self.recompute_xb();
                if self.total_infeasibility() > FEAS_TOL {
                    return LpStatus::Infeasible; // drift: caller reruns phase 1
                }
            }
        }
    }

    /// Infinity norm of `A x - b` over all rows, computed from the original
    /// column data (independent of the basis inverse).
    fn true_residual(&self) -> f64 {
        let mut res: Vec<f64> = self.rhs.iter().map(|b| -b).collect();
        for j in 0..self.n_total {
            let val = match self.state[j] {
                VarState::Basic(i) => self.xb[i],
                _ => self.nonbasic_value(j),
            };
            if val != 0.0 {
                self.axpy_column(j, val, &mut res);
            }
        }
        res.iter().fold(0.0f64, |acc, r| acc.max(r.abs()))
    }

    /// Rebuild the basis inverse exactly from the basis columns by
    /// Gauss-Jordan elimination with partial pivoting. Returns false when the
    /// recorded basis is singular.
    fn refactorize(&mut self) -> bool {
        let m = self.m;
        // Dense basis matrix, row major.
        let mut mat = vec![0.0f64; m * m];
        for (k, &j) in self.basic.iter().enumerate() {
            if j < self.n_struct {
                for t in self.col_ptr[j]..self.col_ptr[j + 1] {
                    mat[self.row_idx[t] * m + k] = self.col_val[t];
                }
            } else {
                mat[(j - self.n_struct) * m + k] = 1.0;
            }
        }
        let mut inv = vec![0.0f64; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for k in 0..m {
            let mut pivot_row = k;
            let mut pivot_val = mat[k * m + k].abs();
            for r in k + 1..m {
                let v = mat[r * m + k].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val < 1e-12 {
                return false;
            }
            if pivot_row != k {
                for c in 0..m {
                    mat.swap(k * m + c, pivot_row * m + c);
                    inv.swap(k * m + c, pivot_row * m + c);
                }
            }
            let p = mat[k * m + k];
            for c in 0..m {
                mat[k * m + c] /= p;
                inv[k * m + c] /= p;
            }
            for r in 0..m {
                if r == k {
                    continue;
                }
                let f = mat[r * m + k];
                if f != 0.0 {
                    for c in 0..m {
                        mat[r * m + c] -= f * mat[k * m + c];
                        inv[r * m + c] -= f * inv[k * m + c];
                    }
                }
            }
        }
        // inv is B^-1 row major; binv stores it column major.
        for i in 0..m {
            for c in 0..m {
                self.binv[c * m + i] = inv[i * m + c];
            }
        }
        self.pivots_since_refactor = 0;
        self.work_done += WORK_PER_REFACTOR_M3 * (m as f64).powi(3);
        true
    }

    /// Preventive refresh: the dense product-form updates stay accurate for
    /// a pivot count proportional to the row count.
    fn refactor_interval(&self) -> u64 {
        (8 * self.m as u64).max(4096)
    }

    /// Charge one iteration's work and test every stopping budget.
    fn budget_hit(&mut self, options: &LpOptions, iterations_here: u64) -> bool {
        self.work_done += WORK_PER_ITER + WORK_PER_ITER_M2 * (self.m as f64) * (self.m as f64);
        if let Some(budget) = options.work_budget {
            if self.work_done >= budget {
                return true;
            }
        }
        if let Some(deadline) = options.deadline {
            if iterations_here % 256 == 0 && Instant::now() >= deadline {
                return true;
            }
        }
        false
    }

    fn current_objective(&self) -> f64 {
        let mut obj = 0.0;
        for j in 0..self.n_total {
            if self.cost[j] == 0.0 {
                continue;
            }
            let val = match self.state[j] {
                VarState::Basic(i) => self.xb[i],
                _ => self.nonbasic_value(j),
            };
            obj += self.cost[j] * val;
        }
        obj
    }

    /// Structural variable values of the current iterate.
    pub fn structural_values(&self) -> Vec<f64> {
        (0..self.n_struct)
            .map(|j| match self.state[j] {
                VarState::Basic(i) => self.xb[i],
                _ => self.nonbasic_value(j),
            })
            .collect()
    }

    fn duals(&mut self) -> Vec<f64> {
        let coefs: Vec<(usize, f64)> = self
            .basic
            .iter()
            .enumerate()
            .filter(|&(_, &j)| self.cost[j] != 0.0)
            .map(|(i, &j)| (i, self.cost[j]))
            .collect();
        self.btran_sparse(&coefs);
        self.work_y.clone()
    }

    fn finish(&mut self, status: LpStatus) -> LpResult {
        LpResult {
            status,
            objective: self.current_objective(),
            primal: self.structural_values(),
            duals: self.duals(),
            iterations: self.iterations,
        }
    }
}

fn initial_state(lb: f64, ub: f64) -> VarState {
    if lb.is_finite() {
        VarState::AtLower
    } else if ub.is_finite() {
        VarState::AtUpper
    } else {
        VarState::AtZero
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{Family, LinConstraint, Model, VarKind, VarRef, VariantTag};

    fn var(index: usize, name: &str, lower: f64, upper: f64) -> VarRef {
        VarRef {
            index,
            name: name.into(),
            lower,
            upper,
            kind: VarKind::Continuous,
        }
    }

    fn model(
        vars: Vec<VarRef>,
        constraints: Vec<(Vec<(usize, f64)>, Sense, f64)>,
        objective: Vec<(usize, f64)>,
    ) -> Model {
        Model {
            variables: vars,
            constraints: constraints
                .into_iter()
                .map(|(terms, sense, rhs)| LinConstraint {
                    terms,
                    sense,
                    rhs,
                    family: Family::Placement,
                })
                .collect(),
            objective,
            sigma: 0.0,
            variant: VariantTag::Imported,
        }
    }

    #[test]
    fn min_x_subject_to_row_lower_bound() {
        // min x s.t. x >= 3 (as a row), x in [0, 10]
        let m = model(
            vec![var(0, "x", 0.0, 10.0)],
            vec![(vec![(0, 1.0)], Sense::Ge, 3.0)],
            vec![(0, 1.0)],
        );
        let r = solve_lp(&m);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-9);
        assert!((r.primal[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let m = model(
            vec![var(0, "x", 0.0, 10.0)],
            vec![
                (vec![(0, 1.0)], Sense::Le, 0.0),
                (vec![(0, 1.0)], Sense::Ge, 1.0),
            ],
            vec![(0, 1.0)],
        );
        assert_eq!(solve_lp(&m).status, LpStatus::Infeasible);
    }

    #[test]
    fn free_improving_ray_is_unbounded() {
        let m = model(
            vec![var(0, "x", f64::NEG_INFINITY, f64::INFINITY)],
            vec![(vec![(0, 1.0)], Sense::Le, 5.0)],
            vec![(0, 1.0)],
        );
        assert_eq!(solve_lp(&m).status, LpStatus::Unbounded);
    }

    #[test]
    fn bounded_lp_with_equalities() {
        // min -x - 2y s.t. x + y = 4, x - y <= 1, x,y in [0, 3]
        let m = model(
            vec![var(0, "x", 0.0, 3.0), var(1, "y", 0.0, 3.0)],
            vec![
                (vec![(0, 1.0), (1, 1.0)], Sense::Eq, 4.0),
                (vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0),
            ],
            vec![(0, -1.0), (1, -2.0)],
        );
        let r = solve_lp(&m);
        assert_eq!(r.status, LpStatus::Optimal);
        // Optimum at x = 1, y = 3: objective -7.
        assert!((r.objective + 7.0).abs() < 1e-8, "obj = {}", r.objective);
        assert!((r.primal[0] - 1.0).abs() < 1e-8);
        assert!((r.primal[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        // Classic degenerate cycling example; the stall guard must end it.
        let m = model(
            vec![
                var(0, "x1", 0.0, f64::INFINITY),
                var(1, "x2", 0.0, f64::INFINITY),
                var(2, "x3", 0.0, f64::INFINITY),
                var(3, "x4", 0.0, f64::INFINITY),
            ],
            vec![
                (
                    vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)],
                    Sense::Le,
                    0.0,
                ),
                (
                    vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)],
                    Sense::Le,
                    0.0,
                ),
                (vec![(2, 1.0)], Sense::Le, 1.0),
            ],
            vec![(0, -0.75), (1, 150.0), (2, -0.02), (3, 6.0)],
        );
        let r = solve_lp(&m);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 0.05).abs() < 1e-9, "obj = {}", r.objective);
    }

    #[test]
    fn duals_satisfy_strong_duality_on_small_lp() {
        // min 3x + 2y s.t. x + y >= 2, x >= 0.5 (row), bounds [0, 10]
        let m = model(
            vec![var(0, "x", 0.0, 10.0), var(1, "y", 0.0, 10.0)],
            vec![
                (vec![(0, 1.0), (1, 1.0)], Sense::Ge, 2.0),
                (vec![(0, 1.0)], Sense::Ge, 0.5),
            ],
            vec![(0, 3.0), (1, 2.0)],
        );
        let r = solve_lp(&m);
        assert_eq!(r.status, LpStatus::Optimal);
        // x = 0.5, y = 1.5: objective 4.5; duals (2, 1).
        assert!((r.objective - 4.5).abs() < 1e-8);
        let dual_obj = 2.0 * r.duals[0] + 0.5 * r.duals[1];
        assert!((dual_obj - r.objective).abs() < 1e-7);
    }

    #[test]
    fn warm_restart_after_bound_change_is_cheap_and_correct() {
        // min x + y s.t. x + y >= 1; then fix x = 1 and re-solve.
        let m = model(
            vec![var(0, "x", 0.0, 1.0), var(1, "y", 0.0, 1.0)],
            vec![(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 1.0)],
            vec![(0, 1.0), (1, 1.0)],
        );
        let mut spx = Simplex::from_model(&m);
        let r1 = spx.reoptimize(LpOptions::default());
        assert_eq!(r1.status, LpStatus::Optimal);
        assert!((r1.objective - 1.0).abs() < 1e-9);

        spx.set_structural_bounds(&[(0, 1.0, 1.0)]);
        let r2 = spx.reoptimize(LpOptions::default());
        assert_eq!(r2.status, LpStatus::Optimal);
        assert!((r2.objective - 1.0).abs() < 1e-9);
        assert!((r2.primal[0] - 1.0).abs() < 1e-9);
        assert!(r2.primal[1].abs() < 1e-9);
    }

    #[test]
    fn iteration_limit_reports_limit_status() {
        let m = model(
            vec![var(0, "x", 0.0, 10.0)],
            vec![(vec![(0, 1.0)], Sense::Ge, 3.0)],
            vec![(0, 1.0)],
        );
        let r = solve_lp_with(
            &m,
            LpOptions {
                max_iterations: 0,
                ..LpOptions::default()
            },
        );
        assert_eq!(r.status, LpStatus::IterationLimit);
    }

    /// Lagrangian bound certificate: for any multipliers `y`,
    /// `obj >= b'y + sum_j min_{x_j in [l_j, u_j]} (c_j - y'A_j) x_j`.
    /// At an optimal basic solution with exact duals the bound is tight, so
    /// checking it against the primal objective certifies optimality.
    fn certificate_gap(model: &Model, r: &LpResult) -> f64 {
        let y = &r.duals;
        let mut bound = 0.0;
        for (i, c) in model.constraints.iter().enumerate() {
            bound += y[i] * c.rhs;
            // Slack column of row i: cost 0, bounds from the sense.
            let rc = -y[i];
            let (lo, hi) = match c.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            bound += bound_term(rc, lo, hi);
        }
        let mut cost = vec![0.0; model.variables.len()];
        for &(j, c) in &model.objective {
            cost[j] = c;
        }
        let mut col_dot = vec![0.0; model.variables.len()];
        for (i, c) in model.constraints.iter().enumerate() {
            for &(j, v) in &c.terms {
                col_dot[j] += y[i] * v;
            }
        }
        for v in &model.variables {
            let rc = cost[v.index] - col_dot[v.index];
            bound += bound_term(rc, v.lower, v.upper);
        }
        (r.objective - bound).abs()
    }

    /// `min_{x in [lo, hi]} rc * x`, with zero reduced costs contributing 0.
    fn bound_term(rc: f64, lo: f64, hi: f64) -> f64 {
        if rc.abs() <= 1e-12 {
            0.0
        } else if rc > 0.0 {
            rc * lo
        } else {
            rc * hi
        }
    }

    #[test]
    fn random_lps_carry_tight_optimality_certificates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut optimal = 0;
        for _ in 0..300 {
            let n = rng.gen_range(2..=6);
            let m_rows = rng.gen_range(1..=6);
            let vars: Vec<VarRef> = (0..n)
                .map(|j| var(j, &format!("x{j}"), 0.0, rng.gen_range(1..=4) as f64))
                .collect();
            let mut rows = Vec::new();
            for _ in 0..m_rows {
                let terms: Vec<(usize, f64)> = (0..n)
                    .filter_map(|j| {
                        if rng.gen_bool(0.6) {
                            Some((j, (rng.gen_range(-6..=6) as f64) / 2.0))
                        } else {
                            None
                        }
                    })
                    .filter(|&(_, c)| c != 0.0)
                    .collect();
                if terms.is_empty() {
                    continue;
                }
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                let rhs = (rng.gen_range(-8..=8) as f64) / 2.0;
                rows.push((terms, sense, rhs));
            }
            let objective: Vec<(usize, f64)> = (0..n)
                .map(|j| (j, (rng.gen_range(-6..=6) as f64) / 2.0))
                .filter(|&(_, c)| c != 0.0)
                .collect();
            let lp = model(vars, rows, objective);
            let r = solve_lp(&lp);
            match r.status {
                LpStatus::Optimal => {
                    optimal += 1;
                    for c in &lp.constraints {
                        assert!(
                            c.violation(&r.primal) <= 1e-6,
                            "primal violation {}",
                            c.violation(&r.primal)
                        );
                    }
                    for v in &lp.variables {
                        assert!(r.primal[v.index] >= v.lower - 1e-7);
                        assert!(r.primal[v.index] <= v.upper + 1e-7);
                    }
                    let gap = certificate_gap(&lp, &r);
                    assert!(gap <= 1e-6, "certificate gap {gap}");
                }
                LpStatus::Infeasible => {}
                other => panic!("unexpected status {other:?}"),
            }
        }
        assert!(optimal >= 100, "only {optimal} optimal out of 300");
    }

    #[test]
    fn warm_restarts_match_cold_solves_on_random_lps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _case in 0..400 {
            let n = rng.gen_range(3..=8);
            let m_rows = rng.gen_range(2..=8);
            let vars: Vec<VarRef> = (0..n)
                .map(|j| {
                    var(
                        j,
                        &format!("x{j}"),
                        0.0,
                        if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(1..=3) as f64 },
                    )
                })
                .collect();
            let mut rows = Vec::new();
            for _ in 0..m_rows {
                let terms: Vec<(usize, f64)> = (0..n)
                    .filter_map(|j| {
                        if rng.gen_bool(0.5) {
                            Some((j, (rng.gen_range(-6..=6) as f64) / 2.0))
                        } else {
                            None
                        }
                    })
                    .filter(|&(_, c)| c != 0.0)
                    .collect();
                if terms.is_empty() {
                    continue;
                }
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                rows.push((terms, sense, (rng.gen_range(-6..=8) as f64) / 2.0));
            }
            let objective: Vec<(usize, f64)> = (0..n)
                .map(|j| (j, (rng.gen_range(-6..=6) as f64) / 2.0))
                .filter(|&(_, c)| c != 0.0)
                .collect();
            let base = model(vars, rows, objective);

            let mut spx = Simplex::from_model(&base);
            let _ = spx.reoptimize(LpOptions::default());
            for _round in 0..4 {
                let mut changes = Vec::new();
                for j in 0..n {
                    if rng.gen_bool(0.4) {
                        let v = &base.variables[j];
                        if rng.gen_bool(0.5) {
                            let fix = if rng.gen_bool(0.5) { v.lower } else { v.upper };
                            changes.push((j, fix, fix));
                        } else {
                            changes.push((j, v.lower, (v.lower + v.upper) / 2.0));
                        }
                    }
                }
                spx.set_structural_bounds(&changes);
                let warm = spx.reoptimize(LpOptions::default());

                let mut modified = base.clone();
                for &(j, lo, hi) in &changes {
                    modified.variables[j].lower = lo;
                    modified.variables[j].upper = hi;
                }
                let cold = solve_lp(&modified);
                match (warm.status, cold.status) {
                    (LpStatus::Optimal, LpStatus::Optimal) => {
                        assert!(
                            (warm.objective - cold.objective).abs() <= 1e-6,
                            "warm {} vs cold {}",
                            warm.objective,
                            cold.objective
                        );
                    }
                    (a, b) => assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn deterministic_iteration_counts() {
        let m = model(
            vec![
                var(0, "a", 0.0, 4.0),
                var(1, "b", 0.0, 4.0),
                var(2, "c", 0.0, 4.0),
            ],
            vec![
                (vec![(0, 1.0), (1, 2.0), (2, 1.0)], Sense::Le, 6.0),
                (vec![(0, 2.0), (1, 1.0)], Sense::Ge, 2.0),
                (vec![(1, 1.0), (2, 1.0)], Sense::Eq, 3.0),
            ],
            vec![(0, -1.0), (1, -1.0), (2, 2.0)],
        );
        let r1 = solve_lp(&m);
        let r2 = solve_lp(&m);
        assert_eq!(r1.status, LpStatus::Optimal);
        assert_eq!(r1.iterations, r2.iterations);
        assert_eq!(r1.objective, r2.objective);
        assert_eq!(r1.primal, r2.primal);
    }
}
