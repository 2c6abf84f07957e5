//! Levenberg-Marquardt in whitened coordinates.
//!
//! The Jacobian has the shape `[[D_reg, 0], [B_w, B_c]]` with `D_reg`
//! diagonal, `B_w = P L` for a two-entries-per-row selection `P`, and `B_c`
//! one entry per PDE row. The damped normal equations are reduced with
//! Woodbury on the `w` block, leaving an `(J + J_b)` system
//! `M = I + B_u B_u^T / (1 + delta) + B_g B_g^T / (lambda_g + delta)` and a
//! small Schur complement for `c`. `B B^T = P (K + jitter I) P^T` is
//! assembled entrywise from the Gram matrix.

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::{ControlProblem, ControlSolution, ControlState, PenaltyConfig, Selection, Whitened};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Stop when an accepted step lowers the objective by less than this fraction.
    pub tol_rel: f64,
    /// Stop when `max |grad| <= tol_grad * (1 + objective)`.
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Iterations over which penalties are rebalanced when balancing is on.
    pub warmup_iterations: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-2,
            shrink: 0.5,
            grow: 4.0,
            tol_rel: 1e-9,
            tol_grad: 1e-8,
            max_iter: 500,
            warmup_iterations: 5,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_damping > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.grow > 1.0
            && self.tol_rel >= 0.0
            && self.tol_grad >= 0.0
            && self.max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Levenberg-Marquardt settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroObjective,
    GradientTolerance,
    RelativeDecrease,
    /// Damping grew past any useful scale without finding a decrease.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Objective after each accepted step, starting after warmup.
    pub objective_history: Vec<f64>,
    pub final_objective: f64,
    /// Root mean square of `F` over interior points.
    pub final_pde_residual_rms: f64,
    /// Root mean square of `g` over boundary points.
    pub final_bc_residual_rms: f64,
    /// Largest gradient component at the final iterate.
    pub gradient_norm: f64,
    pub damping_final: f64,
    pub converged: bool,
    pub reason: StopReason,
    pub warmup_iterations: usize,
}

struct Linearization {
    w: Whitened,
    state: ControlState,
    objective: f64,
    grad: Whitened,
    pu: Selection,
    pg: Selection,
    gu: Mat<f64>,
    gg: Mat<f64>,
}

fn linearize(problem: &ControlProblem, w: Whitened, pen: &PenaltyConfig) -> Linearization {
    let state = problem.color(&w);
    let r = problem.residual_whitened(&w, &state, pen);
    let objective = r.iter().map(|v| v * v).sum();
    let rb = &r[problem.dim_u() + problem.dim_g()..];
    let (pu, pg) = problem.selections(&state, pen);
    let bc = problem.c_columns(pen);
    let mut gu = linalg::mat_t_vec(problem.gram_u.chol(), &pu.apply_t(rb));
    for (g, x) in gu.iter_mut().zip(&w.w_u) {
        *g += x;
    }
    let mut gg = linalg::mat_t_vec(problem.gram_g.chol(), &pg.apply_t(rb));
    for (g, x) in gg.iter_mut().zip(&w.w_g) {
        *g += pen.lambda_g * x;
    }
    let gc = linalg::mat_t_vec(bc.as_ref(), rb);
    let gram_u = pu.sandwich(&problem.gram_u);
    let gram_g = pg.sandwich(&problem.gram_g);
    Linearization {
        w,
        state,
        objective,
        grad: Whitened {
            w_u: gu,
            w_g: gg,
            c: gc,
        },
        pu,
        pg,
        gu: gram_u,
        gg: gram_g,
    }
}

fn objective_at(problem: &ControlProblem, w: &Whitened, pen: &PenaltyConfig) -> f64 {
    let s = problem.color(w);
    problem
        .residual_whitened(w, &s, pen)
        .iter()
        .map(|v| v * v)
        .sum()
}

/// Solves `(J^T J + delta I) step = -grad`. `None` if a factorization fails.
fn damped_step(
    problem: &ControlProblem,
    lin: &Linearization,
    pen: &PenaltyConfig,
    delta: f64,
) -> Option<Whitened> {
    let lu = problem.gram_u.chol();
    let lg = problem.gram_g.chol();
    let du = 1.0 + delta;
    let dg = pen.lambda_g + delta;
    let m = lin.gu.nrows();

    let mut mm = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            mm[(i, j)] = lin.gu[(i, j)] / du + lin.gg[(i, j)] / dg;
        }
        mm[(j, j)] += 1.0;
    }
    let lm = linalg::cholesky_lower(mm.as_ref(), 0.0)?;

    // B_w D^{-1} v for v = (v_u, v_g)
    let bw = |vu: &[f64], vg: &[f64]| -> Vec<f64> {
        let a = lin.pu.apply(&linalg::mat_vec(lu, vu));
        let b = lin.pg.apply(&linalg::mat_vec(lg, vg));
        a.iter().zip(&b).map(|(x, y)| x / du + y / dg).collect()
    };
    // B_w^T y
    let bwt = |y: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (
            linalg::mat_t_vec(lu, &lin.pu.apply_t(y)),
            linalg::mat_t_vec(lg, &lin.pg.apply_t(y)),
        )
    };

    let bc = problem.c_columns(pen);
    let mut y = bc.clone();
    linalg::chol_solve_mat(lm.as_ref(), y.as_mut());
    let n = bc.ncols();
    let mut schur = Mat::<f64>::zeros(n, n);
    faer::linalg::matmul::matmul(
        schur.as_mut(),
        faer::Accum::Replace,
        bc.transpose(),
        y.as_ref(),
        1.0,
        linalg::PAR,
    );
    for i in 0..n {
        schur[(i, i)] += delta;
    }
    let ls = linalg::cholesky_lower(schur.as_ref(), 0.0)?;

    let mut yh = bw(&lin.grad.w_u, &lin.grad.w_g);
    linalg::chol_solve(lm.as_ref(), &mut yh);
    let bty = linalg::mat_t_vec(bc.as_ref(), &yh);
    let mut dc: Vec<f64> = lin.grad.c.iter().zip(&bty).map(|(g, b)| -g + b).collect();
    linalg::chol_solve(ls.as_ref(), &mut dc);

    let bcd = linalg::mat_vec(bc.as_ref(), &dc);
    let (tu, tg) = bwt(&bcd);
    let pu: Vec<f64> = lin.grad.w_u.iter().zip(&tu).map(|(g, t)| (g + t) / du).collect();
    let pg: Vec<f64> = lin.grad.w_g.iter().zip(&tg).map(|(g, t)| (g + t) / dg).collect();
    // D^{-1} q - D^{-1} B^T M^{-1} B D^{-1} q with p = D^{-1} q
    let mut s = {
        let a = lin.pu.apply(&linalg::mat_vec(lu, &pu));
        let b = lin.pg.apply(&linalg::mat_vec(lg, &pg));
        a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<f64>>()
    };
    linalg::chol_solve(lm.as_ref(), &mut s);
    let (su, sg) = bwt(&s);
    let step = Whitened {
        w_u: pu.iter().zip(&su).map(|(p, s)| -(p - s / du)).collect(),
        w_g: pg.iter().zip(&sg).map(|(p, s)| -(p - s / dg)).collect(),
        c: dc,
    };
    let finite = step
        .w_u
        .iter()
        .chain(&step.w_g)
        .chain(&step.c)
        .all(|v| v.is_finite());
    finite.then_some(step)
}

fn add(w: &Whitened, d: &Whitened) -> Whitened {
    let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
    Whitened {
        w_u: sum(&w.w_u, &d.w_u),
        w_g: sum(&w.w_g, &d.w_g),
        c: sum(&w.c, &d.c),
    }
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn max_abs(w: &Whitened) -> f64 {
    w.w_u
        .iter()
        .chain(&w.w_g)
        .chain(&w.c)
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Rescales `lambda_pde` and `lambda_bc` so each penalty block matches the
/// regularization block. Blocks that are zero are left alone.
fn rebalance(problem: &ControlProblem, lin: &Linearization, pen: &mut PenaltyConfig) -> bool {
    let [reg, pde, bc] = problem.blocks(&lin.w, &lin.state, pen);
    let mut changed = false;
    if reg > 0.0 && pde > 0.0 {
        pen.lambda_pde *= reg / pde;
        changed = true;
    }
    if reg > 0.0 && bc > 0.0 {
        pen.lambda_bc *= reg / bc;
        changed = true;
    }
    changed
}

/// Minimizes the control objective from `init`.
pub fn solve_control(
    problem: &ControlProblem,
    init: &ControlState,
    penalties: PenaltyConfig,
    cfg: &LmConfig,
    warmup: bool,
) -> Result<ControlSolution> {
    penalties.validate()?;
    cfg.validate()?;
    let mut pen = penalties;
    let warmup_iters = if warmup { cfg.warmup_iterations } else { 0 };
    let mut lin = linearize(problem, problem.whiten(init)?, &pen);
    if !lin.objective.is_finite() {
        return Err(Error::Solver("initial objective is not finite".into()));
    }
    let mut delta = cfg.initial_damping;
    let mut history = Vec::new();
    if warmup_iters == 0 {
        history.push(lin.objective);
    }
    let mut iterations = 0;
    let mut accepted = 0;
    let reason = loop {
        if iterations < warmup_iters {
            if rebalance(problem, &lin, &mut pen) {
                lin = linearize(problem, lin.w, &pen);
                log::debug!(
                    "warmup {iterations}: lambda_pde {:e}, lambda_bc {:e}",
                    pen.lambda_pde,
                    pen.lambda_bc
                );
            }
        } else if history.is_empty() {
            history.push(lin.objective);
        }
        if lin.objective == 0.0 {
            break StopReason::ZeroObjective;
        }
        if iterations >= warmup_iters && max_abs(&lin.grad) <= cfg.tol_grad * (1.0 + lin.objective) {
            break StopReason::GradientTolerance;
        }
        if iterations >= cfg.max_iter {
            break StopReason::MaxIterations;
        }
        iterations += 1;
        let Some(step) = damped_step(problem, &lin, &pen, delta) else {
            log::debug!("iteration {iterations}: factorization failed at damping {delta:e}");
            delta *= cfg.grow;
            if delta > 1e20 {
                break StopReason::Stalled;
            }
            continue;
        };
        let trial = add(&lin.w, &step);
        let obj = objective_at(problem, &trial, &pen);
        if obj.is_finite() && obj < lin.objective {
            let rel = (lin.objective - obj) / lin.objective;
            lin = linearize(problem, trial, &pen);
            accepted += 1;
            delta = (delta * cfg.shrink).max(1e-15);
            log::debug!("iteration {iterations}: objective {obj:.9e}, damping {delta:e}");
            if iterations > warmup_iters {
                history.push(lin.objective);
                if rel < cfg.tol_rel {
                    break StopReason::RelativeDecrease;
                }
            }
        } else {
            delta *= cfg.grow;
            if delta > 1e20 {
                break StopReason::Stalled;
            }
        }
    };
    if history.is_empty() {
        history.push(lin.objective);
    }
    let f = problem.constraint(&lin.state);
    let report = SolveReport {
        iterations,
        accepted_steps: accepted,
        objective_history: history,
        final_objective: lin.objective,
        final_pde_residual_rms: rms(&f),
        final_bc_residual_rms: rms(problem.boundary_values(&lin.state)),
        gradient_norm: max_abs(&lin.grad),
        damping_final: delta,
        converged: reason != StopReason::MaxIterations,
        reason,
        warmup_iterations: warmup_iters.min(iterations),
    };
    log::info!(
        "control solve stopped after {} iterations ({:?}): objective {:.6e}, pde rms {:.3e}",
        report.iterations,
        report.reason,
        report.final_objective,
        report.final_pde_residual_rms
    );
    ControlSolution::assemble(problem, lin.state, report, pen)
}

#[cfg(test)]
pub(super) fn step_for_test(
    problem: &ControlProblem,
    s: &ControlState,
    pen: &PenaltyConfig,
    delta: f64,
) -> (Vec<f64>, Vec<f64>) {
    let lin = linearize(problem, problem.whiten(s).unwrap(), pen);
    let step = damped_step(problem, &lin, pen, delta).unwrap();
    let grad = [lin.grad.w_u, lin.grad.w_g, lin.grad.c].concat();
    ([step.w_u, step.w_g, step.c].concat(), grad)
}
