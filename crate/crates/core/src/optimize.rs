//! Projected L-BFGS with Armijo backtracking, and the staged optimization
//! loop with periodic re-meshing of the reference domain.

use std::cell::Cell;
use std::collections::VecDeque;
use std::io::Write;

use crate::analytic::{bernoulli_radius, circle_levelset};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mesh::{mesh_disk, reinitialize_domain, Mesh};
use crate::objective::{Objective, ObjectiveValue};
use crate::rbf::{DesignVector, RbfGrid};
use crate::sensitivity::Evaluator;
use crate::state::{annulus_warm_start, NewtonRecord, StateVector};

/// Re-initialization schedule: stage `i` (1-based) uses gray half width
/// `½(i_max − i + 1)h` and `5·2^i` optimization steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub i_max: usize,
    pub h: f64,
    pub toler: f64,
}

impl Schedule {
    pub fn delta(&self, i: usize) -> f64 {
        0.5 * (self.i_max + 1 - i) as f64 * self.h
    }

    pub fn k_max(&self, i: usize) -> usize {
        5 << i
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOptions {
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Max-norm of the first trial step when no curvature pairs are stored.
    pub initial_step: f64,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 30,
            initial_step: 0.1,
        }
    }
}

/// Limited-memory inverse Hessian approximation.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self {
            memory,
            pairs: VecDeque::with_capacity(memory),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` when the curvature condition holds.
    pub fn update(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `−H g` by the two-loop recursion.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut a = vec![0.0; self.pairs.len()];
        for (k, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            a[k] = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a[k] * yi);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|x| *x *= gamma);
        }
        for (k, (s, y, rho)) in self.pairs.iter().enumerate() {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a[k] - b) * si);
        }
        q.iter_mut().for_each(|x| *x = -*x);
        q
    }
}

/// Result of one projected line search.
#[derive(Debug, Clone)]
pub struct StepOutcome<T> {
    /// Accepted point, value and payload; `None` when no decrease was found.
    pub accepted: Option<(Vec<f64>, f64, T)>,
    pub step_norm: f64,
    pub evaluations: usize,
    /// Trials that failed to evaluate or missed the Armijo condition.
    pub rejections: usize,
    pub used_fallback: bool,
}

/// Variables pinned at a bound with the gradient pushing outward.
fn active_set(alpha: &[f64], g: &[f64], lo: f64, hi: f64) -> Vec<bool> {
    alpha
        .iter()
        .zip(g)
        .map(|(&a, &gi)| (a <= lo && gi > 0.0) || (a >= hi && gi < 0.0))
        .collect()
}

/// Projected gradient `P(α − g) − α`, whose norm measures stationarity.
pub fn projected_gradient(alpha: &[f64], g: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    alpha.iter().zip(g).map(|(&a, &gi)| (a - gi).clamp(lo, hi) - a).collect()
}

/// One projected L-BFGS step with Armijo backtracking. `eval` returns the
/// objective and a payload, or `None` for a trial that cannot be evaluated
/// (counted as a rejection). Every trial passes through `on_trial`.
#[allow(clippy::too_many_arguments)]
pub fn descent_step<T>(
    alpha: &[f64],
    f0: f64,
    g: &[f64],
    lower: f64,
    upper: f64,
    lbfgs: &Lbfgs,
    opts: &LineSearchOptions,
    mut eval: impl FnMut(&[f64]) -> Option<(f64, T)>,
    mut on_trial: impl FnMut(&[f64], Option<f64>, bool),
) -> StepOutcome<T> {
    let mut out = StepOutcome {
        accepted: None,
        step_norm: 0.0,
        evaluations: 0,
        rejections: 0,
        used_fallback: false,
    };
    let active = active_set(alpha, g, lower, upper);
    let gf: Vec<f64> = g.iter().zip(&active).map(|(&x, &a)| if a { 0.0 } else { x }).collect();
    if gf.iter().all(|&x| x == 0.0) {
        return out;
    }
    let steepest = || {
        let s = (opts.initial_step / norm_inf(&gf)).min(1.0);
        gf.iter().map(|x| -s * x).collect::<Vec<f64>>()
    };
    let mut d = if lbfgs.is_empty() { steepest() } else { lbfgs.direction(&gf) };
    d.iter_mut().zip(&active).for_each(|(x, &a)| {
        if a {
            *x = 0.0
        }
    });
    let mut fallback = dot(&d, &gf) >= 0.0;
    loop {
        if fallback {
            d = steepest();
            out.used_fallback = true;
        }
        let mut t = 1.0;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<f64> = alpha.iter().zip(&d).map(|(&a, &di)| (a + t * di).clamp(lower, upper)).collect();
            let diff: Vec<f64> = trial.iter().zip(alpha).map(|(a, b)| a - b).collect();
            let slope = dot(g, &diff);
            if diff.iter().all(|&x| x == 0.0) {
                break;
            }
            out.evaluations += 1;
            match eval(&trial) {
                Some((f, payload)) if f.is_finite() && slope < 0.0 && f <= f0 + opts.c1 * slope => {
                    on_trial(&trial, Some(f), true);
                    out.step_norm = norm(&diff);
                    out.accepted = Some((trial, f, payload));
                    return out;
                }
                res => {
                    on_trial(&trial, res.map(|r| r.0), false);
                    out.rejections += 1;
                }
            }
            t *= opts.shrink;
        }
        if fallback {
            return out;
        }
        fallback = true;
    }
}

/// Standalone projected L-BFGS minimization, used for testing the step logic.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: &[f64],
    lower: f64,
    upper: f64,
    max_steps: usize,
    toler: f64,
) -> (Vec<f64>, usize) {
    let opts = LineSearchOptions::default();
    let mut lb = Lbfgs::new(10);
    let mut x: Vec<f64> = x0.iter().map(|v| v.clamp(lower, upper)).collect();
    let (mut fx, mut gx) = f(&x);
    for k in 0..max_steps {
        let step = descent_step(&x, fx, &gx, lower, upper, &lb, &opts, |t| Some(f(t)), |_, _, _| {});
        let Some((xn, fnew, gn)) = step.accepted else {
            return (x, k);
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        lb.update(s, y);
        x = xn;
        fx = fnew;
        gx = gn;
        if step.step_norm <= toler {
            return (x, k + 1);
        }
    }
    (x, max_steps)
}

/// One function evaluation of the optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub stage: usize,
    pub step: usize,
    pub accepted: bool,
    /// `NaN` when the state solve failed.
    pub tracking: f64,
    pub penalty: f64,
    /// Gradient norm at the accepted point the step started from.
    pub grad_norm: f64,
    pub step_norm: f64,
    pub newton_iterations: usize,
    /// Cumulative function evaluations.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
}

impl OptimizationTrace {
    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn rejections(&self) -> usize {
        self.records.iter().filter(|r| !r.accepted).count()
    }

    pub fn first_accepted(&self) -> Option<&TraceRecord> {
        self.accepted().next()
    }

    pub fn last_accepted(&self) -> Option<&TraceRecord> {
        self.accepted().last()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "stage,step,accepted,tracking,penalty,total,grad_norm,step_norm,newton_iterations,evaluations"
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{:.10e},{:.10e},{:.10e},{:.6e},{:.6e},{},{}",
                r.stage,
                r.step,
                r.accepted as u8,
                r.tracking,
                r.penalty,
                r.tracking + r.penalty,
                r.grad_norm,
                r.step_norm,
                r.newton_iterations,
                r.evaluations
            )?;
        }
        Ok(())
    }
}

/// State of the run at the end of one stage.
#[derive(Debug, Clone)]
pub struct StageSnapshot {
    pub stage: usize,
    pub delta: f64,
    pub reference: Mesh,
    pub state: StateVector,
    pub alpha: DesignVector,
    pub value: ObjectiveValue,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub alpha: DesignVector,
    pub trace: OptimizationTrace,
    pub final_stage: StageSnapshot,
    /// Objective change caused by each re-meshing, `(stage, before, after)`.
    pub remesh_deltas: Vec<(usize, f64, f64)>,
}

/// Initial design: the RBF interpolant of `R − |x|` at the knots.
pub fn initial_design(grid: &RbfGrid, cfg: &RunConfig) -> Result<DesignVector> {
    let r = cfg.initial_radius;
    grid.fit(|p| circle_levelset(p, r), cfg.alpha_min, cfg.alpha_max)
}

/// Transfers `u` from a deformed mesh onto a new reference mesh, with zero
/// displacement and multiplier.
pub fn transfer_state(old_deformed: &Mesh, u: &[f64], new_reference: &Mesh) -> StateVector {
    let loc = old_deformed.locator();
    let mut q = StateVector::zeros(new_reference.num_nodes(), new_reference.boundary.len());
    for (i, p) in new_reference.nodes.iter().enumerate() {
        q.u[i] = loc.interpolate(u, *p);
    }
    q
}

/// Staged optimization. `on_stage` receives a snapshot after each stage.
pub fn run_algorithm1(cfg: &RunConfig, mut on_stage: impl FnMut(&StageSnapshot)) -> Result<RunOutcome> {
    cfg.validate()?;
    let grid = RbfGrid::new(cfg.grid_size, cfg.domain)?;
    let mut alpha = initial_design(&grid, cfg)?;
    let radius = bernoulli_radius(cfg.initial_radius, cfg.gamma)?;
    let mut reference = mesh_disk(radius, cfg.h, cfg.max_nodes)?;
    let mut q = annulus_warm_start(&reference, cfg.initial_radius, cfg.gamma)?;
    let mut objective = Objective::new(cfg.target.clone(), cfg.eta);
    objective.samples = cfg.samples;
    let sched = Schedule {
        i_max: cfg.i_max,
        h: cfg.h,
        toler: cfg.toler,
    };
    let opts = LineSearchOptions::default();
    let mut trace = OptimizationTrace::default();
    let mut remesh_deltas = Vec::new();
    let mut last: Option<StageSnapshot> = None;
    let mut lbfgs = Lbfgs::new(10);

    for i in 1..=sched.i_max {
        if let Some(prev) = &last {
            let deformed = prev.reference.deform(&prev.state.displacement());
            reference = reinitialize_domain(&deformed, cfg.h, cfg.max_nodes)?;
            q = transfer_state(&deformed, &prev.state.u, &reference);
        }
        let delta = sched.delta(i);
        let k_max = sched.k_max(i);
        let ev = Evaluator {
            mesh: &reference,
            grid: &grid,
            params: cfg.state_params(delta),
            objective: &objective,
            newton: cfg.newton(),
        };
        let mut log: Vec<NewtonRecord> = Vec::new();
        let mut cur = ev.evaluate(&alpha.alpha, q.clone(), &mut log)?;
        if let Some(prev) = &last {
            remesh_deltas.push((i, prev.value.total(), cur.value.total()));
        }
        let mut evaluations = trace.evaluations() + 1;
        trace.records.push(TraceRecord {
            stage: i,
            step: 0,
            accepted: true,
            tracking: cur.value.tracking,
            penalty: cur.value.penalty,
            grad_norm: f64::NAN,
            step_norm: 0.0,
            newton_iterations: cur.newton_iterations,
            evaluations,
        });
        lbfgs.reset();
        let (mut grad, _) = ev.gradient(&alpha.alpha, &cur.state)?;
        let mut k = 1;
        loop {
            let gnorm = norm(&projected_gradient(&alpha.alpha, &grad, cfg.alpha_min, cfg.alpha_max));
            let base = cur.state.clone();
            let mut pending: Vec<TraceRecord> = Vec::new();
            let last_iters = Cell::new(0usize);
            let last_value: Cell<Option<ObjectiveValue>> = Cell::new(None);
            let step = descent_step(
                &alpha.alpha,
                cur.value.total(),
                &grad,
                cfg.alpha_min,
                cfg.alpha_max,
                &lbfgs,
                &opts,
                |trial| {
                    let mut log = Vec::new();
                    match ev.evaluate(trial, base.clone(), &mut log) {
                        Ok(e) => {
                            last_iters.set(e.newton_iterations);
                            last_value.set(Some(e.value));
                            Some((e.value.total(), e))
                        }
                        Err(_) => {
                            last_iters.set(log.len().saturating_sub(1));
                            last_value.set(None);
                            None
                        }
                    }
                },
                |trial, _, accepted| {
                    evaluations += 1;
                    let v = last_value.get();
                    let diff: Vec<f64> = trial.iter().zip(&alpha.alpha).map(|(a, b)| a - b).collect();
                    pending.push(TraceRecord {
                        stage: i,
                        step: k,
                        accepted,
                        tracking: v.map_or(f64::NAN, |v| v.tracking),
                        penalty: v.map_or(f64::NAN, |v| v.penalty),
                        grad_norm: gnorm,
                        step_norm: norm(&diff),
                        newton_iterations: last_iters.get(),
                        evaluations,
                    });
                },
            );
            let Some((new_alpha, _, e)) = step.accepted else {
                trace.records.extend(pending);
                break;
            };
            trace.records.extend(pending);
            let (new_grad, _) = ev.gradient(&new_alpha, &e.state)?;
            let s: Vec<f64> = new_alpha.iter().zip(&alpha.alpha).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            lbfgs.update(s, y);
            alpha.alpha = new_alpha;
            grad = new_grad;
            cur = e;
            k += 1;
            if !(k < k_max && step.step_norm > sched.toler) {
                break;
            }
        }
        let snap = StageSnapshot {
            stage: i,
            delta,
            reference: reference.clone(),
            state: cur.state.clone(),
            alpha: alpha.clone(),
            value: cur.value,
        };
        on_stage(&snap);
        q = cur.state;
        last = Some(snap);
    }
    let final_stage = last.ok_or_else(|| Error::InvalidParameter("no stages were run".into()))?;
    Ok(RunOutcome {
        alpha,
        trace,
        final_stage,
        remesh_deltas,
    })
}
