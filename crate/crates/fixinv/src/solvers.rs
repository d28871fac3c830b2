//! Iteration schemes for residual-driven inversion, plus the cosine
//! warm-up learning-rate schedule.
//!
//! All solvers start from the encoder output `z^0 = E(x)` and run a fixed
//! iteration budget by default; a residual tolerance is opt-in. Gradient-free
//! schemes touch the pair only through `T(z) = E(D(z)) - E(x)`:
//!
//! - forward step method: `z^{k+1} = z^k - rho_k T(z^k)`
//! - inertial KM: `y^k = z^k + alpha (z^k - z^{k-1})`,
//!   `z^{k+1} = y^k - rho T(y^k)`, with `z^{-1} = z^0`
//! - residual Adam: the standard Adam update with `T(z^k)` in place of the
//!   gradient
//!
//! The gradient-based baselines (plain descent and Adam) need the pair's
//! gradient capability. Under [`PrecisionMode::HalfEmulated`] they detect
//! update underflow: ten consecutive steps whose nonzero update rounds away
//! to no state change are reported as a stall in the result.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{FixinvError, Result};
use crate::operators::{OperatorPair, PrecisionMode, ResidualOperator, Vector};

// ---------------------------------------------------------------------------
// Learning-rate schedule
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed { lr: f64 },
    /// Linear warm-up from 0 over the first tenth of the budget, cosine
    /// decay with period 0.9 K afterwards, frozen after eight tenths.
    CosineWarmup { lr_max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    pub total_steps: usize,
}

impl Schedule {
    pub fn fixed(lr: f64, total_steps: usize) -> Self {
        Schedule {
            kind: ScheduleKind::Fixed { lr },
            total_steps,
        }
    }

    pub fn cosine_warmup(lr_max: f64, total_steps: usize) -> Self {
        Schedule {
            kind: ScheduleKind::CosineWarmup { lr_max },
            total_steps,
        }
    }

    fn lr_unchecked(&self, k: usize) -> f64 {
        match self.kind {
            ScheduleKind::Fixed { lr } => lr,
            ScheduleKind::CosineWarmup { lr_max } => {
                let total = self.total_steps;
                let warmup = total.div_ceil(10);
                let freeze = 8 * total / 10;
                let cosine = |k: usize| {
                    let phase =
                        std::f64::consts::PI * ((k - warmup) as f64) / (0.9 * total as f64);
                    lr_max * (1.0 + phase.cos()) / 2.0
                };
                if k <= warmup {
                    lr_max * k as f64 / warmup as f64
                } else if k <= freeze {
                    cosine(k)
                } else {
                    // Frozen at the value it had when decay stopped.
                    let anchor = freeze.max(1);
                    if anchor <= warmup {
                        lr_max * anchor as f64 / warmup as f64
                    } else {
                        cosine(anchor)
                    }
                }
            }
        }
    }

    /// Step rate for iterations past `total_steps`: stays at the frozen
    /// tail value. Used when a run is longer than the schedule it was
    /// configured with.
    pub fn lr_clamped(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        self.lr_unchecked(k.min(self.total_steps))
    }
}

/// lr(k) for 1-based step `k`; errors with `OutOfRange` outside `1..=K`.
pub fn schedule_lr(schedule: &Schedule, k: usize) -> Result<f64> {
    if k < 1 || k > schedule.total_steps {
        return Err(FixinvError::OutOfRange {
            index: k,
            max: schedule.total_steps,
        });
    }
    Ok(schedule.lr_unchecked(k))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Keep the moment buffers in full precision even under
    /// `HalfEmulated`. By default the buffers round like any other solver
    /// state.
    pub full_precision_buffers: bool,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            full_precision_buffers: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Step rate comes from the schedule.
    ForwardStep,
    /// Fixed step `rho = 2 lambda beta`; the schedule is ignored.
    InertialKm { alpha: f64, rho: f64 },
    AdamFree(AdamParams),
    GradDescent,
    AdamGrad(AdamParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ForwardStep => "fsm",
            Method::InertialKm { .. } => "inertial_km",
            Method::AdamFree(_) => "adam_free",
            Method::GradDescent => "grad_descent",
            Method::AdamGrad(_) => "adam_grad",
        }
    }

    pub fn is_gradient_based(&self) -> bool {
        matches!(self, Method::GradDescent | Method::AdamGrad(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    #[default]
    Summary,
    /// Additionally records every iterate and per-step `||T z^k||` for all
    /// methods, at the cost of extra forward evaluations where the update
    /// does not already compute them.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    ResidualTol,
    NonFinite,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub schedule: Schedule,
    pub max_iters: usize,
    #[serde(default = "full_precision")]
    pub precision: PrecisionMode,
    #[serde(default)]
    pub trace_level: TraceLevel,
    #[serde(default)]
    pub residual_tol: Option<f64>,
}

fn full_precision() -> PrecisionMode {
    PrecisionMode::Full
}

impl SolverConfig {
    fn new(method: Method, schedule: Schedule, max_iters: usize) -> Self {
        SolverConfig {
            method,
            schedule,
            max_iters,
            precision: PrecisionMode::Full,
            trace_level: TraceLevel::Summary,
            residual_tol: None,
        }
    }

    pub fn forward_step_fixed(rho: f64, iters: usize) -> Self {
        Self::new(Method::ForwardStep, Schedule::fixed(rho, iters), iters)
    }

    pub fn inertial_km(alpha: f64, rho: f64, iters: usize) -> Self {
        Self::new(
            Method::InertialKm { alpha, rho },
            Schedule::fixed(rho, iters),
            iters,
        )
    }

    pub fn adam_free_scheduled(lr_max: f64, iters: usize) -> Self {
        Self::new(
            Method::AdamFree(AdamParams::default()),
            Schedule::cosine_warmup(lr_max, iters),
            iters,
        )
    }

    pub fn grad_descent_fixed(lr: f64, iters: usize) -> Self {
        Self::new(Method::GradDescent, Schedule::fixed(lr, iters), iters)
    }

    pub fn adam_grad_scheduled(lr_max: f64, iters: usize) -> Self {
        Self::new(
            Method::AdamGrad(AdamParams::default()),
            Schedule::cosine_warmup(lr_max, iters),
            iters,
        )
    }

    pub fn with_precision(mut self, precision: PrecisionMode) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_trace_level(mut self, level: TraceLevel) -> Self {
        self.trace_level = level;
        self
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = Some(tol);
        self
    }
}

// ---------------------------------------------------------------------------
// Traces and results
// ---------------------------------------------------------------------------

/// Per-iteration record of a solve; the raw material for every theorem
/// check and scan.
#[derive(Clone, Debug, Default)]
pub struct IterateTrace {
    /// `z^0 ..= z^K`, recorded at `TraceLevel::Full` only.
    pub iterates: Option<Vec<Vector>>,
    /// `||T z^k||` wherever the method evaluated it (every step for the
    /// residual-driven methods and at `Full` trace for the rest), plus one
    /// final entry for the terminal iterate.
    pub residual_norms: Vec<f64>,
    /// `||z^{k+1} - z^k||`, one per executed step.
    pub step_norms: Vec<f64>,
    /// `||z^{k+1} - 2 z^k + z^{k-1}||`, from the second step on.
    pub second_diff_norms: Vec<f64>,
    /// `||T y^k||`, inertial KM only.
    pub ty_norms: Vec<f64>,
    /// Seconds spent in each step.
    pub wall_time: Vec<f64>,
}

impl IterateTrace {
    /// Builds a full-level trace directly from iterates; diagnostics accept
    /// these for replay and synthetic trajectories.
    pub fn from_iterates(iterates: Vec<Vector>) -> Self {
        let step_norms = iterates
            .windows(2)
            .map(|w| w[1].sub(&w[0]).norm())
            .collect();
        let second_diff_norms = iterates
            .windows(3)
            .map(|w| w[2].sub(&w[1]).sub(&w[1].sub(&w[0])).norm())
            .collect();
        IterateTrace {
            iterates: Some(iterates),
            step_norms,
            second_diff_norms,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub z_final: Vector,
    pub iterations_run: usize,
    pub trace: IterateTrace,
    pub terminated_by: Termination,
    /// `||T z_final||`; NaN when the run aborted on non-finite values.
    pub final_residual_norm: f64,
    /// 1-based step at which ten consecutive underflowed updates were
    /// declared a stall (gradient-based methods under `HalfEmulated`).
    pub underflow_stall: Option<usize>,
}

impl SolveResult {
    pub fn total_wall_time(&self) -> f64 {
        self.trace.wall_time.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Shared loop machinery
// ---------------------------------------------------------------------------

struct TraceAcc {
    full: bool,
    trace: IterateTrace,
}

impl TraceAcc {
    fn new(level: TraceLevel, z0: &Vector) -> Self {
        let full = level == TraceLevel::Full;
        let mut trace = IterateTrace::default();
        if full {
            trace.iterates = Some(vec![z0.clone()]);
        }
        TraceAcc { full, trace }
    }

    fn record_step(&mut self, prev: Option<&Vector>, z: &Vector, z_next: &Vector) {
        self.trace.step_norms.push(z_next.sub(z).norm());
        if let Some(p) = prev {
            self.trace
                .second_diff_norms
                .push(z_next.sub(z).sub(&z.sub(p)).norm());
        }
        if self.full {
            self.trace.iterates.as_mut().unwrap().push(z_next.clone());
        }
    }
}

/// Distinguishes a numeric blow-up (handled as a termination cause with a
/// partial trace) from genuine errors.
fn residual_or_abort(op: &ResidualOperator, z: &Vector, mode: PrecisionMode) -> Result<Option<Vector>> {
    match op.apply(z, mode) {
        Ok(v) => Ok(Some(v)),
        Err(FixinvError::NonFiniteOutput { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn gradient_or_abort(
    pair: &OperatorPair,
    x: &Vector,
    z: &Vector,
    mode: PrecisionMode,
) -> Result<Option<Vector>> {
    match pair.loss_gradient(x, z, mode) {
        Ok(v) => Ok(Some(v)),
        Err(FixinvError::NonFiniteOutput { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

struct StallDetector {
    active: bool,
    run: usize,
    declared: Option<usize>,
}

impl StallDetector {
    fn new(mode: PrecisionMode) -> Self {
        StallDetector {
            active: mode == PrecisionMode::HalfEmulated,
            run: 0,
            declared: None,
        }
    }

    fn observe(&mut self, step: usize, state_unchanged: bool, update_nonzero: bool) {
        if !self.active {
            return;
        }
        if state_unchanged && update_nonzero {
            self.run += 1;
            if self.run >= 10 && self.declared.is_none() {
                self.declared = Some(step);
            }
        } else {
            self.run = 0;
        }
    }
}

fn finish(
    op: &ResidualOperator,
    z: Vector,
    iterations_run: usize,
    acc: TraceAcc,
    terminated_by: Termination,
    precision: PrecisionMode,
    underflow_stall: Option<usize>,
) -> SolveResult {
    let mut trace = acc.trace;
    let final_residual_norm = match op.apply(&z, precision) {
        Ok(t) => {
            let n = t.norm();
            trace.residual_norms.push(n);
            n
        }
        Err(_) => f64::NAN,
    };
    SolveResult {
        z_final: z,
        iterations_run,
        trace,
        terminated_by,
        final_residual_norm,
        underflow_stall,
    }
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Dispatches on `cfg.method`.
pub fn solve(pair: &OperatorPair, x: &Vector, cfg: &SolverConfig) -> Result<SolveResult> {
    match cfg.method {
        Method::ForwardStep => forward_step_solve(pair, x, cfg),
        Method::InertialKm { .. } => inertial_km_solve(pair, x, cfg),
        Method::AdamFree(_) => adam_free_solve(pair, x, cfg),
        Method::GradDescent => gradient_descent_solve(pair, x, cfg),
        Method::AdamGrad(_) => adam_grad_solve(pair, x, cfg),
    }
}

/// `z^{k+1} = z^k - rho_k T(z^k)`, `z^0 = E(x)`.
pub fn forward_step_solve(pair: &OperatorPair, x: &Vector, cfg: &SolverConfig) -> Result<SolveResult> {
    if !matches!(cfg.method, Method::ForwardStep) {
        return Err(FixinvError::InvalidSpec(
            "forward_step_solve requires Method::ForwardStep".into(),
        ));
    }
    let op = ResidualOperator::for_target_pixel(pair.clone(), x, cfg.precision)?;
    let mut z = op.target_latent().clone();
    let mut acc = TraceAcc::new(cfg.trace_level, &z);
    let mut prev: Option<Vector> = None;
    let mut terminated = Termination::MaxIters;
    let mut steps = 0;

    for k in 0..cfg.max_iters {
        let t0 = Instant::now();
        let Some(tz) = residual_or_abort(&op, &z, cfg.precision)? else {
            terminated = Termination::NonFinite;
            break;
        };
        let tz_norm = tz.norm();
        acc.trace.residual_norms.push(tz_norm);
        if cfg.residual_tol.is_some_and(|tol| tz_norm <= tol) {
            terminated = Termination::ResidualTol;
            break;
        }
        let lr = cfg.schedule.lr_clamped(k + 1);
        let z_next = cfg.precision.quantize(z.add_scaled(-lr, &tz));
        if !z_next.is_finite() {
            terminated = Termination::NonFinite;
            break;
        }
        acc.record_step(prev.as_ref(), &z, &z_next);
        acc.trace.wall_time.push(t0.elapsed().as_secs_f64());
        prev = Some(std::mem::replace(&mut z, z_next));
        steps = k + 1;
    }
    Ok(finish(&op, z, steps, acc, terminated, cfg.precision, None))
}

/// `y^k = z^k + alpha (z^k - z^{k-1})`, `z^{k+1} = y^k - rho T(y^k)`, with
/// `z^{-1} = z^0 = E(x)` so the first step carries no inertia.
pub fn inertial_km_solve(pair: &OperatorPair, x: &Vector, cfg: &SolverConfig) -> Result<SolveResult> {
    let Method::InertialKm { alpha, rho } = cfg.method else {
        return Err(FixinvError::InvalidSpec(
            "inertial_km_solve requires Method::InertialKm".into(),
        ));
    };
    if !(0.0..1.0).contains(&alpha) {
        return Err(FixinvError::InvalidSpec(format!(
            "inertial alpha must satisfy 0 <= alpha < 1, got {alpha}"
        )));
    }
    if !(rho > 0.0) {
        return Err(FixinvError::InvalidSpec(format!(
            "inertial step rho must be positive, got {rho}"
        )));
    }

    let op = ResidualOperator::for_target_pixel(pair.clone(), x, cfg.precision)?;
    let mut z = op.target_latent().clone();
    let mut z_prev = z.clone();
    let mut acc = TraceAcc::new(cfg.trace_level, &z);
    let mut have_prev = false;
    let mut terminated = Termination::MaxIters;
    let mut steps = 0;

    for k in 0..cfg.max_iters {
        let t0 = Instant::now();
        if acc.full {
            // Diagnostic-only residual at the plain iterate.
            let Some(tz) = residual_or_abort(&op, &z, cfg.precision)? else {
                terminated = Termination::NonFinite;
                break;
            };
            acc.trace.residual_norms.push(tz.norm());
        }
        let y = cfg.precision.quantize(z.add_scaled(alpha, &z.sub(&z_prev)));
        let Some(ty) = residual_or_abort(&op, &y, cfg.precision)? else {
            terminated = Termination::NonFinite;
            break;
        };
        let ty_norm = ty.norm();
        acc.trace.ty_norms.push(ty_norm);
        if cfg.residual_tol.is_some_and(|tol| ty_norm <= tol) {
            terminated = Termination::ResidualTol;
            break;
        }
        let z_next = cfg.precision.quantize(y.add_scaled(-rho, &ty));
        if !z_next.is_finite() {
            terminated = Termination::NonFinite;
            break;
        }
        acc.record_step(have_prev.then_some(&z_prev), &z, &z_next);
        acc.trace.wall_time.push(t0.elapsed().as_secs_f64());
        z_prev = std::mem::replace(&mut z, z_next);
        have_prev = true;
        steps = k + 1;
    }
    Ok(finish(&op, z, steps, acc, terminated, cfg.precision, None))
}

/// Adam update with the residual `T(z^k)` in place of the gradient.
pub fn adam_free_solve(pair: &OperatorPair, x: &Vector, cfg: &SolverConfig) -> Result<SolveResult> {
    let Method::AdamFree(params) = cfg.method else {
        return Err(FixinvError::InvalidSpec(
            "adam_free_solve requires Method::AdamFree".into(),
        ));
    };
    let op = ResidualOperator::for_target_pixel(pair.clone(), x, cfg.precision)?;
    let z0 = op.target_latent().clone();
    run_adam(
        &op,
        z0,
        cfg,
        params,
        |op, z, mode| residual_or_abort(op, z, mode),
        false,
    )
}

/// Plain gradient descent on `||x - D(z)||^2`; the baseline the paper's
/// gradient-based rows correspond to.
pub fn gradient_descent_solve(
    pair: &OperatorPair,
    x: &Vector,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if !matches!(cfg.method, Method::GradDescent) {
        return Err(FixinvError::InvalidSpec(
            "gradient_descent_solve requires Method::GradDescent".into(),
        ));
    }
    if !pair.has_gradient() {
        return Err(FixinvError::NoGradient);
    }
    let op = ResidualOperator::for_target_pixel(pair.clone(), x, cfg.precision)?;
    let mut z = op.target_latent().clone();
    let mut acc = TraceAcc::new(cfg.trace_level, &z);
    let mut prev: Option<Vector> = None;
    let mut stall = StallDetector::new(cfg.precision);
    let mut terminated = Termination::MaxIters;
    let mut steps = 0;

    for k in 0..cfg.max_iters {
        let t0 = Instant::now();
        if acc.full {
            let Some(tz) = residual_or_abort(&op, &z, cfg.precision)? else {
                terminated = Termination::NonFinite;
                break;
            };
            acc.trace.residual_norms.push(tz.norm());
        }
        let Some(g) = gradient_or_abort(pair, x, &z, cfg.precision)? else {
            terminated = Termination::NonFinite;
            break;
        };
        let lr = cfg.schedule.lr_clamped(k + 1);
        let update = g.scale(lr);
        let z_next = cfg.precision.quantize(z.sub(&update));
        if !z_next.is_finite() {
            terminated = Termination::NonFinite;
            break;
        }
        stall.observe(
            k + 1,
            z_next.bit_eq(&z),
            update.iter().any(|&u| u != 0.0),
        );
        acc.record_step(prev.as_ref(), &z, &z_next);
        acc.trace.wall_time.push(t0.elapsed().as_secs_f64());
        prev = Some(std::mem::replace(&mut z, z_next));
        steps = k + 1;
    }
    Ok(finish(
        &op,
        z,
        steps,
        acc,
        terminated,
        cfg.precision,
        stall.declared,
    ))
}

/// Adam on the true gradient; the paper's strongest gradient-based setting.
pub fn adam_grad_solve(pair: &OperatorPair, x: &Vector, cfg: &SolverConfig) -> Result<SolveResult> {
    let Method::AdamGrad(params) = cfg.method else {
        return Err(FixinvError::InvalidSpec(
            "adam_grad_solve requires Method::AdamGrad".into(),
        ));
    };
    if !pair.has_gradient() {
        return Err(FixinvError::NoGradient);
    }
    let op = ResidualOperator::for_target_pixel(pair.clone(), x, cfg.precision)?;
    let z0 = op.target_latent().clone();
    let pair = pair.clone();
    let x = x.clone();
    run_adam(
        &op,
        z0,
        cfg,
        params,
        move |_op, z, mode| gradient_or_abort(&pair, &x, z, mode),
        true,
    )
}

/// Shared Adam loop; `direction` yields either the residual or the
/// gradient. Stall detection applies to the gradient-based variant.
fn run_adam<F>(
    op: &ResidualOperator,
    z0: Vector,
    cfg: &SolverConfig,
    params: AdamParams,
    direction: F,
    gradient_based: bool,
) -> Result<SolveResult>
where
    F: Fn(&ResidualOperator, &Vector, PrecisionMode) -> Result<Option<Vector>>,
{
    let dim = z0.dim();
    let mut z = z0;
    let mut m = Vector::zeros(dim);
    let mut v = Vector::zeros(dim);
    let mut acc = TraceAcc::new(cfg.trace_level, &z);
    let mut prev: Option<Vector> = None;
    let mut stall = StallDetector::new(cfg.precision);
    let mut terminated = Termination::MaxIters;
    let mut steps = 0;
    let quantize_buffer = |buf: Vector| {
        if params.full_precision_buffers {
            buf
        } else {
            cfg.precision.quantize(buf)
        }
    };

    for k in 0..cfg.max_iters {
        let t0 = Instant::now();
        let Some(dir) = direction(op, &z, cfg.precision)? else {
            terminated = Termination::NonFinite;
            break;
        };
        if !gradient_based {
            // The residual drives the update, so its norm comes for free.
            let n = dir.norm();
            acc.trace.residual_norms.push(n);
            if cfg.residual_tol.is_some_and(|tol| n <= tol) {
                terminated = Termination::ResidualTol;
                break;
            }
        } else if acc.full {
            let Some(tz) = residual_or_abort(op, &z, cfg.precision)? else {
                terminated = Termination::NonFinite;
                break;
            };
            acc.trace.residual_norms.push(tz.norm());
        }

        let t = (k + 1) as i32;
        m = quantize_buffer(Vector::new(
            m.iter()
                .zip(dir.iter())
                .map(|(&mi, &di)| params.beta1 * mi + (1.0 - params.beta1) * di)
                .collect(),
        ));
        v = quantize_buffer(Vector::new(
            v.iter()
                .zip(dir.iter())
                .map(|(&vi, &di)| params.beta2 * vi + (1.0 - params.beta2) * di * di)
                .collect(),
        ));
        let bc1 = 1.0 - params.beta1.powi(t);
        let bc2 = 1.0 - params.beta2.powi(t);
        let lr = cfg.schedule.lr_clamped(k + 1);
        let update = Vector::new(
            m.iter()
                .zip(v.iter())
                .map(|(&mi, &vi)| lr * (mi / bc1) / ((vi / bc2).sqrt() + params.epsilon))
                .collect(),
        );
        let z_next = cfg.precision.quantize(z.sub(&update));
        if !z_next.is_finite() || !m.is_finite() || !v.is_finite() {
            terminated = Termination::NonFinite;
            break;
        }
        if gradient_based {
            stall.observe(
                k + 1,
                z_next.bit_eq(&z),
                update.iter().any(|&u| u != 0.0),
            );
        }
        acc.record_step(prev.as_ref(), &z, &z_next);
        acc.trace.wall_time.push(t0.elapsed().as_secs_f64());
        prev = Some(std::mem::replace(&mut z, z_next));
        steps = k + 1;
    }
    Ok(finish(
        op,
        z,
        steps,
        acc,
        terminated,
        cfg.precision,
        stall.declared,
    ))
}
