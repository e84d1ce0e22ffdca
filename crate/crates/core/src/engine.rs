//! Closed-loop iteration driver and the per-iteration monitors.
//!
//! Within one iteration each grid node is processed in order:
//!
//! 1. read the error state and evaluate the barrier argument and `z`,
//! 2. update the learning memory at that node,
//! 3. form the input from the new estimate and the robust term,
//! 4. integrate one RK4 step to the next node.
//!
//! During step 4 the estimate is held at its node value; `z`, `ρ` and the
//! robust term are re-evaluated at every stage state. A stage or node whose
//! barrier argument reaches the bound ends the iteration early with the
//! breach flag set on the last recorded node.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::barrier::BarrierKind;
use crate::controller::{self, ControllerConfig, Theorem};
use crate::error::{Error, Result};
use crate::learner::{ParamMemory, TimeGrid};
use crate::ode::rk4_step;
use crate::plant::Plant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    I,
    II,
}

impl ModelKind {
    pub fn of(plant: &Plant) -> Self {
        match plant {
            Plant::I(_) => ModelKind::I,
            Plant::II(_) => ModelKind::II,
        }
    }
}

/// Barrier used by the Lyapunov-Krasovskii monitor: `scale · kind(x, bound)`.
///
/// Model II works on `x = eᵀPe` and halves the barrier.
pub fn monitor_barrier(model: ModelKind, theorem: Theorem) -> (BarrierKind, f64) {
    let kind = match theorem {
        Theorem::One => BarrierKind::FII,
        Theorem::Two => BarrierKind::FV,
    };
    let scale = match model {
        ModelKind::I => 1.0,
        ModelKind::II => 0.5,
    };
    (kind, scale)
}

/// Learning signal for the active model and scheme.
pub fn learning_signal(
    model: ModelKind,
    theorem: Theorem,
    x: f64,
    grad: &DVector<f64>,
    bound: f64,
) -> Result<DVector<f64>> {
    match (model, theorem) {
        (ModelKind::I, Theorem::One) => controller::z_model1_thm1(x, grad, bound),
        (ModelKind::II, Theorem::One) => controller::z_model2_thm1(x, grad, bound),
        (_, Theorem::Two) => controller::z_thm2(x, grad, bound),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub k: usize,
    pub t: Vec<f64>,
    pub e: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Barrier argument: `V` (Model I) or `eᵀPe` (Model II).
    pub v: Vec<f64>,
    pub theta_hat: Vec<DVector<f64>>,
    /// Lyapunov-Krasovskii functional, filled by [`monitor_l`].
    pub l: Vec<f64>,
    pub breach: Vec<bool>,
}

impl IterationTrace {
    fn with_capacity(k: usize, cap: usize) -> Self {
        IterationTrace {
            k,
            t: Vec::with_capacity(cap),
            e: Vec::with_capacity(cap),
            u: Vec::with_capacity(cap),
            v: Vec::with_capacity(cap),
            theta_hat: Vec::with_capacity(cap),
            l: Vec::new(),
            breach: Vec::with_capacity(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn breached(&self) -> bool {
        self.breach.iter().any(|&b| b)
    }

    pub fn sup_error(&self) -> f64 {
        self.e.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    pub fn sup_v(&self) -> f64 {
        self.v.iter().copied().fold(0.0, f64::max)
    }
}

fn is_breach(err: &Error) -> bool {
    matches!(err, Error::Domain(_))
}

/// Runs one iteration, updating `memory` in place.
pub fn run_iteration(
    plant: &Plant,
    cfg: &ControllerConfig,
    theorem: Theorem,
    memory: &mut ParamMemory,
    k: usize,
) -> Result<IterationTrace> {
    cfg.validate()?;
    let grid = *memory.grid();
    if (grid.horizon() - plant.horizon()).abs() > 1e-12 * plant.horizon() {
        return Err(Error::Parameter {
            name: "T",
            reason: format!(
                "memory horizon {} differs from model horizon {}",
                grid.horizon(),
                plant.horizon()
            ),
        });
    }
    crate::error::check_dim("memory", plant.m(), memory.dim())?;

    let model = ModelKind::of(plant);
    let bound = cfg.bound;
    let dt = grid.dt();
    let steps = grid.steps();
    let mut trace = IterationTrace::with_capacity(k, steps + 1);

    let robust_at = |t: f64, e: &DVector<f64>| -> Result<(f64, DVector<f64>, DVector<f64>)> {
        let x = plant.barrier_arg(t, e);
        let z = learning_signal(model, theorem, x, &plant.gradient(t, e), bound)?;
        let s = controller::robust(cfg.mode, &z, plant.rho_bound(t, e));
        Ok((x, z, s))
    };

    // alignment: e_k(0) = 0
    let mut e = DVector::zeros(plant.n());
    for i in 0..=steps {
        let t = grid.node(i);
        let (x, z, s) = match robust_at(t, &e) {
            Ok(r) => r,
            Err(err) if is_breach(&err) => {
                if let Some(last) = trace.breach.last_mut() {
                    *last = true;
                }
                break;
            }
            Err(err) => return Err(err),
        };
        let theta_hat = memory.update_node(i, &z, cfg.gamma)?.theta_hat;
        let u = controller::compose(&theta_hat, &s)?;

        trace.t.push(t);
        trace.e.push(e.clone());
        trace.u.push(u);
        trace.v.push(x);
        trace.breach.push(false);

        if i == steps {
            trace.theta_hat.push(theta_hat);
            break;
        }
        let h = grid.node(i + 1) - t;
        let step = rk4_step(t, &e, h, |ts, es| {
            let (_, _, s) = robust_at(ts, es)?;
            let u = controller::compose(&theta_hat, &s)?;
            plant.rhs(ts, es, &u)
        });
        trace.theta_hat.push(theta_hat);
        match step {
            Ok(next) if next.iter().all(|v| v.is_finite()) => e = next,
            Ok(_) => {
                return Err(Error::NonFinite {
                    iteration: k,
                    t: t + dt,
                })
            }
            Err(err) if is_breach(&err) => {
                *trace.breach.last_mut().unwrap() = true;
                break;
            }
            Err(err) => return Err(err),
        }
    }
    if trace.is_empty() {
        // unreachable for a valid bound: the node-0 barrier argument is 0
        return Err(Error::Parameter {
            name: "bound",
            reason: "barrier violated at the initial node".into(),
        });
    }
    Ok(trace)
}

/// Per-node `L_k(t) = scale · B(x_k(t)) + (1/2γ) ∫₀ᵗ ‖θ - θ̂_k‖² ds`, with the
/// integral taken by the trapezoid rule on the recorded nodes.
pub fn monitor_l(
    trace: &IterationTrace,
    plant: &Plant,
    theorem: Theorem,
    cfg: &ControllerConfig,
) -> Result<Vec<f64>> {
    let (kind, scale) = monitor_barrier(ModelKind::of(plant), theorem);
    let mut out = Vec::with_capacity(trace.len());
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..trace.len() {
        let t = trace.t[i];
        let err2 = (plant.theta_true(t) - &trace.theta_hat[i]).norm_squared();
        if let Some((tp, ep)) = prev {
            integral += 0.5 * (t - tp) * (err2 + ep);
        }
        prev = Some((t, err2));
        let barrier = scale * kind.eval(trace.v[i], cfg.bound)?;
        out.push(barrier + integral / (2.0 * cfg.gamma));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub k: usize,
    pub sup_e: f64,
    /// Sup over t of the barrier argument.
    pub sup_v: f64,
    /// `L_k` at the last recorded node (`T` unless truncated).
    pub l_t: f64,
    /// `L_k(T) - L_{k-1}(T)`; absent for k = 0.
    pub delta_l: Option<f64>,
    /// `V_k(T)` for Model I, `W_k(T)` for Model II.
    pub decrease: f64,
    pub violations: usize,
    pub complete: bool,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub model: ModelKind,
    pub theorem: Theorem,
    pub bound: f64,
    pub theta_bar: f64,
    /// Allowed per-iteration residual in the `ΔL_k` inequality.
    pub residual: f64,
    pub iterations: Vec<IterationSummary>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn total_violations(&self) -> usize {
        self.iterations.iter().map(|s| s.violations).sum()
    }

    pub fn sup_e(&self) -> Vec<f64> {
        self.iterations.iter().map(|s| s.sup_e).collect()
    }

    pub fn sup_v(&self) -> Vec<f64> {
        self.iterations.iter().map(|s| s.sup_v).collect()
    }

    /// Columns `k, sup_e, sup_V, L_T, delta_L, violations`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "sup_e", "sup_V", "L_T", "delta_L", "violations"])?;
        for s in &self.iterations {
            w.write_record([
                s.k.to_string(),
                s.sup_e.to_string(),
                s.sup_v.to_string(),
                s.l_t.to_string(),
                s.delta_l.map(|d| d.to_string()).unwrap_or_default(),
                s.violations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub traces: Vec<IterationTrace>,
    pub memory: ParamMemory,
}

/// Runs `iterations` passes over `[0, T]` with a zero-initialised memory.
pub fn run(
    plant: &Plant,
    cfg: &ControllerConfig,
    theorem: Theorem,
    steps: usize,
    iterations: usize,
) -> Result<RunOutput> {
    if iterations == 0 {
        return Err(Error::Parameter {
            name: "K",
            reason: "need at least one iteration".into(),
        });
    }
    cfg.validate()?;
    let started = Instant::now();
    let grid = TimeGrid::new(plant.horizon(), steps)?;
    let mut memory = ParamMemory::new(grid, plant.m(), cfg.theta_bar)?;
    let model = ModelKind::of(plant);
    let (kind, scale) = monitor_barrier(model, theorem);

    let mut traces = Vec::with_capacity(iterations);
    let mut summaries: Vec<IterationSummary> = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let it_started = Instant::now();
        let mut trace = run_iteration(plant, cfg, theorem, &mut memory, k)?;
        trace.l = monitor_l(&trace, plant, theorem, cfg)?;
        let l_t = *trace.l.last().unwrap();
        let x_t = *trace.v.last().unwrap();
        let decrease = match model {
            ModelKind::I => x_t,
            ModelKind::II => scale * kind.eval(x_t, cfg.bound)?,
        };
        let violations = trace.breach.iter().filter(|&&b| b).count();
        summaries.push(IterationSummary {
            k,
            sup_e: trace.sup_error(),
            sup_v: trace.sup_v(),
            l_t,
            delta_l: summaries.last().map(|p| l_t - p.l_t),
            decrease,
            violations,
            complete: violations == 0 && trace.len() == steps + 1,
            wall_time: it_started.elapsed(),
        });
        traces.push(trace);
    }
    Ok(RunOutput {
        report: RunReport {
            model,
            theorem,
            bound: cfg.bound,
            theta_bar: cfg.theta_bar,
            residual: cfg.residual(plant.horizon()),
            iterations: summaries,
            wall_time: started.elapsed(),
        },
        traces,
        memory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaLVerdict {
    pub k: usize,
    pub delta_l: f64,
    /// Right-hand side `-decrease_{k-1} + residual`.
    pub allowed: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Relative slack on the `ΔL_k` inequality: `1e-6 (1 + |L_k|)`.
pub const DELTA_L_SLACK: f64 = 1e-6;

/// Checks `L_k(T) - L_{k-1}(T) <= -decrease_{k-1} + residual` for k >= 1.
/// Truncated iterations never pass.
pub fn check_delta_l(report: &RunReport) -> Vec<DeltaLVerdict> {
    report
        .iterations
        .windows(2)
        .map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            let delta_l = cur.l_t - prev.l_t;
            let allowed = -prev.decrease + report.residual;
            let slack = DELTA_L_SLACK * (1.0 + cur.l_t.abs());
            DeltaLVerdict {
                k: cur.k,
                delta_l,
                allowed,
                slack,
                holds: prev.complete && cur.complete && delta_l <= allowed + slack,
            }
        })
        .collect()
}

/// Columns `k, t, e_1..e_n, u_1..u_m, V, L, theta_hat_1..theta_hat_m, breach`.
pub fn write_trace_csv<W: Write>(traces: &[IterationTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = traces.iter().find(|t| !t.is_empty()) else {
        w.flush()?;
        return Ok(());
    };
    let n = first.e[0].len();
    let m = first.u[0].len();
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((1..=n).map(|j| format!("e_{j}")));
    header.extend((1..=m).map(|j| format!("u_{j}")));
    header.push("V".into());
    header.push("L".into());
    header.extend((1..=m).map(|j| format!("theta_hat_{j}")));
    header.push("breach".into());
    w.write_record(&header)?;

    let mut row = Vec::with_capacity(header.len());
    for trace in traces {
        for i in 0..trace.len() {
            row.clear();
            row.push(trace.k.to_string());
            row.push(trace.t[i].to_string());
            row.extend(trace.e[i].iter().map(f64::to_string));
            row.extend(trace.u[i].iter().map(f64::to_string));
            row.push(trace.v[i].to_string());
            row.push(trace.l.get(i).map(f64::to_string).unwrap_or_default());
            row.extend(trace.theta_hat[i].iter().map(f64::to_string));
            row.push(u8::from(trace.breach[i]).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
