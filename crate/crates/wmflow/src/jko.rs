//! Minimizing-movement time stepping.
//!
//! Each step solves
//!   u_next = argmin  d(u_prev, v)^2 / (2 tau) + E[v]
//! over the admissible set {0 <= v <= M, h sum v = mass} with a spectral
//! projected-gradient method (Barzilai-Borwein steps, monotone Armijo
//! line search along the projection arc). The inner solve starts at
//! u_prev and decreases the objective monotonically, so
//!   E[u_next] + d(u_prev, u_next)^2 / (2 tau) <= E[u_prev]
//! holds by construction for every accepted step; the slack is recorded
//! as a per-step certificate.
//!
//! The step metric is the frozen-weight surrogate with face weights
//! m(u_prev). Under the dynamic backend the weights are refrozen at the
//! current iterate a few times (bringing the stationarity condition
//! closer to the genuine action metric) and the K-slice dynamic distance
//! between consecutive states is recorded alongside the surrogate value.

use serde::Serialize;
use thiserror::Error;

use crate::functionals::{energy, energy_normalized, entropy_functional};
use crate::grid::{
    gradient_face_of, laplacian_neumann_of, neumann_solve, project_admissible, Density, Grid,
    GridError,
};
use crate::metric::{distance_dynamic, frozen_face_weights, MetricBackend, MetricError};
use crate::physics::ProblemSpec;

#[derive(Debug, Error)]
pub enum JkoError {
    #[error("time {time} is outside the trajectory range [0, {t_end}]")]
    OutOfRange { time: f64, t_end: f64 },
    #[error("step size and horizon must be positive: tau = {0}, t_end = {1}")]
    BadTimeGrid(f64, f64),
    #[error("initial state violates the admissible set (mass {mass}, ceiling {ceiling})")]
    InadmissibleInitial { mass: f64, ceiling: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Termination state of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepStatus {
    /// Projected-gradient norm reached the tolerance.
    Converged,
    /// Iteration limit hit; the iterate still certifies descent.
    IterationLimit,
}

/// Per-step trajectory record.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    /// 1-based step index; state `index` is reached at `time`.
    pub index: usize,
    pub time: f64,
    /// Metric value d(u_prev, u_next) in the metric the step minimized.
    pub w_value: f64,
    /// K-slice dynamic distance between the same states (dynamic backend).
    pub w_dynamic: Option<f64>,
    pub energy: f64,
    pub energy_normalized: f64,
    pub entropy: f64,
    /// Projected-gradient norm (unit step) at the accepted iterate.
    pub pg_norm: f64,
    pub inner_iterations: usize,
    /// E[u_prev] - E[u_next] - w_value^2 / (2 tau); non-negative by
    /// construction of the inner solve.
    pub certificate_slack: f64,
    pub status: StepStatus,
}

/// Configuration of a minimizing-movement run.
#[derive(Debug, Clone, Copy)]
pub struct JkoConfig {
    pub tau: f64,
    pub t_end: f64,
    pub backend: MetricBackend,
    /// Inner iteration cap per step.
    pub max_inner: usize,
    /// Absolute tolerance on the projected-gradient norm.
    pub pg_tol: f64,
    /// Weight refreezes per step under the dynamic backend.
    pub refreezes: usize,
}

impl JkoConfig {
    pub fn new(tau: f64, t_end: f64) -> Self {
        JkoConfig {
            tau,
            t_end,
            backend: MetricBackend::FrozenWeight,
            max_inner: 600,
            pg_tol: 1e-9,
            refreezes: 2,
        }
    }

    pub fn with_backend(mut self, backend: MetricBackend) -> Self {
        self.backend = backend;
        self
    }
}

/// States and records of a completed run. State 0 is the initial datum;
/// state n is reached at time n tau.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    tau: f64,
    states: Vec<Density>,
    records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t_end(&self) -> f64 {
        self.tau * self.records.len() as f64
    }

    pub fn states(&self) -> &[Density] {
        &self.states
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn final_state(&self) -> &Density {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Index of the piecewise-constant interpolant at time t:
    /// state n on ((n-1) tau, n tau], state 0 at t = 0.
    pub fn state_index(&self, t: f64) -> Result<usize, JkoError> {
        let t_end = self.t_end();
        if !(0.0..=t_end * (1.0 + 1e-12) + 1e-300).contains(&t) {
            return Err(JkoError::OutOfRange { time: t, t_end });
        }
        let n = (t / self.tau - 1e-12).ceil().max(0.0) as usize;
        Ok(n.min(self.records.len()))
    }

    /// Piecewise-constant-in-time interpolant.
    pub fn interpolant(&self, t: f64) -> Result<&Density, JkoError> {
        Ok(&self.states[self.state_index(t)?])
    }

    /// Accumulated metric length sum over steps i+1 ..= j.
    pub fn path_distance_between(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.records[lo..hi].iter().map(|r| r.w_value).sum()
    }

    /// Accumulated metric length between the interpolant times s and t.
    pub fn path_distance(&self, s: f64, t: f64) -> Result<f64, JkoError> {
        Ok(self.path_distance_between(self.state_index(s)?, self.state_index(t)?))
    }
}

// ---------------------------------------------------------------------------
// inner solve

/// Step objective with fixed face weights:
/// |v - u_prev|_{-1,w}^2 / (2 tau) + E[v]. Returns the value and the
/// weighted Neumann potential of the residual.
fn step_objective(
    grid: Grid,
    spec: &ProblemSpec,
    u_prev: &[f64],
    weight: &[f64],
    v: &[f64],
    tau: f64,
) -> Result<(f64, Vec<f64>), GridError> {
    let n = grid.n_cells();
    let r: Vec<f64> = v.iter().zip(u_prev).map(|(a, b)| a - b).collect();
    let phi = neumann_solve(grid, &r, weight)?;
    let g = gradient_face_of(grid, &phi);
    let mut metric_sq = 0.0;
    for f in 1..n {
        metric_sq += weight[f] * g[f] * g[f];
    }
    metric_sq *= grid.h();
    let e = energy(&Density::from_values(grid, v.to_vec()), spec).total;
    Ok((metric_sq / (2.0 * tau) + e, phi))
}

/// Objective gradient in the h-weighted inner product:
/// phi / tau - lap v + G'(v), with phi the potential of v - u_prev.
fn step_gradient(grid: Grid, spec: &ProblemSpec, phi: &[f64], v: &[f64], tau: f64) -> Vec<f64> {
    let lap = laplacian_neumann_of(grid, v);
    (0..grid.n_cells())
        .map(|j| phi[j] / tau - lap[j] + spec.g_prime(v[j]))
        .collect()
}

struct InnerResult {
    v: Vec<f64>,
    objective: f64,
    metric_value: f64,
    pg_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Spectral projected gradient on the fixed-weight step objective,
/// started at `start`. Monotone descent; never returns an iterate with a
/// larger objective than the start.
fn solve_inner(
    grid: Grid,
    spec: &ProblemSpec,
    u_prev: &[f64],
    weight: &[f64],
    start: &[f64],
    tau: f64,
    max_inner: usize,
    pg_tol: f64,
) -> Result<InnerResult, GridError> {
    let n = grid.n_cells();
    let h = grid.h();
    let mass = spec.mass();
    let ceiling = spec.ceiling();
    let mut v = start.to_vec();
    let (mut fv, mut phi) = step_objective(grid, spec, u_prev, weight, &v, tau)?;
    let mut g = step_gradient(grid, spec, &phi, &v, tau);
    let mut alpha: f64 = 1.0;
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..max_inner {
        iterations = it + 1;
        // projected-gradient norm with unit step, the stationarity measure
        let trial: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - b).collect();
        let pv = project_admissible(grid, &trial, ceiling, mass)?;
        let diff: Vec<f64> = pv.values().iter().zip(&v).map(|(a, b)| a - b).collect();
        pg_norm = grid.l2_norm(&diff);
        if pg_norm <= pg_tol {
            converged = true;
            break;
        }

        let mut t_alpha = alpha.clamp(1e-12, 1e12);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - t_alpha * b).collect();
            let cand = project_admissible(grid, &trial, ceiling, mass)?;
            let step: Vec<f64> = cand.values().iter().zip(&v).map(|(a, b)| a - b).collect();
            let slope = h * step.iter().zip(&g).map(|(s, gg)| s * gg).sum::<f64>();
            if slope >= 0.0 {
                // the arc no longer descends at this scale
                t_alpha *= 0.5;
                continue;
            }
            let (fc, phic) = step_objective(grid, spec, u_prev, weight, cand.values(), tau)?;
            if fc <= fv + 1e-4 * slope {
                accepted = Some((cand, fc, phic, step));
                break;
            }
            t_alpha *= 0.5;
        }
        let Some((cand, fc, phic, step)) = accepted else {
            // no decrease found at any scale: treat as stationary
            converged = pg_norm <= 1e3 * pg_tol;
            break;
        };
        let g_new = step_gradient(grid, spec, &phic, cand.values(), tau);
        let sy: f64 = step.iter().zip(g_new.iter().zip(&g)).map(|(s, (a, b))| s * (a - b)).sum();
        let ss: f64 = step.iter().map(|s| s * s).sum();
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e6 };
        v = cand.values().to_vec();
        fv = fc;
        phi = phic;
        g = g_new;
    }

    let gphi = gradient_face_of(grid, &phi);
    let mut metric_sq = 0.0;
    for f in 1..n {
        metric_sq += weight[f] * gphi[f] * gphi[f];
    }
    metric_sq *= h;
    Ok(InnerResult {
        v,
        objective: fv,
        metric_value: metric_sq.max(0.0).sqrt(),
        pg_norm,
        iterations,
        converged,
    })
}

/// One minimizing-movement step from `u_prev`. Returns the new state and
/// its record (with `index` and `time` left at zero for `run` to fill).
pub fn jko_step(
    u_prev: &Density,
    spec: &ProblemSpec,
    tau: f64,
    config: &JkoConfig,
) -> Result<(Density, StepRecord), JkoError> {
    let grid = u_prev.grid();
    let e_prev = energy(u_prev, spec).total;

    let mut weight = frozen_face_weights(u_prev, spec);
    let mut inner = solve_inner(
        grid,
        spec,
        u_prev.values(),
        &weight,
        u_prev.values(),
        tau,
        config.max_inner,
        config.pg_tol,
    )?;

    let mut w_dynamic = None;
    if let MetricBackend::Dynamic { k_slices } = config.backend {
        // refreeze the weights at the current iterate and re-solve; keep
        // the refinement only while it still certifies descent
        for _ in 0..config.refreezes {
            let at = Density::from_values(grid, inner.v.clone());
            weight = frozen_face_weights(&at, spec);
            let refined = solve_inner(
                grid,
                spec,
                u_prev.values(),
                &weight,
                &inner.v,
                tau,
                config.max_inner,
                config.pg_tol,
            )?;
            if refined.objective <= e_prev {
                inner = refined;
            } else {
                break;
            }
        }
        let next = Density::from_values(grid, inner.v.clone());
        w_dynamic = Some(distance_dynamic(u_prev, &next, k_slices, spec)?.value);
    }

    let next = Density::new(grid, inner.v, spec.ceiling());
    let record = StepRecord {
        index: 0,
        time: 0.0,
        w_value: inner.metric_value,
        w_dynamic,
        energy: energy(&next, spec).total,
        energy_normalized: energy_normalized(&next, spec),
        entropy: entropy_functional(&next, spec),
        pg_norm: inner.pg_norm,
        inner_iterations: inner.iterations,
        certificate_slack: e_prev - inner.objective,
        status: if inner.converged { StepStatus::Converged } else { StepStatus::IterationLimit },
    };
    Ok((next, record))
}

/// Runs the scheme from `u0` to `config.t_end` with step `config.tau`.
pub fn run(u0: &Density, spec: &ProblemSpec, config: &JkoConfig) -> Result<Trajectory, JkoError> {
    if !(config.tau > 0.0) || !(config.t_end > 0.0) {
        return Err(JkoError::BadTimeGrid(config.tau, config.t_end));
    }
    if !u0.is_admissible(spec.ceiling(), spec.mass(), 1e-9 * spec.mass().max(1.0)) {
        return Err(JkoError::InadmissibleInitial {
            mass: u0.mass(),
            ceiling: spec.ceiling(),
        });
    }
    let steps = (config.t_end / config.tau - 1e-9).ceil().max(1.0) as usize;
    let mut states = Vec::with_capacity(steps + 1);
    let mut records = Vec::with_capacity(steps);
    states.push(u0.clone());
    for n in 1..=steps {
        let (next, mut record) = jko_step(states.last().unwrap(), spec, config.tau, config)?;
        record.index = n;
        record.time = n as f64 * config.tau;
        states.push(next);
        records.push(record);
    }
    Ok(Trajectory { grid: u0.grid(), tau: config.tau, states, records })
}
