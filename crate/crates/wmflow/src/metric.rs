//! Weighted transport distance between admissible densities.
//!
//! Two backends:
//! - dynamic: minimal action over discrete continuity-equation paths,
//!   sum of (ds h) |momentum|^2 / m(rho_hat) with rho_hat the arithmetic
//!   mean of the four neighboring (slice, cell) densities. Jointly convex
//!   for concave m; solved by a log-barrier Newton-CG over the momentum
//!   variables with the last slice eliminated by the endpoint constraint.
//! - frozen weight: the metric-tensor norm at a reference density, one
//!   weighted Neumann solve.
//!
//! [`distance_oracle_small`] is a deliberately separate implementation
//! (finite-difference gradients, multi-start plain descent) used to
//! cross-check the dynamic solver on tiny instances.
//!
//! ```
//! use wmflow::grid::{project_admissible, Grid};
//! use wmflow::metric::{distance_dynamic, distance_oracle_small};
//! use wmflow::physics::{FreeEnergy, Mobility, ProblemSpec};
//!
//! let spec = ProblemSpec::new(
//!     Mobility::quadratic(1.0),
//!     FreeEnergy::double_well(1.0),
//!     0.5,
//!     1.0,
//! )
//! .unwrap();
//! let grid = Grid::new(4, 1.0);
//! let a = project_admissible(grid, &[0.9, 0.6, 0.3, 0.2], 1.0, 0.5).unwrap();
//! let b = project_admissible(grid, &[0.2, 0.3, 0.6, 0.9], 1.0, 0.5).unwrap();
//! let d = distance_dynamic(&a, &b, 3, &spec).unwrap().value;
//! let o = distance_oracle_small(&a, &b, 3, &spec);
//! assert!((d - o).abs() < 1e-6);
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{weighted_dual_norm_sq, Density, Grid, GridError};
use crate::physics::ProblemSpec;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("densities carry different masses: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Discrete space-time path realizing a dynamic distance value.
#[derive(Debug, Clone)]
pub struct TransportPlanPath {
    /// (K+1) x n_cells slice densities; rho[0] = source, rho[K] = target.
    pub rho: Vec<Vec<f64>>,
    /// K x (n_cells+1) face momenta; boundary faces are zero.
    pub momentum: Vec<Vec<f64>>,
    pub k_slices: usize,
    pub action: f64,
}

impl TransportPlanPath {
    /// Max continuity-equation residual over slices and cells.
    pub fn continuity_residual(&self, grid: Grid) -> f64 {
        let k = self.k_slices;
        let h = grid.h();
        let mut worst = 0.0f64;
        for s in 0..k {
            for j in 0..grid.n_cells() {
                let div = (self.momentum[s][j + 1] - self.momentum[s][j]) / h;
                let r = (self.rho[s + 1][j] - self.rho[s][j]) * k as f64 + div;
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// Backend selector carried through configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricBackend {
    Dynamic { k_slices: usize },
    FrozenWeight,
}

/// Result of a dynamic distance solve.
#[derive(Debug, Clone)]
pub struct DynamicResult {
    pub value: f64,
    pub path: TransportPlanPath,
    /// Gradient norm of the barrier objective at the final iterate.
    pub kkt_residual: f64,
    /// Set when the inner solver stalled before reaching its target
    /// residual; the value is still the best feasible one found.
    pub degraded: bool,
}

// ---------------------------------------------------------------------------
// shared path plumbing

/// Cumulative endpoint constraint: S_f = sum_k z[k]_f must satisfy
/// div(S) = K (u0 - u1) h ... constructed by integrating the mass defect.
fn endpoint_momentum_sum(grid: Grid, u0: &[f64], u1: &[f64], k: usize) -> Vec<f64> {
    let n = grid.n_cells();
    let h = grid.h();
    let mut s = vec![0.0; n + 1];
    for j in 0..n {
        s[j + 1] = s[j] + h * k as f64 * (u0[j] - u1[j]);
    }
    // equal masses make the last entry vanish up to rounding; pin it
    s[n] = 0.0;
    s
}

/// Builds slice densities from the source and the momentum slices.
/// Returns None if an interior slice leaves the open box.
fn assemble_rho(
    grid: &Grid,
    u0: &[f64],
    u1: &[f64],
    z: &[Vec<f64>],
    ceiling: f64,
) -> Option<Vec<Vec<f64>>> {
    let n = grid.n_cells();
    let k = z.len();
    let h = grid.h();
    let mut rho = Vec::with_capacity(k + 1);
    rho.push(u0.to_vec());
    for s in 0..k {
        let prev = &rho[s];
        let mut next = vec![0.0; n];
        for j in 0..n {
            next[j] = prev[j] - (z[s][j + 1] - z[s][j]) / (h * k as f64);
        }
        if s + 1 < k {
            for &v in &next {
                if !(v > 0.0) || v >= ceiling {
                    return None;
                }
            }
        }
        rho.push(next);
    }
    // the endpoint constraint was eliminated exactly; pin the target to
    // avoid rounding drift feeding back into rho_hat
    rho[k].copy_from_slice(u1);
    Some(rho)
}

fn rho_hat(rho: &[Vec<f64>], s: usize, f: usize) -> f64 {
    0.25 * (rho[s][f - 1] + rho[s][f] + rho[s + 1][f - 1] + rho[s + 1][f])
}

fn barrier_phi(r: f64, ceiling: f64) -> f64 {
    if ceiling.is_finite() {
        -r.ln() - (ceiling - r).ln()
    } else {
        -r.ln()
    }
}

fn barrier_phi_prime(r: f64, ceiling: f64) -> f64 {
    if ceiling.is_finite() {
        -1.0 / r + 1.0 / (ceiling - r)
    } else {
        -1.0 / r
    }
}

/// Action of an assembled path: sum of (h/K) z^2 / m(rho_hat) over
/// momentum slices and interior faces. Zero momentum through a dead
/// face costs nothing; nonzero momentum there is infeasible (infinite).
fn path_action(grid: Grid, spec: &ProblemSpec, rho: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
    let n = grid.n_cells();
    let k = z.len();
    let c = grid.h() / k as f64;
    let mut acc = 0.0;
    for s in 0..k {
        for f in 1..n {
            let zz = z[s][f] * z[s][f];
            if zz == 0.0 {
                continue;
            }
            let m = spec.m(rho_hat(rho, s, f));
            if m <= 0.0 {
                return f64::INFINITY;
            }
            acc += c * zz / m;
        }
    }
    acc
}

/// Monotone-rearrangement interpolant between two equal-mass densities,
/// sampled back onto the cell grid. Near-optimal for linear mobility and
/// a robust warm start in general: mass moves through space instead of
/// teleporting between the supports.
fn displacement_slices(grid: Grid, u0: &[f64], u1: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = grid.n_cells();
    let h = grid.h();
    let cdf = |v: &[f64]| {
        let mut c = vec![0.0; n + 1];
        for j in 0..n {
            c[j + 1] = c[j] + h * v[j];
        }
        c
    };
    let c0 = cdf(u0);
    let c1 = cdf(u1);
    let mass = c0[n];
    let quantile = |c: &Vec<f64>, q: f64| -> f64 {
        let j = match c.partition_point(|&x| x <= q) {
            0 => 0,
            p => (p - 1).min(n - 1),
        };
        let dm = c[j + 1] - c[j];
        if dm <= 0.0 {
            return j as f64 * h;
        }
        (j as f64 * h + h * (q - c[j]) / dm).min(grid.length())
    };
    let p = 64 * n;
    let dm = mass / p as f64;
    let mut out = Vec::with_capacity(k + 1);
    for s in 0..=k {
        let t = s as f64 / k as f64;
        let mut slice = vec![0.0; n];
        for i in 0..p {
            let q = (i as f64 + 0.5) * dm;
            let y = (1.0 - t) * quantile(&c0, q) + t * quantile(&c1, q);
            let j = ((y / h) as usize).min(n - 1);
            slice[j] += dm / h;
        }
        out.push(slice);
    }
    out
}

// ---------------------------------------------------------------------------
// dynamic solver

struct DynProblem<'a> {
    grid: Grid,
    spec: &'a ProblemSpec,
    k: usize,
    u0: Vec<f64>,
    u1: Vec<f64>,
    s_sum: Vec<f64>,
    mu: f64,
}

impl DynProblem<'_> {
    fn n_free(&self) -> usize {
        (self.k - 1) * (self.grid.n_cells() - 1)
    }

    /// Expands free variables into all K momentum slices (boundary faces
    /// zero; last slice from the endpoint constraint).
    fn expand(&self, zfree: &[f64]) -> Vec<Vec<f64>> {
        let n = self.grid.n_cells();
        let nm1 = n - 1;
        let mut z = vec![vec![0.0; n + 1]; self.k];
        for s in 0..self.k - 1 {
            for f in 1..n {
                z[s][f] = zfree[s * nm1 + f - 1];
            }
        }
        for f in 1..n {
            let mut last = self.s_sum[f];
            for zs in z.iter().take(self.k - 1) {
                last -= zs[f];
            }
            z[self.k - 1][f] = last;
        }
        z
    }

    fn eval(&self, zfree: &[f64]) -> Option<(f64, f64)> {
        let z = self.expand(zfree);
        let rho = assemble_rho(&self.grid, &self.u0, &self.u1, &z, self.spec.ceiling())?;
        let action = path_action(self.grid, self.spec, &rho, &z);
        if !action.is_finite() {
            return None;
        }
        let mut total = action;
        let ceiling = self.spec.ceiling();
        for slice in rho.iter().take(self.k).skip(1) {
            for &r in slice {
                total += self.mu * barrier_phi(r, ceiling);
            }
        }
        Some((action, total))
    }

    /// Analytic gradient of the barrier objective in the free variables,
    /// by the adjoint of the slice recursion.
    fn grad(&self, zfree: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
        let n = self.grid.n_cells();
        let nm1 = n - 1;
        let k = self.k;
        let h = self.grid.h();
        let c = h / k as f64;
        let z = self.expand(zfree);
        let rho = assemble_rho(&self.grid, &self.u0, &self.u1, &z, self.spec.ceiling())?;
        let ceiling = self.spec.ceiling();

        let mut action = 0.0;
        let mut total_barrier = 0.0;
        let mut gfull = vec![0.0; k * nm1];
        // direct partials with respect to each slice density
        let mut d = vec![vec![0.0; n]; k + 1];
        for s in 0..k {
            for f in 1..n {
                let a = rho_hat(&rho, s, f);
                let m = self.spec.m(a);
                let zz = z[s][f];
                if m <= 0.0 {
                    if zz != 0.0 {
                        return None;
                    }
                    continue;
                }
                action += c * zz * zz / m;
                gfull[s * nm1 + f - 1] += 2.0 * c * zz / m;
                let t_a = -0.25 * c * zz * zz * self.spec.mobility().deriv(a) / (m * m);
                if t_a != 0.0 {
                    d[s][f - 1] += t_a;
                    d[s][f] += t_a;
                    d[s + 1][f - 1] += t_a;
                    d[s + 1][f] += t_a;
                }
            }
        }
        for l in 1..k {
            for j in 0..n {
                total_barrier += self.mu * barrier_phi(rho[l][j], ceiling);
                d[l][j] += self.mu * barrier_phi_prime(rho[l][j], ceiling);
            }
        }
        // chain through rho[l] for l > s: suffix sums of the density
        // partials, differenced onto faces
        let scale = 1.0 / (k as f64 * h);
        let mut gsum = vec![0.0; n];
        for s in (0..k).rev() {
            if s + 1 <= k - 1 {
                for j in 0..n {
                    gsum[j] += d[s + 1][j];
                }
            }
            for f in 1..n {
                gfull[s * nm1 + f - 1] += scale * (gsum[f] - gsum[f - 1]);
            }
        }
        // eliminate the last slice: d/dzfree[s] = full[s] - full[K-1]
        let mut g = vec![0.0; self.n_free()];
        for s in 0..k - 1 {
            for f in 0..nm1 {
                g[s * nm1 + f] = gfull[s * nm1 + f] - gfull[(k - 1) * nm1 + f];
            }
        }
        Some((g, action, action + total_barrier))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Truncated-Newton step direction: CG on H p = -g with
/// finite-difference Hessian-vector products from the analytic gradient.
fn newton_direction(p: &DynProblem, z: &[f64], g: &[f64]) -> Vec<f64> {
    let dim = g.len();
    let mut dir = vec![0.0; dim];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut q = r.clone();
    let mut rr = dot(&r, &r);
    let rr0 = rr;
    let znorm = 1.0 + z.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..200 {
        let qn = dot(&q, &q).sqrt();
        if qn == 0.0 {
            break;
        }
        let eps = 1e-7 * znorm / qn;
        let zp: Vec<f64> = z.iter().zip(&q).map(|(a, b)| a + eps * b).collect();
        let zm: Vec<f64> = z.iter().zip(&q).map(|(a, b)| a - eps * b).collect();
        let (gp, gm) = match (p.grad(&zp), p.grad(&zm)) {
            (Some((gp, _, _)), Some((gm, _, _))) => (gp, gm),
            _ => break,
        };
        let hq: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let qhq = dot(&q, &hq);
        if qhq <= 1e-300 {
            // nonconvex or flat probe: fall back to what we have
            break;
        }
        let alpha = rr / qhq;
        for i in 0..dim {
            dir[i] += alpha * q[i];
            r[i] -= alpha * hq[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new <= 1e-6 * rr0 {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..dim {
            q[i] = r[i] + beta * q[i];
        }
        rr = rr_new;
    }
    if dot(&dir, g) >= 0.0 {
        // not a descent direction: steepest descent
        g.iter().map(|v| -v).collect()
    } else {
        dir
    }
}

/// Dynamic distance: min action over K-slice paths between u0 and u1.
pub fn distance_dynamic(
    u0: &Density,
    u1: &Density,
    k: usize,
    spec: &ProblemSpec,
) -> Result<DynamicResult, MetricError> {
    assert!(k >= 1);
    assert_eq!(u0.grid(), u1.grid());
    let grid = u0.grid();
    let (m0, m1) = (u0.mass(), u1.mass());
    if (m0 - m1).abs() > 1e-10 * m0.abs().max(1.0) {
        return Err(MetricError::MassMismatch(m0, m1));
    }
    let n = grid.n_cells();
    let s_sum = endpoint_momentum_sum(grid, u0.values(), u1.values(), k);

    if k == 1 {
        let z = vec![s_sum.clone()];
        let rho = vec![u0.values().to_vec(), u1.values().to_vec()];
        let action = path_action(grid, spec, &rho, &z);
        return Ok(DynamicResult {
            value: action.max(0.0).sqrt(),
            path: TransportPlanPath { rho, momentum: z, k_slices: 1, action },
            kkt_residual: 0.0,
            degraded: false,
        });
    }

    let mut problem = DynProblem {
        grid,
        spec,
        k,
        u0: u0.values().to_vec(),
        u1: u1.values().to_vec(),
        s_sum,
        mu: 0.0,
    };

    // strictly feasible starts: a displacement interpolant (mixed toward
    // the uniform density to enter the open box) and, as a fallback, the
    // lifted linear interpolation. Keep the feasible start of least action.
    let s0 = spec.s0();
    let nm1 = n - 1;
    let zfree_of = |rho_init: &[Vec<f64>]| {
        let mut zf = vec![0.0; (k - 1) * nm1];
        for s in 0..k - 1 {
            let mut acc = 0.0;
            for f in 1..n {
                acc += grid.h() * k as f64 * (rho_init[s][f - 1] - rho_init[s + 1][f - 1]);
                zf[s * nm1 + f - 1] = acc;
            }
        }
        zf
    };
    let mix = |slices: &[Vec<f64>], xi: f64| -> Vec<Vec<f64>> {
        let mut out = slices.to_vec();
        out[0] = u0.values().to_vec();
        for slice in out.iter_mut().take(k).skip(1) {
            for v in slice.iter_mut() {
                *v = (1.0 - xi) * *v + xi * s0;
            }
        }
        out
    };
    let disp = displacement_slices(grid, u0.values(), u1.values(), k);
    let linear: Vec<Vec<f64>> = (0..=k)
        .map(|s| {
            let t = s as f64 / k as f64;
            u0.values()
                .iter()
                .zip(u1.values())
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect()
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in [
        zfree_of(&mix(&disp, 1e-3)),
        zfree_of(&mix(&disp, 1e-2)),
        zfree_of(&mix(&disp, 1e-1)),
        zfree_of(&mix(&linear, 1e-8)),
    ] {
        if let Some((action, _)) = problem.eval(&cand) {
            if best.as_ref().map_or(true, |(a, _)| action < *a) {
                best = Some((action, cand));
            }
        }
    }
    let (init_action, mut zfree) = best.expect("at least one start must be feasible");
    let n_barrier = ((k - 1) * n) as f64;
    let mut mu = 1e-2 * (init_action + 1e-8) / n_barrier;
    let mu_floor = 1e-12 * (init_action + 1.0) / n_barrier;
    let mut degraded = false;
    let mut kkt = f64::INFINITY;

    loop {
        problem.mu = mu;
        for _ in 0..120 {
            let (g, _, total) = match problem.grad(&zfree) {
                Some(v) => v,
                None => {
                    degraded = true;
                    break;
                }
            };
            kkt = norm_inf(&g);
            if kkt <= (1e-2 * mu).max(1e-12) {
                break;
            }
            let dir = newton_direction(&problem, &zfree, &g);
            let slope = dot(&dir, &g);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = zfree.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                if let Some((_, tot)) = problem.eval(&cand) {
                    if tot <= total + 1e-4 * t * slope {
                        zfree = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                degraded = kkt > (1e-2 * mu).max(1e-10);
                break;
            }
        }
        if mu <= mu_floor {
            break;
        }
        mu = (mu * 0.1).max(mu_floor * 0.999_999);
    }

    let z = problem.expand(&zfree);
    let rho = assemble_rho(&grid, problem.u0.as_slice(), problem.u1.as_slice(), &z, spec.ceiling())
        .expect("final iterate feasible");
    let action = path_action(grid, spec, &rho, &z);
    Ok(DynamicResult {
        value: action.max(0.0).sqrt(),
        path: TransportPlanPath { rho, momentum: z, k_slices: k, action },
        kkt_residual: kkt,
        degraded,
    })
}

/// Frozen-weight surrogate: dual-Sobolev norm of u0 - u1 with face
/// weights m(u_ref), floored at 1e-12 m(s0) to keep the solve regular.
pub fn distance_frozen(
    u_ref: &Density,
    u0: &Density,
    u1: &Density,
    spec: &ProblemSpec,
) -> Result<f64, GridError> {
    let weight = frozen_face_weights(u_ref, spec);
    let w: Vec<f64> = u0.values().iter().zip(u1.values()).map(|(a, b)| a - b).collect();
    Ok(weighted_dual_norm_sq(u0.grid(), &w, &weight)?.max(0.0).sqrt())
}

/// Face weights used by the frozen backend (exposed for the stepper).
pub fn frozen_face_weights(u_ref: &Density, spec: &ProblemSpec) -> Vec<f64> {
    let grid = u_ref.grid();
    let n = grid.n_cells();
    let floor = 1e-12 * spec.m(spec.s0());
    let mut weight = vec![0.0; n + 1];
    let r = u_ref.values();
    for f in 1..n {
        weight[f] = spec.m(0.5 * (r[f - 1] + r[f])).max(floor);
    }
    weight
}

// ---------------------------------------------------------------------------
// independent small-instance oracle

/// Objective of the same dynamic program, recoded directly from its
/// definition (no shared solver plumbing).
fn oracle_objective(
    grid: Grid,
    spec: &ProblemSpec,
    u0: &[f64],
    u1: &[f64],
    k: usize,
    zfree: &[f64],
    mu: f64,
) -> Option<f64> {
    let n = grid.n_cells();
    let h = grid.h();
    let nm1 = n - 1;
    // momentum slices
    let mut z = vec![vec![0.0; n + 1]; k];
    for s in 0..k.saturating_sub(1) {
        for f in 1..n {
            z[s][f] = zfree[s * nm1 + f - 1];
        }
    }
    let mut s_acc = vec![0.0; n + 1];
    for j in 0..n {
        s_acc[j + 1] = s_acc[j] + h * k as f64 * (u0[j] - u1[j]);
    }
    s_acc[n] = 0.0;
    for f in 1..n {
        let mut last = s_acc[f];
        for zs in z.iter().take(k - 1) {
            last -= zs[f];
        }
        z[k - 1][f] = last;
    }
    // densities
    let mut rho = vec![u0.to_vec()];
    for s in 0..k {
        let mut next = vec![0.0; n];
        for j in 0..n {
            next[j] = rho[s][j] - (z[s][j + 1] - z[s][j]) / (h * k as f64);
        }
        rho.push(next);
    }
    rho[k].copy_from_slice(u1);
    let ceiling = spec.ceiling();
    let mut obj = 0.0;
    for slice in rho.iter().take(k).skip(1) {
        for &r in slice {
            if !(r > 0.0) || r >= ceiling {
                return None;
            }
            obj += mu * barrier_phi(r, ceiling);
        }
    }
    for s in 0..k {
        for f in 1..n {
            let zz = z[s][f] * z[s][f];
            if zz == 0.0 {
                continue;
            }
            let a = 0.25 * (rho[s][f - 1] + rho[s][f] + rho[s + 1][f - 1] + rho[s + 1][f]);
            let m = spec.m(a);
            if m <= 0.0 {
                return None;
            }
            obj += (h / k as f64) * zz / m;
        }
    }
    Some(obj)
}

/// Multi-start descent with finite-difference gradients on tiny
/// instances; returns the best distance value found.
pub fn distance_oracle_small(u0: &Density, u1: &Density, k: usize, spec: &ProblemSpec) -> f64 {
    let grid = u0.grid();
    let n = grid.n_cells();
    assert!(n <= 5 && k <= 4, "oracle is restricted to tiny instances");
    let dim = (k.saturating_sub(1)) * (n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0xABCD_EF01);
    let s0 = spec.s0();

    // start 0: lifted linear path; starts 1..=32: random interior slices
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for start_idx in 0..=32 {
        let mut rho = vec![u0.values().to_vec()];
        for s in 1..k {
            let t = s as f64 / k as f64;
            let mut slice: Vec<f64> = u0
                .values()
                .iter()
                .zip(u1.values())
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect();
            if start_idx == 0 {
                for v in &mut slice {
                    *v = 0.999_999_99 * *v + 1e-8 * s0;
                }
            } else {
                // random mass-preserving perturbation mixed toward the mean
                let mut noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mean = noise.iter().sum::<f64>() / n as f64;
                for v in &mut noise {
                    *v -= mean;
                }
                let mut amp = 0.3 * s0 * rng.gen_range(0.0..1.0);
                let base = slice.clone();
                loop {
                    for j in 0..n {
                        slice[j] = 0.5 * base[j] + 0.5 * s0 + amp * noise[j];
                    }
                    if slice.iter().all(|&v| v > 0.0 && v < spec.ceiling()) || amp < 1e-12 {
                        break;
                    }
                    amp *= 0.5;
                }
            }
            rho.push(slice);
        }
        let mut zfree = vec![0.0; dim];
        for s in 0..k.saturating_sub(1) {
            let mut acc = 0.0;
            for f in 1..n {
                acc += grid.h() * k as f64 * (rho[s][f - 1] - rho[s + 1][f - 1]);
                zfree[s * (n - 1) + f - 1] = acc;
            }
        }
        starts.push(zfree);
    }

    let mut best = f64::INFINITY;
    for z0 in starts {
        if let Some(v) = oracle_descend(grid, spec, u0.values(), u1.values(), k, z0) {
            best = best.min(v);
        }
    }
    best.max(0.0).sqrt()
}

fn oracle_descend(
    grid: Grid,
    spec: &ProblemSpec,
    u0: &[f64],
    u1: &[f64],
    k: usize,
    mut z: Vec<f64>,
) -> Option<f64> {
    let dim = z.len();
    let init = oracle_objective(grid, spec, u0, u1, k, &z, 0.0)?;
    let nb = ((k - 1) * grid.n_cells()).max(1) as f64;
    let mut mu = 1e-2 * (init + 1e-8) / nb;
    let mu_floor = 1e-13 * (init + 1.0) / nb;
    loop {
        for _ in 0..800 {
            let f0 = oracle_objective(grid, spec, u0, u1, k, &z, mu)?;
            if dim == 0 {
                break;
            }
            // central-difference gradient
            let mut g = vec![0.0; dim];
            for i in 0..dim {
                let e = 1e-7 * (1.0 + z[i].abs());
                let mut zp = z.clone();
                zp[i] += e;
                let mut zm = z.clone();
                zm[i] -= e;
                match (
                    oracle_objective(grid, spec, u0, u1, k, &zp, mu),
                    oracle_objective(grid, spec, u0, u1, k, &zm, mu),
                ) {
                    (Some(fp), Some(fm)) => g[i] = (fp - fm) / (2.0 * e),
                    _ => g[i] = 0.0,
                }
            }
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn <= (1e-3 * mu).max(1e-12) {
                break;
            }
            let mut t = 1.0 / (1.0 + gn);
            let mut moved = false;
            for _ in 0..70 {
                let cand: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - t * b).collect();
                if let Some(fc) = oracle_objective(grid, spec, u0, u1, k, &cand, mu) {
                    if fc < f0 - 1e-4 * t * gn * gn {
                        z = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if mu <= mu_floor {
            break;
        }
        mu = (mu * 0.1).max(mu_floor * 0.999_999);
    }
    oracle_objective(grid, spec, u0, u1, k, &z, 0.0)
}

// ---------------------------------------------------------------------------
// 1D Wasserstein reference (quantile formula)

/// Squared 2-Wasserstein distance for m(s) = s via the quantile formula:
/// W^2 = int_0^mass |Q0(t) - Q1(t)|^2 dt with Q the generalized inverse
/// of the unnormalized cumulative distribution of the cell densities.
pub fn wasserstein_1d(u0: &Density, u1: &Density) -> f64 {
    let grid = u0.grid();
    let n = grid.n_cells();
    let h = grid.h();
    let cdf = |u: &Density| -> Vec<f64> {
        let mut c = vec![0.0; n + 1];
        for j in 0..n {
            c[j + 1] = c[j] + h * u.values()[j];
        }
        c
    };
    let c0 = cdf(u0);
    let c1 = cdf(u1);
    let mass = c0[n].min(c1[n]);
    let quantile = |c: &[f64], t: f64| -> f64 {
        // first face with cdf >= t, linear inside the cell
        let mut j = match c.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i,
        };
        if j == 0 {
            return 0.0;
        }
        j -= 1;
        if j >= n {
            return grid.length();
        }
        let dc = c[j + 1] - c[j];
        if dc <= 0.0 {
            j as f64 * h
        } else {
            (j as f64 + (t - c[j]) / dc) * h
        }
    };
    let steps = 20_000;
    let mut acc = 0.0;
    for i in 0..steps {
        let t = mass * (i as f64 + 0.5) / steps as f64;
        let d = quantile(&c0, t) - quantile(&c1, t);
        acc += d * d;
    }
    acc * mass / steps as f64
}
