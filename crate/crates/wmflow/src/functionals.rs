//! Discrete functionals driving and certifying the evolution: the
//! perturbed Dirichlet energy, the entropy functional, linear potential
//! functionals, and the weak-form pairing N[u, V].

use crate::diagnostics::CheckReport;
use crate::grid::{divergence_face, gradient_face, gradient_face_of, laplacian_neumann, laplacian_neumann_of, Density, Grid};
use crate::physics::ProblemSpec;

/// Energy split into its Dirichlet and potential parts. `total` is
/// `f64::INFINITY` when some cell leaves the domain of G.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyValue {
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
}

/// Smooth multiplier V with zero normal derivative, carried with its
/// cached discrete gradient and Laplacian.
#[derive(Debug, Clone)]
pub struct TestPotential {
    grid: Grid,
    values: Vec<f64>,
    grad: Vec<f64>,
    lap: Vec<f64>,
}

impl TestPotential {
    /// Builds from cell samples; the discrete gradient is zero on the
    /// boundary faces by construction, which is the discrete form of the
    /// no-flux requirement on V.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n_cells());
        let grad = gradient_face_of(grid, &values);
        let lap = laplacian_neumann_of(grid, &values);
        TestPotential { grid, values, grad, lap }
    }

    /// Neumann cosine mode cos(k pi x / L).
    pub fn cosine(grid: Grid, k: usize) -> Self {
        let l = grid.length();
        let values = (0..grid.n_cells())
            .map(|j| (k as f64 * std::f64::consts::PI * grid.cell_center(j) / l).cos())
            .collect();
        Self::from_values(grid, values)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_values(grid, vec![c; grid.n_cells()])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn lap(&self) -> &[f64] {
        &self.lap
    }
}

/// E[u] = (1/2) int |Du|^2 + int G(u) with the raw potential G.
pub fn energy(u: &Density, spec: &ProblemSpec) -> EnergyValue {
    let g = u.grid();
    let grad = gradient_face(u);
    let dirichlet = 0.5 * g.h() * grad.iter().map(|v| v * v).sum::<f64>();
    let mut potential = 0.0;
    for &v in u.values() {
        let gv = spec.free_energy().g(v);
        if !gv.is_finite() {
            return EnergyValue { dirichlet, potential: f64::INFINITY, total: f64::INFINITY };
        }
        potential += gv;
    }
    potential *= g.h();
    EnergyValue { dirichlet, potential, total: dirichlet + potential }
}

/// Energy with G normalized so G(s0) = G'(s0) = 0; differs from
/// [`energy`] by the constant L G(s0) on fixed-mass densities and is the
/// quantity entering the coercivity and entropy bounds.
pub fn energy_normalized(u: &Density, spec: &ProblemSpec) -> f64 {
    let g = u.grid();
    let grad = gradient_face(u);
    let dirichlet = 0.5 * g.h() * grad.iter().map(|v| v * v).sum::<f64>();
    let mut potential = 0.0;
    for &v in u.values() {
        let gv = spec.g(v);
        if !gv.is_finite() {
            return f64::INFINITY;
        }
        potential += gv;
    }
    dirichlet + g.h() * potential
}

/// U[u] = int U(u) with U'' = 1/m, U(s0) = U'(s0) = 0; non-negative.
pub fn entropy_functional(u: &Density, spec: &ProblemSpec) -> f64 {
    let ent = spec.entropy();
    u.grid().h() * u.values().iter().map(|&v| ent.eval(v)).sum::<f64>()
}

/// Coercivity certificate:
/// (1/8)||u||_H1^2 + int G_conv(u) <= E_norm[u] + e0
/// with the explicit offset e0 from the problem constants.
pub fn energy_lower_bound_check(u: &Density, spec: &ProblemSpec) -> CheckReport {
    let g = u.grid();
    let h = g.h();
    let grad = gradient_face(u);
    let du_sq = h * grad.iter().map(|v| v * v).sum::<f64>();
    let u_sq = h * u.values().iter().map(|v| v * v).sum::<f64>();
    let conv = h * u.values().iter().map(|&v| spec.g_conv(v)).sum::<f64>();
    let lhs = 0.125 * (u_sq + du_sq) + conv;
    let rhs = energy_normalized(u, spec) + spec.constants().e0;
    CheckReport::new("energy_lower_bound", lhs, rhs, 1e-10 * (1.0 + rhs.abs()))
}

/// V[u] = int V u.
pub fn potential_functional(u: &Density, v: &TestPotential) -> f64 {
    u.grid().h()
        * u.values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

/// V_eps[u] = V[u] + eps U[u].
pub fn regularized_potential(u: &Density, v: &TestPotential, eps: f64, spec: &ProblemSpec) -> f64 {
    potential_functional(u, v) + eps * entropy_functional(u, spec)
}

/// Weak-form pairing
/// N[u, V] = -int (lap u) div(m(u) DV) + int P(u) (lap V),
/// with m(u) averaged onto faces arithmetically.
pub fn weak_form_n(u: &Density, v: &TestPotential, spec: &ProblemSpec) -> f64 {
    let g = u.grid();
    let n = g.n_cells();
    let h = g.h();
    let lap_u = laplacian_neumann(u);
    let uv = u.values();
    let mut flux = vec![0.0; n + 1];
    for f in 1..n {
        let m_face = spec.m(0.5 * (uv[f - 1] + uv[f]));
        flux[f] = m_face * v.grad()[f];
    }
    let div_flux = divergence_face(g, &flux);
    let mut acc = 0.0;
    for j in 0..n {
        acc += -lap_u[j] * div_flux[j] + spec.pressure(uv[j]) * v.lap()[j];
    }
    h * acc
}
