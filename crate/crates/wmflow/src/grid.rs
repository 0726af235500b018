//! Uniform 1D cell-centered mesh on (0, L) with homogeneous-Neumann
//! discrete calculus and the projection onto the admissible set
//! {0 <= u <= M, fixed mass}.
//!
//! All operators act on cell averages. Face fields carry `n_cells + 1`
//! entries; the two boundary faces are structurally zero, so discrete
//! mass conservation is exact for every flux-form operator built here.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("right-hand side is not mass-compatible: h*sum(w) = {0:e}")]
    IncompatibleRhs(f64),
    #[error("non-positive weight on interior face {0}")]
    SingularWeight(usize),
    #[error("infeasible constraint: mass {mass} outside [0, {ceiling} * L]")]
    InfeasibleConstraint { mass: f64, ceiling: f64 },
}

/// Uniform cell-centered grid on the interval (0, L).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n_cells: usize,
    length: f64,
    h: f64,
}

impl Grid {
    pub fn new(n_cells: usize, length: f64) -> Self {
        assert!(n_cells >= 3, "need at least 3 cells");
        assert!(length > 0.0, "domain length must be positive");
        Grid {
            n_cells,
            length,
            h: length / n_cells as f64,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Center of cell `j`: x_j = (j + 1/2) h.
    pub fn cell_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.cell_center(j)).collect()
    }

    /// h * sum of cell values.
    pub fn integral(&self, values: &[f64]) -> f64 {
        self.h * values.iter().sum::<f64>()
    }

    /// Discrete L2 norm: sqrt(h * sum v^2).
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        (self.h * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Cell function constrained to the admissible set: 0 <= u <= M with
/// fixed mass. Constructed through [`Density::new`] (checked) or as the
/// output of [`project_admissible`].
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: Grid,
    values: Vec<f64>,
}

impl Density {
    /// Checked constructor: verifies the box constraint against `ceiling`
    /// (use `f64::INFINITY` for M = infinity). Mass is whatever the values
    /// carry; callers that need an exact mass go through the projection.
    pub fn new(grid: Grid, values: Vec<f64>, ceiling: f64) -> Self {
        assert_eq!(values.len(), grid.n_cells());
        for (j, &v) in values.iter().enumerate() {
            assert!(
                (0.0..=ceiling).contains(&v),
                "cell {j} value {v} violates box [0, {ceiling}]"
            );
        }
        Density { grid, values }
    }

    /// Unchecked constructor for intermediate states (flows, solvers).
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n_cells());
        Density { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let n = grid.n_cells();
        Density {
            grid,
            values: vec![value; n],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integral(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Box + mass check against an admissible-set description.
    pub fn is_admissible(&self, ceiling: f64, mass: f64, tol: f64) -> bool {
        self.min() >= 0.0 && self.max() <= ceiling && (self.mass() - mass).abs() <= tol * mass.abs().max(1.0)
    }
}

/// Face gradient with zero Neumann boundary faces: interior face f carries
/// (u[f] - u[f-1]) / h, faces 0 and n carry 0.
pub fn gradient_face(u: &Density) -> Vec<f64> {
    gradient_face_of(u.grid(), u.values())
}

pub fn gradient_face_of(grid: Grid, values: &[f64]) -> Vec<f64> {
    let n = grid.n_cells();
    let h = grid.h();
    let mut g = vec![0.0; n + 1];
    for f in 1..n {
        g[f] = (values[f] - values[f - 1]) / h;
    }
    g
}

/// Discrete divergence of a face field: (F[j+1] - F[j]) / h per cell.
pub fn divergence_face(grid: Grid, faces: &[f64]) -> Vec<f64> {
    let n = grid.n_cells();
    assert_eq!(faces.len(), n + 1);
    let h = grid.h();
    (0..n).map(|j| (faces[j + 1] - faces[j]) / h).collect()
}

/// Neumann Laplacian: div_h(grad_h u). Symmetric, row sums zero,
/// kernel = constants.
pub fn laplacian_neumann(u: &Density) -> Vec<f64> {
    laplacian_neumann_of(u.grid(), u.values())
}

pub fn laplacian_neumann_of(grid: Grid, values: &[f64]) -> Vec<f64> {
    divergence_face(grid, &gradient_face_of(grid, values))
}

/// Thomas solve for a tridiagonal system. `sub` and `sup` have length n-1.
/// Overwrites nothing; returns the solution.
pub(crate) fn tridiag_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert!(n >= 1 && sub.len() == n - 1 && sup.len() == n - 1 && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = sup[i] / m;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let xi = x[i] - c[i] * x[i + 1];
        x[i] = xi;
    }
    x
}

/// Solves -div_h(weight * grad_h phi) = w with zero-flux boundary faces.
///
/// `weight` is a face field (n+1 entries, boundary entries ignored) that
/// must be strictly positive on interior faces. The right-hand side must
/// have zero integral; the returned potential has zero mean.
pub fn neumann_solve(grid: Grid, w: &[f64], weight: &[f64]) -> Result<Vec<f64>, GridError> {
    let n = grid.n_cells();
    assert_eq!(w.len(), n);
    assert_eq!(weight.len(), n + 1);
    let h = grid.h();
    let total = grid.integral(w);
    let scale = h * w.iter().map(|v| v.abs()).sum::<f64>();
    if total.abs() > 1e-10 * scale.max(1.0) {
        return Err(GridError::IncompatibleRhs(total));
    }
    for (f, &wf) in weight.iter().enumerate().take(n).skip(1) {
        if wf <= 0.0 {
            return Err(GridError::SingularWeight(f));
        }
    }
    // Ground phi[0] = 0 and solve rows 1..n; compatibility makes row 0
    // automatically satisfied. Row j of A = -div(weight grad):
    //   (-weight[j] phi[j-1] + (weight[j]+weight[j+1]) phi[j] - weight[j+1] phi[j+1]) / h^2
    let m = n - 1;
    let h2 = h * h;
    let mut sub = vec![0.0; m - 1];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m - 1];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let j = i + 1; // cell index
        let wl = weight[j];
        let wr = if j + 1 <= n { weight[j + 1] } else { 0.0 };
        let wr = if j == n - 1 { 0.0 } else { wr };
        diag[i] = (wl + wr) / h2;
        if i > 0 {
            sub[i - 1] = -wl / h2;
        }
        if i < m - 1 {
            sup[i] = -wr / h2;
        }
        rhs[i] = w[j];
        // phi[0] = 0 removes the coupling term of cell 1 to cell 0.
    }
    let interior = tridiag_solve(&sub, &diag, &sup, &rhs);
    let mut phi = Vec::with_capacity(n);
    phi.push(0.0);
    phi.extend_from_slice(&interior);
    let mean = phi.iter().sum::<f64>() / n as f64;
    for p in &mut phi {
        *p -= mean;
    }
    Ok(phi)
}

/// Weighted dual norm squared of a zero-mean cell field:
/// h * sum_faces weight * |grad phi|^2 with -div(weight grad phi) = w.
pub fn weighted_dual_norm_sq(grid: Grid, w: &[f64], weight: &[f64]) -> Result<f64, GridError> {
    let phi = neumann_solve(grid, w, weight)?;
    let g = gradient_face_of(grid, &phi);
    let n = grid.n_cells();
    let mut acc = 0.0;
    for f in 1..n {
        acc += weight[f] * g[f] * g[f];
    }
    Ok(grid.h() * acc)
}

/// Euclidean projection onto {0 <= u <= M, h * sum u = mass}, computed as
/// u_j = clamp(v_j + lambda, 0, M) with the multiplier found by bisection.
pub fn project_admissible(grid: Grid, v: &[f64], ceiling: f64, mass: f64) -> Result<Density, GridError> {
    let n = grid.n_cells();
    assert_eq!(v.len(), n);
    let h = grid.h();
    if mass < 0.0 || (ceiling.is_finite() && mass > ceiling * grid.length() * (1.0 + 1e-14)) {
        return Err(GridError::InfeasibleConstraint { mass, ceiling });
    }
    let clamped_mass = |lambda: f64| -> f64 {
        h * v
            .iter()
            .map(|&vj| (vj + lambda).clamp(0.0, ceiling))
            .sum::<f64>()
    };
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Bracket the multiplier: lambda = -vmax gives mass 0 (or below target),
    // lambda = mass/(h n) - vmin pushes every cell above mass/L.
    let mut lo = -vmax;
    let mut hi = mass / grid.length() - vmin;
    if clamped_mass(lo) > mass {
        lo = -vmax - mass / grid.length() - 1.0;
    }
    while clamped_mass(hi) < mass {
        hi = 2.0 * hi.abs().max(1.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clamped_mass(mid) < mass {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 * (1.0 + hi.abs()) {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let mut u: Vec<f64> = v.iter().map(|&vj| (vj + lambda).clamp(0.0, ceiling)).collect();
    // Distribute the residual over cells strictly inside the box so the
    // mass constraint holds to machine precision.
    let residual = mass - h * u.iter().sum::<f64>();
    let free: Vec<usize> = (0..n)
        .filter(|&j| u[j] > 0.0 && (!ceiling.is_finite() || u[j] < ceiling))
        .collect();
    if !free.is_empty() {
        let bump = residual / (h * free.len() as f64);
        for &j in &free {
            u[j] = (u[j] + bump).clamp(0.0, ceiling);
        }
    }
    Ok(Density::from_values(grid, u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> Grid {
        Grid::new(3, 3.0)
    }

    #[test]
    fn gradient_constant_is_zero() {
        let g = Grid::new(8, 2.0);
        let u = Density::constant(g, 4.2);
        assert!(gradient_face(&u).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_stencil_n3() {
        let u = Density::from_values(grid3(), vec![0.0, 1.0, 0.0]);
        assert_eq!(gradient_face(&u), vec![0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn gradient_matches_cosine_derivative() {
        // Richardson: error against -(pi/L) sin at face centers is O(h^2).
        let l = 1.0;
        let err = |n: usize| -> f64 {
            let g = Grid::new(n, l);
            let u: Vec<f64> = (0..n).map(|j| (std::f64::consts::PI * g.cell_center(j) / l).cos()).collect();
            let grad = gradient_face_of(g, &u);
            let mut worst: f64 = 0.0;
            for f in 1..n {
                let x = f as f64 * g.h();
                let exact = -(std::f64::consts::PI / l) * (std::f64::consts::PI * x / l).sin();
                worst = worst.max((grad[f] - exact).abs());
            }
            worst
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 / e2 > 3.5, "ratio {} not ~4", e1 / e2);
    }

    #[test]
    fn laplacian_stencil_n3() {
        let u = Density::from_values(grid3(), vec![0.0, 1.0, 0.0]);
        assert_eq!(laplacian_neumann(&u), vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn laplacian_cosine_eigenmode() {
        let n = 16;
        let l = 2.0;
        let g = Grid::new(n, l);
        for k in 1..n {
            let u: Vec<f64> = (0..n)
                .map(|j| (k as f64 * std::f64::consts::PI * g.cell_center(j) / l).cos())
                .collect();
            let lam = -(2.0 / (g.h() * g.h())) * (1.0 - (k as f64 * std::f64::consts::PI * g.h() / l).cos());
            let lap = laplacian_neumann_of(g, &u);
            for j in 0..n {
                assert!((lap[j] - lam * u[j]).abs() < 1e-10, "mode {k} cell {j}");
            }
        }
    }

    #[test]
    fn laplacian_divergence_theorem() {
        let g = Grid::new(17, 1.3);
        let u: Vec<f64> = (0..17).map(|j| ((j * 7919) % 13) as f64 * 0.3 - 1.0).collect();
        let lap = laplacian_neumann_of(g, &u);
        assert!(g.integral(&lap).abs() < 1e-12);
    }

    #[test]
    fn neumann_solve_zero_rhs() {
        let g = Grid::new(5, 1.0);
        let phi = neumann_solve(g, &[0.0; 5], &[1.0; 6]).unwrap();
        assert!(phi.iter().all(|&p| p.abs() < 1e-14));
    }

    #[test]
    fn neumann_solve_inverts_laplacian() {
        let g = Grid::new(7, 1.0);
        let v: Vec<f64> = (0..7).map(|j| (j as f64).sin()).collect();
        let w = laplacian_neumann_of(g, &v);
        let phi = neumann_solve(g, &w, &[1.0; 8]).unwrap();
        let mean = v.iter().sum::<f64>() / 7.0;
        for j in 0..7 {
            assert!((phi[j] + (v[j] - mean)).abs() < 1e-10);
        }
    }

    #[test]
    fn neumann_solve_residual_small() {
        let g = Grid::new(4, 1.0);
        let mut w = vec![0.7, -1.3, 0.4, 0.2];
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v -= total / 4.0;
        }
        let weight = vec![0.0, 0.5, 2.0, 0.9, 0.0];
        let phi = neumann_solve(g, &w, &weight).unwrap();
        // apply operator
        let grad = gradient_face_of(g, &phi);
        let flux: Vec<f64> = (0..5).map(|f| if f == 0 || f == 4 { 0.0 } else { weight[f] * grad[f] }).collect();
        let res = divergence_face(g, &flux);
        for j in 0..4 {
            assert!((res[j] + w[j]).abs() < 1e-10, "cell {j}: {} vs {}", res[j], -w[j]);
        }
    }

    #[test]
    fn neumann_solve_rejects_incompatible() {
        let g = Grid::new(4, 1.0);
        let r = neumann_solve(g, &[1.0, 0.0, 0.0, 0.0], &[1.0; 5]);
        assert!(matches!(r, Err(GridError::IncompatibleRhs(_))));
    }

    #[test]
    fn neumann_solve_rejects_bad_weight() {
        let g = Grid::new(4, 1.0);
        let r = neumann_solve(g, &[0.0; 4], &[1.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(r, Err(GridError::SingularWeight(2)));
    }

    #[test]
    fn projection_identity_on_admissible() {
        let g = Grid::new(4, 4.0);
        let v = vec![0.2, 0.8, 0.5, 0.5];
        let u = project_admissible(g, &v, 1.0, 2.0).unwrap();
        for j in 0..4 {
            assert!((u.values()[j] - v[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_symmetric_split() {
        let g = Grid::new(3, 2.0); // n >= 3 required; mimic the two-cell case with 2 zero cells + h=2/3
        let g2 = Grid::new(4, 2.0);
        let u = project_admissible(g2, &[0.0, 0.0, 0.0, 0.0], f64::INFINITY, 2.0).unwrap();
        for &v in u.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let _ = g;
    }

    #[test]
    fn projection_brute_force_multiplier() {
        let g = Grid::new(3, 3.0);
        let v = [2.0, 0.4, -1.0];
        let u = project_admissible(g, &v, 1.0, 1.5).unwrap();
        // Brute force over lambda at 1e-8 resolution.
        let mut best = (f64::INFINITY, vec![]);
        let mut lam = -2.0;
        while lam < 2.0 {
            let cand: Vec<f64> = v.iter().map(|&x| (x + lam).clamp(0.0, 1.0)).collect();
            let mass = g.integral(&cand);
            if (mass - 1.5).abs() < 1e-6 {
                let d: f64 = cand.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, cand);
                }
            }
            lam += 1e-6;
        }
        for j in 0..3 {
            assert!((u.values()[j] - best.1[j]).abs() < 1e-4);
        }
        assert!((u.mass() - 1.5).abs() < 1e-12 * 1.5);
    }

    #[test]
    fn projection_infeasible() {
        let g = Grid::new(3, 1.0);
        assert!(matches!(
            project_admissible(g, &[0.0; 3], 1.0, 2.0),
            Err(GridError::InfeasibleConstraint { .. })
        ));
    }

    #[test]
    fn laplacian_matrix_symmetric_nsd() {
        let n = 24;
        let g = Grid::new(n, 1.7);
        let mut a = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = laplacian_neumann_of(g, &e);
            for i in 0..n {
                a[i][j] = col[i];
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert!((a[i][j] - a[j][i]).abs() < 1e-12);
            }
        }
        // Negative semidefinite: x^T A x <= 0 on a few vectors; zero only for constants.
        let mut state = 1u64;
        for _ in 0..20 {
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
                })
                .collect();
            let ax = laplacian_neumann_of(g, &x);
            let q: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            assert!(q <= 1e-10);
        }
    }
}
