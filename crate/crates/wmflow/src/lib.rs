//! Structure-preserving solver for fourth-order degenerate parabolic
//! equations u_t = -div(m(u) grad(lap u - G'(u))) on an interval with
//! no-flux boundary conditions.
//!
//! Time stepping is by minimizing movement in a mobility-weighted
//! transport metric: each step solves
//! `u_next = argmin  d(u_prev, v)^2 / (2 tau) + E[v]`
//! over densities with prescribed mass and box constraints, so
//! non-negativity, mass conservation and energy decay hold by
//! construction. Runtime checkers certify the energy, entropy and
//! regularity estimates on every trajectory.
//!
//! Modules, bottom up:
//! - [`grid`]: 1D discrete calculus and the admissible-set projection.
//! - [`physics`]: mobilities, free energies, entropies, hypothesis
//!   validators, delta-regularization.
//! - [`functionals`]: discrete energy, entropy, potential and weak-form
//!   functionals.
//! - [`metric`]: weighted transport distance (dynamic and frozen-weight
//!   backends).
//! - [`jko`]: the minimizing-movement stepper and trajectories.
//! - [`flows`]: auxiliary heat / viscous-transport flows and a direct
//!   finite-difference solver used as an independent oracle.
//! - [`diagnostics`]: inequality checkers and the tolerance table.
//! - [`config`]: run configuration and orchestration for the CLI.
//!
//! # Example
//!
//! ```
//! use wmflow::grid::{project_admissible, Grid};
//! use wmflow::jko::{run, JkoConfig};
//! use wmflow::physics::{FreeEnergy, Mobility, ProblemSpec};
//!
//! // Cahn-Hilliard: degenerate mobility s(1-s), double-well potential,
//! // mass 0.5 on the unit interval.
//! let spec = ProblemSpec::new(
//!     Mobility::quadratic(1.0),
//!     FreeEnergy::double_well(1.0),
//!     0.5,
//!     1.0,
//! )
//! .unwrap();
//! let grid = Grid::new(32, 1.0);
//! let raw: Vec<f64> = (0..32)
//!     .map(|j| 0.5 + 0.3 * (2.0 * std::f64::consts::PI * grid.cell_center(j)).cos())
//!     .collect();
//! let u0 = project_admissible(grid, &raw, spec.ceiling(), spec.mass()).unwrap();
//!
//! let traj = run(&u0, &spec, &JkoConfig::new(1e-3, 5e-3)).unwrap();
//! assert_eq!(traj.records().len(), 5);
//! // the box constraint and the mass are exact by construction
//! assert!(traj.final_state().min() >= 0.0 && traj.final_state().max() <= 1.0);
//! assert!((traj.final_state().mass() - 0.5).abs() < 1e-13);
//! // the energy never increases
//! let e: Vec<f64> = traj.records().iter().map(|r| r.energy).collect();
//! assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
//! ```

pub mod config;
pub mod diagnostics;
pub mod flows;
pub mod functionals;
pub mod grid;
pub mod jko;
pub mod metric;
pub mod physics;
