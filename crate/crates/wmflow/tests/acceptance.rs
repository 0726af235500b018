//! Acceptance battery: one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines on success as well.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wmflow::diagnostics::{
    check_energy_estimate, check_entropy_dissipation, check_flow_interchange,
    check_holder_continuity, check_laplace_identity, check_lions_villani, weak_residual,
    ToleranceTable,
};
use wmflow::flows::{direct_pde_solve, FlowError};
use wmflow::functionals::{energy, energy_normalized, TestPotential};
use wmflow::grid::{project_admissible, Density, Grid};
use wmflow::jko::{run, JkoConfig, Trajectory};
use wmflow::metric::{distance_dynamic, distance_oracle_small, wasserstein_1d};
use wmflow::physics::{FreeEnergy, Mobility, ProblemSpec};

fn ch_spec() -> ProblemSpec {
    ProblemSpec::new(Mobility::quadratic(1.0), FreeEnergy::double_well(1.0), 0.5, 1.0).unwrap()
}

fn thin_film_spec() -> ProblemSpec {
    ProblemSpec::new(Mobility::power(0.75), FreeEnergy::zero(), 0.2, 1.0).unwrap()
}

fn cosine_initial(grid: Grid, spec: &ProblemSpec, amp: f64, mode: usize) -> Density {
    let raw: Vec<f64> = (0..grid.n_cells())
        .map(|j| {
            spec.s0() + amp * (mode as f64 * PI * grid.cell_center(j) / grid.length()).cos()
        })
        .collect();
    project_admissible(grid, &raw, spec.ceiling(), spec.mass()).unwrap()
}

fn bump_density(grid: Grid, center: f64, width: f64, mass: f64) -> Density {
    let mut v: Vec<f64> = (0..grid.n_cells())
        .map(|j| {
            let t = (grid.cell_center(j) - center) / width;
            (-t * t).exp()
        })
        .collect();
    let total = grid.integral(&v);
    for x in &mut v {
        *x *= mass / total;
    }
    Density::from_values(grid, v)
}

fn l2_diff(grid: Grid, a: &Density, b: &Density) -> f64 {
    grid.l2_norm(
        &a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect::<Vec<_>>(),
    )
}

fn linf_diff(a: &Density, b: &Density) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

struct Outcome {
    index: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn reference_run(tau: f64) -> (ProblemSpec, Trajectory) {
    let spec = ch_spec();
    let grid = Grid::new(128, 1.0);
    let u0 = cosine_initial(grid, &spec, 0.35, 2);
    let traj = run(&u0, &spec, &JkoConfig::new(tau, 0.5)).unwrap();
    (spec, traj)
}

#[test]
fn acceptance_criteria() {
    let table = ToleranceTable::default_profile();
    let mut outcomes: Vec<Outcome> = Vec::new();

    // shared reference run: degenerate quadratic mobility, double well
    let t_ref = Instant::now();
    let (spec1, traj1) = reference_run(1e-3);
    let ref_elapsed = t_ref.elapsed();

    // 1: structure preservation on the reference run
    {
        let mut box_ok = true;
        let mut mass_worst = 0.0f64;
        for u in traj1.states() {
            box_ok &= u.min() >= 0.0 && u.max() <= 1.0;
            mass_worst = mass_worst.max((u.mass() - spec1.mass()).abs());
        }
        let mut energy_ok = true;
        let mut prev = energy(&traj1.states()[0], &spec1).total;
        for rec in traj1.records() {
            energy_ok &= rec.energy <= prev + 1e-12 * (1.0 + prev.abs());
            prev = rec.energy;
        }
        let time_ok = ref_elapsed.as_secs_f64() <= 120.0;
        outcomes.push(Outcome {
            index: 1,
            name: "structure_preserving_run",
            passed: box_ok && mass_worst <= 1e-12 * spec1.mass() && energy_ok && time_ok,
            detail: format!(
                "box {box_ok}, mass drift {mass_worst:.2e}, energy monotone {energy_ok}, {:.1}s",
                ref_elapsed.as_secs_f64()
            ),
        });
    }

    // 2: total dissipation estimate over all prefixes
    {
        let report = check_energy_estimate(&traj1, &spec1, &table);
        outcomes.push(Outcome {
            index: 2,
            name: "total_dissipation_estimate",
            passed: report.passed,
            detail: format!("worst prefix lhs {:.12e}, rhs {:.12e}", report.lhs, report.rhs),
        });
    }

    // 3: per-step entropy budget with the explicit constant; the
    // total consumed budget must be stable under step halving
    {
        let budget_total = |spec: &ProblemSpec, traj: &Trajectory| -> (bool, f64) {
            let c = spec.constants();
            let mut all = true;
            let mut total = 0.0;
            for n in 0..traj.records().len() {
                let (a, b) = (&traj.states()[n], &traj.states()[n + 1]);
                all &= check_entropy_dissipation(a, b, traj.tau(), spec, &table).passed;
                total += 0.5 * traj.tau() * c.c_heat * (energy_normalized(b, spec) + c.e0);
            }
            (all, total)
        };
        let (ok_coarse, b_coarse) = budget_total(&spec1, &traj1);
        let (_, traj_half) = reference_run(5e-4);
        let (ok_fine, b_fine) = budget_total(&spec1, &traj_half);
        let ratio = b_coarse / b_fine;
        outcomes.push(Outcome {
            index: 3,
            name: "entropy_dissipation_budget",
            passed: ok_coarse && ok_fine && (0.5..=2.0).contains(&ratio),
            detail: format!(
                "all steps pass ({ok_coarse}/{ok_fine}), budget ratio {ratio:.3}"
            ),
        });
    }

    // 4: dynamic metric vs quantile transport and vs the small oracle
    {
        let t4 = Instant::now();
        let lin = ProblemSpec::new(Mobility::linear(), FreeEnergy::zero(), 1.0, 1.0).unwrap();
        let grid = Grid::new(64, 1.0);
        let a = bump_density(grid, 0.35, 0.06, 1.0);
        let b = bump_density(grid, 0.6, 0.06, 1.0);
        let quantile = wasserstein_1d(&a, &b).sqrt();
        let dynamic = distance_dynamic(&a, &b, 32, &lin).unwrap().value;
        let rel = (dynamic - quantile).abs() / quantile;

        let spec = ch_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut worst_abs = 0.0f64;
        for _ in 0..50 {
            let n = rng.gen_range(3..=5);
            let k = rng.gen_range(2..=4);
            let g = Grid::new(n, 1.0);
            let draw = |rng: &mut ChaCha8Rng| {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
                project_admissible(g, &raw, 1.0, 0.5).unwrap()
            };
            let (u0, u1) = (draw(&mut rng), draw(&mut rng));
            let d = distance_dynamic(&u0, &u1, k, &spec).unwrap().value;
            let o = distance_oracle_small(&u0, &u1, k, &spec);
            worst_abs = worst_abs.max((d - o).abs());
        }
        let elapsed = t4.elapsed().as_secs_f64();
        outcomes.push(Outcome {
            index: 4,
            name: "metric_cross_validation",
            passed: rel <= 0.01 && worst_abs <= 1e-6 && elapsed <= 300.0,
            detail: format!(
                "quantile rel {rel:.4e}, worst oracle gap {worst_abs:.2e}, {elapsed:.1}s"
            ),
        });
    }

    // 5: agreement with the direct solver, and the direct solver
    // against the exact cosine decay
    {
        let spec = ch_spec();
        let grid = Grid::new(128, 1.0);
        let u0 = cosine_initial(grid, &spec, 0.2, 1);
        let traj = run(&u0, &spec, &JkoConfig::new(1e-5, 0.01)).unwrap();
        let direct = direct_pde_solve(&u0, &spec, 1e-5, 0.01).unwrap();
        let gap = linf_diff(traj.final_state(), &direct.state);

        let heat = ProblemSpec::new_unvalidated(
            Mobility::constant_one(),
            FreeEnergy::zero(),
            1.0,
            1.0,
        )
        .unwrap();
        let v0 = cosine_initial(grid, &heat, 0.1, 1);
        let t_end = 0.007;
        let bi = direct_pde_solve(&v0, &heat, 1e-6, t_end).unwrap();
        let factor = (-PI.powi(4) * t_end).exp();
        let exact: Vec<f64> = (0..128)
            .map(|j| 1.0 + 0.1 * factor * (PI * grid.cell_center(j)).cos())
            .collect();
        let exact_gap = bi
            .state
            .values()
            .iter()
            .zip(&exact)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        outcomes.push(Outcome {
            index: 5,
            name: "direct_solver_agreement",
            passed: gap <= 5e-3 && exact_gap <= 1e-3,
            detail: format!("scheme vs direct {gap:.4e}, direct vs exact {exact_gap:.4e}"),
        });
    }

    // 6: per-iterate inequality checkers on the reference run
    {
        let steps = traj1.records().len();
        let mut laplace_fail = 0usize;
        let mut lv_fail = 0usize;
        let mut fi_fail = 0usize;
        let mut fi_inconclusive = 0usize;
        for n in 0..steps {
            let (a, b) = (&traj1.states()[n], &traj1.states()[n + 1]);
            if !check_laplace_identity(b, &table).passed {
                laplace_fail += 1;
            }
            if !check_lions_villani(b, &table).passed {
                lv_fail += 1;
            }
            let fi = check_flow_interchange(a, b, traj1.tau(), &spec1, &table);
            if fi.inconclusive {
                fi_inconclusive += 1;
            } else if !fi.passed {
                fi_fail += 1;
            }
        }
        let inconclusive_ok = fi_inconclusive as f64 <= 0.02 * steps as f64;
        outcomes.push(Outcome {
            index: 6,
            name: "iterate_inequality_checkers",
            passed: laplace_fail == 0 && lv_fail == 0 && fi_fail == 0 && inconclusive_ok,
            detail: format!(
                "laplace {laplace_fail}, interpolation {lv_fail}, interchange {fi_fail} hard / {fi_inconclusive} inconclusive of {steps}"
            ),
        });
    }

    // 7: weak-formulation residual under simultaneous step halving
    {
        let psi = |t: f64| {
            if t <= 0.1 || t >= 0.4 {
                0.0
            } else {
                let y = (t - 0.1) / 0.3;
                (-1.0 / (y * (1.0 - y))).exp()
            }
        };
        let spec = ch_spec();
        let mut residuals = Vec::new();
        for (n, tau) in [(32usize, 4e-4), (64, 2e-4), (128, 1e-4)] {
            let grid = Grid::new(n, 1.0);
            // the slowest mode keeps the dynamics active inside the
            // support of the time window psi
            let u0 = cosine_initial(grid, &spec, 0.35, 1);
            let traj = run(&u0, &spec, &JkoConfig::new(tau, 0.45)).unwrap();
            let v = TestPotential::cosine(grid, 1);
            residuals.push(weak_residual(&traj, &spec, &v, &psi).abs());
        }
        let f01 = residuals[0] / residuals[1];
        let f12 = residuals[1] / residuals[2];
        outcomes.push(Outcome {
            index: 7,
            name: "weak_residual_refinement",
            passed: f01 >= 1.5 && f12 >= 1.5,
            detail: format!(
                "residuals [{:.3e}, {:.3e}, {:.3e}], factors {f01:.2} / {f12:.2}",
                residuals[0], residuals[1], residuals[2]
            ),
        });
    }

    // 8: thin-film regularization ladder
    {
        let base = thin_film_spec();
        let grid = Grid::new(64, 1.0);
        let u0 = bump_density(grid, 0.5, 0.08, 0.2);
        let mut finals = Vec::new();
        let mut structural_ok = true;
        for delta in [1e-2, 1e-3, 1e-4] {
            let spec = base.regularized(delta).unwrap();
            let u0 =
                project_admissible(grid, u0.values(), spec.ceiling(), spec.mass()).unwrap();
            let traj = run(&u0, &spec, &JkoConfig::new(1e-3, 0.05)).unwrap();
            for (u, rec) in traj.states().iter().skip(1).zip(traj.records()) {
                structural_ok &= u.min() >= 0.0
                    && (u.mass() - spec.mass()).abs() <= 1e-12 * spec.mass()
                    && rec.certificate_slack >= -1e-10;
            }
            finals.push(traj.final_state().clone());
        }
        let d01 = l2_diff(grid, &finals[0], &finals[1]);
        let d12 = l2_diff(grid, &finals[1], &finals[2]);
        outcomes.push(Outcome {
            index: 8,
            name: "thin_film_regularization_ladder",
            passed: structural_ok && d12 <= d01,
            detail: format!("structural {structural_ok}, gaps {d01:.3e} >= {d12:.3e}"),
        });
    }

    // 9: time regularity of the reference trajectory
    {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut all = true;
        let mut worst = f64::INFINITY;
        for _ in 0..20 {
            let mut s = rng.gen_range(0.0..0.5);
            let mut t = rng.gen_range(0.0..0.5);
            if s > t {
                std::mem::swap(&mut s, &mut t);
            }
            let report = check_holder_continuity(&traj1, &spec1, s, t, &table);
            all &= report.passed;
            worst = worst.min(report.slack);
        }
        outcomes.push(Outcome {
            index: 9,
            name: "interpolant_time_regularity",
            passed: all,
            detail: format!("20 random pairs, worst slack {worst:.3e}"),
        });
    }

    // 10: positivity contrast on near-degenerate thin-film data
    {
        let spec = thin_film_spec();
        let grid = Grid::new(48, 1.0);
        let raw: Vec<f64> = (0..48)
            .map(|j| {
                let x = grid.cell_center(j);
                1e-6 + ((x - 0.5) * 8.0).cosh().powi(-2)
            })
            .collect();
        let u0 = project_admissible(grid, &raw, spec.ceiling(), spec.mass()).unwrap();
        let direct = direct_pde_solve(&u0, &spec, 1e-6, 1e-2);
        let direct_lost = matches!(direct, Err(FlowError::PositivityLoss { .. }));
        let traj = run(&u0, &spec, &JkoConfig::new(1e-3, 1e-2)).unwrap();
        let violations = traj
            .states()
            .iter()
            .flat_map(|u| u.values())
            .filter(|&&v| v < 0.0)
            .count();
        outcomes.push(Outcome {
            index: 10,
            name: "positivity_contrast",
            passed: direct_lost && violations == 0,
            detail: format!(
                "direct positivity loss {direct_lost}, scheme box violations {violations}"
            ),
        });
    }

    let mut failed = 0;
    for o in &outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {:02} [{}] {} ({})", o.index, o.name, verdict, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criterion(s) failed");
}
