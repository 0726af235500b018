//! Run configuration (TOML) and orchestration shared by the command
//! line and the integration tests.
//!
//! Outputs are deterministic: a given (config, crate version) pair
//! produces byte-identical artifacts. Summaries carry a format version
//! and the sha256 of every artifact they describe.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::{
    check_box_constraint, check_energy_decay, check_energy_estimate, check_entropy_dissipation,
    check_flow_interchange, check_holder_continuity, check_laplace_identity, check_lions_villani,
    check_mass_conservation, CheckReport, ToleranceTable, TOLERANCE_TABLE_VERSION,
};
use crate::flows::{direct_pde_solve, FlowError};
use crate::grid::{project_admissible, Density, Grid};
use crate::jko::{run as jko_run, JkoConfig, Trajectory};
use crate::metric::MetricBackend;
use crate::physics::{FreeEnergy, Mobility, ProblemSpec};

/// Bumped whenever the summary layout changes.
pub const SUMMARY_FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configuration rejected by the model layer: {0}")]
    Physics(#[from] crate::physics::PhysicsError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] crate::jko::JkoError),
    #[error(transparent)]
    Direct(#[from] FlowError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub metric: MetricSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub compare: CompareSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// linear | quadratic | power | power_product | constant_one
    pub mobility: String,
    #[serde(default)]
    pub ceiling: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub exponents: Option<[f64; 2]>,
    /// zero | double_well | log_binary | power_law
    pub free_energy: String,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub power_law: Option<[f64; 3]>,
    pub mass: f64,
    pub length: f64,
    /// Mobility regularization offset; zero disables it.
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub tau: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    /// frozen | dynamic
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_k_slices")]
    pub k_slices: usize,
}

fn default_backend() -> String {
    "frozen".into()
}

fn default_k_slices() -> usize {
    8
}

impl Default for MetricSection {
    fn default() -> Self {
        MetricSection { backend: default_backend(), k_slices: default_k_slices() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// constant | cosine | bump | noise
    pub kind: String,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_mode")]
    pub mode: usize,
    #[serde(default = "default_center")]
    pub center: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_mode() -> usize {
    1
}

fn default_center() -> f64 {
    0.5
}

fn default_width() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// tau | delta | n_cells
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_direct_dt")]
    pub direct_dt: f64,
    #[serde(default = "default_compare_tol")]
    pub tol_linf: f64,
}

fn default_direct_dt() -> f64 {
    1e-5
}

fn default_compare_tol() -> f64 {
    5e-3
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { direct_dt: default_direct_dt(), tol_linf: default_compare_tol() }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// assembly

/// A parsed and validated run: spec, grid, initial state, stepper knobs.
pub struct Assembled {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub initial: Density,
    pub jko: JkoConfig,
}

fn build_mobility(p: &ProblemSection) -> Result<Mobility, ConfigError> {
    let need_ceiling = || {
        p.ceiling
            .ok_or_else(|| ConfigError::Invalid(format!("mobility {} needs `ceiling`", p.mobility)))
    };
    match p.mobility.as_str() {
        "linear" => Ok(Mobility::linear()),
        "quadratic" => Ok(Mobility::quadratic(need_ceiling()?)),
        "power" => {
            let alpha = p
                .alpha
                .ok_or_else(|| ConfigError::Invalid("power mobility needs `alpha`".into()))?;
            Ok(Mobility::power(alpha))
        }
        "power_product" => {
            let [a0, a1] = p.exponents.ok_or_else(|| {
                ConfigError::Invalid("power_product mobility needs `exponents = [a0, a1]`".into())
            })?;
            Ok(Mobility::power_product(a0, a1, need_ceiling()?))
        }
        "constant_one" => Ok(Mobility::constant_one()),
        other => Err(ConfigError::Invalid(format!("unknown mobility `{other}`"))),
    }
}

fn build_free_energy(p: &ProblemSection) -> Result<FreeEnergy, ConfigError> {
    match p.free_energy.as_str() {
        "zero" => Ok(FreeEnergy::zero()),
        "double_well" => Ok(FreeEnergy::double_well(p.theta.unwrap_or(1.0))),
        "log_binary" => Ok(FreeEnergy::log_binary(p.theta.unwrap_or(1.0))),
        "power_law" => {
            let [kappa, alpha, beta] = p.power_law.ok_or_else(|| {
                ConfigError::Invalid(
                    "power_law free energy needs `power_law = [kappa, alpha, beta]`".into(),
                )
            })?;
            Ok(FreeEnergy::power_law(kappa, alpha, beta))
        }
        other => Err(ConfigError::Invalid(format!("unknown free energy `{other}`"))),
    }
}

pub fn parse_backend(name: &str, k_slices: usize) -> Result<MetricBackend, ConfigError> {
    match name {
        "frozen" => Ok(MetricBackend::FrozenWeight),
        "dynamic" => Ok(MetricBackend::Dynamic { k_slices }),
        other => Err(ConfigError::Invalid(format!("unknown metric backend `{other}`"))),
    }
}

fn build_initial(
    section: &InitialSection,
    grid: Grid,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<Density, ConfigError> {
    use rand::{Rng, SeedableRng};
    let s0 = spec.s0();
    let n = grid.n_cells();
    let raw: Vec<f64> = match section.kind.as_str() {
        "constant" => vec![s0; n],
        "cosine" => (0..n)
            .map(|j| {
                let x = grid.cell_center(j);
                s0 + section.amplitude
                    * (section.mode as f64 * std::f64::consts::PI * x / grid.length()).cos()
            })
            .collect(),
        "bump" => {
            let mut v: Vec<f64> = (0..n)
                .map(|j| {
                    let t = (grid.cell_center(j) - section.center) / section.width;
                    (-t * t).exp()
                })
                .collect();
            let total = grid.integral(&v);
            for x in &mut v {
                *x *= spec.mass() / total;
            }
            v
        }
        "noise" => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| s0 + section.amplitude * rng.gen_range(-1.0..1.0))
                .collect()
        }
        other => return Err(ConfigError::Invalid(format!("unknown initial kind `{other}`"))),
    };
    Ok(project_admissible(grid, &raw, spec.ceiling(), spec.mass())?)
}

pub fn assemble(config: &RunConfig, seed: u64) -> Result<Assembled, ConfigError> {
    let mobility = build_mobility(&config.problem)?;
    let free_energy = build_free_energy(&config.problem)?;
    let spec = ProblemSpec::new(mobility, free_energy, config.problem.mass, config.problem.length)?;
    let spec =
        if config.problem.delta > 0.0 { spec.regularized(config.problem.delta)? } else { spec };
    if config.grid.n_cells < 4 {
        return Err(ConfigError::Invalid("n_cells must be at least 4".into()));
    }
    let grid = Grid::new(config.grid.n_cells, config.problem.length);
    let initial = build_initial(&config.initial, grid, &spec, seed)?;
    let backend = parse_backend(&config.metric.backend, config.metric.k_slices)?;
    let jko = JkoConfig::new(config.time.tau, config.time.t_end).with_backend(backend);
    Ok(Assembled { spec, grid, initial, jko })
}

// ---------------------------------------------------------------------------
// artifacts

fn sha256_hex(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Snapshot of a state as CSV with header `x,u`.
pub fn snapshot_csv(u: &Density) -> String {
    let grid = u.grid();
    let mut out = String::from("x,u\n");
    for (j, v) in u.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", grid.cell_center(j), v);
    }
    out
}

/// Per-step scalar records as CSV.
pub fn records_csv(traj: &Trajectory) -> String {
    let mut out = String::from(
        "index,time,w_value,energy,energy_normalized,entropy,pg_norm,inner_iterations,certificate_slack\n",
    );
    for r in traj.records() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.index,
            r.time,
            r.w_value,
            r.energy,
            r.energy_normalized,
            r.entropy,
            r.pg_norm,
            r.inner_iterations,
            r.certificate_slack
        );
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub format_version: String,
    pub crate_version: String,
    pub tolerance_table_version: String,
    pub tolerance_profile: String,
    pub seed: u64,
    pub config: RunConfig,
    pub steps: usize,
    pub final_mass: f64,
    pub final_energy: f64,
    pub final_entropy: f64,
    pub initial_energy: f64,
    pub checks: Vec<CheckReport>,
    pub artifacts: BTreeMap<String, String>,
}

/// Runs the scheme and writes `final.csv`, `records.csv`, `summary.json`
/// into `out`. Returns the trajectory and the summary.
pub fn execute_run(
    config: &RunConfig,
    table: &ToleranceTable,
    seed: u64,
    out: &Path,
) -> Result<(Trajectory, RunSummary), RunError> {
    let assembled = assemble(config, seed)?;
    let traj = jko_run(&assembled.initial, &assembled.spec, &assembled.jko)?;
    let summary = write_artifacts(config, table, seed, out, &assembled, &traj, Vec::new())?;
    Ok((traj, summary))
}

/// Runs the scheme, applies the full checker battery, writes artifacts.
pub fn execute_check(
    config: &RunConfig,
    table: &ToleranceTable,
    seed: u64,
    out: &Path,
) -> Result<(Trajectory, RunSummary), RunError> {
    let assembled = assemble(config, seed)?;
    let traj = jko_run(&assembled.initial, &assembled.spec, &assembled.jko)?;
    let checks = run_checkers(&assembled.spec, &traj, table);
    let summary = write_artifacts(config, table, seed, out, &assembled, &traj, checks)?;
    Ok((traj, summary))
}

/// The checker battery applied by `check`: trajectory invariants plus
/// per-step inequality checks on every iterate.
pub fn run_checkers(
    spec: &ProblemSpec,
    traj: &Trajectory,
    table: &ToleranceTable,
) -> Vec<CheckReport> {
    let mut checks = vec![
        check_mass_conservation(traj, spec, table),
        check_box_constraint(traj, spec, table),
        check_energy_decay(traj, spec),
        check_energy_estimate(traj, spec, table),
        check_holder_continuity(traj, spec, 0.0, traj.t_end(), table),
    ];
    let mut worst_laplace: Option<CheckReport> = None;
    let mut worst_lv: Option<CheckReport> = None;
    let mut worst_entropy: Option<CheckReport> = None;
    let mut worst_interchange: Option<CheckReport> = None;
    let mut interchange_inconclusive = 0usize;
    for n in 0..traj.records().len() {
        let (a, b) = (&traj.states()[n], &traj.states()[n + 1]);
        for (slot, report) in [
            (&mut worst_laplace, check_laplace_identity(b, table)),
            (&mut worst_lv, check_lions_villani(b, table)),
            (&mut worst_entropy, check_entropy_dissipation(a, b, traj.tau(), spec, table)),
        ] {
            if slot.as_ref().map_or(true, |w| report.slack < w.slack) {
                *slot = Some(report);
            }
        }
        let fi = check_flow_interchange(a, b, traj.tau(), spec, table);
        if fi.inconclusive {
            interchange_inconclusive += 1;
        } else if worst_interchange.as_ref().map_or(true, |w| fi.slack < w.slack) {
            worst_interchange = Some(fi);
        }
    }
    for slot in [worst_laplace, worst_lv, worst_entropy] {
        if let Some(report) = slot {
            checks.push(report);
        }
    }
    if let Some(report) = worst_interchange {
        let steps = traj.records().len();
        checks.push(report.with_context(format!(
            "worst conclusive step; {interchange_inconclusive}/{steps} inconclusive"
        )));
    }
    checks
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    config: &RunConfig,
    table: &ToleranceTable,
    seed: u64,
    out: &Path,
    assembled: &Assembled,
    traj: &Trajectory,
    checks: Vec<CheckReport>,
) -> Result<RunSummary, RunError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io_err(out))?;

    let final_csv = snapshot_csv(traj.final_state());
    let records = records_csv(traj);
    let mut artifacts = BTreeMap::new();
    for (name, content) in [("final.csv", &final_csv), ("records.csv", &records)] {
        let path = out.join(name);
        fs::write(&path, content).map_err(io_err(&path))?;
        artifacts.insert(name.to_string(), sha256_hex(content));
    }

    let e0 = crate::functionals::energy(&assembled.initial, &assembled.spec).total;
    let last = traj.records().last();
    let summary = RunSummary {
        format_version: SUMMARY_FORMAT_VERSION.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        tolerance_table_version: TOLERANCE_TABLE_VERSION.into(),
        tolerance_profile: table.profile.into(),
        seed,
        config: config.clone(),
        steps: traj.records().len(),
        final_mass: traj.final_state().mass(),
        final_energy: last.map_or(e0, |r| r.energy),
        final_entropy: last.map_or_else(
            || crate::functionals::entropy_functional(&assembled.initial, &assembled.spec),
            |r| r.entropy,
        ),
        initial_energy: e0,
        checks,
        artifacts,
    };
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// sweep and compare

/// Applies one sweep value to a copy of the base configuration.
fn apply_sweep_value(base: &RunConfig, parameter: &str, value: f64) -> Result<RunConfig, ConfigError> {
    let mut c = base.clone();
    match parameter {
        "tau" => c.time.tau = value,
        "delta" => c.problem.delta = value,
        "n_cells" => {
            if value <= 0.0 || value.fract() != 0.0 {
                return Err(ConfigError::Invalid(format!("n_cells sweep value {value} is not a positive integer")));
            }
            c.grid.n_cells = value as usize;
        }
        other => return Err(ConfigError::Invalid(format!("unknown sweep parameter `{other}`"))),
    }
    Ok(c)
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub parameter: String,
    pub value: f64,
    pub directory: String,
    pub final_energy: f64,
    pub final_mass: f64,
    pub summary_sha256: String,
}

/// Runs every sweep value in parallel; artifacts land in `out/case_XXX`
/// in the order the values appear in the configuration.
pub fn execute_sweep(
    config: &RunConfig,
    table: &ToleranceTable,
    seed: u64,
    out: &Path,
) -> Result<Vec<SweepEntry>, RunError> {
    use rayon::prelude::*;
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| ConfigError::Invalid("configuration has no [sweep] section".into()))?;
    let cases: Vec<(usize, RunConfig)> = sweep
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| Ok((i, apply_sweep_value(config, &sweep.parameter, v)?)))
        .collect::<Result<_, ConfigError>>()?;
    let mut entries: Vec<(usize, SweepEntry)> = cases
        .into_par_iter()
        .map(|(i, case)| {
            let dir = format!("case_{i:03}");
            let case_out = out.join(&dir);
            let (_, summary) = execute_run(&case, table, seed, &case_out)?;
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
            Ok((
                i,
                SweepEntry {
                    parameter: sweep.parameter.clone(),
                    value: sweep.values[i],
                    directory: dir,
                    final_energy: summary.final_energy,
                    final_mass: summary.final_mass,
                    summary_sha256: sha256_hex(&text),
                },
            ))
        })
        .collect::<Result<_, RunError>>()?;
    entries.sort_by_key(|(i, _)| *i);
    let entries: Vec<SweepEntry> = entries.into_iter().map(|(_, e)| e).collect();
    let path = out.join("sweep.json");
    let text = serde_json::to_string_pretty(&entries).expect("entries serialize") + "\n";
    fs::write(&path, &text).map_err(|source| RunError::Io { path, source })?;
    Ok(entries)
}

#[derive(Debug, Serialize)]
pub struct CompareSummary {
    pub format_version: String,
    pub crate_version: String,
    pub direct_status: String,
    pub direct_steps: usize,
    pub linf_difference: f64,
    pub l2_difference: f64,
    pub tol_linf: f64,
    pub within_tolerance: bool,
    pub scheme_box_violations: usize,
}

/// Runs the minimizing-movement scheme and the direct finite-difference
/// solver on the same configuration and reports the discrepancy at
/// t_end. A positivity loss in the direct solver is a reported outcome,
/// not an error: the scheme side still completes.
pub fn execute_compare(
    config: &RunConfig,
    table: &ToleranceTable,
    seed: u64,
    out: &Path,
) -> Result<CompareSummary, RunError> {
    let assembled = assemble(config, seed)?;
    let traj = jko_run(&assembled.initial, &assembled.spec, &assembled.jko)?;
    write_artifacts(config, table, seed, out, &assembled, &traj, Vec::new())?;
    let ceiling = assembled.spec.ceiling();
    let box_violations = traj
        .states()
        .iter()
        .flat_map(|u| u.values())
        .filter(|&&v| v < 0.0 || v > ceiling)
        .count();

    let grid = assembled.grid;
    let direct = direct_pde_solve(
        &assembled.initial,
        &assembled.spec,
        config.compare.direct_dt,
        config.time.t_end,
    );
    let summary = match direct {
        Ok(result) => {
            let diff: Vec<f64> = traj
                .final_state()
                .values()
                .iter()
                .zip(result.state.values())
                .map(|(a, b)| a - b)
                .collect();
            let linf = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let l2 = grid.l2_norm(&diff);
            let direct_csv = snapshot_csv(&result.state);
            let path = out.join("direct.csv");
            fs::write(&path, &direct_csv).map_err(|source| RunError::Io { path, source })?;
            CompareSummary {
                format_version: SUMMARY_FORMAT_VERSION.into(),
                crate_version: env!("CARGO_PKG_VERSION").into(),
                direct_status: "completed".into(),
                direct_steps: result.steps,
                linf_difference: linf,
                l2_difference: l2,
                tol_linf: config.compare.tol_linf,
                within_tolerance: linf <= config.compare.tol_linf,
                scheme_box_violations: box_violations,
            }
        }
        Err(FlowError::PositivityLoss { time, minimum, maximum }) => CompareSummary {
            format_version: SUMMARY_FORMAT_VERSION.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            direct_status: format!(
                "positivity_loss at t = {time} (range [{minimum}, {maximum}])"
            ),
            direct_steps: 0,
            linf_difference: f64::NAN,
            l2_difference: f64::NAN,
            tol_linf: config.compare.tol_linf,
            within_tolerance: false,
            scheme_box_violations: box_violations,
        },
        Err(e) => return Err(e.into()),
    };
    let path = out.join("compare.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(&path, text).map_err(|source| RunError::Io { path, source })?;
    Ok(summary)
}
