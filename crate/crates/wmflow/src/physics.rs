//! Mobility and free-energy catalog, hypothesis validators, entropy
//! densities, pressure, and the delta-regularization of non-Lipschitz
//! mobilities.
//!
//! A [`ProblemSpec`] bundles one mobility and one free energy with the
//! conserved mass and domain length, normalizes G so that G(s0) =
//! G'(s0) = 0 at the mean density s0, and derives the explicit constants
//! used by the runtime inequality checks.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("delta {delta} is not below the maximum mobility {max_m}")]
    DeltaTooLarge { delta: f64, max_m: f64 },
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

// ---------------------------------------------------------------------------
// quadrature helpers

/// 8-point Gauss-Legendre nodes (positive half) and weights on [-1, 1].
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gl_segment(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..4 {
        acc += GL_W[i] * (f(mid + half * GL_X[i]) + f(mid - half * GL_X[i]));
    }
    acc * half
}

/// Integral of f over [a, b] (signed if b < a) on a mesh geometrically
/// graded toward both endpoints, so integrable endpoint singularities are
/// resolved and the integrand is never evaluated at a or b.
pub(crate) fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    integrate_graded(f, a, b, 60)
}

fn integrate_graded(f: &dyn Fn(f64) -> f64, a: f64, b: f64, levels: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate_graded(f, b, a, levels);
    }
    let mid = 0.5 * (a + b);
    let ratio = 1e-30f64.powf(1.0 / levels as f64);
    // Grading stops once a segment would sit inside the rounding shadow
    // of its endpoint (quadrature nodes could collapse onto it).
    let floor_a = 256.0 * f64::EPSILON * a.abs();
    let floor_b = 256.0 * f64::EPSILON * b.abs();
    let mut acc = 0.0;
    // left half: segments shrink toward a
    let mut t_hi = 1.0;
    for _ in 0..levels {
        let t_lo = t_hi * ratio;
        if (mid - a) * t_lo <= floor_a {
            break;
        }
        acc += gl_segment(f, a + (mid - a) * t_lo, a + (mid - a) * t_hi);
        t_hi = t_lo;
    }
    acc += gl_segment(f, a, a + (mid - a) * t_hi);
    // right half: segments shrink toward b
    let mut t_hi = 1.0;
    for _ in 0..levels {
        let t_lo = t_hi * ratio;
        if (b - mid) * t_lo <= floor_b {
            break;
        }
        acc += gl_segment(f, b - (b - mid) * t_hi, b - (b - mid) * t_lo);
        t_hi = t_lo;
    }
    acc += gl_segment(f, b - (b - mid) * t_hi, b);
    acc
}

/// Like [`integrate`] but cross-checked on a finer grading; errors if the
/// two disagree beyond 1e-8 relative.
pub(crate) fn integrate_checked(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<f64, PhysicsError> {
    let coarse = integrate_graded(f, a, b, 60);
    let fine = integrate_graded(f, a, b, 90);
    if (coarse - fine).abs() > 1e-8 * (1.0 + fine.abs()) {
        return Err(PhysicsError::QuadratureFailure(format!(
            "integral on [{a}, {b}] unstable: {coarse} vs {fine}"
        )));
    }
    Ok(fine)
}

// ---------------------------------------------------------------------------
// mobility

/// Density-dependent diffusivity weight m(s) on (0, M), concave and
/// vanishing at the endpoints for the admissible catalog entries.
#[derive(Clone)]
pub struct Mobility {
    kind: MobilityKind,
    ceiling: f64,
}

#[derive(Clone)]
enum MobilityKind {
    /// m(s) = s, the Wasserstein case.
    Linear,
    /// m(s) = s (M - s).
    Quadratic,
    /// m(s) = s^alpha, M = infinity.
    Power { alpha: f64 },
    /// m(s) = s^a0 (M - s)^a1.
    PowerProduct { a0: f64, a1: f64 },
    /// m = 1: outside the hypothesis class, kept as a validation mode
    /// for linear-equation oracles.
    ConstantOne,
    Custom {
        name: String,
        m: ScalarFn,
        dm: ScalarFn,
        d2m: ScalarFn,
    },
}

impl std::fmt::Debug for Mobility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mobility({}, M={})", self.tag(), self.ceiling)
    }
}

impl Mobility {
    pub fn linear() -> Self {
        Mobility { kind: MobilityKind::Linear, ceiling: f64::INFINITY }
    }

    pub fn quadratic(ceiling: f64) -> Self {
        assert!(ceiling > 0.0 && ceiling.is_finite());
        Mobility { kind: MobilityKind::Quadratic, ceiling }
    }

    pub fn power(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "power mobility needs alpha in (0, 1]");
        Mobility { kind: MobilityKind::Power { alpha }, ceiling: f64::INFINITY }
    }

    pub fn power_product(a0: f64, a1: f64, ceiling: f64) -> Self {
        assert!(a0 > 0.0 && a1 > 0.0 && ceiling > 0.0 && ceiling.is_finite());
        Mobility { kind: MobilityKind::PowerProduct { a0, a1 }, ceiling }
    }

    pub fn constant_one() -> Self {
        Mobility { kind: MobilityKind::ConstantOne, ceiling: f64::INFINITY }
    }

    pub fn custom<F, D, D2>(name: &str, ceiling: f64, m: F, dm: D, d2m: D2) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Mobility {
            kind: MobilityKind::Custom {
                name: name.to_string(),
                m: Arc::new(m),
                dm: Arc::new(dm),
                d2m: Arc::new(d2m),
            },
            ceiling,
        }
    }

    pub fn tag(&self) -> String {
        match &self.kind {
            MobilityKind::Linear => "linear".into(),
            MobilityKind::Quadratic => "quadratic".into(),
            MobilityKind::Power { alpha } => format!("power({alpha})"),
            MobilityKind::PowerProduct { a0, a1 } => format!("power_product({a0},{a1})"),
            MobilityKind::ConstantOne => "constant_one".into(),
            MobilityKind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.kind {
            MobilityKind::Linear => s,
            MobilityKind::Quadratic => s * (self.ceiling - s),
            MobilityKind::Power { alpha } => {
                if s <= 0.0 {
                    0.0
                } else {
                    s.powf(*alpha)
                }
            }
            MobilityKind::PowerProduct { a0, a1 } => {
                if s <= 0.0 || s >= self.ceiling {
                    0.0
                } else {
                    s.powf(*a0) * (self.ceiling - s).powf(*a1)
                }
            }
            MobilityKind::ConstantOne => 1.0,
            MobilityKind::Custom { m, .. } => m(s),
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match &self.kind {
            MobilityKind::Linear => 1.0,
            MobilityKind::Quadratic => self.ceiling - 2.0 * s,
            MobilityKind::Power { alpha } => alpha * s.powf(alpha - 1.0),
            MobilityKind::PowerProduct { a0, a1 } => {
                let m = self.ceiling;
                a0 * s.powf(a0 - 1.0) * (m - s).powf(*a1) - a1 * s.powf(*a0) * (m - s).powf(a1 - 1.0)
            }
            MobilityKind::ConstantOne => 0.0,
            MobilityKind::Custom { dm, .. } => dm(s),
        }
    }

    pub fn deriv2(&self, s: f64) -> f64 {
        match &self.kind {
            MobilityKind::Linear => 0.0,
            MobilityKind::Quadratic => -2.0,
            MobilityKind::Power { alpha } => alpha * (alpha - 1.0) * s.powf(alpha - 2.0),
            MobilityKind::PowerProduct { a0, a1 } => {
                let m = self.ceiling;
                a0 * (a0 - 1.0) * s.powf(a0 - 2.0) * (m - s).powf(*a1)
                    - 2.0 * a0 * a1 * s.powf(a0 - 1.0) * (m - s).powf(a1 - 1.0)
                    + a1 * (a1 - 1.0) * s.powf(*a0) * (m - s).powf(a1 - 2.0)
            }
            MobilityKind::ConstantOne => 0.0,
            MobilityKind::Custom { d2m, .. } => d2m(s),
        }
    }

    /// Representative interior scale used by sampling heuristics.
    fn scale(&self) -> f64 {
        if self.ceiling.is_finite() {
            self.ceiling
        } else {
            1.0
        }
    }

    /// Sampled maximum of m over the working range; for unbounded ranges
    /// the sample is capped (heuristic, used only for delta feasibility).
    fn sampled_max(&self) -> f64 {
        let hi = if self.ceiling.is_finite() { self.ceiling } else { 1e6 };
        let mut best = 0.0f64;
        for i in 1..2048 {
            let s = hi * i as f64 / 2048.0;
            best = best.max(self.eval(s));
        }
        best
    }
}

// ---------------------------------------------------------------------------
// hypothesis validators

/// Outcome of a numerical hypothesis check. `witnesses` lists sample
/// points (s, value) that violated the condition, or the probe ladder
/// values for limit-type checks.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub name: &'static str,
    pub passes: bool,
    pub witnesses: Vec<(f64, f64)>,
    pub summary: String,
}

fn sample_points(m: &Mobility) -> Vec<f64> {
    let hi = if m.ceiling().is_finite() { m.ceiling() } else { 10.0 * m.scale() };
    let mut pts = Vec::new();
    for i in 1..512 {
        pts.push(hi * i as f64 / 512.0);
    }
    // geometric ladders toward the endpoints
    let mut d = 1e-2;
    while d > 1e-9 {
        pts.push(hi * d);
        if m.ceiling().is_finite() {
            pts.push(hi * (1.0 - d));
        }
        d *= 0.1;
    }
    if !m.ceiling().is_finite() {
        // growth ladder for unbounded state space
        let mut s = 10.0 * m.scale();
        while s < 1e6 {
            s *= 10.0;
            pts.push(s);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts
}

/// Positivity, concavity, and vanishing endpoint limits of the mobility.
pub fn validate_m(m: &Mobility) -> HypothesisReport {
    let mut witnesses = Vec::new();
    let pts = sample_points(m);
    for &s in &pts {
        let v = m.eval(s);
        if !(v > 0.0) {
            witnesses.push((s, v));
        }
        let c = m.deriv2(s);
        if c > 1e-10 {
            witnesses.push((s, c));
        }
    }
    // endpoint limits at 1e-8-scale offsets
    let hi = m.scale();
    let peak = m.sampled_max();
    let near0 = m.eval(1e-8 * hi);
    if near0 > 1e-2 * peak {
        witnesses.push((1e-8 * hi, near0));
    }
    let mut summary = format!("m({:.1e}) = {:.3e}, peak {:.3e}", 1e-8 * hi, near0, peak);
    if m.ceiling().is_finite() {
        let near_m = m.eval(m.ceiling() * (1.0 - 1e-8));
        if near_m > 1e-2 * peak {
            witnesses.push((m.ceiling() * (1.0 - 1e-8), near_m));
        }
        summary.push_str(&format!(", m(M-) sample {near_m:.3e}"));
    }
    HypothesisReport {
        name: "mobility: concave, positive, vanishing at endpoints",
        passes: witnesses.is_empty(),
        witnesses,
        summary,
    }
}

/// Lipschitz bound sup|m'| and semi-convexity bound sup(-m'' m), both
/// probed on a decade ladder toward the endpoints; passes iff neither
/// grows across the last three decades.
pub fn validate_lsc(m: &Mobility) -> HypothesisReport {
    let hi = m.scale();
    let decades: Vec<f64> = (2..=8).map(|k| hi * 10f64.powi(-k)).collect();
    let mut probes: Vec<f64> = decades.clone();
    if m.ceiling().is_finite() {
        probes.extend(decades.iter().map(|d| m.ceiling() - d));
    }
    let grows = |vals: &[f64]| -> bool {
        let k = vals.len();
        k >= 4 && vals[k - 1].abs() > 2.0 * vals[k - 4].abs() + 1e-12
    };
    let dm_ladder_0: Vec<f64> = decades.iter().map(|&s| m.deriv(s)).collect();
    let sc_ladder_0: Vec<f64> = decades.iter().map(|&s| -m.deriv2(s) * m.eval(s)).collect();
    let mut failed = grows(&dm_ladder_0) || grows(&sc_ladder_0);
    if m.ceiling().is_finite() {
        let dm_m: Vec<f64> = decades.iter().map(|&d| m.deriv(m.ceiling() - d)).collect();
        let sc_m: Vec<f64> = decades.iter().map(|&d| {
            let s = m.ceiling() - d;
            -m.deriv2(s) * m.eval(s)
        }).collect();
        failed = failed || grows(&dm_m) || grows(&sc_m);
    }
    let mut sup_dm = 0.0f64;
    let mut sup_sc = 0.0f64;
    for &s in sample_points(m).iter().chain(probes.iter()) {
        sup_dm = sup_dm.max(m.deriv(s).abs());
        sup_sc = sup_sc.max(-m.deriv2(s) * m.eval(s));
    }
    let witnesses: Vec<(f64, f64)> = decades.iter().cloned().zip(dm_ladder_0).collect();
    HypothesisReport {
        name: "mobility: Lipschitz with semi-convex square",
        passes: !failed,
        witnesses,
        summary: format!("sup|m'| ~ {sup_dm:.4e}, sup(-m'' m) ~ {sup_sc:.4e}"),
    }
}

/// Endpoint decay of s^(1/2) m'(s): the ladder must decrease to at most
/// 1e-3 of its first value. Probed down to 1e-16 so power mobilities
/// s^alpha resolve on the correct side of alpha = 1/2.
pub fn validate_m_half(m: &Mobility) -> HypothesisReport {
    let hi = m.scale();
    let ladder: Vec<f64> = (1..=8).map(|k| hi * 10f64.powi(-2 * k)).collect();
    let check = |vals: &[f64]| -> bool {
        let decreasing = vals.windows(2).all(|w| w[1].abs() <= w[0].abs() + 1e-14);
        decreasing && vals[vals.len() - 1].abs() <= 1e-3 * vals[0].abs().max(1e-300)
    };
    let g0: Vec<f64> = ladder.iter().map(|&s| s.sqrt() * m.deriv(s)).collect();
    let mut passes = check(&g0);
    let mut witnesses: Vec<(f64, f64)> = ladder.iter().cloned().zip(g0.iter().cloned()).collect();
    if m.ceiling().is_finite() {
        let gm: Vec<f64> = ladder
            .iter()
            .map(|&d| d.sqrt() * m.deriv(m.ceiling() - d))
            .collect();
        passes = passes && check(&gm);
        witnesses.extend(ladder.iter().map(|&d| m.ceiling() - d).zip(gm));
    }
    HypothesisReport {
        name: "mobility: sqrt-weighted derivative vanishes at endpoints",
        passes,
        witnesses,
        summary: format!("ladder head {:.3e}, tail {:.3e}", g0[0], g0[g0.len() - 1]),
    }
}

/// Lower curvature bound of the free energy relative to the mobility:
/// m G'' >= -C (bounded state space) or m G'' >= -C (1 + m) (unbounded).
/// Reports the sampled constant C.
pub fn validate_g(m: &Mobility, g: &FreeEnergy) -> HypothesisReport {
    let pts = sample_points(m);
    let mut c = 0.0f64;
    let mut ladder = Vec::new();
    for &s in &pts {
        let v = if m.ceiling().is_finite() {
            -m.eval(s) * g.d2g(s)
        } else {
            -m.eval(s) * g.d2g(s) / (1.0 + m.eval(s))
        };
        if v.is_finite() {
            c = c.max(v);
        } else if v.is_nan() {
            continue;
        } else {
            ladder.push((s, v));
        }
    }
    HypothesisReport {
        name: "free energy: mobility-weighted curvature bounded below",
        passes: ladder.is_empty() && c.is_finite(),
        witnesses: ladder,
        summary: format!("C ~ {c:.4e}"),
    }
}

// ---------------------------------------------------------------------------
// delta-regularization

/// Bisection for the root of f on [lo, hi] with f(lo), f(hi) of opposite
/// sign; relative tolerance 1e-14.
fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Lipschitz surrogate m_delta <= m obtained by sliding the graph past
/// the level delta: with s1 < s2 the roots of m = delta,
/// m_delta(s) = m((s2 - s1) s / M + s1) - delta for bounded state space,
/// and m_delta(s) = m(s + s1) - delta otherwise.
pub fn regularize_mobility(m: &Mobility, delta: f64) -> Result<Mobility, PhysicsError> {
    assert!(delta > 0.0);
    let max_m = m.sampled_max();
    if m.ceiling().is_finite() && delta >= max_m {
        return Err(PhysicsError::DeltaTooLarge { delta, max_m });
    }
    let base = m.clone();
    if m.ceiling().is_finite() {
        let ceil = m.ceiling();
        // peak location by golden-section-free scan + refinement via m'
        let s_peak = bisect(&|s| base.deriv(s), 1e-12 * ceil, ceil * (1.0 - 1e-12));
        if m.eval(s_peak) <= delta {
            return Err(PhysicsError::DeltaTooLarge { delta, max_m: m.eval(s_peak) });
        }
        let b1 = base.clone();
        let s1 = bisect(&move |s| b1.eval(s) - delta, 1e-300, s_peak);
        let b2 = base.clone();
        let s2 = bisect(&move |s| b2.eval(s) - delta, s_peak, ceil * (1.0 - f64::EPSILON));
        let c = (s2 - s1) / ceil;
        let (ma, mb, mc) = (base.clone(), base.clone(), base.clone());
        Ok(Mobility::custom(
            &format!("{}~delta={delta:.1e}", m.tag()),
            ceil,
            move |s| (ma.eval(c * s + s1) - delta).max(0.0),
            move |s| c * mb.deriv(c * s + s1),
            move |s| c * c * mc.deriv2(c * s + s1),
        ))
    } else {
        let b1 = base.clone();
        // m is nondecreasing on (0, inf) for the admissible catalog
        let mut hi = m.scale();
        while base.eval(hi) < delta {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(PhysicsError::DeltaTooLarge { delta, max_m });
            }
        }
        let s_delta = bisect(&move |s| b1.eval(s) - delta, 1e-300, hi);
        let (ma, mb, mc) = (base.clone(), base.clone(), base.clone());
        Ok(Mobility::custom(
            &format!("{}~delta={delta:.1e}", m.tag()),
            f64::INFINITY,
            move |s| (ma.eval(s + s_delta) - delta).max(0.0),
            move |s| mb.deriv(s + s_delta),
            move |s| mc.deriv2(s + s_delta),
        ))
    }
}

// ---------------------------------------------------------------------------
// free energy

/// Raw free-energy density G; normalization to the reference point
/// happens in [`ProblemSpec`].
#[derive(Clone)]
pub struct FreeEnergy {
    kind: FreeEnergyKind,
}

#[derive(Clone)]
enum FreeEnergyKind {
    Zero,
    /// theta s^2 (1 - s)^2.
    DoubleWell { theta: f64 },
    /// theta (s ln s + (1 - s) ln(1 - s)) on [0, 1].
    LogBinary { theta: f64 },
    /// kappa beta / ((beta - alpha)(beta - alpha + 1)) s^(beta - alpha + 1).
    PowerLaw { kappa: f64, alpha: f64, beta: f64 },
    Custom {
        name: String,
        g: ScalarFn,
        dg: ScalarFn,
        d2g: ScalarFn,
    },
}

impl std::fmt::Debug for FreeEnergy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FreeEnergy({})", self.tag())
    }
}

impl FreeEnergy {
    pub fn zero() -> Self {
        FreeEnergy { kind: FreeEnergyKind::Zero }
    }

    pub fn double_well(theta: f64) -> Self {
        FreeEnergy { kind: FreeEnergyKind::DoubleWell { theta } }
    }

    pub fn log_binary(theta: f64) -> Self {
        FreeEnergy { kind: FreeEnergyKind::LogBinary { theta } }
    }

    pub fn power_law(kappa: f64, alpha: f64, beta: f64) -> Self {
        assert!(beta > alpha, "power-law energy needs beta > alpha");
        FreeEnergy { kind: FreeEnergyKind::PowerLaw { kappa, alpha, beta } }
    }

    pub fn custom<F, D, D2>(name: &str, g: F, dg: D, d2g: D2) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FreeEnergy {
            kind: FreeEnergyKind::Custom {
                name: name.to_string(),
                g: Arc::new(g),
                dg: Arc::new(dg),
                d2g: Arc::new(d2g),
            },
        }
    }

    pub fn tag(&self) -> String {
        match &self.kind {
            FreeEnergyKind::Zero => "zero".into(),
            FreeEnergyKind::DoubleWell { theta } => format!("double_well({theta})"),
            FreeEnergyKind::LogBinary { theta } => format!("log_binary({theta})"),
            FreeEnergyKind::PowerLaw { kappa, alpha, beta } => {
                format!("power_law({kappa},{alpha},{beta})")
            }
            FreeEnergyKind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, FreeEnergyKind::Zero)
            || matches!(self.kind, FreeEnergyKind::PowerLaw { kappa, .. } if kappa == 0.0)
    }

    pub fn g(&self, s: f64) -> f64 {
        match &self.kind {
            FreeEnergyKind::Zero => 0.0,
            FreeEnergyKind::DoubleWell { theta } => theta * s * s * (1.0 - s) * (1.0 - s),
            FreeEnergyKind::LogBinary { theta } => {
                if !(0.0..=1.0).contains(&s) {
                    return f64::INFINITY;
                }
                let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
                theta * (xlx(s) + xlx(1.0 - s))
            }
            FreeEnergyKind::PowerLaw { kappa, alpha, beta } => {
                if s < 0.0 {
                    return f64::INFINITY;
                }
                let p = beta - alpha + 1.0;
                kappa * beta / ((beta - alpha) * p) * s.powf(p)
            }
            FreeEnergyKind::Custom { g, .. } => g(s),
        }
    }

    pub fn dg(&self, s: f64) -> f64 {
        match &self.kind {
            FreeEnergyKind::Zero => 0.0,
            FreeEnergyKind::DoubleWell { theta } => theta * 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
            FreeEnergyKind::LogBinary { theta } => theta * (s.ln() - (1.0 - s).ln()),
            FreeEnergyKind::PowerLaw { kappa, alpha, beta } => {
                kappa * beta / (beta - alpha) * s.powf(beta - alpha)
            }
            FreeEnergyKind::Custom { dg, .. } => dg(s),
        }
    }

    pub fn d2g(&self, s: f64) -> f64 {
        match &self.kind {
            FreeEnergyKind::Zero => 0.0,
            FreeEnergyKind::DoubleWell { theta } => theta * (2.0 - 12.0 * s + 12.0 * s * s),
            FreeEnergyKind::LogBinary { theta } => theta / (s * (1.0 - s)),
            FreeEnergyKind::PowerLaw { kappa, alpha, beta } => {
                kappa * beta * s.powf(beta - alpha - 1.0)
            }
            FreeEnergyKind::Custom { d2g, .. } => d2g(s),
        }
    }
}

// ---------------------------------------------------------------------------
// entropy density

/// Convex density U with U'' = 1/m, U(s0) = U'(s0) = 0, evaluated in
/// closed form for the catalog mobilities and by graded quadrature of
/// int_{s0}^{s} (s - r)/m(r) dr otherwise.
#[derive(Clone)]
pub struct EntropyDensity {
    mobility: Mobility,
    s0: f64,
}

impl EntropyDensity {
    pub fn new(mobility: Mobility, s0: f64) -> Self {
        assert!(s0 > 0.0 && s0 < mobility.ceiling());
        EntropyDensity { mobility, s0 }
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn eval(&self, s: f64) -> f64 {
        let s0 = self.s0;
        let ceil = self.mobility.ceiling();
        if s < 0.0 || s > ceil {
            return f64::INFINITY;
        }
        let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
        match &self.mobility.kind {
            MobilityKind::Linear => xlx(s) - s * s0.ln() - (s - s0),
            MobilityKind::Quadratic => {
                let m = ceil;
                (xlx(s) - s * s0.ln() + xlx(m - s) - (m - s) * (m - s0).ln()) / m
            }
            MobilityKind::Power { alpha } if (*alpha - 1.0).abs() > 1e-12 => {
                let a = *alpha;
                let t1 = if s == 0.0 { 0.0 } else { s * (s.powf(1.0 - a) - s0.powf(1.0 - a)) / (1.0 - a) };
                t1 - (s.powf(2.0 - a) - s0.powf(2.0 - a)) / (2.0 - a)
            }
            MobilityKind::Power { .. } => xlx(s) - s * s0.ln() - (s - s0),
            MobilityKind::ConstantOne => 0.5 * (s - s0) * (s - s0),
            _ => {
                let mob = &self.mobility;
                integrate(&|r| (s - r) / mob.eval(r), s0, s)
            }
        }
    }

    /// U'(s); finite only strictly inside (0, M) for degenerate m.
    pub fn deriv(&self, s: f64) -> f64 {
        let s0 = self.s0;
        match &self.mobility.kind {
            MobilityKind::Linear => (s / s0).ln(),
            MobilityKind::Quadratic => {
                let m = self.mobility.ceiling();
                ((s / s0).ln() - ((m - s) / (m - s0)).ln()) / m
            }
            MobilityKind::Power { alpha } if (*alpha - 1.0).abs() > 1e-12 => {
                (s.powf(1.0 - alpha) - s0.powf(1.0 - alpha)) / (1.0 - alpha)
            }
            MobilityKind::Power { .. } => (s / s0).ln(),
            MobilityKind::ConstantOne => s - s0,
            _ => {
                let mob = &self.mobility;
                integrate(&|r| 1.0 / mob.eval(r), s0, s)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// spec constants

/// Explicit constants for the runtime inequality checks, instantiated
/// per (mobility, energy, mass, length) instead of symbolic "C".
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SpecConstants {
    /// Sampled bound on the negative curvature of G: (-G'')_+ <= c2.
    pub c2: f64,
    /// Coercivity offset: (1/8)||u||_H1^2 + int G_conv(u) <= E[u] + e0.
    pub e0: f64,
    /// Entropy growth: U[u] <= c_ent (1 + ||u||^2).
    pub c_ent: f64,
    /// Entropy vs energy: U[u] <= c_ue (E[u] + e0).
    pub c_ue: f64,
    /// Hypothesis constant: m G'' >= -c_g (or >= -c_g (1 + m)).
    pub c_g: f64,
    /// Dissipation budget constant in the per-step entropy estimate.
    pub c_heat: f64,
}

// ---------------------------------------------------------------------------
// problem spec

/// One coherent problem bundle: mobility, free energy normalized at
/// s0 = mass / length, pressure, entropy density, and derived constants.
#[derive(Clone)]
pub struct ProblemSpec {
    mobility: Mobility,
    free_energy: FreeEnergy,
    entropy: EntropyDensity,
    mass: f64,
    length: f64,
    s0: f64,
    g_s0: f64,
    dg_s0: f64,
    constants: SpecConstants,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ProblemSpec(m={}, G={}, mass={}, L={})",
            self.mobility.tag(),
            self.free_energy.tag(),
            self.mass,
            self.length
        )
    }
}

impl ProblemSpec {
    /// Checked constructor: the mobility must pass the concavity and
    /// endpoint hypotheses and s0 = mass/length must lie inside (0, M).
    pub fn new(
        mobility: Mobility,
        free_energy: FreeEnergy,
        mass: f64,
        length: f64,
    ) -> Result<Self, PhysicsError> {
        let report = validate_m(&mobility);
        if !report.passes {
            return Err(PhysicsError::InvalidSpec(format!(
                "mobility {} fails the structural hypothesis: {}",
                mobility.tag(),
                report.summary
            )));
        }
        Self::new_unvalidated(mobility, free_energy, mass, length)
    }

    /// Constructor without the mobility hypothesis gate; needed for
    /// validation modes (m = 1) that are deliberately outside the class.
    pub fn new_unvalidated(
        mobility: Mobility,
        free_energy: FreeEnergy,
        mass: f64,
        length: f64,
    ) -> Result<Self, PhysicsError> {
        if !(mass > 0.0) || !(length > 0.0) {
            return Err(PhysicsError::InvalidSpec("mass and length must be positive".into()));
        }
        let s0 = mass / length;
        if !(s0 > 0.0 && s0 < mobility.ceiling()) {
            return Err(PhysicsError::InvalidSpec(format!(
                "mean density {s0} outside (0, {})",
                mobility.ceiling()
            )));
        }
        let g_s0 = free_energy.g(s0);
        let dg_s0 = free_energy.dg(s0);
        if !g_s0.is_finite() || !dg_s0.is_finite() {
            return Err(PhysicsError::InvalidSpec("free energy singular at the mean density".into()));
        }
        let entropy = EntropyDensity::new(mobility.clone(), s0);
        let constants = derive_constants(&mobility, &free_energy, mass, length, s0);
        Ok(ProblemSpec {
            mobility,
            free_energy,
            entropy,
            mass,
            length,
            s0,
            g_s0,
            dg_s0,
            constants,
        })
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    pub fn free_energy(&self) -> &FreeEnergy {
        &self.free_energy
    }

    pub fn entropy(&self) -> &EntropyDensity {
        &self.entropy
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn ceiling(&self) -> f64 {
        self.mobility.ceiling()
    }

    pub fn constants(&self) -> SpecConstants {
        self.constants
    }

    pub fn m(&self, s: f64) -> f64 {
        self.mobility.eval(s)
    }

    /// Normalized potential: G(s) - G(s0) - G'(s0)(s - s0).
    pub fn g(&self, s: f64) -> f64 {
        self.free_energy.g(s) - self.g_s0 - self.dg_s0 * (s - self.s0)
    }

    pub fn g_prime(&self, s: f64) -> f64 {
        self.free_energy.dg(s) - self.dg_s0
    }

    pub fn g_second(&self, s: f64) -> f64 {
        self.free_energy.d2g(s)
    }

    /// Convex part of the normalized potential (Taylor remainder with
    /// the positive part of G'').
    pub fn g_conv(&self, s: f64) -> f64 {
        self.g_part(s, true)
    }

    /// Concave part; g_conv + g_conc = g pointwise.
    pub fn g_conc(&self, s: f64) -> f64 {
        self.g_part(s, false)
    }

    /// Taylor-remainder integral of the clipped curvature, split at the
    /// sign changes of G'' so each piece is smooth.
    fn g_part(&self, s: f64, positive: bool) -> f64 {
        let fe = &self.free_energy;
        let clip = move |r: f64| {
            let c = fe.d2g(r);
            if positive { c.max(0.0) } else { c.min(0.0) }
        };
        let (lo, hi) = if s < self.s0 { (s, self.s0) } else { (self.s0, s) };
        let mut cuts = vec![lo];
        let steps = 256;
        let mut prev = fe.d2g(lo + (hi - lo) * 0.5 / steps as f64);
        for i in 1..steps {
            let r = lo + (hi - lo) * (i as f64 + 0.5) / steps as f64;
            let cur = fe.d2g(r);
            if prev.is_finite() && cur.is_finite() && (prev > 0.0) != (cur > 0.0) {
                let rl = lo + (hi - lo) * (i as f64 - 0.5) / steps as f64;
                cuts.push(bisect(&|x| fe.d2g(x), rl, r));
            }
            prev = cur;
        }
        cuts.push(hi);
        let sign = if s < self.s0 { -1.0 } else { 1.0 };
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            acc += integrate(&|r| (s - r) * clip(r), w[0], w[1]);
        }
        sign * acc
    }

    /// Pressure with P(s0) = 0 and P' = m G''.
    pub fn pressure(&self, s: f64) -> f64 {
        match (&self.mobility.kind, &self.free_energy.kind) {
            (_, FreeEnergyKind::Zero) => 0.0,
            (MobilityKind::Quadratic, FreeEnergyKind::LogBinary { theta })
                if (self.mobility.ceiling() - 1.0).abs() < 1e-14 =>
            {
                theta * (s - self.s0)
            }
            _ => {
                let mob = &self.mobility;
                let fe = &self.free_energy;
                integrate(&|r| mob.eval(r) * fe.d2g(r), self.s0, s)
            }
        }
    }

    /// Regularized pressure anchored at 0: int_0^s m_delta G''.
    pub fn pressure_delta(&self, delta: f64, s: f64) -> Result<f64, PhysicsError> {
        let m_delta = regularize_mobility(&self.mobility, delta)?;
        let fe = &self.free_energy;
        integrate_checked(&|r| m_delta.eval(r) * fe.d2g(r), 0.0, s)
    }

    /// Same problem with the mobility replaced by its delta-regularization.
    pub fn regularized(&self, delta: f64) -> Result<ProblemSpec, PhysicsError> {
        let m_delta = regularize_mobility(&self.mobility, delta)?;
        ProblemSpec::new_unvalidated(m_delta, self.free_energy.clone(), self.mass, self.length)
    }
}

fn derive_constants(
    mobility: &Mobility,
    free_energy: &FreeEnergy,
    mass: f64,
    length: f64,
    s0: f64,
) -> SpecConstants {
    let finite_m = mobility.ceiling().is_finite();
    let hi = if finite_m {
        mobility.ceiling()
    } else {
        (10.0 * s0).max(10.0)
    };
    let mut c2 = 0.0f64;
    let mut c_g = 0.0f64;
    let mut probe = |s: f64| {
        let d2 = free_energy.d2g(s);
        if d2.is_finite() {
            c2 = c2.max(-d2);
        }
        let ms = mobility.eval(s);
        let v = if finite_m { -ms * d2 } else { -ms * d2 / (1.0 + ms) };
        if v.is_finite() {
            c_g = c_g.max(v);
        }
    };
    for i in 1..2048 {
        probe(hi * i as f64 / 2048.0);
    }
    let mut d = 1e-2;
    while d > 1e-11 {
        probe(hi * d);
        if finite_m {
            probe(hi * (1.0 - d));
        }
        d *= 0.1;
    }
    // Coercivity offset from the interpolation inequality
    // ||u||^2 <= eps^2 ||Du||^2 + mass^2 (1/L + L/(4 eps^2)).
    let eps_sq = (3.0 / 8.0) / (1.0 / 8.0 + c2);
    let e0 = (1.0 / 8.0 + c2) * mass * mass * (1.0 / length + length / (4.0 * eps_sq))
        + c2 * length * s0 * s0;
    // Entropy growth via the concavity chords of m.
    let m_s0 = mobility.eval(s0);
    let c0 = s0 * s0 / m_s0;
    let branch = if finite_m {
        let cm = (mobility.ceiling() - s0) * (mobility.ceiling() - s0) / m_s0;
        length * c0.max(cm)
    } else {
        length * (c0 + s0 * s0 / m_s0)
    };
    let c_ent = branch.max(1.0 / m_s0);
    let c_ue = 8.0 * c_ent * (1.0 + length / (mass * mass));
    // Dissipation budget constant (zero for curvature-benign potentials).
    let c_heat = if c_g == 0.0 {
        0.0
    } else if finite_m {
        let a = c_g * s0.max(mobility.ceiling() - s0) / m_s0;
        144.0 * a * a * length * length / (mass * mass)
    } else {
        let b = c_g * s0 / m_s0;
        let c = c_g * (1.0 + 1.0 / m_s0);
        72.0 * b * b * length * length / (mass * mass) + 8.0 * c * c
    };
    SpecConstants { c2, e0, c_ent, c_ue, c_g, c_heat }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn ch_mobility() -> Mobility {
        Mobility::quadratic(1.0)
    }

    #[test]
    fn validate_m_catalog() {
        assert!(validate_m(&ch_mobility()).passes);
        assert!(validate_m(&Mobility::power(0.75)).passes);
        assert!(validate_m(&Mobility::linear()).passes);
        let convex = Mobility::custom("square", f64::INFINITY, |s| s * s, |s| 2.0 * s, |_| 2.0);
        assert!(!validate_m(&convex).passes);
        assert!(!validate_m(&Mobility::constant_one()).passes);
    }

    #[test]
    fn validate_lsc_catalog() {
        let r = validate_lsc(&ch_mobility());
        assert!(r.passes);
        assert!(r.summary.contains("sup|m'|"));
        assert!(!validate_lsc(&Mobility::power(0.75)).passes);
        assert!(validate_lsc(&Mobility::linear()).passes);
    }

    #[test]
    fn lsc_suprema_quadratic() {
        // dense-sampling oracle for m = s(1-s): sup|m'| = 1, sup(-m'' m) = 1/2
        let m = ch_mobility();
        let mut sup_dm = 0.0f64;
        let mut sup_sc = 0.0f64;
        for i in 0..=10_000 {
            let s = i as f64 / 10_000.0;
            sup_dm = sup_dm.max(m.deriv(s).abs());
            sup_sc = sup_sc.max(-m.deriv2(s) * m.eval(s));
        }
        assert!((sup_dm - 1.0).abs() < 1e-12);
        assert!((sup_sc - 0.5).abs() < 1e-4);
    }

    #[test]
    fn validate_m_half_catalog() {
        assert!(validate_m_half(&Mobility::power(0.75)).passes);
        assert!(!validate_m_half(&Mobility::power(0.5)).passes);
        assert!(validate_m_half(&ch_mobility()).passes);
        assert!(!validate_m_half(&Mobility::power(0.4)).passes);
    }

    #[test]
    fn regularize_linear_is_identity() {
        let md = regularize_mobility(&Mobility::linear(), 0.1).unwrap();
        for s in [0.0, 0.3, 1.7, 10.0] {
            assert!((md.eval(s) - s).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn regularize_quadratic_roots() {
        // m = s(1-s), delta = 0.09: roots 0.1 and 0.9; m_delta(0.5) = 0.16
        let md = regularize_mobility(&ch_mobility(), 0.09).unwrap();
        assert!(md.eval(0.0).abs() < 1e-12);
        assert!(md.eval(1.0).abs() < 1e-10);
        assert!((md.eval(0.5) - 0.16).abs() < 1e-12);
    }

    #[test]
    fn regularize_below_original_and_converging() {
        for mob in [ch_mobility(), Mobility::power(0.75)] {
            let mut prev_sup = f64::INFINITY;
            for k in 1..=6 {
                let delta = 10f64.powi(-k);
                let md = regularize_mobility(&mob, delta).unwrap();
                let hi = if mob.ceiling().is_finite() { mob.ceiling() } else { 3.0 };
                let mut sup = 0.0f64;
                for i in 0..=500 {
                    let s = hi * i as f64 / 500.0;
                    let gap = mob.eval(s) - md.eval(s);
                    assert!(gap >= -1e-12, "m_delta above m at s={s} (delta={delta})");
                    sup = sup.max(gap);
                }
                assert!(sup <= prev_sup + 1e-12, "sup gap not decreasing at delta={delta}");
                prev_sup = sup;
            }
        }
    }

    #[test]
    fn regularized_stays_lipschitz_concave() {
        let md = regularize_mobility(&Mobility::power(0.75), 1e-3).unwrap();
        assert!(validate_m(&md).passes);
        assert!(validate_lsc(&md).passes);
    }

    #[test]
    fn regularize_rejects_large_delta() {
        assert!(matches!(
            regularize_mobility(&ch_mobility(), 0.5),
            Err(PhysicsError::DeltaTooLarge { .. })
        ));
    }

    #[test]
    fn entropy_closed_forms() {
        // m = s, s0 = 1: U(e) = 1
        let u = EntropyDensity::new(Mobility::linear(), 1.0);
        assert!((u.eval(std::f64::consts::E) - 1.0).abs() < 1e-12);
        assert!(u.eval(1.0).abs() < 1e-14);
        assert!(u.deriv(1.0).abs() < 1e-14);
        // quadrature oracle
        let q = integrate(&|r| (std::f64::consts::E - r) / r, 1.0, std::f64::consts::E);
        assert!((q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn entropy_quadratic_symmetry() {
        let u = EntropyDensity::new(ch_mobility(), 0.5);
        for s in [0.1, 0.25, 0.4, 0.49] {
            assert!((u.eval(s) - u.eval(1.0 - s)).abs() < 1e-12);
            // quadrature cross-check
            let q = integrate(&|r| (s - r) / (r * (1.0 - r)), 0.5, s);
            assert!((u.eval(s) - q).abs() < 1e-8, "s={s}");
        }
        assert!(u.eval(0.0).is_finite());
        assert!((u.eval(0.0) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_power_matches_quadrature() {
        let u = EntropyDensity::new(Mobility::power(0.75), 0.5);
        for s in [0.05, 0.3, 1.2, 2.5] {
            let q = integrate(&|r| (s - r) / r.powf(0.75), 0.5, s);
            assert!((u.eval(s) - q).abs() < 1e-8, "s={s}");
        }
        assert!(u.eval(0.0).is_finite());
    }

    #[test]
    fn entropy_second_derivative_inverse_mobility() {
        for mob in [Mobility::linear(), ch_mobility(), Mobility::power(0.75)] {
            let s0 = if mob.ceiling().is_finite() { 0.4 } else { 0.7 };
            let u = EntropyDensity::new(mob.clone(), s0);
            for s in [0.2, 0.35, 0.6] {
                let d = 1e-4;
                let u2 = (u.eval(s + d) - 2.0 * u.eval(s) + u.eval(s - d)) / (d * d);
                assert!((u2 * mob.eval(s) - 1.0).abs() < 1e-5, "{} at {s}", mob.tag());
            }
        }
    }

    #[test]
    fn concavity_chord_bounds() {
        for mob in [Mobility::linear(), ch_mobility(), Mobility::power(0.75)] {
            let s0 = 0.5;
            let m0 = mob.eval(s0);
            for i in 1..200 {
                let s = s0 * i as f64 / 200.0;
                assert!(mob.eval(s) >= m0 * s / s0 - 1e-12, "{} below chord at {s}", mob.tag());
            }
            if mob.ceiling().is_finite() {
                let ceil = mob.ceiling();
                for i in 1..200 {
                    let s = s0 + (ceil - s0) * i as f64 / 200.0;
                    assert!(
                        mob.eval(s) >= m0 * (ceil - s) / (ceil - s0) - 1e-12,
                        "{} below upper chord at {s}",
                        mob.tag()
                    );
                }
            }
        }
    }

    fn ch_spec() -> ProblemSpec {
        ProblemSpec::new(ch_mobility(), FreeEnergy::double_well(1.0), 0.5, 1.0).unwrap()
    }

    #[test]
    fn spec_normalization() {
        let sp = ch_spec();
        assert!((sp.s0() - 0.5).abs() < 1e-15);
        assert!(sp.g(sp.s0()).abs() < 1e-14);
        assert!(sp.g_prime(sp.s0()).abs() < 1e-14);
        assert!(sp.pressure(sp.s0()).abs() < 1e-14);
    }

    #[test]
    fn convex_concave_split() {
        let sp = ch_spec();
        for i in 0..=40 {
            let s = i as f64 / 40.0;
            let total = sp.g_conv(s) + sp.g_conc(s);
            assert!((total - sp.g(s)).abs() < 1e-8, "split mismatch at {s}");
        }
        // second-difference signs
        let d = 1e-3;
        for s in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let d2c = (sp.g_conv(s + d) - 2.0 * sp.g_conv(s) + sp.g_conv(s - d)) / (d * d);
            let d2k = (sp.g_conc(s + d) - 2.0 * sp.g_conc(s) + sp.g_conc(s - d)) / (d * d);
            assert!(d2c >= -1e-6, "convex part curvature {d2c} at {s}");
            assert!(d2k <= 1e-6, "concave part curvature {d2k} at {s}");
        }
    }

    #[test]
    fn pressure_antiderivative_double_well() {
        // m = s(1-s), G = theta s^2(1-s)^2: m G'' integrates to
        // theta (s^2 - 14 s^3/3 + 6 s^4 - 12 s^5 / 5) + const.
        let sp = ch_spec();
        let f = |s: f64| s * s - 14.0 * s.powi(3) / 3.0 + 6.0 * s.powi(4) - 12.0 * s.powi(5) / 5.0;
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            let exact = f(s) - f(0.5);
            assert!((sp.pressure(s) - exact).abs() < 1e-9, "s={s}");
        }
    }

    #[test]
    fn pressure_log_binary_closed_form() {
        let sp = ProblemSpec::new(ch_mobility(), FreeEnergy::log_binary(0.7), 0.5, 1.0).unwrap();
        for s in [0.1, 0.3, 0.8] {
            assert!((sp.pressure(s) - 0.7 * (s - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn pressure_delta_quadratic_energy() {
        // G'' = c constant: P_delta(s) = c int_0^s m_delta, checked for m = s
        // where m_delta = m, against c s^2 / 2.
        let sp = ProblemSpec::new(
            Mobility::linear(),
            FreeEnergy::custom("half-square", |s| 0.5 * s * s, |s| s, |_| 1.0),
            1.0,
            1.0,
        )
        .unwrap();
        for s in [0.5, 1.0, 2.0] {
            let p = sp.pressure_delta(0.1, s).unwrap();
            assert!((p - 0.5 * s * s).abs() < 1e-8, "s={s}");
        }
    }

    #[test]
    fn pressure_delta_converges() {
        let sp = ch_spec();
        let mut prev = f64::INFINITY;
        for k in 1..=5 {
            let delta = 10f64.powi(-k);
            let mut sup = 0.0f64;
            for i in 0..=40 {
                let s = i as f64 / 40.0;
                let pd = sp.pressure_delta(delta, s).unwrap();
                let p = sp.pressure(s) - sp.pressure(0.0);
                sup = sup.max((pd - p).abs());
            }
            assert!(sup <= prev + 1e-10, "delta={delta}: sup {sup} vs {prev}");
            prev = sup;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn validate_g_catalog() {
        let r = validate_g(&ch_mobility(), &FreeEnergy::double_well(1.0));
        assert!(r.passes);
        let r0 = validate_g(&Mobility::power(0.75), &FreeEnergy::zero());
        assert!(r0.passes);
    }

    #[test]
    fn constants_positive_and_zero_for_convex() {
        let sp = ch_spec();
        let c = sp.constants();
        assert!(c.c2 > 0.0 && c.e0 > 0.0 && c.c_ent > 0.0 && c.c_ue > 0.0);
        assert!(c.c_g > 0.0 && c.c_heat > 0.0);
        let flat = ProblemSpec::new(Mobility::power(0.75), FreeEnergy::zero(), 0.5, 1.0).unwrap();
        assert_eq!(flat.constants().c_heat, 0.0);
        assert_eq!(flat.constants().c_g, 0.0);
    }

    #[test]
    fn spec_rejects_bad_mean() {
        assert!(ProblemSpec::new(ch_mobility(), FreeEnergy::zero(), 2.0, 1.0).is_err());
        assert!(ProblemSpec::new(ch_mobility(), FreeEnergy::zero(), -1.0, 1.0).is_err());
    }

    #[test]
    fn spec_rejects_nonconcave_mobility() {
        assert!(ProblemSpec::new(Mobility::constant_one(), FreeEnergy::zero(), 0.5, 1.0).is_err());
        assert!(
            ProblemSpec::new_unvalidated(Mobility::constant_one(), FreeEnergy::zero(), 0.5, 1.0).is_ok()
        );
    }

    #[test]
    fn regularized_spec_roundtrip() {
        let sp = ProblemSpec::new(Mobility::power(0.75), FreeEnergy::zero(), 0.5, 1.0).unwrap();
        let reg = sp.regularized(1e-3).unwrap();
        assert!(reg.m(0.0).abs() < 1e-12);
        assert!(reg.m(0.5) <= sp.m(0.5));
        assert!(reg.m(0.5) >= sp.m(0.5) - 2e-3);
    }

    #[test]
    fn quadrature_handles_endpoint_singularity() {
        // int_0^1 r^(-1/2) dr = 2
        let v = integrate(&|r| r.powf(-0.5), 0.0, 1.0);
        assert!((v - 2.0).abs() < 1e-9, "got {v}");
        let c = integrate_checked(&|r| (1.0 - r).powf(-0.25), 0.0, 1.0).unwrap();
        assert!((c - 4.0 / 3.0).abs() < 1e-9);
    }
}
