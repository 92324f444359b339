//! Explicit gradient flow `u <- u - tau (T[u] - f(u))` for bounded solutions,
//! 1D layers, 2D stable solutions and Liouville-type probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{sample_profile, FarField, Field, Grid, Profile};
use crate::nonlinearity::ReactionSpec;
use crate::operator::Interaction;
use crate::scalar::{max_abs, Real};

/// Sup-norm level treated as blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;
/// Maximum number of automatic step halvings.
pub const MAX_HALVINGS: usize = 6;
/// Default residual target of the Liouville probes, well below the constancy threshold.
pub const LIOUVILLE_TOL: f64 = 1e-9;
/// Constancy threshold `sup |u - mean(u)|`.
pub const CONSTANCY_TOL: f64 = 1e-6;
/// Window (iterations) of the drift detector.
pub const DRIFT_WINDOW: usize = 500;
/// Iterations between refreshes of the state-dependent step cap.
const CAP_REFRESH: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams<T> {
    /// Pseudo-time step; `None` means `0.5 h^alpha`.
    pub tau: Option<T>,
    pub max_iter: usize,
    /// Sup-norm residual target; `None` means `1e-6 max |f'|` on `[-1, 1]`.
    pub tol: Option<T>,
    /// Keeps `u` in `[-1 - d, 1 + d]`.
    pub clamp: Option<T>,
    pub seed: u64,
    /// Record every `log_every`-th iteration (the first and last are always kept).
    pub log_every: usize,
}

impl<T: Real> Default for FlowParams<T> {
    fn default() -> Self {
        FlowParams { tau: None, max_iter: 200_000, tol: None, clamp: None, seed: 0, log_every: 10 }
    }
}

impl<T: Real> FlowParams<T> {
    pub fn default_tau(grid: &Grid<T>, alpha: T) -> T {
        T::lit(0.5) * grid.h().powf(alpha)
    }

    pub fn default_tol(reaction: &ReactionSpec<T>) -> T {
        let s = reaction.max_abs_df(T::one());
        if s > T::zero() {
            T::lit(1e-6) * s
        } else {
            T::lit(1e-6)
        }
    }

    /// Resolves the defaults against a concrete problem.
    pub fn resolve(&self, grid: &Grid<T>, alpha: T, reaction: &ReactionSpec<T>) -> (T, T) {
        (self.tau.unwrap_or_else(|| Self::default_tau(grid, alpha)), self.tol.unwrap_or_else(|| Self::default_tol(reaction)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divergence {
    /// Sup norm or residual above the threshold.
    BlowUp,
    /// Residual stalled while the mean drifts steadily away.
    UnboundedDrift,
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowVerdict {
    Converged,
    MaxIterations,
    Diverged(Divergence),
}

impl FlowVerdict {
    pub fn describe(&self) -> &'static str {
        match self {
            FlowVerdict::Converged => "converged",
            FlowVerdict::MaxIterations => "max_iter reached",
            FlowVerdict::Diverged(_) => "no bounded solution found (divergence)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowLogEntry<T> {
    pub iter: usize,
    pub residual: T,
    pub sup_change: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowReport<T> {
    pub verdict: FlowVerdict,
    pub iterations: usize,
    pub final_residual: T,
    /// Step actually used at the end.
    pub tau: T,
    /// Step requested before the stability cap.
    pub tau_requested: T,
    pub tol: T,
    pub halvings: usize,
    /// Iterations (after the first 10) at which the residual increased.
    pub monotonicity_violations: Vec<usize>,
    pub log: Vec<FlowLogEntry<T>>,
}

impl<T: Real> FlowReport<T> {
    pub fn converged(&self) -> bool {
        self.verdict == FlowVerdict::Converged
    }
}

/// Runs the flow from `u0`, holding its far-field closure fixed.
pub fn relax<T: Real, I: Interaction<T> + ?Sized>(
    op: &I,
    u0: &Field<T>,
    reaction: &ReactionSpec<T>,
    p: &FlowParams<T>,
) -> Result<(Field<T>, FlowReport<T>)> {
    let grid = *op.grid();
    if !grid.same_as(u0.grid()) {
        return Err(Error::GridMismatch("initial data on a different grid".into()));
    }
    if p.max_iter == 0 {
        return Err(Error::param("max_iter", "must be positive"));
    }
    let (tau_requested, tol) = p.resolve(&grid, op.order(), reaction);
    if !(tau_requested > T::zero()) || !(tol > T::zero()) {
        return Err(Error::param("tau/tol", "must be positive"));
    }
    let sup0 = u0.sup_norm().max(T::one());
    let df_bound = reaction.max_abs_df(sup0);
    let cap = |u: &Field<T>| -> Result<T> { Ok(T::lit(1.9) / (op.jacobian_bound(u)? + df_bound)) };
    let mut tau = tau_requested.min(cap(u0)?);
    let threshold = T::lit(DIVERGENCE_THRESHOLD);
    let log_every = p.log_every.max(1);

    let mut u = u0.clone();
    let mut log = Vec::new();
    let mut violations = Vec::new();
    let mut halvings = 0;
    let mut prev = T::infinity();
    let mut window: Option<(usize, T, T)> = None;
    let mut verdict = FlowVerdict::MaxIterations;
    let mut residual = T::infinity();
    let mut iterations = 0;

    for it in 0..p.max_iter {
        iterations = it;
        let t = op.apply(&u)?;
        let g: Vec<T> = t.iter().zip(u.values()).map(|(&a, &v)| a - reaction.f(v)).collect();
        residual = max_abs(&g);
        let sup = u.sup_norm();
        if !residual.is_finite() || !sup.is_finite() {
            verdict = FlowVerdict::Diverged(Divergence::NonFinite);
            log.push(FlowLogEntry { iter: it, residual, sup_change: T::zero() });
            break;
        }
        if residual > threshold || sup > threshold {
            verdict = FlowVerdict::Diverged(Divergence::BlowUp);
            log.push(FlowLogEntry { iter: it, residual, sup_change: T::zero() });
            break;
        }
        if residual <= tol {
            verdict = FlowVerdict::Converged;
            log.push(FlowLogEntry { iter: it, residual, sup_change: T::zero() });
            break;
        }
        if it > 10 && residual > prev * (T::one() + T::lit(1e-6)) {
            violations.push(it);
            if halvings < MAX_HALVINGS {
                tau = tau * T::lit(0.5);
                halvings += 1;
            }
        }
        prev = residual;
        if it > 0 && it % CAP_REFRESH == 0 {
            let halved = tau_requested * T::lit(0.5).powi(halvings as i32);
            tau = halved.min(cap(&u)?);
        }

        let mean = u.mean();
        match window {
            None => window = Some((it, residual, mean)),
            Some((start, r0, m0)) if it - start >= DRIFT_WINDOW => {
                let span = T::from_usize_(it - start);
                let stalled = residual >= T::lit(0.999) * r0;
                let drifting = (mean - m0).abs() >= T::lit(0.5) * tau * span * residual;
                let large = sup >= T::lit(10.0) * sup0;
                if stalled && drifting && large {
                    verdict = FlowVerdict::Diverged(Divergence::UnboundedDrift);
                    log.push(FlowLogEntry { iter: it, residual, sup_change: T::zero() });
                    break;
                }
                window = Some((it, residual, mean));
            }
            _ => {}
        }

        let mut change = T::zero();
        let next: Vec<T> = u
            .values()
            .iter()
            .zip(&g)
            .map(|(&v, &gi)| {
                let mut w = v - tau * gi;
                if let Some(d) = p.clamp {
                    w = w.max(-T::one() - d).min(T::one() + d);
                }
                change = change.max((w - v).abs());
                w
            })
            .collect();
        if !change.is_finite() || next.iter().any(|v| !v.is_finite()) {
            verdict = FlowVerdict::Diverged(Divergence::NonFinite);
            log.push(FlowLogEntry { iter: it, residual, sup_change: change });
            break;
        }
        u = u.with_values(next)?;
        if it % log_every == 0 {
            log.push(FlowLogEntry { iter: it, residual, sup_change: change });
        }
    }
    if verdict == FlowVerdict::MaxIterations {
        iterations = p.max_iter;
        log.push(FlowLogEntry { iter: p.max_iter, residual, sup_change: T::zero() });
    }
    let report = FlowReport {
        verdict,
        iterations,
        final_residual: residual,
        tau,
        tau_requested,
        tol,
        halvings,
        monotonicity_violations: violations,
        log,
    };
    Ok((u, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSolution<T> {
    pub field: Field<T>,
    pub report: FlowReport<T>,
    /// All forward differences `>= -1e-10`.
    pub monotone: bool,
    /// `|u(+-L) -+ 1| <= 0.05`.
    pub limits_ok: bool,
    pub residual_ok: bool,
}

/// Checks the layer postconditions of a 1D field.
pub fn layer_checks<T: Real>(u: &Field<T>) -> (bool, bool) {
    let v = u.values();
    let monotone = v.windows(2).all(|w| w[1] - w[0] >= -T::lit(1e-10));
    let last = v.len() - 1;
    let limits_ok = (v[0] + T::one()).abs() <= T::lit(0.05) && (v[last] - T::one()).abs() <= T::lit(0.05);
    (monotone, limits_ok)
}

/// 1D layer from `tanh(x)` initial data.
pub fn solve_layer_1d<T: Real, I: Interaction<T> + ?Sized>(
    op: &I,
    reaction: &ReactionSpec<T>,
    p: &FlowParams<T>,
) -> Result<LayerSolution<T>> {
    let init = sample_profile(op.grid(), &Profile::TanhLayer { width: T::one() })?;
    solve_layer_1d_from(op, reaction, &init, p)
}

/// 1D layer from the given monotone initial data (with a layer closure).
pub fn solve_layer_1d_from<T: Real, I: Interaction<T> + ?Sized>(
    op: &I,
    reaction: &ReactionSpec<T>,
    init: &Field<T>,
    p: &FlowParams<T>,
) -> Result<LayerSolution<T>> {
    if op.grid().dim() != 1 {
        return Err(Error::Precondition("layer solver is one-dimensional".into()));
    }
    if !reaction.has_unit_wells() {
        return Err(Error::Precondition(format!("reaction `{}` does not have F(-1) = F(1) = 0", reaction.name())));
    }
    if !matches!(init.far_field(), FarField::LayerSign { .. }) {
        return Err(Error::Precondition("layer initial data needs the layer far field".into()));
    }
    let (field, report) = relax(op, init, reaction, p)?;
    let (monotone, limits_ok) = layer_checks(&field);
    let residual_ok = report.final_residual <= report.tol;
    Ok(LayerSolution { field, report, monotone, limits_ok, residual_ok })
}

/// Step initial data `sign(x)` (0 at the origin) with the layer closure.
pub fn step_layer<T: Real>(grid: &Grid<T>) -> Field<T> {
    Field::from_fn(*grid, FarField::layer(grid.dim()), |p| {
        let s = p[grid.dim() - 1];
        if s > T::zero() {
            T::one()
        } else if s < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    })
}

/// 2D stable solution from a layer-type initial profile.
pub fn solve_2d<T: Real, I: Interaction<T> + ?Sized>(
    op: &I,
    reaction: &ReactionSpec<T>,
    init: &Profile<T>,
    p: &FlowParams<T>,
) -> Result<(Field<T>, FlowReport<T>)> {
    if op.grid().dim() != 2 {
        return Err(Error::Precondition("solve_2d needs a two-dimensional grid".into()));
    }
    match init {
        Profile::TanhLayer { .. } | Profile::TiltedLayer { .. } | Profile::PerturbedLayer { .. } => {}
        _ => return Err(Error::Precondition("2D initial data must be an extruded, tilted or perturbed layer".into())),
    }
    let u0 = sample_profile(op.grid(), init)?;
    relax(op, &u0, reaction, p)
}

/// Which hypothesis of the Liouville statement the reaction satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignCondition {
    /// `f >= 0`.
    NonNegative,
    /// `t f(t) <= 0`.
    Restoring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiouvilleVerdict {
    ConvergedToConstant,
    Diverged,
    /// Counterexample flag.
    ConvergedNonconstant,
    /// Neither converged nor diverged within `max_iter`.
    Inconclusive,
}

impl LiouvilleVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            LiouvilleVerdict::ConvergedToConstant => "converged-to-constant",
            LiouvilleVerdict::Diverged => "diverged",
            LiouvilleVerdict::ConvergedNonconstant => "converged-nonconstant",
            LiouvilleVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiouvilleRun<T> {
    pub seed: u64,
    /// `constant` or `smooth`.
    pub initial: &'static str,
    pub verdict: LiouvilleVerdict,
    /// `sup |u - mean(u)|` of the final state.
    pub deviation: T,
    pub mean: T,
    pub final_residual: T,
    pub iterations: usize,
    pub initial_field: Field<T>,
    pub final_field: Field<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiouvilleReport<T> {
    pub condition: SignCondition,
    pub runs: Vec<LiouvilleRun<T>>,
}

/// Sign condition of `f`, sampled on `[-10, 10]`.
pub fn sign_condition<T: Real>(reaction: &ReactionSpec<T>) -> Result<SignCondition> {
    let samples: Vec<T> = (0..=2000).map(|i| T::lit(-10.0 + 0.01 * i as f64)).collect();
    if samples.iter().all(|&t| reaction.f(t) >= T::zero()) {
        return Ok(SignCondition::NonNegative);
    }
    if samples.iter().all(|&t| t * reaction.f(t) <= T::zero()) {
        return Ok(SignCondition::Restoring);
    }
    Err(Error::Precondition(format!(
        "reaction `{}` satisfies neither f >= 0 nor t f(t) <= 0",
        reaction.name()
    )))
}

/// A zero of `f` in `[-10, 10]`, if any (`Some(None)`-like: `f == 0` is
/// reported as `Ok(None)` via [`Zero::Everywhere`]).
#[derive(Clone, Copy, Debug, PartialEq)]
enum Zero<T> {
    Everywhere,
    At(T),
    Nowhere,
}

fn reaction_zero<T: Real>(reaction: &ReactionSpec<T>) -> Zero<T> {
    let ts: Vec<T> = (0..=2000).map(|i| T::lit(-10.0 + 0.01 * i as f64)).collect();
    if ts.iter().all(|&t| reaction.f(t) == T::zero()) {
        return Zero::Everywhere;
    }
    if reaction.f(T::zero()) == T::zero() {
        return Zero::At(T::zero());
    }
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if reaction.f(a) == T::zero() {
            return Zero::At(a);
        }
        if reaction.f(a) * reaction.f(b) < T::zero() {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..100 {
                let mid = (lo + hi) * T::lit(0.5);
                if reaction.f(lo) * reaction.f(mid) <= T::zero() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Zero::At((lo + hi) * T::lit(0.5));
        }
    }
    Zero::Nowhere
}

/// Seeded bounded initial data: even seeds give constants in `[-1, 1]`,
/// odd seeds a smooth random field with values in `[-1, 1]`.
pub fn probe_initial_data<T: Real>(grid: &Grid<T>, seed: u64) -> (&'static str, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c69_6f75);
    if seed.is_multiple_of(2) {
        let c = T::lit(rng.gen_range(-1.0..=1.0));
        return ("constant", vec![c; grid.len()]);
    }
    let l = grid.half_width();
    let modes: Vec<(T, T, T, T)> = (0..3)
        .map(|_| {
            (
                T::lit(rng.gen_range(-1.0..=1.0) / 3.0),
                T::lit(rng.gen_range(0.5..2.0)),
                T::lit(rng.gen_range(0.5..2.0)),
                T::lit(rng.gen_range(0.0..std::f64::consts::TAU)),
            )
        })
        .collect();
    let values = (0..grid.len())
        .map(|i| {
            let p = grid.coord(i);
            modes
                .iter()
                .map(|&(a, k0, k1, ph)| a * (T::PI() * (k0 * p[0] + k1 * p[1]) / l + ph).sin())
                .fold(T::zero(), |s, v| s + v)
        })
        .collect();
    ("smooth", values)
}

/// Runs the flow from several seeded bounded initial data and classifies
/// the outcome of each run.
///
/// The far field is pinned at a zero of `f` (at the mean of the initial data
/// when `f` vanishes identically) and follows the box values when `f` has no
/// zero. Without an explicit `tol` the flow runs to [`LIOUVILLE_TOL`].
pub fn liouville_probe<T: Real, I: Interaction<T> + ?Sized>(
    op: &I,
    reaction: &ReactionSpec<T>,
    p: &FlowParams<T>,
    seeds: &[u64],
) -> Result<LiouvilleReport<T>> {
    let condition = sign_condition(reaction)?;
    let zero = reaction_zero(reaction);
    let grid = *op.grid();
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (kind, values) = probe_initial_data(&grid, seed);
        let provisional = Field::new(grid, values, FarField::Clamped)?;
        let far = match zero {
            Zero::Everywhere => FarField::ConstantValue(provisional.mean()),
            Zero::At(c) => FarField::ConstantValue(c),
            Zero::Nowhere => FarField::Clamped,
        };
        let u0 = provisional.with_far_field(far);
        let tol = Some(p.tol.unwrap_or(T::lit(LIOUVILLE_TOL)));
        let (u, report) = relax(op, &u0, reaction, &FlowParams { seed, tol, ..*p })?;
        let mean = u.mean();
        let deviation = u.values().iter().fold(T::zero(), |m, &v| m.max((v - mean).abs()));
        let verdict = match report.verdict {
            FlowVerdict::Diverged(_) => LiouvilleVerdict::Diverged,
            FlowVerdict::MaxIterations => LiouvilleVerdict::Inconclusive,
            FlowVerdict::Converged if deviation <= T::lit(CONSTANCY_TOL) => LiouvilleVerdict::ConvergedToConstant,
            FlowVerdict::Converged => LiouvilleVerdict::ConvergedNonconstant,
        };
        runs.push(LiouvilleRun {
            seed,
            initial: kind,
            verdict,
            deviation,
            mean,
            final_residual: report.final_residual,
            iterations: report.iterations,
            initial_field: u0,
            final_field: u,
        });
    }
    Ok(LiouvilleReport { condition, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_conditions() {
        assert_eq!(sign_condition(&ReactionSpec::<f64>::Constant { value: 1.0 }).unwrap(), SignCondition::NonNegative);
        assert_eq!(sign_condition(&ReactionSpec::<f64>::Cubic { coeff: -1.0 }).unwrap(), SignCondition::Restoring);
        assert!(sign_condition(&ReactionSpec::<f64>::DoubleWell).is_err());
    }

    #[test]
    fn zeros_of_reactions() {
        assert_eq!(reaction_zero(&ReactionSpec::<f64>::Constant { value: 0.0 }), Zero::Everywhere);
        assert_eq!(reaction_zero(&ReactionSpec::<f64>::Constant { value: 1.0 }), Zero::Nowhere);
        assert_eq!(reaction_zero(&ReactionSpec::<f64>::Cubic { coeff: -1.0 }), Zero::At(0.0));
        match reaction_zero(&ReactionSpec::<f64>::Linear { slope: -2.0 }) {
            Zero::At(z) => assert_eq!(z, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_tolerance_scales_with_reaction() {
        assert!((FlowParams::default_tol(&ReactionSpec::<f64>::DoubleWell) - 2e-6).abs() < 1e-18);
        assert_eq!(FlowParams::default_tol(&ReactionSpec::<f64>::Constant { value: 1.0 }), 1e-6);
    }

    #[test]
    fn probe_data_is_bounded_and_seeded() {
        let g = Grid::new(2, 3.0_f64, 0.5).unwrap();
        let (k1, a) = probe_initial_data(&g, 3);
        let (_, b) = probe_initial_data(&g, 3);
        assert_eq!(k1, "smooth");
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(probe_initial_data(&g, 4).0, "constant");
    }
}
