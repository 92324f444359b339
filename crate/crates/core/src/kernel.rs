//! Translation-invariant even kernels `K(z)` of fractional type.
//!
//! Four classes are supported:
//!
//! * power law `lambda |z|^{-n-alpha}` (the fractional Laplacian kernel),
//! * bounded measurable `c(z) |z|^{-n-alpha}` with `lambda <= c <= Lambda`,
//! * truncated `c(z) |z|^{-n-alpha}` on `|z| <= R_*` and zero beyond,
//! * decaying: `c(z) |z|^{-n-alpha}` on `|z| <= R_*` and the power tail
//!   `kappa |z|^{-n-theta}` beyond, with `kappa = C_D theta / |S^{n-1}|` so that
//!   every dyadic annulus `r < |z| < 2r` (`r > R_*`) carries mass
//!   `C_D (1 - 2^{-theta}) r^{-theta} <= C_D r^{-theta}`.
//!
//! Coefficient profiles are evaluated on the absolute values of the
//! components, so every kernel is even by construction.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// User-supplied coefficient profile `c(z)`.
pub type CoefficientFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Coefficient `c(z)` multiplying `|z|^{-n-alpha}`.
#[derive(Clone)]
pub enum Coefficient<T> {
    Constant(T),
    Profile(CoefficientFn<T>),
}

impl<T: Real> Coefficient<T> {
    /// Wraps a closure. It is always called with `|z_i|`, never with signed
    /// components.
    pub fn profile(f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Coefficient::Profile(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, z: &[T]) -> T {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Profile(f) => {
                let mut abs = [T::zero(); 3];
                let n = z.len().min(3);
                for (a, v) in abs.iter_mut().zip(z) {
                    *a = v.abs();
                }
                f(&abs[..n])
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

impl<T: fmt::Debug> fmt::Debug for Coefficient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c:?})"),
            Coefficient::Profile(_) => write!(f, "Profile(<fn>)"),
        }
    }
}

/// Tag plus parameters of one kernel class.
#[derive(Clone, Debug)]
pub enum KernelVariant<T> {
    PowerLaw {
        lambda: T,
        alpha: T,
    },
    BoundedMeasurable {
        c: Coefficient<T>,
        lambda: T,
        big_lambda: T,
        alpha: T,
    },
    Truncated {
        c: Coefficient<T>,
        lambda: T,
        big_lambda: T,
        alpha: T,
        r_star: T,
        big_r_star: T,
    },
    Decaying {
        c: Coefficient<T>,
        alpha: T,
        big_r_star: T,
        theta: T,
        c_d: T,
    },
}

/// A validated kernel. Construct through the named constructors.
#[derive(Clone, Debug)]
pub struct KernelSpec<T> {
    variant: KernelVariant<T>,
}

fn positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {v}")))
    }
}

fn fractional_order<T: Real>(alpha: T) -> Result<()> {
    if alpha.is_finite() && alpha > T::zero() && alpha < T::lit(2.0) {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("must lie in (0, 2), got {alpha}")))
    }
}

fn bounds<T: Real>(lambda: T, big_lambda: T) -> Result<()> {
    positive("lambda", lambda)?;
    positive("Lambda", big_lambda)?;
    if big_lambda < lambda {
        return Err(Error::param("Lambda", format!("must be >= lambda = {lambda}, got {big_lambda}")));
    }
    Ok(())
}

/// Surface measure of the unit sphere `S^{n-1}` for `n = 1, 2`.
pub fn sphere_measure<T: Real>(n: usize) -> T {
    match n {
        1 => T::lit(2.0),
        2 => T::lit(2.0) * T::PI(),
        _ => T::lit(4.0) * T::PI(),
    }
}

impl<T: Real> KernelSpec<T> {
    pub fn power_law(lambda: T, alpha: T) -> Result<Self> {
        positive("lambda", lambda)?;
        fractional_order(alpha)?;
        Ok(KernelSpec { variant: KernelVariant::PowerLaw { lambda, alpha } })
    }

    /// Power law whose constant makes the quadratic operator equal to
    /// `(-Laplacian)^{alpha/2}` on `R^dim`.
    pub fn fractional_laplacian(dim: usize, alpha: T) -> Result<Self> {
        fractional_order(alpha)?;
        Self::power_law(fractional_laplacian_constant(dim, alpha)?, alpha)
    }

    pub fn bounded(c: Coefficient<T>, lambda: T, big_lambda: T, alpha: T) -> Result<Self> {
        bounds(lambda, big_lambda)?;
        fractional_order(alpha)?;
        Ok(KernelSpec { variant: KernelVariant::BoundedMeasurable { c, lambda, big_lambda, alpha } })
    }

    pub fn truncated(
        c: Coefficient<T>,
        lambda: T,
        big_lambda: T,
        alpha: T,
        r_star: T,
        big_r_star: T,
    ) -> Result<Self> {
        bounds(lambda, big_lambda)?;
        fractional_order(alpha)?;
        positive("r_star", r_star)?;
        positive("R_star", big_r_star)?;
        if r_star > big_r_star {
            return Err(Error::param(
                "r_star",
                format!("must not exceed R_star = {big_r_star}, got {r_star}"),
            ));
        }
        Ok(KernelSpec {
            variant: KernelVariant::Truncated { c, lambda, big_lambda, alpha, r_star, big_r_star },
        })
    }

    /// Truncated kernel with constant coefficient `lambda` and `r_* = R_*`.
    pub fn truncated_constant(lambda: T, alpha: T, radius: T) -> Result<Self> {
        Self::truncated(Coefficient::Constant(lambda), lambda, lambda, alpha, radius, radius)
    }

    pub fn decaying(c: Coefficient<T>, alpha: T, big_r_star: T, theta: T, c_d: T) -> Result<Self> {
        fractional_order(alpha)?;
        positive("R_star", big_r_star)?;
        positive("theta", theta)?;
        positive("C_D", c_d)?;
        Ok(KernelSpec { variant: KernelVariant::Decaying { c, alpha, big_r_star, theta, c_d } })
    }

    pub fn variant(&self) -> &KernelVariant<T> {
        &self.variant
    }

    pub fn alpha(&self) -> T {
        match &self.variant {
            KernelVariant::PowerLaw { alpha, .. }
            | KernelVariant::BoundedMeasurable { alpha, .. }
            | KernelVariant::Truncated { alpha, .. }
            | KernelVariant::Decaying { alpha, .. } => *alpha,
        }
    }

    /// Radius beyond which the kernel vanishes, if any.
    pub fn support_radius(&self) -> Option<T> {
        match &self.variant {
            KernelVariant::Truncated { big_r_star, .. } => Some(*big_r_star),
            _ => None,
        }
    }

    /// `R_*` for the classes that have one.
    pub fn big_r_star(&self) -> Option<T> {
        match &self.variant {
            KernelVariant::Truncated { big_r_star, .. } | KernelVariant::Decaying { big_r_star, .. } => {
                Some(*big_r_star)
            }
            _ => None,
        }
    }

    pub fn class_name(&self) -> &'static str {
        match &self.variant {
            KernelVariant::PowerLaw { .. } => "power",
            KernelVariant::BoundedMeasurable { .. } => "bounded",
            KernelVariant::Truncated { .. } => "truncated",
            KernelVariant::Decaying { .. } => "decaying",
        }
    }

    /// Tail prefactor `kappa` of the decaying class in dimension `n`.
    pub fn decay_prefactor(&self, n: usize) -> Option<T> {
        match &self.variant {
            KernelVariant::Decaying { theta, c_d, .. } => Some(*c_d * *theta / sphere_measure::<T>(n)),
            _ => None,
        }
    }

    /// Evaluates `K(z)`; `n = z.len()`.
    pub fn eval(&self, z: &[T]) -> Result<T> {
        let r2 = z.iter().fold(T::zero(), |s, &v| s + v * v);
        if r2 == T::zero() {
            return Err(Error::SingularPoint);
        }
        Ok(self.eval_unchecked(z, r2.sqrt()))
    }

    /// `K(z)` for a known `|z| = r > 0`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, z: &[T], r: T) -> T {
        let n = T::from_usize_(z.len());
        match &self.variant {
            KernelVariant::PowerLaw { lambda, alpha } => *lambda * r.powf(-(n + *alpha)),
            KernelVariant::BoundedMeasurable { c, alpha, .. } => c.eval(z) * r.powf(-(n + *alpha)),
            KernelVariant::Truncated { c, alpha, big_r_star, .. } => {
                if r > *big_r_star {
                    T::zero()
                } else {
                    c.eval(z) * r.powf(-(n + *alpha))
                }
            }
            KernelVariant::Decaying { c, alpha, big_r_star, theta, c_d } => {
                if r <= *big_r_star {
                    c.eval(z) * r.powf(-(n + *alpha))
                } else {
                    let kappa = *c_d * *theta / sphere_measure::<T>(z.len());
                    kappa * r.powf(-(n + *theta))
                }
            }
        }
    }

    /// Quadrature nodes `(r_i, w_i)` for the ray integral
    /// `int_a^inf G(r) K(r omega) r^{n-1} dr ~ sum_i w_i G(r_i)`.
    ///
    /// Uses the substitution `t = (a / r)^alpha` with a midpoint rule in `t`,
    /// which is exact for `G` and `c` constant. The decaying tail is mapped
    /// with exponent `theta` instead.
    pub fn ray_nodes(&self, a: T, omega: &[T], nodes: usize) -> Vec<(T, T)> {
        let n = omega.len();
        let mut out = Vec::with_capacity(2 * nodes);
        let mut z = [T::zero(); 3];
        let mut push_segment = |lo: T, hi: Option<T>, exponent: T, out: &mut Vec<(T, T)>| {
            // t ranges over [t_hi, 1] where t_hi = (lo/hi)^exponent (0 for hi = inf).
            let t_end = match hi {
                Some(h) => (lo / h).powf(exponent),
                None => T::zero(),
            };
            let dt = (T::one() - t_end) / T::from_usize_(nodes);
            let scale = dt / (exponent * lo.powf(exponent));
            let dim = T::from_usize_(n);
            for i in 0..nodes {
                let t = t_end + (T::from_usize_(i) + T::lit(0.5)) * dt;
                let r = lo * t.powf(-T::one() / exponent);
                for k in 0..n {
                    z[k] = omega[k] * r;
                }
                let k_val = self.eval_unchecked(&z[..n], r);
                out.push((r, k_val * r.powf(dim + exponent) * scale));
            }
        };
        match &self.variant {
            KernelVariant::PowerLaw { alpha, .. } | KernelVariant::BoundedMeasurable { alpha, .. } => {
                push_segment(a, None, *alpha, &mut out);
            }
            KernelVariant::Truncated { alpha, big_r_star, .. } => {
                if a < *big_r_star {
                    push_segment(a, Some(*big_r_star), *alpha, &mut out);
                }
            }
            KernelVariant::Decaying { alpha, big_r_star, theta, .. } => {
                if a < *big_r_star {
                    push_segment(a, Some(*big_r_star), *alpha, &mut out);
                }
                push_segment(a.max(*big_r_star), None, *theta, &mut out);
            }
        }
        out
    }

    /// `int_a^inf K(r omega) r^{n-1} dr` in closed form where available.
    pub fn ray_mass(&self, a: T, omega: &[T]) -> T {
        match &self.variant {
            KernelVariant::PowerLaw { lambda, alpha } => *lambda * a.powf(-*alpha) / *alpha,
            KernelVariant::Truncated { c: Coefficient::Constant(c), alpha, big_r_star, .. } => {
                if a >= *big_r_star {
                    T::zero()
                } else {
                    *c * (a.powf(-*alpha) - big_r_star.powf(-*alpha)) / *alpha
                }
            }
            KernelVariant::BoundedMeasurable { c: Coefficient::Constant(c), alpha, .. } => {
                *c * a.powf(-*alpha) / *alpha
            }
            _ => self.ray_nodes(a, omega, 256).iter().map(|&(_, w)| w).sum(),
        }
    }
}

/// Evaluates `K(z)` in dimension `n = z.len()`.
/// `c(n, s) = 4^s Gamma(n/2 + s) / (pi^{n/2} |Gamma(-s)|)` with `s = alpha / 2`.
pub fn fractional_laplacian_constant<T: Real>(dim: usize, alpha: T) -> Result<T> {
    if dim != 1 && dim != 2 {
        return Err(Error::param("dim", "must be 1 or 2"));
    }
    fractional_order(alpha)?;
    let s = alpha.to_f64_() / 2.0;
    let n = dim as f64;
    let c = 4f64.powf(s) * libm::tgamma(n / 2.0 + s) / (std::f64::consts::PI.powf(n / 2.0) * libm::tgamma(-s).abs());
    Ok(T::lit(c))
}

pub fn eval_kernel<T: Real>(k: &KernelSpec<T>, z: &[T]) -> Result<T> {
    k.eval(z)
}

/// Radial nodes per decade used by [`tail_mass`].
const TAIL_NODES_PER_DECADE: f64 = 256.0;
/// Angular nodes used by [`tail_mass`] in two dimensions.
const TAIL_ANGULAR_NODES: usize = 256;

/// Mass of a decaying kernel on the annulus `r < |z| < 2r`, by midpoint
/// quadrature on a polar mesh (log-spaced in radius).
pub fn tail_mass<T: Real>(k: &KernelSpec<T>, r: T, n: usize) -> Result<T> {
    let big_r_star = match k.variant() {
        KernelVariant::Decaying { big_r_star, .. } => *big_r_star,
        _ => {
            return Err(Error::Precondition(format!(
                "tail_mass needs a decaying kernel, got {}",
                k.class_name()
            )))
        }
    };
    if !(r > big_r_star) {
        return Err(Error::Precondition(format!("tail_mass needs r > R_star = {big_r_star}, got r = {r}")));
    }
    if !(1..=2).contains(&n) {
        return Err(Error::param("n", "dimension must be 1 or 2"));
    }
    let radial = (TAIL_NODES_PER_DECADE * 2f64.log10()).ceil() as usize;
    let ln2 = T::LN_2();
    let dlog = ln2 / T::from_usize_(radial);
    let mut masses = Vec::with_capacity(radial);
    for i in 0..radial {
        let rho = r * ((T::from_usize_(i) + T::lit(0.5)) * dlog).exp();
        let drho = rho * dlog;
        let shell = if n == 1 {
            (k.eval_unchecked(&[rho], rho) + k.eval_unchecked(&[-rho], rho)) * drho
        } else {
            let dth = T::lit(2.0) * T::PI() / T::from_usize_(TAIL_ANGULAR_NODES);
            let mut s = T::zero();
            for j in 0..TAIL_ANGULAR_NODES {
                let th = (T::from_usize_(j) + T::lit(0.5)) * dth;
                let z = [rho * th.cos(), rho * th.sin()];
                s = s + k.eval_unchecked(&z, rho);
            }
            s * rho * drho * dth
        };
        masses.push(shell);
    }
    Ok(crate::scalar::pairwise_sum(&masses))
}

/// Outcome of one sampled structural check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Per-invariant results of [`check_kernel_class`].
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCheckReport {
    pub items: Vec<CheckItem>,
}

impl KernelCheckReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|c| c.name == name)
    }
}

/// Validates the class invariants of `k` on a deterministic sample of
/// points in dimension `n`. Never fails; failures are reported per item.
pub fn check_kernel_class<T: Real>(k: &KernelSpec<T>, n: usize, samples: usize) -> KernelCheckReport {
    let samples = samples.max(1);
    let n = n.clamp(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b65_726e_656c);
    let scale = k.big_r_star().unwrap_or(T::one()).to_f64_();
    let mut points: Vec<Vec<T>> = Vec::with_capacity(samples);
    for _ in 0..samples {
        // log-uniform radius in [1e-3, 4] * scale, uniform direction
        let r = scale * 10f64.powf(rng.gen_range(-3.0..4f64.log10()));
        let dir: Vec<f64> = if n == 1 {
            vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }]
        } else {
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            vec![th.cos(), th.sin()]
        };
        points.push(dir.iter().map(|d| T::lit(d * r)).collect());
    }

    let mut items = Vec::new();
    let mut even = true;
    let mut nonneg = true;
    for z in &points {
        let neg: Vec<T> = z.iter().map(|v| -*v).collect();
        let a = k.eval(z).unwrap_or(T::nan());
        let b = k.eval(&neg).unwrap_or(T::nan());
        if a.to_f64_().to_bits() != b.to_f64_().to_bits() {
            even = false;
        }
        if !(a >= T::zero()) {
            nonneg = false;
        }
    }
    items.push(CheckItem { name: "evenness", passed: even, detail: String::new() });
    items.push(CheckItem { name: "nonnegativity", passed: nonneg, detail: String::new() });

    let nn = T::from_usize_(n);
    let radius = |z: &[T]| z.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
    let sandwich = |lo: T, hi: T, limit: Option<T>| -> (bool, String) {
        let mut worst = String::new();
        let ok = points.iter().all(|z| {
            let r = radius(z);
            if let Some(l) = limit {
                if r > l {
                    return true;
                }
            }
            let kz = k.eval_unchecked(z, r);
            let base = r.powf(-(nn + k.alpha()));
            let tol = T::lit(1e-12) * base * hi;
            let pass = kz >= lo * base - tol && kz <= hi * base + tol;
            if !pass && worst.is_empty() {
                worst = format!("|z| = {r}: K = {kz}");
            }
            pass
        });
        (ok, worst)
    };

    match k.variant() {
        KernelVariant::PowerLaw { lambda, .. } => {
            let (ok, detail) = sandwich(*lambda, *lambda, None);
            items.push(CheckItem { name: "closed_form", passed: ok, detail });
        }
        KernelVariant::BoundedMeasurable { lambda, big_lambda, .. } => {
            let (ok, detail) = sandwich(*lambda, *big_lambda, None);
            items.push(CheckItem { name: "bounds", passed: ok, detail });
        }
        KernelVariant::Truncated { lambda, big_lambda, r_star, big_r_star, .. } => {
            let (ok, detail) = sandwich(*lambda, *big_lambda, Some(*r_star));
            items.push(CheckItem { name: "comparability", passed: ok, detail });
            let outside_zero = points.iter().all(|z| {
                let r = radius(z);
                r <= *big_r_star || k.eval_unchecked(z, r) == T::zero()
            });
            items.push(CheckItem { name: "truncation", passed: outside_zero, detail: String::new() });
        }
        KernelVariant::Decaying { big_r_star, theta, c_d, .. } => {
            let mut ok = true;
            let mut detail = String::new();
            for j in 0..samples.min(8) {
                let r = *big_r_star * T::lit(1.5) * T::lit(2f64.powi(j as i32));
                match tail_mass(k, r, n) {
                    Ok(m) => {
                        let bound = *c_d * r.powf(-*theta);
                        if m > bound {
                            ok = false;
                            detail = format!("r = {r}: mass {m} > bound {bound}");
                        }
                    }
                    Err(e) => {
                        ok = false;
                        detail = e.to_string();
                    }
                }
            }
            items.push(CheckItem { name: "tail_decay", passed: ok, detail });
        }
    }
    KernelCheckReport { items }
}
