//! Model nonlinearities `Phi` and reaction terms `(F, f = F')`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which of the three model `Phi` is in use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhiKind<T> {
    /// `Phi(t) = t^2 / 2`, the linear operator.
    Quadratic,
    /// `Phi(t) = |t|^p / p`, fractional p-Laplacian type.
    Power { p: T },
    /// `Phi(t) = sqrt(1 + t^2) - 1`, fractional minimal graph type.
    Curvature,
}

/// Growth exponent `beta` and constant `C` with
/// `Phi'' <= C t^{beta-2}`, `Phi' <= C t^{beta-1}`, `Phi <= C t^beta` on `t > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Growth<T> {
    pub beta: T,
    pub c_growth: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiSpec<T> {
    kind: PhiKind<T>,
    growth: Growth<T>,
    // integer exponent p - 2, for the `powi` fast path
    int_exp: Option<i32>,
}

impl<T: Real> PhiSpec<T> {
    pub fn quadratic() -> Self {
        PhiSpec { kind: PhiKind::Quadratic, growth: Growth { beta: T::lit(2.0), c_growth: T::one() }, int_exp: None }
    }

    pub fn power(p: T) -> Result<Self> {
        if !(p.is_finite() && p >= T::lit(2.0)) {
            return Err(Error::param("p", format!("must be >= 2, got {p}")));
        }
        let q = p - T::lit(2.0);
        let int_exp = (q == q.round() && q <= T::lit(16.0)).then(|| q.to_i32()).flatten();
        Ok(PhiSpec {
            kind: PhiKind::Power { p },
            growth: Growth { beta: p, c_growth: T::one().max(p - T::one()) },
            int_exp,
        })
    }

    pub fn curvature() -> Self {
        PhiSpec { kind: PhiKind::Curvature, growth: Growth { beta: T::lit(2.0), c_growth: T::one() }, int_exp: None }
    }

    pub fn kind(&self) -> PhiKind<T> {
        self.kind
    }

    pub fn growth(&self) -> Growth<T> {
        self.growth
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PhiKind::Quadratic => "quadratic",
            PhiKind::Power { .. } => "power",
            PhiKind::Curvature => "curvature",
        }
    }

    #[inline]
    fn abs_pow_q(&self, t: T, q: T) -> T {
        match self.int_exp {
            Some(n) => t.abs().powi(n),
            None => t.abs().powf(q),
        }
    }

    #[inline]
    pub fn phi(&self, t: T) -> T {
        match self.kind {
            PhiKind::Quadratic => T::lit(0.5) * t * t,
            PhiKind::Power { p } => self.abs_pow_q(t, p - T::lit(2.0)) * t * t / p,
            // t^2 / (sqrt(1+t^2) + 1) avoids cancellation near 0
            PhiKind::Curvature => t * t / ((T::one() + t * t).sqrt() + T::one()),
        }
    }

    #[inline]
    pub fn dphi(&self, t: T) -> T {
        match self.kind {
            PhiKind::Quadratic => t,
            PhiKind::Power { p } => self.abs_pow_q(t, p - T::lit(2.0)) * t,
            PhiKind::Curvature => t / (T::one() + t * t).sqrt(),
        }
    }

    /// `Phi''(t)`. For `Power` with `p > 2` the value at 0 is the limit 0;
    /// for `p = 2` it is 1.
    #[inline]
    pub fn ddphi(&self, t: T) -> T {
        match self.kind {
            PhiKind::Quadratic => T::one(),
            PhiKind::Power { p } => (p - T::one()) * self.abs_pow_q(t, p - T::lit(2.0)),
            PhiKind::Curvature => {
                let s = T::one() + t * t;
                T::one() / (s * s.sqrt())
            }
        }
    }

    /// Upper bound of `Phi''` on `|t| <= osc`, used for step-size control.
    pub fn ddphi_bound(&self, osc: T) -> T {
        match self.kind {
            PhiKind::Quadratic | PhiKind::Curvature => T::one(),
            PhiKind::Power { .. } => self.ddphi(osc.abs()),
        }
    }
}

/// Growth exponent `beta` of the model nonlinearity.
pub fn beta_of<T: Real>(spec: &PhiSpec<T>) -> T {
    match spec.kind {
        PhiKind::Quadratic | PhiKind::Curvature => T::lit(2.0),
        PhiKind::Power { p } => p,
    }
}

/// Checks the three growth inequalities on `samples` points of `(0, t_max]`.
pub fn growth_certificate<T: Real>(spec: &PhiSpec<T>, t_max: T, samples: usize) -> [bool; 3] {
    let Growth { beta, c_growth } = spec.growth;
    let mut ok = [true; 3];
    let slack = T::one() + T::lit(1e-12);
    for i in 1..=samples {
        let t = t_max * T::from_usize_(i) / T::from_usize_(samples);
        ok[0] &= spec.ddphi(t) <= c_growth * t.powf(beta - T::lit(2.0)) * slack;
        ok[1] &= spec.dphi(t) <= c_growth * t.powf(beta - T::one()) * slack;
        ok[2] &= spec.phi(t) <= c_growth * t.powf(beta) * slack;
    }
    ok
}

/// Reaction pair `(F, f = F')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReactionSpec<T> {
    /// `F = -(1 - t^2)^2 / 4`, `f = t - t^3`.
    DoubleWell,
    Linear { slope: T },
    Constant { value: T },
    /// `f = sin(pi t) / pi`; the arctan profile is an exact layer for the
    /// half-Laplacian with this reaction.
    SinePN,
    /// `f = coeff t^3`.
    Cubic { coeff: T },
}

impl<T: Real> ReactionSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            ReactionSpec::DoubleWell => "doublewell",
            ReactionSpec::Linear { .. } => "linear",
            ReactionSpec::Constant { .. } => "constant",
            ReactionSpec::SinePN => "sine_pn",
            ReactionSpec::Cubic { .. } => "cubic",
        }
    }

    #[inline]
    pub fn f(&self, t: T) -> T {
        match *self {
            ReactionSpec::DoubleWell => t - t * t * t,
            ReactionSpec::Linear { slope } => slope * t,
            ReactionSpec::Constant { value } => value,
            ReactionSpec::SinePN => (T::PI() * t).sin() / T::PI(),
            ReactionSpec::Cubic { coeff } => coeff * t * t * t,
        }
    }

    #[inline]
    pub fn big_f(&self, t: T) -> T {
        match *self {
            ReactionSpec::DoubleWell => {
                let a = T::one() - t * t;
                -T::lit(0.25) * a * a
            }
            ReactionSpec::Linear { slope } => T::lit(0.5) * slope * t * t,
            ReactionSpec::Constant { value } => value * t,
            ReactionSpec::SinePN => -(T::one() + (T::PI() * t).cos()) / (T::PI() * T::PI()),
            ReactionSpec::Cubic { coeff } => T::lit(0.25) * coeff * t * t * t * t,
        }
    }

    #[inline]
    pub fn df(&self, t: T) -> T {
        match *self {
            ReactionSpec::DoubleWell => T::one() - T::lit(3.0) * t * t,
            ReactionSpec::Linear { slope } => slope,
            ReactionSpec::Constant { .. } => T::zero(),
            ReactionSpec::SinePN => (T::PI() * t).cos(),
            ReactionSpec::Cubic { coeff } => T::lit(3.0) * coeff * t * t,
        }
    }

    /// `F(1) = F(-1) = 0`, the requirement for layer experiments.
    pub fn has_unit_wells(&self) -> bool {
        let tol = T::lit(1e-12);
        self.big_f(T::one()).abs() <= tol && self.big_f(-T::one()).abs() <= tol
    }

    /// `max |f'|` sampled on `[-bound, bound]`.
    pub fn max_abs_df(&self, bound: T) -> T {
        (0..=200)
            .map(|i| {
                let t = -bound + T::lit(2.0) * bound * T::from_usize_(i) / T::lit(200.0);
                self.df(t).abs()
            })
            .fold(T::zero(), |a, b| a.max(b))
    }
}

pub fn f_eval<T: Real>(r: &ReactionSpec<T>, t: T) -> T {
    r.f(t)
}

#[allow(non_snake_case)]
pub fn F_eval<T: Real>(r: &ReactionSpec<T>, t: T) -> T {
    r.big_f(t)
}

pub fn df_eval<T: Real>(r: &ReactionSpec<T>, t: T) -> T {
    r.df(t)
}
