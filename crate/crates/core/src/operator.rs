//! Node-collocated quadrature for the nonlocal operator
//! `T[u](x) = p.v. int Phi'(u(x) - u(y)) K(y - x) dy`, its linearisation,
//! sums of such operators and strong/weak residuals.
//!
//! Every lattice offset `z` is visited together with `-z`, so the odd part of
//! the integrand cancels exactly near the singular node, which itself
//! contributes nothing. Lattice points beyond the box take their values from
//! the far-field closure; the region beyond the padded lattice is integrated
//! along rays from `x`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FarField, Field, Grid, Padded, Point, TestFunction};
use crate::kernel::{KernelSpec, KernelVariant};
use crate::nonlinearity::{beta_of, PhiSpec, ReactionSpec};
use crate::scalar::{pairwise_sum, Interval, Real};

/// Angular nodes for exterior tails in 2D.
pub const TAIL_ANGLES: usize = 512;
/// Radial nodes per ray segment for exterior tails.
pub const TAIL_RADIAL_NODES: usize = 32;

/// Treatment of the region beyond the padded lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailScheme {
    /// Radial integral of the kernel along rays (closed form where the far
    /// field is constant along the ray).
    AnalyticPowerTail,
    /// No tail: the kernel support lies inside the padded lattice.
    TruncatedNone,
    /// Dyadic-annulus bound on the decaying tail, reported as an interval.
    DecayBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureScheme {
    /// Cells around the evaluation node that are guaranteed to be paired.
    pub epsilon_cells: usize,
    pub tail: TailScheme,
}

impl QuadratureScheme {
    /// `epsilon_cells = 1` and the tail matching the kernel class.
    pub fn default_for<T: Real>(k: &KernelSpec<T>) -> Self {
        let tail = match k.variant() {
            KernelVariant::Truncated { .. } => TailScheme::TruncatedNone,
            KernelVariant::Decaying { .. } => TailScheme::DecayBound,
            _ => TailScheme::AnalyticPowerTail,
        };
        QuadratureScheme { epsilon_cells: 1, tail }
    }

    pub fn validate<T: Real>(&self, k: &KernelSpec<T>, grid: &Grid<T>) -> Result<()> {
        let truncated = matches!(k.variant(), KernelVariant::Truncated { .. });
        if !truncated && self.epsilon_cells == 0 {
            return Err(Error::param("epsilon_cells", format!("must be >= 1 for {} kernels", k.class_name())));
        }
        match (self.tail, k.variant()) {
            (TailScheme::TruncatedNone, KernelVariant::Truncated { big_r_star, .. }) => {
                if *big_r_star > grid.half_width() {
                    return Err(Error::Precondition(format!(
                        "kernel range {} exceeds the box half-width {}",
                        big_r_star,
                        grid.half_width()
                    )));
                }
                Ok(())
            }
            (TailScheme::TruncatedNone, _) => Err(Error::param("tail", "truncated_none needs a truncated kernel")),
            (_, KernelVariant::Truncated { .. }) => Err(Error::param("tail", "truncated kernels use truncated_none")),
            (TailScheme::DecayBound, KernelVariant::Decaying { .. }) => Ok(()),
            (TailScheme::DecayBound, _) => Err(Error::param("tail", "decay_bound needs a decaying kernel")),
            (TailScheme::AnalyticPowerTail, _) => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Offset<T> {
    d: [isize; 2],
    /// Shift in padded linear index.
    delta: isize,
    /// `K(z) h^n`.
    w: T,
}

/// Range of the far-field values of a field (used by the tail bracket).
pub(crate) fn far_range<T: Real>(u: &Field<T>) -> (T, T) {
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    let mut widen = |v: T| {
        lo = lo.min(v);
        hi = hi.max(v);
    };
    match u.far_field() {
        FarField::ConstantValue(c) => widen(c),
        FarField::ZeroOutside => widen(T::zero()),
        FarField::Clamped => u.values().iter().for_each(|&v| widen(v)),
        FarField::LayerSign { .. } => {
            widen(-T::one());
            widen(T::one());
            u.values().iter().for_each(|&v| widen(v));
        }
    }
    (lo, hi)
}

fn constant_closure<T>(f: FarField<T>) -> bool {
    matches!(f, FarField::ConstantValue(_) | FarField::ZeroOutside)
}

/// Discretised `T_Phi` for one kernel and one `Phi` on a fixed grid.
#[derive(Clone, Debug)]
pub struct Operator<T> {
    grid: Grid<T>,
    kernel: KernelSpec<T>,
    phi: PhiSpec<T>,
    scheme: QuadratureScheme,
    pad: usize,
    stride: usize,
    rows: usize,
    /// Half of the symmetric stencil; `-z` is implied.
    stencil: Vec<Offset<T>>,
    /// Every stencil point of every box node lies on the padded lattice.
    bounded: bool,
    /// Half-width of the padded square covered by lattice cells.
    outer: T,
    rays: Vec<(Point<T>, T)>,
}

impl<T: Real> Operator<T> {
    pub fn new(grid: Grid<T>, kernel: KernelSpec<T>, phi: PhiSpec<T>, scheme: QuadratureScheme) -> Result<Self> {
        let beta = beta_of(&phi);
        let alpha = kernel.alpha();
        if !(beta > alpha) {
            return Err(Error::Integrability { beta: beta.to_f64_(), alpha: alpha.to_f64_() });
        }
        scheme.validate(&kernel, &grid)?;
        let h = grid.h();
        let m = grid.nodes_per_axis();
        let (pad, reach, bounded) = match kernel.support_radius() {
            Some(r) => {
                let cells = (r / h).ceil().to_f64_() as usize;
                (scheme.epsilon_cells.max(cells), cells, true)
            }
            None => (scheme.epsilon_cells, m - 1 + scheme.epsilon_cells, false),
        };
        let stride = m + 2 * pad;
        let rows = if grid.dim() == 1 { 1 } else { stride };
        let hn = grid.cell_volume();
        let mut stencil = Vec::new();
        let r = reach as isize;
        let mut push = |d0: isize, d1: isize| {
            let z = [T::from_f64(d0 as f64).unwrap() * h, T::from_f64(d1 as f64).unwrap() * h];
            let dim = grid.dim();
            let norm = (z[0] * z[0] + z[1] * z[1]).sqrt();
            let w = kernel.eval_unchecked(&z[..dim], norm) * hn;
            if w > T::zero() {
                stencil.push(Offset { d: [d0, d1], delta: d0 + stride as isize * d1, w });
            }
        };
        if grid.dim() == 1 {
            for d0 in 1..=r {
                push(d0, 0);
            }
        } else {
            for d1 in 1..=r {
                push(0, d1);
            }
            for d1 in -r..=r {
                for d0 in 1..=r {
                    push(d0, d1);
                }
            }
        }
        let outer = grid.half_width() + (T::from_usize_(pad) + T::lit(0.5)) * h;
        let rays = if bounded {
            Vec::new()
        } else if grid.dim() == 1 {
            vec![([T::one(), T::zero()], T::one()), ([-T::one(), T::zero()], T::one())]
        } else {
            let dth = T::lit(2.0) * T::PI() / T::from_usize_(TAIL_ANGLES);
            (0..TAIL_ANGLES)
                .map(|j| {
                    let th = (T::from_usize_(j) + T::lit(0.5)) * dth;
                    ([th.cos(), th.sin()], dth)
                })
                .collect()
        };
        Ok(Operator { grid, kernel, phi, scheme, pad, stride, rows, stencil, bounded, outer, rays })
    }

    /// Operator with the default quadrature for the kernel class.
    pub fn with_defaults(grid: Grid<T>, kernel: KernelSpec<T>, phi: PhiSpec<T>) -> Result<Self> {
        let q = QuadratureScheme::default_for(&kernel);
        Operator::new(grid, kernel, phi, q)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn phi(&self) -> &PhiSpec<T> {
        &self.phi
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }

    /// Padding (in cells) of the lattice on which far-field values are sampled.
    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Number of offset pairs `{z, -z}` in the stencil.
    pub fn stencil_pairs(&self) -> usize {
        self.stencil.len()
    }

    /// Half-width of the region covered by lattice cells.
    pub fn lattice_extent(&self) -> T {
        self.outer
    }

    fn check(&self, u: &Field<T>) -> Result<()> {
        if !self.grid.same_as(u.grid()) {
            return Err(Error::GridMismatch("field grid differs from operator grid".into()));
        }
        Ok(())
    }

    fn check_node(&self, x: usize) -> Result<()> {
        if x >= self.grid.len() {
            return Err(Error::OutsideGrid { index: x, len: self.grid.len() });
        }
        Ok(())
    }

    pub(crate) fn padded(&self, u: &Field<T>) -> Padded<T> {
        u.padded(self.pad)
    }

    /// Padded linear index of box node `x`.
    #[inline]
    pub(crate) fn padded_index(&self, x: usize) -> usize {
        let [i0, i1] = self.grid.axis_indices(x);
        if self.grid.dim() == 1 {
            i0 + self.pad
        } else {
            (i0 + self.pad) + self.stride * (i1 + self.pad)
        }
    }

    /// Whether a padded index lies in the box.
    #[inline]
    pub(crate) fn padded_in_box(&self, y: usize) -> bool {
        let m = self.grid.nodes_per_axis();
        let c = y % self.stride;
        let inside0 = c >= self.pad && c < self.pad + m;
        if self.grid.dim() == 1 {
            return inside0;
        }
        let r = y / self.stride;
        inside0 && r >= self.pad && r < self.pad + m
    }

    /// Box node of a padded index, if it lies in the box.
    #[inline]
    pub(crate) fn box_node(&self, y: usize) -> Option<usize> {
        if !self.padded_in_box(y) {
            return None;
        }
        let c = y % self.stride - self.pad;
        if self.grid.dim() == 1 {
            Some(c)
        } else {
            Some(self.grid.index(c, y / self.stride - self.pad))
        }
    }

    /// `sum_z w(z) [g(x + z) + g(x - z)]` over the lattice, one sequential
    /// pass per node. `g` receives padded indices.
    #[inline]
    pub(crate) fn pair_sum(&self, x: usize, mut g: impl FnMut(usize) -> T) -> T {
        let cx = self.padded_index(x) as isize;
        let mut acc = T::zero();
        if self.bounded {
            for o in &self.stencil {
                let s = g((cx + o.delta) as usize) + g((cx - o.delta) as usize);
                acc = acc + o.w * s;
            }
            return acc;
        }
        let stride = self.stride as isize;
        let rows = self.rows as isize;
        let (c0, c1) = (cx % stride, cx / stride);
        let inside = |a: isize, b: isize| a >= 0 && a < stride && b >= 0 && b < rows;
        for o in &self.stencil {
            let plus = inside(c0 + o.d[0], c1 + o.d[1]);
            let minus = inside(c0 - o.d[0], c1 - o.d[1]);
            let s = match (plus, minus) {
                (true, true) => g((cx + o.delta) as usize) + g((cx - o.delta) as usize),
                (true, false) => g((cx + o.delta) as usize),
                (false, true) => g((cx - o.delta) as usize),
                (false, false) => continue,
            };
            acc = acc + o.w * s;
        }
        acc
    }

    /// Calls `f(y, w)` for every lattice point `y != x` with its weight.
    #[inline]
    pub(crate) fn pair_visit(&self, x: usize, mut f: impl FnMut(usize, T)) {
        let cx = self.padded_index(x) as isize;
        let stride = self.stride as isize;
        let rows = self.rows as isize;
        let (c0, c1) = (cx % stride, cx / stride);
        let inside = |a: isize, b: isize| self.bounded || (a >= 0 && a < stride && b >= 0 && b < rows);
        for o in &self.stencil {
            if inside(c0 + o.d[0], c1 + o.d[1]) {
                f((cx + o.delta) as usize, o.w);
            }
            if inside(c0 - o.d[0], c1 - o.d[1]) {
                f((cx - o.delta) as usize, o.w);
            }
        }
    }

    /// Distance from box node `x` along `omega` to the edge of the lattice region.
    fn exit_distance(&self, p: Point<T>, omega: Point<T>) -> T {
        let mut rho = T::infinity();
        for k in 0..self.grid.dim() {
            if omega[k] != T::zero() {
                let target = if omega[k] > T::zero() { self.outer } else { -self.outer };
                rho = rho.min((target - p[k]) / omega[k]);
            }
        }
        rho
    }

    /// Exterior integral `int_{outside} g(u_far(y), v_far(y)) K(y - x) dy`.
    ///
    /// With `allow_bracket` and the decay-bound scheme, the part beyond
    /// `max(R_star, dist)` is bracketed from the annulus bound using the range
    /// of `g` over the far values of `u` (`far` is that range, `ux` the
    /// minimiser hint for convex integrands).
    pub(crate) fn tail_at(
        &self,
        x: usize,
        u: &Field<T>,
        v: Option<&Field<T>>,
        bracket: Option<((T, T), T)>,
        g: impl Fn(T, T) -> T,
    ) -> Interval<T> {
        if self.bounded || self.rays.is_empty() {
            return Interval::point(T::zero());
        }
        let dim = self.grid.dim();
        let p = self.grid.coord(x);
        let decay = match (self.scheme.tail, bracket, self.kernel.variant()) {
            (TailScheme::DecayBound, Some(b), KernelVariant::Decaying { big_r_star, theta, c_d, .. }) => {
                Some((b, *big_r_star, *theta, *c_d))
            }
            _ => None,
        };
        let both_const = dim == 1 || (constant_closure(u.far_field()) && v.is_none_or(|f| constant_closure(f.far_field())));
        let far_v = |q: Point<T>| v.map_or(T::zero(), |f| f.value_at(q));
        let mut total = T::zero();
        for &(omega, dth) in &self.rays {
            let rho = self.exit_distance(p, omega);
            let along = |r: T| [p[0] + r * omega[0], p[1] + r * omega[1]];
            let ray = match decay {
                Some((_, r_star, _, _)) => {
                    if rho >= r_star {
                        continue;
                    }
                    self.kernel
                        .ray_nodes(rho, &omega[..dim], TAIL_RADIAL_NODES)
                        .into_iter()
                        .filter(|&(r, _)| r <= r_star)
                        .map(|(r, w)| {
                            let q = along(r);
                            w * g(u.value_at(q), far_v(q))
                        })
                        .fold(T::zero(), |a, b| a + b)
                }
                None if both_const => {
                    let q = along(rho + self.grid.h());
                    self.kernel.ray_mass(rho, &omega[..dim]) * g(u.value_at(q), far_v(q))
                }
                None => self
                    .kernel
                    .ray_nodes(rho, &omega[..dim], TAIL_RADIAL_NODES)
                    .into_iter()
                    .map(|(r, w)| {
                        let q = along(r);
                        w * g(u.value_at(q), far_v(q))
                    })
                    .fold(T::zero(), |a, b| a + b),
            };
            total = total + ray * dth;
        }
        let Some((((lo, hi), ux), r_star, theta, c_d)) = decay else {
            return Interval::point(total);
        };
        let dist = (0..dim).map(|k| self.outer - p[k].abs()).fold(T::infinity(), |a, b| a.min(b));
        let rho = dist.max(r_star);
        let mass = c_d * rho.powf(-theta) / (T::one() - T::lit(2.0).powf(-theta));
        let mut g_lo = g(lo, T::zero()).min(g(hi, T::zero()));
        let mut g_hi = g(lo, T::zero()).max(g(hi, T::zero()));
        if ux >= lo && ux <= hi {
            g_lo = g_lo.min(g(ux, T::zero()));
            g_hi = g_hi.max(g(ux, T::zero()));
        }
        Interval { lo: total + g_lo.min(T::zero()) * mass, hi: total + g_hi.max(T::zero()) * mass }
    }

    fn t_at(&self, u: &Field<T>, pu: &Padded<T>, far: (T, T), x: usize) -> Interval<T> {
        let ux = u.value(x);
        let phi = &self.phi;
        let lattice = self.pair_sum(x, |y| phi.dphi(ux - pu.values[y]));
        let tail = self.tail_at(x, u, None, Some((far, ux)), |ub, _| phi.dphi(ux - ub));
        Interval { lo: lattice + tail.lo, hi: lattice + tail.hi }
    }

    // diagonal plus off-diagonal magnitude of row x of the Jacobian of T
    fn jacobian_row(&self, u: &Field<T>, pu: &Padded<T>, x: usize) -> T {
        let ux = u.value(x);
        let phi = &self.phi;
        let lattice = self.pair_sum(x, |y| phi.ddphi(ux - pu.values[y]));
        let tail = self.tail_at(x, u, None, None, |ub, _| phi.ddphi(ux - ub));
        T::lit(2.0) * lattice + tail.hi.abs()
    }

    /// `T[u](x)` at one node.
    pub fn apply_t_at(&self, u: &Field<T>, x: usize) -> Result<T> {
        Ok(self.apply_t_bracket_at(u, x)?.midpoint())
    }

    /// `T[u](x)` as an interval (degenerate unless the tail is bracketed).
    pub fn apply_t_bracket_at(&self, u: &Field<T>, x: usize) -> Result<Interval<T>> {
        self.check(u)?;
        self.check_node(x)?;
        let pu = self.padded(u);
        Ok(self.t_at(u, &pu, far_range(u), x))
    }

    /// `T[u]` at every node.
    pub fn apply_t(&self, u: &Field<T>) -> Result<Vec<T>> {
        Ok(self.apply_t_bracket(u)?.into_iter().map(|i| i.midpoint()).collect())
    }

    pub fn apply_t_bracket(&self, u: &Field<T>) -> Result<Vec<Interval<T>>> {
        self.check(u)?;
        let pu = self.padded(u);
        let far = far_range(u);
        Ok((0..self.grid.len()).into_par_iter().map(|x| self.t_at(u, &pu, far, x)).collect())
    }

    fn l_at(&self, u: &Field<T>, v: &Field<T>, pu: &Padded<T>, pv: &Padded<T>, x: usize) -> T {
        let (ux, vx) = (u.value(x), v.value(x));
        let phi = &self.phi;
        let lattice = self.pair_sum(x, |y| phi.ddphi(ux - pu.values[y]) * (vx - pv.values[y]));
        let tail = self.tail_at(x, u, Some(v), None, |ub, vb| phi.ddphi(ux - ub) * (vx - vb));
        lattice + tail.midpoint()
    }

    /// `L[u] v (x) = int Phi''(u(x) - u(y)) (v(x) - v(y)) K(y - x) dy`.
    pub fn apply_l_at(&self, u: &Field<T>, v: &Field<T>, x: usize) -> Result<T> {
        self.check(u)?;
        self.check(v)?;
        self.check_node(x)?;
        Ok(self.l_at(u, v, &self.padded(u), &self.padded(v), x))
    }

    pub fn apply_l(&self, u: &Field<T>, v: &Field<T>) -> Result<Vec<T>> {
        self.check(u)?;
        self.check(v)?;
        let (pu, pv) = (self.padded(u), self.padded(v));
        Ok((0..self.grid.len()).into_par_iter().map(|x| self.l_at(u, v, &pu, &pv, x)).collect())
    }

    /// `sup |T[u] - f(u)|` over nodes with `|x| <= radius`.
    pub fn residual_in(&self, u: &Field<T>, reaction: &ReactionSpec<T>, radius: T) -> Result<T> {
        self.check(u)?;
        let pu = self.padded(u);
        let far = far_range(u);
        let core = core_nodes(&self.grid, radius);
        let r: Vec<T> = core
            .par_iter()
            .map(|&x| (self.t_at(u, &pu, far, x).midpoint() - reaction.f(u.value(x))).abs())
            .collect();
        Ok(r.into_iter().fold(T::zero(), |a, b| a.max(b)))
    }

    /// Residual on the default core `|x| <= L/2`.
    pub fn residual(&self, u: &Field<T>, reaction: &ReactionSpec<T>) -> Result<T> {
        self.residual_in(u, reaction, self.grid.half_width() * T::lit(0.5))
    }

    /// `h^n sum_{x in box} [ sum_y c(y) pair(u_x, u_y, v_x, v_y) w / 2 + tail ]`
    /// where `c = 1` on the box and `2` beyond (where `v = 0`). This is the
    /// full symmetric double sum for `v` vanishing outside the box.
    pub(crate) fn symmetric_sum(
        &self,
        u: &Field<T>,
        v: &Field<T>,
        pair: impl Fn(T, T, T, T) -> T + Sync,
        tail: impl Fn(T, T, T) -> T + Sync,
    ) -> Result<T> {
        self.check(u)?;
        self.check(v)?;
        if v.far_field() != FarField::ZeroOutside {
            return Err(Error::Precondition("test directions must vanish outside the box".into()));
        }
        let (pu, pv) = (self.padded(u), self.padded(v));
        let half = T::lit(0.5);
        let per_node: Vec<T> = (0..self.grid.len())
            .into_par_iter()
            .map(|x| {
                let (ux, vx) = (u.value(x), v.value(x));
                let lattice = self.pair_sum(x, |y| {
                    let c = if self.padded_in_box(y) { half } else { T::one() };
                    c * pair(ux, pu.values[y], vx, pv.values[y])
                });
                let t = self.tail_at(x, u, None, None, |ub, _| tail(ux, ub, vx));
                lattice + t.midpoint()
            })
            .collect();
        Ok(pairwise_sum(&per_node) * self.grid.cell_volume())
    }

    /// `1/2 iint Phi'(u(x) - u(y)) (v(x) - v(y)) K - int f(u) v`.
    pub fn weak_residual(&self, u: &Field<T>, v: &Field<T>, reaction: &ReactionSpec<T>) -> Result<T> {
        let phi = self.phi;
        let kinetic = self.symmetric_sum(
            u,
            v,
            |ux, uy, vx, vy| phi.dphi(ux - uy) * (vx - vy),
            |ux, ub, vx| phi.dphi(ux - ub) * vx,
        )?;
        let source: Vec<T> = u.values().iter().zip(v.values()).map(|(&a, &b)| reaction.f(a) * b).collect();
        Ok(kinetic - pairwise_sum(&source) * self.grid.cell_volume())
    }

    /// Upper bound of the total kernel mass seen by one node (lattice part
    /// plus the largest exterior tail).
    pub fn mass_bound(&self) -> T {
        let lattice = pairwise_sum(&self.stencil.iter().map(|o| o.w).collect::<Vec<_>>()) * T::lit(2.0);
        if self.bounded {
            return lattice;
        }
        let rho = (T::from_usize_(self.pad) + T::lit(0.5)) * self.grid.h();
        let dim = self.grid.dim();
        let tail: T = self.rays.iter().map(|(omega, dth)| self.kernel.ray_mass(rho, &omega[..dim]) * *dth).sum();
        lattice + tail
    }
}

/// Nodes of `grid` with `|x| <= radius`.
pub fn core_nodes<T: Real>(grid: &Grid<T>, radius: T) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| {
            let p = grid.coord(i);
            p[0] * p[0] + p[1] * p[1] <= radius * radius
        })
        .collect()
}

/// A (sum of) nonlocal operator(s) that a gradient flow can drive.
pub trait Interaction<T: Real>: Sync {
    fn grid(&self) -> &Grid<T>;
    /// The operator at every node.
    fn apply(&self, u: &Field<T>) -> Result<Vec<T>>;
    /// Bound on the row sums of the Jacobian for oscillation `osc` of `u`.
    fn lipschitz_bound(&self, osc: T) -> T;
    /// Gershgorin bound on the Jacobian at the state `u` itself.
    fn jacobian_bound(&self, u: &Field<T>) -> Result<T> {
        Ok(self.lipschitz_bound(T::lit(2.0) * u.sup_norm().max(T::one())))
    }
    /// Largest order among the terms.
    fn order(&self) -> T;
}

impl<T: Real> Interaction<T> for Operator<T> {
    fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    fn apply(&self, u: &Field<T>) -> Result<Vec<T>> {
        self.apply_t(u)
    }

    fn lipschitz_bound(&self, osc: T) -> T {
        T::lit(2.0) * self.mass_bound() * self.phi.ddphi_bound(osc)
    }

    fn jacobian_bound(&self, u: &Field<T>) -> Result<T> {
        self.check(u)?;
        let pu = self.padded(u);
        let rows: Vec<T> = (0..self.grid.len()).into_par_iter().map(|x| self.jacobian_row(u, &pu, x)).collect();
        Ok(rows.into_iter().fold(T::zero(), |a, b| a.max(b)))
    }

    fn order(&self) -> T {
        self.kernel.alpha()
    }
}

/// `S[u] = sum_i T_i[u]`.
#[derive(Clone, Debug)]
pub struct SumOperator<T> {
    terms: Vec<Operator<T>>,
}

impl<T: Real> SumOperator<T> {
    pub fn new(terms: Vec<Operator<T>>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::Precondition("sum operator needs at least one term".into()));
        };
        for t in &terms {
            if !t.grid.same_as(&first.grid) {
                return Err(Error::GridMismatch("sum operator terms on different grids".into()));
            }
            if beta_of(&t.phi) < T::lit(2.0) {
                return Err(Error::Precondition("every term needs beta >= 2".into()));
            }
        }
        Ok(SumOperator { terms })
    }

    pub fn from_specs(grid: Grid<T>, specs: &[(KernelSpec<T>, PhiSpec<T>)], q: QuadratureScheme) -> Result<Self> {
        let terms = specs
            .iter()
            .map(|(k, p)| Operator::new(grid, k.clone(), *p, q))
            .collect::<Result<Vec<_>>>()?;
        SumOperator::new(terms)
    }

    pub fn terms(&self) -> &[Operator<T>] {
        &self.terms
    }

    pub fn apply_s_at(&self, u: &Field<T>, x: usize) -> Result<T> {
        let mut acc = T::zero();
        for t in &self.terms {
            acc = acc + t.apply_t_at(u, x)?;
        }
        Ok(acc)
    }

    pub fn apply_s(&self, u: &Field<T>) -> Result<Vec<T>> {
        let mut acc = self.terms[0].apply_t(u)?;
        for t in &self.terms[1..] {
            for (a, b) in acc.iter_mut().zip(t.apply_t(u)?) {
                *a = *a + b;
            }
        }
        Ok(acc)
    }

    /// Per-term values `T_i[u]` at every node.
    pub fn apply_terms(&self, u: &Field<T>) -> Result<Vec<Vec<T>>> {
        self.terms.iter().map(|t| t.apply_t(u)).collect()
    }

    pub fn residual_in(&self, u: &Field<T>, reaction: &ReactionSpec<T>, radius: T) -> Result<T> {
        let s = self.apply_s(u)?;
        let grid = self.terms[0].grid;
        Ok(core_nodes(&grid, radius)
            .into_iter()
            .map(|x| (s[x] - reaction.f(u.value(x))).abs())
            .fold(T::zero(), |a, b| a.max(b)))
    }
}

impl<T: Real> Interaction<T> for SumOperator<T> {
    fn grid(&self) -> &Grid<T> {
        &self.terms[0].grid
    }

    fn apply(&self, u: &Field<T>) -> Result<Vec<T>> {
        self.apply_s(u)
    }

    fn lipschitz_bound(&self, osc: T) -> T {
        self.terms.iter().map(|t| t.lipschitz_bound(osc)).sum()
    }

    fn jacobian_bound(&self, u: &Field<T>) -> Result<T> {
        self.terms.iter().try_fold(T::zero(), |acc, t| Ok(acc + t.jacobian_bound(u)?))
    }

    fn order(&self) -> T {
        self.terms.iter().map(|t| t.kernel.alpha()).fold(T::zero(), |a, b| a.max(b))
    }
}

/// `T[u](x)` at node `x`.
pub fn apply_t<T: Real>(u: &Field<T>, k: &KernelSpec<T>, phi: &PhiSpec<T>, q: QuadratureScheme, x: usize) -> Result<T> {
    Operator::new(*u.grid(), k.clone(), *phi, q)?.apply_t_at(u, x)
}

/// `L[u] v (x)` at node `x`.
pub fn apply_l<T: Real>(
    u: &Field<T>,
    v: &Field<T>,
    k: &KernelSpec<T>,
    phi: &PhiSpec<T>,
    q: QuadratureScheme,
    x: usize,
) -> Result<T> {
    Operator::new(*u.grid(), k.clone(), *phi, q)?.apply_l_at(u, v, x)
}

/// `S[u](x) = sum_i T_i[u](x)`.
pub fn apply_s<T: Real>(u: &Field<T>, terms: &[(KernelSpec<T>, PhiSpec<T>)], q: QuadratureScheme, x: usize) -> Result<T> {
    SumOperator::from_specs(*u.grid(), terms, q)?.apply_s_at(u, x)
}

/// `sup |T[u] - f(u)|` on `|x| <= L/2`.
pub fn residual<T: Real>(
    u: &Field<T>,
    k: &KernelSpec<T>,
    phi: &PhiSpec<T>,
    reaction: &ReactionSpec<T>,
    q: QuadratureScheme,
) -> Result<T> {
    Operator::new(*u.grid(), k.clone(), *phi, q)?.residual(u, reaction)
}

/// Weak residual against a compactly supported test function.
pub fn weak_residual<T: Real>(
    u: &Field<T>,
    v: &TestFunction<T>,
    k: &KernelSpec<T>,
    phi: &PhiSpec<T>,
    reaction: &ReactionSpec<T>,
    q: QuadratureScheme,
) -> Result<T> {
    let vf = v.sample(u.grid())?;
    Operator::new(*u.grid(), k.clone(), *phi, q)?.weak_residual(u, &vf, reaction)
}
