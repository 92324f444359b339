//! Second variation of the energy: stability form, its ground state, the
//! Poincaré-type inequality, the symmetry defect and quotient diagnostics.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{gradient, padded_gradient, FarField, Field, Padded, Point, TestFunction};
use crate::kernel::KernelVariant;
use crate::nonlinearity::ReactionSpec;
use crate::operator::Operator;
use crate::scalar::{pairwise_sum, Real};

/// Mask threshold for `|grad u| != 0`, relative to `max |grad u|`.
pub const G_FLOOR: f64 = 1e-10;
/// Mask threshold for `|phi| > 0`, relative to `max |phi|`.
pub const PHI_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GapSample<T> {
    pub id: usize,
    pub lhs: T,
    pub rhs: T,
}

impl<T: Real> GapSample<T> {
    pub fn gap(&self) -> T {
        self.rhs - self.lhs
    }

    /// `rhs - lhs >= -rel (|lhs| + |rhs|)`.
    pub fn holds(&self, rel: T) -> bool {
        self.gap() >= -rel * (self.lhs.abs() + self.rhs.abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport<T> {
    pub lambda_min: T,
    /// Unit discrete `L^2` norm, sign fixed so that the entry sum is nonnegative.
    pub eigvec: Field<T>,
    pub positivity_ok: bool,
    pub gap_samples: Vec<GapSample<T>>,
    pub iterations: usize,
    pub converged: bool,
    /// `|| M v - lambda v ||` of the returned pair.
    pub eig_residual: T,
}

impl<T: Real> StabilityReport<T> {
    pub fn stable(&self, tol: T) -> bool {
        self.lambda_min >= -tol
    }
}

/// Matrix-free second variation at `u`:
/// `(M v)(x) = int Phi''(u(x) - u(y)) (v(x) - v(y)) K - f'(u(x)) v(x)` for `v` vanishing outside the box.
pub struct StabilityForm<'a, T: Real> {
    op: &'a Operator<T>,
    u: &'a Field<T>,
    pu: Padded<T>,
    /// Exterior mass `int_{outside} Phi''(u(x) - u) K` minus `f'(u(x))`.
    diagonal: Vec<T>,
    max_df: T,
}

impl<'a, T: Real> StabilityForm<'a, T> {
    pub fn new(op: &'a Operator<T>, u: &'a Field<T>, reaction: &ReactionSpec<T>) -> Result<Self> {
        if !op.grid().same_as(u.grid()) {
            return Err(Error::GridMismatch("stability form on a different grid".into()));
        }
        let phi = *op.phi();
        let diagonal = (0..u.grid().len())
            .into_par_iter()
            .map(|x| {
                let ux = u.value(x);
                let tail = op.tail_at(x, u, None, None, |ub, _| phi.ddphi(ux - ub)).midpoint();
                tail - reaction.df(ux)
            })
            .collect();
        let max_df = u.values().iter().map(|&v| reaction.df(v)).fold(T::neg_infinity(), T::max);
        Ok(StabilityForm { op, u, pu: op.padded(u), diagonal, max_df })
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    /// Largest `f'(u)` over the box.
    pub fn max_df(&self) -> T {
        self.max_df
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let grid = *self.op.grid();
        let pv = Field::new(grid, v.to_vec(), FarField::ZeroOutside).expect("finite direction").padded(self.op.pad());
        let phi = *self.op.phi();
        (0..v.len())
            .into_par_iter()
            .map(|x| {
                let ux = self.u.value(x);
                let vx = v[x];
                let lattice = self.op.pair_sum(x, |y| phi.ddphi(ux - self.pu.values[y]) * (vx - pv.values[y]));
                lattice + self.diagonal[x] * vx
            })
            .collect()
    }

    /// Dense symmetric matrix (row-major) of the form.
    pub fn assemble(&self) -> Vec<T> {
        let n = self.len();
        let phi = *self.op.phi();
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|x| {
                let ux = self.u.value(x);
                let mut row = vec![T::zero(); n];
                let mut diag = self.diagonal[x];
                self.op.pair_visit(x, |y, w| {
                    let c = phi.ddphi(ux - self.pu.values[y]) * w;
                    diag = diag + c;
                    if let Some(j) = self.op.box_node(y) {
                        row[j] = row[j] - c;
                    }
                });
                row[x] = row[x] + diag;
                row
            })
            .collect();
        let mut a: Vec<T> = rows.into_iter().flatten().collect();
        let half = T::lit(0.5);
        for i in 0..n {
            for j in i + 1..n {
                let s = (a[i * n + j] + a[j * n + i]) * half;
                a[i * n + j] = s;
                a[j * n + i] = s;
            }
        }
        a
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    pairwise_sum(&a.iter().zip(b).map(|(&x, &y)| x * y).collect::<Vec<_>>())
}

/// Conjugate gradients for `(M - shift) x = b` (`M - shift` positive definite).
fn cg<T: Real>(form: &StabilityForm<T>, shift: T, b: &[T], rel_tol: T, max_iter: usize) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = rel_tol * rel_tol * rr;
    for _ in 0..max_iter {
        if rr <= stop || rr == T::zero() {
            break;
        }
        let mp: Vec<T> = form.apply(&p).into_iter().zip(&p).map(|(a, &pi)| a - shift * pi).collect();
        let alpha = rr / dot(&p, &mp);
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * mp[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

/// Smallest eigenvalue of the stability form by shifted inverse iteration
/// (shift `-max f' - 0.1`, below the spectrum), inner solves by CG.
///
/// Stops when `|| M v - lambda v || <= tol`; running out of `iters` is
/// reported through `converged`.
pub fn principal_eigenpair<T: Real>(
    op: &Operator<T>,
    u: &Field<T>,
    reaction: &ReactionSpec<T>,
    iters: usize,
    tol: T,
) -> Result<StabilityReport<T>> {
    if iters == 0 {
        return Err(Error::param("iters", "must be at least 1"));
    }
    let form = StabilityForm::new(op, u, reaction)?;
    let grid = *op.grid();
    let n = form.len();
    let shift = -form.max_df() - T::lit(0.1);
    let mut v: Vec<T> = (0..n)
        .map(|i| {
            // smooth positive start, vanishing at the box edge
            let p = grid.coord(i);
            let l = grid.half_width();
            (0..grid.dim()).fold(T::one(), |a, k| a * ((T::FRAC_PI_2() * p[k] / l).cos().max(T::zero()) + T::lit(1e-3)))
        })
        .collect();
    normalize(&mut v);
    let mut lambda = T::zero();
    let mut residual = T::infinity();
    let mut iterations = 0;
    for it in 1..=iters {
        iterations = it;
        let mut w = cg(&form, shift, &v, T::lit(1e-13), 10 * n + 100);
        normalize(&mut w);
        v = w;
        let mv = form.apply(&v);
        lambda = dot(&v, &mv);
        let res: Vec<T> = mv.iter().zip(&v).map(|(&a, &b)| a - lambda * b).collect();
        residual = dot(&res, &res).sqrt();
        if residual <= tol {
            break;
        }
    }
    if pairwise_sum(&v) < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let positivity_ok = v.iter().all(|&x| x >= T::zero()) || v.iter().all(|&x| x <= T::zero());
    // discrete L^2 normalisation
    let scale = T::one() / grid.cell_volume().sqrt();
    let eigvec = Field::new(grid, v.iter().map(|&x| x * scale).collect(), FarField::ZeroOutside)?;
    Ok(StabilityReport {
        lambda_min: lambda,
        eigvec,
        positivity_ok,
        gap_samples: Vec::new(),
        iterations,
        converged: residual <= tol,
        eig_residual: residual,
    })
}

fn normalize<T: Real>(v: &mut [T]) {
    let n = dot(v, v).sqrt();
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x = *x / n);
    }
}

/// Dense matrix of the stability form, row-major `N x N`.
pub fn assemble_form<T: Real>(op: &Operator<T>, u: &Field<T>, reaction: &ReactionSpec<T>) -> Result<Vec<T>> {
    Ok(StabilityForm::new(op, u, reaction)?.assemble())
}

/// Both sides of the stability inequality for `zeta`:
/// `lhs = int f'(u) zeta^2`, `rhs = 1/2 iint Phi''(u(x) - u(y)) (zeta(x) - zeta(y))^2 K`.
pub fn stability_gap<T: Real>(
    op: &Operator<T>,
    u: &Field<T>,
    zeta: &TestFunction<T>,
    reaction: &ReactionSpec<T>,
) -> Result<(T, T)> {
    let z = zeta.sample(op.grid())?;
    stability_gap_field(op, u, &z, reaction)
}

/// [`stability_gap`] for a sampled direction vanishing outside the box.
pub fn stability_gap_field<T: Real>(
    op: &Operator<T>,
    u: &Field<T>,
    z: &Field<T>,
    reaction: &ReactionSpec<T>,
) -> Result<(T, T)> {
    let phi = *op.phi();
    let rhs = op.symmetric_sum(
        u,
        z,
        |ux, uy, zx, zy| phi.ddphi(ux - uy) * (zx - zy) * (zx - zy),
        |ux, ub, zx| phi.ddphi(ux - ub) * zx * zx,
    )?;
    let lhs: Vec<T> = u.values().iter().zip(z.values()).map(|(&a, &b)| reaction.df(a) * b * b).collect();
    Ok((pairwise_sum(&lhs) * op.grid().cell_volume(), rhs))
}

/// Gap samples for a list of test functions (ids are list positions).
pub fn gap_samples<T: Real>(
    op: &Operator<T>,
    u: &Field<T>,
    tests: &[TestFunction<T>],
    reaction: &ReactionSpec<T>,
) -> Result<Vec<GapSample<T>>> {
    tests
        .iter()
        .enumerate()
        .map(|(id, t)| stability_gap(op, u, t, reaction).map(|(lhs, rhs)| GapSample { id, lhs, rhs }))
        .collect()
}

#[inline]
fn norm2<T: Real>(a: Point<T>) -> T {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

#[inline]
fn a_term<T: Real>(a: Point<T>, b: Point<T>) -> T {
    norm2(a) * norm2(b) - (a[0] * b[0] + a[1] * b[1])
}

/// `A_y = |a| |b| - a . b` for gradients `a = grad u(x)`, `b = grad u(x + y)`; never negative.
pub fn a_y<T: Real>(a: Point<T>, b: Point<T>) -> T {
    a_term(a, b).max(T::zero())
}

/// `B_y = |a| |b|`.
pub fn b_y<T: Real>(a: Point<T>, b: Point<T>) -> T {
    norm2(a) * norm2(b)
}

/// Both sides of the Poincaré-type inequality for stable solutions,
/// `iint_{|grad u| != 0} Phi'' A_y (eta^2(x) + eta^2(x+y)) K <= iint Phi'' B_y (eta(x) - eta(x+y))^2 K`,
/// summed over lattice pairs (gradients of the far field enter through the padding).
pub fn poincare_gap<T: Real>(op: &Operator<T>, u: &Field<T>, eta: &TestFunction<T>) -> Result<(T, T)> {
    let e = eta.sample(op.grid())?;
    poincare_gap_field(op, u, &e)
}

pub fn poincare_gap_field<T: Real>(op: &Operator<T>, u: &Field<T>, e: &Field<T>) -> Result<(T, T)> {
    if !op.grid().same_as(u.grid()) || !op.grid().same_as(e.grid()) {
        return Err(Error::GridMismatch("poincare inputs on different grids".into()));
    }
    let pad = op.pad();
    let pu = op.padded(u);
    let pe = e.padded(pad);
    let grads = padded_gradient(u, pad);
    let gmax = grads.values.iter().map(|&g| norm2(g)).fold(T::zero(), T::max);
    let floor = T::lit(G_FLOOR) * gmax;
    let phi = *op.phi();
    let parts: Vec<(T, T)> = (0..u.grid().len())
        .into_par_iter()
        .map(|x| {
            let cx = op.padded_index(x);
            let (ux, ex, gx) = (u.value(x), e.value(x), grads.values[cx]);
            let masked_x = norm2(gx) <= floor;
            let (mut lhs, mut rhs) = (T::zero(), T::zero());
            op.pair_visit(x, |y, w| {
                // every unordered pair with one end in the box: twice when the other end is outside
                let c = if op.padded_in_box(y) { T::one() } else { T::lit(2.0) };
                let gy = grads.values[y];
                let d2 = phi.ddphi(ux - pu.values[y]) * w * c;
                if !masked_x && norm2(gy) > floor {
                    let a = a_term(gx, gy);
                    debug_assert!(a >= -T::lit(1e-12) * norm2(gx) * norm2(gy));
                    lhs = lhs + d2 * a.max(T::zero()) * (ex * ex + pe.values[y] * pe.values[y]);
                }
                let de = ex - pe.values[y];
                rhs = rhs + d2 * b_y(gx, gy) * de * de;
            });
            (lhs, rhs)
        })
        .collect();
    let h = op.grid().cell_volume();
    let lhs = pairwise_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>()) * h;
    let rhs = pairwise_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>()) * h;
    Ok((lhs, rhs))
}

/// Interaction radius used by [`symmetry_defect`]: `R_star` capped by `L/2`.
pub fn defect_radius<T: Real>(op: &Operator<T>) -> T {
    let cap = op.grid().half_width() * T::lit(0.5);
    match op.kernel().variant() {
        KernelVariant::Truncated { big_r_star, .. } => big_r_star.min(cap),
        KernelVariant::Decaying { big_r_star, .. } => big_r_star.min(cap),
        _ => cap,
    }
}

/// `max A_y(grad u) / max |grad u|^2` over box node pairs with `|y| <= radius`.
pub fn symmetry_defect<T: Real>(u: &Field<T>, radius: T) -> Result<T> {
    let g = *u.grid();
    if g.dim() != 2 {
        return Err(Error::Precondition("symmetry defect needs dim = 2".into()));
    }
    let grads = gradient(u);
    let gmax = grads.max_norm();
    if gmax == T::zero() {
        return Ok(T::zero());
    }
    let m = g.nodes_per_axis() as isize;
    let r = (radius / g.h()).floor().to_f64_() as isize;
    let r2 = radius * radius;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|j1| (-r..=r).map(move |j0| (j0, j1)))
        .filter(|&(j0, j1)| {
            let (a, b) = (T::lit(j0 as f64) * g.h(), T::lit(j1 as f64) * g.h());
            (j0, j1) > (0, 0) && a * a + b * b <= r2 * (T::one() + T::lit(1e-12))
        })
        .collect();
    let worst = (0..g.len())
        .into_par_iter()
        .map(|x| {
            let [i0, i1] = g.axis_indices(x);
            let a = grads.values[x];
            let mut d = T::zero();
            for &(j0, j1) in &offsets {
                let (k0, k1) = (i0 as isize + j0, i1 as isize + j1);
                if k0 < 0 || k1 < 0 || k0 >= m || k1 >= m {
                    continue;
                }
                d = d.max(a_term(a, grads.values[g.index(k0 as usize, k1 as usize)]));
            }
            d
        })
        .reduce(T::zero, T::max);
    Ok(worst / (gmax * gmax))
}

/// Data of the quotient `sigma = psi / phi`, `psi = grad u . nu` for a constant direction `nu`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientData<T> {
    pub nu: Point<T>,
    pub psi: Field<T>,
    pub phi: Field<T>,
    /// `psi / phi` where `|phi| > PHI_FLOOR max |phi|`.
    pub sigma: Vec<Option<T>>,
    /// `psi` and `phi` on the padded lattice of the operator.
    padded_psi: Vec<T>,
    padded_phi: Vec<T>,
}

impl<T: Real> QuotientData<T> {
    /// `phi = d u / d x_n` (the last coordinate).
    pub fn from_derivative(op: &Operator<T>, u: &Field<T>, nu: Point<T>) -> Result<Self> {
        let grads = padded_gradient(u, op.pad());
        let last = u.grid().dim() - 1;
        let padded_phi: Vec<T> = grads.values.iter().map(|g| g[last]).collect();
        Self::build(op, u, nu, padded_phi)
    }

    /// Given `phi` (e.g. the ground state), vanishing outside the box.
    pub fn from_phi(op: &Operator<T>, u: &Field<T>, nu: Point<T>, phi: &Field<T>) -> Result<Self> {
        let padded_phi = phi.clone().with_far_field(FarField::ZeroOutside).padded(op.pad()).values;
        Self::build(op, u, nu, padded_phi)
    }

    fn build(op: &Operator<T>, u: &Field<T>, nu: Point<T>, padded_phi: Vec<T>) -> Result<Self> {
        let grid = *op.grid();
        if !grid.same_as(u.grid()) {
            return Err(Error::GridMismatch("quotient data on a different grid".into()));
        }
        let norm = norm2(nu);
        if !(norm > T::zero()) {
            return Err(Error::param("nu", "must be nonzero"));
        }
        let nu = [nu[0] / norm, nu[1] / norm];
        let dim = grid.dim();
        let grads = padded_gradient(u, op.pad());
        let padded_psi: Vec<T> =
            grads.values.iter().map(|g| (0..dim).fold(T::zero(), |s, k| s + g[k] * nu[k])).collect();
        let at_box = |v: &[T]| (0..grid.len()).map(|x| v[op.padded_index(x)]).collect::<Vec<_>>();
        let psi = Field::new(grid, at_box(&padded_psi), FarField::ZeroOutside)?;
        let phi = Field::new(grid, at_box(&padded_phi), FarField::ZeroOutside)?;
        let floor = T::lit(PHI_FLOOR) * phi.sup_norm();
        let sigma = psi.values().iter().zip(phi.values()).map(|(&s, &p)| (p.abs() > floor).then(|| s / p)).collect();
        Ok(QuotientData { nu, psi, phi, sigma, padded_psi, padded_phi })
    }
}

/// `int Phi''(u(x) - u(y)) (sigma(x) - sigma(y)) phi(y) K(x - y) dy`, evaluated
/// as `sum Phi'' (sigma(x) phi(y) - psi(y)) w`; `None` where `phi(x)` is below the floor.
pub fn quotient_residual<T: Real>(op: &Operator<T>, u: &Field<T>, data: &QuotientData<T>, x: usize) -> Result<Option<T>> {
    if x >= u.grid().len() {
        return Err(Error::OutsideGrid { index: x, len: u.grid().len() });
    }
    let Some(sx) = data.sigma[x] else {
        return Ok(None);
    };
    let pu = op.padded(u);
    let phi = *op.phi();
    let ux = u.value(x);
    Ok(Some(op.pair_sum(x, |y| phi.ddphi(ux - pu.values[y]) * (sx * data.padded_phi[y] - data.padded_psi[y]))))
}

/// Largest `|quotient_residual|` over evaluated nodes with `|x|_inf <= radius`.
pub fn max_quotient_residual<T: Real>(op: &Operator<T>, u: &Field<T>, data: &QuotientData<T>, radius: T) -> Result<T> {
    let nodes = op.grid().core_nodes(radius);
    let vals = nodes.iter().map(|&x| quotient_residual(op, u, data, x)).collect::<Result<Vec<_>>>()?;
    Ok(vals.into_iter().flatten().fold(T::zero(), |m, v| m.max(v.abs())))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthRow<T> {
    pub radius: T,
    pub value: T,
    /// `value / R^2`.
    pub ratio: T,
    /// `max ratio / min ratio <= 3` over all radii.
    pub bound_ok: bool,
}

/// `sum Phi''(u(x) - u(y)) |x - y|^2 K` over ordered lattice pairs
/// `x in B_2R`, `y outside B_R` (the annular sets of the quotient growth
/// condition), for each radius.
pub fn quotient_growth_check<T: Real>(op: &Operator<T>, u: &Field<T>, radii: &[T]) -> Result<Vec<GrowthRow<T>>> {
    let grid = *op.grid();
    if !grid.same_as(u.grid()) {
        return Err(Error::GridMismatch("growth check on a different grid".into()));
    }
    if radii.is_empty() || radii.iter().any(|&r| !(r > T::zero())) {
        return Err(Error::param("radii", "need positive radii"));
    }
    if let Some(&r) = radii.iter().find(|&&r| T::lit(2.0) * r > grid.half_width()) {
        return Err(Error::SupportViolation(format!("B_{} does not fit in the box", T::lit(2.0) * r)));
    }
    let pu = op.padded(u);
    let phi = *op.phi();
    let pad = op.pad() as isize;
    let stride = (grid.nodes_per_axis() + 2 * op.pad()) as isize;
    let coord_of = |y: usize| -> Point<T> {
        let y = y as isize;
        let (c0, c1) = (y % stride - pad, y / stride - pad);
        if grid.dim() == 1 {
            grid.lattice_point(c0, 0)
        } else {
            grid.lattice_point(c0, c1)
        }
    };
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let inner = r * r;
        let outer = T::lit(4.0) * r * r;
        let nodes: Vec<usize> = (0..grid.len())
            .filter(|&x| {
                let p = grid.coord(x);
                p[0] * p[0] + p[1] * p[1] <= outer
            })
            .collect();
        let parts: Vec<T> = nodes
            .par_iter()
            .map(|&x| {
                let p = grid.coord(x);
                let ux = u.value(x);
                let mut acc = T::zero();
                op.pair_visit(x, |y, w| {
                    let q = coord_of(y);
                    if q[0] * q[0] + q[1] * q[1] > inner {
                        let d2 = (q[0] - p[0]) * (q[0] - p[0]) + (q[1] - p[1]) * (q[1] - p[1]);
                        acc = acc + phi.ddphi(ux - pu.values[y]) * d2 * w;
                    }
                });
                acc
            })
            .collect();
        values.push(pairwise_sum(&parts) * grid.cell_volume());
    }
    let ratios: Vec<T> = radii.iter().zip(&values).map(|(&r, &v)| v / (r * r)).collect();
    let max = ratios.iter().copied().fold(T::neg_infinity(), T::max);
    let min = ratios.iter().copied().fold(T::infinity(), T::min);
    let ok = min > T::zero() && max / min <= T::lit(3.0);
    Ok(radii
        .iter()
        .zip(values.iter().zip(&ratios))
        .map(|(&radius, (&value, &ratio))| GrowthRow { radius, value, ratio, bound_ok: ok })
        .collect())
}

/// `max sup/inf` of `phi` over unit sub-boxes of the core `|x|_inf <= radius`
/// (Harnack probe; infinite where `phi` changes sign or vanishes).
pub fn harnack_ratio<T: Real>(phi: &Field<T>, radius: T) -> T {
    let g = *phi.grid();
    let cells = (T::one() / g.h()).round().to_f64_().max(1.0) as usize;
    let m = g.nodes_per_axis();
    let core: Vec<bool> = (0..g.len()).map(|i| {
        let p = g.coord(i);
        p[0].abs() <= radius && p[1].abs() <= radius
    }).collect();
    let rows = if g.dim() == 1 { 1 } else { m };
    let row_step = if g.dim() == 1 { 1 } else { cells };
    let mut worst = T::one();
    for b1 in (0..rows).step_by(row_step) {
        for b0 in (0..m).step_by(cells) {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for i1 in b1..(b1 + row_step).min(rows) {
                for i0 in b0..(b0 + cells + 1).min(m) {
                    let idx = g.index(i0, i1);
                    if core[idx] {
                        let v = phi.value(idx);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            if hi < lo {
                continue;
            }
            worst = if lo > T::zero() { worst.max(hi / lo) } else { T::infinity() };
        }
    }
    worst
}
