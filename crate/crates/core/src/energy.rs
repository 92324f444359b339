//! Nonlocal energy on ball domains and its growth in the radius.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{BallDomain, Field, Grid};
use crate::kernel::KernelVariant;
use crate::nonlinearity::ReactionSpec;
use crate::operator::{far_range, Operator};
use crate::scalar::{pairwise_sum, Interval, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport<T> {
    pub radius: T,
    /// `1/2 int_Omega int_Omega Phi(u(x) - u(y)) K`.
    pub kinetic_interior: T,
    /// `int_Omega int_{Omega^c} Phi(u(x) - u(y)) K`.
    pub kinetic_cross: T,
    /// `-int_Omega F(u)`.
    pub potential: T,
    pub total: T,
    /// Exterior tail contribution to the cross term (an interval when bracketed).
    pub tail_bracket: Interval<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit<T> {
    pub radii: Vec<T>,
    pub energies: Vec<T>,
    pub reports: Vec<EnergyReport<T>>,
    /// Least-squares slope of `ln E` against `ln R`; `None` if some energy is not positive.
    pub slope: Option<T>,
    pub slope_se: Option<T>,
    /// `max / min` of `E / (R^{n-1} ln R)`.
    pub log_corrected_ratio_spread: Option<T>,
}

/// Node weights of `B_R`: 1 inside, 1/2 on the sphere (to rounding), 0 outside.
pub fn ball_weights<T: Real>(grid: &Grid<T>, omega: &BallDomain<T>) -> Vec<T> {
    let tol = T::lit(1e-9) * grid.h();
    (0..grid.len())
        .map(|i| {
            let p = grid.coord(i);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if r < omega.radius - tol {
                T::one()
            } else if r <= omega.radius + tol {
                T::lit(0.5)
            } else {
                T::zero()
            }
        })
        .collect()
}

fn check_margin<T: Real>(op: &Operator<T>, radius: T) -> Result<()> {
    let l = op.grid().half_width();
    let margin = match op.kernel().variant() {
        KernelVariant::Truncated { big_r_star, .. } => *big_r_star,
        _ => T::zero(),
    };
    if radius + margin > l {
        return Err(Error::SupportViolation(format!("B_{radius} with kernel margin {margin} does not fit in [-{l}, {l}]")));
    }
    Ok(())
}

/// Kinetic energy for a weighted node set `omega` (weights in `[0, 1]`):
/// returns `(interior, cross, tail part of cross)`.
pub fn kinetic_energy_weighted<T: Real>(op: &Operator<T>, u: &Field<T>, omega: &[T]) -> Result<(T, T, Interval<T>)> {
    let grid = *op.grid();
    if !grid.same_as(u.grid()) || omega.len() != grid.len() {
        return Err(Error::GridMismatch("energy inputs on different grids".into()));
    }
    let pu = op.padded(u);
    let phi = *op.phi();
    let members: Vec<usize> = (0..grid.len()).filter(|&i| omega[i] > T::zero()).collect();
    let half = T::lit(0.5);
    let parts: Vec<[T; 4]> = members
        .par_iter()
        .map(|&x| {
            let ux = u.value(x);
            let (mut inner, mut cross) = (T::zero(), T::zero());
            op.pair_visit(x, |y, w| {
                let wy = op.box_node(y).map_or(T::zero(), |n| omega[n]);
                let e = phi.phi(ux - pu.values[y]) * w;
                inner = inner + wy * e;
                cross = cross + (T::one() - wy) * e;
            });
            let tail = op.tail_at(x, u, None, Some((far_range(u), ux)), |ub, _| phi.phi(ux - ub));
            let wx = omega[x];
            [wx * half * inner, wx * (cross + tail.midpoint()), wx * tail.lo, wx * tail.hi]
        })
        .collect();
    let col = |k: usize| pairwise_sum(&parts.iter().map(|p| p[k]).collect::<Vec<_>>()) * grid.cell_volume();
    Ok((col(0), col(1), Interval { lo: col(2), hi: col(3) }))
}

/// `(interior, cross)` kinetic energy of `u` on `B_R`.
pub fn kinetic_energy<T: Real>(op: &Operator<T>, u: &Field<T>, omega: &BallDomain<T>) -> Result<(T, T)> {
    check_margin(op, omega.radius)?;
    let w = ball_weights(op.grid(), omega);
    let (a, b, _) = kinetic_energy_weighted(op, u, &w)?;
    Ok((a, b))
}

pub fn total_energy<T: Real>(
    op: &Operator<T>,
    u: &Field<T>,
    omega: &BallDomain<T>,
    reaction: &ReactionSpec<T>,
) -> Result<EnergyReport<T>> {
    check_margin(op, omega.radius)?;
    let w = ball_weights(op.grid(), omega);
    let (interior, cross, tail) = kinetic_energy_weighted(op, u, &w)?;
    let pot: Vec<T> = u.values().iter().zip(&w).map(|(&v, &wi)| wi * reaction.big_f(v)).collect();
    let potential = -pairwise_sum(&pot) * op.grid().cell_volume();
    Ok(EnergyReport {
        radius: omega.radius,
        kinetic_interior: interior,
        kinetic_cross: cross,
        potential,
        total: interior + cross + potential,
        tail_bracket: tail,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(b, se(b))`.
pub fn ols_slope<T: Real>(x: &[T], y: &[T]) -> (T, T) {
    let n = T::from_usize_(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let sxx: T = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: T = x.iter().zip(y).map(|(&xi, &yi)| (yi - a - b * xi).powi(2)).sum();
    let dof = n - T::lit(2.0);
    let se = if dof > T::zero() { (sse / dof / sxx).sqrt() } else { T::zero() };
    (b, se)
}

/// Energies on `B_R` for each radius and the growth fit.
pub fn energy_scaling<T: Real>(
    op: &Operator<T>,
    u: &Field<T>,
    radii: &[T],
    reaction: &ReactionSpec<T>,
) -> Result<ScalingFit<T>> {
    if radii.len() < 3 {
        return Err(Error::param("radii", "need at least three radii"));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] <= T::zero() {
        return Err(Error::param("radii", "must be positive and increasing"));
    }
    let reports =
        radii.iter().map(|&r| total_energy(op, u, &BallDomain::new(r), reaction)).collect::<Result<Vec<_>>>()?;
    let energies: Vec<T> = reports.iter().map(|r| r.total).collect();
    let positive = energies.iter().all(|&e| e > T::zero());
    let (slope, slope_se) = if positive {
        let lx: Vec<T> = radii.iter().map(|r| r.ln()).collect();
        let ly: Vec<T> = energies.iter().map(|e| e.ln()).collect();
        let (b, se) = ols_slope(&lx, &ly);
        (Some(b), Some(se))
    } else {
        (None, None)
    };
    let n = T::from_usize_(op.grid().dim());
    let spread = if positive && radii[0] > T::one() {
        let ratios: Vec<T> = radii.iter().zip(&energies).map(|(&r, &e)| e / (r.powf(n - T::one()) * r.ln())).collect();
        let max = ratios.iter().copied().fold(T::neg_infinity(), T::max);
        let min = ratios.iter().copied().fold(T::infinity(), T::min);
        Some(max / min)
    } else {
        None
    };
    Ok(ScalingFit { radii: radii.to_vec(), energies, reports, slope, slope_se, log_corrected_ratio_spread: spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::nonlinearity::PhiSpec;

    #[test]
    fn ols_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (b, se) = ols_slope(&x, &y);
        assert!((b - 2.0_f64).abs() < 1e-14 && se < 1e-12);
    }

    #[test]
    fn sphere_nodes_get_half_weight() {
        let g = Grid::new(1, 4.0_f64, 0.5).unwrap();
        let w = ball_weights(&g, &BallDomain::new(2.0));
        assert_eq!(w.iter().sum::<f64>(), 8.0);
    }

    #[test]
    fn margin_is_enforced() {
        let g = Grid::new(1, 10.0_f64, 0.5).unwrap();
        let op = Operator::with_defaults(g, KernelSpec::truncated_constant(1.0, 1.0, 2.0).unwrap(), PhiSpec::quadratic())
            .unwrap();
        let u = Field::constant(g, 0.0);
        assert!(kinetic_energy(&op, &u, &BallDomain::new(9.0)).is_err());
        assert_eq!(kinetic_energy(&op, &u, &BallDomain::new(8.0)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn scaling_needs_three_radii() {
        let g = Grid::new(1, 10.0_f64, 0.5).unwrap();
        let op = Operator::with_defaults(g, KernelSpec::power_law(1.0, 0.5).unwrap(), PhiSpec::quadratic()).unwrap();
        let u = Field::constant(g, 1.0);
        assert!(energy_scaling(&op, &u, &[1.0, 2.0], &ReactionSpec::DoubleWell).is_err());
        let fit = energy_scaling(&op, &u, &[1.0, 2.0, 4.0], &ReactionSpec::DoubleWell).unwrap();
        assert!(fit.slope.is_none());
        assert!(fit.energies.iter().all(|&e| e == 0.0));
    }
}
