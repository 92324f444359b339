use nonlocal_core::field::{sample_profile, FarField, Field, Grid, Profile, TestFunction};
use nonlocal_core::kernel::{Coefficient, KernelSpec};
use nonlocal_core::nonlinearity::{PhiSpec, ReactionSpec};
use nonlocal_core::operator::{apply_s, apply_t, Operator, QuadratureScheme, SumOperator, TailScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn arctan(x: f64) -> f64 {
    2.0 / PI * x.atan()
}

/// `(1/pi) int_0^inf (2u(x) - u(x+r) - u(x-r)) r^-2 dr` by composite Gauss-Legendre
/// on geometrically graded panels, with the Taylor limit near `r = 0`.
fn dense_half_laplacian(x: f64) -> f64 {
    let gl = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let integrand = |r: f64| (2.0 * arctan(x) - arctan(x + r) - arctan(x - r)) / (r * r);
    let mut total = 0.0;
    let mut a = 1e-6;
    // u'' term for (0, a): -u''(x) a
    let u2 = -4.0 / PI * x / (1.0 + x * x).powi(2);
    total += -u2 * a;
    while a < 1e7 {
        let b = a * 1.05;
        let (c, hw) = (0.5 * (a + b), 0.5 * (b - a));
        total += gl.iter().map(|&(t, w)| w * integrand(c + hw * t)).sum::<f64>() * hw;
        a = b;
    }
    // beyond 1e7 the integrand is 2u(x)/r^2 up to O(r^-3)
    total += 2.0 * arctan(x) / a;
    total / PI
}

fn half_laplacian() -> KernelSpec<f64> {
    KernelSpec::power_law(1.0 / PI, 1.0).unwrap()
}

fn sup_on_core(grid: &Grid<f64>, radius: f64, f: impl Fn(usize) -> f64) -> f64 {
    (0..grid.len()).filter(|&i| grid.coord(i)[0].abs() <= radius).map(f).fold(0.0, f64::max)
}

#[test]
fn dense_oracle_matches_closed_form() {
    for x in [0.0, 0.3, 1.0, 2.5, 5.0] {
        let exact = 2.0 / PI * x / (1.0 + x * x);
        assert!((dense_half_laplacian(x) - exact).abs() < 1e-7, "{x}");
    }
}

#[test]
fn arctan_layer_under_half_laplacian() {
    let g = Grid::new(1, 40.0, 0.05).unwrap();
    let u = sample_profile(&g, &Profile::ArctanLayer).unwrap();
    let op = Operator::with_defaults(g, half_laplacian(), PhiSpec::quadratic()).unwrap();
    let t = op.apply_t(&u).unwrap();
    let err = sup_on_core(&g, 5.0, |i| {
        let x = g.coord(i)[0];
        (t[i] - dense_half_laplacian(x)).abs()
    });
    assert!(err <= 0.05, "{err}");
}

#[test]
fn exact_layer_residual_and_refinement() {
    let res = |h: f64| {
        let g = Grid::new(1, 40.0, h).unwrap();
        let u = sample_profile(&g, &Profile::ArctanLayer).unwrap();
        let op = Operator::with_defaults(g, half_laplacian(), PhiSpec::quadratic()).unwrap();
        op.residual_in(&u, &ReactionSpec::SinePN, 5.0).unwrap()
    };
    let (a, b) = (res(0.05), res(0.025));
    assert!(a <= 0.05, "{a}");
    assert!(a / b >= 1.5, "{a} {b}");
}

#[test]
fn trivial_residuals() {
    let g = Grid::new(1, 10.0, 0.1).unwrap();
    let k = KernelSpec::power_law(1.0, 0.8).unwrap();
    let op = Operator::with_defaults(g, k, PhiSpec::quadratic()).unwrap();
    assert_eq!(op.residual(&Field::constant(g, 0.0), &ReactionSpec::DoubleWell).unwrap(), 0.0);
    assert_eq!(op.residual(&Field::constant(g, 1.0), &ReactionSpec::DoubleWell).unwrap(), 0.0);
}

#[test]
fn linearisation_matches_central_difference() {
    let g = Grid::new(1, 6.0, 0.1).unwrap();
    let u = sample_profile(&g, &Profile::TanhLayer { width: 1.0 }).unwrap();
    let v = Field::from_fn(g, FarField::ZeroOutside, |p: [f64; 2]| (-(p[0] - 0.5).powi(2)).exp() * 0.5);
    let k = KernelSpec::truncated_constant(1.0, 1.2, 2.0).unwrap();
    for phi in [PhiSpec::power(3.0).unwrap(), PhiSpec::curvature()] {
        let op = Operator::with_defaults(g, k.clone(), phi).unwrap();
        let l = op.apply_l(&u, &v).unwrap();
        let errs: Vec<f64> = [1e-3, 1e-4]
            .iter()
            .map(|&eps| {
                let shift = |s: f64| {
                    let vals = u.values().iter().zip(v.values()).map(|(a, b)| a + s * b).collect();
                    op.apply_t(&u.with_values(vals).unwrap()).unwrap()
                };
                let (p, m) = (shift(eps), shift(-eps));
                (0..g.len()).map(|i| ((p[i] - m[i]) / (2.0 * eps) - l[i]).abs()).fold(0.0, f64::max)
            })
            .collect();
        let scale = l.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        assert!(errs[0] <= 1e-5 * scale, "{} {:?}", phi.name(), errs);
        assert!(errs[1] <= 1e-7 * scale + 1e-9, "{} {:?}", phi.name(), errs);
    }
}

#[test]
fn translation_equivariance_in_the_interior() {
    let g = Grid::new(2, 4.0, 0.25).unwrap();
    let k = KernelSpec::truncated_constant(1.0, 0.9, 1.0).unwrap();
    let op = Operator::with_defaults(g, k, PhiSpec::curvature()).unwrap();
    let f = |p: [f64; 2]| (0.7 * p[0]).sin() * (0.4 * p[1]).cos() + 0.2 * p[0];
    let h = g.h();
    let u = Field::from_fn(g, FarField::Clamped, f);
    let s = Field::from_fn(g, FarField::Clamped, |p| f([p[0] + h, p[1]]));
    let (tu, ts) = (op.apply_t(&u).unwrap(), op.apply_t(&s).unwrap());
    let m = g.nodes_per_axis();
    for i1 in 8..m - 8 {
        for i0 in 8..m - 9 {
            let a = ts[g.index(i0, i1)];
            let b = tu[g.index(i0 + 1, i1)];
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

fn random_smooth(g: Grid<f64>, seed: u64, far: FarField<f64>, compact: bool) -> Field<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, f64)> =
        (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.5), rng.gen_range(0.2..1.5), rng.gen_range(0.0..6.0))).collect();
    let l = g.half_width();
    Field::from_fn(g, far, |p| {
        let s: f64 = modes.iter().map(|&(a, k0, k1, ph)| a * (k0 * p[0] + k1 * p[1] + ph).sin()).sum();
        if compact {
            let r2 = (p[0] * p[0] + p[1] * p[1]) / (0.8 * l).powi(2);
            if r2 >= 1.0 {
                0.0
            } else {
                s * (1.0 - r2).powi(2)
            }
        } else {
            s
        }
    })
}

#[test]
fn nodal_and_symmetric_forms_agree() {
    for (dim, k) in [
        (1, KernelSpec::power_law(1.0, 0.6).unwrap()),
        (1, KernelSpec::truncated_constant(1.0, 1.4, 1.5).unwrap()),
        (2, KernelSpec::truncated_constant(1.0, 1.0, 1.0).unwrap()),
    ] {
        let g = Grid::new(dim, 4.0, 0.25).unwrap();
        let u = random_smooth(g, 3, FarField::Clamped, false);
        let v = random_smooth(g, 9, FarField::ZeroOutside, true);
        for phi in [PhiSpec::quadratic(), PhiSpec::power(3.0).unwrap(), PhiSpec::curvature()] {
            let op = Operator::with_defaults(g, k.clone(), phi).unwrap();
            let sym = op.weak_residual(&u, &v, &ReactionSpec::Constant { value: 0.0 }).unwrap();
            let t = op.apply_t(&u).unwrap();
            let nodal: f64 = t.iter().zip(v.values()).map(|(a, b)| a * b).sum::<f64>() * g.cell_volume();
            assert!((sym - nodal).abs() <= 1e-10 * nodal.abs().max(1e-300), "{dim} {} {sym} {nodal}", phi.name());
        }
    }
}

#[test]
fn weak_residual_of_exact_layer() {
    let g = Grid::new(1, 40.0, 0.05).unwrap();
    let u = sample_profile(&g, &Profile::ArctanLayer).unwrap();
    let k = half_laplacian();
    let q = QuadratureScheme::default_for(&k);
    for (c, r) in [(0.0, 1.0), (1.5, 2.0), (-3.0, 0.5)] {
        let v = TestFunction::Bump { center: [c, 0.0], radius: r };
        let w = nonlocal_core::operator::weak_residual(&u, &v, &k, &PhiSpec::quadratic(), &ReactionSpec::SinePN, q).unwrap();
        let vf = v.sample(&g).unwrap();
        let l1 = vf.values().iter().map(|a| a.abs()).sum::<f64>() * g.h();
        assert!(w.abs() <= 0.05 * l1, "{w} {l1}");
    }
    let zero = Field::from_fn(g, FarField::ZeroOutside, |_| 0.0);
    let op = Operator::with_defaults(g, k, PhiSpec::quadratic()).unwrap();
    assert_eq!(op.weak_residual(&u, &zero, &ReactionSpec::SinePN).unwrap(), 0.0);
}

#[test]
fn weak_residual_rejects_oversized_support() {
    let g = Grid::new(1, 4.0, 0.1).unwrap();
    let u = Field::constant(g, 0.0);
    let k = half_laplacian();
    let v = TestFunction::Bump { center: [3.0, 0.0], radius: 2.0 };
    let e = nonlocal_core::operator::weak_residual(&u, &v, &k, &PhiSpec::quadratic(), &ReactionSpec::SinePN, QuadratureScheme::default_for(&k));
    assert!(matches!(e, Err(nonlocal_core::Error::SupportViolation(_))));
}

#[test]
fn quadratic_weak_form_is_nodal_strong_form() {
    let g = Grid::new(1, 10.0, 0.1).unwrap();
    let u = sample_profile(&g, &Profile::TanhLayer { width: 1.3 }).unwrap();
    let v = TestFunction::Bump { center: [0.4, 0.0], radius: 3.0 }.sample(&g).unwrap();
    let op = Operator::with_defaults(g, KernelSpec::power_law(0.7, 1.3).unwrap(), PhiSpec::quadratic()).unwrap();
    let weak = op.weak_residual(&u, &v, &ReactionSpec::DoubleWell).unwrap();
    let t = op.apply_t(&u).unwrap();
    let strong: f64 =
        (0..g.len()).map(|i| v.value(i) * (t[i] - ReactionSpec::DoubleWell.f(u.value(i)))).sum::<f64>() * g.h();
    assert!((weak - strong).abs() <= 1e-8, "{weak} {strong}");
}

#[test]
fn sums_of_operators() {
    let g = Grid::new(1, 5.0, 0.1).unwrap();
    let u = sample_profile(&g, &Profile::TanhLayer { width: 1.0 }).unwrap();
    let k = KernelSpec::truncated_constant(1.0, 1.0, 1.5).unwrap();
    let q = QuadratureScheme::default_for(&k);
    let quad = PhiSpec::quadratic();
    for x in [10, 50, 77] {
        let one: f64 = apply_t(&u, &k, &quad, q, x).unwrap();
        let two: f64 = apply_s(&u, &[(k.clone(), quad), (k.clone(), quad)], q, x).unwrap();
        assert!((two - 2.0 * one).abs() <= 1e-13 * (1.0 + one.abs()));
    }
    // triple with alpha_1 = alpha_3 = 2s, alpha_2 = p s
    let (s, p) = (0.5, 3.0);
    let specs = vec![
        (KernelSpec::truncated_constant(1.0, 2.0 * s, 1.5).unwrap(), PhiSpec::quadratic()),
        (KernelSpec::truncated_constant(1.0, p * s, 1.5).unwrap(), PhiSpec::power(p).unwrap()),
        (KernelSpec::truncated_constant(1.0, 2.0 * s, 1.5).unwrap(), PhiSpec::curvature()),
    ];
    let sum = SumOperator::from_specs(g, &specs, q).unwrap();
    let total = sum.apply_s(&u).unwrap();
    for (x, t) in total.iter().enumerate() {
        let parts: f64 = specs.iter().map(|(k, phi)| apply_t(&u, k, phi, q, x).unwrap()).sum();
        assert!((t - parts).abs() <= 1e-12 * (1.0 + parts.abs()));
    }
}

#[test]
fn power_tail_in_two_dimensions() {
    // constant far field: tail is exact per ray, so T[u] is unchanged when the
    // box grows with the field extended by the same constant
    let k = KernelSpec::power_law(1.0, 1.0).unwrap();
    let bump = |p: [f64; 2]| (-(p[0] * p[0] + p[1] * p[1])).exp();
    let t_center = |l: f64| {
        let g = Grid::new(2, l, 0.25).unwrap();
        let u = Field::from_fn(g, FarField::ZeroOutside, bump);
        Operator::with_defaults(g, k.clone(), PhiSpec::quadratic()).unwrap().apply_t_at(&u, g.center()).unwrap()
    };
    let (a, b) = (t_center(3.0), t_center(5.0));
    assert!((a - b).abs() <= 1e-4 * a.abs(), "{a} {b}");
}

#[test]
fn decay_bracket_contains_quadrature_value() {
    let k = KernelSpec::decaying(Coefficient::Constant(1.0), 1.0, 2.0, 1.5, 1.0).unwrap();
    let g = Grid::new(1, 6.0, 0.1).unwrap();
    let u = sample_profile(&g, &Profile::TanhLayer { width: 1.0 }).unwrap();
    let bracket = Operator::new(g, k.clone(), PhiSpec::quadratic(), QuadratureScheme { epsilon_cells: 1, tail: TailScheme::DecayBound }).unwrap();
    let quad = Operator::new(g, k, PhiSpec::quadratic(), QuadratureScheme { epsilon_cells: 1, tail: TailScheme::AnalyticPowerTail }).unwrap();
    let b = bracket.apply_t_bracket(&u).unwrap();
    let q = quad.apply_t(&u).unwrap();
    for (i, iv) in b.iter().enumerate() {
        assert!(iv.lo <= q[i] + 1e-12 && q[i] <= iv.hi + 1e-12, "{i}: {iv:?} {}", q[i]);
    }
}
