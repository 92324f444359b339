//! Uniform grids on `[-L, L]^n` (`n = 1, 2`), discrete fields with a
//! far-field closure, test functions and ball domains.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Node or point coordinates; the second slot is unused (zero) in 1D.
pub type Point<T> = [T; 2];

/// Uniform node-collocated grid on `[-L, L]^dim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    half_width: T,
    h: T,
    cells: usize,
}

impl<T: Real> Grid<T> {
    /// `2L/h` must be an even integer (so the origin is a node).
    pub fn new(dim: usize, half_width: T, h: T) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::param("grid.dim", format!("must be 1 or 2, got {dim}")));
        }
        if !(half_width > T::zero() && half_width.is_finite()) {
            return Err(Error::param("grid.L", format!("must be positive, got {half_width}")));
        }
        if !(h > T::zero() && h.is_finite()) {
            return Err(Error::param("grid.h", format!("must be positive, got {h}")));
        }
        let ratio = (T::lit(2.0) * half_width / h).to_f64_();
        let cells = ratio.round();
        if (ratio - cells).abs() > 1e-9 * ratio.max(1.0) || cells < 2.0 || !(cells as u64).is_multiple_of(2) {
            return Err(Error::param("grid.h", format!("2L/h must be an even integer, got {ratio}")));
        }
        Ok(Grid { dim, half_width, h, cells: cells as usize })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Nodes per axis, `2L/h + 1`.
    pub fn nodes_per_axis(&self) -> usize {
        self.cells + 1
    }

    pub fn shape(&self) -> [usize; 2] {
        let m = self.nodes_per_axis();
        if self.dim == 1 {
            [m, 1]
        } else {
            [m, m]
        }
    }

    pub fn len(&self) -> usize {
        let [a, b] = self.shape();
        a * b
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.dim as i32)
    }

    #[inline]
    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 + self.nodes_per_axis() * i1
    }

    #[inline]
    pub fn axis_indices(&self, idx: usize) -> [usize; 2] {
        let m = self.nodes_per_axis();
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % m, idx / m]
        }
    }

    #[inline]
    pub fn axis_coord(&self, i: isize) -> T {
        -self.half_width + T::from_f64(i as f64).unwrap() * self.h
    }

    /// Coordinates of a lattice point (may lie outside the box).
    #[inline]
    pub fn lattice_point(&self, i0: isize, i1: isize) -> Point<T> {
        if self.dim == 1 {
            [self.axis_coord(i0), T::zero()]
        } else {
            [self.axis_coord(i0), self.axis_coord(i1)]
        }
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> Point<T> {
        let [i0, i1] = self.axis_indices(idx);
        self.lattice_point(i0 as isize, i1 as isize)
    }

    /// Node index of the origin.
    pub fn center(&self) -> usize {
        let c = self.cells / 2;
        if self.dim == 1 {
            c
        } else {
            self.index(c, c)
        }
    }

    #[inline]
    pub fn contains_lattice(&self, i0: isize, i1: isize) -> bool {
        let m = self.nodes_per_axis() as isize;
        (0..m).contains(&i0) && (self.dim == 1 && i1 == 0 || self.dim == 2 && (0..m).contains(&i1))
    }

    /// Nodes with `|x|_inf <= radius`.
    pub fn core_nodes(&self, radius: T) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let p = self.coord(i);
                p[0].abs() <= radius && p[1].abs() <= radius
            })
            .collect()
    }

    pub fn same_as(&self, other: &Grid<T>) -> bool {
        self.dim == other.dim && self.cells == other.cells && self.h == other.h
    }
}

/// How a field is continued outside the box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FarField<T> {
    /// `+1` beyond the box on the side `x . normal > 0`, `-1` on the other,
    /// and constant along the directions orthogonal to `normal`.
    LayerSign { normal: Point<T> },
    ConstantValue(T),
    ZeroOutside,
    /// Value of the nearest box point (no pinning of the far field).
    Clamped,
}

impl<T: Real> FarField<T> {
    /// Layer along the last coordinate `x_n`.
    pub fn layer(dim: usize) -> Self {
        if dim == 1 {
            FarField::LayerSign { normal: [T::one(), T::zero()] }
        } else {
            FarField::LayerSign { normal: [T::zero(), T::one()] }
        }
    }

    /// Layer whose normal is `e_2` rotated by `angle` (radians) towards `e_1`.
    pub fn tilted_layer(angle: T) -> Self {
        FarField::LayerSign { normal: [angle.sin(), angle.cos()] }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FarField::LayerSign { .. } => "layer_sign",
            FarField::ConstantValue(_) => "constant",
            FarField::ZeroOutside => "zero",
            FarField::Clamped => "clamped",
        }
    }
}

/// Discrete function on a grid plus its far-field closure.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid<T>,
    values: Vec<T>,
    far_field: FarField<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>, far_field: FarField<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at node {i}")));
        }
        Ok(Field { grid, values, far_field })
    }

    pub fn from_fn(grid: Grid<T>, far_field: FarField<T>, f: impl Fn(Point<T>) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        Field { grid, values, far_field }
    }

    pub fn constant(grid: Grid<T>, c: T) -> Self {
        Field { grid, values: vec![c; grid.len()], far_field: FarField::ConstantValue(c) }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn far_field(&self) -> FarField<T> {
        self.far_field
    }

    pub fn with_far_field(mut self, far_field: FarField<T>) -> Self {
        self.far_field = far_field;
        self
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Field::new(self.grid, values, self.far_field)
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn value(&self, idx: usize) -> T {
        self.values[idx]
    }

    /// Value at a lattice point, applying the closure outside the box.
    pub fn lattice_value(&self, i0: isize, i1: isize) -> T {
        let g = &self.grid;
        if g.contains_lattice(i0, i1) {
            return self.values[g.index(i0 as usize, i1 as usize)];
        }
        let m = g.nodes_per_axis() as isize;
        let clamp = |i: isize| i.clamp(0, m - 1);
        match self.far_field {
            FarField::ConstantValue(c) => c,
            FarField::ZeroOutside => T::zero(),
            FarField::Clamped => {
                let j1 = if g.dim == 1 { 0 } else { clamp(i1) };
                self.values[g.index(clamp(i0) as usize, j1 as usize)]
            }
            FarField::LayerSign { normal } => {
                if g.dim == 1 {
                    return sign_of(normal[0] * T::from_f64(i0 as f64 - (m as f64 - 1.0) / 2.0).unwrap());
                }
                if normal[0] == T::zero() {
                    if !(0..m).contains(&i1) {
                        return sign_of(normal[1] * T::from_f64(i1 as f64 - (m as f64 - 1.0) / 2.0).unwrap());
                    }
                    return self.values[g.index(clamp(i0) as usize, i1 as usize)];
                }
                if normal[1] == T::zero() {
                    if !(0..m).contains(&i0) {
                        return sign_of(normal[0] * T::from_f64(i0 as f64 - (m as f64 - 1.0) / 2.0).unwrap());
                    }
                    return self.values[g.index(i0 as usize, clamp(i1) as usize)];
                }
                self.value_at(g.lattice_point(i0, i1))
            }
        }
    }

    /// Value at an arbitrary point: linear/bilinear interpolation inside the
    /// box, the closure outside.
    pub fn value_at(&self, p: Point<T>) -> T {
        let g = &self.grid;
        let l = g.half_width;
        let inside = p[0].abs() <= l && (g.dim == 1 || p[1].abs() <= l);
        if inside {
            return self.interpolate(p);
        }
        match self.far_field {
            FarField::ConstantValue(c) => c,
            FarField::ZeroOutside => T::zero(),
            FarField::Clamped => self.interpolate([p[0].max(-l).min(l), p[1].max(-l).min(l)]),
            FarField::LayerSign { normal } => {
                if g.dim == 1 {
                    return sign_of(normal[0] * p[0]);
                }
                // move along the normal's orthogonal line until the box is hit
                let s = normal[0] * p[0] + normal[1] * p[1];
                let perp = [normal[1], -normal[0]];
                let w = perp[0] * p[0] + perp[1] * p[1];
                let mut lo = T::neg_infinity();
                let mut hi = T::infinity();
                for k in 0..2 {
                    // coordinate k of s*normal + w'*perp must lie in [-L, L]
                    let base = s * normal[k];
                    let slope = perp[k];
                    if slope.abs() <= T::epsilon() {
                        if base.abs() > l {
                            return sign_of(s);
                        }
                        continue;
                    }
                    let a = (-l - base) / slope;
                    let b = (l - base) / slope;
                    lo = lo.max(a.min(b));
                    hi = hi.min(a.max(b));
                }
                if lo > hi {
                    return sign_of(s);
                }
                let wc = w.max(lo).min(hi);
                let q = [s * normal[0] + wc * perp[0], s * normal[1] + wc * perp[1]];
                self.interpolate([q[0].max(-l).min(l), q[1].max(-l).min(l)])
            }
        }
    }

    fn interpolate(&self, p: Point<T>) -> T {
        let g = &self.grid;
        let m = g.nodes_per_axis();
        let locate = |x: T| -> (usize, T) {
            let s = (x + g.half_width) / g.h;
            let i = s.floor().to_f64_().max(0.0).min((m - 2) as f64) as usize;
            let frac = s - T::from_usize_(i);
            (i, frac.max(T::zero()).min(T::one()))
        };
        let (i0, f0) = locate(p[0]);
        if g.dim == 1 {
            let a = self.values[i0];
            let b = self.values[i0 + 1];
            return if f0 == T::zero() { a } else { a + (b - a) * f0 };
        }
        let (i1, f1) = locate(p[1]);
        let v = |a: usize, b: usize| self.values[g.index(a, b)];
        let bottom = v(i0, i1) * (T::one() - f0) + v(i0 + 1, i1) * f0;
        let top = v(i0, i1 + 1) * (T::one() - f0) + v(i0 + 1, i1 + 1) * f0;
        bottom * (T::one() - f1) + top * f1
    }

    /// Values on the lattice extended by `pad` nodes on every side, laid out
    /// row-major with axis 0 fastest.
    pub fn padded(&self, pad: usize) -> Padded<T> {
        let g = &self.grid;
        let m = g.nodes_per_axis();
        let mp = m + 2 * pad;
        let rows = if g.dim == 1 { 1 } else { mp };
        let p = pad as isize;
        let mut values = Vec::with_capacity(mp * rows);
        for r in 0..rows {
            for c in 0..mp {
                let i0 = c as isize - p;
                let i1 = if g.dim == 1 { 0 } else { r as isize - p };
                values.push(self.lattice_value(i0, i1));
            }
        }
        Padded { dim: g.dim, pad, stride: mp, rows, values }
    }

    /// `max |u(x_n = +-L) -+ 1|` for layer far fields.
    pub fn boundary_layer_mismatch(&self) -> Option<T> {
        let FarField::LayerSign { .. } = self.far_field else { return None };
        let g = &self.grid;
        let m = g.nodes_per_axis();
        let mut worst = T::zero();
        if g.dim == 1 {
            worst = worst.max((self.values[0] + T::one()).abs());
            worst = worst.max((self.values[m - 1] - T::one()).abs());
        } else {
            for i0 in 0..m {
                worst = worst.max((self.values[g.index(i0, 0)] + T::one()).abs());
                worst = worst.max((self.values[g.index(i0, m - 1)] - T::one()).abs());
            }
        }
        Some(worst)
    }

    /// `sum_x u(x) h^n`.
    pub fn integral(&self) -> T {
        crate::scalar::pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    /// Discrete `L^2` norm.
    pub fn l2_norm(&self) -> T {
        let sq: Vec<T> = self.values.iter().map(|v| *v * *v).collect();
        (crate::scalar::pairwise_sum(&sq) * self.grid.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> T {
        crate::scalar::max_abs(&self.values)
    }

    pub fn mean(&self) -> T {
        crate::scalar::pairwise_sum(&self.values) / T::from_usize_(self.values.len())
    }
}

#[inline]
fn sign_of<T: Real>(s: T) -> T {
    if s > T::zero() {
        T::one()
    } else if s < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Field values on a padded lattice.
#[derive(Clone, Debug)]
pub struct Padded<T> {
    pub dim: usize,
    pub pad: usize,
    /// Row length `m + 2 pad`.
    pub stride: usize,
    pub rows: usize,
    pub values: Vec<T>,
}

impl<T: Copy> Padded<T> {
    /// Padded index of box node `(i0, i1)`.
    #[inline]
    pub fn index_of(&self, i0: usize, i1: usize) -> usize {
        if self.dim == 1 {
            i0 + self.pad
        } else {
            (i0 + self.pad) + self.stride * (i1 + self.pad)
        }
    }

    /// Padded index of the box node at `(i0, i1)` shifted by `(d0, d1)`, if
    /// it lies on the padded lattice.
    #[inline]
    pub fn shifted(&self, i0: usize, i1: usize, d0: isize, d1: isize) -> Option<usize> {
        let c = (i0 + self.pad) as isize + d0;
        if c < 0 || c >= self.stride as isize {
            return None;
        }
        if self.dim == 1 {
            return Some(c as usize);
        }
        let r = (i1 + self.pad) as isize + d1;
        if r < 0 || r >= self.rows as isize {
            return None;
        }
        Some(c as usize + self.stride * r as usize)
    }
}

/// Gradient values per node (second component zero in 1D).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    pub grid: Grid<T>,
    pub values: Vec<Point<T>>,
}

impl<T: Real> VectorField<T> {
    pub fn norm(&self, idx: usize) -> T {
        let [a, b] = self.values[idx];
        (a * a + b * b).sqrt()
    }

    pub fn max_norm(&self) -> T {
        (0..self.values.len()).map(|i| self.norm(i)).fold(T::zero(), |a, b| a.max(b))
    }

    /// Component `nu . grad u` as a field with the given closure.
    pub fn directional(&self, nu: Point<T>, far_field: FarField<T>) -> Field<T> {
        let values = self.values.iter().map(|g| g[0] * nu[0] + g[1] * nu[1]).collect();
        Field { grid: self.grid, values, far_field }
    }
}

/// Central differences; at the box faces the closure supplies ghost values,
/// except for `ZeroOutside`, where a one-sided second-order stencil is used.
pub fn gradient<T: Real>(u: &Field<T>) -> VectorField<T> {
    let g = *u.grid();
    let padded = u.padded(1);
    let m = g.nodes_per_axis();
    let two_h = T::lit(2.0) * g.h();
    let one_sided = matches!(u.far_field(), FarField::ZeroOutside);
    let values = (0..g.len())
        .map(|idx| {
            let [i0, i1] = g.axis_indices(idx);
            let mut out = [T::zero(); 2];
            for (k, slot) in out.iter_mut().enumerate().take(g.dim()) {
                let i = if k == 0 { i0 } else { i1 };
                let step = |d: isize| {
                    let (d0, d1) = if k == 0 { (d, 0) } else { (0, d) };
                    padded.values[padded.shifted(i0, i1, d0, d1).unwrap()]
                };
                let here = padded.values[padded.index_of(i0, i1)];
                *slot = if one_sided && i == 0 {
                    (-T::lit(3.0) * here + T::lit(4.0) * step(1) - step(2)) / two_h
                } else if one_sided && i == m - 1 {
                    (T::lit(3.0) * here - T::lit(4.0) * step(-1) + step(-2)) / two_h
                } else {
                    (step(1) - step(-1)) / two_h
                };
            }
            out
        })
        .collect();
    VectorField { grid: g, values }
}

/// Gradient on the lattice padded by `pad` nodes (values from the closure),
/// one-sided at the outermost ring. Indexed like [`Padded`].
pub fn padded_gradient<T: Real>(u: &Field<T>, pad: usize) -> Padded<Point<T>> {
    let extended = u.padded(pad + 1);
    let stride = extended.stride;
    let rows = extended.rows;
    let dim = extended.dim;
    let two_h = T::lit(2.0) * u.grid().h();
    let inner_stride = stride - 2;
    let inner_rows = if dim == 1 { 1 } else { rows - 2 };
    let mut values = Vec::with_capacity(inner_stride * inner_rows);
    for r in 0..inner_rows {
        for c in 0..inner_stride {
            let (cr, cc) = if dim == 1 { (0, c + 1) } else { (r + 1, c + 1) };
            let at = |rr: usize, ccc: usize| extended.values[ccc + stride * rr];
            let gx = (at(cr, cc + 1) - at(cr, cc - 1)) / two_h;
            let gy = if dim == 1 { T::zero() } else { (at(cr + 1, cc) - at(cr - 1, cc)) / two_h };
            values.push([gx, gy]);
        }
    }
    Padded { dim, pad, stride: inner_stride, rows: inner_rows, values }
}

/// Compactly supported test functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction<T> {
    /// `1/2` on `|x| <= sqrt R`, `(log R - log|x|) / log R` up to `|x| = R`, 0 beyond.
    LogCutoff { radius: T },
    /// 1 on `B_R`, 0 outside `B_{2R}`, linear in `|x|` in between.
    PlateauCutoff { radius: T },
    /// `(1 - |x - c|^2 / r^2)^2` inside `B_r(c)`.
    Bump { center: Point<T>, radius: T },
}

impl<T: Real> TestFunction<T> {
    pub fn log_cutoff(radius: T) -> Result<Self> {
        if !(radius > T::one()) {
            return Err(Error::param("R", format!("log cutoff needs R > 1, got {radius}")));
        }
        Ok(TestFunction::LogCutoff { radius })
    }

    pub fn eval(&self, x: &[T]) -> T {
        eval_test(self, x)
    }

    /// Smallest `rho` with `supp ⊂ {|x|_inf <= rho}`.
    pub fn support_extent(&self) -> T {
        match *self {
            TestFunction::LogCutoff { radius } => radius,
            TestFunction::PlateauCutoff { radius } => T::lit(2.0) * radius,
            TestFunction::Bump { center, radius } => center[0].abs().max(center[1].abs()) + radius,
        }
    }

    /// Samples onto `grid` with `ZeroOutside` closure, after checking that
    /// the support fits in the box.
    pub fn sample(&self, grid: &Grid<T>) -> Result<Field<T>> {
        if self.support_extent() > grid.half_width() {
            return Err(Error::SupportViolation(format!(
                "support extent {} exceeds L = {}",
                self.support_extent(),
                grid.half_width()
            )));
        }
        let dim = grid.dim();
        Ok(Field::from_fn(*grid, FarField::ZeroOutside, |p| self.eval(&p[..dim])))
    }
}

/// Evaluates a test function at `x` (`x.len()` is the dimension).
pub fn eval_test<T: Real>(t: &TestFunction<T>, x: &[T]) -> T {
    let norm = |v: &[T]| v.iter().fold(T::zero(), |s, &a| s + a * a).sqrt();
    match *t {
        TestFunction::LogCutoff { radius } => {
            let r = norm(x);
            if r <= radius.sqrt() {
                T::lit(0.5)
            } else if r < radius {
                (radius.ln() - r.ln()) / radius.ln()
            } else {
                T::zero()
            }
        }
        TestFunction::PlateauCutoff { radius } => {
            let r = norm(x);
            if r <= radius {
                T::one()
            } else if r < T::lit(2.0) * radius {
                T::lit(2.0) - r / radius
            } else {
                T::zero()
            }
        }
        TestFunction::Bump { center, radius } => {
            let mut d2 = T::zero();
            for (k, &v) in x.iter().enumerate() {
                let d = v - center[k];
                d2 = d2 + d * d;
            }
            let s = d2 / (radius * radius);
            if s >= T::one() {
                T::zero()
            } else {
                (T::one() - s) * (T::one() - s)
            }
        }
    }
}

/// Random bumps with centres uniform in the core box `|x|_inf <= core` and
/// radii uniform in `[r_min, r_max]`, from a fixed seed.
pub fn random_bumps<T: Real>(dim: usize, count: usize, core: T, r_min: T, r_max: T, seed: u64) -> Vec<TestFunction<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut center = [T::zero(); 2];
            for c in center.iter_mut().take(dim) {
                *c = T::lit(rng.gen_range(-1.0..=1.0)) * core;
            }
            let t = T::lit(rng.gen_range(0.0..=1.0));
            TestFunction::Bump { center, radius: r_min + (r_max - r_min) * t }
        })
        .collect()
}

/// Ball `B_R` realised as the node mask `{|x| <= R}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallDomain<T> {
    pub radius: T,
}

impl<T: Real> BallDomain<T> {
    pub fn new(radius: T) -> Self {
        BallDomain { radius }
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        p[0] * p[0] + p[1] * p[1] <= self.radius * self.radius
    }

    pub fn mask(&self, grid: &Grid<T>) -> Vec<bool> {
        (0..grid.len()).map(|i| self.contains(&grid.coord(i))).collect()
    }
}

/// Closed-form initial profiles.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile<T> {
    /// `tanh(x_n / w)`.
    TanhLayer { width: T },
    /// `(2/pi) arctan(x_n)`.
    ArctanLayer,
    Constant(T),
    /// `tanh(x . e / w)` with `e = (sin a, cos a)`.
    TiltedLayer { angle: T, width: T },
    /// Layer with a seeded wavy interface and smooth bulk perturbation of size `amplitude`.
    PerturbedLayer { width: T, amplitude: T, seed: u64 },
    /// `|x|^2`.
    Radial,
    /// Values given node by node.
    Table(Vec<T>),
}

/// Named parameters for [`Profile::by_name`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileParams<T> {
    pub width: T,
    pub angle: T,
    pub amplitude: T,
    pub value: T,
    pub seed: u64,
}

impl<T: Real> Default for ProfileParams<T> {
    fn default() -> Self {
        ProfileParams { width: T::one(), angle: T::zero(), amplitude: T::lit(0.1), value: T::zero(), seed: 0 }
    }
}

impl<T: Real> Profile<T> {
    pub const NAMES: [&'static str; 6] = ["tanh_layer", "arctan_layer", "constant", "tilted_layer", "perturbed_layer", "radial"];

    pub fn by_name(name: &str, params: &ProfileParams<T>) -> Result<Self> {
        Ok(match name {
            "tanh_layer" | "tanh" | "extruded_layer" => Profile::TanhLayer { width: params.width },
            "arctan_layer" | "arctan" => Profile::ArctanLayer,
            "constant" => Profile::Constant(params.value),
            "tilted_layer" | "tilted" => Profile::TiltedLayer { angle: params.angle, width: params.width },
            "perturbed_layer" | "perturbed" => {
                Profile::PerturbedLayer { width: params.width, amplitude: params.amplitude, seed: params.seed }
            }
            "radial" => Profile::Radial,
            other => return Err(Error::UnknownProfile(other.to_string())),
        })
    }
}

/// Samples a closed-form profile; the far field matches the profile class.
pub fn sample_profile<T: Real>(grid: &Grid<T>, profile: &Profile<T>) -> Result<Field<T>> {
    let dim = grid.dim();
    let last = dim - 1;
    let g = *grid;
    match profile {
        Profile::TanhLayer { width } => {
            if !(*width > T::zero()) {
                return Err(Error::param("width", "must be positive"));
            }
            Ok(Field::from_fn(g, FarField::layer(dim), |p| (p[last] / *width).tanh()))
        }
        Profile::ArctanLayer => Ok(Field::from_fn(g, FarField::layer(dim), |p| {
            T::lit(2.0) / T::PI() * p[last].atan()
        })),
        Profile::Constant(c) => Ok(Field::constant(g, *c)),
        Profile::TiltedLayer { angle, width } => {
            if dim != 2 {
                return Err(Error::Precondition("tilted layers need dim = 2".into()));
            }
            let e = [angle.sin(), angle.cos()];
            Ok(Field::from_fn(g, FarField::tilted_layer(*angle), |p| ((p[0] * e[0] + p[1] * e[1]) / *width).tanh()))
        }
        Profile::PerturbedLayer { width, amplitude, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let l = g.half_width();
            let modes: Vec<(T, T, T)> = (1..=3)
                .map(|k| {
                    let a = T::lit(rng.gen_range(-1.0..=1.0));
                    let ph = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
                    (T::from_usize_(k), a, ph)
                })
                .collect();
            let bulk: (T, T) = (T::lit(rng.gen_range(0.0..std::f64::consts::TAU)), T::lit(rng.gen_range(0.0..std::f64::consts::TAU)));
            let amp = *amplitude;
            let w = *width;
            Ok(Field::from_fn(g, FarField::layer(dim), move |p| {
                let x1 = if dim == 2 { p[0] } else { T::zero() };
                let shift: T = modes
                    .iter()
                    .map(|&(k, a, ph)| a * (k * T::PI() * x1 / l + ph).sin())
                    .fold(T::zero(), |s, v| s + v);
                let base = ((p[last] - amp * shift * T::lit(2.0)) / w).tanh();
                let s = (p[last] / w).tanh();
                let envelope = T::one() - s * s;
                let wobble = (T::PI() * x1 / l * T::lit(2.0) + bulk.0).sin() * (T::PI() * p[last] / l * T::lit(3.0) + bulk.1).cos();
                base + amp * envelope * wobble
            }))
        }
        Profile::Radial => Ok(Field::from_fn(g, FarField::Clamped, |p| p[0] * p[0] + p[1] * p[1])),
        Profile::Table(values) => Field::new(g, values.clone(), FarField::ZeroOutside),
    }
}

/// Formats like C's `%.17g`.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `x[,y],value` rows, LF endings, `%.17g` numbers.
pub fn write_field_csv<T: Real, W: Write>(field: &Field<T>, mut out: W) -> Result<()> {
    let g = field.grid();
    if g.dim() == 1 {
        out.write_all(b"x,value\n")?;
    } else {
        out.write_all(b"x,y,value\n")?;
    }
    for i in 0..g.len() {
        let p = g.coord(i);
        let v = format_g17(field.value(i).to_f64_());
        if g.dim() == 1 {
            writeln!(out, "{},{}", format_g17(p[0].to_f64_()), v)?;
        } else {
            writeln!(out, "{},{},{}", format_g17(p[0].to_f64_()), format_g17(p[1].to_f64_()), v)?;
        }
    }
    Ok(())
}

/// Reads a field written by [`write_field_csv`]; the grid is inferred from the
/// coordinates and the closure must be supplied.
pub fn read_field_csv<T: Real, R: BufRead>(input: R, far_field: FarField<T>) -> Result<Field<T>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty input".into()))??;
    let dim = match header.trim_end() {
        "x,value" => 1,
        "x,y,value" => 2,
        other => return Err(Error::Format(format!("unexpected header `{other}`"))),
    };
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != dim + 1 {
            return Err(Error::Format(format!("line {}: expected {} columns", no + 2, dim + 1)));
        }
        let mut row = [0.0; 3];
        for (k, p) in parts.iter().enumerate() {
            row[if k == dim { 2 } else { k }] =
                p.trim().parse().map_err(|_| Error::Format(format!("line {}: bad number `{p}`", no + 2)))?;
        }
        rows.push(row);
    }
    let m = if dim == 1 { rows.len() } else { (rows.len() as f64).sqrt().round() as usize };
    if m < 3 || (dim == 2 && m * m != rows.len()) {
        return Err(Error::Format(format!("{} rows do not form a square grid", rows.len())));
    }
    let l = -rows[0][0];
    let h = rows[1][0] - rows[0][0];
    let grid = Grid::new(dim, T::lit(l), T::lit(h))?;
    if grid.len() != rows.len() {
        return Err(Error::Format("row count does not match inferred grid".into()));
    }
    let values = rows.iter().map(|r| T::lit(r[2])).collect();
    Field::new(grid, values, far_field)
}
