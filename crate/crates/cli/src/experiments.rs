//! The eight experiments. Each returns its CSV files and manifest results;
//! nothing here touches the file system.

use nonlocal_core::energy::energy_scaling;
use nonlocal_core::field::{gradient, random_bumps, write_field_csv, FarField, Field, Grid};
use nonlocal_core::kernel::{check_kernel_class, fractional_laplacian_constant, KernelVariant};
use nonlocal_core::operator::{Interaction, Operator, QuadratureScheme, SumOperator};
use nonlocal_core::solver::{
    liouville_probe, relax, solve_2d, solve_layer_1d_from, FlowReport, FlowVerdict, LiouvilleVerdict,
};
use nonlocal_core::stability::{
    defect_radius, gap_samples, harnack_ratio, max_quotient_residual, poincare_gap, principal_eigenpair,
    quotient_growth_check, quotient_residual, symmetry_defect, QuotientData,
};

use crate::setup::{sum_specs, Experiment, Init, Setup};
use crate::{Cell, CliError, Report, Table};

/// Relative tolerance of the inequality checks.
pub const GAP_REL_TOL: f64 = 1e-8;
/// Eigen solver budget and residual target.
const EIG_ITERS: usize = 200;
const EIG_TOL: f64 = 1e-9;

pub fn run(s: &Setup) -> Result<Report, CliError> {
    match s.experiment {
        Experiment::OperatorCheck => operator_check(s),
        Experiment::Layer1d => layer_1d(s),
        Experiment::EnergyScaling => energy(s),
        Experiment::Stability => stability(s),
        Experiment::Symmetry2d => symmetry_2d(s),
        Experiment::Liouville => liouville(s),
        Experiment::SumOperator => sum_operator(s),
        Experiment::Quotient => quotient(s),
    }
}

fn operator(s: &Setup) -> Result<Operator<f64>, CliError> {
    Ok(Operator::with_defaults(s.grid, s.kernel.clone(), s.phi)?)
}

fn sum_operator_of(s: &Setup) -> Result<SumOperator<f64>, CliError> {
    let (sh, p) = s.sum.expect("sum parameters resolved");
    let specs = sum_specs(&s.kernel_params, s.grid.dim(), sh, p)?;
    let q = QuadratureScheme::default_for(&specs[0].0);
    Ok(SumOperator::from_specs(s.grid, &specs, q)?)
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

fn coord_cells(g: &Grid<f64>, i: usize) -> Vec<Cell> {
    let p = g.coord(i);
    (0..g.dim()).map(|k| Cell::Num(p[k])).collect()
}

fn field_csv(u: &Field<f64>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_field_csv(u, &mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

fn flow_log_csv(rep: &FlowReport<f64>) -> String {
    let mut t = Table::new(&["iter", "residual", "sup_change"]);
    for e in &rep.log {
        t.row(&[Cell::Int(e.iter as i64), e.residual.into(), e.sup_change.into()]);
    }
    t.into_string()
}

fn gaps_csv(rows: impl Iterator<Item = (usize, f64, f64)>) -> String {
    let mut t = Table::new(&["test-id", "lhs", "rhs", "gap"]);
    for (id, lhs, rhs) in rows {
        t.row(&[Cell::Int(id as i64), lhs.into(), rhs.into(), (rhs - lhs).into()]);
    }
    t.into_string()
}

/// Solution produced by the configured flow (or the initial data when
/// `init.relax = false`).
struct Solved {
    field: Field<f64>,
    flow: Option<FlowReport<f64>>,
    layer: Option<(bool, bool)>,
}

fn solve<I: Interaction<f64> + ?Sized>(op: &I, s: &Setup) -> Result<Solved, CliError> {
    let u0 = s.init.field(&s.grid)?;
    if !s.relax {
        return Ok(Solved { field: u0, flow: None, layer: None });
    }
    let layer_data = matches!(u0.far_field(), FarField::LayerSign { .. });
    if s.grid.dim() == 1 && layer_data && s.reaction.has_unit_wells() {
        let sol = solve_layer_1d_from(op, &s.reaction, &u0, &s.flow)?;
        return Ok(Solved { field: sol.field, flow: Some(sol.report), layer: Some((sol.monotone, sol.limits_ok)) });
    }
    if s.grid.dim() == 2 && layer_data {
        let profile = match &s.init {
            Init::Profile(p) => p.clone(),
            Init::Step => return Err(CliError::Precondition("2D flows need tanh, tilted or perturbed initial data".into())),
        };
        let (field, rep) = solve_2d(op, &s.reaction, &profile, &s.flow)?;
        return Ok(Solved { field, flow: Some(rep), layer: None });
    }
    let (field, rep) = relax(op, &u0, &s.reaction, &s.flow)?;
    Ok(Solved { field, flow: Some(rep), layer: None })
}

/// Adds the field, the flow log and the flow summary; flags non-convergence.
fn record_flow(r: &mut Report, sol: &Solved) -> Result<(), CliError> {
    r.file("field.csv", field_csv(&sol.field)?);
    let Some(rep) = &sol.flow else {
        r.result("flow", "skipped (init.relax = false)");
        return Ok(());
    };
    r.file("flow_log.csv", flow_log_csv(rep));
    r.result("flow_verdict", rep.verdict.describe());
    r.result("flow_iterations", rep.iterations);
    r.num("flow_final_residual", rep.final_residual);
    r.num("flow_tol", rep.tol);
    r.num("flow_tau_requested", rep.tau_requested);
    r.num("flow_tau_final", rep.tau);
    r.result("flow_halvings", rep.halvings);
    r.result("flow_monotonicity_violations", rep.monotonicity_violations.len());
    if let Some((monotone, limits_ok)) = sol.layer {
        r.result("layer_monotone", monotone);
        r.result("layer_limits_ok", limits_ok);
    }
    if rep.verdict != FlowVerdict::Converged {
        r.diverged = true;
    }
    Ok(())
}

fn operator_check(s: &Setup) -> Result<Report, CliError> {
    let op = operator(s)?;
    let u = s.init.field(&s.grid)?;
    let batched = op.apply_t(&u)?;
    let mut header = coord_header(s.grid.dim());
    header.extend(["u", "T", "T_pointwise", "abs_diff"]);
    let mut t = Table::new(&header);
    let mut worst: f64 = 0.0;
    for (i, &tb) in batched.iter().enumerate() {
        let tp = op.apply_t_at(&u, i)?;
        worst = worst.max((tb - tp).abs());
        let mut row = coord_cells(&s.grid, i);
        row.extend([u.value(i).into(), tb.into(), tp.into(), (tb - tp).abs().into()]);
        t.row(&row);
    }
    let mut r = Report::default();
    r.file("operator_check.csv", t.into_string());
    let constants = op.apply_t(&Field::constant(s.grid, 0.7))?;
    r.result("kernel_class", s.kernel.class_name());
    if s.kernel_params.kind == "fractional" {
        r.num("kernel_lambda", fractional_laplacian_constant(s.grid.dim(), s.alpha)?);
    }
    let checks = check_kernel_class(&s.kernel, s.grid.dim(), 64);
    r.result("kernel_class_checks_passed", checks.all_passed());
    r.result("stencil_pairs", op.stencil_pairs());
    r.result("pad", op.pad());
    r.num("max_batched_vs_pointwise", worst);
    r.num("sup_T_of_constant", constants.iter().fold(0.0, |a: f64, b| a.max(b.abs())));
    r.num("T_at_center", batched[s.grid.center()]);
    Ok(r)
}

fn layer_1d(s: &Setup) -> Result<Report, CliError> {
    let op = operator(s)?;
    let sol = solve(&op, s)?;
    let mut r = Report::default();
    record_flow(&mut r, &sol)?;
    Ok(r)
}

/// Slope bound of the energy growth for the configured kernel class.
fn energy_regime(s: &Setup) -> (&'static str, Option<f64>) {
    let n = s.grid.dim() as f64;
    match s.kernel.variant() {
        KernelVariant::Truncated { .. } => ("truncated", Some(n - 1.0)),
        _ if s.alpha < 1.0 => ("alpha_below_one", Some(n - s.alpha)),
        _ if s.alpha == 1.0 => ("alpha_one_log", None),
        _ => ("alpha_above_one", Some(n - 1.0)),
    }
}

fn energy(s: &Setup) -> Result<Report, CliError> {
    let op = operator(s)?;
    let sol = solve(&op, s)?;
    let mut r = Report::default();
    record_flow(&mut r, &sol)?;
    let fit = energy_scaling(&op, &sol.field, &s.radii, &s.reaction)?;
    let mut t = Table::new(&["R", "kinetic_interior", "kinetic_cross", "potential", "total"]);
    for e in &fit.reports {
        t.row(&[e.radius.into(), e.kinetic_interior.into(), e.kinetic_cross.into(), e.potential.into(), e.total.into()]);
    }
    r.file("energy_scaling.csv", t.into_string());
    let (regime, bound) = energy_regime(s);
    r.result("regime", regime);
    match fit.slope {
        Some(v) => r.num("slope", v),
        None => r.result("slope", "undefined (nonpositive energy)"),
    }
    if let Some(se) = fit.slope_se {
        r.num("slope_se", se);
    }
    if let Some(b) = bound {
        r.num("slope_bound", b);
    }
    if let Some(sp) = fit.log_corrected_ratio_spread {
        r.num("log_corrected_ratio_spread", sp);
    }
    Ok(r)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn stability(s: &Setup) -> Result<Report, CliError> {
    let op = operator(s)?;
    let sol = solve(&op, s)?;
    let mut r = Report::default();
    record_flow(&mut r, &sol)?;
    let u = &sol.field;
    let l = s.grid.half_width();
    let tests = random_bumps(s.grid.dim(), s.samples, 0.5 * l, 2.0 * s.grid.h(), l / 8.0, s.seed);
    let gaps = gap_samples(&op, u, &tests, &s.reaction)?;
    r.file("stability.csv", gaps_csv(gaps.iter().map(|g| (g.id, g.lhs, g.rhs))));
    let eig = principal_eigenpair(&op, u, &s.reaction, EIG_ITERS, EIG_TOL)?;
    let du: Vec<f64> = gradient(u).values.iter().map(|d| d[s.grid.dim() - 1]).collect();
    let cos = cosine(eig.eigvec.values(), &du).abs();
    let mut t = Table::new(&["lambda_min", "positivity_ok", "cosine_to_uprime"]);
    t.row(&[eig.lambda_min.into(), Cell::Bool(eig.positivity_ok), cos.into()]);
    r.file("eigen.csv", t.into_string());
    r.result("bump_seed", s.seed);
    r.result("gaps_hold", gaps.iter().all(|g| g.holds(GAP_REL_TOL)));
    r.num("lambda_min", eig.lambda_min);
    r.result("eigen_converged", eig.converged);
    r.num("eigen_residual", eig.eig_residual);
    r.result("eigen_iterations", eig.iterations);
    Ok(r)
}

fn symmetry_rows(r: &mut Report, u: &Field<f64>, radius: f64) -> Result<(), CliError> {
    let defect = symmetry_defect(u, radius)?;
    let mut t = Table::new(&["radius", "defect"]);
    t.row(&[radius.into(), defect.into()]);
    r.file("symmetry.csv", t.into_string());
    r.num("symmetry_radius", radius);
    r.num("symmetry_defect", defect);
    Ok(())
}

fn symmetry_2d(s: &Setup) -> Result<Report, CliError> {
    let mut r = Report::default();
    if s.sum.is_some() {
        let sum = sum_operator_of(s)?;
        let sol = solve(&sum, s)?;
        record_flow(&mut r, &sol)?;
        r.result("operator", "sum of three terms");
        symmetry_rows(&mut r, &sol.field, defect_radius(&sum.terms()[0]))?;
        return Ok(r);
    }
    let op = operator(s)?;
    let sol = solve(&op, s)?;
    record_flow(&mut r, &sol)?;
    symmetry_rows(&mut r, &sol.field, defect_radius(&op))?;
    let l = s.grid.half_width();
    let cutoffs = random_bumps(2, s.samples, 0.5 * l, 2.0 * s.grid.h(), l / 4.0, s.seed);
    let rows = cutoffs
        .iter()
        .enumerate()
        .map(|(i, eta)| poincare_gap(&op, &sol.field, eta).map(|(a, b)| (i, a, b)))
        .collect::<Result<Vec<_>, _>>()?;
    r.result("poincare_hold", rows.iter().all(|&(_, a, b)| b - a >= -GAP_REL_TOL * (a.abs() + b.abs())));
    r.file("poincare.csv", gaps_csv(rows.into_iter()));
    r.result("cutoff_seed", s.seed);
    Ok(r)
}

fn liouville(s: &Setup) -> Result<Report, CliError> {
    let op = operator(s)?;
    let seeds: Vec<u64> = (0..s.samples as u64).map(|i| s.seed + i).collect();
    let rep = liouville_probe(&op, &s.reaction, &s.flow, &seeds)?;
    let mut t = Table::new(&["seed", "initial", "verdict", "deviation", "mean", "final_residual", "iterations"]);
    for run in &rep.runs {
        t.row(&[
            Cell::Int(run.seed as i64),
            Cell::Text(run.initial.to_string()),
            Cell::Text(run.verdict.name().to_string()),
            run.deviation.into(),
            run.mean.into(),
            run.final_residual.into(),
            Cell::Int(run.iterations as i64),
        ]);
    }
    let mut r = Report::default();
    r.file("liouville.csv", t.into_string());
    r.result("sign_condition", format!("{:?}", rep.condition));
    for v in [
        LiouvilleVerdict::ConvergedToConstant,
        LiouvilleVerdict::Diverged,
        LiouvilleVerdict::ConvergedNonconstant,
        LiouvilleVerdict::Inconclusive,
    ] {
        r.result(&format!("runs_{}", v.name()), rep.runs.iter().filter(|x| x.verdict == v).count());
    }
    Ok(r)
}

fn sum_operator(s: &Setup) -> Result<Report, CliError> {
    let sum = sum_operator_of(s)?;
    let sol = solve(&sum, s)?;
    let mut r = Report::default();
    record_flow(&mut r, &sol)?;
    let u = &sol.field;
    let terms = sum.apply_terms(u)?;
    let total = sum.apply_s(u)?;
    let m = terms.len();
    let mut header = coord_header(s.grid.dim());
    header.push("u");
    let names: Vec<String> = (1..=m).map(|i| format!("T_{i}")).chain(["S".into(), "f".into(), "residual".into()]).chain((1..=m).map(|i| format!("r_{i}"))).collect();
    header.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&header);
    let (mut split, mut worst): (f64, f64) = (0.0, 0.0);
    for i in 0..s.grid.len() {
        let f = s.reaction.f(u.value(i));
        let res = total[i] - f;
        let per: Vec<f64> = terms.iter().map(|ti| ti[i] - f / m as f64).collect();
        split = split.max((res - per.iter().sum::<f64>()).abs());
        worst = worst.max(res.abs());
        let mut row = coord_cells(&s.grid, i);
        row.push(u.value(i).into());
        row.extend(terms.iter().map(|ti| Cell::Num(ti[i])));
        row.extend([total[i].into(), f.into(), res.into()]);
        row.extend(per.into_iter().map(Cell::Num));
        t.row(&row);
    }
    r.file("sum_operator.csv", t.into_string());
    r.result("terms", m);
    r.num("max_residual", worst);
    r.num("max_residual_minus_term_sum", split);
    if s.grid.dim() == 2 {
        symmetry_rows(&mut r, u, defect_radius(&sum.terms()[0]))?;
    }
    Ok(r)
}

fn quotient(s: &Setup) -> Result<Report, CliError> {
    let op = operator(s)?;
    let sol = solve(&op, s)?;
    let mut r = Report::default();
    record_flow(&mut r, &sol)?;
    let u = &sol.field;
    let nu = [1.0, 0.0];
    let data = QuotientData::from_derivative(&op, u, nu)?;
    let mut header = coord_header(s.grid.dim());
    header.extend(["psi", "phi", "sigma", "residual"]);
    let mut t = Table::new(&header);
    for i in 0..s.grid.len() {
        let opt = |v: Option<f64>| v.map_or(Cell::Empty, Cell::Num);
        let mut row = coord_cells(&s.grid, i);
        row.extend([data.psi.value(i).into(), data.phi.value(i).into(), opt(data.sigma[i]), opt(quotient_residual(&op, u, &data, i)?)]);
        t.row(&row);
    }
    r.file("quotient.csv", t.into_string());
    let core = 0.5 * s.grid.half_width();
    r.result("nu", "e1");
    r.num("core_radius", core);
    r.num("max_quotient_residual", max_quotient_residual(&op, u, &data, core)?);
    r.num("harnack_ratio", harnack_ratio(&data.phi, core));
    let rows = quotient_growth_check(&op, u, &s.radii)?;
    let mut g = Table::new(&["R", "value", "ratio", "bound_ok"]);
    for row in &rows {
        g.row(&[row.radius.into(), row.value.into(), row.ratio.into(), Cell::Bool(row.bound_ok)]);
    }
    r.file("quotient_growth.csv", g.into_string());
    r.result("growth_bound_ok", rows.iter().all(|x| x.bound_ok));
    Ok(r)
}
