//! Resolution of a parsed configuration into typed experiment inputs.
//! Every key the run consults is recorded, with a flag for defaults, so the
//! manifest can restate the full configuration.

use std::path::PathBuf;

use nonlocal_core::field::{sample_profile, Field, Grid, Profile};
use nonlocal_core::kernel::{Coefficient, KernelSpec};
use nonlocal_core::nonlinearity::{beta_of, PhiSpec, ReactionSpec};
use nonlocal_core::solver::{step_layer, FlowParams, LIOUVILLE_TOL};

use crate::config::{key_info, ExperimentConfig, Kind, Value, EXPERIMENTS, KEYS};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    OperatorCheck,
    Layer1d,
    EnergyScaling,
    Stability,
    Symmetry2d,
    Liouville,
    SumOperator,
    Quotient,
}

impl Experiment {
    pub fn from_name(name: &str) -> Result<Self, CliError> {
        Ok(match name {
            "operator-check" => Experiment::OperatorCheck,
            "layer-1d" => Experiment::Layer1d,
            "energy-scaling" => Experiment::EnergyScaling,
            "stability" => Experiment::Stability,
            "symmetry-2d" => Experiment::Symmetry2d,
            "liouville" => Experiment::Liouville,
            "sum-operator" => Experiment::SumOperator,
            "quotient" => Experiment::Quotient,
            other => {
                return Err(CliError::Precondition(format!(
                    "unknown experiment `{other}`; valid experiments: {}",
                    EXPERIMENTS.join(", ")
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        EXPERIMENTS[self as usize]
    }

    fn default_dim(self) -> i64 {
        match self {
            Experiment::Symmetry2d => 2,
            _ => 1,
        }
    }

    fn default_init(self) -> &'static str {
        match self {
            Experiment::Symmetry2d => "perturbed",
            _ => "tanh",
        }
    }

    fn relaxes(self) -> bool {
        !matches!(self, Experiment::OperatorCheck)
    }
}

/// Records which keys were read and whether their value was defaulted.
pub struct Resolver<'a> {
    cfg: &'a ExperimentConfig,
    used: Vec<(&'static str, Value, bool)>,
    unset: Vec<&'static str>,
}

fn missing(key: &str) -> CliError {
    CliError::Precondition(format!("missing required key `{key}`"))
}

impl<'a> Resolver<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Resolver { cfg, used: Vec::new(), unset: Vec::new() }
    }

    fn fetch(&mut self, key: &'static str, default: Option<Value>) -> Result<Value, CliError> {
        debug_assert!(key_info(key).is_some(), "{key}");
        if let Some((_, v, _)) = self.used.iter().find(|(k, _, _)| *k == key) {
            return Ok(v.clone());
        }
        let (v, defaulted) = match (self.cfg.get(key), default) {
            (Some(v), _) => (v.clone(), false),
            (None, Some(d)) => (d, true),
            (None, None) => return Err(missing(key)),
        };
        self.used.push((key, v.clone(), defaulted));
        Ok(v)
    }

    fn real(&mut self, key: &'static str, default: Option<f64>) -> Result<f64, CliError> {
        match self.fetch(key, default.map(Value::Real))? {
            Value::Real(v) => Ok(v),
            _ => unreachable!("table kind of {key}"),
        }
    }

    fn int(&mut self, key: &'static str, default: Option<i64>) -> Result<i64, CliError> {
        match self.fetch(key, default.map(Value::Int))? {
            Value::Int(v) => Ok(v),
            _ => unreachable!("table kind of {key}"),
        }
    }

    fn text(&mut self, key: &'static str, default: Option<&str>) -> Result<String, CliError> {
        match self.fetch(key, default.map(|d| Value::Text(d.to_string())))? {
            Value::Text(v) => Ok(v),
            _ => unreachable!("table kind of {key}"),
        }
    }

    fn boolean(&mut self, key: &'static str, default: bool) -> Result<bool, CliError> {
        match self.fetch(key, Some(Value::Bool(default)))? {
            Value::Bool(v) => Ok(v),
            _ => unreachable!("table kind of {key}"),
        }
    }

    fn list(&mut self, key: &'static str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.fetch(key, Some(Value::List(default.to_vec())))? {
            Value::List(v) => Ok(v),
            _ => unreachable!("table kind of {key}"),
        }
    }

    fn optional_real(&mut self, key: &'static str) -> Option<f64> {
        match self.cfg.get(key) {
            Some(Value::Real(v)) => {
                self.used.push((key, Value::Real(*v), false));
                Some(*v)
            }
            _ => {
                self.unset.push(key);
                None
            }
        }
    }

    fn given(&self, key: &str) -> bool {
        self.cfg.contains(key)
    }

    /// Keys present in the configuration that the run never consulted.
    pub fn ignored(&self) -> Vec<&'static str> {
        KEYS.iter()
            .map(|i| i.key)
            .filter(|k| self.cfg.contains(k) && !self.used.iter().any(|(u, _, _)| u == k))
            .collect()
    }

    /// The resolved configuration in canonical order; defaults are marked.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for info in KEYS {
            if let Some((_, v, d)) = self.used.iter().find(|(k, _, _)| *k == info.key) {
                let v = match (info.kind, v) {
                    (Kind::Path, Value::Text(s)) => s.clone(),
                    _ => v.to_string(),
                };
                if *d {
                    out.push_str(&format!("{} = {}  # default\n", info.key, v));
                } else {
                    out.push_str(&format!("{} = {}\n", info.key, v));
                }
            } else if self.unset.contains(&info.key) {
                out.push_str(&format!("# {} not set\n", info.key));
            } else if let Some(v) = self.cfg.get(info.key) {
                out.push_str(&format!("# {} = {}  (ignored by this experiment)\n", info.key, v));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct KernelParams {
    pub kind: String,
    pub lambda: f64,
    pub big_lambda: f64,
    pub r_star: f64,
    pub big_r_star: f64,
    pub theta: f64,
    pub c_d: f64,
}

impl KernelParams {
    /// Builds the kernel at order `alpha`.
    pub fn build(&self, dim: usize, alpha: f64) -> Result<KernelSpec<f64>, CliError> {
        let (lo, hi) = (self.lambda, self.big_lambda);
        Ok(match self.kind.as_str() {
            "power" => KernelSpec::power_law(lo, alpha)?,
            "fractional" => KernelSpec::fractional_laplacian(dim, alpha)?,
            "bounded" => KernelSpec::bounded(oscillating(lo, hi)?, lo, hi, alpha)?,
            "truncated" => {
                KernelSpec::truncated(oscillating(lo, hi)?, lo, hi, alpha, self.r_star, self.big_r_star)?
            }
            "decaying" => KernelSpec::decaying(Coefficient::Constant(lo), alpha, self.big_r_star, self.theta, self.c_d)?,
            other => return Err(CliError::Precondition(format!("unknown kernel type `{other}`"))),
        })
    }
}

/// Constant `lambda` when `Lambda = lambda`, else the even coefficient
/// `lambda + (Lambda - lambda) (1 + cos |z|) / 2`.
fn oscillating(lo: f64, hi: f64) -> Result<Coefficient<f64>, CliError> {
    if hi == lo {
        return Ok(Coefficient::Constant(lo));
    }
    Ok(Coefficient::profile(move |z: &[f64]| {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        lo + (hi - lo) * 0.5 * (1.0 + r.cos())
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Profile(Profile<f64>),
    Step,
}

impl Init {
    pub fn field(&self, grid: &Grid<f64>) -> Result<Field<f64>, CliError> {
        Ok(match self {
            Init::Profile(p) => sample_profile(grid, p)?,
            Init::Step => step_layer(grid),
        })
    }
}

/// Everything an experiment needs, resolved and validated.
#[derive(Clone, Debug)]
pub struct Setup {
    pub experiment: Experiment,
    pub grid: Grid<f64>,
    pub kernel_params: KernelParams,
    pub alpha: f64,
    pub kernel: KernelSpec<f64>,
    pub phi: PhiSpec<f64>,
    pub reaction: ReactionSpec<f64>,
    pub flow: FlowParams<f64>,
    pub init: Init,
    pub relax: bool,
    pub radii: Vec<f64>,
    pub seed: u64,
    pub samples: usize,
    /// `(s, p)` of the three-term sum operator, when one is used.
    pub sum: Option<(f64, f64)>,
    pub out_dir: PathBuf,
}

fn positive_count(key: &str, v: i64) -> Result<usize, CliError> {
    usize::try_from(v).ok().filter(|&n| n > 0).ok_or_else(|| CliError::Precondition(format!("`{key}` must be positive, got {v}")))
}

fn check_integrability(phi: &PhiSpec<f64>, alpha: f64, label: &str) -> Result<(), CliError> {
    let beta = beta_of(phi);
    if beta > alpha {
        Ok(())
    } else {
        Err(CliError::Precondition(format!(
            "integrability requires beta > alpha for {label}, got beta = {beta}, alpha = {alpha}"
        )))
    }
}

/// Resolves the configuration, returning the setup and the resolver that
/// holds the record of consulted keys.
pub fn resolve(cfg: &ExperimentConfig) -> Result<(Setup, Resolver<'_>), CliError> {
    let mut r = Resolver::new(cfg);
    let experiment = Experiment::from_name(&r.text("experiment", None)?)?;

    let dim = r.int("grid.dim", Some(experiment.default_dim()))?;
    let dim = match dim {
        1 | 2 => dim as usize,
        _ => return Err(CliError::Precondition(format!("`grid.dim` must be 1 or 2, got {dim}"))),
    };
    let want = match experiment {
        Experiment::Layer1d | Experiment::Stability => Some(1),
        Experiment::Symmetry2d => Some(2),
        _ => None,
    };
    if let Some(want) = want.filter(|&w| w != dim) {
        return Err(CliError::Precondition(format!("experiment {} needs grid.dim = {want}", experiment.name())));
    }
    let grid = Grid::new(dim, r.real("grid.L", None)?, r.real("grid.h", None)?)?;

    let kind = r.text("kernel.type", None)?;
    let sum_used = experiment == Experiment::SumOperator
        || (experiment == Experiment::Symmetry2d && (r.given("sum.s") || r.given("sum.p")));
    let sum = if sum_used { Some((r.real("sum.s", Some(0.5))?, r.real("sum.p", Some(3.0))?)) } else { None };
    // the sum operator fixes the orders from s and p
    let alpha = match sum {
        Some(_) if cfg.contains("kernel.alpha") => {
            return Err(CliError::Precondition("`kernel.alpha` is fixed by sum.s and sum.p for the sum operator".into()))
        }
        Some((s, _)) => 2.0 * s,
        None => r.real("kernel.alpha", None)?,
    };
    let mut params = KernelParams {
        kind: kind.clone(),
        lambda: 1.0,
        big_lambda: 1.0,
        r_star: 0.0,
        big_r_star: 0.0,
        theta: 0.0,
        c_d: 0.0,
    };
    match kind.as_str() {
        "power" => params.lambda = r.real("kernel.lambda", Some(1.0))?,
        "fractional" => {}
        "bounded" | "truncated" => {
            params.lambda = r.real("kernel.lambda", Some(1.0))?;
            params.big_lambda = r.real("kernel.Lambda", Some(params.lambda))?;
            if kind == "truncated" {
                params.big_r_star = r.real("kernel.R_star", Some(2.0))?;
                params.r_star = r.real("kernel.r_star", Some(params.big_r_star))?;
            }
        }
        "decaying" => {
            params.lambda = r.real("kernel.lambda", Some(1.0))?;
            params.big_r_star = r.real("kernel.R_star", Some(2.0))?;
            params.theta = r.real("kernel.theta", Some(1.0))?;
            params.c_d = r.real("kernel.C_D", Some(1.0))?;
        }
        _ => unreachable!("kernel.type validated by the parser"),
    }
    if kind == "fractional" && cfg.contains("kernel.lambda") {
        return Err(CliError::Precondition("`kernel.lambda` is fixed by kernel.type = fractional".into()));
    }
    let kernel = params.build(dim, alpha)?;

    let phi = match sum {
        Some((s, p)) => {
            if !(s > 0.0 && s < 1.0) {
                return Err(CliError::Precondition(format!("`sum.s` must lie in (0, 1), got {s}")));
            }
            if !(p * s < 2.0) {
                return Err(CliError::Precondition(format!("the power term needs p s < 2, got {}", p * s)));
            }
            let terms = sum_specs(&params, dim, s, p)?;
            for (i, (k, phi)) in terms.iter().enumerate() {
                check_integrability(phi, k.alpha(), &format!("sum term {}", i + 1))?;
            }
            PhiSpec::quadratic()
        }
        None => {
            let phi = match r.text("phi.type", Some("quadratic"))?.as_str() {
                "quadratic" => PhiSpec::quadratic(),
                "power" => PhiSpec::power(r.real("phi.p", None)?)?,
                "curvature" => PhiSpec::curvature(),
                _ => unreachable!("phi.type validated by the parser"),
            };
            check_integrability(&phi, alpha, "the operator")?;
            phi
        }
    };

    let reaction = if experiment == Experiment::OperatorCheck {
        ReactionSpec::DoubleWell
    } else {
        let default = if experiment == Experiment::Liouville { None } else { Some("doublewell") };
        match r.text("reaction.type", default)?.as_str() {
            "doublewell" => ReactionSpec::DoubleWell,
            "linear" => ReactionSpec::Linear { slope: r.real("reaction.slope", None)? },
            "constant" => ReactionSpec::Constant { value: r.real("reaction.value", None)? },
            "sine_pn" => ReactionSpec::SinePN,
            "cubic" => ReactionSpec::Cubic { coeff: r.real("reaction.coeff", Some(-1.0))? },
            _ => unreachable!("reaction.type validated by the parser"),
        }
    };

    let seed = r.int("seed", Some(0))?;
    let seed = u64::try_from(seed).map_err(|_| CliError::Precondition(format!("`seed` must be nonnegative, got {seed}")))?;

    let mut flow = FlowParams::default();
    let relax = if experiment.relaxes() {
        let order = sum.map_or(alpha, |(s, p)| (2.0 * s).max(p * s));
        let (tau, tol) = flow.resolve(&grid, order, &reaction);
        let tol = if experiment == Experiment::Liouville { LIOUVILLE_TOL } else { tol };
        flow.tau = Some(r.real("solver.tau", Some(tau))?);
        flow.tol = Some(r.real("solver.tol", Some(tol))?);
        flow.max_iter = positive_count("solver.max_iter", r.int("solver.max_iter", Some(flow.max_iter as i64))?)?;
        flow.clamp = r.optional_real("solver.clamp");
        flow.seed = seed;
        experiment == Experiment::Liouville || r.boolean("init.relax", true)?
    } else {
        false
    };

    let init = if experiment == Experiment::Liouville {
        // the probe uses its own seeded catalogue
        Init::Profile(Profile::Constant(0.0))
    } else {
        let name = r.text("init.type", Some(experiment.default_init()))?;
        let mut width = || r.real("init.width", Some(1.0));
        match name.as_str() {
            "tanh" => Init::Profile(Profile::TanhLayer { width: width()? }),
            "arctan" => Init::Profile(Profile::ArctanLayer),
            "step" => Init::Step,
            "perturbed" => {
                let width = width()?;
                let amplitude = r.real("init.amplitude", Some(0.1))?;
                Init::Profile(Profile::PerturbedLayer { width, amplitude, seed })
            }
            "tilted" => {
                let width = width()?;
                let angle = r.real("init.angle", Some(0.0))?.to_radians();
                Init::Profile(Profile::TiltedLayer { angle, width })
            }
            "constant" => Init::Profile(Profile::Constant(r.real("init.value", Some(0.0))?)),
            _ => unreachable!("init.type validated by the parser"),
        }
    };

    let radii = match experiment {
        Experiment::EnergyScaling | Experiment::Quotient => r.list("radii", &[5.0, 10.0, 20.0, 40.0])?,
        _ => Vec::new(),
    };
    let samples = match experiment {
        Experiment::Stability => positive_count("samples", r.int("samples", Some(50))?)?,
        Experiment::Symmetry2d if sum.is_none() => positive_count("samples", r.int("samples", Some(20))?)?,
        Experiment::Liouville => positive_count("samples", r.int("samples", Some(4))?)?,
        _ => 0,
    };
    let out_dir = PathBuf::from(r.text("out_dir", Some("out"))?);

    let setup = Setup {
        experiment,
        grid,
        kernel_params: params,
        alpha,
        kernel,
        phi,
        reaction,
        flow,
        init,
        relax,
        radii,
        seed,
        samples,
        sum,
        out_dir,
    };
    Ok((setup, r))
}

/// The three-term operator: quadratic of order `2s`, `p`-power of order
/// `p s`, curvature of order `2s`, all from the configured kernel class.
/// `(kernel, Phi)` pairs of a sum operator.
pub type TermSpecs = Vec<(KernelSpec<f64>, PhiSpec<f64>)>;

pub fn sum_specs(params: &KernelParams, dim: usize, s: f64, p: f64) -> Result<TermSpecs, CliError> {
    Ok(vec![
        (params.build(dim, 2.0 * s)?, PhiSpec::quadratic()),
        (params.build(dim, p * s)?, PhiSpec::power(p)?),
        (params.build(dim, 2.0 * s)?, PhiSpec::curvature()),
    ])
}
