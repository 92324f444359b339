//! Line-oriented `key = value` experiment configuration.
//!
//! `#` starts a comment, lists are comma separated, unknown and duplicate
//! keys are rejected with their line number. [`ExperimentConfig::serialize`]
//! prints the keys in table order with canonical number formatting, so
//! `parse(serialize(c)) == c`.

use std::collections::BTreeMap;
use std::fmt;

use nonlocal_core::field::format_g17;

pub const EXPERIMENTS: [&str; 8] =
    ["operator-check", "layer-1d", "energy-scaling", "stability", "symmetry-2d", "liouville", "sum-operator", "quotient"];

const KERNEL_TYPES: &[&str] = &["power", "fractional", "bounded", "truncated", "decaying"];
const PHI_TYPES: &[&str] = &["quadratic", "power", "curvature"];
const REACTION_TYPES: &[&str] = &["doublewell", "linear", "constant", "sine_pn", "cubic"];
const INIT_TYPES: &[&str] = &["tanh", "arctan", "step", "perturbed", "tilted", "constant"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Choice(&'static [&'static str]),
    Real,
    Int,
    Bool,
    RealList,
    Path,
}

#[derive(Clone, Copy, Debug)]
pub struct KeyInfo {
    pub key: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

const fn k(key: &'static str, kind: Kind, help: &'static str) -> KeyInfo {
    KeyInfo { key, kind, help }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[KeyInfo] = &[
    k("experiment", Kind::Choice(&EXPERIMENTS), "experiment to run"),
    k("kernel.type", Kind::Choice(KERNEL_TYPES), "kernel class"),
    k("kernel.lambda", Kind::Real, "lower ellipticity constant, or the power-law prefactor"),
    k("kernel.Lambda", Kind::Real, "upper ellipticity constant"),
    k("kernel.alpha", Kind::Real, "order in (0, 2)"),
    k("kernel.r_star", Kind::Real, "inner truncation radius"),
    k("kernel.R_star", Kind::Real, "support radius (truncated) or decay onset (decaying)"),
    k("kernel.theta", Kind::Real, "tail decay exponent"),
    k("kernel.C_D", Kind::Real, "tail decay constant"),
    k("phi.type", Kind::Choice(PHI_TYPES), "interaction nonlinearity"),
    k("phi.p", Kind::Real, "exponent of the power nonlinearity"),
    k("reaction.type", Kind::Choice(REACTION_TYPES), "reaction term f"),
    k("reaction.slope", Kind::Real, "slope of the linear reaction"),
    k("reaction.value", Kind::Real, "value of the constant reaction"),
    k("reaction.coeff", Kind::Real, "coefficient c of f = c t^3"),
    k("grid.dim", Kind::Int, "dimension, 1 or 2"),
    k("grid.L", Kind::Real, "box half-width"),
    k("grid.h", Kind::Real, "mesh width"),
    k("solver.tau", Kind::Real, "pseudo-time step"),
    k("solver.max_iter", Kind::Int, "iteration cap"),
    k("solver.tol", Kind::Real, "sup-norm residual target"),
    k("solver.clamp", Kind::Real, "keep iterates in [-1-d, 1+d]"),
    k("init.type", Kind::Choice(INIT_TYPES), "initial profile"),
    k("init.width", Kind::Real, "layer width"),
    k("init.amplitude", Kind::Real, "perturbation amplitude"),
    k("init.angle", Kind::Real, "tilt angle in degrees"),
    k("init.value", Kind::Real, "value of the constant profile"),
    k("init.relax", Kind::Bool, "run the gradient flow before measuring"),
    k("sum.s", Kind::Real, "half-order s of the three-term sum operator"),
    k("sum.p", Kind::Real, "exponent p of its power term"),
    k("radii", Kind::RealList, "ball radii"),
    k("seed", Kind::Int, "random seed"),
    k("samples", Kind::Int, "number of random test functions or probe runs"),
    k("out_dir", Kind::Path, "output directory"),
];

pub fn key_info(key: &str) -> Option<&'static KeyInfo> {
    KEYS.iter().find(|i| i.key == key)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Text(String),
    Real(f64),
    Int(i64),
    Bool(bool),
    List(Vec<f64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Real(v) => f.write_str(&format_g17(*v)),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::List(v) => f.write_str(&v.iter().map(|x| format_g17(*x)).collect::<Vec<_>>().join(", ")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Parsed (not yet resolved) configuration: the keys that were given.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<&'static str, Value>,
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn parse_value(kind: Kind, raw: &str) -> Result<Value, String> {
    match kind {
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(Value::Text(raw.to_string()))
            } else {
                Err(format!("`{raw}` is not one of: {}", options.join(", ")))
            }
        }
        Kind::Real => parse_real(raw).map(Value::Real).ok_or_else(|| format!("expected a real number, got `{raw}`")),
        Kind::Int => raw.parse::<i64>().map(Value::Int).map_err(|_| format!("expected an integer, got `{raw}`")),
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got `{raw}`")),
        },
        Kind::RealList => raw
            .split(',')
            .map(|t| parse_real(t.trim()).ok_or_else(|| format!("expected a list of real numbers, got `{raw}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::List),
        Kind::Path => {
            if raw.is_empty() {
                Err("expected a path".into())
            } else {
                Ok(Value::Text(raw.to_string()))
            }
        }
    }
}

/// Parses configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ParseError> {
    let mut values = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ParseError { line, message };
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let info = key_info(key).ok_or_else(|| err(format!("unknown key `{key}`")))?;
        if values.contains_key(info.key) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        let v = parse_value(info.kind, value).map_err(|m| err(format!("{key}: {m}")))?;
        values.insert(info.key, v);
    }
    Ok(ExperimentConfig { values })
}

impl ExperimentConfig {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    /// Sets a key after validating it against the table.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), String> {
        let info = key_info(key).ok_or_else(|| format!("unknown key `{key}`"))?;
        let ok = matches!(
            (info.kind, &value),
            (Kind::Choice(_) | Kind::Path, Value::Text(_))
                | (Kind::Real, Value::Real(_))
                | (Kind::Int, Value::Int(_))
                | (Kind::Bool, Value::Bool(_))
                | (Kind::RealList, Value::List(_))
        );
        if !ok {
            return Err(format!("type mismatch for `{key}`"));
        }
        if let (Kind::Choice(_), Value::Text(s)) = (info.kind, &value) {
            parse_value(info.kind, s)?;
        }
        self.values.insert(info.key, value);
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Canonical text: table order, one `key = value` per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for info in KEYS {
            if let Some(v) = self.values.get(info.key) {
                out.push_str(&format!("{} = {}\n", info.key, v));
            }
        }
        out
    }
}
