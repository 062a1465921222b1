//! Experiment configuration: a flat `key = value` text format.
//!
//! ```text
//! # perturbed problem, ε-sweep
//! problem = perturbed_linear
//! problem.tau = 0.05
//! constants = analytic
//! bounds = split, explicit
//! oracle = quadrature
//! sweep.axis = eps
//! sweep.from = 0.0009765625
//! sweep.to = 1
//! sweep.points = 11
//! sweep.log = true
//! ```
//!
//! Blank lines and lines starting with `#` are ignored; a `#` after a value
//! starts a comment too. Keys may appear once.

use laplace_cert::model::{CatalogParams, CATALOG_NAMES};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantsMode {
    Analytic,
    Estimate,
    User { k: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundSet {
    pub split: bool,
    pub explicit: bool,
    pub perturbative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleChoice {
    Auto,
    Quadrature,
    Importance,
    None,
}

impl OracleChoice {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "auto" => OracleChoice::Auto,
            "quadrature" => OracleChoice::Quadrature,
            "importance" => OracleChoice::Importance,
            "none" => OracleChoice::None,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Eps,
    Tau,
    Dim,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Eps => "eps",
            Axis::Tau => "tau",
            Axis::Dim => "dim",
        }
    }

    /// Catalog parameter set by this axis.
    pub fn param(&self) -> &'static str {
        match self {
            Axis::Eps => "eps",
            Axis::Tau => "tau",
            Axis::Dim => "d",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: Axis,
    /// Strictly increasing, positive.
    pub grid: Vec<f64>,
    pub log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub params: CatalogParams,
    pub constants: ConstantsMode,
    /// Sample count for estimated constants.
    pub constant_samples: usize,
    pub bounds: BoundSet,
    pub oracle: OracleChoice,
    pub oracle_samples: usize,
    pub sweep: Option<Sweep>,
    pub seed: u64,
    pub output: PathBuf,
}

struct Entry {
    value: String,
    line: usize,
    key_col: usize,
    value_col: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        if body.trim().is_empty() {
            continue;
        }
        let key_col = body.len() - body.trim_start().len() + 1;
        let Some(eq) = body.find('=') else {
            return Err(err(line, key_col, "expected `key = value`"));
        };
        let key = body[..eq].trim();
        if key.is_empty() {
            return Err(err(line, key_col, "missing key before `=`"));
        }
        if let Some(bad) = key.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.')) {
            return Err(err(line, key_col + bad, format!("invalid character in key `{key}`")));
        }
        let rest = &body[eq + 1..];
        let value = rest.trim();
        let value_col = eq + 2 + (rest.len() - rest.trim_start().len());
        if value.is_empty() {
            return Err(err(line, value_col, format!("missing value for `{key}`")));
        }
        if let Some(prev) = out.get(key) {
            let prev: &Entry = prev;
            return Err(err(line, key_col, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        out.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
                key_col,
                value_col,
            },
        );
    }
    Ok(out)
}

fn parse_f64(e: &Entry, what: &str) -> Result<f64, ConfigError> {
    let v: f64 = e
        .value
        .parse()
        .map_err(|_| err(e.line, e.value_col, format!("{what}: `{}` is not a number", e.value)))?;
    if !v.is_finite() {
        return Err(err(e.line, e.value_col, format!("{what} must be finite")));
    }
    Ok(v)
}

fn parse_count(e: &Entry, what: &str) -> Result<usize, ConfigError> {
    e.value
        .parse::<usize>()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| err(e.line, e.value_col, format!("{what} must be a positive integer, got `{}`", e.value)))
}

fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(err(e.line, e.value_col, format!("expected true or false, got `{v}`"))),
    }
}

fn parse_list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(e.line, e.value_col, format!("`{t}` is not a number")))
        })
        .collect()
}

/// `n` points from `a` to `b` inclusive, geometric when `log`.
pub fn spaced(a: f64, b: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if i == 0 {
                a
            } else if i == n - 1 {
                b
            } else if log {
                (a.ln() + t * (b.ln() - a.ln())).exp()
            } else {
                a + t * (b - a)
            }
        })
        .collect()
}

const TOP_KEYS: &[&str] = &[
    "problem",
    "constants",
    "constants.k",
    "constants.delta",
    "constants.samples",
    "bounds",
    "oracle",
    "oracle.samples",
    "sweep.axis",
    "sweep.grid",
    "sweep.from",
    "sweep.to",
    "sweep.points",
    "sweep.log",
    "seed",
    "output",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = lex(text)?;
        for (k, e) in &entries {
            if !k.starts_with("problem.") && !TOP_KEYS.contains(&k.as_str()) {
                return Err(err(e.line, e.key_col, format!("unknown key `{k}`")));
            }
        }
        let get = |k: &str| entries.get(k);

        let problem = get("problem").ok_or_else(|| err(1, 1, "missing required key `problem`"))?;
        if !CATALOG_NAMES.contains(&problem.value.as_str()) {
            return Err(err(
                problem.line,
                problem.value_col,
                format!("unknown problem `{}`; expected one of {}", problem.value, CATALOG_NAMES.join(", ")),
            ));
        }
        let params: CatalogParams = entries
            .iter()
            .filter_map(|(k, e)| k.strip_prefix("problem.").map(|p| (p.to_string(), e.value.clone())))
            .collect();

        let constants = match get("constants").map(|e| (e, e.value.as_str())) {
            None | Some((_, "analytic")) => ConstantsMode::Analytic,
            Some((_, "estimate")) => ConstantsMode::Estimate,
            Some((e, "user")) => {
                let k = get("constants.k").ok_or_else(|| err(e.line, e.value_col, "`constants = user` needs `constants.k`"))?;
                let d = get("constants.delta")
                    .ok_or_else(|| err(e.line, e.value_col, "`constants = user` needs `constants.delta`"))?;
                let kv = parse_f64(k, "constants.k")?;
                if kv < 0.0 {
                    return Err(err(k.line, k.value_col, "constants.k must be ≥ 0"));
                }
                let dv = parse_f64(d, "constants.delta")?;
                if !(dv > 0.0 && dv <= 1.0) {
                    return Err(err(d.line, d.value_col, "constants.delta must lie in (0, 1]"));
                }
                ConstantsMode::User { k: kv, delta: dv }
            }
            Some((e, v)) => {
                return Err(err(e.line, e.value_col, format!("constants must be analytic, estimate or user, got `{v}`")))
            }
        };
        if !matches!(constants, ConstantsMode::User { .. }) {
            for key in ["constants.k", "constants.delta"] {
                if let Some(e) = get(key) {
                    return Err(err(e.line, e.key_col, format!("`{key}` only applies to `constants = user`")));
                }
            }
        }
        let constant_samples = get("constants.samples").map(|e| parse_count(e, "constants.samples")).transpose()?.unwrap_or(2000);

        let bounds = match get("bounds") {
            None => BoundSet {
                split: true,
                explicit: true,
                perturbative: problem.value == "perturbed_linear",
            },
            Some(e) => {
                let mut b = BoundSet {
                    split: false,
                    explicit: false,
                    perturbative: false,
                };
                for t in e.value.split(',').map(str::trim) {
                    match t {
                        "split" => b.split = true,
                        "explicit" => b.explicit = true,
                        "perturbative" => b.perturbative = true,
                        _ => return Err(err(e.line, e.value_col, format!("unknown bound `{t}`; expected split, explicit, perturbative"))),
                    }
                }
                if b.perturbative && problem.value != "perturbed_linear" {
                    return Err(err(e.line, e.value_col, "bound `perturbative` requires problem = perturbed_linear"));
                }
                b
            }
        };

        let oracle = match get("oracle") {
            None => OracleChoice::Auto,
            Some(e) => OracleChoice::parse(&e.value).ok_or_else(|| {
                err(e.line, e.value_col, format!("oracle must be auto, quadrature, importance or none, got `{}`", e.value))
            })?,
        };
        let oracle_samples = get("oracle.samples").map(|e| parse_count(e, "oracle.samples")).transpose()?.unwrap_or(100_000);
        if let Some(e) = get("oracle.samples") {
            if oracle_samples < 1000 {
                return Err(err(e.line, e.value_col, "oracle.samples must be ≥ 1000"));
            }
        }

        let sweep = Self::parse_sweep(&entries)?;
        if let Some(s) = &sweep {
            let e = get("sweep.axis").expect("checked in parse_sweep");
            let clash = s.axis.param();
            if let Some(pe) = get(&format!("problem.{clash}")) {
                return Err(err(pe.line, pe.key_col, format!("`problem.{clash}` conflicts with `sweep.axis = {}`", s.axis.name())));
            }
            if s.axis == Axis::Tau && problem.value != "perturbed_linear" {
                return Err(err(e.line, e.value_col, "sweep over tau requires problem = perturbed_linear"));
            }
            if s.axis == Axis::Dim {
                if problem.value == "scalar_bimodal_demo" {
                    return Err(err(e.line, e.value_col, "scalar_bimodal_demo is one-dimensional"));
                }
                if s.grid.iter().any(|v| v.fract() != 0.0) {
                    let g = get("sweep.grid").or(get("sweep.from")).expect("grid present");
                    return Err(err(g.line, g.value_col, "dim grid must contain integers"));
                }
            }
        }

        let seed = match get("seed") {
            None => 0,
            Some(e) => e
                .value
                .parse()
                .map_err(|_| err(e.line, e.value_col, format!("seed must be a non-negative integer, got `{}`", e.value)))?,
        };
        let output = get("output").map(|e| PathBuf::from(&e.value)).unwrap_or_else(|| PathBuf::from("results"));

        Ok(ExperimentConfig {
            problem: problem.value.clone(),
            params,
            constants,
            constant_samples,
            bounds,
            oracle,
            oracle_samples,
            sweep,
            seed,
            output,
        })
    }

    fn parse_sweep(entries: &BTreeMap<String, Entry>) -> Result<Option<Sweep>, ConfigError> {
        let get = |k: &str| entries.get(k);
        let Some(axis_e) = get("sweep.axis") else {
            if let Some((k, e)) = entries.iter().find(|(k, _)| k.starts_with("sweep.")) {
                return Err(err(e.line, e.key_col, format!("`{k}` given without `sweep.axis`")));
            }
            return Ok(None);
        };
        let axis = match axis_e.value.as_str() {
            "eps" => Axis::Eps,
            "tau" => Axis::Tau,
            "dim" => Axis::Dim,
            v => return Err(err(axis_e.line, axis_e.value_col, format!("sweep.axis must be eps, tau or dim, got `{v}`"))),
        };
        let log = get("sweep.log").map(parse_bool).transpose()?.unwrap_or(false);
        let grid = match (get("sweep.grid"), get("sweep.from"), get("sweep.to"), get("sweep.points")) {
            (Some(g), None, None, None) => {
                let v = parse_list(g)?;
                check_grid(&v).map_err(|m| err(g.line, g.value_col, m))?;
                v
            }
            (None, Some(a), Some(b), Some(n)) => {
                let (lo, hi) = (parse_f64(a, "sweep.from")?, parse_f64(b, "sweep.to")?);
                let n = parse_count(n, "sweep.points")?;
                if !(lo > 0.0) {
                    return Err(err(a.line, a.value_col, "sweep.from must be positive"));
                }
                if !(hi > lo) && n > 1 {
                    return Err(err(b.line, b.value_col, "sweep.to must exceed sweep.from"));
                }
                let mut v = spaced(lo, hi, n, log);
                if axis == Axis::Dim {
                    for x in &mut v {
                        *x = x.round();
                    }
                    v.dedup();
                }
                v
            }
            (None, None, None, None) => {
                return Err(err(axis_e.line, axis_e.key_col, "sweep needs `sweep.grid` or `sweep.from`, `sweep.to`, `sweep.points`"))
            }
            _ => {
                return Err(err(
                    axis_e.line,
                    axis_e.key_col,
                    "give either `sweep.grid` or all of `sweep.from`, `sweep.to`, `sweep.points`",
                ))
            }
        };
        Ok(Some(Sweep { axis, grid, log }))
    }
}

fn check_grid(v: &[f64]) -> Result<(), String> {
    if v.is_empty() {
        return Err("sweep grid is empty".into());
    }
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err("sweep grid values must be positive".into());
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err("sweep grid must be strictly increasing".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal() {
        let c = ExperimentConfig::parse("problem = linear_gaussian\n").unwrap();
        assert_eq!(c.constants, ConstantsMode::Analytic);
        assert_eq!(c.oracle, OracleChoice::Auto);
        assert!(c.sweep.is_none());
        assert!(c.bounds.split && c.bounds.explicit && !c.bounds.perturbative);
    }

    #[test]
    fn full() {
        let text = "# header\n\
            problem = perturbed_linear   # trailing\n\
            problem.tau = 0.05\n\
            constants = user\n\
            constants.k = 0.5\n\
            constants.delta = 0.9\n\
            bounds = split, perturbative\n\
            oracle = importance\n\
            oracle.samples = 5000\n\
            sweep.axis = eps\n\
            sweep.from = 0.25\n\
            sweep.to = 1\n\
            sweep.points = 3\n\
            sweep.log = true\n\
            seed = 9\n\
            output = out/x\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.params.get("tau").unwrap(), "0.05");
        assert_eq!(c.constants, ConstantsMode::User { k: 0.5, delta: 0.9 });
        assert!(c.bounds.perturbative && !c.bounds.explicit);
        let s = c.sweep.unwrap();
        assert_eq!(s.grid, vec![0.25, 0.5, 1.0]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.output, PathBuf::from("out/x"));
    }

    #[test]
    fn errors_carry_positions() {
        let e = ExperimentConfig::parse("problem = linear_gaussian\n  bogus = 1\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
        let e = ExperimentConfig::parse("problem = nope\n").unwrap_err();
        assert_eq!((e.line, e.column), (1, 11));
        let e = ExperimentConfig::parse("problem linear_gaussian\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = ExperimentConfig::parse("problem = linear_gaussian\nseed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = ExperimentConfig::parse("problem = linear_gaussian\nsweep.axis = eps\nsweep.grid = 1, 0.5\n").unwrap_err();
        assert_eq!((e.line, e.column), (3, 14));
        let e = ExperimentConfig::parse("problem = linear_gaussian\nbounds = perturbative\n").unwrap_err();
        assert!(e.message.contains("perturbed_linear"));
        let e = ExperimentConfig::parse("problem = linear_gaussian\nsweep.axis = tau\nsweep.grid = 1\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = ExperimentConfig::parse("problem = perturbed_linear\nproblem.eps = 1\nsweep.axis = eps\nsweep.grid = 1\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn spacing() {
        let g = spaced(2f64.powi(-10), 1.0, 11, true);
        for (i, v) in g.iter().enumerate() {
            assert!((v / 2f64.powi(i as i32 - 10) - 1.0).abs() < 1e-14);
        }
        assert_eq!(spaced(1.0, 3.0, 3, false), vec![1.0, 2.0, 3.0]);
    }
}
