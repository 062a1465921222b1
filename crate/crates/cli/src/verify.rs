//! Machine-readable check of the standing assumptions at one configuration.

use crate::config::{ConstantsMode, ExperimentConfig};
use crate::error::CliError;
use crate::output::fmt_f64;
use crate::pipeline::{build_problem, solve_map};
use laplace_cert::bounds::{explicit_bound, AssumptionConstants, Provenance};
use laplace_cert::constants::{estimate_delta, estimate_k, SamplingOptions};
use laplace_cert::laplace::{MapResult, Uniqueness};
use laplace_cert::perturbed::{perturbative_bound, PerturbationSpec};
use laplace_cert::Error as CoreError;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub provenance: String,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub problem: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The explicit-form condition only gates one bound and does not count here.
    pub fn assumptions_hold(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| c.name != "explicit_condition")
            .all(|c| c.status == Status::Pass)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "problem\t{}", self.problem)?;
        writeln!(f, "check\tstatus\tprovenance\tvalue\tdetail")?;
        for c in &self.checks {
            let v = c.value.map(fmt_f64).unwrap_or_default();
            writeln!(f, "{}\t{}\t{}\t{}\t{}", c.name, c.status, c.provenance, v, c.detail.replace(['\t', '\n'], " "))?;
        }
        writeln!(f, "assumptions\t{}", if self.assumptions_hold() { Status::Pass } else { Status::Fail })
    }
}

fn check(name: &'static str, status: Status, provenance: impl Into<String>, value: Option<f64>, detail: impl Into<String>) -> Check {
    Check {
        name,
        status,
        provenance: provenance.into(),
        value,
        detail: detail.into(),
    }
}

/// Number of distinct local minima whose value ties the global one.
fn tied_minima(map: &MapResult) -> usize {
    let tol = 1e-8 * map.i_min.abs().max(1.0);
    map.local_minima
        .iter()
        .filter(|(_, v)| (v - map.i_min).abs() <= tol)
        .count()
}

/// Runs every check; failures are encoded in the report, only configuration errors escape.
pub fn verify(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let problem = build_problem(cfg, None)?;
    let mut checks = Vec::new();
    let map = match solve_map(&problem, cfg.seed) {
        Ok(m) => m,
        Err(e) => {
            checks.push(check("minimizer", Status::Fail, "multistart", None, e.to_string()));
            for name in ["third_derivative", "quadratic_growth", "explicit_condition"] {
                checks.push(check(name, Status::Skip, "", None, "no MAP point"));
            }
            return Ok(Report {
                problem: problem.name,
                checks,
            });
        }
    };
    let ties = tied_minima(&map);
    let unique = match map.uniqueness {
        Uniqueness::Unverified => "uniqueness unverified".to_string(),
        Uniqueness::MultipleMinimaFound if ties > 1 => format!("{ties} minima share the lowest value"),
        Uniqueness::MultipleMinimaFound => format!(
            "{} local minima found, the global one is strict; uniqueness unverified",
            map.local_minima.len()
        ),
    };
    let min_ok = map.converged && map.min_eig > 0.0 && ties <= 1;
    checks.push(check(
        "minimizer",
        if min_ok { Status::Pass } else { Status::Fail },
        "multistart",
        Some(map.min_eig),
        format!("Hessian min eigenvalue at x̂; {unique}; |∇I| = {:e}", map.grad_norm),
    ));

    let opts = SamplingOptions {
        n_points: cfg.constant_samples,
        seed: cfg.seed,
        ..Default::default()
    };
    let wrap = |r: Result<(f64, Provenance, String), CoreError>| -> Result<Result<(f64, Provenance, String), String>, CliError> {
        match r {
            Ok(v) => Ok(Ok(v)),
            Err(CoreError::AssumptionViolated(m)) => Ok(Err(m)),
            Err(e) => Err(e.into()),
        }
    };
    let perturbed = PerturbationSpec::from_problem(&problem).ok();
    let (k, delta) = match (&cfg.constants, &perturbed) {
        (ConstantsMode::User { k, delta }, _) => (
            Ok((*k, Provenance::User, "user-supplied".to_string())),
            Ok((*delta, Provenance::User, "user-supplied".to_string())),
        ),
        (_, Some(spec)) => {
            let s = perturbative_bound(spec, &map)?;
            let k = Ok((s.k_tau, Provenance::Analytic, format!("closed-form K_τ at τ = {}", spec.tau)));
            let d = if s.delta_tau > 0.0 {
                Ok((s.delta_tau.min(1.0), Provenance::Analytic, format!("closed-form δ_τ = {:e}", s.delta_tau)))
            } else {
                Err(format!("perturbation too large: δ_τ = {:e} ≤ 0", s.delta_tau))
            };
            (k, d)
        }
        _ => (
            wrap(estimate_k(&problem, &map, &opts).map(|e| (e.k, e.provenance, e.details)))?,
            wrap(estimate_delta(&problem, &map, &opts).map(|e| (e.delta, e.provenance, e.details)))?,
        ),
    };
    for (name, r) in [("third_derivative", &k), ("quadratic_growth", &delta)] {
        checks.push(match r {
            Ok((v, p, d)) => check(name, Status::Pass, p.to_string(), Some(*v), d.clone()),
            Err(m) => check(name, Status::Fail, "", None, m.clone()),
        });
    }
    match (&k, &delta) {
        (Ok((kv, kp, _)), Ok((dv, dp, _))) => {
            let prov = if kp == dp { *kp } else { Provenance::Estimated };
            let consts = AssumptionConstants::new(*kv, *dv, prov, "")?;
            let e = explicit_bound(&consts, problem.eps, problem.dim())?;
            checks.push(check(
                "explicit_condition",
                if e.condition_ok { Status::Pass } else { Status::Fail },
                prov.to_string(),
                Some(e.lhs),
                format!("lhs {} vs rhs {}", fmt_f64(e.lhs), fmt_f64(e.rhs)),
            ));
        }
        _ => checks.push(check("explicit_condition", Status::Skip, "", None, "constants unavailable")),
    }
    Ok(Report {
        problem: problem.name,
        checks,
    })
}
