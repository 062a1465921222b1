//! Per-point evaluation: MAP, constants, bounds and oracle.

use crate::config::{Axis, ConstantsMode, ExperimentConfig, OracleChoice};
use crate::error::CliError;
use laplace_cert::bounds::{explicit_bound, growth_check, optimal_r0, AssumptionConstants, Provenance, R0Status};
use laplace_cert::constants::{assumption_constants, estimate_delta, estimate_k, SamplingOptions};
use laplace_cert::laplace::{map_estimate, MapOptions, MapResult, Uniqueness};
use laplace_cert::model::{catalog, CatalogParams, InverseProblem};
use laplace_cert::oracles::{tv_importance, tv_quadrature, OracleMethod, QuadSpec, TvEstimate};
use laplace_cert::perturbed::{perturbative_bound, PerturbationSpec, PerturbativeBound};
use laplace_cert::Error as CoreError;
use nalgebra::DVector;
use rayon::prelude::*;
use std::time::Instant;

/// Largest dimension for which `oracle = auto` still runs importance sampling.
pub const AUTO_IMPORTANCE_MAX_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitBound {
    pub r0: f64,
    pub r0_status: R0Status,
    pub e1: f64,
    pub e2: f64,
    pub total: f64,
    pub clipped_total: f64,
    pub clipped: bool,
    pub quadrature_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRow {
    pub value: f64,
    pub condition_ok: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// Hypotheses of the increasing-dimension rate; a sweep-validity flag.
    pub growth_ok: bool,
}

/// One grid point of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: Option<Axis>,
    pub axis_value: Option<f64>,
    pub problem: String,
    pub dim: usize,
    pub eps: f64,
    pub tau: Option<f64>,
    pub x_hat: Vec<f64>,
    pub i_min: f64,
    pub min_eig: f64,
    pub map_iterations: usize,
    pub uniqueness: Uniqueness,
    pub constants: Option<AssumptionConstants>,
    pub assumptions_ok: bool,
    pub split: Option<SplitBound>,
    pub explicit: Option<ExplicitRow>,
    pub perturbative: Option<PerturbativeBound>,
    pub oracle: Option<TvEstimate>,
    pub note: String,
    pub wall_time: f64,
}

impl SweepRow {
    /// Oracle TV below the raw split bound up to three oracle errors; `None` when either is missing.
    pub fn bound_holds(&self) -> Option<bool> {
        let o = self.oracle.as_ref()?;
        let b = self.split.as_ref()?;
        Some(o.value <= b.total + 3.0 * o.err)
    }
}

fn problem_params(cfg: &ExperimentConfig, axis_value: Option<f64>) -> CatalogParams {
    let mut p = cfg.params.clone();
    if let (Some(s), Some(v)) = (&cfg.sweep, axis_value) {
        let text = match s.axis {
            Axis::Dim => format!("{}", v as usize),
            _ => format!("{v:?}"),
        };
        p.insert(s.axis.param().to_string(), text);
    }
    p
}

pub fn build_problem(cfg: &ExperimentConfig, axis_value: Option<f64>) -> Result<InverseProblem, CliError> {
    Ok(catalog(&cfg.problem, &problem_params(cfg, axis_value))?)
}

pub fn solve_map(problem: &InverseProblem, seed: u64) -> Result<MapResult, CliError> {
    let opts = MapOptions {
        seed,
        ..Default::default()
    };
    Ok(map_estimate(problem, &DVector::zeros(problem.dim()), &opts)?)
}

fn sampling(cfg: &ExperimentConfig) -> SamplingOptions {
    SamplingOptions {
        n_points: cfg.constant_samples,
        seed: cfg.seed,
        ..Default::default()
    }
}

/// Constants per the configured mode; `Ok(Err(msg))` records an assumption violation.
fn no_closed_form(problem: &InverseProblem) -> CliError {
    CliError::Invalid(format!(
        "no closed-form constants for `{}`; use `constants = estimate` or `constants = user`",
        problem.name
    ))
}

pub fn constants_for(
    cfg: &ExperimentConfig,
    problem: &InverseProblem,
    map: &MapResult,
) -> Result<Result<AssumptionConstants, String>, CliError> {
    let result = match cfg.constants {
        ConstantsMode::User { k, delta } => AssumptionConstants::new(k, delta, Provenance::User, "user-supplied"),
        ConstantsMode::Analytic => {
            // Checked before sampling so a missing closed form is a config error, not a violation.
            if !problem.is_exactly_gaussian() && PerturbationSpec::from_problem(problem).is_err() {
                return Err(no_closed_form(problem));
            }
            match assumption_constants(problem, map, &sampling(cfg)) {
                Ok(c) if c.provenance != Provenance::Analytic => return Err(no_closed_form(problem)),
                other => other,
            }
        }
        ConstantsMode::Estimate => {
            let opts = sampling(cfg);
            estimate_k(problem, map, &opts).and_then(|k| {
                let d = estimate_delta(problem, map, &opts)?;
                let prov = if k.provenance == Provenance::Analytic && d.provenance == Provenance::Analytic {
                    Provenance::Analytic
                } else {
                    Provenance::Estimated
                };
                AssumptionConstants::new(k.k, d.delta, prov, format!("K: {}; δ: {}", k.details, d.details))
            })
        }
    };
    match result {
        Ok(c) => Ok(Ok(c)),
        Err(CoreError::AssumptionViolated(m)) => Ok(Err(m)),
        Err(e) => Err(e.into()),
    }
}

pub fn oracle_for(
    choice: OracleChoice,
    samples: usize,
    seed: u64,
    problem: &InverseProblem,
    map: &MapResult,
) -> Result<(Option<TvEstimate>, Option<String>), CliError> {
    let d = problem.dim();
    let method = match choice {
        OracleChoice::None => return Ok((None, None)),
        OracleChoice::Quadrature => OracleMethod::Quadrature,
        OracleChoice::Importance => OracleMethod::Importance,
        OracleChoice::Auto if d <= 2 => OracleMethod::Quadrature,
        OracleChoice::Auto if d <= AUTO_IMPORTANCE_MAX_DIM => OracleMethod::Importance,
        OracleChoice::Auto => {
            return Ok((None, Some(format!("no oracle above d = {AUTO_IMPORTANCE_MAX_DIM}"))));
        }
    };
    let est = match method {
        OracleMethod::Quadrature => tv_quadrature(problem, map, &QuadSpec::default())?,
        OracleMethod::Importance => tv_importance(problem, map, samples, seed)?,
    };
    let warn = (!est.reliable).then(|| format!("{method} oracle flagged unreliable"));
    Ok((Some(est), warn))
}

/// Runs the full pipeline at one grid point.
pub fn evaluate_point(cfg: &ExperimentConfig, axis_value: Option<f64>) -> Result<SweepRow, CliError> {
    let start = Instant::now();
    let problem = build_problem(cfg, axis_value)?;
    let map = solve_map(&problem, cfg.seed)?;
    let mut notes: Vec<String> = Vec::new();
    if map.uniqueness == Uniqueness::MultipleMinimaFound {
        notes.push(format!("{} local minima found", map.local_minima.len()));
    }

    let constants = match constants_for(cfg, &problem, &map)? {
        Ok(c) => Some(c),
        Err(m) => {
            notes.push(m);
            None
        }
    };
    let mut assumptions_ok = constants.is_some();
    let d = problem.dim();
    let eps = problem.eps;

    let split = match (&constants, cfg.bounds.split) {
        (Some(c), true) => {
            let o = optimal_r0(c, eps, d)?;
            Some(SplitBound {
                r0: o.r0,
                r0_status: o.status,
                e1: o.breakdown.e1,
                e2: o.breakdown.e2,
                total: o.breakdown.total,
                clipped_total: o.breakdown.clipped_total,
                clipped: o.breakdown.clipped,
                quadrature_error: o.breakdown.quadrature_error,
            })
        }
        _ => None,
    };
    let explicit = match (&constants, cfg.bounds.explicit) {
        (Some(c), true) => {
            let e = explicit_bound(c, eps, d)?;
            Some(ExplicitRow {
                value: e.value,
                condition_ok: e.condition_ok,
                lhs: e.lhs,
                rhs: e.rhs,
                growth_ok: growth_check(c, eps, d)?.ok,
            })
        }
        _ => None,
    };
    let perturbative = if cfg.bounds.perturbative {
        let spec = PerturbationSpec::from_problem(&problem)?;
        let s5 = perturbative_bound(&spec, &map)?;
        if !(s5.delta_tau > 0.0) {
            assumptions_ok = false;
            if constants.is_some() {
                notes.push(format!("δ_τ = {:e} ≤ 0", s5.delta_tau));
            }
        }
        Some(s5)
    } else {
        None
    };

    let (oracle, warn) = oracle_for(cfg.oracle, cfg.oracle_samples, cfg.seed, &problem, &map)?;
    notes.extend(warn);

    Ok(SweepRow {
        axis: cfg.sweep.as_ref().map(|s| s.axis),
        axis_value,
        problem: problem.name.clone(),
        dim: d,
        eps,
        tau: problem.perturbation.as_ref().map(|p| p.tau),
        x_hat: map.x_hat.iter().copied().collect(),
        i_min: map.i_min,
        min_eig: map.min_eig,
        map_iterations: map.iterations,
        uniqueness: map.uniqueness,
        constants,
        assumptions_ok,
        split,
        explicit,
        perturbative,
        oracle,
        note: notes.join("; "),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Evaluates every grid point in parallel; rows come back in grid order.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let points: Vec<Option<f64>> = match &cfg.sweep {
        Some(s) => s.grid.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    points.par_iter().map(|v| evaluate_point(cfg, *v)).collect()
}
