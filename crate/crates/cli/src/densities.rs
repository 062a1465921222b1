//! Posterior and Laplace densities with the two integrands, for scalar problems.

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::fmt_f64;
use crate::pipeline::{build_problem, solve_map};
use laplace_cert::laplace::laplace_approx;
use laplace_cert::model::potential;
use laplace_cert::oracles::{normalization, QuadSpec};
use nalgebra::DVector;
use std::io::Write;

pub const DEFAULT_POINTS: usize = 2001;
pub const HEADER: [&str; 5] = ["x", "posterior", "laplace", "tv_integrand", "fundamental_integrand"];

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub x: f64,
    pub posterior: f64,
    pub laplace: f64,
    /// `½|p − q|`.
    pub tv: f64,
    /// `|exp(−R₂/ε) − 1| q` with `R₂` the remainder after the quadratic Taylor term.
    pub fundamental: f64,
}

/// Tabulates on `n` points spanning eight Laplace standard deviations either side of `x̂`,
/// widened to cover any other local minimum found by the multistart search.
pub fn densities(cfg: &ExperimentConfig, n: usize) -> Result<Vec<DensityRow>, CliError> {
    if n < 2 {
        return Err(CliError::Invalid("densities need at least 2 grid points".into()));
    }
    let problem = build_problem(cfg, None)?;
    if problem.dim() != 1 {
        return Err(CliError::Invalid(format!(
            "densities are tabulated for d = 1 only, got d = {}",
            problem.dim()
        )));
    }
    let map = solve_map(&problem, cfg.seed)?;
    let eps = problem.eps;
    let nu = laplace_approx(&map, eps)?;
    let z = normalization(&problem, &map, &QuadSpec::default())?;
    let ln_z = z.ln();
    let x_hat = map.x_hat[0];
    let h = map.hess[(0, 0)];
    let sd = nu.covariance[(0, 0)].sqrt();
    let (mut lo, mut hi) = (x_hat - 8.0 * sd, x_hat + 8.0 * sd);
    // Secondary modes get the same eight local standard deviations.
    for (xm, _) in &map.local_minima {
        let curv = potential(&problem, xm, 2)?.hess.map_or(0.0, |h| h[(0, 0)]);
        if curv > 0.0 {
            let s = (eps / curv).sqrt();
            lo = lo.min(xm[0] - 8.0 * s);
            hi = hi.max(xm[0] + 8.0 * s);
        }
    }
    (0..n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let xv = DVector::from_element(1, x);
            let i_x = potential(&problem, &xv, 0)?.value - map.i_min;
            let dx = x - x_hat;
            let r2 = i_x - 0.5 * h * dx * dx;
            let p = (-i_x / eps - ln_z).exp();
            let q = nu.density(&xv);
            Ok(DensityRow {
                x,
                posterior: p,
                laplace: q,
                tv: 0.5 * (p - q).abs(),
                fundamental: (-r2 / eps).exp_m1().abs() * q,
            })
        })
        .collect()
}

pub fn write_densities<W: Write>(rows: &[DensityRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([r.x, r.posterior, r.laplace, r.tv, r.fundamental].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}
