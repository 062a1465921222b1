//! Reference distances between the posterior and its Laplace approximation.
//!
//! Quadrature works in whitened coordinates `x = x̂ + √ε L^{-T} u`, where the
//! Laplace approximation is the standard normal. With
//! `ρ = Z/Z̃ = (2π)^{-d/2} ∫ exp(−I(x(u))/ε) du` the posterior density in `u` is
//! `(2π)^{-d/2} exp(−I/ε)/ρ`.

use crate::error::{Error, Result};
use crate::laplace::MapResult;
use crate::model::{potential, InverseProblem};
use crate::quadrature::{integrate_box, integrate_with_errors, QuadOptions};
use crate::special::upper_gamma_reg;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Quadrature,
    Importance,
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMethod::Quadrature => "quadrature",
            OracleMethod::Importance => "importance",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvEstimate {
    pub value: f64,
    pub err: f64,
    pub method: OracleMethod,
    pub z: f64,
    pub ln_z: f64,
    pub z_tilde: f64,
    /// Effective sample size; importance sampling only.
    pub ess: Option<f64>,
    /// Hellinger distance and its error; quadrature only.
    pub hellinger: Option<(f64, f64)>,
    /// `mean|wᵢ − 1|` and its batch-means standard error; importance sampling only.
    pub fundamental: Option<(f64, f64)>,
    /// False when the ESS falls below 1% of the sample count.
    pub reliable: bool,
    pub samples: usize,
}

/// Box and tolerances for the quadrature oracles.
#[derive(Debug, Clone)]
pub struct QuadSpec {
    /// Half-width of the whitened box.
    pub radius: f64,
    /// Number of times the box may be doubled.
    pub max_widenings: usize,
    pub tol: f64,
    pub max_dim: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            radius: 12.0,
            max_widenings: 3,
            tol: 1e-10,
            max_dim: 3,
        }
    }
}

fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}

/// Posterior log-weight `−I(x(u))/ε − (d/2) ln 2π` at whitened `u`; `−∞` where `G` overflows.
fn log_weight(problem: &InverseProblem, map: &MapResult, u: &[f64]) -> f64 {
    let d = u.len();
    let uv = DVector::from_column_slice(u);
    let x = &map.x_hat + map.unwhiten(&uv) * problem.eps.sqrt();
    match potential(problem, &x, 0) {
        Ok(e) => -(e.value - map.i_min) / problem.eps - 0.5 * d as f64 * ln_2pi(),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn log_std_normal(u: &[f64]) -> f64 {
    -0.5 * u.iter().map(|v| v * v).sum::<f64>() - 0.5 * u.len() as f64 * ln_2pi()
}

/// Largest posterior log-weight on a probe set of the box boundary.
fn boundary_log_weight(problem: &InverseProblem, map: &MapResult, r: f64) -> f64 {
    let d = map.dim();
    let mut worst = f64::NEG_INFINITY;
    let mut probe = |u: &[f64]| worst = worst.max(log_weight(problem, map, u));
    for i in 0..d {
        for s in [-r, r] {
            let mut u = vec![0.0; d];
            u[i] = s;
            probe(&u);
            // Face points away from the axis.
            for t in [-0.5, 0.5] {
                let mut v = u.clone();
                v[(i + 1) % d] += t * r * (d > 1) as u8 as f64;
                probe(&v);
            }
        }
    }
    for corner in 0..(1usize << d.min(10)) {
        let u: Vec<f64> = (0..d).map(|k| if corner >> k & 1 == 1 { r } else { -r }).collect();
        probe(&u);
    }
    worst
}

fn check_quadrature_dim(map: &MapResult, spec: &QuadSpec) -> Result<()> {
    if map.dim() > spec.max_dim {
        return Err(Error::Unsupported(format!(
            "quadrature oracle limited to d ≤ {}, got d = {}",
            spec.max_dim,
            map.dim()
        )));
    }
    if !map.converged {
        return Err(Error::Contract("oracle needs a converged MAP point".into()));
    }
    Ok(())
}

/// Box half-width whose boundary carries negligible posterior and Laplace mass.
fn box_radius(problem: &InverseProblem, map: &MapResult, spec: &QuadSpec) -> Result<f64> {
    let d = map.dim() as f64;
    let mut r = spec.radius;
    for _ in 0..=spec.max_widenings {
        // P(|u_i| > r for some i) ≤ d · Q(1/2, r²/2) for the standard normal.
        let laplace_tail = d * upper_gamma_reg(0.5, 0.5 * r * r)?;
        let post_edge = boundary_log_weight(problem, map, r).exp();
        if laplace_tail < 0.1 * spec.tol && post_edge < 0.1 * spec.tol {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::Quadrature {
        partial: f64::NAN,
        err: boundary_log_weight(problem, map, r / 2.0).exp(),
    })
}

fn opts(tol: f64) -> QuadOptions {
    QuadOptions {
        abs_tol: tol,
        rel_tol: tol,
        max_subdivisions: 2000,
    }
}

struct Normalization {
    rho: f64,
    err: f64,
    radius: f64,
}

fn normalization_ratio(problem: &InverseProblem, map: &MapResult, spec: &QuadSpec) -> Result<Normalization> {
    check_quadrature_dim(map, spec)?;
    let r = box_radius(problem, map, spec)?;
    let d = map.dim();
    let lo = vec![-r; d];
    let hi = vec![r; d];
    let f = |u: &[f64]| [log_weight(problem, map, u).exp()];
    let res = integrate_box(&f, &lo, &hi, &opts(spec.tol));
    let (rho, err) = (res.value[0], res.err[0]);
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Quadrature { partial: rho, err });
    }
    if !res.converged && err > 1e3 * spec.tol * rho {
        return Err(Error::Quadrature { partial: rho, err });
    }
    Ok(Normalization { rho, err, radius: r })
}

/// Posterior normalisation `Z = ∫ exp(−I(x)/ε) dx` (with `I` shifted to vanish at `x̂`).
pub fn normalization(problem: &InverseProblem, map: &MapResult, spec: &QuadSpec) -> Result<f64> {
    Ok(normalization_ratio(problem, map, spec)?.rho * map.z_tilde)
}

/// Total variation and Hellinger distances by tensorised adaptive quadrature.
pub fn tv_quadrature(problem: &InverseProblem, map: &MapResult, spec: &QuadSpec) -> Result<TvEstimate> {
    let norm = normalization_ratio(problem, map, spec)?;
    let d = map.dim();
    let r = norm.radius;
    let lo = vec![-r; d];
    let hi = vec![r; d];
    let ln_rho = norm.rho.ln();
    let f = |u: &[f64]| {
        let p = (log_weight(problem, map, u) - ln_rho).exp();
        let q = log_std_normal(u).exp();
        let s = p.sqrt() - q.sqrt();
        [0.5 * (p - q).abs(), 0.5 * s * s]
    };
    let res = integrate_box(&f, &lo, &hi, &opts(spec.tol));
    let rel_rho = norm.err / norm.rho;
    let tail = d as f64 * upper_gamma_reg(0.5, 0.5 * r * r)?;
    let tv_err = res.err[0] + rel_rho + tail;
    let h2 = res.value[1].max(0.0);
    let h = h2.sqrt();
    let h2_err = res.err[1] + rel_rho + tail;
    // |√a − √b| ≤ √|a − b|
    let h_err = h2_err.sqrt().min(if h > 0.0 { h2_err / (2.0 * h) } else { f64::INFINITY });
    let z = norm.rho * map.z_tilde;
    Ok(TvEstimate {
        value: res.value[0].clamp(0.0, 1.0),
        err: tv_err,
        method: OracleMethod::Quadrature,
        z,
        ln_z: ln_rho + map.ln_z_tilde,
        z_tilde: map.z_tilde,
        ess: None,
        hellinger: Some((h, h_err)),
        fundamental: None,
        reliable: res.converged,
        samples: res.evaluations,
    })
}

/// Hellinger distance by quadrature.
pub fn hellinger(problem: &InverseProblem, map: &MapResult, spec: &QuadSpec) -> Result<f64> {
    Ok(tv_quadrature(problem, map, spec)?.hellinger.expect("quadrature sets hellinger").0)
}

/// TV and Hellinger distances between two one-dimensional densities given by
/// their logs, integrated over `[lo, hi]`. Returns `(tv, hellinger, err)`.
pub fn tv_hellinger_1d<P, Q>(log_p: P, log_q: Q, lo: f64, hi: f64, tol: f64) -> (f64, f64, f64)
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let res = integrate_with_errors(
        |x| {
            let p = log_p(x).exp();
            let q = log_q(x).exp();
            let s = p.sqrt() - q.sqrt();
            ([0.5 * (p - q).abs(), 0.5 * s * s], [0.0; 2])
        },
        lo,
        hi,
        &opts(tol),
    );
    (res.value[0], res.value[1].max(0.0).sqrt(), res.err[0].max(res.err[1]))
}

/// Number of batches for the batch-means error of [`tv_importance`].
pub const IMPORTANCE_BATCHES: usize = 16;

struct BatchStats {
    log_w: Vec<f64>,
}

fn batch_mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Self-normalised importance sampling with the Laplace approximation as proposal.
///
/// `wᵢ = exp(−I(xᵢ)/ε + ‖xᵢ − x̂‖²_Σ/2ε)` estimates `Z/Z̃` by its mean, and
/// `TV = ½ mean|wᵢ/mean(w) − 1|`. Errors are batch-means standard errors over
/// 16 batches drawn from independent streams of the seeded generator.
pub fn tv_importance(problem: &InverseProblem, map: &MapResult, n: usize, seed: u64) -> Result<TvEstimate> {
    if n < 1000 {
        return Err(Error::Parameter(format!("importance sampling needs n ≥ 1000, got {n}")));
    }
    if !map.converged {
        return Err(Error::Contract("oracle needs a converged MAP point".into()));
    }
    let d = map.dim();
    let per = n.div_ceil(IMPORTANCE_BATCHES);
    // R₂ ≡ 0 for an exactly quadratic potential; skip the rounding noise of I − ½|z|².
    let quadratic = problem.is_exactly_gaussian();
    let batches: Vec<BatchStats> = (0..IMPORTANCE_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let log_w = (0..per)
                .map(|_| {
                    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    if quadratic {
                        return 0.0;
                    }
                    let half = 0.5 * z.iter().map(|v| v * v).sum::<f64>();
                    log_weight(problem, map, &z) + 0.5 * d as f64 * ln_2pi() + half
                })
                .collect();
            BatchStats { log_w }
        })
        .collect();
    let shift = batches
        .iter()
        .flat_map(|b| b.log_w.iter())
        .fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    if !shift.is_finite() {
        return Err(Error::Evaluation {
            x: map.x_hat.iter().copied().collect(),
            what: "all importance weights vanish".into(),
        });
    }
    let total = (per * IMPORTANCE_BATCHES) as f64;
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    for b in &batches {
        for lw in &b.log_w {
            let w = (lw - shift).exp();
            sum_w += w;
            sum_w2 += w * w;
        }
    }
    let mean_shifted = sum_w / total;
    let tv_of = |log_w: &[f64], mean: f64| {
        0.5 * log_w.iter().map(|lw| ((lw - shift).exp() / mean - 1.0).abs()).sum::<f64>() / log_w.len() as f64
    };
    let all: Vec<f64> = batches.iter().flat_map(|b| b.log_w.iter().copied()).collect();
    let tv = tv_of(&all, mean_shifted);
    let per_batch_tv: Vec<f64> = batches
        .iter()
        .map(|b| {
            let m = b.log_w.iter().map(|lw| (lw - shift).exp()).sum::<f64>() / b.log_w.len() as f64;
            tv_of(&b.log_w, m)
        })
        .collect();
    let (_, tv_err) = batch_mean_stderr(&per_batch_tv);
    let per_batch_fund: Vec<f64> = batches
        .iter()
        .map(|b| b.log_w.iter().map(|lw| (lw.exp() - 1.0).abs()).sum::<f64>() / b.log_w.len() as f64)
        .collect();
    let fundamental = all.iter().map(|lw| (lw.exp() - 1.0).abs()).sum::<f64>() / total;
    let (_, fund_err) = batch_mean_stderr(&per_batch_fund);
    let ess = sum_w * sum_w / sum_w2;
    let ln_rho = mean_shifted.ln() + shift;
    Ok(TvEstimate {
        value: tv.clamp(0.0, 1.0),
        err: tv_err,
        method: OracleMethod::Importance,
        z: (ln_rho + map.ln_z_tilde).exp(),
        ln_z: ln_rho + map.ln_z_tilde,
        z_tilde: map.z_tilde,
        ess: Some(ess),
        hellinger: None,
        fundamental: Some((fundamental, fund_err)),
        reliable: ess >= 0.01 * total,
        samples: total as usize,
    })
}

/// Kraft sandwich `d_H² ≤ d_TV ≤ √2 d_H`, up to `tol`.
pub fn kraft_holds(tv: f64, h: f64, tol: f64) -> bool {
    h * h <= tv + tol && tv <= std::f64::consts::SQRT_2 * h + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{map_estimate, MapOptions};
    use crate::model::{catalog, CatalogParams};

    #[test]
    fn gaussian_pair_closed_forms() {
        let lp = |x: f64| -0.5 * (x + 1.0) * (x + 1.0) - 0.5 * ln_2pi();
        let lq = |x: f64| -0.5 * (x - 1.0) * (x - 1.0) - 0.5 * ln_2pi();
        let (tv, h, _) = tv_hellinger_1d(lp, lq, -20.0, 20.0, 1e-13);
        assert!((tv - 0.682_689_492_137_086).abs() < 1e-6, "{tv}");
        assert!((h - (1.0 - (-0.5f64).exp()).sqrt()).abs() < 1e-6, "{h}");
        assert!(kraft_holds(tv, h, 1e-12));
    }

    #[test]
    fn linear_gaussian_is_exact() {
        let p = catalog("linear_gaussian", &CatalogParams::new()).unwrap();
        let m = map_estimate(&p, &DVector::zeros(1), &MapOptions::default()).unwrap();
        let q = tv_quadrature(&p, &m, &QuadSpec::default()).unwrap();
        assert!(q.value < 1e-8);
        assert!((q.z / m.z_tilde - 1.0).abs() < 1e-8);
        let is = tv_importance(&p, &m, 4000, 3).unwrap();
        assert!(is.value < 1e-12);
        assert!(is.reliable);
    }

    #[test]
    fn small_n_rejected() {
        let p = catalog("linear_gaussian", &CatalogParams::new()).unwrap();
        let m = map_estimate(&p, &DVector::zeros(1), &MapOptions::default()).unwrap();
        assert!(tv_importance(&p, &m, 10, 0).is_err());
    }
}
