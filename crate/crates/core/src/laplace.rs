//! MAP estimation and the Laplace approximation `N(x̂, εΣ)`.

use crate::error::{Error, Result};
use crate::model::{potential, InverseProblem, Prior};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const POLISH_STEPS: usize = 2;

/// Options for [`map_estimate`].
#[derive(Debug, Clone)]
pub struct MapOptions {
    /// Gradient-norm tolerance; `None` means `1e-10 · max(1, |Ĩ(x0)|)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Extra random starts drawn around the prior mean (or `x0` for a flat prior).
    pub restarts: usize,
    /// Standard deviation of the restart perturbation, in units of the prior scale.
    pub restart_spread: f64,
    pub seed: u64,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            tol: None,
            max_iter: 200,
            restarts: 8,
            restart_spread: 1.0,
            seed: 0,
        }
    }
}

/// Whether the returned minimiser is known to be unique. Multistart can only falsify uniqueness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uniqueness {
    Unverified,
    MultipleMinimaFound,
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub x_hat: DVector<f64>,
    /// `Ĩ(x̂)`.
    pub i_min: f64,
    pub grad_norm: f64,
    /// `H = D²Ĩ(x̂)`.
    pub hess: DMatrix<f64>,
    /// `Σ = H⁻¹`.
    pub sigma: DMatrix<f64>,
    /// Lower Cholesky factor `L` of `H = Σ⁻¹ = L Lᵀ`.
    pub sigma_chol: DMatrix<f64>,
    pub ln_det_sigma: f64,
    pub z_tilde: f64,
    pub ln_z_tilde: f64,
    pub min_eig: f64,
    pub converged: bool,
    pub iterations: usize,
    pub tol: f64,
    pub grad_history: Vec<f64>,
    /// Distinct local minima `(x, Ĩ(x))` seen across all starts, best first.
    pub local_minima: Vec<(DVector<f64>, f64)>,
    pub uniqueness: Uniqueness,
}

impl MapResult {
    pub fn dim(&self) -> usize {
        self.x_hat.len()
    }

    /// Builds the result at a known minimiser with Hessian `hess`.
    pub fn from_hessian(x_hat: DVector<f64>, i_min: f64, hess: DMatrix<f64>, eps: f64) -> Result<Self> {
        let d = x_hat.len();
        let hess = 0.5 * (&hess + hess.transpose());
        let min_eig = hess.clone().symmetric_eigen().eigenvalues.min();
        let chol = Cholesky::new(hess.clone()).ok_or_else(|| Error::Indefinite {
            min_eig,
            x: x_hat.iter().copied().collect(),
        })?;
        if !(min_eig > 0.0) {
            return Err(Error::Indefinite {
                min_eig,
                x: x_hat.iter().copied().collect(),
            });
        }
        let l = chol.l();
        let ln_det_sigma = -2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let sigma = chol.inverse();
        let sigma = 0.5 * (&sigma + sigma.transpose());
        let ln_z_tilde = 0.5 * d as f64 * (2.0 * PI * eps).ln() + 0.5 * ln_det_sigma;
        Ok(MapResult {
            x_hat: x_hat.clone(),
            i_min,
            grad_norm: 0.0,
            hess,
            sigma,
            sigma_chol: l,
            ln_det_sigma,
            z_tilde: ln_z_tilde.exp(),
            ln_z_tilde,
            min_eig,
            converged: true,
            iterations: 0,
            tol: 0.0,
            grad_history: Vec::new(),
            local_minima: vec![(x_hat, i_min)],
            uniqueness: Uniqueness::Unverified,
        })
    }

    /// `‖Σ^{1/2}‖ = 1/√λ_min(H)`.
    pub fn sigma_sqrt_norm(&self) -> f64 {
        1.0 / self.min_eig.sqrt()
    }

    /// `Lᵀ h`, whose Euclidean norm is `‖h‖_Σ`.
    pub fn whiten(&self, h: &DVector<f64>) -> DVector<f64> {
        self.sigma_chol.transpose() * h
    }

    /// `L^{-T} u`, the inverse of [`MapResult::whiten`].
    pub fn unwhiten(&self, u: &DVector<f64>) -> DVector<f64> {
        self.sigma_chol
            .transpose()
            .solve_upper_triangular(u)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// `‖h‖_Σ = √(hᵀ H h)`.
pub fn sigma_norm(map: &MapResult, h: &DVector<f64>) -> f64 {
    map.whiten(h).norm()
}

struct NewtonRun {
    x: DVector<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Solves `(H + λI) p = −g`, raising `λ` from 1e-8 by doubling until the
/// matrix factors and `p` is a descent direction.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let d = g.len();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let m = h + DMatrix::identity(d, d) * lambda;
        if let Some(ch) = Cholesky::new(m) {
            let p = -ch.solve(g);
            if p.dot(g) < 0.0 && p.iter().all(|v| v.is_finite()) {
                return Some(p);
            }
        }
        lambda = if lambda == 0.0 { 1e-8 } else { 2.0 * lambda };
    }
    None
}

fn newton(problem: &InverseProblem, x0: &DVector<f64>, tol: f64, max_iter: usize) -> Result<NewtonRun> {
    let mut x = x0.clone();
    let mut ev = potential(problem, &x, 2)?;
    let mut history = Vec::new();
    let mut polish = 0;
    let mut converged = false;
    for it in 0..max_iter {
        let g = ev.grad.clone().expect("order 2");
        let gn = g.norm();
        history.push(gn);
        if gn <= tol {
            converged = true;
            if polish == POLISH_STEPS || gn == 0.0 {
                return Ok(NewtonRun {
                    x,
                    value: ev.value,
                    grad_norm: gn,
                    iterations: it,
                    converged,
                    history,
                });
            }
            polish += 1;
        }
        let h = ev.hess.clone().expect("order 2");
        let Some(p) = newton_direction(&h, &g) else {
            break;
        };
        let slope = g.dot(&p);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let xn = &x + &p * alpha;
            if let Ok(v) = potential(problem, &xn, 0) {
                if v.value <= ev.value + ARMIJO_C * alpha * slope {
                    accepted = Some(xn);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let xn = match accepted {
            Some(xn) => xn,
            None => {
                // Values no longer resolve descent near the minimum; fall back on the gradient.
                let xn = &x + &p;
                match potential(problem, &xn, 2) {
                    Ok(e) if e.grad.as_ref().expect("order 2").norm() < gn => xn,
                    _ => break,
                }
            }
        };
        let en = potential(problem, &xn, 2)?;
        if converged && en.grad.as_ref().expect("order 2").norm() > gn {
            // Polishing made things worse: keep the current point.
            return Ok(NewtonRun {
                x,
                value: ev.value,
                grad_norm: gn,
                iterations: it,
                converged,
                history,
            });
        }
        x = xn;
        ev = en;
    }
    let gn = ev.grad.as_ref().expect("order 2").norm();
    Ok(NewtonRun {
        converged: converged || gn <= tol,
        x,
        value: ev.value,
        grad_norm: gn,
        iterations: history.len(),
        history,
    })
}

fn restart_points(problem: &InverseProblem, x0: &DVector<f64>, opts: &MapOptions) -> Vec<DVector<f64>> {
    let d = problem.dim();
    let (center, scale) = match &problem.prior {
        Prior::Gaussian(g) => (g.mean.clone(), g.cov.diagonal().map(f64::sqrt)),
        Prior::Flat { .. } => (x0.clone(), DVector::from_element(d, 1.0)),
    };
    (0..opts.restarts)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64 + 1);
            DVector::from_fn(d, |k, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                center[k] + opts.restart_spread * scale[k] * z
            })
        })
        .collect()
}

/// Damped Newton with Armijo backtracking on `Ĩ`, started from `x0` and from
/// `opts.restarts` seeded points around the prior mean. Returns the converged
/// start with the lowest `Ĩ`.
pub fn map_estimate(problem: &InverseProblem, x0: &DVector<f64>, opts: &MapOptions) -> Result<MapResult> {
    if x0.len() != problem.dim() {
        return Err(Error::Dimension {
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("x0 must be finite".into()));
    }
    let tol = match opts.tol {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::Parameter(format!("tolerance must be positive, got {t}"))),
        None => 1e-10 * potential(problem, x0, 0)?.value.abs().max(1.0),
    };
    let mut starts = vec![x0.clone()];
    starts.extend(restart_points(problem, x0, opts));
    let runs: Vec<Result<NewtonRun>> = starts
        .par_iter()
        .map(|s| newton(problem, s, tol, opts.max_iter))
        .collect();

    // Only starts that reach a point with a positive-definite Hessian count as minima.
    let mut minima: Vec<(NewtonRun, DMatrix<f64>)> = Vec::new();
    let mut first_failure = None;
    for run in runs {
        match run {
            Ok(r) if r.converged => {
                let h = potential(problem, &r.x, 2)?.hess.expect("order 2");
                if Cholesky::new(h.clone()).is_some() {
                    minima.push((r, h));
                } else if first_failure.is_none() {
                    let min_eig = h.symmetric_eigen().eigenvalues.min();
                    first_failure = Some(Error::Indefinite {
                        min_eig,
                        x: r.x.iter().copied().collect(),
                    });
                }
            }
            Ok(r) => {
                if first_failure.is_none() {
                    first_failure = Some(Error::NonConvergence {
                        iterations: r.iterations,
                        grad_norm: r.grad_norm,
                        last: r.x.iter().copied().collect(),
                    });
                }
            }
            Err(e) => {
                if first_failure.is_none() {
                    first_failure = Some(e);
                }
            }
        }
    }
    if minima.is_empty() {
        return Err(first_failure.expect("at least one start"));
    }
    // Stable sort keeps the x0 run ahead of equal-valued restarts.
    minima.sort_by(|a, b| a.0.value.total_cmp(&b.0.value));
    let mut distinct: Vec<(DVector<f64>, f64)> = Vec::new();
    for (r, _) in &minima {
        let scale = r.x.amax().max(1.0);
        if !distinct.iter().any(|(x, _)| (x - &r.x).amax() <= 1e-6 * scale) {
            distinct.push((r.x.clone(), r.value));
        }
    }
    let (best, hess) = minima.swap_remove(0);
    let mut out = MapResult::from_hessian(best.x, best.value, hess, problem.eps)?;
    out.grad_norm = best.grad_norm;
    out.converged = best.converged;
    out.iterations = best.iterations;
    out.tol = tol;
    out.grad_history = best.history;
    out.uniqueness = if distinct.len() > 1 {
        Uniqueness::MultipleMinimaFound
    } else {
        Uniqueness::Unverified
    };
    out.local_minima = distinct;
    Ok(out)
}

/// The Gaussian `N(x̂, εΣ)`.
#[derive(Debug, Clone)]
pub struct LaplaceApprox {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub eps: f64,
    chol_h: DMatrix<f64>,
    ln_norm: f64,
}

/// Laplace approximation around a converged MAP point.
pub fn laplace_approx(map: &MapResult, eps: f64) -> Result<LaplaceApprox> {
    if !map.converged {
        return Err(Error::Contract("Laplace approximation needs a converged MAP point".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("ε must be positive, got {eps}")));
    }
    let d = map.dim() as f64;
    Ok(LaplaceApprox {
        mean: map.x_hat.clone(),
        covariance: &map.sigma * eps,
        eps,
        chol_h: map.sigma_chol.clone(),
        ln_norm: 0.5 * d * (2.0 * PI * eps).ln() + 0.5 * map.ln_det_sigma,
    })
}

impl LaplaceApprox {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `ln Z̃`.
    pub fn ln_normalization(&self) -> f64 {
        self.ln_norm
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let u = self.chol_h.transpose() * (x - &self.mean);
        -0.5 * u.norm_squared() / self.eps - self.ln_norm
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.log_density(x).exp()
    }

    /// `x̂ + √ε L^{-T} z` for a standard normal `z`.
    pub fn transform_standard(&self, z: &DVector<f64>) -> DVector<f64> {
        let w = self
            .chol_h
            .transpose()
            .solve_upper_triangular(z)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + w * self.eps.sqrt()
    }

    /// `n` draws from the stream `stream` of the seeded generator.
    pub fn sample_stream(&self, n: usize, seed: u64, stream: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let d = self.dim();
        (0..n)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                self.transform_standard(&z)
            })
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        self.sample_stream(n, seed, 0)
    }
}
