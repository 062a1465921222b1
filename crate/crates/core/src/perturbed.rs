//! Closed-form constants for `G_τ(x) = A x + τ F(x)` with Gaussian noise and prior.

use crate::bounds::{explicit_bound, AssumptionConstants, Provenance, EXPLICIT_C};
use crate::error::{Error, Result};
use crate::laplace::MapResult;
use crate::model::{ForwardMap, InverseProblem, NoiseModel, PerturbedLinearMap, Prior, RadialBump};
use crate::special::dimension_ratio;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub a: DMatrix<f64>,
    pub bump: RadialBump,
    pub tau: f64,
    pub m0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub eps: f64,
    pub y: DVector<f64>,
    /// Euclidean bounds `[C₀, C₁, C₂, C₃]` on `DʲF`.
    pub c_euclid: [f64; 4],
    /// Support radius of `D³F`.
    pub m: f64,
}

impl PerturbationSpec {
    pub fn new(map: &PerturbedLinearMap, m0: DVector<f64>, sigma0: DMatrix<f64>, eps: f64, y: DVector<f64>) -> Self {
        PerturbationSpec {
            a: map.a.clone(),
            bump: map.bump.clone(),
            tau: map.tau,
            m0,
            sigma0,
            eps,
            y,
            c_euclid: map.bump.euclidean_bounds(),
            m: map.bump.radius,
        }
    }

    /// Extracts the structure from a perturbed-linear problem with Gaussian noise and prior.
    pub fn from_problem(problem: &InverseProblem) -> Result<Self> {
        let map = problem
            .perturbation
            .as_ref()
            .ok_or_else(|| Error::Unsupported("problem is not perturbed-linear".into()))?;
        if problem.noise != NoiseModel::Gaussian {
            return Err(Error::Unsupported("perturbed-linear constants need Gaussian noise".into()));
        }
        let Prior::Gaussian(g) = &problem.prior else {
            return Err(Error::Unsupported("perturbed-linear constants need a Gaussian prior".into()));
        };
        Ok(Self::new(map, g.mean.clone(), g.cov.clone(), problem.eps, problem.data.clone()))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn forward(&self) -> PerturbedLinearMap {
        PerturbedLinearMap {
            a: self.a.clone(),
            tau: self.tau,
            bump: self.bump.clone(),
        }
    }

    /// `Cⱼ` in the `Σ_τ` sense: `Cⱼ^euclid · ‖Σ_τ^{1/2}‖ʲ`.
    pub fn c_sigma(&self, map: &MapResult) -> [f64; 4] {
        let s = map.sigma_sqrt_norm();
        let c = self.c_euclid;
        [c[0], c[1] * s, c[2] * s * s, c[3] * s * s * s]
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// `(γ₁, γ₂)` with `γ₁ = 1/‖Σ_τ^{−1/2} B^{−1/2}‖² − C₁²τ²`, `B = AᵀA + εΣ₀⁻¹`, and `γ₂ = C₂τ`.
pub fn gamma_pair(spec: &PerturbationSpec, map: &MapResult) -> Result<(f64, f64)> {
    let c = spec.c_sigma(map);
    let prec0 = spec
        .sigma0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Parameter("Σ₀ must be positive definite".into()))?
        .inverse();
    let b = spec.a.transpose() * &spec.a + prec0 * spec.eps;
    let lb = b
        .cholesky()
        .ok_or_else(|| Error::Parameter("AᵀA + εΣ₀⁻¹ must be positive definite".into()))?
        .l();
    // ‖Σ^{−1/2}B^{−1/2}‖² = λ_max(B^{−1/2} H B^{−1/2}) = λ_max(L_B⁻¹ H L_B⁻ᵀ)
    let x = lb
        .solve_lower_triangular(&map.hess)
        .ok_or_else(|| Error::Contract("singular factor".into()))?;
    let m = lb
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Contract("singular factor".into()))?;
    let m = 0.5 * (&m + m.transpose());
    let lmax = m.symmetric_eigen().eigenvalues.max();
    let gamma1 = 1.0 / lmax - c[1] * c[1] * spec.tau * spec.tau;
    Ok((gamma1, c[2] * spec.tau))
}

/// `δ_τ = γ₁ − γ₂ |G_τ(x̂_τ) − y_τ|`, unclamped.
pub fn delta_tau(spec: &PerturbationSpec, map: &MapResult) -> Result<f64> {
    let (g1, g2) = gamma_pair(spec, map)?;
    let resid = (spec.forward().value(&map.x_hat) - &spec.y).norm();
    Ok(g1 - g2 * resid)
}

/// `(V(τ), W)` with `V(τ) = C₃(‖A‖M + |y_τ|) + 3C₂‖AΣ_τ^{1/2}‖` and `W = C₃C₀ + 3C₂C₁`.
pub fn v_and_w(spec: &PerturbationSpec, map: &MapResult) -> (f64, f64) {
    let c = spec.c_sigma(map);
    let a_sigma = spectral_norm(&(&spec.a * &map.sigma * spec.a.transpose())).sqrt();
    let v = c[3] * (spectral_norm(&spec.a) * spec.m + spec.y.norm()) + 3.0 * c[2] * a_sigma;
    let w = c[3] * c[0] + 3.0 * c[2] * c[1];
    (v, w)
}

/// `K_τ = τ V(τ) + (τ²/2) W`.
pub fn k_tau(spec: &PerturbationSpec, map: &MapResult) -> f64 {
    let (v, w) = v_and_w(spec, map);
    spec.tau * v + 0.5 * spec.tau * spec.tau * w
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeBound {
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta_tau: f64,
    pub k_tau: f64,
    pub v_tau: f64,
    pub w: f64,
    /// `(2/3)√2 e Γ(d/2+3/2)/Γ(d/2) · (1+ε)√ε (V(τ)τ + (W/2)τ²)`.
    pub bound: f64,
    /// `δ_τ > 0` and the explicit-bound condition holds with `(K_τ, min(δ_τ, 1))`.
    pub valid: bool,
    pub c_sigma: [f64; 4],
}

pub fn perturbative_bound(spec: &PerturbationSpec, map: &MapResult) -> Result<PerturbativeBound> {
    let d = spec.dim();
    let (gamma1, gamma2) = gamma_pair(spec, map)?;
    let resid = (spec.forward().value(&map.x_hat) - &spec.y).norm();
    let delta = gamma1 - gamma2 * resid;
    let (v, w) = v_and_w(spec, map);
    let tau = spec.tau;
    let k = tau * v + 0.5 * tau * tau * w;
    let c = 2.0 * EXPLICIT_C * dimension_ratio(d);
    let bound = c * (1.0 + spec.eps) * spec.eps.sqrt() * (v * tau + 0.5 * w * tau * tau);
    let valid = delta > 0.0 && {
        let consts = AssumptionConstants::new(k, delta.min(1.0), Provenance::Analytic, "")?;
        explicit_bound(&consts, spec.eps, d)?.condition_ok
    };
    Ok(PerturbativeBound {
        gamma1,
        gamma2,
        delta_tau: delta,
        k_tau: k,
        v_tau: v,
        w,
        bound,
        valid,
        c_sigma: spec.c_sigma(map),
    })
}
