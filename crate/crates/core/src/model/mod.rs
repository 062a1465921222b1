//! Inverse problems `y = G(x) + √ε η`, their potentials, and a catalog of reference problems.

mod catalog;
mod forward;
mod noise;
mod prior;

pub use catalog::{catalog, CatalogParams, CATALOG_NAMES};
pub use forward::{
    forward_derivs, FnForwardMap, ForwardDerivs, ForwardMap, LinearMap, PerturbedLinearMap, RadialBump,
    XArctanMap,
};
pub use noise::NoiseModel;
pub use prior::{GaussianPrior, Prior};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A finite-dimensional Bayesian inverse problem. Immutable once built.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub name: String,
    pub forward: Arc<dyn ForwardMap>,
    pub prior: Prior,
    pub eps: f64,
    pub data: DVector<f64>,
    pub noise: NoiseModel,
    /// Set for perturbed-linear problems so that closed-form constants can be assembled.
    pub perturbation: Option<PerturbedLinearMap>,
}

impl InverseProblem {
    pub fn new(
        name: impl Into<String>,
        forward: Arc<dyn ForwardMap>,
        prior: Prior,
        eps: f64,
        data: DVector<f64>,
        noise: NoiseModel,
    ) -> Result<Self> {
        let d = forward.dim();
        if d == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Parameter(format!("ε must be positive and finite, got {eps}")));
        }
        if prior.dim() != d {
            return Err(Error::Dimension { expected: d, got: prior.dim() });
        }
        if data.len() != d {
            return Err(Error::Dimension { expected: d, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("data must be finite".into()));
        }
        Ok(InverseProblem {
            name: name.into(),
            forward,
            prior,
            eps,
            data,
            noise,
            perturbation: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.forward.dim()
    }

    /// True when `Ĩ` is an exact quadratic: affine forward map, Gaussian noise and Gaussian or flat prior.
    pub fn is_exactly_gaussian(&self) -> bool {
        self.forward.is_linear() && self.noise == NoiseModel::Gaussian
    }

    /// `Ĩ(x)` only.
    pub fn potential_value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(potential(self, x, 0)?.value)
    }
}

/// `Ĩ(x) = Φ(x) + εR(x)` (unshifted) and its differentials up to the requested order.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEval {
    pub value: f64,
    pub grad: Option<DVector<f64>>,
    pub hess: Option<DMatrix<f64>>,
    pub third: Option<Tensor3>,
}

/// The two pieces of the potential, evaluated separately.
#[derive(Debug, Clone)]
pub struct PotentialParts {
    /// Negative log-likelihood `Φ`.
    pub likelihood: PotentialEval,
    /// Negative log prior density `R` (not multiplied by `ε`).
    pub prior: PotentialEval,
}

fn check_point(problem: &InverseProblem, x: &DVector<f64>) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::Dimension { expected: problem.dim(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::eval(x, "non-finite argument"));
    }
    Ok(())
}

/// Evaluates `Φ` and `R` with differentials up to `order` (0..=3).
pub fn potential_parts(problem: &InverseProblem, x: &DVector<f64>, order: usize) -> Result<PotentialParts> {
    if order > 3 {
        return Err(Error::Parameter(format!("potential order must be 0..=3, got {order}")));
    }
    check_point(problem, x)?;
    let d = problem.dim();
    let fd = forward_derivs(problem.forward.as_ref(), x, order)?;
    let eta = &problem.data - &fd.value;
    let nu = problem.noise.derivs(&eta, order);
    let grad = match (&fd.jacobian, &nu.grad) {
        (Some(j), Some(n1)) => Some(-(j.transpose() * n1)),
        _ => None,
    };
    let hess = match (&fd.jacobian, &fd.second, &nu.grad, &nu.hess) {
        (Some(j), Some(s), Some(n1), Some(n2)) => {
            let mut h = j.transpose() * n2 * j;
            for (k, sk) in s.iter().enumerate() {
                h -= sk * n1[k];
            }
            Some(0.5 * (&h + h.transpose()))
        }
        _ => None,
    };
    let third = if order >= 3 {
        let j = fd.jacobian.as_ref().expect("order ≥ 1");
        let s = fd.second.as_ref().expect("order ≥ 2");
        let t = fd.third.as_ref().expect("order ≥ 3");
        let n1 = nu.grad.as_ref().expect("order ≥ 1");
        let n2 = nu.hess.as_ref().expect("order ≥ 2");
        let mut out = match &nu.third {
            Some(n3) => n3.transform(j).scaled(-1.0),
            None => Tensor3::zeros(d),
        };
        // N = ν₂ J, so that Σ_kl ν₂_kl S_k(a,c) J_lb = Σ_k S_k(a,c) N_kb
        let n = n2 * j;
        for (k, sk) in s.iter().enumerate() {
            if sk.amax() == 0.0 {
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        out[(a, b, c)] += sk[(a, c)] * n[(k, b)] + sk[(b, c)] * n[(k, a)] + sk[(a, b)] * n[(k, c)];
                    }
                }
            }
        }
        for (k, tk) in t.iter().enumerate() {
            if n1[k] != 0.0 {
                out += &tk.clone().scaled(-n1[k]);
            }
        }
        Some(out.symmetrized())
    } else {
        None
    };
    let likelihood = PotentialEval {
        value: nu.value,
        grad,
        hess,
        third,
    };
    let pr = problem.prior.derivs(x, order);
    let prior = PotentialEval {
        value: pr.value,
        grad: pr.grad,
        hess: pr.hess,
        third: (order >= 3).then(|| Tensor3::zeros(d)),
    };
    for (v, what) in [(likelihood.value, "likelihood"), (prior.value, "prior")] {
        if !v.is_finite() {
            return Err(Error::eval(x, format!("{what} potential")));
        }
    }
    Ok(PotentialParts { likelihood, prior })
}

/// `Ĩ = Φ + εR` with differentials up to `order` (0..=3), assembled by the chain rule through `G`.
pub fn potential(problem: &InverseProblem, x: &DVector<f64>, order: usize) -> Result<PotentialEval> {
    let parts = potential_parts(problem, x, order)?;
    let eps = problem.eps;
    let l = parts.likelihood;
    let r = parts.prior;
    let out = PotentialEval {
        value: l.value + eps * r.value,
        grad: l.grad.zip(r.grad).map(|(a, b)| a + b * eps),
        hess: l.hess.zip(r.hess).map(|(a, b)| a + b * eps),
        third: l.third.zip(r.third).map(|(mut a, b)| {
            a += &b.scaled(eps);
            a
        }),
    };
    let finite = out.value.is_finite()
        && out.grad.as_ref().is_none_or(|g| g.iter().all(|v| v.is_finite()))
        && out.hess.as_ref().is_none_or(|h| h.iter().all(|v| v.is_finite()))
        && out.third.as_ref().is_none_or(|t| t.as_slice().iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::eval(x, "potential or its differentials"));
    }
    Ok(out)
}
