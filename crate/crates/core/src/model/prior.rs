use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Gaussian prior `N(m₀, Σ₀)`.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    /// `(d/2) ln 2π + ½ ln det Σ₀`
    log_norm: f64,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Dimension { expected: d, got: cov.nrows() });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::Parameter("prior covariance must be symmetric".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Parameter("prior covariance must be positive definite".into()))?;
        let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = chol.inverse();
        let precision = 0.5 * (&precision + precision.transpose());
        Ok(GaussianPrior {
            mean,
            cov,
            precision,
            log_norm: 0.5 * d as f64 * (2.0 * PI).ln() + 0.5 * ln_det,
        })
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

/// The prior, through its negative log density `R`.
#[derive(Debug, Clone)]
pub enum Prior {
    Gaussian(GaussianPrior),
    /// Improper flat prior, `R ≡ 0`.
    Flat { dim: usize },
}

/// `R` and its differentials; the third differential of both variants is zero.
#[derive(Debug, Clone)]
pub(crate) struct PriorDerivs {
    pub value: f64,
    pub grad: Option<DVector<f64>>,
    pub hess: Option<DMatrix<f64>>,
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Gaussian(g) => g.mean.len(),
            Prior::Flat { dim } => *dim,
        }
    }

    pub fn gaussian_params(&self) -> Option<(&DVector<f64>, &DMatrix<f64>)> {
        match self {
            Prior::Gaussian(g) => Some((&g.mean, &g.cov)),
            Prior::Flat { .. } => None,
        }
    }

    /// Negative log density `R(x)`.
    pub fn neg_log_density(&self, x: &DVector<f64>) -> f64 {
        self.derivs(x, 0).value
    }

    pub(crate) fn derivs(&self, x: &DVector<f64>, order: usize) -> PriorDerivs {
        match self {
            Prior::Gaussian(g) => {
                let r = x - &g.mean;
                let pr = &g.precision * &r;
                PriorDerivs {
                    value: 0.5 * r.dot(&pr) + g.log_norm,
                    grad: (order >= 1).then_some(pr),
                    hess: (order >= 2).then(|| g.precision.clone()),
                }
            }
            Prior::Flat { dim } => PriorDerivs {
                value: 0.0,
                grad: (order >= 1).then(|| DVector::zeros(*dim)),
                hess: (order >= 2).then(|| DMatrix::zeros(*dim, *dim)),
            },
        }
    }
}
