use crate::tensor::Tensor3;
use nalgebra::{DMatrix, DVector};

/// Noise law of `η` in `y = G(x) + √ε η`; fixes the log-likelihood `Φ(x) = ν(y − G(x))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    /// `ν(η) = ½‖η‖²`.
    Gaussian,
    /// Standard multivariate Cauchy: `ν(η) = ((d + 1)/2) ln(1 + ‖η‖²)`.
    /// The normalising constant `−ln C` is dropped; it cancels in `I`.
    Cauchy,
}

/// `ν` and its differentials at `η`. A `None` third differential means it vanishes.
#[derive(Debug, Clone)]
pub(crate) struct NoiseDerivs {
    pub value: f64,
    pub grad: Option<DVector<f64>>,
    pub hess: Option<DMatrix<f64>>,
    pub third: Option<Tensor3>,
}

impl NoiseModel {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Cauchy => "cauchy",
        }
    }

    pub(crate) fn derivs(&self, eta: &DVector<f64>, order: usize) -> NoiseDerivs {
        let d = eta.len();
        match self {
            NoiseModel::Gaussian => NoiseDerivs {
                value: 0.5 * eta.norm_squared(),
                grad: (order >= 1).then(|| eta.clone()),
                hess: (order >= 2).then(|| DMatrix::identity(d, d)),
                third: None,
            },
            NoiseModel::Cauchy => {
                // ν = g(s), s = ‖η‖², g(s) = c ln(1 + s)
                let c = (d as f64 + 1.0) / 2.0;
                let s = eta.norm_squared();
                let q = 1.0 + s;
                let g1 = c / q;
                let g2 = -c / (q * q);
                let g3 = 2.0 * c / (q * q * q);
                NoiseDerivs {
                    value: c * s.ln_1p(),
                    grad: (order >= 1).then(|| eta * (2.0 * g1)),
                    hess: (order >= 2)
                        .then(|| eta * eta.transpose() * (4.0 * g2) + DMatrix::identity(d, d) * (2.0 * g1)),
                    third: (order >= 3).then(|| {
                        Tensor3::from_fn(d, |i, j, k| {
                            let mut v = 8.0 * g3 * eta[i] * eta[j] * eta[k];
                            if i == j {
                                v += 4.0 * g2 * eta[k];
                            }
                            if i == k {
                                v += 4.0 * g2 * eta[j];
                            }
                            if j == k {
                                v += 4.0 * g2 * eta[i];
                            }
                            v
                        })
                    }),
                }
            }
        }
    }
}
