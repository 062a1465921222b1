//! Reference problems, built from string key-value parameters.
//!
//! Common keys: `d` (dimension), `eps`, `y` (data), `a` (forward matrix),
//! `m0`, `sigma0` (Gaussian prior). Vectors are comma lists or a single
//! scalar broadcast to all entries; matrices are a scalar `s` (meaning `s·I`)
//! or rows separated by `;`.

use super::forward::{LinearMap, PerturbedLinearMap, RadialBump, XArctanMap};
use super::{GaussianPrior, InverseProblem, NoiseModel, Prior};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::sync::Arc;

pub type CatalogParams = BTreeMap<String, String>;

pub const CATALOG_NAMES: [&str; 4] = [
    "linear_gaussian",
    "perturbed_linear",
    "scalar_bimodal_demo",
    "cauchy_noise_linear",
];

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("linear_gaussian", &["d", "eps", "y", "a", "m0", "sigma0"]),
    ("perturbed_linear", &["d", "eps", "y", "a", "m0", "sigma0", "tau", "b", "m"]),
    ("scalar_bimodal_demo", &["eps", "y", "m0", "sigma0", "scale"]),
    ("cauchy_noise_linear", &["d", "eps", "y", "a", "prior_precision"]),
];

struct Reader<'a> {
    params: &'a CatalogParams,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(|s| s.trim())
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => parse_f64(key, s),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => {
                // Sweeps may hand over integral values written as floats.
                let v = parse_f64(key, s)?;
                if v < 1.0 || v.fract() != 0.0 || v > 1e6 {
                    return Err(Error::Parameter(format!("`{key}` must be a positive integer, got {s}")));
                }
                Ok(v as usize)
            }
        }
    }

    fn vector(&self, key: &str, d: usize, default: f64) -> Result<DVector<f64>> {
        match self.raw(key) {
            None => Ok(DVector::from_element(d, default)),
            Some(s) => parse_vector(key, s, d),
        }
    }

    fn matrix(&self, key: &str, d: usize, default: f64) -> Result<DMatrix<f64>> {
        match self.raw(key) {
            None => Ok(DMatrix::identity(d, d) * default),
            Some(s) => parse_matrix(key, s, d),
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Parameter(format!("`{key}`: cannot parse `{s}` as a number")))?;
    if !v.is_finite() {
        return Err(Error::Parameter(format!("`{key}` must be finite")));
    }
    Ok(v)
}

fn parse_vector(key: &str, s: &str, d: usize) -> Result<DVector<f64>> {
    let items: Vec<f64> = s
        .split(',')
        .map(|t| parse_f64(key, t.trim()))
        .collect::<Result<_>>()?;
    match items.len() {
        1 => Ok(DVector::from_element(d, items[0])),
        n if n == d => Ok(DVector::from_vec(items)),
        n => Err(Error::Parameter(format!("`{key}` has {n} entries, expected 1 or {d}"))),
    }
}

fn parse_matrix(key: &str, s: &str, d: usize) -> Result<DMatrix<f64>> {
    if !s.contains(';') && !s.contains(',') {
        return Ok(DMatrix::identity(d, d) * parse_f64(key, s)?);
    }
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| r.split(',').map(|t| parse_f64(key, t.trim())).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Parameter(format!("`{key}` must be a {d}×{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn gaussian_prior(r: &Reader<'_>, d: usize) -> Result<Prior> {
    let m0 = r.vector("m0", d, 0.0)?;
    let cov = r.matrix("sigma0", d, 1.0)?;
    Ok(Prior::Gaussian(GaussianPrior::new(m0, cov)?))
}

/// Builds a named reference problem.
///
/// * `linear_gaussian`: `G = A x`, Gaussian noise and prior.
/// * `perturbed_linear`: `G = A x + τ b h(‖x‖²/M²)` with the saturating bump of
///   [`RadialBump`]; keys `tau` (0.1), `b` (1), `m` (2).
/// * `scalar_bimodal_demo`: one-dimensional `G(x) = x arctan x`; the even
///   forward map makes the likelihood bimodal and the prior mean `m0` (0.3)
///   breaks the tie.
/// * `cauchy_noise_linear`: `G = A x` with multivariate Cauchy noise. The prior
///   is flat unless `prior_precision` > 0, in which case it is `N(0, I/prior_precision)`.
pub fn catalog(name: &str, params: &CatalogParams) -> Result<InverseProblem> {
    let known = KNOWN_KEYS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))?;
    if let Some(k) = params.keys().find(|k| !known.1.contains(&k.as_str())) {
        return Err(Error::Parameter(format!("unknown parameter `{k}` for `{name}`")));
    }
    let r = Reader { params };
    match name {
        "linear_gaussian" => {
            let d = r.usize("d", 1)?;
            let a = r.matrix("a", d, 1.0)?;
            InverseProblem::new(
                name,
                Arc::new(LinearMap::new(a)?),
                gaussian_prior(&r, d)?,
                r.f64("eps", 1.0)?,
                r.vector("y", d, 1.0)?,
                NoiseModel::Gaussian,
            )
        }
        "perturbed_linear" => {
            let d = r.usize("d", 1)?;
            let a = r.matrix("a", d, 1.0)?;
            let bump = RadialBump::new(r.vector("b", d, 1.0)?, r.f64("m", 2.0)?)?;
            let map = PerturbedLinearMap::new(a, r.f64("tau", 0.1)?, bump)?;
            let mut p = InverseProblem::new(
                name,
                Arc::new(map.clone()),
                gaussian_prior(&r, d)?,
                r.f64("eps", 0.5)?,
                r.vector("y", d, 1.0)?,
                NoiseModel::Gaussian,
            )?;
            p.perturbation = Some(map);
            Ok(p)
        }
        "scalar_bimodal_demo" => {
            let m0 = r.f64("m0", 0.3)?;
            let s0 = r.f64("sigma0", 1.0)?;
            let prior = GaussianPrior::new(DVector::from_element(1, m0), DMatrix::from_element(1, 1, s0))?;
            InverseProblem::new(
                name,
                Arc::new(XArctanMap { scale: r.f64("scale", 1.0)? }),
                Prior::Gaussian(prior),
                r.f64("eps", 0.1)?,
                DVector::from_element(1, r.f64("y", 1.0)?),
                NoiseModel::Gaussian,
            )
        }
        "cauchy_noise_linear" => {
            let d = r.usize("d", 1)?;
            let a = r.matrix("a", d, 1.0)?;
            let prec = r.f64("prior_precision", 0.0)?;
            let prior = if prec > 0.0 {
                Prior::Gaussian(GaussianPrior::new(DVector::zeros(d), DMatrix::identity(d, d) / prec)?)
            } else if prec == 0.0 {
                Prior::Flat { dim: d }
            } else {
                return Err(Error::Parameter("`prior_precision` must be ≥ 0".into()));
            };
            InverseProblem::new(
                name,
                Arc::new(LinearMap::new(a)?),
                prior,
                r.f64("eps", 1.0)?,
                r.vector("y", d, 1.0)?,
                NoiseModel::Cauchy,
            )
        }
        _ => unreachable!("name checked against KNOWN_KEYS"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> CatalogParams {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn unknown_name_and_key() {
        assert!(matches!(catalog("nope", &CatalogParams::new()), Err(Error::UnknownProblem(_))));
        assert!(matches!(
            catalog("linear_gaussian", &params(&[("tau", "1")])),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn bad_values_rejected() {
        for (k, v) in [("d", "0"), ("d", "1.5"), ("eps", "-1"), ("eps", "abc"), ("y", "1,2,3"), ("sigma0", "-1")] {
            assert!(catalog("linear_gaussian", &params(&[(k, v)])).is_err(), "{k} = {v}");
        }
    }

    #[test]
    fn matrix_syntax() {
        let p = catalog("linear_gaussian", &params(&[("d", "2"), ("a", "1,2;3,4")])).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(p.forward.value(&x), DVector::from_vec(vec![3.0, 7.0]));
        let p = catalog("linear_gaussian", &params(&[("d", "3"), ("a", "2")])).unwrap();
        assert_eq!(p.forward.value(&DVector::from_element(3, 1.0)), DVector::from_element(3, 2.0));
    }

    #[test]
    fn perturbed_carries_spec() {
        let p = catalog("perturbed_linear", &params(&[("tau", "0.25"), ("m", "3")])).unwrap();
        let spec = p.perturbation.unwrap();
        assert_eq!(spec.tau, 0.25);
        assert_eq!(spec.bump.radius, 3.0);
    }

    #[test]
    fn cauchy_prior_switch() {
        let flat = catalog("cauchy_noise_linear", &CatalogParams::new()).unwrap();
        assert!(matches!(flat.prior, Prior::Flat { .. }));
        let g = catalog("cauchy_noise_linear", &params(&[("prior_precision", "2")])).unwrap();
        assert!(g.prior.gaussian_params().is_some());
    }
}
