//! Central finite-difference differentials of scalar and vector fields.
//!
//! Default steps balance truncation against rounding for central stencils:
//! `h₁ = u^{1/3}·s`, `h₂ = u^{1/4}·s`, `h₃ = u^{1/5}·s` with `u` the machine
//! epsilon and `s = max(1, ‖x‖∞)`.

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use nalgebra::{DMatrix, DVector};

/// Default step for a stencil of the given derivative order (1..=3).
pub fn default_step(order: usize, x: &DVector<f64>) -> f64 {
    let u = f64::EPSILON;
    let s = x.amax().max(1.0);
    let root = match order {
        1 => u.cbrt(),
        2 => u.sqrt().sqrt(),
        _ => u.powf(0.2),
    };
    root * s
}

/// Differentials returned by [`fd_differentials`]; entries above the requested order are `None`.
#[derive(Debug, Clone)]
pub struct FdDifferentials {
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
    pub third: Option<Tensor3>,
}

fn check_step(x: &DVector<f64>, h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {h}")));
    }
    let scale = x.amax();
    if scale + h == scale {
        return Err(Error::Parameter(format!(
            "finite-difference step {h:e} underflows against |x| = {scale:e}"
        )));
    }
    Ok(())
}

fn shifted(x: &DVector<f64>, moves: &[(usize, f64)]) -> DVector<f64> {
    let mut y = x.clone();
    for &(i, dx) in moves {
        y[i] += dx;
    }
    y
}

/// Gradient by central differences with step `h`.
pub fn fd_gradient<F>(f: &F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    check_step(x, h)?;
    let d = x.len();
    let mut g = DVector::zeros(d);
    for i in 0..d {
        // Use the representable step actually taken.
        let hp = (x[i] + h) - x[i];
        let hm = x[i] - (x[i] - h);
        let fp = f(&shifted(x, &[(i, hp)]));
        let fm = f(&shifted(x, &[(i, -hm)]));
        g[i] = (fp - fm) / (hp + hm);
    }
    Ok(g)
}

/// Hessian from a product of central-difference operators; symmetric by construction.
pub fn fd_hessian<F>(f: &F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    check_step(x, h)?;
    let d = x.len();
    let mut hess = DMatrix::zeros(d, d);
    let f0 = f(x);
    for i in 0..d {
        let fp = f(&shifted(x, &[(i, h)]));
        let fm = f(&shifted(x, &[(i, -h)]));
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let fpp = f(&shifted(x, &[(i, h), (j, h)]));
            let fpm = f(&shifted(x, &[(i, h), (j, -h)]));
            let fmp = f(&shifted(x, &[(i, -h), (j, h)]));
            let fmm = f(&shifted(x, &[(i, -h), (j, -h)]));
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Third differential from the eight-point product stencil
/// `Δ_i Δ_j Δ_k f / (2h)³`, valid for repeated indices as well; symmetrised after assembly.
pub fn fd_third<F>(f: &F, x: &DVector<f64>, h: f64) -> Result<Tensor3>
where
    F: Fn(&DVector<f64>) -> f64,
{
    check_step(x, h)?;
    let d = x.len();
    let mut t = Tensor3::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            for k in 0..=j {
                let mut acc = 0.0;
                for si in [1.0, -1.0] {
                    for sj in [1.0, -1.0] {
                        for sk in [1.0, -1.0] {
                            let y = shifted(x, &[(i, si * h), (j, sj * h), (k, sk * h)]);
                            acc += si * sj * sk * f(&y);
                        }
                    }
                }
                let v = acc / (8.0 * h * h * h);
                for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                    t[(a, b, c)] = v;
                }
            }
        }
    }
    Ok(t.symmetrized())
}

/// Differentials of `f` at `x` up to `order` (1..=3). `step` overrides the
/// per-order defaults of [`default_step`] when given.
pub fn fd_differentials<F>(
    f: &F,
    x: &DVector<f64>,
    order: usize,
    step: Option<f64>,
) -> Result<FdDifferentials>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if !(1..=3).contains(&order) {
        return Err(Error::Parameter(format!("finite-difference order must be 1..=3, got {order}")));
    }
    let h = |k| step.unwrap_or_else(|| default_step(k, x));
    let grad = fd_gradient(f, x, h(1))?;
    let hess = if order >= 2 { Some(fd_hessian(f, x, h(2))?) } else { None };
    let third = if order >= 3 { Some(fd_third(f, x, h(3))?) } else { None };
    Ok(FdDifferentials { grad, hess, third })
}

/// Jacobian of a vector field by central differences (column `j` is `∂G/∂x_j`).
pub fn fd_jacobian<G>(g: &G, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_step(x, h)?;
    let d = x.len();
    let mut cols = Vec::with_capacity(d);
    for j in 0..d {
        let gp = g(&shifted(x, &[(j, h)]));
        let gm = g(&shifted(x, &[(j, -h)]));
        cols.push((gp - gm) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&cols))
}
