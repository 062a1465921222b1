//! Forward maps `G: R^d → R^d` and their differentials.

use crate::error::{Error, Result};
use crate::fd::{default_step, fd_hessian, fd_jacobian, fd_third};
use crate::tensor::Tensor3;
use nalgebra::{DMatrix, DVector};
use std::fmt;

/// A square forward map with optional analytic differentials.
///
/// `second_diff` returns one `d × d` matrix per output component and
/// `third_diff` one `d × d × d` tensor per output component. Missing
/// differentials are filled by finite differences in [`forward_derivs`].
pub trait ForwardMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Number of leading differentials available in closed form (0..=3).
    fn differentiability_order(&self) -> usize {
        0
    }

    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn second_diff(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    fn third_diff(&self, _x: &DVector<f64>) -> Option<Vec<Tensor3>> {
        None
    }

    /// True when `G` is affine, so that all second and third differentials vanish.
    fn is_linear(&self) -> bool {
        false
    }
}

/// Value and differentials of a forward map at one point.
#[derive(Debug, Clone)]
pub struct ForwardDerivs {
    pub value: DVector<f64>,
    pub jacobian: Option<DMatrix<f64>>,
    /// Empty for affine maps, where every component differential vanishes.
    pub second: Option<Vec<DMatrix<f64>>>,
    /// Empty for affine maps.
    pub third: Option<Vec<Tensor3>>,
}

/// Evaluates `G` and its differentials up to `order`, preferring analytic
/// forms and differencing the highest available analytic differential otherwise.
pub fn forward_derivs(map: &dyn ForwardMap, x: &DVector<f64>, order: usize) -> Result<ForwardDerivs> {
    let d = map.dim();
    if x.len() != d {
        return Err(Error::Dimension { expected: d, got: x.len() });
    }
    let value = map.value(x);
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::eval(x, "forward map value"));
    }
    let analytic = map.differentiability_order();
    let jacobian = if order >= 1 {
        Some(match map.jacobian(x) {
            Some(j) if analytic >= 1 => j,
            _ => fd_jacobian(&|z: &DVector<f64>| map.value(z), x, default_step(1, x))?,
        })
    } else {
        None
    };
    let linear = map.is_linear();
    let second = if order >= 2 && linear {
        Some(Vec::new())
    } else if order >= 2 {
        Some(match map.second_diff(x) {
            Some(s) if analytic >= 2 => s,
            _ => fd_second(map, x, analytic)?,
        })
    } else {
        None
    };
    let third = if order >= 3 && linear {
        Some(Vec::new())
    } else if order >= 3 {
        Some(match map.third_diff(x) {
            Some(t) if analytic >= 3 => t,
            _ => fd_third_of(map, x, analytic)?,
        })
    } else {
        None
    };
    Ok(ForwardDerivs {
        value,
        jacobian,
        second,
        third,
    })
}

fn fd_second(map: &dyn ForwardMap, x: &DVector<f64>, analytic: usize) -> Result<Vec<DMatrix<f64>>> {
    let d = map.dim();
    if analytic >= 1 {
        // ∂J_{k,a}/∂x_b by a first difference of the analytic Jacobian.
        let h = default_step(1, x);
        let mut out = vec![DMatrix::zeros(d, d); d];
        for b in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[b] += h;
            xm[b] -= h;
            let jp = map.jacobian(&xp).expect("analytic jacobian");
            let jm = map.jacobian(&xm).expect("analytic jacobian");
            for (k, s) in out.iter_mut().enumerate() {
                for a in 0..d {
                    s[(a, b)] = (jp[(k, a)] - jm[(k, a)]) / (2.0 * h);
                }
            }
        }
        return Ok(out.into_iter().map(|s| 0.5 * (&s + s.transpose())).collect());
    }
    let h = default_step(2, x);
    (0..d)
        .map(|k| fd_hessian(&|z: &DVector<f64>| map.value(z)[k], x, h))
        .collect()
}

fn fd_third_of(map: &dyn ForwardMap, x: &DVector<f64>, analytic: usize) -> Result<Vec<Tensor3>> {
    let d = map.dim();
    if analytic >= 2 {
        let h = default_step(1, x);
        let mut out = vec![Tensor3::zeros(d); d];
        for c in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let sp = map.second_diff(&xp).expect("analytic second differential");
            let sm = map.second_diff(&xm).expect("analytic second differential");
            for (k, t) in out.iter_mut().enumerate() {
                for a in 0..d {
                    for b in 0..d {
                        t[(a, b, c)] = (sp[k][(a, b)] - sm[k][(a, b)]) / (2.0 * h);
                    }
                }
            }
        }
        return Ok(out.into_iter().map(|t| t.symmetrized()).collect());
    }
    if analytic >= 1 {
        // Second differences of the analytic Jacobian entries.
        let h = default_step(2, x);
        let mut out = vec![Tensor3::zeros(d); d];
        for k in 0..d {
            for a in 0..d {
                let entry = |z: &DVector<f64>| map.jacobian(z).expect("analytic jacobian")[(k, a)];
                let hess = fd_hessian(&entry, x, h)?;
                for b in 0..d {
                    for c in 0..d {
                        out[k][(a, b, c)] = hess[(b, c)];
                    }
                }
            }
        }
        return Ok(out.into_iter().map(|t| t.symmetrized()).collect());
    }
    let h = default_step(3, x);
    (0..d)
        .map(|k| fd_third(&|z: &DVector<f64>| map.value(z)[k], x, h))
        .collect()
}

/// `G(x) = A x`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub a: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Parameter("forward matrix must be square".into()));
        }
        Ok(LinearMap { a })
    }
}

impl ForwardMap for LinearMap {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }
    fn differentiability_order(&self) -> usize {
        3
    }
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
    fn second_diff(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let d = self.dim();
        Some(vec![DMatrix::zeros(d, d); d])
    }
    fn third_diff(&self, _x: &DVector<f64>) -> Option<Vec<Tensor3>> {
        let d = self.dim();
        Some(vec![Tensor3::zeros(d); d])
    }
    fn is_linear(&self) -> bool {
        true
    }
}

/// Saturating bump `F(x) = b · h(‖x‖²/M²)` with
/// `h(s) = (1 − (1 − s)⁴)/4` on `[0, 1]` and `h ≡ 1/4` beyond.
///
/// `h` is C³ at `s = 1` (its first three derivatives vanish there), so
/// `D³F ≡ 0` outside the Euclidean ball of radius `M`, and every differential
/// is bounded with the closed-form constants of [`RadialBump::euclidean_bounds`].
#[derive(Debug, Clone)]
pub struct RadialBump {
    pub b: DVector<f64>,
    pub radius: f64,
}

/// `h` and its first three derivatives at `s ≥ 0`.
fn bump_profile(s: f64) -> [f64; 4] {
    if s >= 1.0 {
        return [0.25, 0.0, 0.0, 0.0];
    }
    let w = 1.0 - s;
    let w2 = w * w;
    [0.25 * (1.0 - w2 * w2), w2 * w, -3.0 * w2, 6.0 * w]
}

impl RadialBump {
    pub fn new(b: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("bump radius M must be positive, got {radius}")));
        }
        Ok(RadialBump { b, radius })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn s(&self, x: &DVector<f64>) -> f64 {
        x.norm_squared() / (self.radius * self.radius)
    }

    /// Scalar profile `φ(x) = h(‖x‖²/M²)`.
    pub fn phi(&self, x: &DVector<f64>) -> f64 {
        bump_profile(self.s(x))[0]
    }

    pub fn phi_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let [_, h1, _, _] = bump_profile(self.s(x));
        x * (2.0 * h1 / (self.radius * self.radius))
    }

    pub fn phi_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let [_, h1, h2, _] = bump_profile(self.s(x));
        let m2 = self.radius * self.radius;
        let d = x.len();
        x * x.transpose() * (4.0 * h2 / (m2 * m2)) + DMatrix::identity(d, d) * (2.0 * h1 / m2)
    }

    pub fn phi_third(&self, x: &DVector<f64>) -> Tensor3 {
        let [_, _, h2, h3] = bump_profile(self.s(x));
        let m2 = self.radius * self.radius;
        let c3 = 8.0 * h3 / (m2 * m2 * m2);
        let c2 = 4.0 * h2 / (m2 * m2);
        Tensor3::from_fn(x.len(), |a, b, c| {
            let mut v = c3 * x[a] * x[b] * x[c];
            if a == b {
                v += c2 * x[c];
            }
            if a == c {
                v += c2 * x[b];
            }
            if b == c {
                v += c2 * x[a];
            }
            v
        })
    }

    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b * self.phi(x)
    }

    /// Uniform Euclidean operator-norm bounds `[C₀, C₁, C₂, C₃]` on `‖DʲF(x)‖`.
    pub fn euclidean_bounds(&self) -> [f64; 4] {
        let nb = self.b.norm();
        let m = self.radius;
        // sup_t 2t(1−t²)³ at t² = 1/7
        let t1 = (1.0_f64 / 7.0).sqrt();
        let c1 = 2.0 * t1 * (1.0 - t1 * t1).powi(3);
        // sup_s (1−s)²(2 + 10s) at s = 1/5
        let c2 = 64.0 / 25.0;
        // sup_t 36t − 24t³ − 12t⁵ at t² = (√96 − 6)/10
        let w: f64 = (96f64.sqrt() - 6.0) / 10.0;
        let t3 = w.sqrt();
        let c3 = 36.0 * t3 - 24.0 * t3.powi(3) - 12.0 * t3.powi(5);
        [nb * 0.25, nb * c1 / m, nb * c2 / (m * m), nb * c3 / (m * m * m)]
    }
}

/// `G_τ(x) = A x + τ F(x)` with the saturating bump `F`.
#[derive(Debug, Clone)]
pub struct PerturbedLinearMap {
    pub a: DMatrix<f64>,
    pub tau: f64,
    pub bump: RadialBump,
}

impl PerturbedLinearMap {
    pub fn new(a: DMatrix<f64>, tau: f64, bump: RadialBump) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != bump.dim() {
            return Err(Error::Parameter("perturbed map: A must be d×d and b ∈ R^d".into()));
        }
        if !(tau >= 0.0) {
            return Err(Error::Parameter(format!("τ must be ≥ 0, got {tau}")));
        }
        Ok(PerturbedLinearMap { a, tau, bump })
    }
}

impl ForwardMap for PerturbedLinearMap {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + self.bump.value(x) * self.tau
    }
    fn differentiability_order(&self) -> usize {
        3
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let g = self.bump.phi_grad(x);
        Some(&self.a + &self.bump.b * g.transpose() * self.tau)
    }
    fn second_diff(&self, x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let h = self.bump.phi_hess(x);
        Some(self.bump.b.iter().map(|bk| &h * (self.tau * bk)).collect())
    }
    fn third_diff(&self, x: &DVector<f64>) -> Option<Vec<Tensor3>> {
        let t = self.bump.phi_third(x);
        Some(self.bump.b.iter().map(|bk| t.clone().scaled(self.tau * bk)).collect())
    }
    fn is_linear(&self) -> bool {
        self.tau == 0.0
    }
}

/// Scalar map `g(x) = s · x · arctan(x)`: even, so data `y > 0` yields two
/// posterior modes of which the prior picks the global one.
#[derive(Debug, Clone)]
pub struct XArctanMap {
    pub scale: f64,
}

impl ForwardMap for XArctanMap {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.scale * x[0] * x[0].atan())
    }
    fn differentiability_order(&self) -> usize {
        3
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let t = x[0];
        Some(DMatrix::from_element(1, 1, self.scale * (t.atan() + t / (1.0 + t * t))))
    }
    fn second_diff(&self, x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let q = 1.0 + x[0] * x[0];
        Some(vec![DMatrix::from_element(1, 1, self.scale * 2.0 / (q * q))])
    }
    fn third_diff(&self, x: &DVector<f64>) -> Option<Vec<Tensor3>> {
        let q = 1.0 + x[0] * x[0];
        let mut t = Tensor3::zeros(1);
        t[(0, 0, 0)] = -self.scale * 8.0 * x[0] / (q * q * q);
        Some(vec![t])
    }
}

/// A forward map given only by its values; every differential is approximated
/// by finite differences.
pub struct FnForwardMap<F> {
    dim: usize,
    f: F,
}

impl<F> FnForwardMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnForwardMap { dim, f }
    }
}

impl<F> fmt::Debug for FnForwardMap<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnForwardMap").field("dim", &self.dim).finish()
    }
}

impl<F> ForwardMap for FnForwardMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor3;

    /// Exposes only the first `order` analytic differentials of the wrapped map.
    #[derive(Debug)]
    struct Truncated<M: ForwardMap>(M, usize);

    impl<M: ForwardMap> ForwardMap for Truncated<M> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn value(&self, x: &DVector<f64>) -> DVector<f64> {
            self.0.value(x)
        }
        fn differentiability_order(&self) -> usize {
            self.1
        }
        fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
            (self.1 >= 1).then(|| self.0.jacobian(x)).flatten()
        }
        fn second_diff(&self, x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
            (self.1 >= 2).then(|| self.0.second_diff(x)).flatten()
        }
    }

    fn perturbed_2d() -> PerturbedLinearMap {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
        let bump = RadialBump::new(DVector::from_vec(vec![1.0, -0.5]), 2.0).unwrap();
        PerturbedLinearMap::new(a, 0.7, bump).unwrap()
    }

    fn rel_err_mats(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
        let scale = b.iter().map(|m| m.amax()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max) / scale
    }

    fn rel_err_tensors(a: &[Tensor3], b: &[Tensor3]) -> f64 {
        let scale = b.iter().map(|t| t.max_abs()).fold(0.0, f64::max).max(1e-300);
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                x.as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn fd_fallback_agrees_with_analytic() {
        let x = DVector::from_vec(vec![0.6, -0.9]);
        let full = forward_derivs(&perturbed_2d(), &x, 3).unwrap();
        for order in 0..=2 {
            let partial = forward_derivs(&Truncated(perturbed_2d(), order), &x, 3).unwrap();
            let j_err = (partial.jacobian.as_ref().unwrap() - full.jacobian.as_ref().unwrap()).amax()
                / full.jacobian.as_ref().unwrap().amax();
            assert!(j_err < 1e-4, "order {order}: jacobian rel err {j_err}");
            let s_err = rel_err_mats(partial.second.as_ref().unwrap(), full.second.as_ref().unwrap());
            assert!(s_err < 1e-4, "order {order}: second rel err {s_err}");
            let t_err = rel_err_tensors(partial.third.as_ref().unwrap(), full.third.as_ref().unwrap());
            assert!(t_err < 1e-4, "order {order}: third rel err {t_err}");
        }
    }

    #[test]
    fn analytic_differentials_are_symmetric() {
        let x = DVector::from_vec(vec![0.4, 1.1]);
        let fd = forward_derivs(&perturbed_2d(), &x, 3).unwrap();
        for s in fd.second.unwrap() {
            assert!((&s - s.transpose()).amax() <= 1e-12);
        }
        for t in fd.third.unwrap() {
            assert!(t.max_asymmetry() <= 1e-12);
        }
    }

    #[test]
    fn bump_third_vanishes_outside_radius() {
        let map = perturbed_2d();
        let x = DVector::from_vec(vec![1.5, 1.4]); // ‖x‖ > 2
        assert!(x.norm() > 2.0);
        for t in map.third_diff(&x).unwrap() {
            assert_eq!(t.max_abs(), 0.0);
        }
    }

    #[test]
    fn bump_profile_is_c3_at_one() {
        let below = bump_profile(1.0 - 1e-9);
        let above = bump_profile(1.0);
        for k in 0..4 {
            assert!((below[k] - above[k]).abs() < 1e-8, "derivative {k}");
        }
    }

    #[test]
    fn zero_tau_is_linear() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        let bump = RadialBump::new(DVector::from_vec(vec![1.0, 1.0]), 1.5).unwrap();
        let map = PerturbedLinearMap::new(a.clone(), 0.0, bump).unwrap();
        let lin = LinearMap::new(a).unwrap();
        for x in [[0.1, 0.2], [-3.0, 0.5], [1.0, 1.0]] {
            let x = DVector::from_row_slice(&x);
            assert_eq!(map.value(&x), lin.value(&x));
        }
        assert!(map.is_linear());
    }

    #[test]
    fn xarctan_derivatives() {
        let map = XArctanMap { scale: 1.0 };
        let x = DVector::from_element(1, 0.3);
        let a = forward_derivs(&map, &x, 3).unwrap();
        let f = forward_derivs(&FnForwardMap::new(1, |z: &DVector<f64>| map.value(z)), &x, 3).unwrap();
        assert!((a.jacobian.unwrap()[(0, 0)] - f.jacobian.unwrap()[(0, 0)]).abs() < 1e-7);
        assert!((a.second.unwrap()[0][(0, 0)] - f.second.unwrap()[0][(0, 0)]).abs() < 1e-5);
        let ta = a.third.unwrap()[0][(0, 0, 0)];
        let tf = f.third.unwrap()[0][(0, 0, 0)];
        assert!((ta - tf).abs() < 1e-4 * ta.abs().max(1.0), "{ta} vs {tf}");
    }
}
