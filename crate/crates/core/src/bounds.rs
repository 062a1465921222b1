//! Total-variation error bounds for the Laplace approximation.
//!
//! The split bound is `E₁(r₀) + E₂(r₀)` with
//! `E₁(r₀) = c_d ε^{−d/2} ∫₀^{r₀} f(r) r^{d−1} dr`,
//! `f(r) = (exp((1+ε)K r³/6ε) − 1) exp(−r²/2ε)` and
//! `E₂(r₀) = δ^{−d/2} (1 − Ξ_d(δ r₀²/ε))`.
//! Note `E₂(0) = δ^{−d/2}`.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::special::{dimension_ratio, ln_c_d, ln_gamma, ln_upper_gamma_reg};
use std::fmt;

/// `C = √2·e/3`.
pub const EXPLICIT_C: f64 = std::f64::consts::SQRT_2 * std::f64::consts::E / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Estimated,
    User,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Analytic => "analytic",
            Provenance::Estimated => "estimated",
            Provenance::User => "user",
        })
    }
}

/// Third-differential bound `K` and quadratic-growth factor `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionConstants {
    pub k: f64,
    pub delta: f64,
    pub provenance: Provenance,
    pub details: String,
}

impl AssumptionConstants {
    pub fn new(k: f64, delta: f64, provenance: Provenance, details: impl Into<String>) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::Parameter(format!("K must be finite and ≥ 0, got {k}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Parameter(format!("δ must lie in (0, 1], got {delta}")));
        }
        Ok(AssumptionConstants {
            k,
            delta,
            provenance,
            details: details.into(),
        })
    }
}

fn check_eps_d(eps: f64, d: usize) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Parameter(format!("ε must be positive, got {eps}")));
    }
    if d == 0 {
        return Err(Error::Parameter("d must be ≥ 1".into()));
    }
    Ok(())
}

/// `ln f(r)`; `−∞` where `f` vanishes.
fn ln_f(r: f64, k: f64, eps: f64) -> f64 {
    let a = (1.0 + eps) * k / (6.0 * eps);
    let u = a * r * r * r;
    if u == 0.0 {
        return f64::NEG_INFINITY;
    }
    let ln_em1 = if u < 1.0 { u.exp_m1().ln() } else { u + (-(-u).exp()).ln_1p() };
    ln_em1 - r * r / (2.0 * eps)
}

/// `f(r) = expm1((1+ε)K r³/6ε) · exp(−r²/2ε)`; `+∞` on overflow.
pub fn f_integrand(r: f64, k: f64, eps: f64) -> f64 {
    if r <= 0.0 || k == 0.0 {
        return 0.0;
    }
    ln_f(r, k, eps).exp()
}

fn check_r0(r0: f64) -> Result<()> {
    if !(r0 >= 0.0) || !r0.is_finite() {
        return Err(Error::Parameter(format!("r₀ must be finite and ≥ 0, got {r0}")));
    }
    Ok(())
}

/// `E₁(r₀)` and its quadrature error estimate.
pub fn e1(r0: f64, k: f64, eps: f64, d: usize) -> Result<(f64, f64)> {
    check_r0(r0)?;
    check_eps_d(eps, d)?;
    if !(k >= 0.0) {
        return Err(Error::Parameter(format!("K must be ≥ 0, got {k}")));
    }
    if r0 == 0.0 || k == 0.0 {
        return Ok((0.0, 0.0));
    }
    let ln_pref = ln_c_d(d)? - 0.5 * d as f64 * eps.ln();
    let dm1 = d as f64 - 1.0;
    let integrand = |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        (ln_pref + dm1 * r.ln() + ln_f(r, k, eps)).exp()
    };
    let opts = QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-12,
        max_subdivisions: 4000,
    };
    let res = integrate(integrand, 0.0, r0, &opts);
    let (value, err) = res.scalar();
    if !value.is_finite() {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    if !res.converged && err > 1e-8 * value.abs() {
        return Err(Error::Quadrature { partial: value, err });
    }
    Ok((value, err))
}

/// `ln E₂(r₀)`.
pub fn ln_e2(r0: f64, delta: f64, eps: f64, d: usize) -> Result<f64> {
    check_r0(r0)?;
    check_eps_d(eps, d)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Parameter(format!("δ must lie in (0, 1], got {delta}")));
    }
    let h = d as f64 / 2.0;
    Ok(-h * delta.ln() + ln_upper_gamma_reg(h, delta * r0 * r0 / (2.0 * eps))?)
}

/// `E₂(r₀) = δ^{−d/2} Q(d/2, δ r₀²/2ε)`.
pub fn e2(r0: f64, delta: f64, eps: f64, d: usize) -> Result<f64> {
    Ok(ln_e2(r0, delta, eps, d)?.exp().max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundBreakdown {
    pub r0: f64,
    pub e1: f64,
    pub e2: f64,
    /// Raw `e1 + e2`.
    pub total: f64,
    /// `min(total, 1)`.
    pub clipped_total: f64,
    pub clipped: bool,
    pub quadrature_error: f64,
}

pub fn total_bound(consts: &AssumptionConstants, eps: f64, d: usize, r0: f64) -> Result<BoundBreakdown> {
    let (v1, err) = e1(r0, consts.k, eps, d)?;
    let v2 = e2(r0, consts.delta, eps, d)?;
    let total = v1 + v2;
    Ok(BoundBreakdown {
        r0,
        e1: v1,
        e2: v2,
        total,
        clipped_total: total.min(1.0),
        clipped: total > 1.0,
        quadrature_error: err,
    })
}

/// How the returned split radius was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R0Status {
    /// A root of the stationarity condition.
    Interior,
    /// `K = 0`: the bound decreases in `r₀`, the cap is returned.
    Cap,
    /// No sign change in the bracket; the better endpoint is returned.
    Endpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalR0 {
    pub r0: f64,
    pub status: R0Status,
    /// `g(r₀)/exp((1−δ) r₀²/2ε) = expm1((1+ε)K r₀³/6ε)·exp(−(1−δ) r₀²/2ε) − 1`;
    /// zero for an interior root.
    pub residual: f64,
    pub breakdown: BoundBreakdown,
    /// All stationary points found in the bracket.
    pub roots: Vec<f64>,
}

/// Upper end of the search bracket, `20√(dε/δ)`.
pub fn r0_cap(delta: f64, eps: f64, d: usize) -> f64 {
    20.0 * (d as f64 * eps / delta).sqrt()
}

/// `g(r)` in the form `ln expm1(a r³) − b r²`, which has the same sign as `g`.
fn ln_g_form(r: f64, a: f64, b: f64) -> f64 {
    let u = a * r * r * r;
    let ln_em1 = if u < 1.0 { u.exp_m1().ln() } else { u + (-(-u).exp()).ln_1p() };
    ln_em1 - b * r * r
}

/// Split radius minimising `E₁ + E₂`: a bracketed scan for roots of the
/// stationarity condition, each bisected to machine precision and polished by
/// Newton; the bound itself decides between the roots and the bracket ends.
pub fn optimal_r0(consts: &AssumptionConstants, eps: f64, d: usize) -> Result<OptimalR0> {
    check_eps_d(eps, d)?;
    let cap = r0_cap(consts.delta, eps, d);
    if consts.k == 0.0 {
        let breakdown = total_bound(consts, eps, d, cap)?;
        return Ok(OptimalR0 {
            r0: cap,
            status: R0Status::Cap,
            residual: 0.0,
            breakdown,
            roots: Vec::new(),
        });
    }
    let a = (1.0 + eps) * consts.k / (6.0 * eps);
    let b = (1.0 - consts.delta) / (2.0 * eps);
    let h = |r: f64| ln_g_form(r, a, b);
    let lo = eps.sqrt() * 1e-6;
    let n = 400;
    let grid: Vec<f64> = (0..=n)
        .map(|i| lo * (cap / lo).powf(i as f64 / n as f64))
        .collect();
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (mut l, mut r) = (w[0], w[1]);
        let (hl, hr) = (h(l), h(r));
        if hl == 0.0 {
            roots.push(l);
            continue;
        }
        if hl.signum() == hr.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if h(m).signum() == hl.signum() {
                l = m;
            } else {
                r = m;
            }
        }
        let mut root = if h(l).abs() < h(r).abs() { l } else { r };
        // Newton on the log form: h'(r) = 3a r² e^u/expm1(u) − 2b r.
        for _ in 0..3 {
            let u = a * root * root * root;
            let dh = 3.0 * a * root * root / (-(-u).exp_m1()) - 2.0 * b * root;
            let next = root - h(root) / dh;
            if next.is_finite() && next > w[0] && next < w[1] && h(next).abs() < h(root).abs() {
                root = next;
            } else {
                break;
            }
        }
        roots.push(root);
    }
    let mut candidates: Vec<(f64, R0Status)> = roots.iter().map(|&r| (r, R0Status::Interior)).collect();
    if candidates.is_empty() {
        candidates.push((lo, R0Status::Endpoint));
        candidates.push((cap, R0Status::Endpoint));
    }
    let mut best: Option<(f64, R0Status, BoundBreakdown)> = None;
    for (r, status) in candidates {
        let bd = total_bound(consts, eps, d, r)?;
        if best.as_ref().is_none_or(|(_, _, b)| bd.total < b.total) {
            best = Some((r, status, bd));
        }
    }
    let (r0, status, breakdown) = best.expect("non-empty candidates");
    let residual = ln_g_form(r0, a, b).exp_m1();
    Ok(OptimalR0 {
        r0,
        status,
        residual,
        breakdown,
        roots,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitBound {
    /// `2C(1+ε)√ε K Γ(d/2+3/2)/Γ(d/2)`, reported whether or not the condition holds.
    pub value: f64,
    pub condition_ok: bool,
    /// `6δ^{3/2}/((1+ε)√ε K)`.
    pub lhs: f64,
    /// `max{8d^{3/2}, (8 ln(2Γ(d/2)/(C(1+ε)√εKδ^{d/2}Γ(d/2+3/2))))^{3/2}}`, a negative logarithm counted as 0.
    pub rhs: f64,
    pub c: f64,
    /// The split radius `(6ε/((1+ε)K))^{1/3}` behind the explicit form.
    pub r0: f64,
}

pub fn explicit_bound(consts: &AssumptionConstants, eps: f64, d: usize) -> Result<ExplicitBound> {
    check_eps_d(eps, d)?;
    let df = d as f64;
    let rhs_dim = 8.0 * df.powf(1.5);
    if consts.k == 0.0 {
        return Ok(ExplicitBound {
            value: 0.0,
            condition_ok: true,
            lhs: f64::INFINITY,
            rhs: rhs_dim,
            c: EXPLICIT_C,
            r0: f64::INFINITY,
        });
    }
    let k = consts.k;
    let s = (1.0 + eps) * eps.sqrt() * k;
    let h = df / 2.0;
    let value = 2.0 * EXPLICIT_C * s * dimension_ratio(d);
    let lhs = 6.0 * consts.delta.powf(1.5) / s;
    let ln_arg = 2f64.ln() - EXPLICIT_C.ln() - s.ln() - h * consts.delta.ln() + ln_gamma(h) - ln_gamma(h + 1.5);
    let rhs = rhs_dim.max((8.0 * ln_arg.max(0.0)).powf(1.5));
    Ok(ExplicitBound {
        value,
        condition_ok: lhs >= rhs,
        lhs,
        rhs,
        c: EXPLICIT_C,
        r0: (6.0 * eps / ((1.0 + eps) * k)).cbrt(),
    })
}

/// Hypotheses of the increasing-dimension rate at one `d`:
/// `δ ≤ e^{−1/2}`, `ε ≤ 1` and `3/(ε^{1/2}K) ≥ ((8/δ) ln(1/δ))^{3/2} d^{3/2}`.
/// Only a validity flag for sweeps; it certifies nothing by itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCheck {
    pub delta_ok: bool,
    pub eps_ok: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

pub fn growth_check(consts: &AssumptionConstants, eps: f64, d: usize) -> Result<GrowthCheck> {
    check_eps_d(eps, d)?;
    let delta = consts.delta;
    let lhs = if consts.k == 0.0 { f64::INFINITY } else { 3.0 / (eps.sqrt() * consts.k) };
    let rhs = (8.0 / delta * (1.0 / delta).ln()).powf(1.5) * (d as f64).powf(1.5);
    let delta_ok = delta <= (-0.5f64).exp();
    let eps_ok = eps <= 1.0;
    Ok(GrowthCheck {
        delta_ok,
        eps_ok,
        lhs,
        rhs,
        ok: delta_ok && eps_ok && lhs >= rhs,
    })
}
