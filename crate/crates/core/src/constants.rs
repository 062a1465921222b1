//! The constants `K` and `δ`: closed forms where the problem structure allows,
//! sampled estimates otherwise.
//!
//! Sampled constants are heuristics. A sup or inf over finitely many points
//! can undershoot the global value, so bounds built on them are not certified.

use crate::bounds::{AssumptionConstants, Provenance};
use crate::error::{Error, Result};
use crate::laplace::MapResult;
use crate::model::{potential, potential_parts, InverseProblem};
use crate::perturbed::{perturbative_bound, PerturbationSpec};
use crate::tensor::Tensor3;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorNormResult {
    pub value: f64,
    pub argmax_direction: DVector<f64>,
    pub restarts: usize,
    pub converged_fraction: f64,
}

const HOPM_MAX_ITER: usize = 5000;

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Shifted power iteration for a local maximum of `T(u,u,u)` on the unit sphere.
/// The shift `2‖T‖_F` makes the iteration monotone.
fn ss_hopm(t: &Tensor3, mut u: DVector<f64>, alpha: f64) -> (f64, DVector<f64>, bool) {
    let mut lambda = t.apply(&u, &u, &u);
    for _ in 0..HOPM_MAX_ITER {
        let mut v = t.contract_twice(&u) + &u * alpha;
        let n = v.norm();
        if n == 0.0 {
            return (lambda, u, true);
        }
        v /= n;
        let next = t.apply(&v, &v, &v);
        let step = (&v - &u).amax();
        u = v;
        let done = (next - lambda).abs() <= 1e-15 * next.abs().max(alpha * 1e-3) && step < 1e-9;
        lambda = next;
        if done {
            return (lambda, u, true);
        }
    }
    (lambda, u, false)
}

/// `sup{|T(h,h,h)| : ‖h‖_Σ ≤ 1}` for a symmetric `T`, where `sigma_chol` is
/// the Cholesky factor `L` of `Σ⁻¹`.
///
/// `T` is pulled back along `h = L^{-T} u` so that the constraint becomes the
/// Euclidean unit sphere. For symmetric trilinear forms the sup over the
/// diagonal `T(u,u,u)` equals the sup over independent unit vectors (Banach),
/// so only the diagonal is searched. The search is local, so the value is a
/// lower estimate of the norm; restarts raise it monotonically.
pub fn tensor_sigma_norm(
    t: &Tensor3,
    sigma_chol: &DMatrix<f64>,
    restarts: usize,
    seed: u64,
) -> Result<TensorNormResult> {
    let d = t.dim();
    if sigma_chol.nrows() != d || sigma_chol.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: sigma_chol.nrows(),
        });
    }
    let scale = t.max_abs();
    if t.max_asymmetry() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Contract("tensor is not totally symmetric".into()));
    }
    let p = sigma_chol
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Contract("Cholesky factor must be invertible".into()))?;
    let tt = t.transform(&p).symmetrized();
    tensor_sphere_norm(&tt, restarts, seed)
}

/// `sup{|T(u,u,u)| : ‖u‖₂ = 1}` by shifted power iteration from the coordinate
/// axes and `restarts` seeded random starts, for both `T` and `−T`.
pub fn tensor_sphere_norm(t: &Tensor3, restarts: usize, seed: u64) -> Result<TensorNormResult> {
    let d = t.dim();
    if t.max_abs() == 0.0 {
        let mut e = DVector::zeros(d);
        if d > 0 {
            e[0] = 1.0;
        }
        return Ok(TensorNormResult {
            value: 0.0,
            argmax_direction: e,
            restarts,
            converged_fraction: 1.0,
        });
    }
    let alpha = 2.0 * t.frobenius();
    let neg = t.clone().scaled(-1.0);
    let mut starts: Vec<DVector<f64>> = (0..d)
        .map(|i| DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    starts.extend((0..restarts).map(|_| random_unit(d, &mut rng)));
    let mut best = (f64::NEG_INFINITY, DVector::zeros(d));
    let mut converged = 0usize;
    let mut runs = 0usize;
    for s in &starts {
        for tensor in [t, &neg] {
            let (lambda, u, ok) = ss_hopm(tensor, s.clone(), alpha);
            runs += 1;
            converged += ok as usize;
            if lambda > best.0 {
                best = (lambda, u);
            }
        }
    }
    let u = best.1;
    Ok(TensorNormResult {
        value: t.apply(&u, &u, &u).abs(),
        argmax_direction: u,
        restarts: starts.len(),
        converged_fraction: converged as f64 / runs as f64,
    })
}

/// Sampling design for [`estimate_k`] and [`estimate_delta`].
#[derive(Debug, Clone)]
pub struct SamplingOptions {
    /// Radius of the sampled `Σ`-ball around `x̂`; `None` means `20√(dε)`.
    pub sample_radius: Option<f64>,
    pub n_points: usize,
    pub seed: u64,
    /// Multiplier applied to the sampled sup of `K`.
    pub safety: f64,
    /// Relative shrinkage applied to the sampled inf of `δ`.
    pub margin: f64,
    pub tensor_restarts: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            sample_radius: None,
            n_points: 2000,
            seed: 0,
            safety: 1.1,
            margin: 0.05,
            tensor_restarts: 4,
        }
    }
}

impl SamplingOptions {
    fn radius(&self, problem: &InverseProblem) -> f64 {
        self.sample_radius
            .unwrap_or_else(|| 20.0 * (problem.dim() as f64 * problem.eps).sqrt())
    }
}

/// Radical inverse of `i` in base 2.
fn van_der_corput(mut i: u64) -> f64 {
    let mut v = 0.0;
    let mut f = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            v += f;
        }
        i >>= 1;
        f *= 0.5;
    }
    v
}

/// The `i`-th sample point: radius `R·vdc(i+1)` in `Σ`-norm, direction drawn
/// from a per-point random stream. Points do not depend on the sample count.
fn sample_point(map: &MapResult, radius: f64, seed: u64, i: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let dir = random_unit(map.dim(), &mut rng);
    let r = radius * van_der_corput(i as u64 + 1);
    &map.x_hat + map.unwhiten(&(dir * r))
}

#[derive(Debug, Clone)]
pub struct KEstimate {
    pub k: f64,
    /// Unscaled sampled sup.
    pub raw_sup: f64,
    pub provenance: Provenance,
    pub points: usize,
    pub details: String,
}

/// `K̂ = safety · max_x max(‖D³Φ(x)‖_Σ, ‖D³R(x)‖_Σ)` over `x̂` and the sampled points.
/// Problems with an exactly quadratic potential get `K = 0` with analytic provenance.
pub fn estimate_k(problem: &InverseProblem, map: &MapResult, opts: &SamplingOptions) -> Result<KEstimate> {
    if !map.converged {
        return Err(Error::Contract("estimate_k needs a converged MAP point".into()));
    }
    if problem.is_exactly_gaussian() {
        return Ok(KEstimate {
            k: 0.0,
            raw_sup: 0.0,
            provenance: Provenance::Analytic,
            points: 0,
            details: "affine forward map with Gaussian noise: D³Φ ≡ 0, D³R ≡ 0".into(),
        });
    }
    let radius = opts.radius(problem);
    let point_norm = |x: &DVector<f64>, i: usize| -> Result<f64> {
        let parts = potential_parts(problem, x, 3)?;
        let mut best = 0.0_f64;
        for t in [parts.likelihood.third, parts.prior.third].into_iter().flatten() {
            if t.max_abs() > 0.0 {
                let r = tensor_sigma_norm(&t, &map.sigma_chol, opts.tensor_restarts, opts.seed ^ i as u64)?;
                best = best.max(r.value);
            }
        }
        Ok(best)
    };
    let at_map = point_norm(&map.x_hat, usize::MAX)?;
    let norms: Vec<Option<f64>> = (0..opts.n_points)
        .into_par_iter()
        .map(|i| {
            let x = sample_point(map, radius, opts.seed, i);
            point_norm(&x, i).ok()
        })
        .collect();
    let skipped = norms.iter().filter(|v| v.is_none()).count();
    let sup = norms.into_iter().flatten().fold(at_map, f64::max);
    Ok(KEstimate {
        k: opts.safety * sup,
        raw_sup: sup,
        provenance: Provenance::Estimated,
        points: opts.n_points + 1 - skipped,
        details: format!(
            "sampled sup over {} points in the Σ-ball of radius {radius:.4e} ({skipped} skipped), safety ×{}",
            opts.n_points + 1 - skipped,
            opts.safety
        ),
    })
}

/// Result of probing `2I(x)/‖x−x̂‖²_Σ` along rays to infinity.
#[derive(Debug, Clone)]
pub struct RayProbe {
    /// Whether some ray shows sub-quadratic growth of `I`.
    pub subquadratic: bool,
    /// Ratio sequence of the worst ray.
    pub worst_ratios: Vec<f64>,
    pub radii: Vec<f64>,
}

/// Evaluates the ratio along `2d` axis rays and `n_rays` random rays at radii
/// `R·4^k`. A ray is sub-quadratic when the ratio drops by more than a factor 2
/// per step over the last three radii.
pub fn ray_probe(problem: &InverseProblem, map: &MapResult, base_radius: f64, n_rays: usize, seed: u64) -> RayProbe {
    let d = map.dim();
    let radii: Vec<f64> = (0..8).map(|k| base_radius * 4f64.powi(k)).collect();
    let mut dirs = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            dirs.push(DVector::from_fn(d, |k, _| if k == i { s } else { 0.0 }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    dirs.extend((0..n_rays).map(|_| random_unit(d, &mut rng)));
    let mut worst: Option<Vec<f64>> = None;
    let mut any_sub = false;
    for dir in dirs {
        let ratios: Vec<f64> = radii
            .iter()
            .map(|&r| {
                let x = &map.x_hat + map.unwhiten(&(&dir * r));
                match potential(problem, &x, 0) {
                    Ok(e) => 2.0 * (e.value - map.i_min) / (r * r),
                    Err(_) => f64::INFINITY,
                }
            })
            .collect();
        let n = ratios.len();
        let sub = ratios[n - 3..].windows(2).all(|w| w[1] < 0.5 * w[0]) && ratios[n - 1].is_finite();
        any_sub |= sub;
        let last = ratios[n - 1];
        if worst.as_ref().is_none_or(|w| last < w[n - 1]) {
            worst = Some(ratios);
        }
    }
    RayProbe {
        subquadratic: any_sub,
        worst_ratios: worst.unwrap_or_default(),
        radii,
    }
}

#[derive(Debug, Clone)]
pub struct DeltaEstimate {
    pub delta: f64,
    /// Sampled inf of `2I(x)/‖x−x̂‖²_Σ` before the margin and the clamp to 1.
    pub inf_ratio: f64,
    pub provenance: Provenance,
    pub probe: Option<RayProbe>,
    pub details: String,
}

/// `δ̂ = min(1, (1 − margin)·inf_x 2I(x)/‖x−x̂‖²_Σ)` over the sampled points,
/// together with a ray probe for tails heavier than quadratic. Exactly
/// quadratic potentials get `δ = 1` with analytic provenance.
pub fn estimate_delta(problem: &InverseProblem, map: &MapResult, opts: &SamplingOptions) -> Result<DeltaEstimate> {
    if !map.converged {
        return Err(Error::Contract("estimate_delta needs a converged MAP point".into()));
    }
    if problem.is_exactly_gaussian() {
        return Ok(DeltaEstimate {
            delta: 1.0,
            inf_ratio: 1.0,
            provenance: Provenance::Analytic,
            probe: None,
            details: "quadratic potential: I(x) = ½‖x−x̂‖²_Σ".into(),
        });
    }
    let radius = opts.radius(problem);
    let ratios: Vec<Option<f64>> = (0..opts.n_points)
        .into_par_iter()
        .map(|i| {
            let x = sample_point(map, radius, opts.seed, i);
            let h2 = map.whiten(&(&x - &map.x_hat)).norm_squared();
            if h2 == 0.0 {
                return None;
            }
            potential(problem, &x, 0).ok().map(|e| 2.0 * (e.value - map.i_min) / h2)
        })
        .collect();
    let inf = ratios.into_iter().flatten().fold(f64::INFINITY, f64::min);
    let probe = ray_probe(problem, map, radius, 16, opts.seed);
    if probe.subquadratic {
        return Err(Error::AssumptionViolated(format!(
            "I grows slower than quadratically along a ray: 2I/‖x−x̂‖²_Σ = {:?} at radii {:?}",
            probe.worst_ratios, probe.radii
        )));
    }
    let delta = (1.0 - opts.margin) * inf;
    if !(delta > 0.0) {
        return Err(Error::AssumptionViolated(format!(
            "sampled inf of 2I(x)/‖x−x̂‖²_Σ is {inf:e}; no quadratic lower bound"
        )));
    }
    Ok(DeltaEstimate {
        delta: delta.min(1.0),
        inf_ratio: inf,
        provenance: Provenance::Estimated,
        probe: Some(probe),
        details: format!(
            "sampled inf over {} points in the Σ-ball of radius {radius:.4e}, margin {}",
            opts.n_points, opts.margin
        ),
    })
}

/// Best available constants: analytic for quadratic potentials, the closed
/// forms of the perturbed-linear machinery when the problem carries that
/// structure, sampled estimates otherwise.
pub fn assumption_constants(
    problem: &InverseProblem,
    map: &MapResult,
    opts: &SamplingOptions,
) -> Result<AssumptionConstants> {
    if problem.is_exactly_gaussian() {
        return AssumptionConstants::new(0.0, 1.0, Provenance::Analytic, "quadratic potential");
    }
    if let Ok(spec) = PerturbationSpec::from_problem(problem) {
        let s5 = perturbative_bound(&spec, map)?;
        if !(s5.delta_tau > 0.0) {
            return Err(Error::AssumptionViolated(format!(
                "perturbation too large: δ_τ = {:e} ≤ 0",
                s5.delta_tau
            )));
        }
        return AssumptionConstants::new(
            s5.k_tau,
            s5.delta_tau.min(1.0),
            Provenance::Analytic,
            format!("closed-form K_τ and δ_τ at τ = {}", spec.tau),
        );
    }
    let k = estimate_k(problem, map, opts)?;
    let delta = estimate_delta(problem, map, opts)?;
    AssumptionConstants::new(
        k.k,
        delta.delta,
        Provenance::Estimated,
        format!("K: {}; δ: {}", k.details, delta.details),
    )
}
