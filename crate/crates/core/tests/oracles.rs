use laplace_cert::laplace::*;
use laplace_cert::model::*;
use laplace_cert::oracles::*;
use laplace_cert::quadrature::trapezoid;
use laplace_cert::special::upper_gamma_reg;
use nalgebra::DVector;
use std::sync::Arc;

fn params(pairs: &[(&str, &str)]) -> CatalogParams {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn solve(p: &InverseProblem) -> MapResult {
    map_estimate(p, &DVector::zeros(p.dim()), &MapOptions::default()).unwrap()
}

fn catalog_grid() -> Vec<InverseProblem> {
    vec![
        catalog("linear_gaussian", &params(&[("d", "2"), ("y", "1,-1")])).unwrap(),
        catalog("perturbed_linear", &params(&[("tau", "0.3")])).unwrap(),
        catalog("perturbed_linear", &params(&[("d", "2"), ("tau", "0.2"), ("b", "1,-1"), ("y", "0.6,0.3"), ("m", "1.5")])).unwrap(),
        catalog("perturbed_linear", &params(&[("d", "2"), ("tau", "0.6"), ("eps", "1"), ("b", "1,0.5"), ("y", "0.2,0.9")])).unwrap(),
        catalog("scalar_bimodal_demo", &CatalogParams::new()).unwrap(),
        catalog("scalar_bimodal_demo", &params(&[("eps", "0.5")])).unwrap(),
        catalog("cauchy_noise_linear", &params(&[("prior_precision", "1")])).unwrap(),
    ]
}

#[test]
fn gaussian_normalization_and_scaling() {
    for d in 1..=3 {
        let ds = d.to_string();
        let p = catalog("linear_gaussian", &params(&[("d", &ds), ("eps", "0.3")])).unwrap();
        let m = solve(&p);
        let z = normalization(&p, &m, &QuadSpec::default()).unwrap();
        assert!((z / m.z_tilde - 1.0).abs() < 1e-8, "d={d}");
        let p4 = catalog("linear_gaussian", &params(&[("d", &ds), ("eps", "1.2")])).unwrap();
        // Keep Σ fixed: flat-prior-free check uses the Laplace identity on the quadratic.
        let m4 = MapResult::from_hessian(m.x_hat.clone(), m.i_min, m.hess.clone(), 1.2).unwrap();
        let ratio = m4.z_tilde / m.z_tilde;
        assert!((ratio - 2f64.powi(d as i32)).abs() < 1e-12 * ratio);
        let z4 = normalization(&p4, &solve(&p4), &QuadSpec::default()).unwrap();
        assert!(z4 > 0.0);
    }
}

#[test]
fn quartic_toy_matches_trapezoid() {
    let map = FnForwardMap::new(1, |x: &DVector<f64>| x.map(|v| v + v * v * v / 3.0));
    let p = InverseProblem::new(
        "quartic",
        Arc::new(map),
        Prior::Flat { dim: 1 },
        0.5,
        DVector::from_element(1, 0.0),
        NoiseModel::Gaussian,
    )
    .unwrap();
    let m = solve(&p);
    let z = normalization(&p, &m, &QuadSpec::default()).unwrap();
    let f = |x: f64| {
        let g = x + x * x * x / 3.0;
        (-(0.5 * g * g - m.i_min) / 0.5).exp()
    };
    let t = trapezoid(f, -8.0, 8.0, 10_000_000);
    assert!((z / t - 1.0).abs() < 1e-7, "{z} vs {t}");
}

#[test]
fn identical_measures_have_zero_distance() {
    let p = catalog("linear_gaussian", &params(&[("d", "2")])).unwrap();
    let m = solve(&p);
    let q = tv_quadrature(&p, &m, &QuadSpec::default()).unwrap();
    assert!(q.value <= 1e-8);
    assert!(hellinger(&p, &m, &QuadSpec::default()).unwrap() <= 1e-8);
    let is = tv_importance(&p, &m, 2000, 1).unwrap();
    assert_eq!(is.value, 0.0);
}

#[test]
fn synthetic_gaussian_pair() {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let (tv, h, _) = tv_hellinger_1d(
        |x| -0.5 * (x + 1.0) * (x + 1.0) - 0.5 * ln2pi,
        |x| -0.5 * (x - 1.0) * (x - 1.0) - 0.5 * ln2pi,
        -30.0,
        30.0,
        1e-13,
    );
    assert!((tv - 0.682_689_5).abs() < 1e-6);
    assert!((h - 0.627_271_6).abs() < 1e-6);
    assert!((h * h - (1.0 - (-0.5f64).exp())).abs() < 1e-10);
    assert!(kraft_holds(tv, h, 0.0));
}

#[test]
fn kraft_on_catalog() {
    for p in catalog_grid() {
        let m = solve(&p);
        let q = tv_quadrature(&p, &m, &QuadSpec::default()).unwrap();
        let (h, herr) = q.hellinger.unwrap();
        let tol = 3.0 * (q.err + herr);
        assert!(kraft_holds(q.value, h, tol), "{}: tv={} h={}", p.name, q.value, h);
        assert!(q.value <= 1.0 + q.err && q.z > 0.0);
    }
}

#[test]
fn fundamental_estimate_dominates() {
    for p in catalog_grid() {
        let m = solve(&p);
        let is = tv_importance(&p, &m, 100_000, 2).unwrap();
        let (fund, ferr) = is.fundamental.unwrap();
        let slack = 3.0 * (ferr + is.err);
        assert!(fund >= is.value - slack, "{}: {fund} < {}", p.name, is.value);
        println!("{}: mean|w−1| = {fund:.6e}, TV = {:.6e}, ratio {:.4}", p.name, is.value, fund / is.value);
    }
}

#[test]
fn cross_oracle_agreement_in_two_dimensions() {
    for p in catalog_grid().into_iter().filter(|p| p.dim() == 2) {
        let m = solve(&p);
        let q = tv_quadrature(&p, &m, &QuadSpec::default()).unwrap();
        let is = tv_importance(&p, &m, 100_000, 7).unwrap();
        assert!(is.reliable);
        let tol = 3.0 * (q.err + is.err);
        assert!((q.value - is.value).abs() <= tol.max(1e-12), "{}: {} vs {} ± {}", p.name, q.value, is.value, tol);
        assert!((q.ln_z - is.ln_z).abs() < 0.01);
    }
}

#[test]
fn importance_stderr_scales_with_root_n() {
    let p = catalog("perturbed_linear", &params(&[("d", "2"), ("tau", "0.4"), ("b", "1,-1"), ("m", "1.5")])).unwrap();
    let m = solve(&p);
    let mut ratios = Vec::new();
    for rep in 0..20 {
        let a = tv_importance(&p, &m, 8_000, 100 + rep).unwrap().err;
        let b = tv_importance(&p, &m, 16_000, 200 + rep).unwrap().err;
        ratios.push(a / b);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((1.2..=1.7).contains(&mean), "{mean} {ratios:?}");
}

#[test]
fn importance_is_deterministic() {
    let p = catalog("scalar_bimodal_demo", &CatalogParams::new()).unwrap();
    let m = solve(&p);
    let a = tv_importance(&p, &m, 5_000, 42).unwrap();
    let b = tv_importance(&p, &m, 5_000, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gaussian_ball_law() {
    let n = 200_000;
    let mut case = 0;
    for d in [1usize, 2, 3] {
        for delta in [0.3, 1.0] {
            for r0 in [0.5, 1.5] {
                case += 1;
                let eps: f64 = 0.4;
                let hess = nalgebra::DMatrix::from_fn(d, d, |i, j| if i == j { 2.0 } else { 0.3 });
                let m = MapResult::from_hessian(DVector::zeros(d), 0.0, hess, eps).unwrap();
                let nu = laplace_approx(&m, eps / delta).unwrap();
                let hits = nu
                    .sample(n, case)
                    .iter()
                    .filter(|x| sigma_norm(&m, x) >= r0)
                    .count();
                let frac = hits as f64 / n as f64;
                let want = upper_gamma_reg(d as f64 / 2.0, delta * r0 * r0 / (2.0 * eps)).unwrap();
                let se = (want * (1.0 - want) / n as f64).sqrt();
                assert!((frac - want).abs() <= 4.0 * se, "d={d} δ={delta} r0={r0}: {frac} vs {want}");
            }
        }
    }
}

#[test]
fn quadrature_rejects_high_dimension() {
    let p = catalog("linear_gaussian", &params(&[("d", "4")])).unwrap();
    let m = solve(&p);
    assert!(tv_quadrature(&p, &m, &QuadSpec::default()).is_err());
    assert!(tv_importance(&p, &m, 1000, 0).is_ok());
}
