use laplace_cert::bounds::*;
use laplace_cert::quadrature::trapezoid;
use laplace_cert::special::{c_d, dimension_ratio, xi_d};
use proptest::prelude::*;

fn consts(k: f64, delta: f64) -> AssumptionConstants {
    AssumptionConstants::new(k, delta, Provenance::User, "").unwrap()
}

#[test]
fn f_examples() {
    assert_eq!(f_integrand(1.3, 0.0, 0.7), 0.0);
    assert_eq!(f_integrand(0.0, 5.0, 0.7), 0.0);
    let want = (2f64.exp() - 1.0) * (-0.5f64).exp();
    assert!((f_integrand(1.0, 6.0, 1.0) - want).abs() < 1e-13);
    assert!((f_integrand(1.0, 6.0, 1.0) - 3.875_158_410_625_431).abs() < 1e-12);
}

#[test]
fn e1_matches_trapezoid() {
    let (v, err) = e1(1.0, 1.0, 1.0, 1).unwrap();
    let pref = c_d(1).unwrap();
    let t = pref * trapezoid(|r| f_integrand(r, 1.0, 1.0), 0.0, 1.0, 1_000_000);
    assert!((v - t).abs() < 1e-8, "{v} vs {t}");
    assert!(err < 1e-10);
    assert_eq!(e1(0.0, 3.0, 0.2, 4).unwrap().0, 0.0);
    assert_eq!(e1(2.0, 0.0, 0.2, 4).unwrap().0, 0.0);
}

#[test]
fn e2_examples() {
    for (delta, d) in [(1.0, 1), (0.3, 2), (0.8, 5)] {
        let v = e2(0.0, delta, 0.5, d).unwrap();
        assert!((v - delta.powf(-(d as f64) / 2.0)).abs() < 1e-12 * v);
    }
    let eps = 0.37f64;
    let r0 = (2.0 * eps).sqrt();
    assert!((e2(r0, 1.0, eps, 2).unwrap() - (-1f64).exp()).abs() < 1e-14);
}

#[test]
fn gaussian_case_total() {
    let eps: f64 = 0.3;
    let b = total_bound(&consts(0.0, 1.0), eps, 1, 10.0 * eps.sqrt()).unwrap();
    assert_eq!(b.e1, 0.0);
    assert!(b.total <= 1.4e-11 && b.total == b.e2);
    let b0 = total_bound(&consts(2.0, 0.25), eps, 3, 0.0).unwrap();
    assert!((b0.total - 0.25f64.powf(-1.5)).abs() < 1e-12);
    assert!(b0.clipped && b0.clipped_total == 1.0);
}

#[test]
fn optimal_r0_closed_form() {
    let c = consts(3.0 * 2f64.ln(), 1.0);
    let o = optimal_r0(&c, 1.0, 1).unwrap();
    assert_eq!(o.status, R0Status::Interior);
    assert!((o.r0 - 1.0).abs() < 1e-10, "{}", o.r0);
    for i in 1..=100 {
        let r = 0.05 * i as f64;
        assert!(o.breakdown.total <= total_bound(&c, 1.0, 1, r).unwrap().total + 1e-15);
    }
}

#[test]
fn optimal_r0_zero_k_is_cap() {
    let o = optimal_r0(&consts(0.0, 0.5), 0.2, 3).unwrap();
    assert_eq!(o.status, R0Status::Cap);
    assert_eq!(o.r0, r0_cap(0.5, 0.2, 3));
}

#[test]
fn explicit_examples() {
    let z = explicit_bound(&consts(0.0, 1.0), 0.4, 2).unwrap();
    assert_eq!(z.value, 0.0);
    assert!(z.condition_ok);
    let eps: f64 = 0.25;
    let k = 0.3;
    let e = explicit_bound(&consts(k, 1.0), eps, 1).unwrap();
    let want = 2.0 * EXPLICIT_C * (1.0 + eps) * eps.sqrt() * k / std::f64::consts::PI.sqrt();
    assert!((e.value - want).abs() < 1e-14 * want);
    assert_eq!(e.condition_ok, e.lhs >= e.rhs);
}

#[test]
fn explicit_rate_in_eps_is_one_half() {
    let c = consts(0.4, 0.9);
    let pts: Vec<(f64, f64)> = (0..12)
        .map(|i| {
            let eps = 2f64.powi(-i);
            let v = explicit_bound(&c, eps, 3).unwrap().value / (1.0 + eps);
            (eps.ln(), v.ln())
        })
        .collect();
    for w in pts.windows(2) {
        let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        assert!((s - 0.5).abs() < 1e-12, "{s}");
    }
}

#[test]
fn explicit_dimension_prefactor() {
    let c = consts(1.0, 1.0);
    let eps: f64 = 1e-4;
    let ds: Vec<usize> = (1..=8).map(|i| 50 * i).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ds
        .iter()
        .map(|&d| {
            let v = explicit_bound(&c, eps, d).unwrap().value / (eps.sqrt() * c.k);
            ((d as f64).ln(), v.ln())
        })
        .unzip();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let s = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!((1.45..=1.55).contains(&s), "{s}");
    assert!((dimension_ratio(400) / dimension_ratio(200) - 2f64.powf(1.5)).abs() < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn e1_e2_monotone(k in 0.01f64..5.0, delta in 0.05f64..1.0, eps in 0.01f64..2.0, d in 1usize..6) {
        let cap = r0_cap(delta, eps, d);
        let mut prev = (0.0, f64::INFINITY);
        for i in 0..=30 {
            let r = cap * i as f64 / 30.0 * 0.2;
            let a = e1(r, k, eps, d).unwrap().0;
            let b = e2(r, delta, eps, d).unwrap();
            prop_assert!(a >= prev.0 * (1.0 - 1e-10) && b <= prev.1 * (1.0 + 1e-12));
            prev = (a, b);
        }
    }

    #[test]
    fn concentration_tail(d in 1usize..50, delta in 0.05f64..1.0, eps in 0.001f64..3.0, s in 1.0f64..6.0) {
        let r = s * 2.0 * (d as f64 * eps / delta).sqrt();
        let t = delta * r * r / eps;
        let tail = 1.0 - xi_d(d as f64, t).unwrap();
        prop_assert!(tail <= 2.0 * (-t / 8.0).exp());
    }

    #[test]
    fn split_balance_and_grid_argmin(k in 0.05f64..4.0, delta in 0.1f64..1.0, eps in 0.01f64..1.0, d in 1usize..4) {
        let c = consts(k, delta);
        let o = optimal_r0(&c, eps, d).unwrap();
        if o.status == R0Status::Interior {
            prop_assert!(o.residual.abs() <= 1e-10, "residual {}", o.residual);
            let f = f_integrand(o.r0, k, eps);
            let g = (-delta * o.r0 * o.r0 / (2.0 * eps)).exp();
            prop_assert!((f / g - 1.0).abs() <= 1e-8, "{} vs {}", f, g);
        }
        let cap = r0_cap(delta, eps, d);
        for i in 1..=40 {
            let r = cap * i as f64 / 40.0;
            let t = total_bound(&c, eps, d, r).unwrap().total;
            prop_assert!(o.breakdown.total <= t * (1.0 + 1e-9), "r={} beats r0={}", r, o.r0);
        }
    }

    #[test]
    fn explicit_dominates_split_when_valid(k in 1e-4f64..0.5, delta in 0.5f64..1.0, eps in 1e-4f64..0.1, d in 1usize..4) {
        let c = consts(k, delta);
        let e = explicit_bound(&c, eps, d).unwrap();
        if e.condition_ok {
            let o = optimal_r0(&c, eps, d).unwrap();
            prop_assert!(e.value >= o.breakdown.total, "{} < {}", e.value, o.breakdown.total);
        }
    }
}
