use laplace_cert_cli::config::{Axis, ExperimentConfig};
use laplace_cert_cli::densities::{densities, DensityRow};
use laplace_cert_cli::output::{fmt_f64, record, write_csv, HEADER};
use laplace_cert_cli::pipeline;
use laplace_cert_cli::verify::{verify, Status};
use proptest::prelude::*;
use std::fs;
use std::path::Path;

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["laplace-cert"];
    full.extend_from_slice(args);
    let code = laplace_cert_cli::main_with(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn trapezoid(rows: &[DensityRow], f: impl Fn(&DensityRow) -> f64) -> f64 {
    rows.windows(2).map(|w| 0.5 * (w[1].x - w[0].x) * (f(&w[0]) + f(&w[1]))).sum()
}

#[test]
fn gaussian_single_point() {
    let cfg = ExperimentConfig::parse("problem = linear_gaussian\nproblem.d = 2\n").unwrap();
    let rows = pipeline::run(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!(r.split.as_ref().unwrap().total <= 1e-10);
    assert!(r.oracle.as_ref().unwrap().value <= 1e-8);
    assert!(r.assumptions_ok && r.note.is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();

    let bad = write_cfg(dir.path(), "bad.cfg", "problem = linear_gaussian\n  sweep.axis = eps\n");
    let (code, _, err) = run_cli(&["run", &bad, "--out-dir", o]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2, column 3"), "{err}");

    let cauchy = write_cfg(dir.path(), "cauchy.cfg", "problem = cauchy_noise_linear\n");
    assert_eq!(run_cli(&["run", &cauchy, "--out-dir", o]).0, 2);

    let big = write_cfg(dir.path(), "big.cfg", "problem = perturbed_linear\nproblem.tau = 50\noracle = none\n");
    let (code, _, err) = run_cli(&["run", &big, "--out-dir", o]);
    assert_eq!(code, 3);
    assert!(err.contains("δ_τ"), "{err}");
    assert!(out.join("results.csv").exists());
    assert_eq!(run_cli(&["run", &big, "--out-dir", o, "--allow-invalid"]).0, 0);
    assert_eq!(run_cli(&["verify", &big]).0, 3);

    let two = write_cfg(dir.path(), "two.cfg", "problem = linear_gaussian\nproblem.d = 2\n");
    assert_eq!(run_cli(&["densities", &two, "--out-dir", o]).0, 2);
    assert_eq!(run_cli(&["run", &two, "--oracle", "sometimes"]).0, 2);
    assert_eq!(run_cli(&["run", "/nonexistent/config"]).0, 4);
    assert_eq!(run_cli(&["--help"]).0, 0);
}

#[test]
fn csv_round_trips() {
    let cfg = ExperimentConfig::parse(
        "problem = perturbed_linear\nproblem.d = 2\nproblem.b = 1,-1\noracle = importance\noracle.samples = 5000\n\
         sweep.axis = tau\nsweep.grid = 0.01, 0.1, 0.4\n",
    )
    .unwrap();
    let rows = pipeline::run(&cfg).unwrap();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();

    let mut rd = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, HEADER);
    assert_eq!(header[0], "schema_version");
    assert_eq!(header.last().unwrap(), "wall_time_s");
    let parsed: Vec<Vec<String>> = rd.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    assert_eq!(parsed.len(), rows.len());
    for (row, cells) in rows.iter().zip(&parsed) {
        assert_eq!(&record(row), cells);
        let get = |name: &str| &cells[HEADER.iter().position(|h| *h == name).unwrap()];
        let back = |name: &str| get(name).parse::<f64>().unwrap().to_bits();
        assert_eq!(back("axis_value"), row.axis_value.unwrap().to_bits());
        assert_eq!(back("total"), row.split.as_ref().unwrap().total.to_bits());
        assert_eq!(back("oracle_tv"), row.oracle.as_ref().unwrap().value.to_bits());
        assert_eq!(back("perturbative_bound"), row.perturbative.as_ref().unwrap().bound.to_bits());
        let xs: Vec<u64> = get("x_hat").split(';').map(|v| v.parse::<f64>().unwrap().to_bits()).collect();
        assert_eq!(xs, row.x_hat.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(get("axis"), "tau");
    }

    // Re-serialising the parsed cells reproduces the bytes.
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).unwrap();
    for c in &parsed {
        w.write_record(c).unwrap();
    }
    assert_eq!(w.into_inner().unwrap(), buf);
}

#[test]
fn rows_follow_grid_order_and_bounds_hold() {
    let cfg = ExperimentConfig::parse(
        "problem = perturbed_linear\noracle = quadrature\nsweep.axis = eps\nsweep.grid = 0.01, 0.03, 0.1, 0.3, 1\n",
    )
    .unwrap();
    let rows = pipeline::run(&cfg).unwrap();
    let got: Vec<f64> = rows.iter().map(|r| r.axis_value.unwrap()).collect();
    assert_eq!(got, cfg.sweep.as_ref().unwrap().grid);
    for r in &rows {
        assert_eq!(r.axis, Some(Axis::Eps));
        assert_eq!(r.eps, r.axis_value.unwrap());
        assert_eq!(r.bound_holds(), Some(true), "ε = {}", r.eps);
    }
}

#[test]
fn rates_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "eps.cfg",
        "problem = perturbed_linear\nproblem.tau = 0.05\nsweep.axis = eps\nsweep.from = 0.01\nsweep.to = 1\nsweep.points = 5\nsweep.log = true\n",
    );
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let o = dir.path().join(name);
        let (code, stdout, _) = run_cli(&["run", &cfg, "--out-dir", o.to_str().unwrap()]);
        assert_eq!(code, 0);
        let t = fs::read_to_string(o.join("rates.txt")).unwrap();
        assert!(stdout.starts_with(&t));
        texts.push(t);
    }
    assert_eq!(texts[0], texts[1]);
    assert!(texts[0].starts_with("# log-log least-squares slopes against eps"));
    assert!(texts[0].contains("smallest"));
    let oracle_line = texts[0].lines().find(|l| l.starts_with("oracle_tv\t")).unwrap();
    let fields: Vec<&str> = oracle_line.split('\t').collect();
    assert_eq!(fields[2], "3");
    assert_eq!(fields[4], "5");
}

#[test]
fn gaussian_densities() {
    let cfg = ExperimentConfig::parse("problem = linear_gaussian\nproblem.eps = 0.3\nproblem.y = 0.7\n").unwrap();
    let rows = densities(&cfg, 4001).unwrap();
    assert_eq!(rows.len(), 4001);
    assert!(rows.iter().all(|r| r.tv <= 1e-12));
    assert!((trapezoid(&rows, |r| r.posterior) - 1.0).abs() < 1e-4);
    assert!((trapezoid(&rows, |r| r.laplace) - 1.0).abs() < 1e-4);
    // x̂ ± 8σ exactly.
    let mid = 0.5 * (rows[0].x + rows[4000].x);
    let peak = rows.iter().max_by(|a, b| a.laplace.total_cmp(&b.laplace)).unwrap();
    assert!((peak.x - mid).abs() < 1e-9);
}

#[test]
fn demo_densities() {
    let cfg = ExperimentConfig::parse("problem = scalar_bimodal_demo\n").unwrap();
    let rows = densities(&cfg, 4001).unwrap();
    let p = trapezoid(&rows, |r| r.posterior);
    let q = trapezoid(&rows, |r| r.laplace);
    assert!((p - 1.0).abs() < 1e-4, "{p}");
    assert!((q - 1.0).abs() < 1e-4, "{q}");
    let tv = trapezoid(&rows, |r| r.tv);
    let fund = trapezoid(&rows, |r| r.fundamental);
    assert!(fund >= tv - 1e-6, "{fund} < {tv}");
    println!("∫fundamental = {fund:.6}, ∫TV integrand = {tv:.6}, ratio {:.3}", fund / tv);

    let dir = tempfile::tempdir().unwrap();
    let c = write_cfg(dir.path(), "demo.cfg", "problem = scalar_bimodal_demo\n");
    let (code, _, _) = run_cli(&["densities", &c, "--out-dir", dir.path().to_str().unwrap(), "--points", "101"]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(dir.path().join("densities.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,posterior,laplace,tv_integrand,fundamental_integrand");
    assert_eq!(lines.count(), 101);
}

#[test]
fn verify_reports() {
    let g = verify(&ExperimentConfig::parse("problem = linear_gaussian\nproblem.d = 3\n").unwrap()).unwrap();
    assert!(g.assumptions_hold());
    let k = g.check("third_derivative").unwrap();
    let d = g.check("quadratic_growth").unwrap();
    assert_eq!((k.value, d.value), (Some(0.0), Some(1.0)));
    assert_eq!((k.provenance.as_str(), d.provenance.as_str()), ("analytic", "analytic"));
    let text = g.to_string();
    assert!(text.lines().any(|l| l == "assumptions\tpass"));
    assert!(text.contains("check\tstatus\tprovenance\tvalue\tdetail"));

    let c = verify(&ExperimentConfig::parse("problem = cauchy_noise_linear\nproblem.eps = 4\nconstants = estimate\n").unwrap())
        .unwrap();
    assert_eq!(c.check("quadratic_growth").unwrap().status, Status::Fail);
    assert!(!c.assumptions_hold());

    let t = verify(&ExperimentConfig::parse("problem = perturbed_linear\nproblem.tau = 50\n").unwrap()).unwrap();
    let q = t.check("quadratic_growth").unwrap();
    assert_eq!(q.status, Status::Fail);
    assert!(q.detail.contains("δ_τ"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn floats_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn grid_accepted_iff_increasing_and_positive(grid in prop::collection::vec(-2.0f64..5.0, 1..8)) {
        let list = grid.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ");
        let text = format!("problem = perturbed_linear\nsweep.axis = tau\nsweep.grid = {list}\n");
        let valid = grid.iter().all(|v| *v > 0.0) && grid.windows(2).all(|w| w[1] > w[0]);
        let parsed = ExperimentConfig::parse(&text);
        prop_assert_eq!(parsed.is_ok(), valid);
        if let Ok(c) = parsed {
            prop_assert_eq!(c.sweep.unwrap().grid, grid);
        } else {
            let e = parsed.unwrap_err();
            prop_assert_eq!((e.line, e.column), (3, 14));
        }
    }

    #[test]
    fn spaced_grids_are_valid(a in 1e-4f64..1.0, ratio in 1.01f64..100.0, n in 2usize..20, log in any::<bool>()) {
        let text = format!(
            "problem = perturbed_linear\nsweep.axis = eps\nsweep.from = {a:?}\nsweep.to = {:?}\nsweep.points = {n}\nsweep.log = {log}\n",
            a * ratio
        );
        let c = ExperimentConfig::parse(&text).unwrap();
        let g = c.sweep.unwrap().grid;
        prop_assert_eq!(g.len(), n);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(g[0], a);
        prop_assert_eq!(g[n - 1], a * ratio);
    }
}
