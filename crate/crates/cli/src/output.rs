//! `results.csv` and `rates.txt`.

use crate::config::Axis;
use crate::error::CliError;
use crate::pipeline::SweepRow;
use laplace_cert::bounds::R0Status;
use laplace_cert::laplace::Uniqueness;
use std::fmt::Write as _;
use std::io::Write;

pub const SCHEMA_VERSION: u32 = 1;

pub const HEADER: &[&str] = &[
    "schema_version",
    "axis",
    "axis_value",
    "problem",
    "dim",
    "eps",
    "tau",
    "x_hat",
    "i_min",
    "min_eig",
    "map_iterations",
    "uniqueness",
    "assumptions_ok",
    "provenance",
    "k",
    "delta",
    "r0",
    "r0_status",
    "e1",
    "e2",
    "total",
    "total_clipped",
    "clipped",
    "e1_quad_err",
    "explicit_value",
    "explicit_condition_ok",
    "explicit_lhs",
    "explicit_rhs",
    "growth_ok",
    "perturbative_gamma1",
    "perturbative_gamma2",
    "perturbative_delta_tau",
    "perturbative_k_tau",
    "perturbative_v",
    "perturbative_w",
    "perturbative_bound",
    "perturbative_valid",
    "oracle_method",
    "oracle_tv",
    "oracle_err",
    "oracle_hellinger",
    "oracle_z",
    "oracle_z_tilde",
    "oracle_ess",
    "oracle_reliable",
    "note",
    "wall_time_s",
];

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T, F: Fn(&T) -> String>(v: Option<&T>, f: F) -> String {
    v.map(f).unwrap_or_default()
}

fn r0_status(s: R0Status) -> &'static str {
    match s {
        R0Status::Interior => "interior",
        R0Status::Cap => "cap",
        R0Status::Endpoint => "endpoint",
    }
}

pub fn record(row: &SweepRow) -> Vec<String> {
    let f = |v: &f64| fmt_f64(*v);
    let b = |v: &bool| v.to_string();
    let c = row.constants.as_ref();
    let t = row.split.as_ref();
    let e = row.explicit.as_ref();
    let s = row.perturbative.as_ref();
    let o = row.oracle.as_ref();
    vec![
        SCHEMA_VERSION.to_string(),
        opt(row.axis.as_ref(), |a| a.name().to_string()),
        opt(row.axis_value.as_ref(), f),
        row.problem.clone(),
        row.dim.to_string(),
        fmt_f64(row.eps),
        opt(row.tau.as_ref(), f),
        row.x_hat.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";"),
        fmt_f64(row.i_min),
        fmt_f64(row.min_eig),
        row.map_iterations.to_string(),
        match row.uniqueness {
            Uniqueness::Unverified => "unverified",
            Uniqueness::MultipleMinimaFound => "multiple",
        }
        .to_string(),
        row.assumptions_ok.to_string(),
        opt(c, |c| c.provenance.to_string()),
        opt(c.map(|c| &c.k), f),
        opt(c.map(|c| &c.delta), f),
        opt(t.map(|t| &t.r0), f),
        opt(t, |t| r0_status(t.r0_status).to_string()),
        opt(t.map(|t| &t.e1), f),
        opt(t.map(|t| &t.e2), f),
        opt(t.map(|t| &t.total), f),
        opt(t.map(|t| &t.clipped_total), f),
        opt(t.map(|t| &t.clipped), b),
        opt(t.map(|t| &t.quadrature_error), f),
        opt(e.map(|e| &e.value), f),
        opt(e.map(|e| &e.condition_ok), b),
        opt(e.map(|e| &e.lhs), f),
        opt(e.map(|e| &e.rhs), f),
        opt(e.map(|e| &e.growth_ok), b),
        opt(s.map(|s| &s.gamma1), f),
        opt(s.map(|s| &s.gamma2), f),
        opt(s.map(|s| &s.delta_tau), f),
        opt(s.map(|s| &s.k_tau), f),
        opt(s.map(|s| &s.v_tau), f),
        opt(s.map(|s| &s.w), f),
        opt(s.map(|s| &s.bound), f),
        opt(s.map(|s| &s.valid), b),
        opt(o, |o| o.method.to_string()),
        opt(o.map(|o| &o.value), f),
        opt(o.map(|o| &o.err), f),
        opt(o.and_then(|o| o.hellinger.as_ref()), |h| fmt_f64(h.0)),
        opt(o.map(|o| &o.z), f),
        opt(o.map(|o| &o.z_tilde), f),
        opt(o.and_then(|o| o.ess.as_ref()), f),
        opt(o.map(|o| &o.reliable), b),
        row.note.clone(),
        fmt_f64(row.wall_time),
    ]
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-log slope over the points where both coordinates are positive and finite.
pub fn log_slope(pairs: &[(f64, f64)]) -> Option<(f64, usize)> {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter(|(a, b)| *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    (x.len() >= 2).then(|| (ls_slope(&x, &y), x.len()))
}

/// Indices of the asymptotic half of the grid: smallest values for ε and τ, largest for d.
pub fn asymptotic_half(axis: Axis, n: usize) -> std::ops::Range<usize> {
    let half = n.div_ceil(2);
    match axis {
        Axis::Eps | Axis::Tau => 0..half,
        Axis::Dim => n - half..n,
    }
}

pub const RATE_COLUMNS: &[&str] = &["oracle_tv", "total", "explicit_value", "perturbative_bound"];

pub fn rate_column(row: &SweepRow, name: &str) -> Option<f64> {
    match name {
        "oracle_tv" => row.oracle.as_ref().map(|o| o.value),
        "total" => row.split.as_ref().map(|t| t.total),
        "explicit_value" => row.explicit.as_ref().map(|t| t.value),
        "perturbative_bound" => row.perturbative.as_ref().map(|s| s.bound),
        _ => None,
    }
}

/// Slope of a column over all rows and over the asymptotic half.
pub fn slopes(rows: &[SweepRow], axis: Axis, column: &str) -> (Option<(f64, usize)>, Option<(f64, usize)>) {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.axis_value.unwrap_or(f64::NAN), rate_column(r, column).unwrap_or(f64::NAN)))
        .collect();
    let half = &pairs[asymptotic_half(axis, pairs.len())];
    (log_slope(half), log_slope(&pairs))
}

pub fn rates_text(rows: &[SweepRow], axis: Axis) -> String {
    let mut s = String::new();
    let which = match axis {
        Axis::Eps | Axis::Tau => "smallest",
        Axis::Dim => "largest",
    };
    let _ = writeln!(s, "# log-log least-squares slopes against {}", axis.name());
    let _ = writeln!(
        s,
        "# asymptotic: the ceil(n/2) {which} grid values; full: every grid value"
    );
    let _ = writeln!(s, "# rows with a missing or non-positive value are skipped");
    let _ = writeln!(s, "column\tasymptotic_slope\tasymptotic_n\tfull_slope\tfull_n");
    for col in RATE_COLUMNS {
        let (a, f) = slopes(rows, axis, col);
        if a.is_none() && f.is_none() {
            continue;
        }
        let cell = |v: Option<(f64, usize)>| match v {
            Some((m, n)) => (fmt_f64(m), n.to_string()),
            None => (String::new(), "0".into()),
        };
        let (am, an) = cell(a);
        let (fm, fnn) = cell(f);
        let _ = writeln!(s, "{col}\t{am}\t{an}\t{fm}\t{fnn}");
    }
    s
}
