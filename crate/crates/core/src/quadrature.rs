//! Adaptive Gauss–Kronrod (10/21-point) quadrature on intervals and boxes.
//!
//! Integrands are vector valued (`[f64; N]`) so that several related
//! integrals can share the same nodes; refinement is driven by the component
//! with the largest error.

use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_745_109,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights belonging to XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_subdivisions: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub err: [f64; N],
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult<1> {
    pub fn scalar(&self) -> (f64, f64) {
        (self.value[0], self.err[0])
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    err: [f64; N],
    key: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<const N: usize> Eq for Segment<N> {}
impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.total_cmp(&other.key)
    }
}

/// One 21-point Kronrod pass. `f` returns a value and an accumulated error
/// already carried by that value (from inner integrals); the latter is
/// integrated with the Kronrod weights and added to the local estimate.
fn gk21<const N: usize, F>(f: &mut F, a: f64, b: f64) -> ([f64; N], [f64; N])
where
    F: FnMut(f64) -> ([f64; N], [f64; N]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut carried = [0.0; N];

    let (fc, ec) = f(center);
    for n in 0..N {
        kron[n] = WGK[10] * fc[n];
        carried[n] = WGK[10] * ec[n];
    }
    for (j, &x) in XGK.iter().take(10).enumerate() {
        let dx = half * x;
        let (f1, e1) = f(center - dx);
        let (f2, e2) = f(center + dx);
        for n in 0..N {
            let s = f1[n] + f2[n];
            kron[n] += WGK[j] * s;
            carried[n] += WGK[j] * (e1[n] + e2[n]);
            if j % 2 == 1 {
                gauss[n] += WG[j / 2] * s;
            }
        }
    }
    let mut value = [0.0; N];
    let mut err = [0.0; N];
    for n in 0..N {
        value[n] = kron[n] * half;
        err[n] = ((kron[n] - gauss[n]) * half).abs() + carried[n] * half.abs();
    }
    (value, err)
}

/// Adaptive bisection driven by the largest local error.
pub fn integrate_with_errors<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> QuadResult<N>
where
    F: FnMut(f64) -> ([f64; N], [f64; N]),
{
    if a == b {
        return QuadResult {
            value: [0.0; N],
            err: [0.0; N],
            evaluations: 0,
            converged: true,
        };
    }
    let key = |err: &[f64; N]| err.iter().fold(0.0_f64, |m, e| m.max(*e));
    let (value, err) = gk21(&mut f, a, b);
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value,
        err,
        key: key(&err),
    });
    let mut total_v = value;
    let mut total_e = err;

    let done = |v: &[f64; N], e: &[f64; N]| {
        (0..N).all(|n| e[n] <= opts.abs_tol.max(opts.rel_tol * v[n].abs()))
    };

    let mut converged = done(&total_v, &total_e);
    let mut subdivisions = 1;
    while !converged && subdivisions < opts.max_subdivisions {
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating-point resolution; cannot refine further.
            heap.push(Segment { key: -1.0, ..worst });
            break;
        }
        let (v1, e1) = gk21(&mut f, worst.a, mid);
        let (v2, e2) = gk21(&mut f, mid, worst.b);
        evaluations += 42;
        subdivisions += 1;
        for n in 0..N {
            total_v[n] += v1[n] + v2[n] - worst.value[n];
            total_e[n] += e1[n] + e2[n] - worst.err[n];
        }
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
            key: key(&e1),
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
            key: key(&e2),
        });
        converged = done(&total_v, &total_e);
    }
    // Re-sum to shed drift from the running updates.
    let mut value = [0.0; N];
    let mut err = [0.0; N];
    for seg in heap.iter() {
        for n in 0..N {
            value[n] += seg.value[n];
            err[n] += seg.err[n];
        }
    }
    QuadResult {
        value,
        err,
        evaluations,
        converged,
    }
}

/// Adaptive integral of a scalar function over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> QuadResult<1>
where
    F: FnMut(f64) -> f64,
{
    integrate_with_errors(|x| ([f(x)], [0.0]), a, b, opts)
}

/// Tensorised adaptive integral over the box `[lo, hi]`: nested one-dimensional
/// passes, innermost coordinate last. Inner tolerances are tightened so the
/// accumulated inner error stays a fraction of the requested tolerance.
pub fn integrate_box<const N: usize, F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    opts: &QuadOptions,
) -> QuadResult<N>
where
    F: Fn(&[f64]) -> [f64; N],
{
    assert_eq!(lo.len(), hi.len());
    assert!(!lo.is_empty(), "box must have at least one dimension");
    let mut point = vec![0.0; lo.len()];
    let mut evals = 0usize;
    let mut all_converged = true;
    let res = nested(f, lo, hi, opts, 0, &mut point, &mut evals, &mut all_converged);
    QuadResult {
        value: res.value,
        err: res.err,
        evaluations: evals,
        converged: res.converged && all_converged,
    }
}

#[allow(clippy::too_many_arguments)]
fn nested<const N: usize, F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    opts: &QuadOptions,
    axis: usize,
    point: &mut Vec<f64>,
    evals: &mut usize,
    all_converged: &mut bool,
) -> QuadResult<N>
where
    F: Fn(&[f64]) -> [f64; N],
{
    let last = axis + 1 == lo.len();
    if last {
        let res = integrate_with_errors(
            |t| {
                point[axis] = t;
                (f(&point[..]), [0.0; N])
            },
            lo[axis],
            hi[axis],
            opts,
        );
        *evals += res.evaluations;
        return res;
    }
    let width = hi[axis] - lo[axis];
    let inner_opts = QuadOptions {
        abs_tol: 0.1 * opts.abs_tol / width.max(1.0),
        rel_tol: 0.1 * opts.rel_tol,
        max_subdivisions: opts.max_subdivisions,
    };
    integrate_with_errors(
        |t| {
            point[axis] = t;
            let inner = nested(f, lo, hi, &inner_opts, axis + 1, point, evals, all_converged);
            if !inner.converged {
                *all_converged = false;
            }
            (inner.value, inner.err)
        },
        lo[axis],
        hi[axis],
        opts,
    )
}

/// Composite trapezoid rule on a uniform grid of `n` intervals.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// Trapezoid rule on tabulated samples at arbitrary sorted abscissae.
pub fn trapezoid_samples(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}
