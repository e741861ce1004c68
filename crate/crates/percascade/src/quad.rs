//! Adaptive Gauss–Kronrod quadrature and golden-section maximization.
//!
//! The integrands in this crate are tame away from the boundary but carry
//! algebraic edge singularities (`y^{1-alpha}` near 0) and live on the half
//! line, so the driver deliberately exposes the two substitutions the rest
//! of the crate relies on instead of a generic improper-integral facade:
//!
//! * half line `[0, ∞)`: the rational map `y = t/(1-t)`, after any analytic
//!   tail has been split off by the caller;
//! * algebraic singularity `t^e` at 0: the power map `t = s^m` with `m`
//!   large enough that the transformed integrand is C², which restores the
//!   nominal convergence rate of the rule.
//!
//! The kernel is the classic (G7, K15) pair with the standard error
//! rescaling; subdivision always splits the segment with the largest error
//! estimate.

/// Tolerances and budget for one adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSpec {
    /// Target relative tolerance on the accumulated value.
    pub rel_tol: f64,
    /// Target absolute tolerance; the effective target is
    /// `abs_tol + rel_tol * |value|`.
    pub abs_tol: f64,
    /// Maximum number of segment subdivisions before giving up.
    pub max_subdivisions: usize,
    /// Substitution rule used for `[0, ∞)` integrals.
    pub tail_map: TailMap,
}

/// How a half-line integral is pulled back to a bounded interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailMap {
    /// `y = t/(1-t)`, `dy = dt/(1-t)^2`, mapping `[0, ∞)` onto `[0, 1)`.
    RationalOneMinusT,
}

impl QuadratureSpec {
    /// Defaults used by the verification suites: tight enough that the
    /// 1e-8-level identity checks are dominated by model error, not
    /// quadrature error.
    pub fn default_tight() -> Self {
        QuadratureSpec {
            rel_tol: 1e-12,
            abs_tol: 1e-13,
            max_subdivisions: 400,
            tail_map: TailMap::RationalOneMinusT,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::default_tight()
    }
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    /// Accumulated error estimate (sum of per-segment estimates).
    pub error: f64,
    /// Whether the error target was met within the subdivision budget.
    pub converged: bool,
    pub subdivisions: usize,
}

// K15 abscissae (positive half) and weights; G7 weights. These are the
// standard QUADPACK constants.
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One (G7, K15) evaluation on `[a, b]`: returns `(result, err_estimate)`.
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut fv1 = [0.0f64; 7];
    let mut fv2 = [0.0f64; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        fv1[j] = f(center - dx);
        fv2[j] = f(center + dx);
    }
    let mut resk = WGK[7] * fc;
    let mut resabs = resk.abs();
    let mut resg = WG[3] * fc;
    for j in 0..3 {
        let jtw = 2 * j + 1;
        resg += WG[j] * (fv1[jtw] + fv2[jtw]);
    }
    for j in 0..7 {
        resk += WGK[j] * (fv1[j] + fv2[j]);
        resabs += WGK[j] * (fv1[j].abs() + fv2[j].abs());
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let result = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let raw = ((resk - resg) * half).abs();
    (result, rescale_error(raw, resabs, resasc))
}

/// QUADPACK error rescaling: sharpens the raw |K15 - G7| difference on
/// smooth segments and floors it at the round-off level of the integrand.
fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = err.abs();
    if resasc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    let min_err = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && min_err > err {
        err = min_err;
    }
    err
}

#[derive(Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> QuadResult {
    let (value, error) = qk15(&f, a, b);
    let mut segs = vec![Segment { a, b, value, error }];
    let mut subdivisions = 0;
    loop {
        let total_value: f64 = segs.iter().map(|s| s.value).sum();
        let total_error: f64 = segs.iter().map(|s| s.error).sum();
        let target = spec.abs_tol + spec.rel_tol * total_value.abs();
        if total_error <= target {
            return QuadResult {
                value: total_value,
                error: total_error,
                converged: true,
                subdivisions,
            };
        }
        if subdivisions >= spec.max_subdivisions {
            return QuadResult {
                value: total_value,
                error: total_error,
                converged: false,
                subdivisions,
            };
        }
        // Split the segment with the largest error estimate.
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let Segment { a, b, .. } = segs.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (v1, e1) = qk15(&f, a, mid);
        let (v2, e2) = qk15(&f, mid, b);
        segs.push(Segment { a, b: mid, value: v1, error: e1 });
        segs.push(Segment { a: mid, b, value: v2, error: e2 });
        subdivisions += 1;
    }
}

/// `∫_0^∞ f(y) dy` through the rational substitution of the spec's
/// `tail_map`. The caller is responsible for having split off whatever part
/// of the tail it wants handled analytically; the map assumes `f` decays
/// fast enough that `f(t/(1-t))/(1-t)^2` stays bounded near `t = 1`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, spec: &QuadratureSpec) -> QuadResult {
    let TailMap::RationalOneMinusT = spec.tail_map;
    adaptive(
        |t| {
            let om = 1.0 - t;
            let y = t / om;
            let fy = f(y);
            // Once f has underflowed to zero the segment contributes
            // nothing; dividing by om^2 (which can itself underflow first)
            // would manufacture 0/0 = NaN out of thin air.
            if fy == 0.0 {
                return 0.0;
            }
            fy / (om * om)
        },
        0.0,
        1.0,
        spec,
    )
}

/// `∫_0^b g(t) t^e dt` with `g` smooth and `e > -1`, via `t = s^m`.
///
/// The power `m` is chosen so the transformed integrand vanishes at least
/// quadratically at 0; the Kronrod rule then converges at its nominal rate
/// instead of stalling on the algebraic edge.
pub fn integrate_power_singularity<F: Fn(f64) -> f64>(
    g: F,
    e: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> QuadResult {
    assert!(e > -1.0, "non-integrable singularity: exponent {e}");
    let m = ((3.0 / (1.0 + e)).ceil() as i32).max(1);
    let mf = f64::from(m);
    let upper = b.powf(1.0 / mf);
    adaptive(
        |s| {
            let t = s.powi(m);
            g(t) * mf * s.powf(mf * (e + 1.0) - 1.0)
        },
        0.0,
        upper,
        spec,
    )
}

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
///
/// Refines until the bracket is shorter than `xtol`. Returns the argmax and
/// the value. For our objectives (strictly concave Legendre integrands) the
/// caller brackets first with [`bracket_max`].
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (lo + hi);
    (xm, f(xm))
}

/// Scans `n` grid points and returns `(left, right)` bracketing the grid
/// argmax, or `None` when the maximum sits on the boundary of `[a, b]`
/// (no interior bracket — the objective is not unimodal-with-interior-max
/// on this interval).
pub fn bracket_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> Option<(f64, f64)> {
    assert!(n >= 3);
    let h = (b - a) / (n - 1) as f64;
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(a + h * i as f64);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    if best == 0 || best == n - 1 {
        return None;
    }
    Some((a + h * (best - 1) as f64, a + h * (best + 1) as f64))
}
