//! Critical offspring laws with `k^{-alpha-1}` tails.
//!
//! Two construction routes: a user-supplied weight sequence goes through the
//! admissibility fixed point `phi_g(Z) = Z - 1` (smallest root, tangency
//! flagged), or the parametric family with generating function
//! `g(s) = s + gamma (1-s)^alpha`, which is critical by construction and has
//! exactly the right tail. Either way the result is an [`OffspringLaw`]: a
//! pmf with a tabulated CDF up to [`K_CUT`], an analytic Gamma-ratio tail
//! beyond it, and an O(1) sampler (alias table over the low values, exact
//! tail inversion above).

use crate::rng::Rng;
use crate::special::{gamma, ln_gamma};

/// Tabulation limit of the CDF. Above it the stable-family tail is handled
/// in closed form, so the table costs ~16 MB once per law and sampling stays
/// exact on all of ℕ.
pub const K_CUT: usize = 1_000_000;

/// A sequence of tree weights `ĝ_k`, `k >= 1`.
pub enum WeightSequence {
    /// Explicit nonnegative entries, `entries[i]` being `ĝ_{i+1}`; zero
    /// beyond the end.
    Finite(Vec<f64>),
    /// Entries given by a rule, with a declared algebraic tail
    /// `ĝ_k ~ tail_constant * k^{-tail_exponent} * radius^{-k}`; the radius
    /// bounds the domain on which the generating series is summable.
    Callable {
        rule: Box<dyn Fn(u64) -> f64 + Send + Sync>,
        tail_exponent: f64,
        radius: f64,
    },
}

/// Errors from law construction.
#[derive(Clone, Debug, PartialEq)]
pub enum OffspringError {
    NegativeWeight { k: u64, value: f64 },
    /// `phi_g(x) > x - 1` everywhere the series converges: no admissible
    /// partition value.
    NotAdmissible,
    /// Parametric family out of its domain (`alpha` outside (1,2), or
    /// `gamma` outside (0, 1/alpha] so that `mu(1) < 0`).
    BadParameter { what: &'static str, value: f64 },
}

impl std::fmt::Display for OffspringError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OffspringError::NegativeWeight { k, value } => {
                write!(f, "weight g_{k} = {value} is negative")
            }
            OffspringError::NotAdmissible => {
                write!(f, "weight sequence is not admissible: phi_g(x) > x - 1 on its whole domain")
            }
            OffspringError::BadParameter { what, value } => {
                write!(f, "offspring parameter out of range: {what} = {value}")
            }
        }
    }
}

impl std::error::Error for OffspringError {}

impl WeightSequence {
    /// `ĝ_k` (k >= 1).
    pub fn weight(&self, k: u64) -> f64 {
        match self {
            WeightSequence::Finite(v) => {
                if k >= 1 && (k as usize) <= v.len() {
                    v[k as usize - 1]
                } else {
                    0.0
                }
            }
            WeightSequence::Callable { rule, .. } => rule(k),
        }
    }

    /// Generating series `phi_g(x) = sum_k ĝ_k x^k`; `+∞` (as f64) outside
    /// the radius of a callable sequence.
    pub fn series(&self, x: f64) -> f64 {
        match self {
            WeightSequence::Finite(v) => {
                // Horner from the top: sum g_{k} x^k = x * (g_1 + x * (g_2 + ...)).
                let mut acc = 0.0;
                for &g in v.iter().rev() {
                    acc = acc * x + g;
                }
                acc * x
            }
            WeightSequence::Callable { rule, radius, .. } => {
                if x >= *radius {
                    return f64::INFINITY;
                }
                let mut sum = 0.0;
                let mut xk = 1.0;
                for k in 1..=200_000u64 {
                    xk *= x;
                    let term = rule(k) * xk;
                    sum += term;
                    // Geometric domination inside the radius: stop once the
                    // term is dead relative to the sum.
                    if k > 8 && term < 1e-16 * (1.0 + sum) {
                        break;
                    }
                }
                sum
            }
        }
    }

    /// Derivative `phi_g'(x) = sum_k k ĝ_k x^{k-1}` of the series.
    pub fn series_deriv(&self, x: f64) -> f64 {
        match self {
            WeightSequence::Finite(v) => {
                let mut acc = 0.0;
                for (i, &g) in v.iter().enumerate().rev() {
                    acc = acc * x + (i + 1) as f64 * g;
                }
                acc
            }
            WeightSequence::Callable { rule, radius, .. } => {
                if x >= *radius {
                    return f64::INFINITY;
                }
                let mut sum = 0.0;
                let mut xk = 1.0;
                for k in 1..=200_000u64 {
                    let term = k as f64 * rule(k) * xk;
                    sum += term;
                    xk *= x;
                    if k > 8 && term < 1e-16 * (1.0 + sum) {
                        break;
                    }
                }
                sum
            }
        }
    }

    fn validate(&self) -> Result<(), OffspringError> {
        if let WeightSequence::Finite(v) = self {
            for (i, &g) in v.iter().enumerate() {
                if !(g >= 0.0) {
                    return Err(OffspringError::NegativeWeight { k: i as u64 + 1, value: g });
                }
            }
        }
        Ok(())
    }

    /// Parse a plain-text weight file: lines `k value`, unknown `k` meaning
    /// zero; `#` starts a comment.
    pub fn from_file(path: &std::path::Path) -> std::io::Result<WeightSequence> {
        let text = std::fs::read_to_string(path)?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let missing = || {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: expected `k value`", lineno + 1),
                )
            };
            let k: usize = it.next().ok_or_else(missing)?.parse().map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: bad index: {e}", lineno + 1),
                )
            })?;
            let v: f64 = it.next().ok_or_else(missing)?.parse().map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: bad value: {e}", lineno + 1),
                )
            })?;
            if k == 0 {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: weights start at k = 1", lineno + 1),
                ));
            }
            entries.push((k, v));
        }
        let kmax = entries.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let mut v = vec![0.0; kmax];
        for (k, val) in entries {
            v[k - 1] = val;
        }
        Ok(WeightSequence::Finite(v))
    }
}

/// Outcome of the admissibility fixed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admissibility {
    /// Smallest positive root of `phi_g(x) = x - 1`.
    pub z_g: f64,
    /// Double root: the sequence sits exactly on the criticality boundary.
    pub tangent: bool,
}

/// Smallest positive solution of `phi_g(x) = x - 1`, to relative 1e-12,
/// with tangency detection.
///
/// `f(x) = phi_g(x) - x + 1` is convex with `f(1) = phi_g(1) >= 0`, so it
/// either crosses zero twice (generic), touches once (the criticality
/// boundary), or stays positive (not admissible). The solver first locates
/// the minimum of `f` by bisecting the sign change of `f'` — staying on the
/// derivative keeps full precision even in the tangent case, where function
/// values near the minimum are flat to sqrt(eps) — and then classifies by
/// the sign of `f` there, bisecting on `[1, argmin]` for the smaller root
/// in the generic case.
pub fn solve_admissibility(w: &WeightSequence) -> Result<Admissibility, OffspringError> {
    w.validate()?;
    let f = |x: f64| w.series(x) - x + 1.0;
    let fp = |x: f64| w.series_deriv(x) - 1.0;
    if let WeightSequence::Finite(v) = w {
        if v.iter().all(|&g| g == 0.0) {
            // No weights: phi_g = 0, root of -x + 1 = 0.
            return Ok(Admissibility { z_g: 1.0, tangent: false });
        }
    }
    let radius = match w {
        WeightSequence::Finite(_) => f64::INFINITY,
        WeightSequence::Callable { radius, .. } => *radius,
    };
    // Find the minimum of f: bracket the sign change of f' by doubling.
    let cap = if radius.is_finite() { radius * (1.0 - 1e-9) } else { 1e12 };
    let xmin = if fp(1.0) >= 0.0 {
        // f already increasing at 1: its minimum on [1, ∞) is at 1.
        1.0
    } else {
        let mut hi = 2.0f64.min(cap);
        while fp(hi) < 0.0 && hi < cap {
            hi = (hi * 2.0).min(cap);
        }
        if fp(hi) < 0.0 {
            // Decreasing all the way to the domain edge: treat the edge as
            // the effective minimum (a root before it is still found below).
            hi
        } else {
            let mut lo = 1.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if fp(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let fmin = f(xmin);
    if fmin.abs() <= 1e-9 * (1.0 + xmin) {
        return Ok(Admissibility { z_g: xmin, tangent: true });
    }
    if fmin > 0.0 {
        return Err(OffspringError::NotAdmissible);
    }
    // Generic case: f(1) >= 0 > f(xmin) and f is decreasing on [1, xmin],
    // so the smallest root lies there; plain bisection to relative 1e-12.
    let (mut lo, mut hi) = (1.0, xmin);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(Admissibility { z_g: 0.5 * (lo + hi), tangent: false })
}

/// Analytic tail of the stable family: everything needed to evaluate
/// `P(K > k)` and partial means in closed form from `mu(k) =
/// c * Gamma(k - alpha) / Gamma(k + 1)` with `c = gamma_w / Gamma(-alpha)`.
#[derive(Clone, Copy, Debug)]
struct StableTail {
    alpha: f64,
    /// `gamma_w / Gamma(-alpha)`: the constant in `mu(k) ~ c k^{-alpha-1}`.
    c: f64,
}

impl StableTail {
    /// `sum_{j > k} mu(j) = c * Gamma(k+1-alpha) / (alpha * Gamma(k+1))`
    /// (telescoping of the Gamma-ratio recurrence).
    fn mass_above(&self, k: u64) -> f64 {
        let kf = k as f64;
        self.c / self.alpha * (ln_gamma(kf + 1.0 - self.alpha) - ln_gamma(kf + 1.0)).exp()
    }

    /// `sum_{j > k} j mu(j) = c * Gamma(k+1-alpha) / ((alpha-1) * Gamma(k))`.
    fn mean_above(&self, k: u64) -> f64 {
        let kf = k as f64;
        self.c / (self.alpha - 1.0) * (ln_gamma(kf + 1.0 - self.alpha) - ln_gamma(kf)).exp()
    }
}

/// A fully constructed offspring distribution.
///
/// Immutable after construction and shareable across workers; sampling
/// state lives entirely in the caller's RNG stream.
#[derive(Clone)]
pub struct OffspringLaw {
    /// `mu(k)` for `k <= K_CUT` (shorter for finite-support laws).
    pmf: Vec<f64>,
    /// `cdf[k] = P(K <= k)`, same length as `pmf`.
    cdf: Vec<f64>,
    /// Tail-corrected first moment.
    pub mean: f64,
    /// `alpha + 1` for the stable family, `None` for finite support.
    pub tail_index: Option<f64>,
    /// Partition-function root when built from a weight sequence.
    pub z_g: Option<f64>,
    tail: Option<StableTail>,
    /// Walker alias table over `k < ALIAS_N`, hit for all but ~5e-6 of
    /// draws; (cut probability, alias index).
    alias: Vec<(f64, u32)>,
    /// Mass of the alias block, `cdf[ALIAS_N - 1]`.
    alias_mass: f64,
    /// `ALIAS_N / alias_mass`, precomputed: the sampler sits in walk inner
    /// loops where a division costs as much as everything else combined.
    alias_scale: f64,
}

const ALIAS_N: usize = 256;

impl OffspringLaw {
    /// `mu(k)`, exact for all `k` (closed form beyond the table).
    pub fn pmf(&self, k: u64) -> f64 {
        if (k as usize) < self.pmf.len() {
            return self.pmf[k as usize];
        }
        match &self.tail {
            Some(t) => {
                // c * Gamma(k - alpha) / Gamma(k + 1) through log space.
                let kf = k as f64;
                t.c * (ln_gamma(kf - t.alpha) - ln_gamma(kf + 1.0)).exp()
            }
            None => 0.0,
        }
    }

    /// `P(K <= k)`.
    pub fn cdf(&self, k: u64) -> f64 {
        if (k as usize) < self.cdf.len() {
            return self.cdf[k as usize];
        }
        match &self.tail {
            Some(t) => 1.0 - t.mass_above(k),
            None => 1.0,
        }
    }

    /// Largest tabulated/support value (see `pmf` for beyond).
    pub fn support_hint(&self) -> u64 {
        self.pmf.len() as u64 - 1
    }

    /// Whether the law is critical (unit mean) to the construction
    /// tolerance; weight-built laws can legitimately be subcritical.
    pub fn is_critical(&self) -> bool {
        (self.mean - 1.0).abs() < 1e-9
    }

    fn finish(pmf: Vec<f64>, mean: f64, tail: Option<StableTail>, z_g: Option<f64>) -> Self {
        // Compensated accumulation: a million-term plain sum can drift by
        // ~1e-10, which would eat the 1e-12 mass-closure invariant.
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = crate::rng::KahanSum::new();
        for &p in &pmf {
            acc.add(p);
            cdf.push(acc.value());
        }
        let n = ALIAS_N.min(pmf.len());
        let alias_mass = cdf[n - 1];
        let alias = build_alias(&pmf[..n], alias_mass);
        OffspringLaw {
            tail_index: tail.as_ref().map(|t| t.alpha + 1.0),
            pmf,
            cdf,
            mean,
            z_g,
            tail,
            alias,
            alias_mass,
            alias_scale: n as f64 / alias_mass,
        }
    }

    /// One draw by exact inverse transform: alias table below
    /// [`ALIAS_N`], binary CDF search up to [`K_CUT`], closed-form
    /// Gamma-ratio tail inversion beyond.
    #[inline]
    pub fn sample(&self, rng: &mut Rng) -> u64 {
        let u = rng.uniform();
        if u < self.alias_mass {
            // Rescale u into the block, then one Walker step: the integer
            // part picks the slot, the fractional part decides the flip.
            let v = u * self.alias_scale;
            let slot = (v as usize).min(self.alias.len() - 1);
            let frac = v - slot as f64;
            let (cut, alias) = self.alias[slot];
            // Masked select instead of a branch: the cut test is a fair
            // coin, and its mispredictions would otherwise dominate the
            // whole draw.
            let take_alias = 0u64.wrapping_sub((frac >= cut) as u64);
            return (slot as u64 & !take_alias) | (alias as u64 & take_alias);
        }
        self.sample_beyond_alias(u)
    }

    /// Draws past the alias block: ~5e-6 of calls. Outlined so the fast
    /// path above stays small enough to inline into walk loops.
    #[inline(never)]
    fn sample_beyond_alias(&self, u: f64) -> u64 {
        // Binary search for the smallest k with cdf[k] >= u. Finite-support
        // laws land here even when u falls in the ulp-wide gap above the
        // accumulated cdf total.
        if u <= self.cdf[self.cdf.len() - 1] || self.tail.is_none() {
            let mut lo = ALIAS_N.min(self.cdf.len()) - 1;
            let mut hi = self.cdf.len() - 1;
            while lo + 1 < hi {
                let mid = (lo + hi) / 2;
                if self.cdf[mid] >= u {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi as u64;
        }
        // Tail: smallest k with P(K > k) <= 1 - u, monotone in k, by
        // bisection on the closed form (doubling first for the bracket).
        let t = self.tail.as_ref().unwrap();
        let target = 1.0 - u;
        let mut lo = self.pmf.len() as u64 - 1; // mass_above(lo) > target
        let mut hi = lo * 2;
        while t.mass_above(hi) > target {
            lo = hi;
            hi *= 2;
        }
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if t.mass_above(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Walker alias table for the sub-pmf `pmf[0..n]` of mass `mass`.
fn build_alias(pmf: &[f64], mass: f64) -> Vec<(f64, u32)> {
    let n = pmf.len();
    let mut scaled: Vec<f64> = pmf.iter().map(|&p| p / mass * n as f64).collect();
    let mut small: Vec<u32> = Vec::new();
    let mut large: Vec<u32> = Vec::new();
    for (i, &s) in scaled.iter().enumerate() {
        if s < 1.0 {
            small.push(i as u32);
        } else {
            large.push(i as u32);
        }
    }
    let mut table = vec![(1.0f64, 0u32); n];
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        table[s as usize] = (scaled[s as usize], l);
        scaled[l as usize] -= 1.0 - scaled[s as usize];
        if scaled[l as usize] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    for &i in small.iter().chain(large.iter()) {
        table[i as usize] = (1.0, i);
    }
    table
}

/// Law from an admissible weight sequence and its partition root:
/// `mu(0) = 1/Z_g`, `mu(k) = ĝ_k Z_g^{k-1}`. `z_g` comes from
/// [`solve_admissibility`]; passing anything else trips the mass assertion.
pub fn mu_from_weights(w: &WeightSequence, z_g: f64) -> Result<OffspringLaw, OffspringError> {
    let z = z_g;
    let kmax = match w {
        WeightSequence::Finite(v) => v.len(),
        WeightSequence::Callable { .. } => {
            // The fixed point pins total mass; truncate where the summand
            // is dead. Callable sequences are a convenience path, not the
            // hot path, so the scan is plain.
            let mut k = 1usize;
            while k < K_CUT && w.weight(k as u64) * z.powi(k as i32 - 1) > 1e-18 {
                k += 1;
            }
            k
        }
    };
    let mut pmf = vec![0.0; kmax + 1];
    pmf[0] = 1.0 / z;
    for k in 1..=kmax {
        pmf[k] = w.weight(k as u64) * z.powi(k as i32 - 1);
    }
    let total: f64 = pmf.iter().sum();
    assert!(
        (total - 1.0).abs() < 1e-12,
        "fixed point must normalize the law; got mass {total}"
    );
    let mean = pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
    Ok(OffspringLaw::finish(pmf, mean, None, Some(z)))
}

/// The parametric critical family: generating function
/// `g(s) = s + gamma_w (1 - s)^alpha`, i.e.
///
/// ```text
/// mu(0) = gamma_w,  mu(1) = 1 - gamma_w * alpha,
/// mu(k) = gamma_w * (-1)^k * binom(alpha, k)   (k >= 2),
/// ```
///
/// unit mean for every admissible `(alpha, gamma_w)`, and
/// `mu(k) ~ (gamma_w / Gamma(-alpha)) k^{-alpha-1}`.
pub fn stable_offspring(alpha: f64, gamma_w: f64) -> Result<OffspringLaw, OffspringError> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(OffspringError::BadParameter { what: "alpha", value: alpha });
    }
    if !(gamma_w > 0.0 && gamma_w <= 1.0 / alpha) {
        return Err(OffspringError::BadParameter { what: "gamma", value: gamma_w });
    }
    let mut pmf = vec![0.0; K_CUT + 1];
    pmf[0] = gamma_w;
    pmf[1] = 1.0 - gamma_w * alpha;
    // mu(2) = gamma_w alpha (alpha - 1) / 2, then the ratio recurrence
    // mu(k+1)/mu(k) = (k - alpha)/(k + 1).
    let mut m = gamma_w * alpha * (alpha - 1.0) / 2.0;
    pmf[2] = m;
    for k in 2..K_CUT {
        m *= (k as f64 - alpha) / (k as f64 + 1.0);
        pmf[k + 1] = m;
    }
    let tail = StableTail { alpha, c: gamma_w / gamma(-alpha) };
    // Tail-corrected mean; analytically exactly 1, recomputed numerically
    // so the invariant check below is a real check and not an assignment.
    let mut head_mean = crate::rng::KahanSum::new();
    for (k, &p) in pmf.iter().enumerate() {
        head_mean.add(k as f64 * p);
    }
    let mean = head_mean.value() + tail.mean_above(K_CUT as u64);
    Ok(OffspringLaw::finish(pmf, mean, Some(tail), None))
}

/// Default tilt of the stable family: `gamma_w = 1/alpha` maximizes
/// `mu(0)`, which maximizes the cascade sampler's acceptance rate.
pub fn stable_offspring_default(alpha: f64) -> Result<OffspringLaw, OffspringError> {
    stable_offspring(alpha, 1.0 / alpha)
}
