//! Probability vectors, entropy/divergence, and the finite-`n` bound formulas.
//!
//! The central quantity is the constrained overflow exponent
//! `E(a, R) = inf { D(b‖a) : H(b) >= R }`. Two routes compute it: a fast path
//! that solves `H(b_β) = R` along the tilted family `b_β ∝ a^β` by bisection,
//! and a simplex grid search that serves as the contractual reference. The
//! fast-path value is returned only when the two agree within `1e-4`;
//! otherwise the grid value wins.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A validated probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbabilities("empty vector".to_string()));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidProbabilities(
                "negative entry".to_string(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbabilities(format!("sum = {sum}")));
        }
        Ok(Self { probs })
    }

    /// Normalize a nonnegative vector.
    pub fn from_unnormalized(raw: &[f64]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 || raw.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidProbabilities(
                "cannot normalize".to_string(),
            ));
        }
        Ok(Self {
            probs: raw.iter().map(|&p| p / sum).collect(),
        })
    }

    pub fn uniform(d: usize) -> Self {
        Self {
            probs: vec![1.0 / d as f64; d],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn shannon_entropy(b: &ProbVector) -> f64 {
    entropy_slice(&b.probs)
}

fn entropy_slice(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    h.max(0.0)
}

/// Relative entropy `D(b‖a) = Σ b ln(b/a)` in nats; `+∞` when the support of
/// `b` is not contained in the support of `a`.
pub fn relative_entropy(b: &ProbVector, a: &ProbVector) -> f64 {
    assert_eq!(b.len(), a.len(), "relative entropy needs equal lengths");
    divergence_slices(&b.probs, &a.probs)
}

fn divergence_slices(b: &[f64], a: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&bi, &ai) in b.iter().zip(a.iter()) {
        if bi > 0.0 {
            if ai <= 0.0 {
                return f64::INFINITY;
            }
            d += bi * (bi / ai).ln();
        }
    }
    d.max(0.0)
}

/// How an [`ExponentResult`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentMethod {
    FastPath,
    GridOracle,
}

/// Value and argmin of the constrained divergence minimization.
#[derive(Debug, Clone)]
pub struct ExponentResult {
    pub value: f64,
    pub argmin: ProbVector,
    pub method: ExponentMethod,
}

/// Grid resolutions for the reference searches, reported in outputs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Base grid step on the 1-simplex (d = 2).
    pub step_d2: f64,
    /// Base grid step on the 2-simplex (d = 3).
    pub step_d3: f64,
    /// Local refinement rounds around the incumbent. Each level rescans a
    /// window of ten previous steps at a tenth of the step: near an active
    /// entropy constraint the divergence error is linear in the step, and
    /// the incumbent can sit several coarse steps from the argmin.
    pub refine_levels: usize,
    /// Grid step for the curvature constant search.
    pub c_step: f64,
    /// Entropy band `|H(a) - H(b)| < band` excluded from the constant search.
    pub c_entropy_band: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step_d2: 1e-3,
            step_d3: 5e-3,
            refine_levels: 3,
            c_step: 1e-4,
            c_entropy_band: 1e-6,
        }
    }
}

/// Max allowed disagreement between the fast path and the grid oracle.
pub const FAST_ORACLE_TOL: f64 = 1e-4;

/// `inf { D(b‖a) : H(b) >= R }` with default oracle resolution.
pub fn overflow_exponent(a: &ProbVector, rate: f64) -> Result<ExponentResult> {
    overflow_exponent_with(a, rate, &OracleConfig::default())
}

/// `inf { D(b‖a) : H(b) >= R }`.
///
/// `rate` may be negative (the constraint becomes vacuous); `rate > ln d`
/// is a precondition violation. For `d <= 3` the fast path is cross-checked
/// against the grid oracle and the oracle value is returned on disagreement
/// beyond [`FAST_ORACLE_TOL`]; larger alphabets use the fast path alone.
pub fn overflow_exponent_with(
    a: &ProbVector,
    rate: f64,
    cfg: &OracleConfig,
) -> Result<ExponentResult> {
    let d = a.len();
    let ln_d = (d as f64).ln();
    if rate > ln_d + 1e-9 {
        return Err(Error::InvalidRate(rate, ln_d));
    }
    if shannon_entropy(a) >= rate {
        return Ok(ExponentResult {
            value: 0.0,
            argmin: a.clone(),
            method: ExponentMethod::FastPath,
        });
    }
    let fast = tilted_minimum(a, rate);
    if d > 3 {
        let (value, argmin) = fast;
        return Ok(ExponentResult {
            value,
            argmin: ProbVector::new(argmin)?,
            method: ExponentMethod::FastPath,
        });
    }
    let oracle = grid_minimum(a, rate, cfg);
    if (fast.0 - oracle.0).abs() <= FAST_ORACLE_TOL {
        Ok(ExponentResult {
            value: fast.0,
            argmin: ProbVector::new(fast.1)?,
            method: ExponentMethod::FastPath,
        })
    } else {
        Ok(ExponentResult {
            value: oracle.0,
            argmin: ProbVector::new(oracle.1)?,
            method: ExponentMethod::GridOracle,
        })
    }
}

/// Constrained minimum along the tilted family `b_β ∝ a^β`, `β ∈ [0, 1]`.
///
/// `H(b_β)` decreases monotonically from `ln |supp a|` at `β = 0` to `H(a)`
/// at `β = 1`, so bisection pins `H(b_β) = R`. Stationarity of the Lagrangian
/// puts the constrained minimizer on this family; the grid oracle remains the
/// contractual reference.
fn tilted_minimum(a: &ProbVector, rate: f64) -> (f64, Vec<f64>) {
    let support: Vec<usize> = (0..a.len()).filter(|&i| a.probs[i] > 0.0).collect();
    let ln_supp = (support.len() as f64).ln();
    if rate > ln_supp + 1e-12 {
        // No feasible b has finite divergence.
        return (f64::INFINITY, ProbVector::uniform(a.len()).probs);
    }
    let tilt = |beta: f64| -> Vec<f64> {
        let mut b = vec![0.0; a.len()];
        let mut z = 0.0;
        for &i in &support {
            let w = a.probs[i].powf(beta);
            b[i] = w;
            z += w;
        }
        for x in b.iter_mut() {
            *x /= z;
        }
        b
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy_slice(&tilt(mid)) >= rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = tilt(lo);
    (divergence_slices(&b, &a.probs), b)
}

/// Simplex grid search with local refinement and lexicographic tie-breaking.
fn grid_minimum(a: &ProbVector, rate: f64, cfg: &OracleConfig) -> (f64, Vec<f64>) {
    match a.len() {
        2 => grid_minimum_d2(a, rate, cfg),
        3 => grid_minimum_d3(a, rate, cfg),
        _ => unreachable!("grid oracle only supports d <= 3"),
    }
}

fn grid_minimum_d2(a: &ProbVector, rate: f64, cfg: &OracleConfig) -> (f64, Vec<f64>) {
    let scan = |lo: f64, hi: f64, step: f64, mut best: (f64, Vec<f64>)| {
        let n = ((hi - lo) / step).round() as usize;
        for k in 0..=n {
            let t = (lo + k as f64 * step).clamp(0.0, 1.0);
            let b = [t, 1.0 - t];
            if entropy_slice(&b) + 1e-15 < rate {
                continue;
            }
            let d = divergence_slices(&b, &a.probs);
            if d < best.0 - 1e-15 || (d <= best.0 + 1e-15 && b.to_vec() < best.1) {
                best = (d, b.to_vec());
            }
        }
        best
    };
    let mut step = cfg.step_d2;
    let mut best = scan(0.0, 1.0, step, (f64::INFINITY, vec![2.0, 2.0]));
    for _ in 0..cfg.refine_levels {
        let center = best.1[0];
        let window = 10.0 * step;
        step /= 10.0;
        best = scan(
            (center - window).max(0.0),
            (center + window).min(1.0),
            step,
            best,
        );
    }
    best
}

fn grid_minimum_d3(a: &ProbVector, rate: f64, cfg: &OracleConfig) -> (f64, Vec<f64>) {
    let scan = |c: [f64; 3], half: f64, step: f64, mut best: (f64, Vec<f64>)| {
        let lo0 = (c[0] - half).max(0.0);
        let hi0 = (c[0] + half).min(1.0);
        let n0 = ((hi0 - lo0) / step).round() as usize;
        for k0 in 0..=n0 {
            let t0 = (lo0 + k0 as f64 * step).min(1.0);
            let lo1 = (c[1] - half).max(0.0);
            let hi1 = (c[1] + half).min(1.0 - t0);
            if lo1 > hi1 {
                continue;
            }
            let n1 = ((hi1 - lo1) / step).round() as usize;
            for k1 in 0..=n1 {
                let t1 = (lo1 + k1 as f64 * step).min(1.0 - t0);
                let t2 = (1.0 - t0 - t1).max(0.0);
                let b = [t0, t1, t2];
                if entropy_slice(&b) + 1e-15 < rate {
                    continue;
                }
                let d = divergence_slices(&b, &a.probs);
                if d < best.0 - 1e-15 || (d <= best.0 + 1e-15 && b.to_vec() < best.1) {
                    best = (d, b.to_vec());
                }
            }
        }
        best
    };
    let mut step = cfg.step_d3;
    let mut best = scan(
        [0.5, 0.5, 0.0],
        1.0,
        step,
        (f64::INFINITY, vec![2.0, 2.0, 2.0]),
    );
    for _ in 0..cfg.refine_levels {
        let center = [best.1[0], best.1[1], best.1[2]];
        let half = 10.0 * step;
        step /= 10.0;
        best = scan(center, half, step, best);
    }
    best
}

/// Curvature constant `C(a) = min_b D(b‖a) / |H(a) - H(b)|²`, grid-searched
/// with the entropy band `|H(a) - H(b)| < band` excluded.
pub fn constant_c(a: &ProbVector) -> Result<f64> {
    constant_c_with(a, &OracleConfig::default())
}

pub fn constant_c_with(a: &ProbVector, cfg: &OracleConfig) -> Result<f64> {
    if a.probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidProbabilities(
            "constant C needs full support".to_string(),
        ));
    }
    let ha = shannon_entropy(a);
    let ratio = |b: &[f64]| -> Option<f64> {
        let dh = (ha - entropy_slice(b)).abs();
        if dh < cfg.c_entropy_band {
            return None;
        }
        Some(divergence_slices(b, &a.probs) / (dh * dh))
    };
    let mut best = f64::INFINITY;
    match a.len() {
        2 => {
            let n = (1.0 / cfg.c_step).round() as usize;
            for k in 0..=n {
                let t = (k as f64 * cfg.c_step).min(1.0);
                if let Some(r) = ratio(&[t, 1.0 - t]) {
                    best = best.min(r);
                }
            }
        }
        3 => {
            // Coarser grid on the 2-simplex keeps this O(1e6).
            let step = cfg.c_step.max(1e-3);
            let n = (1.0 / step).round() as usize;
            for k0 in 0..=n {
                let t0 = (k0 as f64 * step).min(1.0);
                for k1 in 0..=(n - k0) {
                    let t1 = (k1 as f64 * step).min(1.0 - t0);
                    let t2 = (1.0 - t0 - t1).max(0.0);
                    if let Some(r) = ratio(&[t0, t1, t2]) {
                        best = best.min(r);
                    }
                }
            }
        }
        d => {
            return Err(Error::Unsupported(format!(
                "constant C grid search for d = {d}"
            )))
        }
    }
    Ok(best)
}

/// Grid overhead `f(n, δ) = δ + ln( (n+d)^{4d} / (⌊nδ⌋ ((ln d)/δ + 1)) )`.
pub fn f_overhead(n: usize, delta: f64, d: usize) -> Result<f64> {
    let floor_nd = (n as f64 * delta).floor();
    if floor_nd < 1.0 {
        return Err(Error::InfeasibleDelta(format!("⌊nδ⌋ = {floor_nd} < 1")));
    }
    let poly = ((n + d) as f64).powi(4 * d as i32);
    let ln_d = (d as f64).ln();
    Ok(delta + (poly / (floor_nd * (ln_d / delta + 1.0))).ln())
}

/// Dimension bound for the rate-`R` coding subspace: `(n+d)^{4d} e^{nR}`.
pub fn rank_bound(n: usize, d: usize, rate: f64) -> f64 {
    ((n + d) as f64).powi(4 * d as i32) * (n as f64 * rate).exp()
}

/// Bound on `1 - Tr P_{R,n} ρ̄^{⊗n}`:
/// `(n+d)^{4d} exp(-n inf{D(b‖a) : H(b) >= R})`.
pub fn trace_deficiency_bound(n: usize, d: usize, a: &ProbVector, rate: f64) -> Result<f64> {
    let exponent = overflow_exponent(a, rate)?;
    Ok(((n + d) as f64).powi(4 * d as i32) * (-(n as f64) * exponent.value).exp())
}

/// Bound on the fixed-length average error: twice [`trace_deficiency_bound`].
pub fn fixed_error_bound(n: usize, d: usize, a: &ProbVector, rate: f64) -> Result<f64> {
    Ok(2.0 * trace_deficiency_bound(n, d, a, rate)?)
}

/// Bound on the smeared-code average error:
/// `1 - (⌊n(δ-2δ')⌋/⌊nδ⌋) (1 - (n+d)^{4d} exp(-n C δ'²))^{3/2}`.
///
/// When the inner bracket is nonpositive the power term contributes 0 and the
/// bound degenerates to 1 (vacuous but well defined). Values may exceed
/// practical interest at small `n`; they are returned as-is.
pub fn varlen_error_bound(
    n: usize,
    d: usize,
    a: &ProbVector,
    delta: f64,
    delta_prime: f64,
) -> Result<f64> {
    if !(delta_prime > 0.0 && 2.0 * delta_prime < delta) {
        return Err(Error::InfeasibleDelta(format!(
            "need 0 < 2δ' < δ, got δ' = {delta_prime}, δ = {delta}"
        )));
    }
    let floor_nd = (n as f64 * delta).floor();
    if floor_nd < 1.0 {
        return Err(Error::InfeasibleDelta(format!("⌊nδ⌋ = {floor_nd} < 1")));
    }
    let c = constant_c(a)?;
    let poly = ((n + d) as f64).powi(4 * d as i32);
    let inner = 1.0 - poly * (-(n as f64) * c * delta_prime * delta_prime).exp();
    let term = if inner > 0.0 { inner.powf(1.5) } else { 0.0 };
    let ratio = (n as f64 * (delta - 2.0 * delta_prime)).floor() / floor_nd;
    Ok(1.0 - ratio * term)
}

/// Bound on the overflow probability of the smeared code:
/// `(n+d)^{4d} exp(-n inf{D(b‖a) : H(b) >= R - f(n,δ)/n})`.
///
/// The shifted rate may fall below 0 (the exponent is then 0) or above
/// `ln d` (no feasible distribution; the bound is 0).
pub fn varlen_overflow_bound(
    n: usize,
    d: usize,
    a: &ProbVector,
    delta: f64,
    rate: f64,
) -> Result<f64> {
    let shifted = rate - f_overhead(n, delta, d)? / n as f64;
    let ln_d = (d as f64).ln();
    if shifted > ln_d + 1e-9 {
        return Ok(0.0);
    }
    let exponent = overflow_exponent(a, shifted)?;
    Ok(((n + d) as f64).powi(4 * d as i32) * (-(n as f64) * exponent.value).exp())
}
