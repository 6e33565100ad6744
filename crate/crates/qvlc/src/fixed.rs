//! The universal fixed-length code at rate `R`.
//!
//! The encoder projects onto the rate-`R` coding subspace and dumps the
//! missing weight onto a fixed pad vector inside it:
//! `E(ρ) = P ρ P + Tr((I - P) ρ) |0><0|`, with `|0>` the all-zeros product
//! basis vector (it lies in the symmetric block, which every rate projector
//! contains). The decoder is the embedding back into `(C^d)^{⊗n}`.
//!
//! Average error over an i.i.d. source is the probability-weighted squared
//! Bures distance between each product sequence and its round trip. Sources
//! whose member count to the `n`-th power exceeds the exact cap are handled
//! by seeded Monte Carlo with a reported standard error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exponents::{fixed_error_bound, ProbVector};
use crate::linalg::{
    average_state, fidelity_raw, kron, trace_product, C64, CMat, CVec, DensityMatrix, Ensemble,
    DEFAULT_MAX_DIM,
};
use crate::schur::{rate_projector, RateProjector};
use crate::{Error, Result};

/// Caps and seeding for average-error evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ErrorOptions {
    /// Enumerate exactly while `members^n` stays at or below this.
    pub exact_cap: usize,
    /// Monte Carlo sample count beyond the cap.
    pub mc_samples: usize,
    /// Seed for the Monte Carlo path.
    pub seed: u64,
    /// Cap on any dense matrix dimension.
    pub max_dim: usize,
}

impl Default for ErrorOptions {
    fn default() -> Self {
        Self {
            exact_cap: 4096,
            mc_samples: 10_000,
            seed: 0,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

/// How an average error value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    Exact,
    MonteCarlo,
}

/// An average error with provenance.
#[derive(Debug, Clone, Copy)]
pub struct ErrorEstimate {
    pub value: f64,
    /// Standard error of the mean (Monte Carlo only).
    pub std_err: Option<f64>,
    pub method: EstimateMethod,
    /// Sequences enumerated or samples drawn.
    pub terms: usize,
}

/// The fixed-length encoder/decoder pair at a given rate.
#[derive(Debug, Clone)]
pub struct FixedLengthCode {
    projector: RateProjector,
    /// Ambient index of the pad vector (the all-zeros product state).
    pad_index: usize,
}

impl FixedLengthCode {
    pub fn new(rate: f64, n: usize, d: usize) -> Result<Self> {
        let projector = rate_projector(rate, n, d)?;
        let code = Self {
            projector,
            pad_index: 0,
        };
        // The pad must lie in the coding subspace: P e0 = e0.
        let dim = code.dim();
        let mut dev = 0.0f64;
        for i in 0..dim {
            let want = if i == code.pad_index { 1.0 } else { 0.0 };
            dev = dev.max((code.projector.projector[(i, code.pad_index)] - C64::new(want, 0.0)).norm());
        }
        if dev > 1e-10 {
            return Err(Error::SupportLeakage(dev));
        }
        Ok(code)
    }

    pub fn rate(&self) -> f64 {
        self.projector.rate
    }

    pub fn n(&self) -> usize {
        self.projector.n
    }

    pub fn d(&self) -> usize {
        self.projector.d
    }

    pub fn dim(&self) -> usize {
        self.projector.projector.nrows()
    }

    pub fn rank(&self) -> usize {
        self.projector.rank
    }

    pub fn rate_projector(&self) -> &RateProjector {
        &self.projector
    }

    /// Index of the designated pad basis vector within the retained subspace
    /// ordering (the all-zeros product state comes first).
    pub fn pad_state_index(&self) -> usize {
        self.pad_index
    }

    /// `E(ρ) = P ρ P + Tr((I-P)ρ) |0><0|`. Trace preserving.
    pub fn encode(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "encode: state dim {} vs code dim {}",
                rho.dim(),
                self.dim()
            )));
        }
        Ok(DensityMatrix::new_unchecked(self.encode_raw(rho.matrix())))
    }

    fn encode_raw(&self, rho: &CMat) -> CMat {
        let p = &self.projector.projector;
        let retained = trace_product(p, rho).re;
        let mut out = p * rho * p;
        let pad_weight = (1.0 - retained).max(0.0);
        out[(self.pad_index, self.pad_index)] += C64::new(pad_weight, 0.0);
        out
    }

    /// The embedding back into the ambient space. Rejects states whose
    /// support leaks out of the coding subspace.
    pub fn decode(&self, sigma: &DensityMatrix) -> Result<DensityMatrix> {
        if sigma.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "decode: state dim {} vs code dim {}",
                sigma.dim(),
                self.dim()
            )));
        }
        let p = &self.projector.projector;
        let leak = 1.0 - trace_product(p, sigma.matrix()).re;
        if leak > 1e-10 {
            return Err(Error::SupportLeakage(leak));
        }
        Ok(sigma.clone())
    }

    /// Exact (or Monte Carlo) average of `b²(ρ⃗, D∘E(ρ⃗))` over `p^n`.
    pub fn average_error(&self, source: &Ensemble, opts: &ErrorOptions) -> Result<ErrorEstimate> {
        let n = self.n();
        if source.dim() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "source dim {} vs d = {}",
                source.dim(),
                self.d()
            )));
        }
        let seq_count = (source.len() as f64).powi(n as i32);
        if seq_count <= opts.exact_cap as f64 {
            let mut total = 0.0;
            for_each_sequence(source, n, |_, prob, seq| {
                if prob > 0.0 {
                    total += prob * self.sequence_error(source, seq);
                }
            });
            Ok(ErrorEstimate {
                value: total,
                std_err: None,
                method: EstimateMethod::Exact,
                terms: seq_count as usize,
            })
        } else if opts.mc_samples > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let probs: Vec<f64> = source.items().iter().map(|(p, _)| *p).collect();
            let mut seq = vec![0usize; n];
            let (mut sum, mut sumsq) = (0.0, 0.0);
            for _ in 0..opts.mc_samples {
                for slot in seq.iter_mut() {
                    *slot = sample_categorical(&mut rng, &probs);
                }
                let e = self.sequence_error(source, &seq);
                sum += e;
                sumsq += e * e;
            }
            let m = opts.mc_samples as f64;
            let mean = sum / m;
            let var = ((sumsq / m) - mean * mean).max(0.0);
            Ok(ErrorEstimate {
                value: mean,
                std_err: Some((var / m).sqrt()),
                method: EstimateMethod::MonteCarlo,
                terms: opts.mc_samples,
            })
        } else {
            Err(Error::CapExceeded(seq_count as usize, opts.exact_cap))
        }
    }

    /// `b²(ρ⃗, D∘E(ρ⃗))` for one product sequence.
    fn sequence_error(&self, source: &Ensemble, seq: &[usize]) -> f64 {
        let p = &self.projector.projector;
        if let Some(psi) = sequence_pure_vector(source, seq) {
            // σ = (Pψ)(Pψ)† + w e₀e₀†; <ψ|σ|ψ> = t² + w |ψ₀|²
            let p_psi = p * &psi;
            let t = psi.dotc(&p_psi).re.clamp(0.0, 1.0);
            let w = 1.0 - t;
            let pad_overlap = psi[self.pad_index].norm_sqr();
            let f = (t * t + w * pad_overlap).max(0.0).sqrt();
            return (1.0 - f.min(1.0)).max(0.0);
        }
        let rho = sequence_matrix(source, seq);
        let sigma = self.encode_raw(&rho);
        let f = fidelity_raw(&rho, &sigma, 1e-12).unwrap_or(0.0);
        (1.0 - f.min(1.0)).max(0.0)
    }
}

/// The three quantities of the fixed-length error chain, in order:
/// exact error <= twice the average-state deficiency <= the exponent bound.
#[derive(Debug, Clone)]
pub struct ChainReport {
    pub exact: ErrorEstimate,
    /// `2 (1 - Tr ρ̄^{⊗n} P)`.
    pub twice_deficiency: f64,
    /// `2 (n+d)^{4d} exp(-n inf{D(b‖a) : H(b) >= R})`.
    pub exponent_bound: f64,
    /// Entropy of the average state (nats).
    pub source_entropy: f64,
    /// Both inequalities hold (up to 1e-12 slack).
    pub ordered_ok: bool,
    pub diagnostics: Vec<String>,
}

impl FixedLengthCode {
    /// Evaluate the chain `ε <= 2(1 - Tr ρ̄^{⊗n} P) <= bound`.
    ///
    /// Violations are reported as diagnostics, not errors; they indicate
    /// implementation bugs rather than invalid inputs.
    pub fn error_bound_chain(&self, source: &Ensemble, opts: &ErrorOptions) -> Result<ChainReport> {
        let exact = self.average_error(source, opts)?;
        let avg = average_state(source);
        let avg_n = avg.tensor_power(self.n(), opts.max_dim)?;
        let retained = trace_product(&self.projector.projector, avg_n.matrix()).re;
        let twice_deficiency = 2.0 * (1.0 - retained).max(0.0);
        let spectrum = ProbVector::from_unnormalized(&avg.spectrum())?;
        let exponent_bound = fixed_error_bound(self.n(), self.d(), &spectrum, self.rate())?;
        let mut diagnostics = Vec::new();
        if exact.value > twice_deficiency + 1e-12 {
            diagnostics.push(format!(
                "exact error {} exceeds twice the deficiency {}",
                exact.value, twice_deficiency
            ));
        }
        if twice_deficiency > exponent_bound + 1e-12 {
            diagnostics.push(format!(
                "twice the deficiency {twice_deficiency} exceeds the exponent bound {exponent_bound}"
            ));
        }
        Ok(ChainReport {
            exact,
            twice_deficiency,
            exponent_bound,
            source_entropy: avg.entropy(),
            ordered_ok: diagnostics.is_empty(),
            diagnostics,
        })
    }
}

// --- sequence helpers shared with the variable-length modules --------------

/// Visit every member-index sequence of length `n` with its probability.
pub(crate) fn for_each_sequence<F: FnMut(usize, f64, &[usize])>(
    source: &Ensemble,
    n: usize,
    mut f: F,
) {
    let m = source.len();
    let probs: Vec<f64> = source.items().iter().map(|(p, _)| *p).collect();
    let total = (m as u64).pow(n as u32);
    let mut seq = vec![0usize; n];
    for idx in 0..total {
        let mut rem = idx;
        let mut prob = 1.0;
        for slot in seq.iter_mut().rev() {
            *slot = (rem % m as u64) as usize;
            rem /= m as u64;
            prob *= probs[*slot];
        }
        f(idx as usize, prob, &seq);
    }
}

/// Product state matrix for one sequence.
pub(crate) fn sequence_matrix(source: &Ensemble, seq: &[usize]) -> CMat {
    let mut out = source.items()[seq[0]].1.matrix().clone();
    for &i in &seq[1..] {
        out = kron(&out, source.items()[i].1.matrix());
    }
    out
}

/// Product state vector when every member in the sequence is pure.
pub(crate) fn sequence_pure_vector(source: &Ensemble, seq: &[usize]) -> Option<CVec> {
    let vecs: Vec<CVec> = source
        .items()
        .iter()
        .map(|(_, s)| s.as_pure())
        .collect::<Option<Vec<_>>>()?;
    let mut out = vecs[seq[0]].clone();
    for &i in &seq[1..] {
        out = kron_vec(&out, &vecs[i]);
    }
    Some(out)
}

pub(crate) fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

pub(crate) fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
