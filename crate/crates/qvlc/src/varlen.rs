//! Variable-length universal codes built from rate grids.
//!
//! A rate grid `0 = α₁ < α₂ < ... < α_{l+1} = ln d` partitions the isotypic
//! blocks of `(C^d)^{⊗n}` by normalized-diagram entropy into half-open bins
//! `[α_i, α_{i+1})` (the top bin is closed), giving projectors that sum to
//! the identity. The naive code measures this partition and embeds; it fails
//! exactly when the source entropy sits on a grid knot.
//!
//! The smeared code draws an integer `k` in `{1..⌊nδ⌋}` uniformly and uses
//! the shifted grid `α(k/n)_i = k/n + (i-2)δ` (i = 2..l) with `l` chosen so
//! that `δ = ln d / (l-1)` holds exactly. Outcomes are pairs `(k, i)`; the
//! coding length of an outcome is `ln|Ω| + ln rank(P_i^{(k)})` nats with
//! `|Ω| = ⌊nδ⌋·l`.
//!
//! Average error admits two routes kept deliberately separate: the closed
//! form `1 - Σ_seq p Σ_{k,i} (1/⌊nδ⌋) (Tr P_i^{(k)} ρ⃗)^{3/2}` (valid because
//! `√(√ρ⃗ P ρ⃗ P √ρ⃗) = √ρ⃗ P √ρ⃗`), and the definitional Bures computation on
//! post-measurement states. They must agree to 1e-8.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fixed::{
    sample_categorical, sequence_matrix, sequence_pure_vector, ErrorEstimate,
    ErrorOptions, EstimateMethod,
};
use crate::linalg::{
    average_state, identity, max_abs_diff, sqrt_psd, C64, CMat, DensityMatrix, Ensemble,
};
use crate::schur::{IsotypicDecomposition, ENTROPY_SELECTION_TOL};
use crate::{Error, Result};

/// A strictly increasing rate grid with exact endpoints `0` and `ln d`.
#[derive(Debug, Clone)]
pub struct RateGrid {
    d: usize,
    alphas: Vec<f64>,
}

impl RateGrid {
    /// Build from interior knots; endpoints are added exactly.
    pub fn from_knots(d: usize, interior: &[f64]) -> Result<Self> {
        let ln_d = (d as f64).ln();
        let mut alphas = Vec::with_capacity(interior.len() + 2);
        alphas.push(0.0);
        alphas.extend_from_slice(interior);
        alphas.push(ln_d);
        let grid = Self { d, alphas };
        grid.validate()?;
        Ok(grid)
    }

    /// The shifted grid of the smeared code: `α_i = k/n + (i-2)δ`, i = 2..l.
    pub fn smeared(d: usize, n: usize, k: usize, l: usize, delta: f64) -> Result<Self> {
        assert!(k >= 1 && l >= 2);
        let ln_d = (d as f64).ln();
        let mut alphas = Vec::with_capacity(l + 1);
        alphas.push(0.0);
        for i in 2..=l {
            alphas.push(k as f64 / n as f64 + (i - 2) as f64 * delta);
        }
        alphas.push(ln_d);
        let grid = Self { d, alphas };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        if self.alphas.len() < 2 {
            return Err(Error::InvalidGrid("needs at least two points".to_string()));
        }
        let ln_d = (self.d as f64).ln();
        if self.alphas[0] != 0.0 {
            return Err(Error::InvalidGrid("first point must be 0".to_string()));
        }
        if *self.alphas.last().unwrap() != ln_d {
            return Err(Error::InvalidGrid(format!(
                "last point must be ln d = {ln_d}"
            )));
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(
                "points must be strictly increasing".to_string(),
            ));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Number of bins `l`.
    pub fn bins(&self) -> usize {
        self.alphas.len() - 1
    }

    /// Bin of an entropy value: largest `i` with `α_i <= h` (with slack),
    /// clamped to the closed top bin.
    fn bin_of(&self, h: f64) -> usize {
        let l = self.bins();
        let mut bin = 0;
        for i in 1..l {
            if self.alphas[i] <= h + ENTROPY_SELECTION_TOL {
                bin = i;
            } else {
                break;
            }
        }
        bin.min(l - 1)
    }
}

/// One bin of a partition code: the blocks whose normalized-diagram entropy
/// falls in `[lo, hi)`.
#[derive(Debug, Clone)]
pub struct CodeBin {
    pub lo: f64,
    pub hi: f64,
    /// Indices into the decomposition's block list.
    pub block_indices: Vec<usize>,
    pub projector: CMat,
    pub rank: usize,
}

/// The naive partition code for one rate grid.
#[derive(Debug, Clone)]
pub struct NaiveCode {
    pub n: usize,
    pub d: usize,
    pub grid: RateGrid,
    pub bins: Vec<CodeBin>,
    dec: Arc<IsotypicDecomposition>,
}

impl NaiveCode {
    pub fn new(grid: RateGrid, n: usize, d: usize) -> Result<Self> {
        if grid.d() != d {
            return Err(Error::InvalidGrid(format!(
                "grid is for d = {}, code for d = {d}",
                grid.d()
            )));
        }
        let dec = IsotypicDecomposition::shared(n, d)?;
        Ok(Self::from_decomposition(grid, dec))
    }

    pub(crate) fn from_decomposition(grid: RateGrid, dec: Arc<IsotypicDecomposition>) -> Self {
        let dim = dec.dim();
        let l = grid.bins();
        let mut bins: Vec<CodeBin> = (0..l)
            .map(|i| CodeBin {
                lo: grid.alphas()[i],
                hi: grid.alphas()[i + 1],
                block_indices: Vec::new(),
                projector: CMat::zeros(dim, dim),
                rank: 0,
            })
            .collect();
        for (bi, block) in dec.blocks.iter().enumerate() {
            let slot = grid.bin_of(block.entropy);
            bins[slot].block_indices.push(bi);
            bins[slot].projector += &block.projector;
            bins[slot].rank += block.rank;
        }
        Self {
            n: dec.n,
            d: dec.d,
            grid,
            bins,
            dec,
        }
    }

    pub fn decomposition(&self) -> &IsotypicDecomposition {
        &self.dec
    }

    /// Per-bin traces from per-block traces.
    fn bin_traces(&self, block_traces: &[f64]) -> Vec<f64> {
        self.bins
            .iter()
            .map(|b| b.block_indices.iter().map(|&i| block_traces[i]).sum())
            .collect()
    }

    /// Max deviation of `Σ_i P_i` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        let dim = self.dec.dim();
        let mut acc = CMat::zeros(dim, dim);
        for b in &self.bins {
            acc += &b.projector;
        }
        max_abs_diff(&acc, &identity(dim))
    }

    /// Exact (or sampled) average error of the naive code:
    /// `1 - Σ_seq p Σ_i (Tr P_i ρ⃗)^{3/2}`.
    pub fn average_error(&self, source: &Ensemble, opts: &ErrorOptions) -> Result<ErrorEstimate> {
        source_matches(source, self.d)?;
        let per_sequence = |seq: &[usize]| -> f64 {
            let traces = sequence_block_traces(&self.dec, source, seq);
            let kept: f64 = self
                .bin_traces(&traces)
                .iter()
                .map(|&t| t.max(0.0).powf(1.5))
                .sum();
            (1.0 - kept).max(0.0)
        };
        estimate_over_sequences(source, self.n, opts, per_sequence)
    }
}

/// The randomized-grid code: uniformly drawn shift `k`, one partition per `k`.
#[derive(Debug, Clone)]
pub struct SmearedCode {
    pub n: usize,
    pub d: usize,
    /// The effective spacing `ln d / (l-1)` (recomputed from the request).
    pub delta: f64,
    /// Number of bins per grid.
    pub l: usize,
    /// Number of grid shifts `⌊nδ⌋`.
    pub k_max: usize,
    partitions: Vec<NaiveCode>,
    dec: Arc<IsotypicDecomposition>,
}

impl SmearedCode {
    /// Build with requested spacing `delta`. The bin count is
    /// `l = ⌈ln d / δ⌉ + 1` and `δ` is recomputed as `ln d / (l-1)`, so the
    /// defining relation holds exactly for an integer `l`.
    pub fn new(n: usize, d: usize, delta: f64) -> Result<Self> {
        if delta <= 0.0 {
            return Err(Error::InfeasibleDelta(format!("δ = {delta}")));
        }
        let ln_d = (d as f64).ln();
        let l = ((ln_d / delta).ceil() as usize) + 1;
        let delta_eff = ln_d / (l - 1) as f64;
        let k_max = (n as f64 * delta_eff).floor() as usize;
        if k_max < 1 {
            return Err(Error::InfeasibleDelta(format!(
                "⌊nδ⌋ = 0 at n = {n}, effective δ = {delta_eff:.6}"
            )));
        }
        let dec = IsotypicDecomposition::shared(n, d)?;
        let partitions = (1..=k_max)
            .map(|k| {
                let grid = RateGrid::smeared(d, n, k, l, delta_eff)?;
                Ok(NaiveCode::from_decomposition(grid, Arc::clone(&dec)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            d,
            delta: delta_eff,
            l,
            k_max,
            partitions,
            dec,
        })
    }

    /// The partition used for shift `k` (0-based: `k = 0` is the paper's
    /// `k = 1`).
    pub fn partition(&self, k: usize) -> &NaiveCode {
        &self.partitions[k]
    }

    pub fn decomposition(&self) -> &IsotypicDecomposition {
        &self.dec
    }

    /// Outcome count `|Ω| = ⌊nδ⌋ · l`.
    pub fn outcome_count(&self) -> usize {
        self.k_max * self.l
    }

    /// All outcomes `(k, i)` (0-based) with positive rank.
    pub fn outcomes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, part) in self.partitions.iter().enumerate() {
            for (i, bin) in part.bins.iter().enumerate() {
                if bin.rank > 0 {
                    out.push((k, i));
                }
            }
        }
        out
    }

    /// Rank of the outcome subspace.
    pub fn outcome_rank(&self, k: usize, i: usize) -> usize {
        self.partitions[k].bins[i].rank
    }

    /// Coding length `ln|Ω| + ln rank(P_i^{(k)})` in nats.
    pub fn coding_length(&self, k: usize, i: usize) -> Result<f64> {
        let rank = self.outcome_rank(k, i);
        if rank == 0 {
            return Err(Error::ZeroRankOutcome(k, i));
        }
        Ok((self.outcome_count() as f64).ln() + (rank as f64).ln())
    }

    /// Max deviation of `Σ_{k,i} (1/⌊nδ⌋) P_i^{(k)}` from the identity.
    pub fn povm_deviation(&self) -> f64 {
        let dim = self.dec.dim();
        let scale = C64::new(1.0 / self.k_max as f64, 0.0);
        let mut acc = CMat::zeros(dim, dim);
        for part in &self.partitions {
            for bin in &part.bins {
                acc += &bin.projector * scale;
            }
        }
        max_abs_diff(&acc, &identity(dim))
    }

    /// Outcome distribution `P(k, i) = (1/⌊nδ⌋) Tr P_i^{(k)} ρ̄^{⊗n}` for the
    /// average state of the source. Zero-rank outcomes are excluded (they
    /// occur with probability 0).
    pub fn outcome_distribution(
        &self,
        source: &Ensemble,
        opts: &ErrorOptions,
    ) -> Result<BTreeMap<(usize, usize), f64>> {
        source_matches(source, self.d)?;
        self.outcome_distribution_avg(&average_state(source), opts)
    }

    /// Same, from an explicit average state.
    pub fn outcome_distribution_avg(
        &self,
        avg: &DensityMatrix,
        opts: &ErrorOptions,
    ) -> Result<BTreeMap<(usize, usize), f64>> {
        if avg.dim() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "average state dim {} vs d = {}",
                avg.dim(),
                self.d
            )));
        }
        let avg_n = avg.tensor_power(self.n, opts.max_dim)?;
        let block_traces = self.dec.block_traces(avg_n.matrix());
        let mut map = BTreeMap::new();
        let weight = 1.0 / self.k_max as f64;
        for (k, part) in self.partitions.iter().enumerate() {
            let bins = part.bin_traces(&block_traces);
            for (i, t) in bins.into_iter().enumerate() {
                if part.bins[i].rank > 0 {
                    map.insert((k, i), weight * t.max(0.0));
                }
            }
        }
        Ok(map)
    }

    /// Closed-form average error
    /// `1 - Σ_seq p Σ_{k,i} (1/⌊nδ⌋) (Tr P_i^{(k)} ρ⃗)^{3/2}`.
    pub fn average_error_exact(
        &self,
        source: &Ensemble,
        opts: &ErrorOptions,
    ) -> Result<ErrorEstimate> {
        source_matches(source, self.d)?;
        let weight = 1.0 / self.k_max as f64;
        let per_sequence = |seq: &[usize]| -> f64 {
            let traces = sequence_block_traces(&self.dec, source, seq);
            let mut kept = 0.0;
            for part in &self.partitions {
                for t in part.bin_traces(&traces) {
                    kept += weight * t.max(0.0).powf(1.5);
                }
            }
            (1.0 - kept).max(0.0)
        };
        estimate_over_sequences(source, self.n, opts, per_sequence)
    }

    /// Definitional average error: probability-weighted squared Bures
    /// distance between each sequence and its decoded post-measurement state,
    /// summed over outcomes.
    ///
    /// For a mixed sequence the fidelity against the post-measurement state
    /// `P ρ⃗ P / t` is evaluated as `Σ|eig(√ρ⃗ P √ρ⃗)| / √t` — the Bures
    /// fidelity written through the factorization `σ = (P√ρ⃗)(P√ρ⃗)†/t`. It
    /// coincides with the closed form exactly when `√ρ⃗ P √ρ⃗` is PSD, which
    /// is the identity this route is meant to check independently.
    pub fn average_error_definitional(
        &self,
        source: &Ensemble,
        opts: &ErrorOptions,
    ) -> Result<ErrorEstimate> {
        source_matches(source, self.d)?;
        let weight = 1.0 / self.k_max as f64;
        let all_pure = source.all_pure();
        let per_sequence = |seq: &[usize]| -> f64 {
            if all_pure {
                // For a pure sequence the post-measurement fidelity against
                // the input is sqrt(Tr P ρ⃗) outcome by outcome.
                let psi = sequence_pure_vector(source, seq).expect("pure members");
                let mut err = 0.0;
                for part in &self.partitions {
                    for bin in &part.bins {
                        if bin.rank == 0 {
                            continue;
                        }
                        let t = psi.dotc(&(&bin.projector * &psi)).re.clamp(0.0, 1.0);
                        err += weight * t * (1.0 - t.sqrt());
                    }
                }
                err
            } else {
                let rho = sequence_matrix(source, seq);
                let sr = match sqrt_psd(&rho, 1e-12) {
                    Ok(m) => m,
                    Err(_) => return 1.0,
                };
                let mut err = 0.0;
                for part in &self.partitions {
                    for bin in &part.bins {
                        if bin.rank == 0 {
                            continue;
                        }
                        let half = &bin.projector * &sr;
                        let core = &sr * half;
                        let t = core.trace().re;
                        if t <= 1e-15 {
                            continue;
                        }
                        let eigs = core.clone().symmetric_eigenvalues();
                        let f: f64 = eigs.iter().map(|v| v.abs()).sum::<f64>() / t.sqrt();
                        err += weight * t * (1.0 - f.min(1.0)).max(0.0);
                    }
                }
                err
            }
        };
        estimate_over_sequences(source, self.n, opts, per_sequence)
    }

    /// `P{ coding length / n >= rate }` under the source's average state.
    pub fn overflow_probability(
        &self,
        source: &Ensemble,
        rate: f64,
        opts: &ErrorOptions,
    ) -> Result<f64> {
        let dist = self.outcome_distribution(source, opts)?;
        self.overflow_from_distribution(&dist, rate)
    }

    /// Overflow mass of an already-computed outcome distribution.
    pub fn overflow_from_distribution(
        &self,
        dist: &BTreeMap<(usize, usize), f64>,
        rate: f64,
    ) -> Result<f64> {
        let n = self.n as f64;
        let mut mass = 0.0;
        for (&(k, i), &p) in dist {
            let len = self.coding_length(k, i)?;
            if len / n >= rate - 1e-12 {
                mass += p;
            }
        }
        Ok(mass)
    }
}

/// `(δ_n, δ'_n) = (n^{-1/6}, n^{-1/3})`.
///
/// Feasibility `0 < 2δ' < δ` requires `n > 64`; the harness substitutes a
/// configured pair below that.
pub fn schedule(n: usize) -> (f64, f64) {
    let x = n as f64;
    (x.powf(-1.0 / 6.0), x.powf(-1.0 / 3.0))
}

/// Error series of the naive code over a range of block lengths (the
/// boundary-demolition probe).
pub fn naive_error_series(
    source: &Ensemble,
    grid: &RateGrid,
    ns: &[usize],
    opts: &ErrorOptions,
) -> Result<Vec<f64>> {
    ns.iter()
        .map(|&n| {
            let code = NaiveCode::new(grid.clone(), n, grid.d())?;
            Ok(code.average_error(source, opts)?.value)
        })
        .collect()
}

/// Error series of smeared codes at per-`n` spacings.
pub fn smeared_error_series(
    source: &Ensemble,
    cells: &[(usize, f64)],
    opts: &ErrorOptions,
) -> Result<Vec<f64>> {
    cells
        .iter()
        .map(|&(n, delta)| {
            let code = SmearedCode::new(n, source.dim(), delta)?;
            Ok(code.average_error_exact(source, opts)?.value)
        })
        .collect()
}

/// A full evaluation of one smeared code against one source.
#[derive(Debug, Clone)]
pub struct VarlenReport {
    /// `P(k, i)` for positive-rank outcomes (0-based indices).
    pub outcome_probs: BTreeMap<(usize, usize), f64>,
    /// Coding length in nats per positive-rank outcome.
    pub coding_lengths: BTreeMap<(usize, usize), f64>,
    pub average_error_exact: f64,
    pub average_error_definitional: Option<f64>,
    /// `(rate, overflow probability)` per requested rate.
    pub overflow: Vec<(f64, f64)>,
    pub povm_deviation: f64,
    pub delta: f64,
    pub l: usize,
    pub k_max: usize,
}

/// Whether to run the expensive definitional error route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DefinitionalPolicy {
    /// Run when the source is pure or the space is small (`d^n <= 64`).
    #[default]
    Auto,
    Always,
    Never,
}

impl VarlenReport {
    pub fn compute(
        code: &SmearedCode,
        source: &Ensemble,
        rates: &[f64],
        opts: &ErrorOptions,
        definitional: DefinitionalPolicy,
    ) -> Result<Self> {
        let outcome_probs = code.outcome_distribution(source, opts)?;
        let mut coding_lengths = BTreeMap::new();
        for &(k, i) in outcome_probs.keys().collect::<Vec<_>>() {
            coding_lengths.insert((k, i), code.coding_length(k, i)?);
        }
        let average_error_exact = code.average_error_exact(source, opts)?.value;
        let run_definitional = match definitional {
            DefinitionalPolicy::Always => true,
            DefinitionalPolicy::Never => false,
            DefinitionalPolicy::Auto => {
                source.all_pure() || code.d.pow(code.n as u32) <= 64
            }
        };
        let average_error_definitional = if run_definitional {
            Some(code.average_error_definitional(source, opts)?.value)
        } else {
            None
        };
        let mut overflow = Vec::with_capacity(rates.len());
        for &r in rates {
            overflow.push((r, code.overflow_from_distribution(&outcome_probs, r)?));
        }
        Ok(Self {
            outcome_probs,
            coding_lengths,
            average_error_exact,
            average_error_definitional,
            overflow,
            povm_deviation: code.povm_deviation(),
            delta: code.delta,
            l: code.l,
            k_max: code.k_max,
        })
    }

    /// Total outcome probability (should be 1 within 1e-10).
    pub fn total_probability(&self) -> f64 {
        self.outcome_probs.values().sum()
    }
}

// --- shared internals -------------------------------------------------------

fn source_matches(source: &Ensemble, d: usize) -> Result<()> {
    if source.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "source dim {} vs d = {}",
            source.dim(),
            d
        )));
    }
    Ok(())
}

/// `Tr Π_λ ρ⃗` for every block of one product sequence.
fn sequence_block_traces(
    dec: &IsotypicDecomposition,
    source: &Ensemble,
    seq: &[usize],
) -> Vec<f64> {
    if let Some(psi) = sequence_pure_vector(source, seq) {
        dec.blocks
            .iter()
            .map(|b| psi.dotc(&(&b.projector * &psi)).re.clamp(0.0, 1.0))
            .collect()
    } else {
        dec.block_traces(&sequence_matrix(source, seq))
    }
}

/// Exact enumeration under the cap, seeded Monte Carlo beyond it.
///
/// The exact path evaluates sequences in parallel but always sums the
/// per-sequence terms in index order, so results do not depend on the
/// thread count.
fn estimate_over_sequences<F: Fn(&[usize]) -> f64 + Sync>(
    source: &Ensemble,
    n: usize,
    opts: &ErrorOptions,
    per_sequence: F,
) -> Result<ErrorEstimate> {
    use rayon::prelude::*;
    let seq_count = (source.len() as f64).powi(n as i32);
    if seq_count <= opts.exact_cap as f64 {
        let m = source.len() as u64;
        let probs: Vec<f64> = source.items().iter().map(|(p, _)| *p).collect();
        let terms: Vec<f64> = (0..seq_count as u64)
            .into_par_iter()
            .map(|idx| {
                let mut rem = idx;
                let mut prob = 1.0;
                let mut seq = vec![0usize; n];
                for slot in seq.iter_mut().rev() {
                    *slot = (rem % m) as usize;
                    rem /= m;
                    prob *= probs[*slot];
                }
                if prob > 0.0 {
                    prob * per_sequence(&seq)
                } else {
                    0.0
                }
            })
            .collect();
        let total = terms.iter().sum();
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
            let e = per_sequence(&seq);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{varlen_overflow_bound, ProbVector};
    use crate::linalg::{random_density, random_density_conditioned, CVec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn mixed_pair(seed: u64) -> Ensemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ensemble::new(vec![
            (0.6, random_density_conditioned(&mut rng, 2)),
            (0.4, random_density_conditioned(&mut rng, 2)),
        ])
        .unwrap()
    }

    #[test]
    fn naive_single_bin_is_identity() {
        let grid = RateGrid::from_knots(2, &[]).unwrap();
        let code = NaiveCode::new(grid, 3, 2).unwrap();
        assert_eq!(code.bins.len(), 1);
        assert_eq!(code.bins[0].rank, 8);
        assert!(max_abs_diff(&code.bins[0].projector, &identity(8)) < 1e-10);
    }

    #[test]
    fn naive_binning_splits_blocks() {
        // n = 2, d = 2, knots {0.5}: bin 1 holds (2) with H = 0,
        // bin 2 holds (1,1) with H = ln 2 >= 0.5
        let grid = RateGrid::from_knots(2, &[0.5]).unwrap();
        let code = NaiveCode::new(grid, 2, 2).unwrap();
        assert_eq!(code.bins[0].rank, 3);
        assert_eq!(code.bins[1].rank, 1);
        assert!(code.completeness_deviation() < 1e-12);
    }

    #[test]
    fn naive_ranks_total_for_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=6 {
            let mut knots: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * LN2).collect();
            knots.sort_by(f64::total_cmp);
            knots.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let grid = RateGrid::from_knots(2, &knots).unwrap();
            let code = NaiveCode::new(grid, n, 2).unwrap();
            let total: usize = code.bins.iter().map(|b| b.rank).sum();
            assert_eq!(total, 1 << n);
            assert!(code.completeness_deviation() < 1e-10);
        }
    }

    #[test]
    fn smeared_parameter_reconciliation() {
        // requested δ = 0.5 at n = 4: l = 3, δ = ln2/2, k_max = 1
        let code = SmearedCode::new(4, 2, 0.5).unwrap();
        assert_eq!(code.l, 3);
        assert!((code.delta - LN2 / 2.0).abs() < 1e-15);
        assert_eq!(code.k_max, 1);

        // requested δ = 0.25 at n = 8: l = 4, δ = ln2/3, k_max = 1
        let code = SmearedCode::new(8, 2, 0.25).unwrap();
        assert_eq!(code.l, 4);
        assert!((code.delta - LN2 / 3.0).abs() < 1e-15);
        assert_eq!(code.k_max, 1);

        // infeasible: effective ⌊nδ⌋ = 0
        assert!(matches!(
            SmearedCode::new(2, 2, 0.5),
            Err(Error::InfeasibleDelta(_))
        ));
    }

    #[test]
    fn smeared_povm_complete() {
        for (n, delta) in [(3usize, 0.7), (4, 0.5), (6, 0.3), (8, 0.25)] {
            let code = SmearedCode::new(n, 2, delta).unwrap();
            assert!(
                code.povm_deviation() < 1e-10,
                "n={n} δ={delta}: {}",
                code.povm_deviation()
            );
        }
    }

    #[test]
    fn outcome_distribution_uniform_source_counts_ranks() {
        let code = SmearedCode::new(4, 2, 0.5).unwrap();
        let src = Ensemble::single(DensityMatrix::maximally_mixed(2));
        let dist = code
            .outcome_distribution(&src, &ErrorOptions::default())
            .unwrap();
        for (&(k, i), &p) in &dist {
            let want = code.outcome_rank(k, i) as f64 / (16.0 * code.k_max as f64);
            assert!((p - want).abs() < 1e-12);
        }
        let total: f64 = dist.values().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn outcome_distribution_matches_sampling_oracle() {
        // Monte Carlo measurement simulation: draw a sequence from p^n, then
        // an outcome from its conditional distribution; 3σ agreement.
        let code = SmearedCode::new(4, 2, 0.5).unwrap();
        let src = mixed_pair(11);
        let opts = ErrorOptions::default();
        let dist = code.outcome_distribution(&src, &opts).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let probs: Vec<f64> = src.items().iter().map(|(p, _)| *p).collect();
        let samples = 40_000usize;
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let weight = 1.0 / code.k_max as f64;
        for _ in 0..samples {
            let seq: Vec<usize> = (0..4).map(|_| sample_categorical(&mut rng, &probs)).collect();
            let rho = sequence_matrix(&src, &seq);
            let traces = code.dec.block_traces(&rho);
            let mut outcome_probs = Vec::new();
            for (k, part) in code.partitions.iter().enumerate() {
                for (i, t) in part.bin_traces(&traces).into_iter().enumerate() {
                    outcome_probs.push(((k, i), (weight * t).max(0.0)));
                }
            }
            let flat: Vec<f64> = outcome_probs.iter().map(|x| x.1).collect();
            let pick = sample_categorical(&mut rng, &flat);
            *counts.entry(outcome_probs[pick].0).or_insert(0) += 1;
        }
        for (&key, &p) in &dist {
            let freq = *counts.get(&key).unwrap_or(&0) as f64 / samples as f64;
            let sigma = (p * (1.0 - p) / samples as f64).sqrt().max(1e-6);
            assert!(
                (freq - p).abs() < 3.5 * sigma,
                "outcome {key:?}: freq {freq} vs p {p} (σ = {sigma})"
            );
        }
    }

    #[test]
    fn error_zero_for_single_pure_source() {
        let psi = CVec::from_vec(vec![C64::new(0.8, 0.0), C64::new(0.0, 0.6)]);
        let src = Ensemble::single(DensityMatrix::from_pure(&psi).unwrap());
        for (n, delta) in [(4usize, 0.5), (6, 0.3)] {
            let code = SmearedCode::new(n, 2, delta).unwrap();
            let err = code
                .average_error_exact(&src, &ErrorOptions::default())
                .unwrap();
            assert!(err.value < 1e-10, "n={n}: {}", err.value);
        }
    }

    #[test]
    fn exact_equals_definitional_on_mixed_sources() {
        let opts = ErrorOptions::default();
        for (seed, n, delta) in [(21u64, 3usize, 0.7), (22, 4, 0.5), (23, 5, 0.4)] {
            let src = mixed_pair(seed);
            let code = SmearedCode::new(n, 2, delta).unwrap();
            let exact = code.average_error_exact(&src, &opts).unwrap().value;
            let defn = code.average_error_definitional(&src, &opts).unwrap().value;
            assert!(
                (exact - defn).abs() < 1e-8,
                "n={n}: exact {exact} vs definitional {defn}"
            );
        }
    }

    #[test]
    fn coding_length_single_bin() {
        // l = 1 is impossible for the smeared code (l >= 2), so check the
        // formula on the naive single-outcome layout directly: with the
        // full-space outcome the length is ln k_max·l + n ln d ... use the
        // smallest smeared code instead and verify against ranks.
        let code = SmearedCode::new(4, 2, 0.5).unwrap();
        for (k, i) in code.outcomes() {
            let want = (code.outcome_count() as f64).ln()
                + (code.outcome_rank(k, i) as f64).ln();
            assert!((code.coding_length(k, i).unwrap() - want).abs() < 1e-12);
        }
        // zero-rank outcome errors
        let empty = code
            .partitions
            .iter()
            .enumerate()
            .find_map(|(k, p)| p.bins.iter().position(|b| b.rank == 0).map(|i| (k, i)));
        if let Some((k, i)) = empty {
            assert!(matches!(
                code.coding_length(k, i),
                Err(Error::ZeroRankOutcome(..))
            ));
        }
    }

    #[test]
    fn overflow_extremes_and_bound() {
        let code = SmearedCode::new(8, 2, 0.25).unwrap();
        let src = Ensemble::single(DensityMatrix::from_diagonal(&[0.9, 0.1]).unwrap());
        let opts = ErrorOptions::default();
        // R = 0: every outcome overflows
        let p0 = code.overflow_probability(&src, 0.0, &opts).unwrap();
        assert!((p0 - 1.0).abs() < 1e-10);
        // R beyond the longest possible length: none do
        let max_rate = ((code.outcome_count() as f64).ln() + 8.0 * LN2) / 8.0 + 0.1;
        let p1 = code.overflow_probability(&src, max_rate, &opts).unwrap();
        assert_eq!(p1, 0.0);
        // intermediate rate bounded by the exponent bound
        let a = ProbVector::new(vec![0.9, 0.1]).unwrap();
        for rate in [0.4, 0.6, 0.69] {
            let p = code.overflow_probability(&src, rate, &opts).unwrap();
            let bound = varlen_overflow_bound(8, 2, &a, code.delta, rate).unwrap();
            assert!(p <= bound + 1e-12, "R={rate}: {p} vs bound {bound}");
        }
        // monotone in R
        let mut prev = 2.0;
        for step in 0..=10 {
            let rate = step as f64 / 10.0 * LN2;
            let p = code.overflow_probability(&src, rate, &opts).unwrap();
            assert!(p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn outcome_distribution_depends_only_on_average_state() {
        // two ensembles with the same average state
        let zero = DensityMatrix::basis_state(2, 0);
        let one = DensityMatrix::basis_state(2, 1);
        let plus = {
            let v = CVec::from_vec(vec![
                C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            ]);
            DensityMatrix::from_pure(&v).unwrap()
        };
        let minus = {
            let v = CVec::from_vec(vec![
                C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                C64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
            ]);
            DensityMatrix::from_pure(&v).unwrap()
        };
        let e1 = Ensemble::new(vec![(0.5, zero), (0.5, one)]).unwrap();
        let e2 = Ensemble::new(vec![(0.5, plus), (0.5, minus)]).unwrap();
        let code = SmearedCode::new(4, 2, 0.5).unwrap();
        let opts = ErrorOptions::default();
        let d1 = code.outcome_distribution(&e1, &opts).unwrap();
        let d2 = code.outcome_distribution(&e2, &opts).unwrap();
        for (a, b) in d1.iter().zip(d2.iter()) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_values() {
        let (d, dp) = schedule(64);
        assert!((d - 0.5).abs() < 1e-15);
        assert!((dp - 0.25).abs() < 1e-15);
        // boundary: 2δ' = δ exactly at n = 64
        assert!((2.0 * dp - d).abs() < 1e-15);

        let (d, dp) = schedule(729);
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert!((dp - 1.0 / 9.0).abs() < 1e-15);
        assert!(2.0 * dp < d);
    }

    #[test]
    fn report_computes_all_fields() {
        let code = SmearedCode::new(4, 2, 0.5).unwrap();
        let src = mixed_pair(31);
        let report = VarlenReport::compute(
            &code,
            &src,
            &[0.3, 0.5, 0.7],
            &ErrorOptions::default(),
            DefinitionalPolicy::Always,
        )
        .unwrap();
        assert!((report.total_probability() - 1.0).abs() < 1e-10);
        assert!(report.povm_deviation < 1e-10);
        let defn = report.average_error_definitional.unwrap();
        assert!((report.average_error_exact - defn).abs() < 1e-8);
        assert_eq!(report.overflow.len(), 3);
        for w in report.overflow.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(RateGrid::from_knots(2, &[0.3, 0.3]).is_err());
        assert!(RateGrid::from_knots(2, &[0.8]).is_err()); // above ln 2
        assert!(RateGrid::from_knots(2, &[0.2, 0.5]).is_ok());
    }
}
