//! Compression of shared bipartite states by operations on Alice's side only.
//!
//! The fixed-length and smeared codes act as `E ⊗ id_B` on states of
//! `(H_A ⊗ H_B)^{⊗n}`. Joint-space computations reorder tensor factors from
//! the interleaved layout `(A B)(A B)...` to the grouped layout
//! `A^{⊗n} ⊗ B^{⊗n}` through an explicit index permutation; with `dim_B = 1`
//! everything reduces bit-for-bit to the single-system code.
//!
//! Outcome statistics depend on the joint source only through the reduced
//! average state: `Tr[(P ⊗ I_B^{⊗n}) ρ⃗] = Tr_A[P · Tr_B ρ⃗]`, an identity
//! this module also checks through two independent routes.


use crate::exponents::ProbVector;
use crate::fixed::{
    for_each_sequence, kron_vec, ErrorEstimate, ErrorOptions, EstimateMethod, FixedLengthCode,
};
use crate::linalg::{
    average_state, fidelity_raw, identity, kron, partial_trace_b, sqrt_psd, C64, CMat, CVec,
    DensityMatrix, Ensemble,
};
use crate::schur::RateProjector;
use crate::varlen::{DefinitionalPolicy, SmearedCode, VarlenReport};
use crate::{Error, Result};

/// A state on `H_A ⊗ H_B` with its declared factorization.
#[derive(Debug, Clone)]
pub struct BipartiteState {
    dim_a: usize,
    dim_b: usize,
    state: DensityMatrix,
}

impl BipartiteState {
    pub fn new(dim_a: usize, dim_b: usize, state: DensityMatrix) -> Result<Self> {
        if dim_a * dim_b != state.dim() {
            return Err(Error::DimensionMismatch(format!(
                "bipartite state: {} != {} * {}",
                state.dim(),
                dim_a,
                dim_b
            )));
        }
        Ok(Self {
            dim_a,
            dim_b,
            state,
        })
    }

    pub fn from_pure(dim_a: usize, dim_b: usize, psi: &CVec) -> Result<Self> {
        Self::new(dim_a, dim_b, DensityMatrix::from_pure(psi)?)
    }

    /// Pure state with the given Schmidt weights on the diagonal basis
    /// `Σ √w_i |ii>` (both sides of dimension `weights.len()`).
    pub fn schmidt(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidProbabilities(format!(
                "Schmidt weights sum to {sum}"
            )));
        }
        let d = weights.len();
        let mut psi = CVec::zeros(d * d);
        for (i, &w) in weights.iter().enumerate() {
            psi[i * d + i] = C64::new(w.sqrt(), 0.0);
        }
        Self::from_pure(d, d, &psi)
    }

    /// The two-qubit Bell state `(|00> + |11>)/√2`.
    pub fn bell() -> Self {
        Self::schmidt(&[0.5, 0.5]).expect("valid weights")
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    /// `Tr_B` of the state.
    pub fn reduced_a(&self) -> DensityMatrix {
        partial_trace_b(&self.state, self.dim_a, self.dim_b).expect("validated dims")
    }
}

/// An ensemble of bipartite states with common factor dimensions.
#[derive(Debug, Clone)]
pub struct BipartiteEnsemble {
    dim_a: usize,
    dim_b: usize,
    items: Vec<(f64, BipartiteState)>,
}

impl BipartiteEnsemble {
    pub fn new(items: Vec<(f64, BipartiteState)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidEnsemble("empty ensemble".to_string()));
        }
        let dim_a = items[0].1.dim_a;
        let dim_b = items[0].1.dim_b;
        if items
            .iter()
            .any(|(_, s)| s.dim_a != dim_a || s.dim_b != dim_b)
        {
            return Err(Error::InvalidEnsemble(
                "members have mixed factor dimensions".to_string(),
            ));
        }
        let total: f64 = items.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > 1e-12 || items.iter().any(|(p, _)| *p < 0.0) {
            return Err(Error::InvalidEnsemble(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self {
            dim_a,
            dim_b,
            items,
        })
    }

    pub fn single(state: BipartiteState) -> Self {
        Self {
            dim_a: state.dim_a,
            dim_b: state.dim_b,
            items: vec![(1.0, state)],
        }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn items(&self) -> &[(f64, BipartiteState)] {
        &self.items
    }

    /// The joint states as a plain ensemble on dimension `dim_a * dim_b`.
    pub fn joint_ensemble(&self) -> Ensemble {
        Ensemble::new(
            self.items
                .iter()
                .map(|(p, s)| (*p, s.state.clone()))
                .collect(),
        )
        .expect("validated items")
    }

    /// The reduced states `Tr_B ρ_i` as an ensemble on `H_A`.
    pub fn reduced_ensemble(&self) -> Ensemble {
        Ensemble::new(
            self.items
                .iter()
                .map(|(p, s)| (*p, s.reduced_a()))
                .collect(),
        )
        .expect("validated items")
    }
}

/// Eigenvalues of `Tr_B ρ̄`, sorted descending.
pub fn reduced_spectrum(e: &BipartiteEnsemble) -> ProbVector {
    let avg = average_state(&e.reduced_ensemble());
    ProbVector::from_unnormalized(&avg.spectrum()).expect("spectrum of a state")
}

/// Entanglement entropy `H(Tr_B φ)` of a pure bipartite state, in nats.
///
/// Mixed inputs are rejected: for them this quantity would not measure
/// entanglement.
pub fn entanglement_entropy(phi: &BipartiteState) -> Result<f64> {
    let purity = phi.state.purity();
    if purity < 1.0 - 1e-10 {
        return Err(Error::NotPure(purity));
    }
    Ok(phi.reduced_a().entropy())
}

/// Index map from the interleaved layout `(a₁b₁)(a₂b₂)...` to the grouped
/// layout `a₁..a_n b₁..b_n` on `(H_A ⊗ H_B)^{⊗n}`.
pub fn regroup_permutation(dim_a: usize, dim_b: usize, n: usize) -> Vec<usize> {
    let joint = dim_a * dim_b;
    let total = joint.pow(n as u32);
    let dim_bn = dim_b.pow(n as u32);
    let mut map = vec![0usize; total];
    for (idx, slot) in map.iter_mut().enumerate() {
        let mut rem = idx;
        let mut a_part = 0usize;
        let mut b_part = 0usize;
        // digits come out least significant (last factor) first
        let mut a_digits = vec![0usize; n];
        let mut b_digits = vec![0usize; n];
        for j in (0..n).rev() {
            let pair = rem % joint;
            rem /= joint;
            a_digits[j] = pair / dim_b;
            b_digits[j] = pair % dim_b;
        }
        for j in 0..n {
            a_part = a_part * dim_a + a_digits[j];
            b_part = b_part * dim_b + b_digits[j];
        }
        *slot = a_part * dim_bn + b_part;
    }
    map
}

fn regroup_vector(psi: &CVec, map: &[usize]) -> CVec {
    let mut out = CVec::zeros(psi.len());
    for (i, &target) in map.iter().enumerate() {
        out[target] = psi[i];
    }
    out
}

fn regroup_matrix(m: &CMat, map: &[usize]) -> CMat {
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(map[i], map[j])] = m[(i, j)];
        }
    }
    out
}

/// Both sides of `Tr[(P ⊗ I_B^{⊗n}) φ^{⊗n}] = Tr_A[P (Tr_B φ)^{⊗n}]` for a
/// pure bipartite state, computed by independent routes: a joint-space
/// quadratic form on the regrouped product vector, and an A-space trace of
/// the reduced tensor power.
pub fn reduced_trace_identity_check(
    p: &RateProjector,
    phi: &BipartiteState,
    n: usize,
    max_dim: usize,
) -> Result<(f64, f64)> {
    if p.n != n || p.d != phi.dim_a {
        return Err(Error::DimensionMismatch(format!(
            "projector is for (n={}, d={}), state has dim_a = {}",
            p.n, p.d, phi.dim_a
        )));
    }
    let psi = phi
        .state
        .as_pure()
        .ok_or(Error::NotPure(phi.state.purity()))?;
    let joint_dim = (phi.dim_a * phi.dim_b).pow(n as u32);
    if joint_dim > max_dim * max_dim {
        return Err(Error::CapExceeded(joint_dim, max_dim * max_dim));
    }
    // joint route
    let mut product = psi.clone();
    for _ in 1..n {
        product = kron_vec(&product, &psi);
    }
    let map = regroup_permutation(phi.dim_a, phi.dim_b, n);
    let grouped = regroup_vector(&product, &map);
    let w = reshape_to_matrix(&grouped, phi.dim_a.pow(n as u32), phi.dim_b.pow(n as u32));
    let pw = &p.projector * &w;
    let mut lhs = 0.0;
    for (x, y) in w.iter().zip(pw.iter()) {
        lhs += (x.conj() * y).re;
    }
    // reduced route
    let reduced_n = phi.reduced_a().tensor_power(n, max_dim)?;
    let rhs = crate::linalg::trace_product(&p.projector, reduced_n.matrix()).re;
    Ok((lhs, rhs))
}

/// Column-major reshape of a grouped vector into `rows x cols` with the row
/// index the A part: entry `(a, b)` is `v[a * cols + b]`.
fn reshape_to_matrix(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols);
    CMat::from_fn(rows, cols, |a, b| v[a * cols + b])
}

/// Average error of an A-side fixed-length code on a bipartite source:
/// mean of `b²(ρ⃗, (D∘E ⊗ I_B^{⊗n})(ρ⃗))` over `p^n`.
pub fn local_fixed_error(
    code: &FixedLengthCode,
    source: &BipartiteEnsemble,
    opts: &ErrorOptions,
) -> Result<ErrorEstimate> {
    if source.dim_a() != code.d() {
        return Err(Error::DimensionMismatch(format!(
            "source dim_a {} vs code d = {}",
            source.dim_a(),
            code.d()
        )));
    }
    let n = code.n();
    let joint = source.joint_ensemble();
    let seq_count = (joint.len() as f64).powi(n as i32);
    if seq_count > opts.exact_cap as f64 {
        return Err(Error::CapExceeded(seq_count as usize, opts.exact_cap));
    }
    let dim_an = source.dim_a().pow(n as u32);
    let dim_bn = source.dim_b().pow(n as u32);
    if dim_an.checked_mul(dim_bn).is_none_or(|j| j > opts.max_dim * opts.max_dim) {
        return Err(Error::CapExceeded(dim_an * dim_bn, opts.max_dim * opts.max_dim));
    }
    let map = regroup_permutation(source.dim_a(), source.dim_b(), n);
    let p = &code.rate_projector().projector;
    let all_pure = joint.all_pure();
    let mut total = 0.0;
    for_each_sequence(&joint, n, |_, prob, seq| {
        if prob <= 0.0 {
            return;
        }
        let err = if all_pure {
            pure_local_fixed_error(&joint, seq, &map, p, dim_an, dim_bn)
        } else {
            mixed_local_fixed_error(&joint, seq, &map, p, dim_an, dim_bn, code.pad_state_index())
        };
        total += prob * err;
    });
    Ok(ErrorEstimate {
        value: total,
        std_err: None,
        method: EstimateMethod::Exact,
        terms: seq_count as usize,
    })
}

fn pure_local_fixed_error(
    joint: &Ensemble,
    seq: &[usize],
    map: &[usize],
    p: &CMat,
    dim_an: usize,
    dim_bn: usize,
) -> f64 {
    let psi = crate::fixed::sequence_pure_vector(joint, seq).expect("pure members");
    let grouped = regroup_vector(&psi, map);
    let w = reshape_to_matrix(&grouped, dim_an, dim_bn);
    let pw = p * &w;
    let mut t = 0.0;
    for (x, y) in w.iter().zip(pw.iter()) {
        t += (x.conj() * y).re;
    }
    let t = t.clamp(0.0, 1.0);
    // pad term <Ψ|(e₀e₀† ⊗ M)|Ψ> with M = Tr_A[((I-P)⊗I)ρ⃗]
    let v = &w - &pw;
    let mut pad = 0.0;
    for a in 0..dim_an {
        let mut x = C64::new(0.0, 0.0);
        let mut y = C64::new(0.0, 0.0);
        for b in 0..dim_bn {
            x += v[(a, b)] * w[(0, b)].conj();
            y += w[(a, b)].conj() * w[(0, b)];
        }
        pad += (x * y).re;
    }
    let f = (t * t + pad.max(0.0)).max(0.0).sqrt();
    (1.0 - f.min(1.0)).max(0.0)
}

fn mixed_local_fixed_error(
    joint: &Ensemble,
    seq: &[usize],
    map: &[usize],
    p: &CMat,
    dim_an: usize,
    dim_bn: usize,
    pad_index: usize,
) -> f64 {
    let rho = regroup_matrix(&crate::fixed::sequence_matrix(joint, seq), map);
    let q = kron(p, &identity(dim_bn));
    let qrq = &q * &rho * &q;
    // M = Tr_A[((I-P)⊗I) ρ] over the grouped layout
    let g = &rho - &q * &rho;
    let mut m = CMat::zeros(dim_bn, dim_bn);
    for b1 in 0..dim_bn {
        for b2 in 0..dim_bn {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..dim_an {
                acc += g[(a * dim_bn + b1, a * dim_bn + b2)];
            }
            m[(b1, b2)] = acc;
        }
    }
    let mut sigma = qrq;
    let base = pad_index * dim_bn;
    for b1 in 0..dim_bn {
        for b2 in 0..dim_bn {
            sigma[(base + b1, base + b2)] += m[(b1, b2)];
        }
    }
    let f = fidelity_raw(&rho, &sigma, 1e-12).unwrap_or(0.0);
    (1.0 - f.min(1.0)).max(0.0)
}

/// Full smeared-code evaluation on a bipartite source.
///
/// Outcome statistics and the closed-form error flow through the reduced
/// ensemble (`Tr[(P ⊗ I)ρ⃗] = Tr_A[P Tr_B ρ⃗]`); the definitional error is
/// evaluated on the joint space.
pub fn local_varlen_report(
    code: &SmearedCode,
    source: &BipartiteEnsemble,
    rates: &[f64],
    opts: &ErrorOptions,
    definitional: DefinitionalPolicy,
) -> Result<VarlenReport> {
    if source.dim_a() != code.d {
        return Err(Error::DimensionMismatch(format!(
            "source dim_a {} vs code d = {}",
            source.dim_a(),
            code.d
        )));
    }
    let reduced = source.reduced_ensemble();
    let mut report = VarlenReport::compute(code, &reduced, rates, opts, DefinitionalPolicy::Never)?;
    let joint_dim = (source.dim_a() * source.dim_b()).pow(code.n as u32);
    let run_definitional = match definitional {
        DefinitionalPolicy::Always => true,
        DefinitionalPolicy::Never => false,
        DefinitionalPolicy::Auto => source.joint_ensemble().all_pure() || joint_dim <= 64,
    };
    if run_definitional {
        report.average_error_definitional =
            Some(local_varlen_definitional(code, source, opts)?.value);
    }
    Ok(report)
}

/// Definitional bipartite average error on the joint space.
pub fn local_varlen_definitional(
    code: &SmearedCode,
    source: &BipartiteEnsemble,
    opts: &ErrorOptions,
) -> Result<ErrorEstimate> {
    let n = code.n;
    let joint = source.joint_ensemble();
    let seq_count = (joint.len() as f64).powi(n as i32);
    if seq_count > opts.exact_cap as f64 {
        return Err(Error::CapExceeded(seq_count as usize, opts.exact_cap));
    }
    let dim_an = source.dim_a().pow(n as u32);
    let dim_bn = source.dim_b().pow(n as u32);
    let joint_dim = dim_an * dim_bn;
    if joint_dim > opts.max_dim {
        return Err(Error::CapExceeded(joint_dim, opts.max_dim));
    }
    let map = regroup_permutation(source.dim_a(), source.dim_b(), n);
    let weight = 1.0 / code.k_max as f64;
    let all_pure = joint.all_pure();
    let mut total = 0.0;
    for_each_sequence(&joint, n, |_, prob, seq| {
        if prob <= 0.0 {
            return;
        }
        let err = if all_pure {
            // F = sqrt(t) per outcome, with t from the A-side quadratic form
            let psi = crate::fixed::sequence_pure_vector(&joint, seq).expect("pure members");
            let grouped = regroup_vector(&psi, &map);
            let w = reshape_to_matrix(&grouped, dim_an, dim_bn);
            let mut acc = 0.0;
            for k in 0..code.k_max {
                for bin in &code.partition(k).bins {
                    if bin.rank == 0 {
                        continue;
                    }
                    let pw = &bin.projector * &w;
                    let mut t = 0.0;
                    for (x, y) in w.iter().zip(pw.iter()) {
                        t += (x.conj() * y).re;
                    }
                    let t = t.clamp(0.0, 1.0);
                    acc += weight * t * (1.0 - t.sqrt());
                }
            }
            acc
        } else {
            let rho = regroup_matrix(&crate::fixed::sequence_matrix(&joint, seq), &map);
            let sr = match sqrt_psd(&rho, 1e-12) {
                Ok(m) => m,
                Err(_) => return,
            };
            let mut acc = 0.0;
            for k in 0..code.k_max {
                for bin in &code.partition(k).bins {
                    if bin.rank == 0 {
                        continue;
                    }
                    let q = kron(&bin.projector, &identity(dim_bn));
                    let half = &q * &sr;
                    let core = &sr * half;
                    let t = core.trace().re;
                    if t <= 1e-15 {
                        continue;
                    }
                    let eigs = core.clone().symmetric_eigenvalues();
                    let f: f64 = eigs.iter().map(|v| v.abs()).sum::<f64>() / t.sqrt();
                    acc += weight * t * (1.0 - f.min(1.0)).max(0.0);
                }
            }
            acc
        };
        total += prob * err;
    });
    Ok(ErrorEstimate {
        value: total,
        std_err: None,
        method: EstimateMethod::Exact,
        terms: seq_count as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, random_density_conditioned, random_pure};
    use crate::varlen::SmearedCode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn product_pure() -> BipartiteState {
        // |0> ⊗ |+>
        let mut psi = CVec::zeros(4);
        psi[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi[1] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        BipartiteState::from_pure(2, 2, &psi).unwrap()
    }

    #[test]
    fn reduced_spectrum_cases() {
        let bell = BipartiteEnsemble::single(BipartiteState::bell());
        let s = reduced_spectrum(&bell);
        assert!((s.probs()[0] - 0.5).abs() < 1e-12);
        assert!((s.probs()[1] - 0.5).abs() < 1e-12);

        let prod = BipartiteEnsemble::single(product_pure());
        let s = reduced_spectrum(&prod);
        assert!((s.probs()[0] - 1.0).abs() < 1e-10);

        let schmidt = BipartiteEnsemble::single(BipartiteState::schmidt(&[0.95, 0.05]).unwrap());
        let s = reduced_spectrum(&schmidt);
        assert!((s.probs()[0] - 0.95).abs() < 1e-12);
        assert!((s.probs()[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn entanglement_entropy_cases() {
        assert!(entanglement_entropy(&product_pure()).unwrap() < 1e-10);
        let bell = entanglement_entropy(&BipartiteState::bell()).unwrap();
        assert!((bell - LN2).abs() < 1e-12);
        let schmidt =
            entanglement_entropy(&BipartiteState::schmidt(&[0.95, 0.05]).unwrap()).unwrap();
        assert!((schmidt - 0.1985152433458726).abs() < 1e-10);
        // mixed inputs rejected
        let mixed = BipartiteState::new(2, 2, DensityMatrix::maximally_mixed(4)).unwrap();
        assert!(matches!(
            entanglement_entropy(&mixed),
            Err(Error::NotPure(_))
        ));
    }

    #[test]
    fn entanglement_entropy_additive() {
        let phi = BipartiteState::schmidt(&[0.8, 0.2]).unwrap();
        let h1 = entanglement_entropy(&phi).unwrap();
        let psi = phi.state.as_pure().unwrap();
        // φ^{⊗n} regrouped as (A^n : B^n)
        for n in 2..=3 {
            let map = regroup_permutation(2, 2, n);
            let mut prod = psi.clone();
            for _ in 1..n {
                prod = kron_vec(&prod, &psi);
            }
            let grouped = regroup_vector(&prod, &map);
            let dim = 2usize.pow(n as u32);
            let joint = BipartiteState::from_pure(dim, dim, &grouped).unwrap();
            let hn = entanglement_entropy(&joint).unwrap();
            assert!((hn - n as f64 * h1).abs() < 1e-9, "n={n}: {hn}");
        }
    }

    #[test]
    fn regrouping_is_a_permutation() {
        let map = regroup_permutation(2, 3, 2);
        let mut seen = vec![false; map.len()];
        for &t in &map {
            assert!(!seen[t]);
            seen[t] = true;
        }
        // dim_b = 1 is the identity
        let map = regroup_permutation(2, 1, 3);
        for (i, &t) in map.iter().enumerate() {
            assert_eq!(i, t);
        }
    }

    #[test]
    fn regrouped_product_states_factorize() {
        // (a ⊗ b)^{⊗2} regrouped equals a^{⊗2} ⊗ b^{⊗2}
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_pure(&mut rng, 2);
        let b = random_pure(&mut rng, 3);
        let ab = kron_vec(&a, &b);
        let prod = kron_vec(&ab, &ab);
        let map = regroup_permutation(2, 3, 2);
        let grouped = regroup_vector(&prod, &map);
        let want = kron_vec(&kron_vec(&a, &a), &kron_vec(&b, &b));
        for (x, y) in grouped.iter().zip(want.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn reduced_trace_identity_on_cases() {
        // product state: both sides 1 for any rate
        let p = crate::schur::rate_projector(0.2, 3, 2).unwrap();
        let (lhs, rhs) = reduced_trace_identity_check(&p, &product_pure(), 3, 1024).unwrap();
        assert!((lhs - 1.0).abs() < 1e-10);
        assert!((rhs - 1.0).abs() < 1e-10);

        // Bell state below full rate: equal values < 1
        let p = crate::schur::rate_projector(0.5, 4, 2).unwrap();
        let (lhs, rhs) = reduced_trace_identity_check(&p, &BipartiteState::bell(), 4, 1024).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
        assert!(lhs < 1.0);

        // random pure states at random rates
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let psi = random_pure(&mut rng, 4);
            let phi = BipartiteState::from_pure(2, 2, &psi).unwrap();
            let rate = 0.1 + 0.5 * rand::Rng::gen::<f64>(&mut rng);
            let p = crate::schur::rate_projector(rate, 3, 2).unwrap();
            let (lhs, rhs) = reduced_trace_identity_check(&p, &phi, 3, 1024).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "lhs {lhs} vs rhs {rhs}");
        }
    }

    #[test]
    fn local_fixed_error_product_state_is_zero() {
        let src = BipartiteEnsemble::single(product_pure());
        for n in 2..=4 {
            let code = FixedLengthCode::new(0.0, n, 2).unwrap();
            let err = local_fixed_error(&code, &src, &ErrorOptions::default()).unwrap();
            assert!(err.value < 1e-10, "n={n}: {}", err.value);
        }
    }

    #[test]
    fn local_fixed_error_bell_at_full_rate_is_zero() {
        let src = BipartiteEnsemble::single(BipartiteState::bell());
        for n in 2..=4 {
            let code = FixedLengthCode::new(LN2, n, 2).unwrap();
            let err = local_fixed_error(&code, &src, &ErrorOptions::default()).unwrap();
            assert!(err.value < 1e-10, "n={n}: {}", err.value);
        }
    }

    #[test]
    fn local_fixed_error_bounded_by_reduced_deficiency() {
        // ε <= 2 (1 - Tr P ρ̄_A^{⊗n}), the A-side version of the error chain
        let src = BipartiteEnsemble::single(BipartiteState::schmidt(&[0.95, 0.05]).unwrap());
        for n in 2..=4 {
            let code = FixedLengthCode::new(0.4, n, 2).unwrap();
            let err = local_fixed_error(&code, &src, &ErrorOptions::default())
                .unwrap()
                .value;
            let reduced_n = average_state(&src.reduced_ensemble())
                .tensor_power(n, 1024)
                .unwrap();
            let deficiency =
                1.0 - crate::linalg::trace_product(&code.rate_projector().projector, reduced_n.matrix()).re;
            assert!(
                err <= 2.0 * deficiency + 1e-12,
                "n={n}: {err} vs {}",
                2.0 * deficiency
            );
            assert!(err > 0.0);
        }
    }

    #[test]
    fn dim_b_one_reduces_to_plain_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let items: Vec<(f64, DensityMatrix)> = vec![
            (0.55, random_density_conditioned(&mut rng, 2)),
            (0.45, random_density_conditioned(&mut rng, 2)),
        ];
        let plain = Ensemble::new(items.clone()).unwrap();
        let bip = BipartiteEnsemble::new(
            items
                .into_iter()
                .map(|(p, s)| (p, BipartiteState::new(2, 1, s).unwrap()))
                .collect(),
        )
        .unwrap();
        let opts = ErrorOptions::default();

        let code = FixedLengthCode::new(0.5, 3, 2).unwrap();
        let plain_err = code.average_error(&plain, &opts).unwrap().value;
        let bip_err = local_fixed_error(&code, &bip, &opts).unwrap().value;
        assert!(
            (plain_err - bip_err).abs() < 1e-12,
            "{plain_err} vs {bip_err}"
        );

        let smeared = SmearedCode::new(3, 2, 0.7).unwrap();
        let plain_report = VarlenReport::compute(
            &smeared,
            &plain,
            &[0.4, 0.6],
            &opts,
            DefinitionalPolicy::Always,
        )
        .unwrap();
        let bip_report =
            local_varlen_report(&smeared, &bip, &[0.4, 0.6], &opts, DefinitionalPolicy::Always)
                .unwrap();
        assert!(
            (plain_report.average_error_exact - bip_report.average_error_exact).abs() < 1e-12
        );
        let pd = plain_report.average_error_definitional.unwrap();
        let bd = bip_report.average_error_definitional.unwrap();
        assert!((pd - bd).abs() < 1e-12);
        for (a, b) in plain_report
            .outcome_probs
            .iter()
            .zip(bip_report.outcome_probs.iter())
        {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-12);
        }
        for (a, b) in plain_report.overflow.iter().zip(bip_report.overflow.iter()) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn bell_source_outcome_probabilities_are_rank_ratios() {
        // Tr_B of the Bell state is maximally mixed, so outcome probabilities
        // count ranks exactly as for the I/2 source.
        let src = BipartiteEnsemble::single(BipartiteState::bell());
        let code = SmearedCode::new(4, 2, 0.5).unwrap();
        let report =
            local_varlen_report(&code, &src, &[], &ErrorOptions::default(), DefinitionalPolicy::Never)
                .unwrap();
        for (&(k, i), &p) in &report.outcome_probs {
            let want = code.outcome_rank(k, i) as f64 / (16.0 * code.k_max as f64);
            assert!((p - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bipartite_dual_route_error_agreement() {
        // mixed bipartite ensemble on 2x2: exact closed form vs joint-space
        // definitional computation
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let src = BipartiteEnsemble::new(vec![
            (0.5, BipartiteState::new(2, 2, random_density_conditioned(&mut rng, 4)).unwrap()),
            (0.5, BipartiteState::new(2, 2, random_density_conditioned(&mut rng, 4)).unwrap()),
        ])
        .unwrap();
        let opts = ErrorOptions::default();
        for n in 2..=3 {
            let code = SmearedCode::new(n, 2, 0.7).unwrap();
            let report =
                local_varlen_report(&code, &src, &[], &opts, DefinitionalPolicy::Always).unwrap();
            let defn = report.average_error_definitional.unwrap();
            assert!(
                (report.average_error_exact - defn).abs() < 1e-8,
                "n={n}: exact {} vs definitional {defn}",
                report.average_error_exact
            );
            assert!((report.total_probability() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn joint_and_reduced_outcome_routes_agree() {
        // outcome probabilities from the reduced ensemble match a direct
        // joint-space evaluation with P ⊗ I
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let joint_state = random_density_conditioned(&mut rng, 4);
        let src = BipartiteEnsemble::single(BipartiteState::new(2, 2, joint_state).unwrap());
        let code = SmearedCode::new(3, 2, 0.7).unwrap();
        let opts = ErrorOptions::default();
        let report = local_varlen_report(&code, &src, &[], &opts, DefinitionalPolicy::Never).unwrap();
        let map = regroup_permutation(2, 2, 3);
        let joint_n = src.items()[0]
            .1
            .state()
            .tensor_power(3, 1024)
            .unwrap();
        let grouped = regroup_matrix(joint_n.matrix(), &map);
        for (&(k, i), &p) in &report.outcome_probs {
            let q = kron(
                &code.partition(k).bins[i].projector,
                &identity(8),
            );
            let direct = crate::linalg::trace_product(&q, &grouped).re / code.k_max as f64;
            assert!((p - direct).abs() < 1e-10, "outcome ({k},{i})");
        }
    }

    #[test]
    fn bipartite_validation() {
        assert!(BipartiteState::new(2, 2, DensityMatrix::maximally_mixed(6)).is_err());
        let a = BipartiteState::new(2, 3, DensityMatrix::maximally_mixed(6)).unwrap();
        let b = BipartiteState::new(3, 2, DensityMatrix::maximally_mixed(6)).unwrap();
        assert!(BipartiteEnsemble::new(vec![(0.5, a), (0.5, b)]).is_err());
    }
}
