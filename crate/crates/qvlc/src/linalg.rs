//! Dense complex Hermitian linear algebra and quantum-state primitives.
//!
//! Everything here works on `nalgebra` dynamic matrices over `Complex<f64>`.
//! Tensor factors use a fixed big-endian index convention: factor 1 is the
//! most significant digit, so the basis index of `|i_1 i_2 ... i_n>` on
//! `(C^d)^{⊗n}` is `sum_k i_k d^{n-k}`. `kron(a, b)` places `a` on the more
//! significant digits, matching that convention. All entropies are in nats.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Default cap on the dimension of any dense matrix we materialize.
pub const DEFAULT_MAX_DIM: usize = 1024;

/// Numerical tolerances for state validation and spectral clipping.
#[derive(Debug, Clone, Copy)]
pub struct ToleranceConfig {
    /// Eigenvalues in `[-psd_clip, 0)` are clipped to 0 before sqrt/log.
    pub psd_clip: f64,
    /// Max allowed entry-wise asymmetry `|M - M^†|`.
    pub hermit_tol: f64,
    /// Tolerance for state equality checks.
    pub eq_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            psd_clip: 1e-12,
            hermit_tol: 1e-10,
            eq_tol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    fn validate(&self) -> Result<()> {
        if self.psd_clip <= 0.0 || self.hermit_tol <= 0.0 || self.eq_tol <= 0.0 {
            return Err(Error::InvalidConfig(
                "tolerances must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

fn real(c: C64) -> f64 {
    c.re
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

/// Max absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, c| acc.max(c.norm()))
}

/// Max absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

/// `Tr(a b)` without forming the product matrix.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Kronecker product with the crate's big-endian factor convention.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Identity matrix of the given dimension.
pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order with matching eigenvector columns.
/// Accuracy contract: `|A v - λ v| <= 1e-9 |A|` on the supported sizes
/// (up to 3^8 = 6561).
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Eigenvalues in `[-clip, 0)` are set to 0; anything below `-clip` rejects
/// the input.
pub fn sqrt_psd(m: &CMat, clip: f64) -> Result<CMat> {
    let (vals, vecs) = eigh(m);
    if let Some(&min) = vals.first() {
        if min < -clip {
            return Err(Error::NotPsd(min));
        }
    }
    let n = m.nrows();
    let mut d = CMat::zeros(n, n);
    for (i, &v) in vals.iter().enumerate() {
        d[(i, i)] = C64::new(v.max(0.0).sqrt(), 0.0);
    }
    Ok(&vecs * d * vecs.adjoint())
}

/// A validated density matrix: Hermitian, PSD, unit trace.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    dim: usize,
    mat: CMat,
}

impl DensityMatrix {
    /// Validate and wrap a matrix with default tolerances.
    pub fn new(mat: CMat) -> Result<Self> {
        Self::with_tolerances(mat, &ToleranceConfig::default())
    }

    /// Validate and wrap a matrix.
    pub fn with_tolerances(mat: CMat, tol: &ToleranceConfig) -> Result<Self> {
        tol.validate()?;
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} is not square",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = max_abs_diff(&mat, &mat.adjoint());
        if asym > tol.hermit_tol {
            return Err(Error::NotHermitian(asym));
        }
        let tr = real(mat.trace());
        if (tr - 1.0).abs() > tol.hermit_tol {
            return Err(Error::InvalidTrace(tr));
        }
        let (vals, _) = eigh(&mat);
        if let Some(&min) = vals.first() {
            if min < -tol.hermit_tol {
                return Err(Error::NotPsd(min));
            }
        }
        Ok(Self {
            dim: mat.nrows(),
            mat,
        })
    }

    /// Wrap without validation. For internal construction from operations
    /// that preserve the invariants (tensor products, convex mixtures, ...).
    pub(crate) fn new_unchecked(mat: CMat) -> Self {
        Self {
            dim: mat.nrows(),
            mat,
        }
    }

    /// `|psi><psi|` from a (not necessarily normalized) vector.
    pub fn from_pure(psi: &CVec) -> Result<Self> {
        let norm = psi.norm();
        if norm <= 0.0 {
            return Err(Error::InvalidEnsemble("zero state vector".to_string()));
        }
        let v = psi / C64::new(norm, 0.0);
        let mat = &v * v.adjoint();
        Ok(Self::new_unchecked(mat))
    }

    /// Projector onto a computational basis vector.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut mat = CMat::zeros(dim, dim);
        mat[(index, index)] = C64::new(1.0, 0.0);
        Self::new_unchecked(mat)
    }

    /// The maximally mixed state `I/d`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self::new_unchecked(identity(dim) * C64::new(1.0 / dim as f64, 0.0))
    }

    /// Diagonal state from nonnegative weights summing to 1.
    pub fn from_diagonal(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidProbabilities(format!(
                "diagonal weights sum to {sum}"
            )));
        }
        let dim = weights.len();
        let mut mat = CMat::zeros(dim, dim);
        for (i, &w) in weights.iter().enumerate() {
            mat[(i, i)] = C64::new(w, 0.0);
        }
        Ok(Self::new_unchecked(mat))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    /// Eigenvalues clipped to `[0, 1]`, sorted descending.
    pub fn spectrum(&self) -> Vec<f64> {
        let (mut vals, _) = eigh(&self.mat);
        for v in vals.iter_mut() {
            *v = v.max(0.0);
        }
        vals.reverse();
        vals
    }

    /// Von Neumann entropy `-Tr ρ ln ρ` in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        let (vals, _) = eigh(&self.mat);
        let mut h = 0.0;
        for &v in &vals {
            if v > 0.0 {
                h -= v * v.ln();
            }
        }
        h.max(0.0)
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        real(trace_product(&self.mat, &self.mat))
    }

    /// If the state is (numerically) rank one, its unit state vector.
    pub fn as_pure(&self) -> Option<CVec> {
        if self.purity() < 1.0 - 1e-10 {
            return None;
        }
        let (vals, vecs) = eigh(&self.mat);
        let top = vals.len() - 1;
        if vals[top] < 1.0 - 1e-8 {
            return None;
        }
        Some(vecs.column(top).into_owned())
    }

    /// `ρ^{⊗n}`. Fails if `dim^n` exceeds `max_dim`.
    pub fn tensor_power(&self, n: usize, max_dim: usize) -> Result<DensityMatrix> {
        assert!(n >= 1);
        let target = self.dim.checked_pow(n as u32).unwrap_or(usize::MAX);
        if target > max_dim {
            return Err(Error::CapExceeded(target, max_dim));
        }
        let mut out = self.mat.clone();
        for _ in 1..n {
            out = kron(&out, &self.mat);
        }
        Ok(Self::new_unchecked(out))
    }
}

/// A finite ensemble of same-dimension states with their probabilities.
#[derive(Debug, Clone)]
pub struct Ensemble {
    items: Vec<(f64, DensityMatrix)>,
}

impl Ensemble {
    pub fn new(items: Vec<(f64, DensityMatrix)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidEnsemble("empty ensemble".to_string()));
        }
        let dim = items[0].1.dim();
        if items.iter().any(|(_, s)| s.dim() != dim) {
            return Err(Error::InvalidEnsemble(
                "members have mixed dimensions".to_string(),
            ));
        }
        if items.iter().any(|(p, _)| *p < 0.0) {
            return Err(Error::InvalidEnsemble(
                "negative probability".to_string(),
            ));
        }
        let total: f64 = items.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { items })
    }

    /// Single-state ensemble.
    pub fn single(state: DensityMatrix) -> Self {
        Self {
            items: vec![(1.0, state)],
        }
    }

    pub fn items(&self) -> &[(f64, DensityMatrix)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items[0].1.dim()
    }

    /// True when every member is (numerically) pure.
    pub fn all_pure(&self) -> bool {
        self.items.iter().all(|(_, s)| s.purity() > 1.0 - 1e-10)
    }
}

/// `ρ̄ = Σ p_i ρ_i`.
pub fn average_state(e: &Ensemble) -> DensityMatrix {
    let dim = e.dim();
    let mut acc = CMat::zeros(dim, dim);
    for (p, s) in e.items() {
        acc += s.matrix() * C64::new(*p, 0.0);
    }
    DensityMatrix::new_unchecked(acc)
}

/// Fidelity `Tr |√ρ √σ| = Tr √(√ρ σ √ρ)`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity: {} vs {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    fidelity_raw(rho.matrix(), sigma.matrix(), 1e-12)
}

/// Fidelity on raw Hermitian PSD matrices (not necessarily trace one).
///
/// Eigenvalues of the inner product matrix below `1e-13` of its largest are
/// treated as exact zeros: rank-deficient directions otherwise contribute
/// spurious `√ε` terms that dominate the error budget, while an absolute
/// clip would drop genuine spectrum of low-weight outcomes. Genuine modes
/// below the floor are unresolvable in f64 anyway; keep input spectra away
/// from that regime when the last digits matter.
pub(crate) fn fidelity_raw(rho: &CMat, sigma: &CMat, clip: f64) -> Result<f64> {
    let sr = sqrt_psd(rho, clip)?;
    let inner = &sr * sigma * &sr;
    let (vals, _) = eigh(&inner);
    let floor = vals.last().copied().unwrap_or(0.0).max(0.0) * 1e-13;
    let mut f = 0.0;
    for &v in &vals {
        if v > floor {
            f += v.sqrt();
        }
    }
    Ok(f)
}

/// Bures distance `√(1 - Tr|√ρ √σ|)`, clamped into `[0, 1]`.
pub fn bures_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    Ok((1.0 - f.min(1.0)).max(0.0).sqrt())
}

/// Squared Bures distance `1 - Tr|√ρ √σ|`, clamped to be nonnegative.
pub fn bures_distance_sq(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    Ok((1.0 - f.min(1.0)).max(0.0))
}

/// Partial trace over the second factor of `H_A ⊗ H_B`.
pub fn partial_trace_b(rho: &DensityMatrix, dim_a: usize, dim_b: usize) -> Result<DensityMatrix> {
    if dim_a * dim_b != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "partial trace: {} != {} * {}",
            rho.dim(),
            dim_a,
            dim_b
        )));
    }
    let m = rho.matrix();
    let mut out = CMat::zeros(dim_a, dim_a);
    for i in 0..dim_a {
        for j in 0..dim_a {
            let mut acc = C64::new(0.0, 0.0);
            for b in 0..dim_b {
                acc += m[(i * dim_b + b, j * dim_b + b)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix::new_unchecked(out))
}

/// Partial trace over the first factor of `H_A ⊗ H_B`.
pub fn partial_trace_a(rho: &DensityMatrix, dim_a: usize, dim_b: usize) -> Result<DensityMatrix> {
    if dim_a * dim_b != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "partial trace: {} != {} * {}",
            rho.dim(),
            dim_a,
            dim_b
        )));
    }
    let m = rho.matrix();
    let mut out = CMat::zeros(dim_b, dim_b);
    for i in 0..dim_b {
        for j in 0..dim_b {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..dim_a {
                acc += m[(a * dim_b + i, a * dim_b + j)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix::new_unchecked(out))
}

// --- seeded random states -------------------------------------------------

/// One standard normal via Box-Muller.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn ginibre<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(standard_normal(rng), standard_normal(rng))
    })
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
pub fn haar_unitary<R: Rng>(rng: &mut R, dim: usize) -> CMat {
    let g = ginibre(rng, dim, dim);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / C64::new(rjj.norm(), 0.0)
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Haar-random pure state vector.
pub fn random_pure<R: Rng>(rng: &mut R, dim: usize) -> CVec {
    let v = CVec::from_fn(dim, |_, _| {
        C64::new(standard_normal(rng), standard_normal(rng))
    });
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Random full-rank density matrix (normalized Ginibre `G G^†`).
pub fn random_density<R: Rng>(rng: &mut R, dim: usize) -> DensityMatrix {
    let g = ginibre(rng, dim, dim);
    let m = &g * g.adjoint();
    let tr = real(m.trace());
    DensityMatrix::new_unchecked(m / C64::new(tr, 0.0))
}

/// Random mixed state with a bounded spectral ratio: eigenvalues are a
/// half-and-half blend of a random simplex point with the uniform
/// distribution (so every eigenvalue is at least `1/(2 dim)`), rotated by a
/// Haar unitary. Tensor powers of such states keep their whole spectrum
/// resolvable in f64, which matters when two computation routes must agree
/// to `1e-8`.
pub fn random_density_conditioned<R: Rng>(rng: &mut R, dim: usize) -> DensityMatrix {
    let raw = random_simplex(rng, dim);
    let weights: Vec<f64> = raw.iter().map(|w| 0.5 * w + 0.5 / dim as f64).collect();
    let u = haar_unitary(rng, dim);
    let mut diag = CMat::zeros(dim, dim);
    for (i, &w) in weights.iter().enumerate() {
        diag[(i, i)] = C64::new(w, 0.0);
    }
    DensityMatrix::new_unchecked(&u * diag * u.adjoint())
}

/// Random point of the probability simplex (uniform via exponentials).
pub fn random_simplex<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|_| -(rng.gen::<f64>().max(1e-300)).ln())
        .collect();
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qubit_plus() -> DensityMatrix {
        let v = CVec::from_vec(vec![
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]);
        DensityMatrix::from_pure(&v).unwrap()
    }

    #[test]
    fn average_state_identity_case() {
        let rho = DensityMatrix::basis_state(2, 0);
        let e = Ensemble::single(rho.clone());
        let avg = average_state(&e);
        assert!(max_abs_diff(avg.matrix(), rho.matrix()) < 1e-15);
    }

    #[test]
    fn average_state_symmetric_mixture() {
        let e = Ensemble::new(vec![
            (0.5, DensityMatrix::basis_state(2, 0)),
            (0.5, DensityMatrix::basis_state(2, 1)),
        ])
        .unwrap();
        let avg = average_state(&e);
        assert!(max_abs_diff(avg.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-15);
    }

    #[test]
    fn average_state_weighted_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r1 = random_density(&mut rng, 2);
        let r2 = random_density(&mut rng, 2);
        let e = Ensemble::new(vec![(0.3, r1.clone()), (0.7, r2.clone())]).unwrap();
        let avg = average_state(&e);
        // element-wise convex combination oracle
        for i in 0..2 {
            for j in 0..2 {
                let want = r1.matrix()[(i, j)] * C64::new(0.3, 0.0)
                    + r2.matrix()[(i, j)] * C64::new(0.7, 0.0);
                assert!((avg.matrix()[(i, j)] - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn entropy_pure_and_uniform() {
        assert!(DensityMatrix::basis_state(4, 2).entropy() < 1e-12);
        let h = DensityMatrix::maximally_mixed(2).entropy();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn entropy_direct_evaluation() {
        // -0.9 ln 0.9 - 0.1 ln 0.1
        let want = -(0.9_f64 * 0.9_f64.ln() + 0.1 * 0.1_f64.ln());
        assert!((want - 0.325082973391448).abs() < 1e-12);
        let rho = DensityMatrix::from_diagonal(&[0.9, 0.1]).unwrap();
        assert!((rho.entropy() - want).abs() < 1e-12);
    }

    #[test]
    fn bures_basic_values() {
        let zero = DensityMatrix::basis_state(2, 0);
        let one = DensityMatrix::basis_state(2, 1);
        assert!(bures_distance(&zero, &zero).unwrap() < 1e-8);
        assert!((bures_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-10);
        // pure-state overlap |<0|+>| = 1/sqrt(2)
        let want = (1.0 - std::f64::consts::FRAC_1_SQRT_2).sqrt();
        let got = bures_distance(&zero, &qubit_plus()).unwrap();
        assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
    }

    #[test]
    fn bures_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_density(&mut rng, 3);
            let b = random_density(&mut rng, 3);
            let dab = bures_distance(&a, &b).unwrap();
            let dba = bures_distance(&b, &a).unwrap();
            assert!((dab - dba).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&dab));
        }
    }

    #[test]
    fn tensor_power_cases() {
        let half = DensityMatrix::maximally_mixed(2);
        let q = half.tensor_power(2, DEFAULT_MAX_DIM).unwrap();
        assert!(max_abs_diff(q.matrix(), DensityMatrix::maximally_mixed(4).matrix()) < 1e-15);

        let zero3 = DensityMatrix::basis_state(2, 0)
            .tensor_power(3, DEFAULT_MAX_DIM)
            .unwrap();
        assert!(max_abs_diff(zero3.matrix(), DensityMatrix::basis_state(8, 0).matrix()) < 1e-15);

        let q = 0.7;
        let d = DensityMatrix::from_diagonal(&[q, 1.0 - q]).unwrap();
        let d2 = d.tensor_power(2, DEFAULT_MAX_DIM).unwrap();
        let want = [q * q, q * (1.0 - q), (1.0 - q) * q, (1.0 - q) * (1.0 - q)];
        for (i, w) in want.iter().enumerate() {
            assert!((d2.matrix()[(i, i)].re - w).abs() < 1e-14);
        }
    }

    #[test]
    fn tensor_power_cap() {
        let half = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            half.tensor_power(8, 100),
            Err(Error::CapExceeded(256, 100))
        ));
    }

    #[test]
    fn entropy_additive_under_tensor_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_density(&mut rng, 2);
        let h1 = rho.entropy();
        for n in 2..=4 {
            let hn = rho.tensor_power(n, DEFAULT_MAX_DIM).unwrap().entropy();
            assert!((hn - n as f64 * h1).abs() < 1e-9, "n={n}: {hn} vs {}", n as f64 * h1);
        }
    }

    #[test]
    fn partial_trace_recovers_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 3);
        let joint = DensityMatrix::new_unchecked(kron(a.matrix(), b.matrix()));
        let ta = partial_trace_b(&joint, 2, 3).unwrap();
        assert!(max_abs_diff(ta.matrix(), a.matrix()) < 1e-12);
        let tb = partial_trace_a(&joint, 2, 3).unwrap();
        assert!(max_abs_diff(tb.matrix(), b.matrix()) < 1e-12);
    }

    #[test]
    fn partial_trace_bell_state() {
        let bell = CVec::from_vec(vec![
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]);
        let rho = DensityMatrix::from_pure(&bell).unwrap();
        let red = partial_trace_b(&rho, 2, 2).unwrap();
        assert!(max_abs_diff(red.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-12);
    }

    #[test]
    fn partial_trace_against_index_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = random_density(&mut rng, 6);
        let red = partial_trace_b(&rho, 2, 3).unwrap();
        // independent index-summation oracle
        let m = rho.matrix();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..3 {
                    acc += m[(3 * i + b, 3 * j + b)];
                }
                assert!((red.matrix()[(i, j)] - acc).norm() < 1e-12);
            }
        }
        // trace preserved
        assert!((red.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_psd_cases() {
        let id = identity(3);
        assert!(max_abs_diff(&sqrt_psd(&id, 1e-12).unwrap(), &id) < 1e-12);

        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = C64::new(4.0, 0.0);
        d[(1, 1)] = C64::new(9.0, 0.0);
        let s = sqrt_psd(&d, 1e-12).unwrap();
        assert!((s[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((s[(1, 1)].re - 3.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = ginibre(&mut rng, 5, 5);
        let m = &g * g.adjoint();
        let s = sqrt_psd(&m, 1e-12).unwrap();
        assert!(max_abs_diff(&(&s * &s), &m) < 1e-10 * max_abs(&m).max(1.0));
    }

    #[test]
    fn sqrt_psd_rejects_negative() {
        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = C64::new(1.0, 0.0);
        d[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(sqrt_psd(&d, 1e-12).is_err());
    }

    #[test]
    fn unitary_invariance_of_entropy_and_bures() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let rho = random_density(&mut rng, 3);
            let sigma = random_density(&mut rng, 3);
            let u = haar_unitary(&mut rng, 3);
            let ur = DensityMatrix::new_unchecked(&u * rho.matrix() * u.adjoint());
            let us = DensityMatrix::new_unchecked(&u * sigma.matrix() * u.adjoint());
            assert!((ur.entropy() - rho.entropy()).abs() < 1e-9);
            let d1 = bures_distance(&rho, &sigma).unwrap();
            let d2 = bures_distance(&ur, &us).unwrap();
            assert!((d1 - d2).abs() < 1e-9);
        }
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let u = haar_unitary(&mut rng, 4);
        assert!(max_abs_diff(&(&u * u.adjoint()), &identity(4)) < 1e-12);
    }

    #[test]
    fn eigensolver_accuracy_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for &n in &[2usize, 16, 64, 243, 256] {
            let g = ginibre(&mut rng, n, n);
            let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
            let (vals, vecs) = eigh(&h);
            let anorm = h.norm();
            for j in (0..n).step_by((n / 8).max(1)) {
                let v = vecs.column(j).into_owned();
                let r = &h * &v - &v * C64::new(vals[j], 0.0);
                assert!(
                    r.norm() <= 1e-9 * anorm,
                    "n={n} j={j}: residual {} vs {}",
                    r.norm(),
                    1e-9 * anorm
                );
            }
            // ascending order
            for j in 1..n {
                assert!(vals[j] >= vals[j - 1]);
            }
        }
    }

    #[test]
    fn density_validation_rejects_bad_inputs() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = C64::new(0.9, 0.0);
        m[(1, 1)] = C64::new(0.2, 0.0);
        assert!(matches!(DensityMatrix::new(m), Err(Error::InvalidTrace(_))));

        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(0, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(DensityMatrix::new(m), Err(Error::NotHermitian(_))));

        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = C64::new(1.2, 0.0);
        m[(1, 1)] = C64::new(-0.2, 0.0);
        assert!(matches!(DensityMatrix::new(m), Err(Error::NotPsd(_))));
    }

    #[test]
    fn ensemble_validation() {
        let e = Ensemble::new(vec![
            (0.5, DensityMatrix::basis_state(2, 0)),
            (0.4, DensityMatrix::basis_state(2, 1)),
        ]);
        assert!(e.is_err());
    }
}
