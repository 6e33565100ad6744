//! Young diagrams, symmetric-group characters, and the isotypic projectors
//! of the commuting `S_n × U(d)` action on `(C^d)^{⊗n}`.
//!
//! The joint decomposition is indexed by partitions `λ` of `n` with at most
//! `d` rows. Each block carries the orthogonal projector
//!
//! `Π_λ = (dim_λ / n!) Σ_{π ∈ S_n} χ_λ(π) U(π)`,
//!
//! where `dim_λ` and `χ_λ` are the symmetric-group dimension and character
//! (exact integers via hooks and Murnaghan-Nakayama) and `U(π)` permutes
//! tensor factors. Characters are evaluated once per conjugacy class; the
//! group sum itself runs over all `n!` permutations because the class sum
//! `Σ_{π ∈ c} U(π)` is not a multiple of any single `U(π_c)`.
//!
//! Rate projectors select blocks by normalized-diagram entropy:
//! `P_{R,n} = Σ { Π_λ : H(λ/n) <= R }`. Decompositions are cached per
//! `(n, d)` in memory and optionally on disk.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::linalg::{identity, max_abs, max_abs_diff, C64, CMat, DEFAULT_MAX_DIM};
use crate::{Error, Result};

/// Slack added to entropy comparisons so that exact boundary values
/// (for example `H(λ/n) = ln d` for balanced diagrams) classify stably.
pub const ENTROPY_SELECTION_TOL: f64 = 1e-12;

/// A partition of `n`: non-increasing positive rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct YoungDiagram {
    rows: Vec<usize>,
}

impl YoungDiagram {
    pub fn new(rows: Vec<usize>) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|&r| r == 0) {
            return Err(Error::InvalidDiagram("rows must be positive".to_string()));
        }
        if rows.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidDiagram(
                "rows must be non-increasing".to_string(),
            ));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Number of boxes.
    pub fn n(&self) -> usize {
        self.rows.iter().sum()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// The normalized diagram `λ/n` as a probability vector.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.rows.iter().map(|&r| r as f64 / n).collect()
    }

    /// Shannon entropy of the normalized diagram, in nats.
    pub fn entropy(&self) -> f64 {
        let n = self.n() as f64;
        let mut h = 0.0;
        for &r in &self.rows {
            let p = r as f64 / n;
            h -= p * p.ln();
        }
        h.max(0.0)
    }

    /// Hook length of the box at `(row, col)` (0-based).
    fn hook_len(&self, row: usize, col: usize) -> usize {
        let arm = self.rows[row] - col - 1;
        let leg = self
            .rows
            .iter()
            .skip(row + 1)
            .take_while(|&&r| r > col)
            .count();
        arm + leg + 1
    }

    /// Dimension of the `S_n` irreducible: `n! / Π hooks`.
    pub fn hook_dim(&self) -> u128 {
        let n = self.n();
        let mut num: u128 = 1;
        for k in 2..=n {
            num *= k as u128;
        }
        let mut den: u128 = 1;
        for (row, &len) in self.rows.iter().enumerate() {
            for col in 0..len {
                den *= self.hook_len(row, col) as u128;
            }
        }
        num / den
    }

    /// Dimension of the `U(d)` irreducible (Weyl dimension formula);
    /// zero when the diagram has more than `d` rows.
    pub fn weyl_dim(&self, d: usize) -> u128 {
        if self.num_rows() > d {
            return 0;
        }
        let lam = |i: usize| -> i64 {
            if i < self.rows.len() {
                self.rows[i] as i64
            } else {
                0
            }
        };
        let mut num: i128 = 1;
        let mut den: i128 = 1;
        for i in 0..d {
            for j in (i + 1)..d {
                num *= (lam(i) - lam(j) + j as i64 - i as i64) as i128;
                den *= (j - i) as i128;
            }
        }
        (num / den) as u128
    }

    /// Rank of the isotypic block on `(C^d)^{⊗n}`.
    pub fn block_rank(&self, d: usize) -> u128 {
        self.hook_dim() * self.weyl_dim(d)
    }
}

impl std::fmt::Display for YoungDiagram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, r) in self.rows.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ")")
    }
}

/// All partitions of `n` into at most `d` parts, in decreasing
/// lexicographic order.
pub fn partitions(n: usize, d: usize) -> Vec<YoungDiagram> {
    assert!(n >= 1 && d >= 1);
    fn rec(
        remaining: usize,
        max_part: usize,
        slots: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<YoungDiagram>,
    ) {
        if remaining == 0 {
            out.push(YoungDiagram { rows: cur.clone() });
            return;
        }
        if slots == 0 {
            return;
        }
        let hi = remaining.min(max_part);
        // smallest feasible first part: ceil(remaining / slots)
        let lo = remaining.div_ceil(slots);
        for part in (lo..=hi).rev() {
            cur.push(part);
            rec(remaining - part, part, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let mut cur = Vec::new();
    rec(n, n, d, &mut cur, &mut out);
    out
}

/// All partitions of `n` (conjugacy classes of `S_n`).
pub fn all_partitions(n: usize) -> Vec<YoungDiagram> {
    partitions(n, n)
}

/// Size of the conjugacy class with the given cycle type: `n! / z_μ`,
/// `z_μ = Π_k k^{m_k} m_k!`.
pub fn class_size(mu: &YoungDiagram) -> u128 {
    let n = mu.n();
    let mut fact: u128 = 1;
    for k in 2..=n {
        fact *= k as u128;
    }
    let mut z: u128 = 1;
    let mut mult: HashMap<usize, u128> = HashMap::new();
    for &part in mu.rows() {
        *mult.entry(part).or_insert(0) += 1;
    }
    for (part, m) in mult {
        for _ in 0..m {
            z *= part as u128;
        }
        for j in 2..=m {
            z *= j;
        }
    }
    fact / z
}

/// Character `χ_λ(μ)` of `S_n` by the Murnaghan-Nakayama rule.
///
/// Works on the first-column-hook (beta) set of `λ` encoded as a bitmask:
/// removing a border strip of length `m` moves a set bit from `b` to `b - m`,
/// with sign the parity of the set bits strictly between them.
pub fn sn_character(lambda: &YoungDiagram, mu: &YoungDiagram) -> i64 {
    assert_eq!(lambda.n(), mu.n(), "character needs equal box counts");
    let k = lambda.num_rows();
    let mut mask: u64 = 0;
    for (i, &row) in lambda.rows().iter().enumerate() {
        mask |= 1 << (row + (k - 1 - i));
    }
    mn_recurse(mask, mu.rows())
}

fn mn_recurse(mask: u64, parts: &[usize]) -> i64 {
    let Some((&m, rest)) = parts.split_first() else {
        return 1;
    };
    let mut total = 0i64;
    let mut bits = mask;
    while bits != 0 {
        let b = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        if b < m {
            continue;
        }
        let target = b - m;
        if mask & (1 << target) != 0 {
            continue;
        }
        let between = if b - target > 1 {
            (((1u64 << (b - target - 1)) - 1) << (target + 1)) & mask
        } else {
            0
        };
        let sign = if between.count_ones() % 2 == 0 { 1 } else { -1 };
        let next = (mask & !(1 << b)) | (1 << target);
        total += sign * mn_recurse(next, rest);
    }
    total
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Cycle type (sorted descending) of a permutation in one-line notation.
pub fn cycle_type(perm: &[usize]) -> Vec<usize> {
    let n = perm.len();
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut cur = start;
        while !seen[cur] {
            seen[cur] = true;
            cur = perm[cur];
            len += 1;
        }
        cycles.push(len);
    }
    cycles.sort_unstable_by(|a, b| b.cmp(a));
    cycles
}

/// A canonical representative of the class with cycle type `mu`:
/// consecutive cycles `(0 1 .. m₁-1)(m₁ ..) ...`.
pub fn class_representative(mu: &YoungDiagram) -> Vec<usize> {
    let n = mu.n();
    let mut perm = vec![0usize; n];
    let mut base = 0;
    for &m in mu.rows() {
        for i in 0..m {
            perm[base + i] = base + (i + 1) % m;
        }
        base += m;
    }
    perm
}

/// The unitary permuting tensor factors on `(C^d)^{⊗n}`:
/// `U(π) |v_0 .. v_{n-1}> = |v_{π^{-1}(0)} .. v_{π^{-1}(n-1)}>`.
///
/// A 0/1 matrix under the crate's big-endian index convention, and a group
/// homomorphism: `U(π σ) = U(π) U(σ)`.
pub fn permutation_operator(perm: &[usize], d: usize, max_dim: usize) -> Result<CMat> {
    let n = perm.len();
    let dim = d.checked_pow(n as u32).unwrap_or(usize::MAX);
    if dim > max_dim {
        return Err(Error::CapExceeded(dim, max_dim));
    }
    let map = index_map(perm, d, dim);
    let mut u = CMat::zeros(dim, dim);
    for (input, &output) in map.iter().enumerate() {
        u[(output as usize, input)] = C64::new(1.0, 0.0);
    }
    Ok(u)
}

/// For each input basis index, the output index under the factor permutation.
fn index_map(perm: &[usize], d: usize, dim: usize) -> Vec<u32> {
    let n = perm.len();
    let pinv = invert(perm);
    // digit place values, big-endian: factor 0 is most significant
    let mut place = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        place[k] = place[k + 1] * d;
    }
    let mut digits = vec![0usize; n];
    let mut out = vec![0u32; dim];
    for (x, slot) in out.iter_mut().enumerate() {
        let mut rem = x;
        for k in 0..n {
            digits[k] = rem / place[k];
            rem %= place[k];
        }
        let mut y = 0usize;
        for j in 0..n {
            y += digits[pinv[j]] * place[j];
        }
        *slot = y as u32;
    }
    out
}

/// All permutations of `0..n` by Heap's algorithm.
fn for_each_permutation<F: FnMut(&[usize])>(n: usize, mut f: F) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// One isotypic block of the decomposition.
#[derive(Debug, Clone)]
pub struct IsotypicBlock {
    pub diagram: YoungDiagram,
    pub projector: CMat,
    pub rank: usize,
    /// `H(λ/n)` in nats.
    pub entropy: f64,
}

/// The full isotypic decomposition of `(C^d)^{⊗n}`.
#[derive(Debug, Clone)]
pub struct IsotypicDecomposition {
    pub n: usize,
    pub d: usize,
    pub blocks: Vec<IsotypicBlock>,
}

impl IsotypicDecomposition {
    /// Build the decomposition, materializing dense projectors.
    pub fn build(n: usize, d: usize) -> Result<Self> {
        Self::build_capped(n, d, DEFAULT_MAX_DIM)
    }

    pub fn build_capped(n: usize, d: usize, max_dim: usize) -> Result<Self> {
        assert!(n >= 1 && d >= 2);
        let dim = d.checked_pow(n as u32).unwrap_or(usize::MAX);
        if dim > max_dim {
            return Err(Error::CapExceeded(dim, max_dim));
        }
        let diagrams = partitions(n, d);
        let classes = all_partitions(n);
        let class_index: HashMap<Vec<usize>, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.rows().to_vec(), i))
            .collect();
        // character table: chars[class][diagram]
        let chars: Vec<Vec<f64>> = classes
            .iter()
            .map(|c| diagrams.iter().map(|l| sn_character(l, c) as f64).collect())
            .collect();

        // one real accumulator per diagram, flat row-major [input][output]
        let mut acc: Vec<Vec<f64>> = vec![vec![0.0; dim * dim]; diagrams.len()];
        for_each_permutation(n, |perm| {
            let ct = cycle_type(perm);
            let ci = class_index[&ct];
            let weights = &chars[ci];
            let map = index_map(perm, d, dim);
            for (input, &output) in map.iter().enumerate() {
                let flat = input * dim + output as usize;
                for (a, &w) in acc.iter_mut().zip(weights.iter()) {
                    if w != 0.0 {
                        a[flat] += w;
                    }
                }
            }
        });

        let mut fact = 1.0f64;
        for k in 2..=n {
            fact *= k as f64;
        }
        let blocks = diagrams
            .into_iter()
            .zip(acc)
            .map(|(diagram, a)| {
                let scale = diagram.hook_dim() as f64 / fact;
                let mut projector = CMat::zeros(dim, dim);
                for input in 0..dim {
                    for output in 0..dim {
                        let v = a[input * dim + output] * scale;
                        if v != 0.0 {
                            projector[(output, input)] = C64::new(v, 0.0);
                        }
                    }
                }
                let rank = diagram.block_rank(d) as usize;
                let entropy = diagram.entropy();
                IsotypicBlock {
                    diagram,
                    projector,
                    rank,
                    entropy,
                }
            })
            .collect();
        Ok(Self { n, d, blocks })
    }

    pub fn dim(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    /// `Tr Π_λ M` for every block, in block order.
    pub fn block_traces(&self, m: &CMat) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| {
                let mut acc = 0.0;
                for i in 0..m.nrows() {
                    for k in 0..m.ncols() {
                        let p = b.projector[(i, k)];
                        if p.re != 0.0 || p.im != 0.0 {
                            acc += (p * m[(k, i)]).re;
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// `Tr Π_λ diag(w)` for every block.
    pub fn block_traces_diag(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.dim());
        self.blocks
            .iter()
            .map(|b| {
                let mut acc = 0.0;
                for (j, &w) in weights.iter().enumerate() {
                    acc += b.projector[(j, j)].re * w;
                }
                acc
            })
            .collect()
    }

    /// Largest deviations from the block-structure identities.
    pub fn max_deviations(&self) -> DecompositionDeviations {
        let dim = self.dim();
        let mut completeness = CMat::zeros(dim, dim);
        let mut hermiticity = 0.0f64;
        let mut idempotence = 0.0f64;
        for b in &self.blocks {
            completeness += &b.projector;
            hermiticity = hermiticity.max(max_abs_diff(&b.projector, &b.projector.adjoint()));
            let sq = &b.projector * &b.projector;
            idempotence = idempotence.max(max_abs_diff(&sq, &b.projector));
        }
        let completeness = max_abs_diff(&completeness, &identity(dim));
        let mut orthogonality = 0.0f64;
        for i in 0..self.blocks.len() {
            for j in (i + 1)..self.blocks.len() {
                let prod = &self.blocks[i].projector * &self.blocks[j].projector;
                orthogonality = orthogonality.max(max_abs(&prod));
            }
        }
        let rank_sum: u128 = self.blocks.iter().map(|b| b.rank as u128).sum();
        DecompositionDeviations {
            completeness,
            hermiticity,
            idempotence,
            orthogonality,
            ranks_match: rank_sum == dim as u128,
        }
    }

    // --- on-disk cache ----------------------------------------------------

    const MAGIC: &'static [u8; 8] = b"QVLCSW01";

    pub fn cache_file_name(n: usize, d: usize) -> String {
        format!("swdecomp_v1_n{n}_d{d}.bin")
    }

    /// Serialize to a versioned little-endian binary file (atomic write).
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::cache_file_name(self.n, self.d));
        let tmp = dir.join(format!(".{}.tmp", Self::cache_file_name(self.n, self.d)));
        {
            let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
            w.write_all(Self::MAGIC)?;
            w.write_u32::<LittleEndian>(self.n as u32)?;
            w.write_u32::<LittleEndian>(self.d as u32)?;
            w.write_u32::<LittleEndian>(self.blocks.len() as u32)?;
            let dim = self.dim();
            for b in &self.blocks {
                w.write_u32::<LittleEndian>(b.diagram.num_rows() as u32)?;
                for &r in b.diagram.rows() {
                    w.write_u32::<LittleEndian>(r as u32)?;
                }
                w.write_u64::<LittleEndian>(b.rank as u64)?;
                for input in 0..dim {
                    for output in 0..dim {
                        let c = b.projector[(output, input)];
                        w.write_f64::<LittleEndian>(c.re)?;
                        w.write_f64::<LittleEndian>(c.im)?;
                    }
                }
            }
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Load a cached decomposition; any structural mismatch is an error
    /// (callers fall back to rebuilding).
    pub fn read_from(dir: &Path, n: usize, d: usize) -> Result<Self> {
        let path = dir.join(Self::cache_file_name(n, d));
        let mut r = std::io::BufReader::new(fs::File::open(&path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::InvalidConfig(format!(
                "{}: bad cache magic",
                path.display()
            )));
        }
        let fn_ = r.read_u32::<LittleEndian>()? as usize;
        let fd = r.read_u32::<LittleEndian>()? as usize;
        if fn_ != n || fd != d {
            return Err(Error::InvalidConfig(format!(
                "{}: cache is for (n={fn_}, d={fd})",
                path.display()
            )));
        }
        let nblocks = r.read_u32::<LittleEndian>()? as usize;
        let dim = d.pow(n as u32);
        let mut blocks = Vec::with_capacity(nblocks);
        for _ in 0..nblocks {
            let nrows = r.read_u32::<LittleEndian>()? as usize;
            if nrows > d {
                return Err(Error::InvalidConfig(format!(
                    "{}: block with {nrows} rows",
                    path.display()
                )));
            }
            let mut rows = Vec::with_capacity(nrows);
            for _ in 0..nrows {
                rows.push(r.read_u32::<LittleEndian>()? as usize);
            }
            let diagram = YoungDiagram::new(rows)?;
            let rank = r.read_u64::<LittleEndian>()? as usize;
            let mut projector = CMat::zeros(dim, dim);
            for input in 0..dim {
                for output in 0..dim {
                    let re = r.read_f64::<LittleEndian>()?;
                    let im = r.read_f64::<LittleEndian>()?;
                    projector[(output, input)] = C64::new(re, im);
                }
            }
            let entropy = diagram.entropy();
            blocks.push(IsotypicBlock {
                diagram,
                projector,
                rank,
                entropy,
            });
        }
        let out = Self { n, d, blocks };
        let rank_sum: u128 = out.blocks.iter().map(|b| b.rank as u128).sum();
        if rank_sum != dim as u128 || out.blocks.len() != partitions(n, d).len() {
            return Err(Error::InvalidConfig(format!(
                "{}: cache fails structural checks",
                path.display()
            )));
        }
        Ok(out)
    }

    /// Shared, cached decomposition. Looks in the process cache, then the
    /// directory named by `QVLC_CACHE_DIR` (when set), then builds.
    /// Results never depend on cache presence.
    pub fn shared(n: usize, d: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<IsotypicDecomposition>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(hit) = cache.lock().unwrap().get(&(n, d)) {
            return Ok(Arc::clone(hit));
        }
        let disk_dir = std::env::var_os("QVLC_CACHE_DIR").map(PathBuf::from);
        let loaded = disk_dir
            .as_deref()
            .and_then(|dir| Self::read_from(dir, n, d).ok());
        let built = match loaded {
            Some(dec) => dec,
            None => {
                let dec = Self::build(n, d)?;
                if let Some(dir) = disk_dir.as_deref() {
                    // best effort; correctness does not depend on it
                    let _ = dec.write_to(dir);
                }
                dec
            }
        };
        let arc = Arc::new(built);
        cache
            .lock()
            .unwrap()
            .entry((n, d))
            .or_insert_with(|| Arc::clone(&arc));
        Ok(arc)
    }
}

/// Deviations reported by [`IsotypicDecomposition::max_deviations`].
#[derive(Debug, Clone, Copy)]
pub struct DecompositionDeviations {
    pub completeness: f64,
    pub hermiticity: f64,
    pub idempotence: f64,
    pub orthogonality: f64,
    pub ranks_match: bool,
}

impl DecompositionDeviations {
    pub fn worst(&self) -> f64 {
        self.completeness
            .max(self.hermiticity)
            .max(self.idempotence)
            .max(self.orthogonality)
    }
}

/// The entropy-selected universal coding projector `P_{R,n}`.
#[derive(Debug, Clone)]
pub struct RateProjector {
    pub rate: f64,
    pub n: usize,
    pub d: usize,
    pub projector: CMat,
    pub rank: usize,
    pub selected: Vec<YoungDiagram>,
}

/// Build `P_{R,n} = Σ { Π_λ : H(λ/n) <= R }` from the cached decomposition.
pub fn rate_projector(rate: f64, n: usize, d: usize) -> Result<RateProjector> {
    let dec = IsotypicDecomposition::shared(n, d)?;
    rate_projector_from(&dec, rate)
}

pub fn rate_projector_from(dec: &IsotypicDecomposition, rate: f64) -> Result<RateProjector> {
    let ln_d = (dec.d as f64).ln();
    if !(0.0..=ln_d + 1e-9).contains(&rate) {
        return Err(Error::InvalidRate(rate, ln_d));
    }
    let dim = dec.dim();
    let mut projector = CMat::zeros(dim, dim);
    let mut rank = 0usize;
    let mut selected = Vec::new();
    for b in &dec.blocks {
        if b.entropy <= rate + ENTROPY_SELECTION_TOL {
            projector += &b.projector;
            rank += b.rank;
            selected.push(b.diagram.clone());
        }
    }
    Ok(RateProjector {
        rate,
        n: dec.n,
        d: dec.d,
        projector,
        rank,
        selected,
    })
}
