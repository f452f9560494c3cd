//! The LightHash digest:
//! `SHA3-256( threshold(Q · encode(SHA3-256(header ‖ nonce))) ⊕ SHA3-256(header ‖ nonce) )`
//! with `Q` block-diagonal and the matrix-vector product delegated to a
//! [`Backend`].

mod backend;
mod header;
mod threshold;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha3::{Digest as _, Sha3_256};

use crate::mesh::{CVector, MeshError};
use crate::noise::ProfileError;

pub use backend::{
    photonic_matvec, Backend, ChunkOutput, CorrectedBackend, DeviceCopy, OracleBackend, PhotonicBackend,
};
pub use header::{BlockHeader, HEADER_LEN};
pub use threshold::{
    abs_histogram, exact_abs_histogram, pick_threshold, select_threshold, threshold_seed, AbsHistogram,
    MONTE_CARLO_DRAWS,
};

pub type Digest = [u8; 32];

/// `|Re y|` at or below this counts as a signed-mode tie. Grid spacing in
/// field units is at least `2 / (N^1.5 K)`, many orders above it.
pub const SIGNED_TIE_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HashError {
    #[error("N must be a power of two dividing 256, got {0}")]
    InvalidN(usize),
    #[error("K must be in 2..=65535, got {0}")]
    InvalidK(usize),
    #[error("threshold {t} must have parity opposite to the output grid ({grid})")]
    ThresholdParity { t: i32, grid: i64 },
    #[error("R and S must be at least 1")]
    ZeroCount,
    #[error("expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix entry {value} not on the K = {k} grid")]
    EntryOutOfRange { value: i32, k: usize },
    #[error("backend was built for different parameters")]
    BackendMismatch,
    #[error("permutation schedule must have R = {r} entries, got {got}")]
    Schedule { r: usize, got: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Unsigned,
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightHashParams {
    pub n: usize,
    pub k: usize,
    pub t_int: i32,
    #[serde(default)]
    pub mode: ThresholdMode,
    #[serde(default = "one")]
    pub r: usize,
    #[serde(default = "one")]
    pub s: usize,
}

fn one() -> usize {
    1
}

/// Parity shared by every attainable output `s`.
pub fn grid_parity(n: usize, k: usize) -> i64 {
    ((n * (k + 1)) % 2) as i64
}

pub fn validate_nk(n: usize, k: usize) -> Result<(), HashError> {
    if n == 0 || !n.is_power_of_two() || n > 256 {
        return Err(HashError::InvalidN(n));
    }
    if !(2..=u16::MAX as usize).contains(&k) {
        return Err(HashError::InvalidK(k));
    }
    Ok(())
}

impl LightHashParams {
    pub fn new(n: usize, k: usize, t_int: i32) -> Self {
        Self { n, k, t_int, mode: ThresholdMode::Unsigned, r: 1, s: 1 }
    }

    pub fn validate(&self) -> Result<(), HashError> {
        validate_nk(self.n, self.k)?;
        if self.r == 0 || self.s == 0 {
            return Err(HashError::ZeroCount);
        }
        let grid = grid_parity(self.n, self.k);
        if self.mode == ThresholdMode::Unsigned && (self.t_int < 0 || i64::from(self.t_int).rem_euclid(2) == grid) {
            return Err(HashError::ThresholdParity { t: self.t_int, grid });
        }
        Ok(())
    }

    pub fn chunks(&self) -> usize {
        256 / self.n
    }
}

/// The 256x256 block-diagonal integer matrix, stored as its `256 / N` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub n: usize,
    pub k: usize,
    pub blocks: Vec<DMatrix<i32>>,
    pub prev_hash: [u8; 32],
    pub merkle_root: [u8; 32],
}

impl BlockMatrix {
    /// Counter-mode derivation bound to both chain seeds:
    /// entry `n = m N² + i N + j` takes `q = 1 + (u mod K)` with `u` the
    /// leading 8 bytes of `SHA3-256("LHQ1" ‖ prev ‖ root ‖ n)`.
    pub fn derive(prev_hash: &[u8; 32], merkle_root: &[u8; 32], n: usize, k: usize) -> Result<Self, HashError> {
        validate_nk(n, k)?;
        let mut prefix = Sha3_256::new();
        prefix.update(b"LHQ1");
        prefix.update(prev_hash);
        prefix.update(merkle_root);
        let blocks = (0..256 / n)
            .map(|m| {
                DMatrix::from_fn(n, n, |i, j| {
                    let idx = (m * n * n + i * n + j) as u64;
                    let h = prefix.clone().chain_update(idx.to_be_bytes()).finalize();
                    let u = u64::from_be_bytes(h[..8].try_into().expect("8 bytes"));
                    let q = 1 + (u % k as u64) as i32;
                    2 * q - k as i32 - 1
                })
            })
            .collect();
        Ok(Self { n, k, blocks, prev_hash: *prev_hash, merkle_root: *merkle_root })
    }

    /// Independent uniform entries, for analysis; seeds are left zero.
    pub fn random(n: usize, k: usize, rng: &mut impl rand::Rng) -> Result<Self, HashError> {
        validate_nk(n, k)?;
        let blocks = (0..256 / n)
            .map(|_| DMatrix::from_fn(n, n, |_, _| 2 * rng.random_range(1..=k as i32) - k as i32 - 1))
            .collect();
        Ok(Self { n, k, blocks, prev_hash: [0; 32], merkle_root: [0; 32] })
    }

    pub fn from_blocks(n: usize, k: usize, blocks: Vec<DMatrix<i32>>) -> Result<Self, HashError> {
        validate_nk(n, k)?;
        if blocks.len() != 256 / n {
            return Err(HashError::LengthMismatch { expected: 256 / n, got: blocks.len() });
        }
        for b in &blocks {
            if b.nrows() != n || b.ncols() != n {
                return Err(HashError::LengthMismatch { expected: n, got: b.nrows().max(b.ncols()) });
            }
            if let Some(&value) = b.iter().find(|&&v| !on_grid(v, k)) {
                return Err(HashError::EntryOutOfRange { value, k });
            }
        }
        Ok(Self { n, k, blocks, prev_hash: [0; 32], merkle_root: [0; 32] })
    }
}

fn on_grid(v: i32, k: usize) -> bool {
    let k = k as i32;
    v.abs() < k && (v + k + 1) % 2 == 0
}

/// Phase-shift keying: bit 0 → `+1/√N`, bit 1 → `−1/√N`.
pub fn encode_input(bits: &[bool], n: usize) -> Result<CVector, HashError> {
    if bits.len() != n {
        return Err(HashError::LengthMismatch { expected: n, got: bits.len() });
    }
    let a = 1.0 / (n as f64).sqrt();
    Ok(CVector::from_iterator(n, bits.iter().map(|&b| Complex64::from(if b { -a } else { a }))))
}

/// Exact `s = Q · (±1)`.
pub fn oracle_matvec(q: &DMatrix<i32>, bits: &[bool]) -> Result<Vec<i64>, HashError> {
    if bits.len() != q.ncols() {
        return Err(HashError::LengthMismatch { expected: q.ncols(), got: bits.len() });
    }
    Ok((0..q.nrows())
        .map(|i| {
            bits.iter()
                .enumerate()
                .map(|(j, &b)| {
                    let v = i64::from(q[(i, j)]);
                    if b {
                        -v
                    } else {
                        v
                    }
                })
                .sum()
        })
        .collect())
}

/// Physical threshold power for a grid threshold `t`: `t² / (σ_max² N)`.
pub fn physical_threshold(t_int: i32, sigma_max: f64, n: usize) -> f64 {
    let t = f64::from(t_int);
    t * t / (sigma_max * sigma_max * n as f64)
}

/// `H(p - p_th)` with `H(0) = 0`.
pub fn threshold_unsigned(p: &[f64], p_th: f64) -> Vec<bool> {
    p.iter().map(|&x| x > p_th).collect()
}

/// Interferes each output with a unit reference: bit 1 iff `|y+1|² > |y−1|²`.
/// Differences within [`SIGNED_TIE_TOL`] of zero are ties and give 0.
pub fn threshold_signed(y: &[Complex64]) -> Vec<bool> {
    y.iter()
        .map(|z| {
            let plus = (z + 1.0).norm_sqr();
            let minus = (z - 1.0).norm_sqr();
            plus - minus > 4.0 * SIGNED_TIE_TOL
        })
        .collect()
}

/// True iff the `d` most significant bits of the digest are zero.
pub fn meets_difficulty(digest: &Digest, d: u32) -> bool {
    let d = d.min(256) as usize;
    let full = d / 8;
    if digest[..full].iter().any(|&b| b != 0) {
        return false;
    }
    let rem = d % 8;
    rem == 0 || digest[full] >> (8 - rem) == 0
}

pub fn sha3(parts: &[&[u8]]) -> Digest {
    let mut h = Sha3_256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Bit `β` of a 256-bit string, MSB-first within bytes.
pub fn bit_at(bytes: &Digest, beta: usize) -> bool {
    (bytes[beta / 8] >> (7 - beta % 8)) & 1 == 1
}

pub fn pack_bits(bits: &[bool]) -> Digest {
    let mut out = [0u8; 32];
    for (beta, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        out[beta / 8] |= 0x80 >> (beta % 8);
    }
    out
}

/// Everything the pipeline saw for one hash.
#[derive(Debug, Clone, PartialEq)]
pub struct HashTrace {
    pub d1: Digest,
    pub chunks: Vec<ChunkOutput>,
    pub out_bits: Digest,
    pub digest: Digest,
}

fn check_backend(params: &LightHashParams, backend: &dyn Backend) -> Result<(), HashError> {
    params.validate()?;
    if backend.params() != params {
        return Err(HashError::BackendMismatch);
    }
    Ok(())
}

pub fn lighthash_trace(
    header: &[u8],
    nonce: u64,
    params: &LightHashParams,
    backend: &dyn Backend,
) -> Result<HashTrace, HashError> {
    check_backend(params, backend)?;
    let d1 = sha3(&[header, &nonce.to_be_bytes()]);
    let n = params.n;
    let mut bits = Vec::with_capacity(256);
    let mut chunks = Vec::with_capacity(params.chunks());
    for m in 0..params.chunks() {
        let input: Vec<bool> = (0..n).map(|port| bit_at(&d1, m * n + port)).collect();
        let out = backend.evaluate(m, &input)?;
        bits.extend_from_slice(&out.bits);
        chunks.push(out);
    }
    let out_bits = pack_bits(&bits);
    let mut mixed = out_bits;
    mixed.iter_mut().zip(d1.iter()).for_each(|(a, b)| *a ^= b);
    let digest = sha3(&[&mixed]);
    Ok(HashTrace { d1, chunks, out_bits, digest })
}

/// The digest. The block matrix is only used to check it matches the
/// backend's programming.
pub fn lighthash_digest(
    header: &[u8],
    nonce: u64,
    block_matrix: &BlockMatrix,
    params: &LightHashParams,
    backend: &dyn Backend,
) -> Result<Digest, HashError> {
    if block_matrix.n != params.n || block_matrix.k != params.k || !backend.programmed_with(block_matrix) {
        return Err(HashError::BackendMismatch);
    }
    Ok(lighthash_trace(header, nonce, params, backend)?.digest)
}

/// A batch of `S` consecutive nonces starting at `first`.
pub fn lighthash_batch(
    header: &[u8],
    first: u64,
    block_matrix: &BlockMatrix,
    params: &LightHashParams,
    backend: &dyn Backend,
) -> Result<Vec<(u64, Digest)>, HashError> {
    (0..params.s as u64)
        .map(|i| {
            let nonce = first.wrapping_add(i);
            lighthash_digest(header, nonce, block_matrix, params, backend).map(|d| (nonce, d))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encode_examples() {
        let x = encode_input(&[false; 4], 4).unwrap();
        assert!(x.iter().all(|z| (z - Complex64::from(0.5)).norm() < 1e-15));
        let x = encode_input(&[false, true, false, true], 4).unwrap();
        let expect = [0.5, -0.5, 0.5, -0.5];
        assert!(x.iter().zip(expect).all(|(z, e)| (z - Complex64::from(e)).norm() < 1e-15));
        assert!(encode_input(&[false; 3], 4).is_err());
    }

    proptest! {
        #[test]
        fn encoded_input_has_unit_power(bits in proptest::collection::vec(any::<bool>(), 16)) {
            let x = encode_input(&bits, 16).unwrap();
            prop_assert!((x.norm_squared() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn oracle_outputs_on_parity_grid(seed in any::<u64>(), k in 2usize..9, logn in 1u32..6) {
            let n = 1usize << logn;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bm = BlockMatrix::random(n, k, &mut rng).unwrap();
            let bits: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            for s in oracle_matvec(&bm.blocks[0], &bits).unwrap() {
                prop_assert_eq!(s.rem_euclid(2), grid_parity(n, k));
                prop_assert!(s.abs() <= (n * (k - 1)) as i64);
            }
        }
    }

    #[test]
    fn oracle_examples() {
        let q = DMatrix::from_element(4, 4, 1);
        assert_eq!(oracle_matvec(&q, &[false; 4]).unwrap(), vec![4; 4]);
        let q = DMatrix::from_row_slice(1, 4, &[-3, -1, 1, 3]);
        assert_eq!(oracle_matvec(&q, &[false, true, true, false]).unwrap(), vec![0]);
    }

    #[test]
    fn oracle_matches_brute_force_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = 1 << rng.random_range(1..6);
            let k = rng.random_range(2..10);
            let q = DMatrix::from_fn(n, n, |_, _| 2 * rng.random_range(1..=k) - k - 1);
            let bits: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let x: Vec<i64> = bits.iter().map(|&b| 1 - 2 * i64::from(b)).collect();
            let mut expected = vec![0i64; n];
            for (i, e) in expected.iter_mut().enumerate() {
                for (j, xj) in x.iter().enumerate() {
                    *e += i64::from(q[(i, j)]) * xj;
                }
            }
            assert_eq!(oracle_matvec(&q, &bits).unwrap(), expected);
        }
    }

    #[test]
    fn unsigned_threshold_examples() {
        assert_eq!(threshold_unsigned(&[0.0; 4], 0.1), vec![false; 4]);
        let (t, smax, n) = (3, 5.0, 8);
        let pth = physical_threshold(t, smax, n);
        let p = |s: f64| s * s / (smax * smax * n as f64);
        assert_eq!(threshold_unsigned(&[p(4.0), p(2.0)], pth), vec![true, false]);
    }

    #[test]
    fn unit_conversion_agrees_with_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let n = 1usize << rng.random_range(1..9);
            let t = 2 * rng.random_range(0..40) + 1;
            let s = 2 * rng.random_range(-40i64..40);
            let smax = rng.random_range(0.5..300.0);
            let y = s as f64 / (smax * (n as f64).sqrt());
            let physical = threshold_unsigned(&[y * y], physical_threshold(t, smax, n))[0];
            assert_eq!(physical, s.abs() > i64::from(t));
        }
    }

    #[test]
    fn signed_threshold_examples() {
        let y = [Complex64::from(1.0), Complex64::from(-1.0), Complex64::new(0.0, 1.0)];
        assert_eq!(threshold_signed(&y), vec![true, false, false]);
    }

    #[test]
    fn difficulty_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let random: Digest = rng.random();
        assert!(meets_difficulty(&random, 0));
        let mut d = [0xffu8; 32];
        d[0] = 0x00;
        assert!(meets_difficulty(&d, 8));
        assert!(!meets_difficulty(&d, 9));
        d[0] = 0x80;
        assert!(!meets_difficulty(&d, 1));
        assert!(meets_difficulty(&[0u8; 32], 256));
    }

    #[test]
    fn difficulty_pass_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let trials = 1 << 20;
        let digests: Vec<Digest> = (0..trials).map(|_| rng.random()).collect();
        for d in [1u32, 4, 8, 12] {
            let hits = digests.iter().filter(|x| meets_difficulty(x, d)).count() as f64;
            let p = (-(d as f64)).exp2();
            let se = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((hits - trials as f64 * p).abs() < 4.0 * se, "D={d}: {hits}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(LightHashParams::new(4, 2, 1).validate().is_ok());
        assert!(matches!(LightHashParams::new(4, 2, 2).validate(), Err(HashError::ThresholdParity { .. })));
        assert!(LightHashParams::new(4, 3, 1).validate().is_ok());
        assert!(LightHashParams::new(4, 3, 2).validate().is_err());
        assert_eq!(LightHashParams::new(12, 2, 1).validate(), Err(HashError::InvalidN(12)));
        assert_eq!(LightHashParams::new(512, 2, 1).validate(), Err(HashError::InvalidN(512)));
        assert_eq!(LightHashParams::new(4, 1, 1).validate(), Err(HashError::InvalidK(1)));
        let signed = LightHashParams { mode: ThresholdMode::Signed, t_int: 0, ..LightHashParams::new(4, 2, 0) };
        assert!(signed.validate().is_ok());
    }

    #[test]
    fn bit_packing_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d: Digest = rng.random();
        let bits: Vec<bool> = (0..256).map(|b| bit_at(&d, b)).collect();
        assert_eq!(pack_bits(&bits), d);
        assert!(bit_at(&[0x80; 32], 0) && !bit_at(&[0x80; 32], 1));
    }

    #[test]
    fn from_blocks_rejects_off_grid_entries() {
        let ok = vec![DMatrix::from_element(128, 128, 1); 2];
        assert!(BlockMatrix::from_blocks(128, 2, ok).is_ok());
        let bad = vec![DMatrix::from_element(128, 128, 2); 2];
        assert_eq!(BlockMatrix::from_blocks(128, 2, bad).unwrap_err(), HashError::EntryOutOfRange { value: 2, k: 2 });
    }
}
