//! A toy proof-of-work chain on top of LightHash: merkle roots, block
//! assembly, the mining loop and consensus-side validation.

mod pool;
mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hash::{
    lighthash_digest, meets_difficulty, select_threshold, sha3, threshold_seed, validate_nk, Backend, BlockHeader,
    BlockMatrix, CorrectedBackend, Digest, HashError, LightHashParams, OracleBackend, PhotonicBackend,
};
use crate::mesh::Layout;
use crate::noise::{derive_seed, ErrorProfile};

pub use pool::{expected_share_rate, simulate_shares, PoolModel};
pub use store::{ChainStore, StoreError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChainError {
    #[error("a block needs at least one transaction")]
    NoTransactions,
    #[error("N and K must fit in the header: N = {n}, K = {k}")]
    HeaderRange { n: usize, k: usize },
    #[error(transparent)]
    Hash(#[from] HashError),
}

pub fn merkle_root(transactions: &[Vec<u8>]) -> Result<Digest, ChainError> {
    if transactions.is_empty() {
        return Err(ChainError::NoTransactions);
    }
    let mut level: Vec<Digest> = transactions.iter().map(|tx| sha3(&[&[0x00], tx])).collect();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().expect("non-empty"));
        }
        level = level.chunks(2).map(|p| sha3(&[&[0x01], &p[0], &p[1]])).collect();
    }
    Ok(level[0])
}

pub fn generate_block_matrix(
    prev_hash: &Digest,
    merkle_root: &Digest,
    n: usize,
    k: usize,
) -> Result<BlockMatrix, ChainError> {
    Ok(BlockMatrix::derive(prev_hash, merkle_root, n, k)?)
}

/// The consensus threshold for a block matrix.
pub fn block_threshold(bm: &BlockMatrix) -> i32 {
    select_threshold(bm, threshold_seed(&bm.merkle_root))
}

mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

mod hex_list {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(hex::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|s| hex::decode(s).map_err(serde::de::Error::custom)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    #[serde(with = "hex32")]
    pub prev_hash: Digest,
    #[serde(with = "hex32")]
    pub merkle_root: Digest,
    pub n: u16,
    pub k: u16,
    pub difficulty: u16,
    pub t_int: i32,
    pub nonce: u64,
    #[serde(with = "hex32")]
    pub hash: Digest,
    #[serde(with = "hex_list")]
    pub transactions: Vec<Vec<u8>>,
}

impl Block {
    pub fn header(&self) -> BlockHeader {
        BlockHeader {
            height: self.height,
            prev_hash: self.prev_hash,
            merkle_root: self.merkle_root,
            n: self.n,
            k: self.k,
            difficulty: self.difficulty,
            t_int: self.t_int,
        }
    }

    pub fn params(&self) -> LightHashParams {
        LightHashParams::new(self.n.into(), self.k.into(), self.t_int)
    }
}

/// Difficulty as a function of height.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DifficultySchedule {
    Constant {
        difficulty: u16,
    },
    /// `initial` until the first step height, then each `(height, D)` in turn.
    Step {
        initial: u16,
        steps: Vec<(u64, u16)>,
    },
}

impl Default for DifficultySchedule {
    fn default() -> Self {
        Self::Constant { difficulty: 12 }
    }
}

impl DifficultySchedule {
    pub fn difficulty(&self, height: u64) -> u16 {
        match self {
            Self::Constant { difficulty } => *difficulty,
            Self::Step { initial, steps } => {
                steps.iter().filter(|(h, _)| *h <= height).max_by_key(|(h, _)| *h).map_or(*initial, |(_, d)| *d)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub schedule: DifficultySchedule,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        validate_nk(self.n, self.k)?;
        Ok(())
    }
}

/// Which hardware the miner hashes with. Validators always use the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MinerBackend {
    #[default]
    Oracle,
    Photonic {
        profile: ErrorProfile,
        seed: u64,
        #[serde(default = "one")]
        r: usize,
    },
}

fn one() -> usize {
    1
}

impl MinerBackend {
    /// Programs the hardware for one block ("chip calibration").
    pub fn build(&self, bm: &BlockMatrix, params: &LightHashParams) -> Result<Box<dyn Backend>, HashError> {
        Ok(match self {
            Self::Oracle => Box::new(OracleBackend::new(bm, params)?),
            Self::Photonic { profile, seed, r: 1 } => {
                Box::new(PhotonicBackend::new(bm, params, profile, profile.lambda_c, *seed, Layout::Rectangular)?)
            }
            Self::Photonic { profile, seed, r } => {
                let params = LightHashParams { r: *r, ..*params };
                Box::new(CorrectedBackend::new(bm, &params, profile, profile.lambda_c, *seed, Layout::Rectangular)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MineOutcome {
    Mined { block: Block, attempts: u64 },
    Exhausted { attempts: u64 },
}

/// Nonces per parallel round. The first success in nonce order wins, so the
/// result does not depend on the number of threads.
const ROUND: u64 = 4096;

/// Mines the block after `tip` (genesis when `None`). Nonces start at a
/// point derived from `seed` and the height.
pub fn mine_block(
    tip: Option<&Block>,
    transactions: Vec<Vec<u8>>,
    config: &ChainConfig,
    backend: &MinerBackend,
    max_attempts: u64,
    seed: u64,
) -> Result<MineOutcome, ChainError> {
    config.validate()?;
    let (height, prev_hash) = match tip {
        Some(b) => (b.height + 1, b.hash),
        None => (0, [0u8; 32]),
    };
    let root = merkle_root(&transactions)?;
    let bm = generate_block_matrix(&prev_hash, &root, config.n, config.k)?;
    let t_int = block_threshold(&bm);
    let params = LightHashParams::new(config.n, config.k, t_int);
    let device = backend.build(&bm, &params)?;
    let hash_params = *device.params();
    let n16 = u16::try_from(config.n).map_err(|_| ChainError::HeaderRange { n: config.n, k: config.k })?;
    let k16 = u16::try_from(config.k).map_err(|_| ChainError::HeaderRange { n: config.n, k: config.k })?;
    let difficulty = config.schedule.difficulty(height);
    let header = BlockHeader { height, prev_hash, merkle_root: root, n: n16, k: k16, difficulty, t_int };
    let bytes = header.to_bytes();
    let start = derive_seed(seed, &[height]);

    let mut done = 0u64;
    while done < max_attempts {
        let len = ROUND.min(max_attempts - done);
        let found = (0..len)
            .into_par_iter()
            .map(|i| {
                let nonce = start.wrapping_add(done + i);
                lighthash_digest(&bytes, nonce, &bm, &hash_params, device.as_ref()).map(|d| (i, nonce, d))
            })
            .find_first(|r| r.as_ref().map_or(true, |(_, _, d)| meets_difficulty(d, difficulty.into())));
        if let Some(r) = found {
            let (i, nonce, hash) = r?;
            let block = Block {
                height,
                prev_hash,
                merkle_root: root,
                n: n16,
                k: k16,
                difficulty,
                t_int,
                nonce,
                hash,
                transactions,
            };
            return Ok(MineOutcome::Mined { block, attempts: done + i + 1 });
        }
        done += len;
    }
    Ok(MineOutcome::Exhausted { attempts: done })
}

/// The first failing consensus check. Checks run cheapest first.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("N = {n}, K = {k} is not a valid parameter set")]
    Params { n: u16, k: u16 },
    #[error("block has no transactions")]
    NoTransactions,
    #[error("merkle root does not match the transactions")]
    MerkleMismatch,
    #[error("height {got} does not follow {expected}")]
    Height { expected: u64, got: u64 },
    #[error("prev_hash does not point at the previous block")]
    PrevHash,
    #[error("threshold {got} differs from the derived {expected}")]
    Threshold { expected: i32, got: i32 },
    #[error("stored hash differs from the recomputed digest")]
    HashMismatch,
    #[error("hash does not meet difficulty {0}")]
    Difficulty(u16),
    #[error("difficulty {got} differs from the scheduled {expected}")]
    Schedule { expected: u16, got: u16 },
}

impl Violation {
    /// Short check name for reports.
    pub fn check(&self) -> &'static str {
        match self {
            Self::Params { .. } => "params",
            Self::NoTransactions => "transactions",
            Self::MerkleMismatch => "merkle_root",
            Self::Height { .. } => "height",
            Self::PrevHash => "prev_hash",
            Self::Threshold { .. } => "t_int",
            Self::HashMismatch => "hash",
            Self::Difficulty(_) => "difficulty",
            Self::Schedule { .. } => "schedule",
        }
    }
}

pub fn validate_block(block: &Block, prev: Option<&Block>) -> Result<(), Violation> {
    let (n, k) = (usize::from(block.n), usize::from(block.k));
    if validate_nk(n, k).is_err() {
        return Err(Violation::Params { n: block.n, k: block.k });
    }
    let root = merkle_root(&block.transactions).map_err(|_| Violation::NoTransactions)?;
    if root != block.merkle_root {
        return Err(Violation::MerkleMismatch);
    }
    let (expected_height, expected_prev) = match prev {
        Some(p) => (p.height + 1, p.hash),
        None => (0, [0u8; 32]),
    };
    if block.height != expected_height {
        return Err(Violation::Height { expected: expected_height, got: block.height });
    }
    if block.prev_hash != expected_prev {
        return Err(Violation::PrevHash);
    }
    if !meets_difficulty(&block.hash, block.difficulty.into()) {
        return Err(Violation::Difficulty(block.difficulty));
    }
    let bm = BlockMatrix::derive(&block.prev_hash, &block.merkle_root, n, k)
        .map_err(|_| Violation::Params { n: block.n, k: block.k })?;
    let params = block.params();
    let digest = OracleBackend::new(&bm, &params)
        .and_then(|oracle| lighthash_digest(&block.header().to_bytes(), block.nonce, &bm, &params, &oracle));
    // A threshold of the wrong parity cannot hash; it is reported below.
    if digest.as_ref().map_or(true, |d| *d != block.hash) && params.validate().is_ok() {
        return Err(Violation::HashMismatch);
    }
    // The threshold search is the expensive step, so it runs last.
    let t = block_threshold(&bm);
    if t != block.t_int {
        return Err(Violation::Threshold { expected: t, got: block.t_int });
    }
    Ok(())
}

/// Folds [`validate_block`] from genesis. With a schedule, each block's
/// difficulty must also match it.
pub fn validate_chain(blocks: &[Block], schedule: Option<&DifficultySchedule>) -> Result<(), (usize, Violation)> {
    for (i, b) in blocks.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &blocks[j]);
        validate_block(b, prev).map_err(|v| (i, v))?;
        if let Some(s) = schedule {
            let expected = s.difficulty(b.height);
            if expected != b.difficulty {
                return Err((i, Violation::Schedule { expected, got: b.difficulty }));
            }
        }
    }
    Ok(())
}
