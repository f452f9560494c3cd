//! Choosing the grid threshold so output bits are as close to fair as the
//! block matrix allows.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{grid_parity, sha3, BlockMatrix};

pub const MONTE_CARLO_DRAWS: usize = 65_536;

/// Largest N for which all `2^N` inputs are counted exactly.
const EXACT_MAX_N: usize = 16;

/// Weights of `|s|` over all rows of all blocks. The exact path stores
/// per-row probabilities (multiples of `2^-N`), the sampled path raw counts;
/// on the consensus paths every value is an exactly representable integer
/// multiple of a power of two, so comparisons below are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsHistogram {
    pub counts: Vec<f64>,
    pub total: f64,
    pub parity: i64,
}

impl AbsHistogram {
    fn new(max_abs: usize, parity: i64) -> Self {
        Self { counts: vec![0.0; max_abs + 1], total: 0.0, parity }
    }

    fn merge(mut self, other: Self) -> Self {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.total += other.total;
        self
    }

    pub fn above(&self, t: i64) -> f64 {
        let from = (t + 1).max(0) as usize;
        self.counts.iter().skip(from).sum()
    }

    pub fn prob(&self, a: i64) -> f64 {
        if a < 0 || a as usize >= self.counts.len() {
            return 0.0;
        }
        self.counts[a as usize] / self.total
    }

    pub fn prob_above(&self, t: i64) -> f64 {
        self.above(t) / self.total
    }
}

/// Domain-separated seed for the Monte-Carlo path.
pub fn threshold_seed(merkle_root: &[u8; 32]) -> [u8; 32] {
    sha3(&[b"LHT1", merkle_root])
}

/// Per-row distribution of `s = Σ ±q_j` by convolution, summed over rows.
pub fn exact_abs_histogram(bm: &BlockMatrix) -> AbsHistogram {
    let n = bm.n;
    let span = n * (bm.k - 1);
    let parity = grid_parity(n, bm.k);
    bm.blocks
        .par_iter()
        .map(|q| {
            let mut h = AbsHistogram::new(span, parity);
            for i in 0..n {
                let row = row_distribution(q, i, span);
                for (idx, c) in row.iter().enumerate() {
                    let a = (idx as i64 - span as i64).unsigned_abs() as usize;
                    h.counts[a] += c;
                }
                h.total += 1.0;
            }
            h
        })
        .reduce(|| AbsHistogram::new(span, parity), AbsHistogram::merge)
}

/// Probability of each `s + span` under uniform input signs.
fn row_distribution(q: &DMatrix<i32>, i: usize, span: usize) -> Vec<f64> {
    let width = 2 * span + 1;
    let mut cur = vec![0.0; width];
    cur[span] = 1.0;
    let mut next = vec![0.0; width];
    for j in 0..q.ncols() {
        let v = q[(i, j)] as i64;
        next.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &c) in cur.iter().enumerate().filter(|(_, c)| **c > 0.0) {
            for step in [v, -v] {
                next[(idx as i64 + step) as usize] += 0.5 * c;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

fn monte_carlo_abs_histogram(bm: &BlockMatrix, seed: [u8; 32]) -> AbsHistogram {
    let n = bm.n;
    let span = n * (bm.k - 1);
    let parity = grid_parity(n, bm.k);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let inputs: Vec<[u64; 4]> = (0..MONTE_CARLO_DRAWS).map(|_| rng.random()).collect();
    let rows: Vec<Vec<i32>> =
        bm.blocks.iter().flat_map(|q| (0..n).map(move |i| q.row(i).iter().copied().collect::<Vec<_>>())).collect();
    inputs
        .par_chunks(1024)
        .map(|batch| {
            let mut h = AbsHistogram::new(span, parity);
            let mut signs = vec![0i32; 256];
            for words in batch {
                for (beta, s) in signs.iter_mut().enumerate() {
                    let bit = (words[beta / 64] >> (63 - beta % 64)) & 1;
                    *s = 1 - 2 * bit as i32;
                }
                for (r, row) in rows.iter().enumerate() {
                    let chunk = &signs[(r / n) * n..(r / n + 1) * n];
                    let s: i32 = row.iter().zip(chunk).map(|(a, b)| a * b).sum();
                    h.counts[s.unsigned_abs() as usize] += 1.0;
                }
                h.total += rows.len() as f64;
            }
            h
        })
        .reduce(|| AbsHistogram::new(span, parity), AbsHistogram::merge)
}

/// Exact for `N ≤ 16`, otherwise [`MONTE_CARLO_DRAWS`] random inputs drawn
/// from `seed`.
pub fn abs_histogram(bm: &BlockMatrix, seed: [u8; 32]) -> AbsHistogram {
    if bm.n <= EXACT_MAX_N {
        exact_abs_histogram(bm)
    } else {
        monte_carlo_abs_histogram(bm, seed)
    }
}

/// Midpoint threshold minimizing `|P(|s| > t) − ½|`, smaller `t` on ties.
pub fn pick_threshold(h: &AbsHistogram) -> i32 {
    let first = 1 - h.parity;
    let last = h.counts.len() as i64;
    let mut best = (f64::INFINITY, first);
    let mut t = first;
    while t <= last {
        let score = (2.0 * h.above(t) - h.total).abs();
        if score < best.0 {
            best = (score, t);
        }
        t += 2;
    }
    best.1 as i32
}

pub fn select_threshold(bm: &BlockMatrix, seed: [u8; 32]) -> i32 {
    pick_threshold(&abs_histogram(bm, seed))
}
