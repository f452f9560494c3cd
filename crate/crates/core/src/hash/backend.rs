//! Matrix-vector backends. Each is programmed once per block matrix, as a
//! chip would be, and then evaluated per input chunk.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{
    encode_input, oracle_matvec, physical_threshold, threshold_unsigned, BlockMatrix, HashError, LightHashParams,
    ThresholdMode, SIGNED_TIE_TOL,
};
use crate::mesh::{
    cyclic_permutation, dark_program, largest_singular_value, permute_svd, svd_program, CMatrix, CVector, Layout,
    SvdProgram,
};
use crate::noise::{derive_seed, detection_noise, sample_errors, ErrorProfile, ErrorSample};

/// One chunk through the backend. For multi-copy backends `y` is the first
/// copy's field and `p` the averaged detected power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkOutput {
    pub x: CVector,
    pub y: CVector,
    pub p: Vec<f64>,
    /// Exact grid values, oracle only.
    pub s: Option<Vec<i64>>,
    pub bits: Vec<bool>,
}

pub trait Backend: Send + Sync {
    fn params(&self) -> &LightHashParams;
    /// Whether the device holds exactly this `Q`.
    fn programmed_with(&self, bm: &BlockMatrix) -> bool;
    fn sigma_max(&self, block: usize) -> f64;
    fn evaluate(&self, block: usize, bits: &[bool]) -> Result<ChunkOutput, HashError>;
}

fn is_zero_block(q: &DMatrix<i32>) -> bool {
    q.iter().all(|&v| v == 0)
}

/// All-zero blocks (possible for odd K) are given `σ_max = 1`.
fn block_sigma_max(q: &DMatrix<i32>) -> Result<f64, HashError> {
    if is_zero_block(q) {
        return Ok(1.0);
    }
    Ok(largest_singular_value(q)?)
}

fn check_block(params: &LightHashParams, bm: &BlockMatrix) -> Result<(), HashError> {
    params.validate()?;
    if bm.n != params.n || bm.k != params.k {
        return Err(HashError::BackendMismatch);
    }
    Ok(())
}

/// Exact integer arithmetic; the consensus reference.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    params: LightHashParams,
    blocks: Vec<DMatrix<i32>>,
    sigma_max: Vec<f64>,
}

impl OracleBackend {
    pub fn new(bm: &BlockMatrix, params: &LightHashParams) -> Result<Self, HashError> {
        check_block(params, bm)?;
        Ok(Self {
            params: *params,
            blocks: bm.blocks.clone(),
            sigma_max: bm.blocks.iter().map(block_sigma_max).collect::<Result<_, _>>()?,
        })
    }

    pub fn grid_values(&self, block: usize, bits: &[bool]) -> Result<Vec<i64>, HashError> {
        oracle_matvec(&self.blocks[block], bits)
    }
}

impl Backend for OracleBackend {
    fn params(&self) -> &LightHashParams {
        &self.params
    }

    fn programmed_with(&self, bm: &BlockMatrix) -> bool {
        self.blocks == bm.blocks
    }

    fn sigma_max(&self, block: usize) -> f64 {
        self.sigma_max[block]
    }

    fn evaluate(&self, block: usize, bits: &[bool]) -> Result<ChunkOutput, HashError> {
        let n = self.params.n;
        let x = encode_input(bits, n)?;
        let s = oracle_matvec(&self.blocks[block], bits)?;
        let scale = self.sigma_max[block] * (n as f64).sqrt();
        let y = CVector::from_iterator(n, s.iter().map(|&v| Complex64::from(v as f64 / scale)));
        let p = y.iter().map(|z| z.norm_sqr()).collect();
        let t = i64::from(self.params.t_int);
        let bits = match self.params.mode {
            ThresholdMode::Unsigned => s.iter().map(|v| v.abs() > t).collect(),
            ThresholdMode::Signed => s.iter().map(|&v| v > 0).collect(),
        };
        Ok(ChunkOutput { x, y, p, s: Some(s), bits })
    }
}

/// One programmed copy of a block with its static error draw.
#[derive(Debug, Clone)]
pub struct DeviceCopy {
    pub program: SvdProgram,
    pub sample: ErrorSample,
    /// Normalized transfer `≈ Q / σ_max` including the sampled errors.
    pub transfer: CMatrix,
}

/// Simulated SVD device with systematic errors. `R` permuted copies per
/// block are averaged at the detectors (`R = 1` is the plain device).
#[derive(Debug, Clone)]
pub struct CorrectedBackend {
    params: LightHashParams,
    profile: ErrorProfile,
    seed: u64,
    blocks: Vec<DMatrix<i32>>,
    copies: Vec<Vec<DeviceCopy>>,
}

/// Single-copy photonic device.
#[derive(Debug, Clone)]
pub struct PhotonicBackend(CorrectedBackend);

impl PhotonicBackend {
    pub fn new(
        bm: &BlockMatrix,
        params: &LightHashParams,
        profile: &ErrorProfile,
        lambda_nm: f64,
        seed: u64,
        layout: Layout,
    ) -> Result<Self, HashError> {
        let n = params.n;
        let identity = vec![(0..n).collect::<Vec<_>>()];
        let params1 = LightHashParams { r: 1, ..*params };
        let inner = CorrectedBackend::with_schedule(bm, &params1, profile, lambda_nm, seed, layout, &identity)?;
        Ok(Self(CorrectedBackend { params: *params, ..inner }))
    }

    pub fn device(&self, block: usize) -> &DeviceCopy {
        &self.0.copies[block][0]
    }
}

impl Backend for PhotonicBackend {
    fn params(&self) -> &LightHashParams {
        &self.0.params
    }
    fn programmed_with(&self, bm: &BlockMatrix) -> bool {
        self.0.programmed_with(bm)
    }
    fn sigma_max(&self, block: usize) -> f64 {
        self.0.sigma_max(block)
    }
    fn evaluate(&self, block: usize, bits: &[bool]) -> Result<ChunkOutput, HashError> {
        self.0.evaluate(block, bits)
    }
}

impl CorrectedBackend {
    /// `R = params.r` copies using the cyclic schedule.
    pub fn new(
        bm: &BlockMatrix,
        params: &LightHashParams,
        profile: &ErrorProfile,
        lambda_nm: f64,
        seed: u64,
        layout: Layout,
    ) -> Result<Self, HashError> {
        let schedule: Vec<Vec<usize>> = (0..params.r).map(|r| cyclic_permutation(params.n, r)).collect();
        Self::with_schedule(bm, params, profile, lambda_nm, seed, layout, &schedule)
    }

    /// Copy `r` of block `m` is `permute_svd(program, schedule[r])` with its
    /// own error draw seeded from `(seed, m, r)`.
    pub fn with_schedule(
        bm: &BlockMatrix,
        params: &LightHashParams,
        profile: &ErrorProfile,
        lambda_nm: f64,
        seed: u64,
        layout: Layout,
        schedule: &[Vec<usize>],
    ) -> Result<Self, HashError> {
        check_block(params, bm)?;
        profile.validate()?;
        if schedule.len() != params.r {
            return Err(HashError::Schedule { r: params.r, got: schedule.len() });
        }
        let copies = bm
            .blocks
            .iter()
            .enumerate()
            .map(|(m, q)| {
                let base = if is_zero_block(q) { dark_program(q.nrows(), layout)? } else { svd_program(q, layout)? };
                schedule
                    .iter()
                    .enumerate()
                    .map(|(r, perm)| {
                        let program = permute_svd(&base, perm)?;
                        let sample = sample_errors(
                            profile,
                            program.node_count(),
                            lambda_nm,
                            derive_seed(seed, &[m as u64, r as u64]),
                        );
                        let transfer = program.transfer(Some(&sample))?;
                        Ok(DeviceCopy { program, sample, transfer })
                    })
                    .collect::<Result<Vec<_>, HashError>>()
            })
            .collect::<Result<Vec<_>, HashError>>()?;
        Ok(Self { params: *params, profile: *profile, seed, blocks: bm.blocks.clone(), copies })
    }

    pub fn copies(&self, block: usize) -> &[DeviceCopy] {
        &self.copies[block]
    }

    fn noise_seed(&self, block: usize, bits: &[bool]) -> u64 {
        let mut words = [0u64; 4];
        for (j, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            words[j / 64] |= 1 << (j % 64);
        }
        derive_seed(self.seed ^ 0x6c68_6473, &[block as u64, words[0], words[1], words[2], words[3]])
    }
}

impl Backend for CorrectedBackend {
    fn params(&self) -> &LightHashParams {
        &self.params
    }

    fn programmed_with(&self, bm: &BlockMatrix) -> bool {
        self.blocks == bm.blocks
    }

    fn sigma_max(&self, block: usize) -> f64 {
        self.copies[block][0].program.sigma_max
    }

    fn evaluate(&self, block: usize, bits: &[bool]) -> Result<ChunkOutput, HashError> {
        let n = self.params.n;
        let x = encode_input(bits, n)?;
        let copies = &self.copies[block];
        let ys: Vec<CVector> = copies.iter().map(|c| &c.transfer * &x).collect();
        let r = ys.len() as f64;
        let mean_power = |f: &dyn Fn(Complex64) -> f64| -> Vec<f64> {
            (0..n).map(|i| ys.iter().map(|y| f(y[i])).sum::<f64>() / r).collect()
        };
        let sigma = self.profile.detection_noise_sigma;
        let seed = self.noise_seed(block, bits);
        let (p, bits) = match self.params.mode {
            ThresholdMode::Unsigned => {
                let p = detection_noise(&mean_power(&|z| z.norm_sqr()), sigma, seed);
                let p_th = physical_threshold(self.params.t_int, self.sigma_max(block), n);
                let b = threshold_unsigned(&p, p_th);
                (p, b)
            }
            ThresholdMode::Signed => {
                let plus = detection_noise(&mean_power(&|z| (z + 1.0).norm_sqr()), sigma, seed);
                let minus = detection_noise(&mean_power(&|z| (z - 1.0).norm_sqr()), sigma, seed.wrapping_add(1));
                let b = plus.iter().zip(&minus).map(|(a, b)| a - b > 4.0 * SIGNED_TIE_TOL).collect();
                (mean_power(&|z| z.norm_sqr()), b)
            }
        };
        Ok(ChunkOutput { x, y: ys.into_iter().next().expect("R >= 1"), p, s: None, bits })
    }
}

/// `|y|²` for one chunk through a programmed device with the given sample,
/// plus optional detection noise.
pub fn photonic_matvec(
    program: &SvdProgram,
    sample: &ErrorSample,
    bits: &[bool],
    profile: &ErrorProfile,
    noise_seed: u64,
) -> Result<Vec<f64>, HashError> {
    let x = encode_input(bits, program.n_ports())?;
    let y = program.transfer(Some(sample))? * x;
    let p: Vec<f64> = y.iter().map(|z| z.norm_sqr()).collect();
    Ok(detection_noise(&p, profile.detection_noise_sigma, noise_seed))
}
