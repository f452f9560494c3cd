//! Monte-Carlo cells: random block matrices programmed onto simulated
//! devices, compared output by output against the integer oracle.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{linear_fit, r_squared};
use super::{predict_hash_error, AnalysisError};
use crate::hash::{
    exact_abs_histogram, pick_threshold, Backend, BlockMatrix, CorrectedBackend, LightHashParams, OracleBackend,
};
use crate::mesh::Layout;
use crate::noise::{derive_seed, ErrorProfile};

/// One simulated configuration. `trials` hashes are spread over `devices`
/// independent (Q, error sample) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub n: usize,
    pub k: usize,
    pub profile: ErrorProfile,
    pub lambda_nm: f64,
    pub r: usize,
    pub trials: usize,
    pub devices: usize,
    pub seed: u64,
}

impl CellSpec {
    pub fn new(n: usize, k: usize, profile: ErrorProfile, trials: usize, devices: usize, seed: u64) -> Self {
        Self { n, k, profile, lambda_nm: profile.lambda_c, r: 1, trials, devices, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMeasurement {
    pub spec: CellSpec,
    /// RMS of `|y|` deviations in grid units.
    pub sigma_out: f64,
    /// Device-averaged mass of the spikes adjacent to each device's threshold.
    pub rho: f64,
    /// Fraction of hashes with at least one wrong output bit.
    pub eps_measured: f64,
    /// Fraction of wrong output bits.
    pub bit_error: f64,
    /// `min(1, 256 ρ ℰ(σ_out))`.
    pub eps_predicted: f64,
}

#[derive(Default)]
struct Tally {
    sq: f64,
    outputs: f64,
    wrong_hashes: f64,
    wrong_bits: f64,
    hashes: f64,
    rho: f64,
}

fn run_device(spec: &CellSpec, d: usize, hashes: usize) -> Result<Tally, AnalysisError> {
    let (n, k) = (spec.n, spec.k);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[d as u64, 0]));
    let bm = BlockMatrix::random(n, k, &mut rng)?;
    let hist = exact_abs_histogram(&bm);
    let t = pick_threshold(&hist);
    let params = LightHashParams { r: spec.r, ..LightHashParams::new(n, k, t) };
    let oracle = OracleBackend::new(&bm, &params)?;
    let device_seed = derive_seed(spec.seed, &[d as u64, 1]);
    let device = CorrectedBackend::new(&bm, &params, &spec.profile, spec.lambda_nm, device_seed, Layout::Rectangular)?;
    let scales: Vec<f64> = (0..params.chunks()).map(|m| device.sigma_max(m) * (n as f64).sqrt()).collect();
    let mut tally = Tally { rho: hist.prob(i64::from(t) - 1) + hist.prob(i64::from(t) + 1), ..Tally::default() };
    for _ in 0..hashes {
        let mut wrong = 0usize;
        for (m, scale) in scales.iter().enumerate() {
            let bits: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let ideal = oracle.evaluate(m, &bits)?;
            let got = device.evaluate(m, &bits)?;
            for (s, p) in ideal.s.as_deref().unwrap_or_default().iter().zip(&got.p) {
                let dev = p.sqrt() * scale - s.unsigned_abs() as f64;
                tally.sq += dev * dev;
            }
            tally.outputs += n as f64;
            wrong += ideal.bits.iter().zip(&got.bits).filter(|(a, b)| a != b).count();
        }
        tally.wrong_bits += wrong as f64;
        tally.wrong_hashes += f64::from(u8::from(wrong > 0));
        tally.hashes += 1.0;
    }
    Ok(tally)
}

pub fn measure_cell(spec: &CellSpec) -> Result<CellMeasurement, AnalysisError> {
    if spec.devices == 0 || spec.trials == 0 {
        return Err(AnalysisError::Invalid("devices and trials must be positive"));
    }
    let per = spec.trials / spec.devices;
    let extra = spec.trials % spec.devices;
    let tallies = (0..spec.devices)
        .into_par_iter()
        .map(|d| run_device(spec, d, per + usize::from(d < extra)))
        .collect::<Result<Vec<_>, _>>()?;
    // Summed in device order so results do not depend on scheduling.
    let mut t = Tally::default();
    for x in &tallies {
        t.sq += x.sq;
        t.outputs += x.outputs;
        t.wrong_hashes += x.wrong_hashes;
        t.wrong_bits += x.wrong_bits;
        t.hashes += x.hashes;
        t.rho += x.rho;
    }
    let sigma_out = (t.sq / t.outputs).sqrt();
    let rho = t.rho / spec.devices as f64;
    Ok(CellMeasurement {
        spec: *spec,
        sigma_out,
        rho,
        eps_measured: t.wrong_hashes / t.hashes,
        bit_error: t.wrong_bits / (t.hashes * 256.0),
        eps_predicted: predict_hash_error(rho, sigma_out).linear,
    })
}

/// `σ_out` with all errors on, and with each error type on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub n: usize,
    pub k: usize,
    pub profile: ErrorProfile,
    pub sigma_out: f64,
    pub rho: f64,
    pub sigma_out_phase: f64,
    pub sigma_out_coupling: f64,
    pub sigma_out_loss: f64,
    /// `σ_out,x / (N K σ_x)`, zero when the error type is off.
    pub k_phase: f64,
    pub k_coupling: f64,
    pub k_loss: f64,
}

impl ScalingFit {
    /// Relative miss of `σ_out² = Σ σ_out,x²`.
    pub fn quadrature_residual(&self) -> f64 {
        let sum = self.sigma_out_phase.powi(2) + self.sigma_out_coupling.powi(2) + self.sigma_out_loss.powi(2);
        sum / self.sigma_out.powi(2) - 1.0
    }
}

/// Profiles with one error type kept.
pub fn isolated_profiles(p: &ErrorProfile) -> [ErrorProfile; 3] {
    let base = ErrorProfile { lambda_c: p.lambda_c, ..ErrorProfile::zero() };
    [
        ErrorProfile { sigma_phase: p.sigma_phase, ..base },
        ErrorProfile { sigma_coupling: p.sigma_coupling, ..base },
        ErrorProfile { sigma_loss_db: p.sigma_loss_db, mean_loss_db: p.mean_loss_db, ..base },
    ]
}

/// All four cells share devices and inputs.
pub fn measure_sigma_out(spec: &CellSpec) -> Result<ScalingFit, AnalysisError> {
    let all = measure_cell(spec)?;
    let iso = isolated_profiles(&spec.profile);
    let sig = [spec.profile.sigma_phase, spec.profile.sigma_coupling, spec.profile.sigma_loss_db];
    let mut out = [0.0; 3];
    for (i, p) in iso.iter().enumerate() {
        if sig[i] > 0.0 {
            out[i] = measure_cell(&CellSpec { profile: *p, ..*spec })?.sigma_out;
        }
    }
    let nk = (spec.n * spec.k) as f64;
    let coef = |i: usize| if sig[i] > 0.0 { out[i] / (nk * sig[i]) } else { 0.0 };
    Ok(ScalingFit {
        n: spec.n,
        k: spec.k,
        profile: spec.profile,
        sigma_out: all.sigma_out,
        rho: all.rho,
        sigma_out_phase: out[0],
        sigma_out_coupling: out[1],
        sigma_out_loss: out[2],
        k_phase: coef(0),
        k_coupling: coef(1),
        k_loss: coef(2),
    })
}

/// [`measure_sigma_out`] over a grid; cell `i` uses seed `seed + i`.
pub fn scaling_sweep(
    n_list: &[usize],
    k_list: &[usize],
    profile: &ErrorProfile,
    trials: usize,
    devices: usize,
    seed: u64,
) -> Result<Vec<ScalingFit>, AnalysisError> {
    let cells: Vec<(usize, usize)> = n_list.iter().flat_map(|&n| k_list.iter().map(move |&k| (n, k))).collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(i, &(n, k))| measure_sigma_out(&CellSpec::new(n, k, *profile, trials, devices, seed + i as u64)))
        .collect()
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub sigma_phase: f64,
    pub sigma_coupling: f64,
    pub sigma_loss_db: f64,
    pub lambda_nm: f64,
    pub r_copies: usize,
    pub sigma_out: f64,
    pub rho: f64,
    pub eps_predicted: f64,
    pub eps_measured: f64,
    pub trials: usize,
    pub seed: u64,
}

impl From<&CellMeasurement> for SweepRow {
    fn from(m: &CellMeasurement) -> Self {
        let s = &m.spec;
        Self {
            n: s.n,
            k: s.k,
            sigma_phase: s.profile.sigma_phase,
            sigma_coupling: s.profile.sigma_coupling,
            sigma_loss_db: s.profile.sigma_loss_db,
            lambda_nm: s.lambda_nm,
            r_copies: s.r,
            sigma_out: m.sigma_out,
            rho: m.rho,
            eps_predicted: m.eps_predicted,
            eps_measured: m.eps_measured,
            trials: s.trials,
            seed: s.seed,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn scaled(p: &ErrorProfile, s: f64) -> ErrorProfile {
    ErrorProfile {
        sigma_phase: p.sigma_phase * s,
        sigma_coupling: p.sigma_coupling * s,
        sigma_loss_db: p.sigma_loss_db * s,
        mean_loss_db: p.mean_loss_db * s,
        ..*p
    }
}

/// Every `(N, K, scale)` combination, where `scale` multiplies the spread
/// of the template profile. Cell `i` uses seed `seed + i`.
pub fn feasibility_sweep(
    n_list: &[usize],
    k_list: &[usize],
    scales: &[f64],
    template: &ErrorProfile,
    trials: usize,
    devices: usize,
    seed: u64,
) -> Result<Vec<CellMeasurement>, AnalysisError> {
    let mut specs = Vec::new();
    for &n in n_list {
        for &k in k_list {
            for &s in scales {
                let i = specs.len() as u64;
                specs.push(CellSpec::new(n, k, scaled(template, s), trials, devices, seed + i));
            }
        }
    }
    specs.par_iter().map(measure_cell).collect()
}

/// `ε(λ) = ε_c (1 + D_ε (λ − λ_c)²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionFit {
    pub epsilon_center: f64,
    pub d_epsilon: f64,
    pub lambda_c: f64,
    pub r_squared: f64,
    /// Vertex of an unconstrained quadratic fit, `None` without curvature.
    pub vertex_nm: Option<f64>,
    pub rows: Vec<SweepRow>,
}

/// Least squares on `1, Δλ²`, plus the free quadratic for the vertex.
pub fn dispersion_fit(
    lambda_c: f64,
    lambdas: &[f64],
    eps: &[f64],
) -> Result<(f64, f64, f64, Option<f64>), AnalysisError> {
    let x2: Vec<f64> = lambdas.iter().map(|l| (l - lambda_c).powi(2)).collect();
    if x2.iter().all(|x| *x == x2[0]) {
        return Err(AnalysisError::DegenerateFit("wavelengths must not all sit at one |Δλ|"));
    }
    let (b, a, _) = linear_fit(&x2, eps);
    if a <= 0.0 {
        return Err(AnalysisError::DegenerateFit("non-positive error at the center wavelength"));
    }
    let r2 = r_squared(eps, x2.iter().map(|x| a + b * x));
    let vertex = quadratic_vertex(&centered(lambdas, lambda_c), eps).map(|x| x + lambda_c);
    Ok((a, b / a, r2, vertex))
}

fn centered(lambdas: &[f64], c: f64) -> Vec<f64> {
    lambdas.iter().map(|l| l - c).collect()
}

/// Vertex `−c₁ / 2c₂` of `c₀ + c₁x + c₂x²` by normal equations.
fn quadratic_vertex(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (x, y) in xs.iter().zip(ys) {
        let row = nalgebra::Vector3::new(1.0, *x, x * x);
        ata += row * row.transpose();
        aty += row * *y;
    }
    let c = ata.lu().solve(&aty)?;
    (c[2].abs() > 1e-300).then(|| -c[1] / (2.0 * c[2]))
}

/// One cell per wavelength. All cells share the seed, so devices and
/// inputs are identical and only the dispersive error terms move.
pub fn dispersion_sweep(spec: &CellSpec, lambdas: &[f64]) -> Result<DispersionFit, AnalysisError> {
    let cells = lambdas
        .par_iter()
        .map(|&l| measure_cell(&CellSpec { lambda_nm: l, ..*spec }))
        .collect::<Result<Vec<_>, _>>()?;
    let eps: Vec<f64> = cells.iter().map(|c| c.eps_measured).collect();
    let lambda_c = spec.profile.lambda_c;
    let (a, d, r2, vertex) = dispersion_fit(lambda_c, lambdas, &eps)?;
    Ok(DispersionFit {
        epsilon_center: a,
        d_epsilon: d,
        lambda_c,
        r_squared: r2,
        vertex_nm: vertex,
        rows: cells.iter().map(SweepRow::from).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub plain: CellMeasurement,
    pub corrected: CellMeasurement,
    /// `σ_out(R = 1) / σ_out(R)`.
    pub ratio: f64,
}

/// `R = 1` against `R = r` on the same devices: copy 0 of the corrected
/// device is the plain device.
pub fn correction_sweep(
    n_list: &[usize],
    k_list: &[usize],
    profile: &ErrorProfile,
    r: usize,
    trials: usize,
    devices: usize,
    seed: u64,
) -> Result<Vec<CorrectionRow>, AnalysisError> {
    let cells: Vec<(usize, usize)> = n_list.iter().flat_map(|&n| k_list.iter().map(move |&k| (n, k))).collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(i, &(n, k))| {
            let base = CellSpec::new(n, k, *profile, trials, devices, seed + i as u64);
            let plain = measure_cell(&base)?;
            let corrected = measure_cell(&CellSpec { r, ..base })?;
            Ok(CorrectionRow { plain, corrected, ratio: plain.sigma_out / corrected.sigma_out })
        })
        .collect()
}
