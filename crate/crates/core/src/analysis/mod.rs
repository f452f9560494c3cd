//! Closed-form models and Monte-Carlo measurements of hash error, error
//! scaling, dispersion, energy and the rescaling calculators.

mod sim;
pub mod stats;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use sim::{
    correction_sweep, dispersion_fit, dispersion_sweep, feasibility_sweep, measure_cell, measure_sigma_out,
    scaling_sweep, write_csv, CellMeasurement, CellSpec, CorrectionRow, DispersionFit, ScalingFit, SweepRow,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("fit is degenerate: {0}")]
    DegenerateFit(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Hash(#[from] crate::hash::HashError),
}

/// Probability that a `Normal(0, σ)` deviation passes one grid
/// half-spacing in a given direction.
pub fn overlap_error(sigma_out: f64) -> f64 {
    if sigma_out <= 0.0 {
        return 0.0;
    }
    0.5 * erfc(1.0 / (sigma_out * std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashErrorPrediction {
    /// Per-bit error `ρ ℰ(σ_out)`.
    pub eps_bit: f64,
    /// `min(1, 256 ε_b)`.
    pub linear: f64,
    /// `1 − (1 − ε_b)^256`.
    pub exact: f64,
}

pub fn predict_hash_error(rho: f64, sigma_out: f64) -> HashErrorPrediction {
    let eps_bit = rho * overlap_error(sigma_out);
    HashErrorPrediction {
        eps_bit,
        linear: (256.0 * eps_bit).min(1.0),
        exact: -f64::exp_m1(256.0 * f64::ln_1p(-eps_bit)),
    }
}

/// Distribution of `s = Σ_j q_j x_j` over `s + N(K − 1)` when entries and
/// input signs are uniform. Each term is then uniform on the `K` grid values.
pub fn iid_output_distribution(n: usize, k: usize) -> Vec<f64> {
    let span = n * (k - 1);
    let mut cur = vec![0.0; 2 * span + 1];
    cur[span] = 1.0;
    let w = 1.0 / k as f64;
    for _ in 0..n {
        let mut next = vec![0.0; cur.len()];
        for (idx, &c) in cur.iter().enumerate().filter(|(_, c)| **c > 0.0) {
            for q in 1..=k {
                let v = 2 * q as i64 - k as i64 - 1;
                next[(idx as i64 + v) as usize] += w * c;
            }
        }
        cur = next;
    }
    cur
}

/// Probability of `|s| = a` under [`iid_output_distribution`].
fn abs_mass(dist: &[f64], span: usize, a: i64) -> f64 {
    if a < 0 || a as usize > span {
        return 0.0;
    }
    let a = a as usize;
    if a == 0 {
        dist[span]
    } else {
        dist[span + a] + dist[span - a]
    }
}

/// Mass of the two grid spikes adjacent to `t_int`.
pub fn estimate_rho(n: usize, k: usize, t_int: i32) -> f64 {
    let span = n * (k - 1);
    let dist = iid_output_distribution(n, k);
    let t = i64::from(t_int);
    abs_mass(&dist, span, t - 1) + abs_mass(&dist, span, t + 1)
}

/// Monte-Carlo version of [`estimate_rho`]: returns the estimate and its
/// standard error.
pub fn estimate_rho_mc(n: usize, k: usize, t_int: i32, samples: usize, seed: u64) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let t = i64::from(t_int);
    let hits = (0..samples)
        .filter(|_| {
            let s: i64 = (0..n).map(|_| 2 * rng.random_range(1..=k as i64) - k as i64 - 1).sum();
            (s.abs() - t).abs() == 1
        })
        .count();
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Midpoint threshold of [`iid_output_distribution`], as chosen for a block.
pub fn iid_threshold(n: usize, k: usize) -> i32 {
    let span = n * (k - 1);
    let dist = iid_output_distribution(n, k);
    let parity = crate::hash::grid_parity(n, k);
    let counts: Vec<f64> = (0..=span).map(|a| abs_mass(&dist, span, a as i64)).collect();
    crate::hash::pick_threshold(&crate::hash::AbsHistogram { counts, total: 1.0, parity })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub comparator_fj_per_bit: f64,
    pub modulator_fj_per_bit: f64,
    /// Energy `A` per digital multiply-accumulate, pJ.
    pub digital_op_pj: f64,
    pub sha_asic_pj_per_hash: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { comparator_fj_per_bit: 40.0, modulator_fj_per_bit: 1.0, digital_op_pj: 0.1, sha_asic_pj_per_hash: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub n: usize,
    pub photonic_pj_per_hash: f64,
    pub digital_matmul_pj_per_hash: f64,
    /// Digital over photonic.
    pub ratio: f64,
    /// The SHA3 stages, common to both.
    pub sha_pj_per_hash: f64,
}

/// Totals are accumulated in femtojoules, so each reported value is the
/// correctly rounded decimal result.
pub fn energy_estimate(n: usize, model: &EnergyModel) -> EnergyEstimate {
    let photonic_fj = 256.0 * (model.modulator_fj_per_bit + model.comparator_fj_per_bit);
    let digital_fj = 256.0 * n as f64 * (model.digital_op_pj * 1000.0);
    EnergyEstimate {
        n,
        photonic_pj_per_hash: photonic_fj / 1000.0,
        digital_matmul_pj_per_hash: digital_fj / 1000.0,
        ratio: digital_fj / photonic_fj,
        sha_pj_per_hash: model.sha_asic_pj_per_hash,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleResult {
    pub xi: f64,
    /// `η_ref / η_out` needed when the tap is fixed at `ξ = ½` instead.
    pub responsivity_ratio: f64,
    pub sigma_max: f64,
    pub p_th: f64,
    pub loss_fraction: f64,
    pub power: f64,
    pub n: usize,
    pub c_out: f64,
    pub c_ref: f64,
}

fn scale_factors(xi: f64, sigma_max: f64, loss: f64, power: f64, n: usize) -> (f64, f64) {
    let c_out = (1.0 - xi) * power * loss / (sigma_max * sigma_max * n as f64);
    let c_ref = xi * power / n as f64;
    (c_out, c_ref)
}

// Negated comparisons so NaN fails.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_rescale(sigma_max: f64, p_th: f64, loss: f64) -> Result<(), AnalysisError> {
    if !(loss > 0.0 && loss <= 1.0) {
        return Err(AnalysisError::Invalid("loss fraction must be in (0, 1]"));
    }
    if !(p_th > 0.0) || !(sigma_max > 0.0) {
        return Err(AnalysisError::Invalid("p_th and sigma_max must be positive"));
    }
    Ok(())
}

/// Tap fraction that makes the reference photocurrent equal an output
/// sitting exactly at `p_th`.
pub fn rescale_tap(sigma_max: f64, p_th: f64, loss: f64, power: f64, n: usize) -> Result<RescaleResult, AnalysisError> {
    check_rescale(sigma_max, p_th, loss)?;
    let ratio = sigma_max * sigma_max / (p_th * loss);
    let xi = 1.0 / (1.0 + ratio);
    let (c_out, c_ref) = scale_factors(xi, sigma_max, loss, power, n);
    Ok(RescaleResult { xi, responsivity_ratio: ratio, sigma_max, p_th, loss_fraction: loss, power, n, c_out, c_ref })
}

/// Alternate calibration: `ξ = ½` with the mismatch taken up by detector
/// responsivities.
pub fn rescale_bias(
    sigma_max: f64,
    p_th: f64,
    loss: f64,
    power: f64,
    n: usize,
) -> Result<RescaleResult, AnalysisError> {
    check_rescale(sigma_max, p_th, loss)?;
    let ratio = sigma_max * sigma_max / (p_th * loss);
    let (c_out, c_ref) = scale_factors(0.5, sigma_max, loss, power, n);
    Ok(RescaleResult {
        xi: 0.5,
        responsivity_ratio: ratio,
        sigma_max,
        p_th,
        loss_fraction: loss,
        power,
        n,
        c_out,
        c_ref,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub count: BigUint,
    pub log10: f64,
}

/// `(2K)^N`.
pub fn state_space(n: usize, k: usize) -> StateSpace {
    let count = BigUint::from(2 * k).pow(n as u32);
    StateSpace { count, log10: n as f64 * ((2 * k) as f64).log10() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_error(0.0), 0.0);
        assert!(overlap_error(1e-3) < 1e-300);
        assert!((overlap_error(1.0) - 0.158_655_253_931_457).abs() < 1e-10);
        assert!((overlap_error(0.25) - 3.167e-5).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn overlap_is_monotone_and_bounded(a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(overlap_error(lo) <= overlap_error(hi));
            prop_assert!((0.0..0.5).contains(&overlap_error(hi)));
        }

        #[test]
        fn linear_matches_exact_for_small_bit_error(eps_b in 0.0f64..1e-4) {
            let exact = -f64::exp_m1(256.0 * f64::ln_1p(-eps_b));
            let linear = 256.0 * eps_b;
            prop_assert!(linear == exact || (linear / exact - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn prediction_examples() {
        assert_eq!(predict_hash_error(0.9, 0.0).linear, 0.0);
        let p = predict_hash_error(0.875, 0.25);
        assert!((p.linear - 0.0071).abs() < 1e-4, "{}", p.linear);
        assert!(p.exact < p.linear);
        // A 1% hash error needs about 0.004% per bit.
        let eps_b = 1.0 - 0.99f64.powf(1.0 / 256.0);
        assert!((eps_b - 3.9e-5).abs() < 1e-6);
    }

    #[test]
    fn rho_examples() {
        assert_eq!(estimate_rho(4, 2, 1), 0.875);
        assert_eq!(estimate_rho(2, 2, 1), 1.0);
        let r: Vec<f64> = [4, 8, 16].iter().map(|&n| estimate_rho(n, 2, iid_threshold(n, 2))).collect();
        assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
        let r: Vec<f64> = [4, 8, 16].iter().map(|&n| estimate_rho(n, 4, iid_threshold(n, 4))).collect();
        assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
    }

    #[test]
    fn rho_exact_vs_monte_carlo() {
        for (n, k) in [(4, 2), (8, 3), (16, 4)] {
            let t = iid_threshold(n, k);
            let exact = estimate_rho(n, k, t);
            let (mc, se) = estimate_rho_mc(n, k, t, 200_000, 9);
            assert!((exact - mc).abs() < 3.0 * se, "N={n} K={k}: {exact} vs {mc} ± {se}");
        }
    }

    #[test]
    fn iid_distribution_is_binomial_for_k2() {
        let d = iid_output_distribution(4, 2);
        let expect = [1.0, 0.0, 4.0, 0.0, 6.0, 0.0, 4.0, 0.0, 1.0].map(|c| c / 16.0);
        assert_eq!(d, expect);
    }

    #[test]
    fn energy_examples() {
        let e = energy_estimate(64, &EnergyModel::default());
        assert_eq!(e.photonic_pj_per_hash, 10.496);
        assert_eq!(e.digital_matmul_pj_per_hash, 1638.4);
        assert_eq!(e.digital_matmul_pj_per_hash / 1000.0, 1.6384);
        assert!((e.ratio - 156.1).abs() < 0.05);
    }

    #[test]
    fn rescale_examples() {
        let r = rescale_tap(2.0, 4.0, 1.0, 1.0, 4).unwrap();
        assert_eq!(r.xi, 0.5);
        assert_eq!(r.responsivity_ratio, 1.0);
        let r = rescale_tap(1.0, 4.0, 1.0, 1.0, 4).unwrap();
        assert!((r.xi - 0.8).abs() < 1e-15);
        for (s, p, l) in [(1.0, 4.0, 1.0), (3.7, 0.2, 0.31), (0.5, 9.0, 0.9)] {
            let r = rescale_tap(s, p, l, 2.5, 8).unwrap();
            assert!((r.c_out - r.c_ref / p).abs() <= 1e-12 * r.c_ref);
        }
        let b = rescale_bias(3.0, 1.0, 0.5, 1.0, 4).unwrap();
        assert_eq!(b.xi, 0.5);
        assert_eq!(b.responsivity_ratio, 18.0);
        assert!(rescale_tap(1.0, 1.0, 0.0, 1.0, 4).is_err());
    }

    #[test]
    fn state_space_examples() {
        assert_eq!(state_space(2, 64).count, BigUint::from(16_384u32));
        assert_eq!(state_space(4, 9).count, BigUint::from(104_976u32));
        let s = state_space(64, 2);
        assert_eq!(s.count, BigUint::from(4u32).pow(64));
        assert!((s.log10 - 38.53).abs() < 0.01);
        // 4^64 is about 3.4e38.
        assert!(s.count.to_string().starts_with("340"));
    }
}
