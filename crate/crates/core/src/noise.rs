//! Systematic error model for photonic meshes.
//!
//! An [`ErrorProfile`] holds the statistics (fabrication spread plus
//! wavelength dispersion); [`sample_errors`] turns it into one concrete,
//! reproducible [`ErrorSample`] for a device. Errors are static: a sample is
//! drawn once per programmed mesh and reused for every input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProfileError {
    #[error("{field} must be non-negative and finite, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("lambda_c must be positive, got {0}")]
    CenterWavelength(f64),
}

pub const DEFAULT_LAMBDA_C_NM: f64 = 1560.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorProfile {
    /// Phase-shifter error spread, radians.
    pub sigma_phase: f64,
    /// Coupler splitting-angle error spread, radians.
    pub sigma_coupling: f64,
    /// Shifter loss spread, dB.
    pub sigma_loss_db: f64,
    /// Common-mode shifter loss, dB.
    pub mean_loss_db: f64,
    /// Coupling dispersion, rad/nm².
    pub mu_bs: f64,
    /// Phase dispersion, rad/nm.
    pub mu_eta: f64,
    /// Calibration wavelength, nm.
    pub lambda_c: f64,
    /// Additive detector noise on output powers.
    #[serde(default)]
    pub detection_noise_sigma: f64,
}

impl Default for ErrorProfile {
    fn default() -> Self {
        Self::zero()
    }
}

impl ErrorProfile {
    pub fn zero() -> Self {
        Self {
            sigma_phase: 0.0,
            sigma_coupling: 0.0,
            sigma_loss_db: 0.0,
            mean_loss_db: 0.0,
            mu_bs: 0.0,
            mu_eta: 0.0,
            lambda_c: DEFAULT_LAMBDA_C_NM,
            detection_noise_sigma: 0.0,
        }
    }

    /// Fabrication-only profile. The common loss is set to three standard
    /// deviations so that clamping at 0 dB almost never triggers.
    pub fn new(sigma_phase: f64, sigma_coupling: f64, sigma_loss_db: f64) -> Self {
        Self { sigma_phase, sigma_coupling, sigma_loss_db, mean_loss_db: 3.0 * sigma_loss_db, ..Self::zero() }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let fields = [
            ("sigma_phase", self.sigma_phase),
            ("sigma_coupling", self.sigma_coupling),
            ("sigma_loss_db", self.sigma_loss_db),
            ("mean_loss_db", self.mean_loss_db),
            ("detection_noise_sigma", self.detection_noise_sigma),
        ];
        for (field, value) in fields {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ProfileError::Negative { field, value });
            }
        }
        if !(self.lambda_c > 0.0 && self.lambda_c.is_finite()) {
            return Err(ProfileError::CenterWavelength(self.lambda_c));
        }
        Ok(())
    }

    pub fn is_error_free(&self) -> bool {
        self.sigma_phase == 0.0
            && self.sigma_coupling == 0.0
            && self.sigma_loss_db == 0.0
            && self.mu_bs == 0.0
            && self.mu_eta == 0.0
    }
}

/// Deviations of one MZI from its programmed state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeError {
    pub d_theta: f64,
    pub d_phi: f64,
    /// Input-side coupler deviation from π/4.
    pub d_left: f64,
    /// Output-side coupler deviation from π/4.
    pub d_right: f64,
    pub loss_theta_db: f64,
    pub loss_phi_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub nodes: Vec<NodeError>,
    pub lambda_nm: f64,
    pub seed: u64,
    /// Common loss level the shifter losses were drawn around; the opposite
    /// arm of each node carries this much, so only the excess is differential.
    pub reference_loss_db: f64,
}

impl ErrorSample {
    pub fn zero(node_count: usize) -> Self {
        Self {
            nodes: vec![NodeError::default(); node_count],
            lambda_nm: DEFAULT_LAMBDA_C_NM,
            seed: 0,
            reference_loss_db: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.nodes.iter().all(|e| *e == NodeError::default())
    }
}

/// Draws one error per component. Standard normals are drawn in a fixed
/// order per node, so the same seed at different wavelengths gives samples
/// that differ only by the dispersive means.
pub fn sample_errors(profile: &ErrorProfile, node_count: usize, lambda_nm: f64, seed: u64) -> ErrorSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dl = lambda_nm - profile.lambda_c;
    let phase_mean = profile.mu_eta * dl;
    let coupling_mean = profile.mu_bs * dl * dl;
    let mut z = || -> f64 { rng.sample(StandardNormal) };
    let nodes = (0..node_count)
        .map(|_| {
            let d_theta = phase_mean + profile.sigma_phase * z();
            let d_phi = phase_mean + profile.sigma_phase * z();
            let d_left = coupling_mean + profile.sigma_coupling * z();
            let d_right = coupling_mean + profile.sigma_coupling * z();
            let loss_theta_db = (profile.mean_loss_db + profile.sigma_loss_db * z()).max(0.0);
            let loss_phi_db = (profile.mean_loss_db + profile.sigma_loss_db * z()).max(0.0);
            NodeError { d_theta, d_phi, d_left, d_right, loss_theta_db, loss_phi_db }
        })
        .collect();
    ErrorSample { nodes, lambda_nm, seed, reference_loss_db: profile.mean_loss_db }
}

/// Mixes a base seed with indices into an independent-looking stream seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = splitmix64(z ^ splitmix64(p.wrapping_add(0x243f_6a88_85a3_08d3)));
    }
    splitmix64(z)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Adds independent `Normal(0, sigma)` noise to each power, clamped at 0.
pub fn detection_noise(powers: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return powers.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    powers
        .iter()
        .map(|&p| {
            let z: f64 = rng.sample(StandardNormal);
            (p + sigma * z).max(0.0)
        })
        .collect()
}
