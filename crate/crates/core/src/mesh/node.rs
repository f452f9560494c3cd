use nalgebra::Matrix2;
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_4;

use super::{CMatrix, MeshError};
use crate::noise::NodeError;

pub type Mat2 = Matrix2<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Ideal MZI: `i [[e^{iφ} sin θ/2, cos θ/2], [e^{iφ} cos θ/2, -sin θ/2]]`.
pub fn mzi_transfer(theta: f64, phi: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    Mat2::new(e * s, Complex64::from(c), e * c, Complex64::from(-s)) * I
}

fn coupler(delta: f64) -> Mat2 {
    let (s, c) = (FRAC_PI_4 + delta).sin_cos();
    Mat2::new(c.into(), I * s, I * s, c.into())
}

fn arm(phase: f64, loss_db: f64, reference_db: f64) -> Mat2 {
    let upper = Complex64::from_polar(db_to_field(loss_db), phase);
    let lower = Complex64::from(db_to_field(reference_db));
    Mat2::new(upper, Complex64::ZERO, Complex64::ZERO, lower)
}

/// Field transmission of a loss given in dB.
pub(crate) fn db_to_field(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

/// Physical node with systematic errors:
/// `B(δ_r) · diag(e^{i(θ+δθ)}, 1) · B(δ_l) · diag(e^{i(φ+δφ)}, 1)`, with each
/// phase-shifter loss attenuating the field of the arm it sits on.
///
/// At zero error this equals `e^{iθ/2} · mzi_transfer(θ, φ)`.
pub fn mzi_transfer_noisy(theta: f64, phi: f64, err: &NodeError) -> Result<Mat2, MeshError> {
    for loss in [err.loss_theta_db, err.loss_phi_db] {
        if loss < 0.0 || loss.is_nan() {
            return Err(MeshError::NegativeLoss(loss));
        }
    }
    Ok(raw_product(theta, phi, err, 0.0, 0.0))
}

fn raw_product(theta: f64, phi: f64, err: &NodeError, ref_theta: f64, ref_phi: f64) -> Mat2 {
    coupler(err.d_right)
        * arm(theta + err.d_theta, err.loss_theta_db, ref_theta)
        * coupler(err.d_left)
        * arm(phi + err.d_phi, err.loss_phi_db, ref_phi)
}

/// Node as simulated inside a mesh: the deterministic `e^{iθ/2}` common
/// phase of the physical node is removed so that a zero error reproduces
/// [`mzi_transfer`] exactly, and the shifter losses are taken relative to a
/// `reference_db` loss carried by the opposite arm.
pub(crate) fn node_transfer(theta: f64, phi: f64, err: &NodeError, reference_db: f64) -> Mat2 {
    let relative = NodeError {
        loss_theta_db: err.loss_theta_db - reference_db,
        loss_phi_db: err.loss_phi_db - reference_db,
        ..*err
    };
    raw_product(theta, phi, &relative, 0.0, 0.0) * Complex64::from_polar(1.0, -theta / 2.0)
}

/// Physical node with the opposite arm carrying `reference_db` at both
/// shifter positions, common phase removed as in [`node_transfer`].
pub(crate) fn node_transfer_full(theta: f64, phi: f64, err: &NodeError, reference_db: f64) -> Mat2 {
    raw_product(theta, phi, err, reference_db, reference_db) * Complex64::from_polar(1.0, -theta / 2.0)
}

/// Applies a 2x2 node on ports `(row, row + 1)` from the left: `M <- T M`.
pub(crate) fn apply_left(m: &mut CMatrix, row: usize, t: &Mat2) {
    for c in 0..m.ncols() {
        let a = m[(row, c)];
        let b = m[(row + 1, c)];
        m[(row, c)] = t[(0, 0)] * a + t[(0, 1)] * b;
        m[(row + 1, c)] = t[(1, 0)] * a + t[(1, 1)] * b;
    }
}

/// `M <- M W` acting on columns `(col, col + 1)`.
pub(crate) fn apply_right(m: &mut CMatrix, col: usize, w: &Mat2) {
    for r in 0..m.nrows() {
        let x = m[(r, col)];
        let y = m[(r, col + 1)];
        m[(r, col)] = x * w[(0, 0)] + y * w[(1, 0)];
        m[(r, col + 1)] = x * w[(0, 1)] + y * w[(1, 1)];
    }
}
