//! Linear optics for Mach-Zehnder meshes.
//!
//! A [`MeshProgram`] is an ordered list of MZI nodes, each acting on two
//! adjacent ports, followed by a screen of output phases. Programs are found
//! by [`decompose_unitary`] and evaluated by [`reconstruct`], optionally with
//! a concrete [`ErrorSample`](crate::noise::ErrorSample) applied node by node.
//! The SVD architecture in [`svd`] chains two meshes around a column of
//! attenuator nodes.

mod decompose;
mod loss;
mod node;
pub mod svd;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub use decompose::{decompose_unitary, reconstruct, reconstruct_with_common_loss};
pub use loss::{factor_common_loss, FactoredLoss};
pub use node::{mzi_transfer, mzi_transfer_noisy, Mat2};
pub use svd::{cyclic_permutation, dark_program, largest_singular_value, permute_svd, svd_program, SvdProgram};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MeshError {
    #[error("matrix is not unitary: max |U^H U - I| = {deviation:.3e}")]
    NotUnitary { deviation: f64 },
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("negative phase-shifter loss: {0} dB")]
    NegativeLoss(f64),
    #[error("error sample has {got} node entries, program needs {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("not a permutation of 0..{n}: {perm:?}")]
    InvalidPermutation { n: usize, perm: Vec<usize> },
    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,
    #[error("cannot program an all-zero block")]
    ZeroBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Clements-style, depth N.
    #[default]
    Rectangular,
    /// Reck-style, depth 2N - 3.
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    UnitaryInternal,
    SingularValueAttenuator,
}

/// One programmed MZI. `row` is the upper port it acts on (the node couples
/// `row` and `row + 1`), `column` is its layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MziNode {
    pub theta: f64,
    pub phi: f64,
    pub row: usize,
    pub column: usize,
    pub role: NodeRole,
}

impl MziNode {
    pub fn new(theta: f64, phi: f64, row: usize, column: usize, role: NodeRole) -> Self {
        Self { theta: wrap_phase(theta), phi: wrap_phase(phi), row, column, role }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshProgram {
    pub n_ports: usize,
    /// Sorted by `(column, row)`; nodes sharing a column touch disjoint ports.
    pub nodes: Vec<MziNode>,
    pub output_phases: Vec<f64>,
    pub layout: Layout,
}

impl MeshProgram {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of layers, i.e. the optical depth of the mesh.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.column + 1).max().unwrap_or(0)
    }
}

/// Reduces a phase into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// `max |A^H A - I|` over all entries.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let g = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Like [`max_abs_diff`] after removing the best single global phase of `b`
/// relative to `a`.
pub fn max_abs_diff_up_to_phase(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum();
    let rot = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
    a.iter().zip(b.iter()).map(|(x, y)| (x - y * rot).norm()).fold(0.0, f64::max)
}

/// Haar-random unitary via QR of a complex Ginibre matrix with the phase of
/// `R`'s diagonal removed.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}
