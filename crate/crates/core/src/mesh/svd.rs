//! SVD architecture: `Q = σ_max · U · diag(σ) · V^H`, with `U` and `V^H` on
//! meshes and the normalized singular values on a column of attenuator
//! nodes (signal in on the upper port, out on the lower port, the other
//! output dropped).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::decompose::compose;
use super::node::{mzi_transfer, node_transfer};
use super::{decompose_unitary, CMatrix, Layout, MeshError, MeshProgram, MziNode, NodeRole};
use crate::noise::{ErrorSample, NodeError};

/// Output phase of the attenuator's cross path; `i·e^{iφ} = 1`.
const ATTENUATOR_PHI: f64 = 1.5 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdProgram {
    /// Realizes `V^H` (applied first).
    pub v_mesh: MeshProgram,
    /// Normalized singular values, `max = 1`.
    pub sigma: Vec<f64>,
    pub attenuators: Vec<MziNode>,
    /// Realizes `U`.
    pub u_mesh: MeshProgram,
    pub sigma_max: f64,
    /// `permutation[k]` is the index, in the original descending SVD order,
    /// of the singular triplet now sitting on port `k`.
    pub permutation: Vec<usize>,
    u: CMatrix,
    v_dag: CMatrix,
}

fn attenuator(sigma: f64, port: usize) -> MziNode {
    let theta = 2.0 * sigma.clamp(0.0, 1.0).acos();
    MziNode::new(theta, ATTENUATOR_PHI, port, 0, NodeRole::SingularValueAttenuator)
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(Complex64::from)
}

impl SvdProgram {
    pub fn n_ports(&self) -> usize {
        self.sigma.len()
    }

    /// Nodes in the order an [`ErrorSample`] for this device is laid out:
    /// `V^H` mesh, attenuators, `U` mesh.
    pub fn node_count(&self) -> usize {
        self.v_mesh.node_count() + self.attenuators.len() + self.u_mesh.node_count()
    }

    /// Normalized transfer matrix `U_err · diag(σ_err) · V^H_err`, i.e. the
    /// physical `Q / σ_max` when the sample is absent.
    pub fn transfer(&self, errors: Option<&ErrorSample>) -> Result<CMatrix, MeshError> {
        let n = self.n_ports();
        let (v_err, a_err, u_err, reference) = match errors {
            None => (None, None, None, 0.0),
            Some(s) => {
                if s.nodes.len() != self.node_count() {
                    return Err(MeshError::ShapeMismatch { expected: self.node_count(), got: s.nodes.len() });
                }
                let nv = self.v_mesh.node_count();
                let (v, rest) = s.nodes.split_at(nv);
                let (a, u) = rest.split_at(n);
                (Some(v), Some(a), Some(u), s.reference_loss_db)
            }
        };
        let v = compose(&self.v_mesh, v_err, reference);
        let u = compose(&self.u_mesh, u_err, reference);
        let amps: Vec<Complex64> = self
            .attenuators
            .iter()
            .enumerate()
            .map(|(k, node)| attenuator_amplitude(node, a_err.map(|a| &a[k]), reference))
            .collect();
        let mut middle = v;
        for (k, a) in amps.iter().enumerate() {
            middle.row_mut(k).iter_mut().for_each(|z| *z *= a);
        }
        Ok(u * middle)
    }

    /// `σ_max · U Σ V^H` from the meshes, for comparison with the source block.
    pub fn reconstruct_block(&self) -> CMatrix {
        self.transfer(None).expect("no sample") * Complex64::from(self.sigma_max)
    }

    pub fn u(&self) -> &CMatrix {
        &self.u
    }

    pub fn v_dag(&self) -> &CMatrix {
        &self.v_dag
    }
}

fn attenuator_amplitude(node: &MziNode, err: Option<&NodeError>, reference: f64) -> Complex64 {
    let t = match err {
        None => mzi_transfer(node.theta, node.phi),
        Some(e) => node_transfer(node.theta, node.phi, e, reference),
    };
    t[(1, 0)]
}

fn build(
    u: CMatrix,
    sigma_raw: Vec<f64>,
    v_dag: CMatrix,
    sigma_max: f64,
    permutation: Vec<usize>,
    layout: Layout,
) -> Result<SvdProgram, MeshError> {
    let sigma: Vec<f64> = sigma_raw.iter().map(|s| s / sigma_max).collect();
    let attenuators = sigma.iter().enumerate().map(|(k, &s)| attenuator(s, k)).collect();
    Ok(SvdProgram {
        v_mesh: decompose_unitary(&v_dag, layout)?,
        u_mesh: decompose_unitary(&u, layout)?,
        sigma,
        attenuators,
        sigma_max,
        permutation,
        u,
        v_dag,
    })
}

type RealSvd = (DMatrix<f64>, Vec<f64>, DMatrix<f64>);

/// `Q = U diag(s) V^T` with `s` descending.
pub(crate) fn real_svd(block: &DMatrix<i32>) -> Result<RealSvd, MeshError> {
    let n = block.nrows();
    let q = faer::Mat::<f64>::from_fn(n, n, |i, j| f64::from(block[(i, j)]));
    let svd = q.svd().map_err(|_| MeshError::SvdNoConvergence)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u_sorted = DMatrix::from_fn(n, n, |i, k| u[(i, order[k])]);
    let v_t_sorted = DMatrix::from_fn(n, n, |k, j| v[(j, order[k])]);
    Ok((u_sorted, order.iter().map(|&k| s[k]).collect(), v_t_sorted))
}

/// Largest singular value of an integer block.
pub fn largest_singular_value(block: &DMatrix<i32>) -> Result<f64, MeshError> {
    Ok(real_svd(block)?.1[0])
}

/// Programs an integer block onto the SVD architecture.
pub fn svd_program(block: &DMatrix<i32>, layout: Layout) -> Result<SvdProgram, MeshError> {
    let n = block.nrows();
    if n == 0 || block.ncols() != n {
        return Err(MeshError::NotSquare { rows: n, cols: block.ncols() });
    }
    if block.iter().all(|&x| x == 0) {
        return Err(MeshError::ZeroBlock);
    }
    let (u, sigma_raw, v_t) = real_svd(block)?;
    let sigma_max = sigma_raw[0];
    build(to_complex(&u), sigma_raw, to_complex(&v_t), sigma_max, (0..n).collect(), layout)
}

/// Device for an all-zero block: identity meshes and closed attenuators,
/// with `σ_max` taken as 1.
pub fn dark_program(n: usize, layout: Layout) -> Result<SvdProgram, MeshError> {
    let id = CMatrix::identity(n, n);
    build(id.clone(), vec![0.0; n], id, 1.0, (0..n).collect(), layout)
}

/// Relabels the singular triplets: port `k` of the new program carries the
/// triplet that sat on port `perm[k]`. Both meshes are re-derived.
pub fn permute_svd(program: &SvdProgram, perm: &[usize]) -> Result<SvdProgram, MeshError> {
    let n = program.n_ports();
    let mut seen = vec![false; n];
    let valid = perm.len() == n && perm.iter().all(|&p| p < n && !std::mem::replace(&mut seen[p], true));
    if !valid {
        return Err(MeshError::InvalidPermutation { n, perm: perm.to_vec() });
    }
    let u = CMatrix::from_fn(n, n, |i, k| program.u[(i, perm[k])]);
    let v_dag = CMatrix::from_fn(n, n, |k, j| program.v_dag[(perm[k], j)]);
    let sigma_raw = perm.iter().map(|&p| program.sigma[p] * program.sigma_max).collect();
    let permutation = perm.iter().map(|&p| program.permutation[p]).collect();
    build(u, sigma_raw, v_dag, program.sigma_max, permutation, program.u_mesh.layout)
}

/// Cyclic shift by `r`: port `k` takes triplet `(k - r) mod n`, giving
/// `(1,2,3,4), (4,1,2,3), (3,4,1,2), (2,3,4,1)` for `n = 4`.
pub fn cyclic_permutation(n: usize, r: usize) -> Vec<usize> {
    (0..n).map(|k| (k + n - r % n) % n).collect()
}
