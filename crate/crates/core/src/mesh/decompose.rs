use num_complex::Complex64;
use std::f64::consts::PI;

use super::node::{apply_left, apply_right, db_to_field, mzi_transfer, node_transfer, node_transfer_full};
use super::{unitarity_deviation, CMatrix, Layout, MeshError, MeshProgram, MziNode, NodeRole};
use crate::noise::{ErrorSample, NodeError};

const UNITARY_TOL: f64 = 1e-8;

/// A node found during elimination, before layer assignment.
#[derive(Debug, Clone, Copy)]
struct PendingNode {
    row: usize,
    theta: f64,
    phi: f64,
}

/// Finds MZI phases realizing `u`, so that `reconstruct(&program, None) == u`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn decompose_unitary(u: &CMatrix, layout: Layout) -> Result<MeshProgram, MeshError> {
    let n = u.nrows();
    if n == 0 || u.ncols() != n {
        return Err(MeshError::NotSquare { rows: n, cols: u.ncols() });
    }
    let deviation = unitarity_deviation(u);
    if !(deviation <= UNITARY_TOL) {
        return Err(MeshError::NotUnitary { deviation });
    }
    let (ordered, diag) = match layout {
        Layout::Rectangular => eliminate_rectangular(u.clone()),
        Layout::Triangular => eliminate_triangular(u.clone()),
    };
    let output_phases = diag.iter().map(|d| super::wrap_phase(d.arg())).collect();
    Ok(MeshProgram { n_ports: n, nodes: assign_layers(n, &ordered, NodeRole::UnitaryInternal), output_phases, layout })
}

/// Right elimination: picks the node `T` on columns `(col, col+1)` so that
/// `(U T^H)[row, col] = 0`, then applies it.
fn null_from_right(u: &mut CMatrix, row: usize, col: usize) -> PendingNode {
    let a = u[(row, col)];
    let b = u[(row, col + 1)];
    let theta = 2.0 * b.norm().atan2(a.norm());
    let phi = a.arg() - b.arg() - PI;
    let t = mzi_transfer(theta, phi);
    apply_right(u, col, &t.adjoint());
    u[(row, col)] = Complex64::ZERO;
    PendingNode { row: col, theta, phi }
}

/// Left elimination: picks `T` on rows `(row-1, row)` so that
/// `(T U)[row, col] = 0`, then applies it.
fn null_from_left(u: &mut CMatrix, row: usize, col: usize) -> PendingNode {
    let a = u[(row - 1, col)];
    let b = u[(row, col)];
    let theta = 2.0 * a.norm().atan2(b.norm());
    let phi = b.arg() - a.arg();
    let t = mzi_transfer(theta, phi);
    apply_left(u, row - 1, &t);
    u[(row, col)] = Complex64::ZERO;
    PendingNode { row: row - 1, theta, phi }
}

/// Clements elimination. Left-side nodes are moved through the residual
/// diagonal using `T(θ,φ)^H D = D' T(θ, arg d₁ − arg d₂)`.
fn eliminate_rectangular(mut u: CMatrix) -> (Vec<PendingNode>, Vec<Complex64>) {
    let n = u.nrows();
    let mut right = Vec::new();
    let mut left = Vec::new();
    for i in 0..n.saturating_sub(1) {
        if i % 2 == 0 {
            for j in 0..=i {
                right.push(null_from_right(&mut u, n - 1 - j, i - j));
            }
        } else {
            for j in 1..=i + 1 {
                left.push(null_from_left(&mut u, n + j - i - 2, j - 1));
            }
        }
    }
    let mut diag: Vec<Complex64> = (0..n).map(|k| u[(k, k)]).collect();
    let mut moved = Vec::with_capacity(left.len());
    for node in left.iter().rev() {
        let (d1, d2) = (diag[node.row], diag[node.row + 1]);
        let phi = d1.arg() - d2.arg();
        diag[node.row] = -Complex64::from_polar(1.0, -node.phi) * d2;
        diag[node.row + 1] = -d2;
        moved.push(PendingNode { row: node.row, theta: node.theta, phi });
    }
    // U = D · moved[last] ⋯ moved[0] · right[last] ⋯ right[0]
    let mut ordered = right;
    ordered.extend(moved);
    (ordered, diag)
}

/// Reck elimination: rows are cleared bottom-up using right nodes only.
fn eliminate_triangular(mut u: CMatrix) -> (Vec<PendingNode>, Vec<Complex64>) {
    let n = u.nrows();
    let mut ordered = Vec::new();
    for row in (1..n).rev() {
        for col in 0..row {
            ordered.push(null_from_right(&mut u, row, col));
        }
    }
    let diag = (0..n).map(|k| u[(k, k)]).collect();
    (ordered, diag)
}

/// Earliest-layer scheduling; nodes touching disjoint ports commute, so the
/// product is unchanged by sorting on `(column, row)`.
fn assign_layers(n: usize, ordered: &[PendingNode], role: NodeRole) -> Vec<MziNode> {
    let mut free = vec![0usize; n];
    let mut nodes: Vec<MziNode> = ordered
        .iter()
        .map(|p| {
            let column = free[p.row].max(free[p.row + 1]);
            free[p.row] = column + 1;
            free[p.row + 1] = column + 1;
            MziNode::new(p.theta, p.phi, p.row, column, role)
        })
        .collect();
    nodes.sort_by_key(|node| (node.column, node.row));
    nodes
}

fn check_sample(program: &MeshProgram, sample: &ErrorSample) -> Result<(), MeshError> {
    if sample.nodes.len() != program.nodes.len() {
        return Err(MeshError::ShapeMismatch { expected: program.nodes.len(), got: sample.nodes.len() });
    }
    Ok(())
}

/// Transfer matrix of a program. With an error sample each node uses its
/// drawn phase, coupling and differential loss errors; the common loss the
/// sample was drawn around is treated as calibrated out.
pub fn reconstruct(program: &MeshProgram, errors: Option<&ErrorSample>) -> Result<CMatrix, MeshError> {
    match errors {
        None => Ok(compose(program, None, 0.0)),
        Some(sample) => {
            check_sample(program, sample)?;
            Ok(compose(program, Some(&sample.nodes), sample.reference_loss_db))
        }
    }
}

pub(crate) fn compose(program: &MeshProgram, errors: Option<&[NodeError]>, reference_db: f64) -> CMatrix {
    let n = program.n_ports;
    let mut m = CMatrix::identity(n, n);
    for (idx, node) in program.nodes.iter().enumerate() {
        let t = match errors {
            None => mzi_transfer(node.theta, node.phi),
            Some(errs) => node_transfer(node.theta, node.phi, &errs[idx], reference_db),
        };
        apply_left(&mut m, node.row, &t);
    }
    apply_output_phases(&mut m, &program.output_phases);
    m
}

fn apply_output_phases(m: &mut CMatrix, phases: &[f64]) {
    for (k, &ph) in phases.iter().enumerate() {
        let e = Complex64::from_polar(1.0, ph);
        m.row_mut(k).iter_mut().for_each(|z| *z *= e);
    }
}

/// Full physical simulation including a common loss of `common_db` on every
/// waveguide at every phase-shifter position: within a node the opposite arm
/// carries it, and ports idle in a layer cross an equal-length passive
/// section. The sampled shifter losses are taken as absolute.
pub fn reconstruct_with_common_loss(
    program: &MeshProgram,
    sample: &ErrorSample,
    common_db: f64,
) -> Result<CMatrix, MeshError> {
    check_sample(program, sample)?;
    let n = program.n_ports;
    let idle = db_to_field(2.0 * common_db);
    let mut m = CMatrix::identity(n, n);
    let mut idx = 0;
    for column in 0..program.depth() {
        let mut busy = vec![false; n];
        while idx < program.nodes.len() && program.nodes[idx].column == column {
            let node = &program.nodes[idx];
            let t = node_transfer_full(node.theta, node.phi, &sample.nodes[idx], common_db);
            apply_left(&mut m, node.row, &t);
            busy[node.row] = true;
            busy[node.row + 1] = true;
            idx += 1;
        }
        for (port, _) in busy.iter().enumerate().filter(|(_, b)| !**b) {
            m.row_mut(port).iter_mut().for_each(|z| *z *= idle);
        }
    }
    apply_output_phases(&mut m, &program.output_phases);
    Ok(m)
}
