//! Moving common-mode loss to the mesh outputs.
//!
//! A loss shared by both inputs of a node commutes with it, so a uniform
//! per-position loss can be accumulated port by port and applied after the
//! last layer. What remains at the phase shifters is the differential part.

use super::node::db_to_field;
use super::{MeshError, MeshProgram};
use crate::noise::{ErrorSample, NodeError};

#[derive(Debug, Clone, PartialEq)]
pub struct FactoredLoss {
    /// Shifter losses relative to the common level (may be negative).
    pub differential: ErrorSample,
    /// Field transmission per output port.
    pub output_loss: Vec<f64>,
}

pub fn factor_common_loss(
    program: &MeshProgram,
    sample: &ErrorSample,
    common_db: f64,
) -> Result<FactoredLoss, MeshError> {
    if sample.nodes.len() != program.nodes.len() {
        return Err(MeshError::ShapeMismatch { expected: program.nodes.len(), got: sample.nodes.len() });
    }
    let n = program.n_ports;
    let per_position = db_to_field(common_db);
    let mut pending = vec![1.0f64; n];
    let mut idx = 0;
    for column in 0..program.depth() {
        let mut busy = vec![false; n];
        while idx < program.nodes.len() && program.nodes[idx].column == column {
            let row = program.nodes[idx].row;
            // Only a balanced pair commutes through the node.
            debug_assert!((pending[row] - pending[row + 1]).abs() <= 1e-15 * pending[row]);
            let shared = pending[row].min(pending[row + 1]) * per_position * per_position;
            pending[row] = shared;
            pending[row + 1] = shared;
            busy[row] = true;
            busy[row + 1] = true;
            idx += 1;
        }
        for port in (0..n).filter(|&p| !busy[p]) {
            pending[port] *= per_position * per_position;
        }
    }
    let differential = ErrorSample {
        nodes: sample
            .nodes
            .iter()
            .map(|e| NodeError {
                loss_theta_db: e.loss_theta_db - common_db,
                loss_phi_db: e.loss_phi_db - common_db,
                ..*e
            })
            .collect(),
        reference_loss_db: 0.0,
        ..sample.clone()
    };
    Ok(FactoredLoss { differential, output_loss: pending })
}
