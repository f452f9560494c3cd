//! Photonic LightHash: a proof-of-work hash whose core is an integer
//! matrix-vector product evaluated on programmable MZI meshes.

pub mod analysis;
pub mod chain;
pub mod hash;
pub mod mesh;
pub mod noise;
