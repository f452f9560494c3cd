use serde::{Deserialize, Serialize};

/// `"LHB1" ‖ height ‖ prev ‖ root ‖ N ‖ K ‖ D ‖ t_int`, integers big-endian.
pub const HEADER_LEN: usize = 4 + 8 + 32 + 32 + 2 + 2 + 2 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: [u8; 32],
    pub merkle_root: [u8; 32],
    pub n: u16,
    pub k: u16,
    pub difficulty: u16,
    pub t_int: i32,
}

impl BlockHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        let mut at = 0;
        let mut put = |bytes: &[u8]| {
            out[at..at + bytes.len()].copy_from_slice(bytes);
            at += bytes.len();
        };
        put(b"LHB1");
        put(&self.height.to_be_bytes());
        put(&self.prev_hash);
        put(&self.merkle_root);
        put(&self.n.to_be_bytes());
        put(&self.k.to_be_bytes());
        put(&self.difficulty.to_be_bytes());
        put(&self.t_int.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != HEADER_LEN || &bytes[..4] != b"LHB1" {
            return None;
        }
        let arr32 = |at: usize| -> [u8; 32] { bytes[at..at + 32].try_into().expect("32 bytes") };
        Some(Self {
            height: u64::from_be_bytes(bytes[4..12].try_into().ok()?),
            prev_hash: arr32(12),
            merkle_root: arr32(44),
            n: u16::from_be_bytes(bytes[76..78].try_into().ok()?),
            k: u16::from_be_bytes(bytes[78..80].try_into().ok()?),
            difficulty: u16::from_be_bytes(bytes[80..82].try_into().ok()?),
            t_int: i32::from_be_bytes(bytes[82..86].try_into().ok()?),
        })
    }
}
