//! HashTag erasure codes: systematic MDS array codes over GF(2^w) with low
//! repair bandwidth for any sub-packetization level.

pub mod analysis;
pub mod codec;
pub mod construction;
pub mod galois;
pub mod iomodel;
pub mod repair;
