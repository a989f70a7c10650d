//! Shard directories for HashTag erasure coded files.

pub mod store;
