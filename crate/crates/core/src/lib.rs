//! Selective corpus building over CDX-indexed web archives.

pub mod bench;
pub mod cdx;
pub mod cli;
pub mod corpusgen;
pub mod enrich;
pub mod jsonout;
pub mod model;
pub mod pipeline;
pub mod warcio;
