//! Polygon extraction from raster images via vertex-sequence prediction and
//! permutation matching.
//!
//! The library turns an image into a set of polygons (building footprints) or
//! a planar graph (road networks) in three stages:
//!
//! 1. an encoder/decoder network predicts a sequence of discrete coordinate
//!    tokens, two per vertex ([`model`], [`tokenizer`]);
//! 2. a pair of matching heads scores every vertex pair and an optimal
//!    assignment turns the scores into a permutation matrix whose cycles are
//!    the polygon rings ([`matching`], [`graph`]);
//! 3. decoded rings are merged across overlapping patches and evaluated with
//!    polygon-aware metrics ([`pipeline`], [`metrics`]).
//!
//! Everything is deterministic: fixed seeds reproduce training runs,
//! generated datasets and inference outputs byte-for-byte.

pub mod data;
pub mod error;
pub mod graph;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod tokenizer;

pub use error::{Error, Result};
