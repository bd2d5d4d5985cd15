//! Perplexity selection for t-SNE.
//!
//! * [`tsne`]: exact t-SNE (affinities, KL objective, gradient, optimizer).
//! * [`search`]: perplexity sweeps scored by the penalized-KL criterion
//!   `S = 2 KL + ln(n) Perp / n`, plus description-length accounting.
//! * [`preference`]: GP utility inference from pairwise preferences, used to
//!   check a selection against human (or simulated) judgments.
//! * [`data`]: CSV ingestion, binary dataset files, synthetic generators.
//! * [`render`]: deterministic SVG plots.

pub mod data;
pub mod dataset;
pub mod preference;
pub mod render;
pub mod search;
pub mod tsne;

pub use dataset::{Dataset, DatasetError};
