//! Multi-modal protein representation learning at desk scale.
//!
//! The crate is organised along the stages of the pipeline:
//!
//! * [`otalign`] aligns structure embeddings with the sequence embedding space
//!   through entropic optimal transport over embedding dimensions.
//! * [`hetgraph`] stores the protein/GO heterogeneous graph and samples
//!   ego-graphs from it.
//! * [`diffusion`] implements the marginal-noise categorical diffusion over
//!   edge relations.
//! * [`moe`] and [`denoiser`] are the condition encoder and the graph
//!   transformer denoiser, trained jointly by [`trainer`].
//! * [`predictor`] fine-tunes a classifier on the fused embeddings and scores
//!   it with protein-centric Fmax and pair-level AUPR.
//! * [`synthdata`] generates seeded datasets with planted structure.
//! * [`config`], [`pipeline`] and [`bench`] drive the `dampe` binary.
//!
//! Everything is `f64` and single-threaded so that a seed fully determines a
//! run.

pub mod bench;
pub mod config;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod hetgraph;
pub mod moe;
pub mod numerics;
pub mod otalign;
pub mod pipeline;
pub mod predictor;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
