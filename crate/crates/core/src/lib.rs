//! Canonical correlation inference.
//!
//! Learns paired projections of an input feature space and an output feature
//! space with diagonal-normalized CCA, then decodes text outputs by annealed
//! Metropolis-Hastings search over a context-conditioned phrase table, scoring
//! candidates by cosine similarity in the shared space plus a length bonus.
//!
//! Module map:
//!
//! * [`linalg`]: sparse accumulators and thin SVD
//! * [`cca`]: model training, projections, cosine, model files
//! * [`phrase`]: captions, phrase inventories and the context table `Q`
//! * [`decoder`]: the annealed sampler and batch decoding
//! * [`ingest`]: dataset loaders and text features
//! * [`eval`]: BLEU, reference self-BLEU and diversity counts
//! * [`cli`]: the `cca-infer` command line

pub mod cca;
pub mod cli;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod phrase;
pub mod seed;

pub use error::{Error, Result};
