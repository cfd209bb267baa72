//! Cross-lingual word embeddings from joint training on concatenated
//! monolingual corpora, followed by vocabulary reallocation and alignment
//! refinement of the language-specific subspaces.

pub mod align;
pub mod bli;
pub mod corpus;
pub mod ctx;
pub mod dictionary;
pub mod embed_io;
pub mod error;
pub mod pipeline;
pub mod realloc;
pub mod retrieval;
pub mod sgns;
pub mod synth;

pub use error::{Error, Result};
