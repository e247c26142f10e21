//! Word embeddings whose average is a document representation, trained with
//! an unbiased mask-out corruption of the document as global context.

pub mod baseline;
pub mod cli;
pub mod corpus;
pub mod corruption;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
