//! Cross-document event coreference with linear semantic transfer between
//! text and vision embedding spaces.

pub mod binio;
pub mod clusterer;
pub mod corpus;
pub mod difficulty;
pub mod embedstore;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod linalg;
pub mod linmap;
pub mod metrics;
pub mod pipeline;
pub mod scorer;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
