pub mod alignment;
pub mod attribution;
pub mod corpus;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
