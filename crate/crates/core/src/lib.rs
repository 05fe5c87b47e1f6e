pub mod corpus;
pub mod depth;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod plane;
pub mod roipool;
pub mod segment;
pub mod tensor;

pub use error::{Error, Result};
