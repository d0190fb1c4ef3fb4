pub mod brownian;
pub mod cli;
pub mod decomposition;
pub mod error;
pub mod fields;
pub mod flow_analysis;
pub mod linalg;
pub mod maximal;
pub mod scenario;
pub mod sde;
pub mod transport;

pub use error::{Result, RoughFlowError};
