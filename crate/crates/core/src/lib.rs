pub mod channel;
pub mod config;
pub mod csvio;
pub mod decoy;
pub mod error;
pub mod gllp;
pub mod linalg;
pub mod lp;
pub mod pipeline;
pub mod protocol;
pub mod sdp;
pub mod solver;
pub mod tha;

pub use error::{Error, Result};
