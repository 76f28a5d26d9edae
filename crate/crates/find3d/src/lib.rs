//! File formats, remote services, the HTTP query service and the command-line
//! front end over `find3d-core`.

pub mod annotations;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod exec;
pub mod manifest;
pub mod ply;
pub mod remote;
pub mod report;
pub mod server;

pub use error::{Error, Result};
pub use exec::RayonExecutor;
pub use find3d_core as core;
