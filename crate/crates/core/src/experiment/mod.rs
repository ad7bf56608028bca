//! Scenario configs, the staged pipeline and report bundles.

pub mod bundle;
pub mod config;
pub mod pipeline;

pub use bundle::*;
pub use config::*;
pub use pipeline::*;
