//! HTTP service and operations CLI for shotindex archive bundles.

pub mod cli;
pub mod service;
