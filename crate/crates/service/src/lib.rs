//! HTTP service, command line and configuration for lensflow.

pub mod api;
pub mod cli;
pub mod config;
pub mod http;
