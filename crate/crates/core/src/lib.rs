//! Model hub engine: declarative model configs, a uniform inference pipeline,
//! a per-model HTTP gateway, container lifecycle, contribution checks, a model
//! registry, and benchmarking.

pub mod artifact;
pub mod bench;
pub mod cli;
pub mod config;
pub mod engine;
pub mod gateway;
pub mod registry;
pub mod runtime;
pub mod template;
pub mod validator;
