//! Std companion to `unicap-core`: file formats, run configuration, the
//! synthetic world generator and the staged training pipeline behind the
//! `unicap` command line tool.

pub mod config;
pub mod formats;
pub mod synth;
pub mod pipeline;
