//! Filesystem, HTTP and command-line layer over [`pathbank_core`].

pub mod cli;
pub mod config;
pub mod http;
pub mod io;
pub mod parallel;

pub use pathbank_core as core;
