//! Run directories, file formats and the command line for `bmu-lab-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod graph_io;
pub mod run;
