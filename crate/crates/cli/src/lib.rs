//! Library surface of the CLI: result records, instance spec files, and the
//! experiment recipes. The `popsynth` binary is a thin wrapper over these.

pub mod experiments;
pub mod records;
pub mod spec_file;
