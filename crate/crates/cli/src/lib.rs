//! Library half of the `lseg` command: subcommands and the benchmark
//! registry, exposed so integration tests can drive them directly.

pub mod bench;
pub mod cmd;
