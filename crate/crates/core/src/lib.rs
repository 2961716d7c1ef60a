//! Toolkit for moving keyed mainframe datasets onto an open platform and
//! proving that a modernized batch process produces the same output as the
//! legacy one.
//!
//! * [`copybook`]: copybook parsing and layout resolution.
//! * [`codec`]: EBCDIC, zoned, packed and binary field codecs plus selective
//!   record transcoding.
//! * [`recio`]: fixed and variable (RDW) record files: read, write, inspect, compare.
//! * [`ksds`]: key-sequenced dataset emulation over single-table, per-layout
//!   and write-back cached backends.
//! * [`migrate`]: load, unload, validation and prune strategies.
//! * [`harness`]: parallel-run plans with output-conflict gating and
//!   equivalence reports.
//! * [`cli`]: the `mfmig` command line over all of the above.

pub mod cli;
pub mod codec;
pub mod copybook;
pub mod harness;
pub mod ksds;
pub mod migrate;
pub mod recio;
