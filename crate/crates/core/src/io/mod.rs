//! Configuration files, atomic persistence and report rendering.

mod atomic;
mod config;
mod report;

pub use atomic::atomic_write;
pub use config::{
    DetuningSweepBlock, DriveBlock, PathsBlock, PowerSweepBlock, RunConfigFile, SeedsBlock, SweepBlocks,
    SynthesisBlock, ToleranceBlock,
};
pub use report::{parse_ledger, parse_summary, render_report, Report};
