//! Command-line front end for synthetic-data disclosure risk assessment:
//! file formats, run configuration, orchestration and reports.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;
