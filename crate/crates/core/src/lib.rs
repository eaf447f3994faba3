pub mod bounds;
pub mod config;
pub mod counting;
pub mod cylinder;
pub mod error;
pub mod experiment;
pub mod laws;
pub mod model;
pub mod oracle;
pub mod schedule;
pub mod report;
