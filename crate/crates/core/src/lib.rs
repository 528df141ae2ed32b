//! Benchmark of inertial signal combinations for human activity recognition.
//!
//! PAMAP2 protocol recordings are parsed ([`ingest`]), cut into labeled
//! one-second windows for each of fifteen channel combinations
//! ([`pipeline`]), and classified by a small 1D CNN trained from scratch
//! ([`nn`]) under leave-one-subject-out cross-validation ([`experiment`]).
//! [`report`] turns the results into tables and summaries.

pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod experiment;
pub mod report;
pub mod synthetic;
pub mod cli;
