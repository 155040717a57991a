//! Library surface of the radcav command line: configuration parsing,
//! command orchestration, and output writers, kept out of main so the
//! integration tests can drive them in-process.

pub mod commands;
pub mod config;
pub mod vtk;
