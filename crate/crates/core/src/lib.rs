//! Hierarchical block low-rank treatment of cavity radiation inside a
//! transient nonlinear heat-transfer finite-element solver.
//!
//! The crate provides the full pipeline: mesh generation and I/O
//! ([`mesh`]), view-factor quadrature ([`viewfactor`]), geometric
//! clustering and block partitioning ([`cluster`]), the hierarchical
//! matrix format with ACA compression and block LU ([`hmatrix`]), the
//! cavity radiation operator ([`cavity`]), the volume finite-element
//! discretization ([`fem`]), and the implicit-Euler Newton-Krylov driver
//! with its dense reference path ([`solver`]).

pub mod cavity;
pub mod cluster;
pub mod fem;
pub mod geometry;
pub mod hmatrix;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod viewfactor;

pub use cavity::{CavityMode, CavityOperator, NodalPower};
pub use cluster::{build_block_tree, build_index_tree, BlockTree, IndexTree};
pub use hmatrix::{HluFactors, HMatrix, LowRankBlock};
pub use mesh::{extract_boundary, Facet, SurfaceMesh, VolumeMesh};
pub use solver::{run_direct, run_transient, NewtonConfig, TimeSeries};
pub use viewfactor::{QuadPolicy, RowSums};
