//! Partitioning and mapping of workflow DAGs onto heterogeneous processors
//! with per-processor memory limits.
//!
//! Two mapping algorithms are provided: [`baseline::daghetmem`], which cuts a
//! memory-efficient traversal into processor-sized segments, and
//! [`hetpart::daghetpart`], a four-step heuristic (acyclic partitioning,
//! memory-fitting assignment, makespan-driven merging, swap-based local
//! search) that exploits processor heterogeneity.

pub mod baseline;
pub mod bench;
pub mod cluster;
pub mod error;
pub mod generate;
mod graph;
pub mod hetpart;
pub mod io;
pub mod makespan;
pub mod mapping;
pub mod memory;
pub mod partitioner;
pub mod quotient;
pub mod workflow;

pub use cluster::{ComputingSystem, Preset, ProcIdx, Processor};
pub use error::{Error, Result};
pub use mapping::MappingResult;
pub use workflow::{TaskIdx, WorkflowBuilder, WorkflowDag};
