//! Reading and writing workflows, clusters and mapping results.

pub mod dot;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::cluster::ComputingSystem;
use crate::error::Result;
use crate::workflow::WorkflowDag;

pub use dot::{parse_dot, write_dot};

pub fn parse_workflow(path: impl AsRef<Path>) -> Result<WorkflowDag> {
    parse_dot(&fs::read_to_string(path)?)
}

pub fn write_workflow(path: impl AsRef<Path>, dag: &WorkflowDag) -> Result<()> {
    Ok(fs::write(path, write_dot(dag))?)
}

/// Cluster JSON: `{"bandwidth": β, "processors": [{"id", "memory", "speed", "kind"}]}`.
pub fn read_cluster(path: impl AsRef<Path>) -> Result<ComputingSystem> {
    read_json(path)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    Ok(fs::write(path, to_json(value)?)?)
}
