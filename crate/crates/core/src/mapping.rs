//! Mapping results and an independent checker for them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cluster::ComputingSystem;
use crate::error::Result;
use crate::graph;
use crate::makespan::bottom_weights;
use crate::memory::{resident_memory_at_step, BlockView};
use crate::quotient::{QuotientGraph, VertexId};
use crate::workflow::{TaskIdx, WorkflowDag};

pub const FORMAT: u32 = 1;

/// Relative slack when comparing a memory requirement with a capacity, to
/// absorb summation-order differences.
pub const MEMORY_TOLERANCE: f64 = 1e-9;

pub fn fits(requirement: f64, memory: f64) -> bool {
    requirement <= memory + MEMORY_TOLERANCE * memory.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub id: usize,
    pub processor: String,
    pub tasks: Vec<String>,
    /// Execution order of the tasks inside the block.
    pub order: Vec<String>,
    pub work: f64,
    pub requirement: f64,
    pub memory: f64,
    pub speed: f64,
    pub fits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u8,
    pub action: String,
    pub makespan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub format: u32,
    pub algorithm: String,
    /// Parts requested from the partitioner (the chosen k'), or the number of
    /// traversal segments for the baseline.
    pub parts: usize,
    pub makespan: f64,
    /// Block ids along the critical path.
    pub critical_path: Vec<usize>,
    /// Task id to processor id.
    pub assignment: BTreeMap<String, String>,
    pub blocks: Vec<BlockReport>,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infeasible {
    pub algorithm: String,
    pub reason: String,
    /// A task that could not be placed, when one is to blame.
    pub task: Option<String>,
}

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.algorithm, self.reason)?;
        if let Some(t) = &self.task {
            write!(f, " (task {t})")?;
        }
        Ok(())
    }
}

pub type Outcome = std::result::Result<MappingResult, Infeasible>;

impl MappingResult {
    /// Builds the report for a fully assigned, acyclic quotient. `orders`
    /// gives each vertex's execution order; vertices without one use the
    /// cached traversal of the quotient.
    pub fn from_quotient(
        q: &QuotientGraph,
        system: &ComputingSystem,
        algorithm: &str,
        parts: usize,
        orders: &HashMap<VertexId, Vec<TaskIdx>>,
        trace: Vec<TraceEvent>,
    ) -> Result<Self> {
        let dag = q.dag();
        let bw = bottom_weights(q, system)?;
        let mut ids: Vec<VertexId> = q.vertex_ids().collect();
        ids.sort_by_key(|&v| q.vertex(v).members()[0]);
        let block_of: HashMap<VertexId, usize> =
            ids.iter().enumerate().map(|(b, &v)| (v, b)).collect();

        let mut assignment = BTreeMap::new();
        let mut blocks = Vec::with_capacity(ids.len());
        for (b, &v) in ids.iter().enumerate() {
            let p = q.processor(v).expect("every block is assigned");
            let proc = system.processor(p);
            let vertex = q.vertex(v);
            let (order, requirement) = match orders.get(&v) {
                Some(order) => {
                    let view = BlockView::new(dag, vertex.members().iter().copied());
                    let peak = crate::memory::evaluate_order(&view, dag, order)?.peak;
                    (order.clone(), peak)
                }
                None => {
                    let r = q.requirement(v);
                    (r.order.clone(), r.peak)
                }
            };
            for &u in vertex.members() {
                assignment.insert(dag.id(u).to_string(), proc.id.clone());
            }
            blocks.push(BlockReport {
                id: b,
                processor: proc.id.clone(),
                tasks: vertex
                    .members()
                    .iter()
                    .map(|&u| dag.id(u).to_string())
                    .collect(),
                order: order.iter().map(|&u| dag.id(u).to_string()).collect(),
                work: vertex.weight(),
                requirement,
                memory: proc.memory,
                speed: proc.speed,
                fits: fits(requirement, proc.memory),
            });
        }
        Ok(MappingResult {
            format: FORMAT,
            algorithm: algorithm.to_string(),
            parts,
            makespan: bw.makespan,
            critical_path: bw.critical_path.iter().map(|v| block_of[v]).collect(),
            assignment,
            blocks,
            trace,
        })
    }

    /// Makespans recorded during local search, in execution order.
    pub fn local_search_makespans(&self) -> Vec<f64> {
        self.trace
            .iter()
            .filter(|e| e.step == 4)
            .map(|e| e.makespan)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub violations: Vec<String>,
    /// Makespan recomputed from the blocks, when the block graph is acyclic.
    pub makespan: Option<f64>,
}

impl VerifyReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Re-derives everything a result claims from the workflow and system alone:
/// coverage, distinct processors, per-block peak memory along the reported
/// order (stepwise, without the profile shortcut), block-graph acyclicity and
/// the makespan.
pub fn verify_mapping(
    dag: &WorkflowDag,
    system: &ComputingSystem,
    result: &MappingResult,
) -> VerifyReport {
    let mut report = VerifyReport::default();
    let v = &mut report.violations;
    let proc_index: HashMap<&str, usize> = system
        .processors
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();

    let mut block_of: Vec<Option<usize>> = vec![None; dag.len()];
    let mut used = vec![false; system.len()];
    let mut speeds = Vec::with_capacity(result.blocks.len());
    for (b, block) in result.blocks.iter().enumerate() {
        if block.tasks.is_empty() {
            v.push(format!("block {} is empty", block.id));
        }
        let Some(&p) = proc_index.get(block.processor.as_str()) else {
            v.push(format!(
                "block {} uses unknown processor {}",
                block.id, block.processor
            ));
            speeds.push(1.0);
            continue;
        };
        if std::mem::replace(&mut used[p], true) {
            v.push(format!(
                "processor {} holds more than one block",
                block.processor
            ));
        }
        speeds.push(system.processor(p).speed);
        let mut members = Vec::with_capacity(block.tasks.len());
        for id in &block.tasks {
            match dag.index_of(id) {
                None => v.push(format!("block {} lists unknown task {id}", block.id)),
                Some(u) => {
                    if let Some(other) = block_of[u].replace(b) {
                        v.push(format!(
                            "task {id} is in blocks {} and {}",
                            result.blocks[other].id, block.id
                        ));
                    }
                    members.push(u);
                    if result.assignment.get(id) != Some(&block.processor) {
                        v.push(format!(
                            "assignment of task {id} disagrees with block {}",
                            block.id
                        ));
                    }
                }
            }
        }
        let order: Option<Vec<TaskIdx>> = block.order.iter().map(|id| dag.index_of(id)).collect();
        let Some(order) = order else {
            v.push(format!("block {} order names unknown tasks", block.id));
            continue;
        };
        let view = BlockView::new(dag, members.iter().copied());
        let mut peak = 0.0f64;
        for t in 0..order.len() {
            match resident_memory_at_step(&view, dag, &order, t) {
                Ok(r) => peak = peak.max(r),
                Err(e) => {
                    v.push(format!("block {} order is invalid: {e}", block.id));
                    break;
                }
            }
        }
        if order.len() != members.len() {
            v.push(format!(
                "block {} order does not list every task once",
                block.id
            ));
        }
        let memory = system.processor(p).memory;
        if !fits(peak, memory) {
            v.push(format!(
                "block {} needs {peak} but processor {} has {memory}",
                block.id, block.processor
            ));
        }
        if !rel_close(peak, block.requirement) {
            v.push(format!(
                "block {} reports requirement {} but its order peaks at {peak}",
                block.id, block.requirement
            ));
        }
    }
    for (u, b) in block_of.iter().enumerate() {
        if b.is_none() {
            v.push(format!("task {} is in no block", dag.id(u)));
        }
    }
    if result.assignment.len() != dag.len() {
        v.push(format!(
            "assignment lists {} tasks, workflow has {}",
            result.assignment.len(),
            dag.len()
        ));
    }
    // The block graph needs every task placed; the other findings do not
    // stop it from being checked.
    if block_of.iter().any(Option::is_none) || speeds.len() != result.blocks.len() {
        return report;
    }
    let clean = report.violations.is_empty();

    let n = result.blocks.len();
    let mut volume: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut work = vec![0.0f64; n];
    for u in 0..dag.len() {
        work[block_of[u].unwrap()] += dag.task(u).work;
    }
    for e in dag.edges() {
        let (a, b) = (block_of[e.tail].unwrap(), block_of[e.head].unwrap());
        if a != b {
            *volume.entry((a, b)).or_insert(0.0) += e.volume;
        }
    }
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in volume.keys() {
        succ[a].push(b);
    }
    let order = match graph::topo_sort(n, |a| &succ[a]) {
        Ok(order) => order,
        Err(cycle) => {
            let ids: Vec<String> = cycle
                .iter()
                .map(|&b| result.blocks[b].id.to_string())
                .collect();
            report.violations.push(format!(
                "block graph has a cycle through blocks {}",
                ids.join(", ")
            ));
            return report;
        }
    };
    let mut bottom = vec![0.0f64; n];
    for &a in order.iter().rev() {
        let tail = succ[a]
            .iter()
            .map(|&b| volume[&(a, b)] / system.bandwidth + bottom[b])
            .fold(0.0, f64::max);
        bottom[a] = work[a] / speeds[a] + tail;
    }
    let makespan = bottom.iter().copied().fold(0.0, f64::max);
    if clean && !rel_close(makespan, result.makespan) {
        report.violations.push(format!(
            "reported makespan {} differs from recomputed {makespan}",
            result.makespan
        ));
    }
    report.makespan = Some(makespan);
    report
}
