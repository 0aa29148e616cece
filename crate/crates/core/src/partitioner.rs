//! Acyclic k-way partitioning of a workflow or of a subset of its tasks.
//!
//! The built-in partitioner cuts a topological order into contiguous chunks
//! of balanced weight and then moves single tasks between adjacent chunks
//! while that lowers the cut volume. Since every edge points from a chunk to
//! the same or a later chunk, the induced quotient is acyclic by construction.
//! Two orders are tried, breadth-first and depth-first, and the partition
//! with the smaller cut is kept (breadth-first on ties).
//!
//! [`ExternalPartitioner`] runs a separate program through a file exchange:
//!
//! ```text
//! <program> [args...] <input.dot> <k> <output.txt>
//! ```
//!
//! `input.dot` holds the induced subgraph in the workflow DOT format and the
//! program writes one `taskid partid` line per task to `output.txt`. Part ids
//! are arbitrary non-negative integers. The output is checked for coverage
//! and acyclicity before it is accepted.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph;
use crate::io::dot;
use crate::workflow::{TaskIdx, WorkflowBuilder, WorkflowDag};

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Refinement passes over all tasks before giving up on further gains.
const MAX_PASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Work,
    /// Task memory requirement `r_u`.
    MemoryRequirement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionRequest {
    pub parts: usize,
    pub epsilon: f64,
    pub weight: WeightKind,
    pub seed: u64,
}

impl PartitionRequest {
    pub fn new(parts: usize) -> Self {
        PartitionRequest {
            parts,
            epsilon: DEFAULT_EPSILON,
            weight: WeightKind::Work,
            seed: 0,
        }
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn weight(mut self, weight: WeightKind) -> Self {
        self.weight = weight;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub trait Partitioner: Send + Sync {
    /// Splits `members` (task indices of `dag`) into non-empty parts whose
    /// quotient is acyclic. Parts are returned sorted, ordered by their
    /// smallest member.
    fn partition(
        &self,
        dag: &WorkflowDag,
        members: &[TaskIdx],
        request: &PartitionRequest,
    ) -> Result<Vec<Vec<TaskIdx>>>;
}

/// Checks that `parts` cover `members` exactly once, are non-empty, and
/// induce an acyclic quotient on the subgraph spanned by `members`.
pub fn validate_parts(
    dag: &WorkflowDag,
    members: &[TaskIdx],
    parts: &[Vec<TaskIdx>],
) -> Result<()> {
    let mut part_of: HashMap<TaskIdx, usize> = HashMap::with_capacity(members.len());
    for (p, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::EmptyBlock);
        }
        for &u in part {
            if part_of.insert(u, p).is_some() {
                return Err(Error::InvalidPartitionRequest(format!(
                    "task {} is in two parts",
                    dag.id(u)
                )));
            }
        }
    }
    for &u in members {
        if !part_of.contains_key(&u) {
            return Err(Error::InvalidPartitionRequest(format!(
                "task {} is in no part",
                dag.id(u)
            )));
        }
    }
    if part_of.len() != members.len() {
        return Err(Error::InvalidPartitionRequest(
            "parts contain tasks outside the input".into(),
        ));
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); parts.len()];
    for &u in members {
        for &e in dag.out_edges(u) {
            let h = dag.edge(e).head;
            if let Some(&q) = part_of.get(&h) {
                let p = part_of[&u];
                if p != q {
                    adj[p].push(q);
                }
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    graph::topo_sort(parts.len(), |p| &adj[p])
        .map(|_| ())
        .map_err(Error::CyclicQuotient)
}

/// Topological chunking with adjacent-move refinement.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinPartitioner;

struct Local<'a> {
    dag: &'a WorkflowDag,
    members: Vec<TaskIdx>,
    index: HashMap<TaskIdx, usize>,
}

impl<'a> Local<'a> {
    fn new(dag: &'a WorkflowDag, members: &[TaskIdx]) -> Self {
        let mut members = members.to_vec();
        members.sort_unstable();
        members.dedup();
        let index = members.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        Local {
            dag,
            members,
            index,
        }
    }

    /// (local neighbor, volume) over internal out-edges.
    fn out(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dag
            .out_edges(self.members[i])
            .iter()
            .filter_map(move |&e| {
                let edge = self.dag.edge(e);
                self.index.get(&edge.head).map(|&j| (j, edge.volume))
            })
    }

    fn inc(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dag
            .in_edges(self.members[i])
            .iter()
            .filter_map(move |&e| {
                let edge = self.dag.edge(e);
                self.index.get(&edge.tail).map(|&j| (j, edge.volume))
            })
    }

    /// Kahn order of the induced subgraph. Breadth-first takes the smallest
    /// ready index; depth-first takes the most recently released task, so
    /// subtrees and pipelines stay contiguous.
    fn topological_order(&self, depth_first: bool) -> Vec<usize> {
        let n = self.members.len();
        let mut indeg = vec![0usize; n];
        for i in 0..n {
            for (j, _) in self.out(i) {
                indeg[j] += 1;
            }
        }
        let mut order = Vec::with_capacity(n);
        if depth_first {
            let mut stack: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
            while let Some(i) = stack.pop() {
                order.push(i);
                let mut released: Vec<usize> = Vec::new();
                for (j, _) in self.out(i) {
                    indeg[j] -= 1;
                    if indeg[j] == 0 {
                        released.push(j);
                    }
                }
                released.sort_unstable_by(|a, b| b.cmp(a));
                stack.extend(released);
            }
            return order;
        }
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            for (j, _) in self.out(i) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
        order
    }

    fn weight(&self, i: usize, kind: WeightKind) -> f64 {
        let u = self.members[i];
        match kind {
            WeightKind::Work => self.dag.task(u).work,
            WeightKind::MemoryRequirement => self.dag.requirement(u),
        }
    }
}

/// Cut positions splitting `weights` into `k` non-empty contiguous chunks,
/// each boundary placed nearest to its ideal prefix weight.
fn chunk_bounds(weights: &[f64], k: usize) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for w in weights {
        prefix.push(prefix.last().unwrap() + w);
    }
    let mut bounds = vec![0usize];
    for c in 1..k {
        let lo = bounds[c - 1] + 1;
        let hi = n - (k - c);
        let ideal = if total > 0.0 {
            total * c as f64 / k as f64
        } else {
            0.0
        };
        let mut best = lo;
        if total > 0.0 {
            for p in lo..=hi {
                if (prefix[p] - ideal).abs() < (prefix[best] - ideal).abs() {
                    best = p;
                }
                if prefix[p] > ideal {
                    break;
                }
            }
        } else {
            best = (n * c / k).clamp(lo, hi);
        }
        bounds.push(best);
    }
    bounds.push(n);
    bounds
}

impl BuiltinPartitioner {
    /// Chunks `order` and refines; returns part labels per local index and
    /// the final cut volume.
    fn chunk_and_refine(
        local: &Local,
        order: &[usize],
        request: &PartitionRequest,
    ) -> (Vec<usize>, f64) {
        let n = order.len();
        let k = request.parts;
        let weights: Vec<f64> = order
            .iter()
            .map(|&i| local.weight(i, request.weight))
            .collect();
        let bounds = chunk_bounds(&weights, k);

        let mut part = vec![0usize; n];
        let mut load = vec![0.0f64; k];
        let mut size = vec![0usize; k];
        for c in 0..k {
            for p in bounds[c]..bounds[c + 1] {
                part[order[p]] = c;
                load[c] += weights[p];
                size[c] += 1;
            }
        }
        let total: f64 = weights.iter().sum();
        let cap = (total / k as f64 * (1.0 + request.epsilon))
            .max(load.iter().copied().fold(0.0, f64::max));

        let mut visit = order.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        for _ in 0..MAX_PASSES {
            visit.shuffle(&mut rng);
            let mut improved = false;
            for &i in &visit {
                let from = part[i];
                if size[from] == 1 {
                    continue;
                }
                let w = local.weight(i, request.weight);
                for to in [from.wrapping_sub(1), from + 1] {
                    if to >= k || load[to] + w > cap {
                        continue;
                    }
                    // Edges must keep pointing to the same or a later part.
                    let legal = if to < from {
                        local.inc(i).all(|(j, _)| part[j] <= to)
                    } else {
                        local.out(i).all(|(j, _)| part[j] >= to)
                    };
                    if !legal {
                        continue;
                    }
                    let gain: f64 = local
                        .out(i)
                        .chain(local.inc(i))
                        .map(|(j, c)| {
                            if part[j] == to {
                                c
                            } else if part[j] == from {
                                -c
                            } else {
                                0.0
                            }
                        })
                        .sum();
                    if gain > 0.0 {
                        part[i] = to;
                        load[from] -= w;
                        load[to] += w;
                        size[from] -= 1;
                        size[to] += 1;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        let cut = (0..n)
            .flat_map(|i| local.out(i).map(move |(j, c)| (i, j, c)))
            .filter(|&(i, j, _)| part[i] != part[j])
            .map(|(_, _, c)| c)
            .sum();
        (part, cut)
    }
}

impl Partitioner for BuiltinPartitioner {
    fn partition(
        &self,
        dag: &WorkflowDag,
        members: &[TaskIdx],
        request: &PartitionRequest,
    ) -> Result<Vec<Vec<TaskIdx>>> {
        let local = Local::new(dag, members);
        let n = local.members.len();
        let k = request.parts;
        if k == 0 || k > n {
            return Err(Error::InvalidPartitionRequest(format!(
                "cannot split {n} tasks into {k} parts"
            )));
        }
        if !(request.epsilon >= 0.0) {
            return Err(Error::InvalidPartitionRequest(format!(
                "balance tolerance {} is negative",
                request.epsilon
            )));
        }
        let breadth = local.topological_order(false);
        if breadth.len() != n {
            return Err(Error::InvalidPartitionRequest(
                "input subgraph is cyclic".into(),
            ));
        }
        let depth = local.topological_order(true);
        let (mut part, cut) = Self::chunk_and_refine(&local, &breadth, request);
        if breadth != depth {
            let (other, other_cut) = Self::chunk_and_refine(&local, &depth, request);
            if other_cut < cut {
                part = other;
            }
        }

        let mut parts: Vec<Vec<TaskIdx>> = vec![Vec::new(); k];
        for (i, &p) in part.iter().enumerate() {
            parts[p].push(local.members[i]);
        }
        parts.sort_by_key(|p| p[0]);
        Ok(parts)
    }
}

/// Partitions the whole workflow with the built-in partitioner.
pub fn partition_dag(
    dag: &WorkflowDag,
    request: &PartitionRequest,
) -> Result<crate::quotient::Partition> {
    let members: Vec<TaskIdx> = (0..dag.len()).collect();
    let parts = BuiltinPartitioner.partition(dag, &members, request)?;
    crate::quotient::Partition::from_blocks(dag.len(), &parts)
}

/// A partitioner program driven through files.
#[derive(Debug, Clone)]
pub struct ExternalPartitioner {
    program: PathBuf,
    args: Vec<String>,
}

/// Resolves `program` (a path, or a name looked up on `PATH`) and returns a
/// handle that runs it with `args` prepended to the exchange arguments.
pub fn register_external_partitioner(
    program: impl AsRef<Path>,
    args: Vec<String>,
) -> Result<ExternalPartitioner> {
    let program = program.as_ref();
    let resolved = if program.components().count() > 1 || program.is_absolute() {
        program.is_file().then(|| program.to_path_buf())
    } else {
        std::env::var_os("PATH").and_then(|paths| {
            std::env::split_paths(&paths)
                .map(|d| d.join(program))
                .find(|p| p.is_file())
        })
    };
    match resolved {
        Some(program) => Ok(ExternalPartitioner { program, args }),
        None => Err(Error::ExternalPartitioner(format!(
            "executable {} not found",
            program.display()
        ))),
    }
}

impl ExternalPartitioner {
    pub fn program(&self) -> &Path {
        &self.program
    }
}

fn induced_subgraph(dag: &WorkflowDag, members: &[TaskIdx]) -> Result<WorkflowDag> {
    let mut inside = vec![false; dag.len()];
    let mut b = WorkflowBuilder::new();
    for &u in members {
        inside[u] = true;
        let t = dag.task(u);
        b.add_task(t.id.clone(), t.work, t.memory);
    }
    for e in dag.edges() {
        if inside[e.tail] && inside[e.head] {
            b.add_edge(dag.id(e.tail), dag.id(e.head), e.volume);
        }
    }
    b.build()
}

impl Partitioner for ExternalPartitioner {
    fn partition(
        &self,
        dag: &WorkflowDag,
        members: &[TaskIdx],
        request: &PartitionRequest,
    ) -> Result<Vec<Vec<TaskIdx>>> {
        if request.parts == 0 || request.parts > members.len() {
            return Err(Error::InvalidPartitionRequest(format!(
                "cannot split {} tasks into {} parts",
                members.len(),
                request.parts
            )));
        }
        let sub = induced_subgraph(dag, members)?;
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("input.dot");
        let output = dir.path().join("output.txt");
        fs::write(&input, dot::write_dot(&sub))?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(request.parts.to_string())
            .arg(&output)
            .status()
            .map_err(|e| {
                Error::ExternalPartitioner(format!("cannot run {}: {e}", self.program.display()))
            })?;
        if !status.success() {
            return Err(Error::ExternalPartitioner(format!(
                "{} exited with {status}",
                self.program.display()
            )));
        }
        let text = fs::read_to_string(&output).map_err(|e| {
            Error::ExternalPartitioner(format!("cannot read partition output: {e}"))
        })?;

        let mut label_of: HashMap<TaskIdx, u64> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let mut fields = line.split_whitespace();
            let (Some(id), Some(label), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(bad(format!("expected `taskid partid`, found `{line}`")));
            };
            let u = sub
                .index_of(id)
                .ok_or_else(|| bad(format!("unknown task {id}")))?;
            let label: u64 = label
                .parse()
                .map_err(|_| bad(format!("part id `{label}` is not an integer")))?;
            if label_of.insert(u, label).is_some() {
                return Err(bad(format!("task {id} listed twice")));
            }
        }
        let mut by_label: std::collections::BTreeMap<u64, Vec<TaskIdx>> = Default::default();
        for (u, label) in label_of {
            by_label
                .entry(label)
                .or_default()
                .push(dag.index_of(sub.id(u)).expect("subgraph ids come from dag"));
        }
        let mut parts: Vec<Vec<TaskIdx>> = by_label.into_values().collect();
        for p in &mut parts {
            p.sort_unstable();
        }
        parts.sort_by_key(|p| p[0]);
        validate_parts(dag, members, &parts)?;
        Ok(parts)
    }
}
