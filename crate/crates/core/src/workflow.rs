//! Workflow DAGs: tasks with work and memory weights, edges carrying file
//! volumes, validation and per-task memory requirements.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::graph;

/// Dense task index, assigned at build time in natural id order.
pub type TaskIdx = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub work: f64,
    pub memory: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: TaskIdx,
    pub head: TaskIdx,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateTask {
        id: String,
    },
    NegativeWeight {
        item: String,
        value: f64,
    },
    SelfLoop {
        task: String,
    },
    DuplicateEdge {
        tail: String,
        head: String,
    },
    DanglingEndpoint {
        tail: String,
        head: String,
        missing: String,
    },
    Cycle {
        tasks: Vec<String>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateTask { id } => write!(f, "duplicate task `{id}`"),
            Violation::NegativeWeight { item, value } => {
                write!(f, "{item} has invalid weight {value}")
            }
            Violation::SelfLoop { task } => write!(f, "self-loop on `{task}`"),
            Violation::DuplicateEdge { tail, head } => {
                write!(f, "duplicate edge `{tail}` -> `{head}`")
            }
            Violation::DanglingEndpoint {
                tail,
                head,
                missing,
            } => {
                write!(
                    f,
                    "edge `{tail}` -> `{head}` references unknown task `{missing}`"
                )
            }
            Violation::Cycle { tasks } => write!(f, "cycle through {}", tasks.join(" -> ")),
        }
    }
}

/// Every invariant violation found in a candidate workflow. Empty iff valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Compares task ids numerically when both are integers, otherwise as
/// strings whose digit runs compare by value (`t2` before `t10`). Integer ids
/// sort before non-integer ones.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => chunked_cmp(a, b).then_with(|| a.cmp(b)),
    }
}

fn chunked_cmp(a: &str, b: &str) -> Ordering {
    let (mut x, mut y) = (a.as_bytes(), b.as_bytes());
    loop {
        match (x.first(), y.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(c), Some(d)) if c.is_ascii_digit() && d.is_ascii_digit() => {
                let run = |s: &[u8]| s.iter().take_while(|c| c.is_ascii_digit()).count();
                let (rx, ry) = (run(x), run(y));
                let trim = |s: &[u8]| {
                    let z = s.iter().take_while(|&&c| c == b'0').count();
                    s[z..].to_vec()
                };
                let (nx, ny) = (trim(&x[..rx]), trim(&y[..ry]));
                let ord = nx.len().cmp(&ny.len()).then_with(|| nx.cmp(&ny));
                if ord != Ordering::Equal {
                    return ord;
                }
                x = &x[rx..];
                y = &y[ry..];
            }
            (Some(c), Some(d)) => {
                if c != d {
                    return c.cmp(d);
                }
                x = &x[1..];
                y = &y[1..];
            }
        }
    }
}

/// Unchecked workflow description. Edges name their endpoints by id so that
/// dangling references can be reported instead of panicking.
#[derive(Debug, Clone, Default)]
pub struct WorkflowBuilder {
    tasks: Vec<Task>,
    edges: Vec<(String, String, f64)>,
}

impl WorkflowBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn task(mut self, id: impl Into<String>, work: f64, memory: f64) -> Self {
        self.add_task(id, work, memory);
        self
    }

    pub fn edge(mut self, tail: impl Into<String>, head: impl Into<String>, volume: f64) -> Self {
        self.add_edge(tail, head, volume);
        self
    }

    pub fn add_task(&mut self, id: impl Into<String>, work: f64, memory: f64) {
        self.tasks.push(Task {
            id: id.into(),
            work,
            memory,
        });
    }

    pub fn add_edge(&mut self, tail: impl Into<String>, head: impl Into<String>, volume: f64) {
        self.edges.push((tail.into(), head.into(), volume));
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if index.insert(t.id.as_str(), i).is_some() {
                violations.push(Violation::DuplicateTask { id: t.id.clone() });
            }
            for (what, value) in [("work", t.work), ("memory", t.memory)] {
                if !(value >= 0.0) || !value.is_finite() {
                    violations.push(Violation::NegativeWeight {
                        item: format!("{what} of task `{}`", t.id),
                        value,
                    });
                }
            }
        }

        let mut seen: HashSet<(&str, &str)> = HashSet::new();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.tasks.len()];
        for (tail, head, volume) in &self.edges {
            if !(*volume >= 0.0) || !volume.is_finite() {
                violations.push(Violation::NegativeWeight {
                    item: format!("volume of edge `{tail}` -> `{head}`"),
                    value: *volume,
                });
            }
            let mut dangling = false;
            for end in [tail, head] {
                if !index.contains_key(end.as_str()) {
                    violations.push(Violation::DanglingEndpoint {
                        tail: tail.clone(),
                        head: head.clone(),
                        missing: end.clone(),
                    });
                    dangling = true;
                }
            }
            if tail == head {
                violations.push(Violation::SelfLoop { task: tail.clone() });
                continue;
            }
            if !seen.insert((tail.as_str(), head.as_str())) {
                violations.push(Violation::DuplicateEdge {
                    tail: tail.clone(),
                    head: head.clone(),
                });
                continue;
            }
            if !dangling {
                adj[index[tail.as_str()]].push(index[head.as_str()]);
            }
        }

        let succ = |u: usize| &adj[u][..];
        for comp in graph::strongly_connected_components(self.tasks.len(), &succ) {
            if comp.len() > 1 {
                let cycle = graph::cycle_in_component(&comp, &succ);
                violations.push(Violation::Cycle {
                    tasks: cycle.iter().map(|&i| self.tasks[i].id.clone()).collect(),
                });
            }
        }

        ValidationReport { violations }
    }

    pub fn build(self) -> Result<WorkflowDag> {
        let report = self.validate();
        if !report.is_empty() {
            return Err(Error::InvalidWorkflow(report));
        }
        let mut tasks = self.tasks;
        tasks.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        let index: HashMap<String, TaskIdx> = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|(t, h, v)| Edge {
                tail: index[t],
                head: index[h],
                volume: *v,
            })
            .collect();
        edges.sort_by_key(|e| (e.tail, e.head));
        Ok(WorkflowDag::assemble(tasks, edges, index))
    }
}

/// A validated, immutable workflow DAG.
#[derive(Debug, Clone)]
pub struct WorkflowDag {
    tasks: Vec<Task>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    children: Vec<Vec<TaskIdx>>,
    index: HashMap<String, TaskIdx>,
}

impl PartialEq for WorkflowDag {
    fn eq(&self, other: &Self) -> bool {
        self.tasks == other.tasks && self.edges == other.edges
    }
}

impl WorkflowDag {
    fn assemble(tasks: Vec<Task>, edges: Vec<Edge>, index: HashMap<String, TaskIdx>) -> Self {
        let n = tasks.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            out_edges[edge.tail].push(e);
            in_edges[edge.head].push(e);
            children[edge.tail].push(edge.head);
        }
        WorkflowDag {
            tasks,
            edges,
            out_edges,
            in_edges,
            children,
            index,
        }
    }

    pub fn builder() -> WorkflowBuilder {
        WorkflowBuilder::new()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, u: TaskIdx) -> &Task {
        &self.tasks[u]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Indices into [`edges`](Self::edges) of the edges leaving `u`.
    pub fn out_edges(&self, u: TaskIdx) -> &[usize] {
        &self.out_edges[u]
    }

    /// Indices into [`edges`](Self::edges) of the edges entering `u`.
    pub fn in_edges(&self, u: TaskIdx) -> &[usize] {
        &self.in_edges[u]
    }

    pub fn children(&self, u: TaskIdx) -> &[TaskIdx] {
        &self.children[u]
    }

    pub fn parents(&self, u: TaskIdx) -> impl Iterator<Item = TaskIdx> + '_ {
        self.in_edges[u].iter().map(move |&e| self.edges[e].tail)
    }

    pub fn index_of(&self, id: &str) -> Option<TaskIdx> {
        self.index.get(id).copied()
    }

    pub fn id(&self, u: TaskIdx) -> &str {
        &self.tasks[u].id
    }

    pub fn in_volume(&self, u: TaskIdx) -> f64 {
        self.in_edges[u].iter().map(|&e| self.edges[e].volume).sum()
    }

    pub fn out_volume(&self, u: TaskIdx) -> f64 {
        self.out_edges[u]
            .iter()
            .map(|&e| self.edges[e].volume)
            .sum()
    }

    /// Input files plus output files plus the task's own footprint.
    pub fn requirement(&self, u: TaskIdx) -> f64 {
        self.in_volume(u) + self.out_volume(u) + self.tasks[u].memory
    }

    /// [`requirement`](Self::requirement) looked up by task id.
    pub fn task_memory_requirement(&self, id: &str) -> Result<f64> {
        self.index_of(id)
            .map(|u| self.requirement(u))
            .ok_or_else(|| Error::UnknownTask(id.to_string()))
    }

    pub fn total_work(&self) -> f64 {
        self.tasks.iter().map(|t| t.work).sum()
    }

    pub fn total_volume(&self) -> f64 {
        self.edges.iter().map(|e| e.volume).sum()
    }

    /// Topological order, smallest index first among ready tasks. Indices
    /// follow natural id order, so ties break by ascending task id.
    pub fn topological_order(&self) -> Vec<TaskIdx> {
        graph::topo_sort(self.len(), |u| &self.children[u]).expect("validated workflow is acyclic")
    }

    /// Same as [`topological_order`](Self::topological_order), as task ids.
    pub fn topological_ids(&self) -> Vec<&str> {
        self.topological_order()
            .into_iter()
            .map(|u| self.id(u))
            .collect()
    }

    /// Edges (tail, head) between two tasks, if any.
    pub fn find_edge(&self, tail: TaskIdx, head: TaskIdx) -> Option<&Edge> {
        self.out_edges[tail]
            .iter()
            .map(|&e| &self.edges[e])
            .find(|e| e.head == head)
    }
}

/// Topological order of an unchecked description, for inputs that have not
/// been validated yet. Fails with the ids along one cycle.
pub fn topological_order(builder: &WorkflowBuilder) -> Result<Vec<String>> {
    let index: HashMap<&str, usize> = builder
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let mut ranked: Vec<usize> = (0..builder.tasks.len()).collect();
    ranked.sort_by(|&a, &b| natural_cmp(&builder.tasks[a].id, &builder.tasks[b].id));
    let mut rank = vec![0usize; ranked.len()];
    for (r, &i) in ranked.iter().enumerate() {
        rank[i] = r;
    }
    let mut adj = vec![Vec::new(); ranked.len()];
    for (t, h, _) in &builder.edges {
        let (Some(&t), Some(&h)) = (index.get(t.as_str()), index.get(h.as_str())) else {
            return Err(Error::UnknownTask(if index.contains_key(t.as_str()) {
                h.clone()
            } else {
                t.clone()
            }));
        };
        adj[rank[t]].push(rank[h]);
    }
    let id = |r: usize| builder.tasks[ranked[r]].id.clone();
    graph::topo_sort(ranked.len(), |u| &adj[u])
        .map(|order| order.into_iter().map(id).collect())
        .map_err(|cycle| Error::Cycle(cycle.into_iter().map(id).collect()))
}
