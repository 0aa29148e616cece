//! Partitions of a workflow and the quotient graph they induce.
//!
//! Quotient vertices carry the summed work of their block, an optional
//! processor and a reinsertion counter; edges carry the summed volume of all
//! workflow edges between two blocks. Merges are journaled so that tentative
//! merges can be rolled back exactly.

use std::cell::OnceCell;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};

use crate::cluster::ProcIdx;
use crate::error::{Error, Result};
use crate::memory::{block_memory_requirement, BlockView, TraversalResult};
use crate::workflow::{TaskIdx, WorkflowDag};

pub type VertexId = usize;

/// Block number per task. Block ids are dense, numbered by first appearance
/// in task order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    block_of: Vec<usize>,
    num_blocks: usize,
}

impl Partition {
    /// Partition from arbitrary block labels, renumbered densely.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let block_of: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            block_of,
            num_blocks: remap.len(),
        }
    }

    /// Partition from explicit blocks; they must cover `0..n` exactly once.
    pub fn from_blocks(n: usize, blocks: &[Vec<TaskIdx>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, members) in blocks.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyBlock);
            }
            for &u in members {
                if u >= n || labels[u] != usize::MAX {
                    return Err(Error::InvalidPartitionRequest(format!(
                        "task {u} is out of range or in two blocks"
                    )));
                }
                labels[u] = b;
            }
        }
        if let Some(u) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::InvalidPartitionRequest(format!(
                "task {u} is in no block"
            )));
        }
        Ok(Self::from_labels(&labels))
    }

    /// Everything in one block.
    pub fn trivial(n: usize) -> Self {
        Partition {
            block_of: vec![0; n],
            num_blocks: usize::from(n > 0),
        }
    }

    pub fn block_of(&self, u: TaskIdx) -> usize {
        self.block_of[u]
    }

    pub fn labels(&self) -> &[usize] {
        &self.block_of
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn blocks(&self) -> Vec<Vec<TaskIdx>> {
        let mut blocks = vec![Vec::new(); self.num_blocks];
        for (u, &b) in self.block_of.iter().enumerate() {
            blocks[b].push(u);
        }
        blocks
    }

    /// Total volume of edges whose endpoints lie in different blocks.
    pub fn edge_cut(&self, dag: &WorkflowDag) -> f64 {
        dag.edges()
            .iter()
            .filter(|e| self.block_of[e.tail] != self.block_of[e.head])
            .map(|e| e.volume)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct QVertex {
    members: Vec<TaskIdx>,
    weight: f64,
    pub processor: Option<ProcIdx>,
    pub counter: u8,
    out: BTreeMap<VertexId, f64>,
    inc: BTreeMap<VertexId, f64>,
    requirement: OnceCell<TraversalResult>,
}

impl PartialEq for QVertex {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
            && self.weight == other.weight
            && self.processor == other.processor
            && self.counter == other.counter
            && self.out == other.out
            && self.inc == other.inc
    }
}

impl QVertex {
    pub fn members(&self) -> &[TaskIdx] {
        &self.members
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

#[derive(Debug, Clone)]
struct MergeRecord {
    merged: VertexId,
    parts: [(VertexId, QVertex); 2],
}

/// Outcome of a cycle check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleCheck {
    pub acyclic: bool,
    /// One shortest cycle, as vertices in edge order, when cyclic.
    pub cycle: Option<Vec<VertexId>>,
}

#[derive(Debug, Clone)]
pub struct QuotientGraph<'a> {
    dag: &'a WorkflowDag,
    vertices: BTreeMap<VertexId, QVertex>,
    next_id: VertexId,
    journal: Vec<MergeRecord>,
}

impl PartialEq for QuotientGraph<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
    }
}

/// Quotient of `dag` under `partition`; vertex ids equal block ids.
pub fn build_quotient<'a>(dag: &'a WorkflowDag, partition: &Partition) -> QuotientGraph<'a> {
    let mut vertices: BTreeMap<VertexId, QVertex> = partition
        .blocks()
        .into_iter()
        .enumerate()
        .map(|(b, members)| {
            let weight = members.iter().map(|&u| dag.task(u).work).sum();
            let v = QVertex {
                members,
                weight,
                processor: None,
                counter: 0,
                out: BTreeMap::new(),
                inc: BTreeMap::new(),
                requirement: OnceCell::new(),
            };
            (b, v)
        })
        .collect();
    for e in dag.edges() {
        let (a, b) = (partition.block_of(e.tail), partition.block_of(e.head));
        if a != b {
            *vertices.get_mut(&a).unwrap().out.entry(b).or_insert(0.0) += e.volume;
            *vertices.get_mut(&b).unwrap().inc.entry(a).or_insert(0.0) += e.volume;
        }
    }
    QuotientGraph {
        dag,
        next_id: partition.num_blocks(),
        vertices,
        journal: Vec::new(),
    }
}

impl<'a> QuotientGraph<'a> {
    pub fn dag(&self) -> &'a WorkflowDag {
        self.dag
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertex ids in ascending order.
    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.keys().copied()
    }

    pub fn vertex(&self, v: VertexId) -> &QVertex {
        &self.vertices[&v]
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.vertices.contains_key(&v)
    }

    pub fn processor(&self, v: VertexId) -> Option<ProcIdx> {
        self.vertices[&v].processor
    }

    pub fn set_processor(&mut self, v: VertexId, p: Option<ProcIdx>) {
        self.vertices.get_mut(&v).expect("live vertex").processor = p;
    }

    pub fn set_counter(&mut self, v: VertexId, c: u8) {
        self.vertices.get_mut(&v).expect("live vertex").counter = c;
    }

    pub fn children(&self, v: VertexId) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.vertices[&v].out.iter().map(|(&w, &c)| (w, c))
    }

    pub fn parents(&self, v: VertexId) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.vertices[&v].inc.iter().map(|(&w, &c)| (w, c))
    }

    /// Parents and children of `v`, ascending, without duplicates.
    pub fn neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let q = &self.vertices[&v];
        let set: BTreeSet<VertexId> = q.out.keys().chain(q.inc.keys()).copied().collect();
        set.into_iter().collect()
    }

    pub fn edge_volume(&self, from: VertexId, to: VertexId) -> Option<f64> {
        self.vertices
            .get(&from)
            .and_then(|q| q.out.get(&to).copied())
    }

    /// All edges as (tail, head, volume), ordered by tail then head.
    pub fn edges(&self) -> Vec<(VertexId, VertexId, f64)> {
        self.vertices
            .iter()
            .flat_map(|(&a, q)| q.out.iter().map(move |(&b, &c)| (a, b, c)))
            .collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.vertices.values().map(|q| q.weight).sum()
    }

    /// Memory requirement of a vertex's block, computed once and cached.
    pub fn requirement(&self, v: VertexId) -> &TraversalResult {
        let q = &self.vertices[&v];
        q.requirement.get_or_init(|| {
            block_memory_requirement(
                &BlockView::new(self.dag, q.members.iter().copied()),
                self.dag,
            )
            .expect("quotient vertices are non-empty")
        })
    }

    /// Partition of the workflow matching the current vertices, block ids in
    /// ascending vertex-id order.
    pub fn partition(&self) -> Partition {
        let mut labels = vec![0usize; self.dag.len()];
        for (i, q) in self.vertices.values().enumerate() {
            for &u in &q.members {
                labels[u] = i;
            }
        }
        Partition::from_labels(&labels)
    }

    /// Exclusive upper bound of the vertex ids handed out so far.
    pub fn id_bound(&self) -> usize {
        self.next_id
    }

    /// Topological order of the vertices, smallest id first among ready ones.
    pub fn topological_order(&self) -> std::result::Result<Vec<VertexId>, ()> {
        let mut indeg = vec![0usize; self.next_id];
        let mut ready = BinaryHeap::new();
        for (&v, q) in &self.vertices {
            indeg[v] = q.inc.len();
            if indeg[v] == 0 {
                ready.push(Reverse(v));
            }
        }
        let mut order = Vec::with_capacity(self.len());
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &w in self.vertices[&v].out.keys() {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(Reverse(w));
                }
            }
        }
        if order.len() == self.len() {
            Ok(order)
        } else {
            Err(())
        }
    }

    pub fn is_acyclic(&self) -> CycleCheck {
        if self.topological_order().is_ok() {
            return CycleCheck {
                acyclic: true,
                cycle: None,
            };
        }
        let mut best: Option<Vec<VertexId>> = None;
        for v in self.vertex_ids() {
            if let Some(c) = self.cycle_through(v) {
                if best.as_ref().map_or(true, |b| c.len() < b.len()) {
                    best = Some(c);
                }
            }
        }
        CycleCheck {
            acyclic: false,
            cycle: best,
        }
    }

    /// Shortest cycle through `v`, by breadth-first search from its
    /// children back to `v`.
    pub fn cycle_through(&self, v: VertexId) -> Option<Vec<VertexId>> {
        const UNSEEN: VertexId = VertexId::MAX;
        let mut pred = vec![UNSEEN; self.next_id];
        let mut queue: VecDeque<VertexId> = VecDeque::new();
        for &w in self.vertices[&v].out.keys() {
            if w == v {
                return Some(vec![v]);
            }
            pred[w] = v;
            queue.push_back(w);
        }
        while let Some(u) = queue.pop_front() {
            for &w in self.vertices[&u].out.keys() {
                if w == v {
                    let mut cycle = vec![u];
                    let mut at = u;
                    while pred[at] != v {
                        at = pred[at];
                        cycle.push(at);
                    }
                    cycle.push(v);
                    cycle.reverse();
                    return Some(cycle);
                }
                if pred[w] == UNSEEN {
                    pred[w] = u;
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// Merges `a` and `b` into a new unassigned vertex with a fresh id.
    /// Parallel edges are summed and edges between `a` and `b` vanish.
    pub fn merge(&mut self, a: VertexId, b: VertexId) -> Result<VertexId> {
        if a == b {
            return Err(Error::InvalidPartitionRequest(format!(
                "cannot merge vertex {a} with itself"
            )));
        }
        for v in [a, b] {
            if !self.vertices.contains_key(&v) {
                return Err(Error::UnknownVertex(v));
            }
        }
        let qa = self.vertices.remove(&a).unwrap();
        let qb = self.vertices.remove(&b).unwrap();
        let m = self.next_id;
        self.next_id += 1;

        let mut out: BTreeMap<VertexId, f64> = BTreeMap::new();
        let mut inc: BTreeMap<VertexId, f64> = BTreeMap::new();
        for q in [&qa, &qb] {
            for (&w, &c) in &q.out {
                if w != a && w != b {
                    *out.entry(w).or_insert(0.0) += c;
                }
            }
            for (&w, &c) in &q.inc {
                if w != a && w != b {
                    *inc.entry(w).or_insert(0.0) += c;
                }
            }
        }
        for (&w, &c) in &out {
            let n = self.vertices.get_mut(&w).unwrap();
            n.inc.remove(&a);
            n.inc.remove(&b);
            n.inc.insert(m, c);
        }
        for (&w, &c) in &inc {
            let n = self.vertices.get_mut(&w).unwrap();
            n.out.remove(&a);
            n.out.remove(&b);
            n.out.insert(m, c);
        }
        let mut members = Vec::with_capacity(qa.members.len() + qb.members.len());
        members.extend_from_slice(&qa.members);
        members.extend_from_slice(&qb.members);
        members.sort_unstable();
        let merged = QVertex {
            members,
            weight: qa.weight + qb.weight,
            processor: None,
            counter: 0,
            out,
            inc,
            requirement: OnceCell::new(),
        };
        self.vertices.insert(m, merged);
        self.journal.push(MergeRecord {
            merged: m,
            parts: [(a, qa), (b, qb)],
        });
        Ok(m)
    }

    /// Undoes the most recent merge, which must have produced `m`.
    pub fn unmerge(&mut self, m: VertexId) -> Result<()> {
        match self.journal.last() {
            Some(r) if r.merged == m => {}
            _ => return Err(Error::NotMergeProduct(m)),
        }
        let record = self.journal.pop().unwrap();
        let qm = self.vertices.remove(&m).unwrap();
        for w in qm.out.keys() {
            self.vertices.get_mut(w).unwrap().inc.remove(&m);
        }
        for w in qm.inc.keys() {
            self.vertices.get_mut(w).unwrap().out.remove(&m);
        }
        let [(a, qa), (b, qb)] = record.parts;
        for (v, q) in [(a, &qa), (b, &qb)] {
            for (&w, &c) in &q.out {
                if w != a && w != b {
                    self.vertices.get_mut(&w).unwrap().inc.insert(v, c);
                }
            }
            for (&w, &c) in &q.inc {
                if w != a && w != b {
                    self.vertices.get_mut(&w).unwrap().out.insert(v, c);
                }
            }
        }
        self.vertices.insert(a, qa);
        self.vertices.insert(b, qb);
        self.next_id -= 1;
        Ok(())
    }

    /// Replaces `v` by one unassigned vertex per part, with fresh ids in part
    /// order. Parts must cover the members of `v` exactly. Splits are not
    /// journaled, so the journal must be empty.
    pub fn split(&mut self, v: VertexId, parts: &[Vec<TaskIdx>]) -> Result<Vec<VertexId>> {
        if !self.journal.is_empty() {
            return Err(Error::InvalidPartitionRequest(
                "split with uncommitted merges".into(),
            ));
        }
        let old = self.vertices.get(&v).ok_or(Error::UnknownVertex(v))?;
        let mut covered: Vec<TaskIdx> = parts.iter().flatten().copied().collect();
        covered.sort_unstable();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::EmptyBlock);
        }
        if covered != old.members {
            return Err(Error::InvalidPartitionRequest(format!(
                "parts do not cover vertex {v}"
            )));
        }
        let old = self.vertices.remove(&v).unwrap();
        for w in old.out.keys() {
            self.vertices.get_mut(w).unwrap().inc.remove(&v);
        }
        for w in old.inc.keys() {
            self.vertices.get_mut(w).unwrap().out.remove(&v);
        }

        let ids: Vec<VertexId> = (0..parts.len()).map(|i| self.next_id + i).collect();
        self.next_id += parts.len();
        let mut local: HashMap<TaskIdx, VertexId> = HashMap::new();
        for (&id, part) in ids.iter().zip(parts) {
            for &u in part {
                local.insert(u, id);
            }
        }
        let out_neighbors: Vec<VertexId> = old.out.keys().copied().collect();
        let in_neighbors: Vec<VertexId> = old.inc.keys().copied().collect();
        let owner = |vertices: &BTreeMap<VertexId, QVertex>, keys: &[VertexId], t: TaskIdx| {
            keys.iter()
                .find(|w| vertices[w].members.binary_search(&t).is_ok())
                .copied()
        };
        let mut fresh: Vec<QVertex> = parts
            .iter()
            .map(|part| {
                let mut members = part.clone();
                members.sort_unstable();
                QVertex {
                    weight: members.iter().map(|&u| self.dag.task(u).work).sum(),
                    members,
                    processor: None,
                    counter: 0,
                    out: BTreeMap::new(),
                    inc: BTreeMap::new(),
                    requirement: OnceCell::new(),
                }
            })
            .collect();
        for (i, part) in parts.iter().enumerate() {
            for &u in part {
                for &e in self.dag.out_edges(u) {
                    let edge = self.dag.edge(e);
                    let to = match local.get(&edge.head) {
                        Some(&to) => to,
                        None => owner(&self.vertices, &out_neighbors, edge.head)
                            .expect("edge leaves to a neighbor"),
                    };
                    if to != ids[i] {
                        *fresh[i].out.entry(to).or_insert(0.0) += edge.volume;
                    }
                }
                for &e in self.dag.in_edges(u) {
                    let edge = self.dag.edge(e);
                    if !local.contains_key(&edge.tail) {
                        let from = owner(&self.vertices, &in_neighbors, edge.tail)
                            .expect("edge enters from a neighbor");
                        *fresh[i].inc.entry(from).or_insert(0.0) += edge.volume;
                    }
                }
            }
        }
        // Mirror edges between the new vertices and onto the neighbors.
        for i in 0..fresh.len() {
            let outs: Vec<(VertexId, f64)> = fresh[i].out.iter().map(|(&w, &c)| (w, c)).collect();
            for (w, c) in outs {
                match ids.iter().position(|&id| id == w) {
                    Some(j) => {
                        fresh[j].inc.insert(ids[i], c);
                    }
                    None => {
                        self.vertices.get_mut(&w).unwrap().inc.insert(ids[i], c);
                    }
                }
            }
            for (&w, &c) in &fresh[i].inc.clone() {
                if !ids.contains(&w) {
                    self.vertices.get_mut(&w).unwrap().out.insert(ids[i], c);
                }
            }
        }
        for (id, q) in ids.iter().zip(fresh) {
            self.vertices.insert(*id, q);
        }
        Ok(ids)
    }

    /// Forgets the undo history; later unmerges cannot cross this point.
    pub fn commit(&mut self) {
        self.journal.clear();
    }

    pub fn journal_len(&self) -> usize {
        self.journal.len()
    }
}
