//! Peak memory of executing a block of tasks in some topological order.
//!
//! Accounting at step `t` of an order (the task at position `t` is running):
//!
//! * the running task's own footprint `m_u`;
//! * every internal edge whose tail ran at or before `t` and whose head runs at
//!   or after `t` (inputs stay resident while their consumer runs);
//! * every edge entering the block whose consumer runs at or after `t`
//!   (inbound files are resident from block start);
//! * every edge leaving the block whose producer ran at or before `t`
//!   (outbound files are kept until the block ends).
//!
//! For a singleton block this reduces to the task's own requirement
//! `in + out + m_u`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::workflow::{TaskIdx, WorkflowDag};

/// Largest block the exhaustive oracle accepts.
pub const ORACLE_LIMIT: usize = 12;

/// A set of tasks together with its incident edges split by direction.
#[derive(Debug, Clone)]
pub struct BlockView {
    members: Vec<TaskIdx>,
    local: HashMap<TaskIdx, usize>,
    internal: Vec<usize>,
    boundary_in: Vec<usize>,
    boundary_out: Vec<usize>,
}

impl BlockView {
    pub fn new(dag: &WorkflowDag, members: impl IntoIterator<Item = TaskIdx>) -> Self {
        let mut members: Vec<TaskIdx> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        let local: HashMap<TaskIdx, usize> =
            members.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let mut internal = Vec::new();
        let mut boundary_in = Vec::new();
        let mut boundary_out = Vec::new();
        for &u in &members {
            for &e in dag.out_edges(u) {
                if local.contains_key(&dag.edge(e).head) {
                    internal.push(e);
                } else {
                    boundary_out.push(e);
                }
            }
            for &e in dag.in_edges(u) {
                if !local.contains_key(&dag.edge(e).tail) {
                    boundary_in.push(e);
                }
            }
        }
        BlockView {
            members,
            local,
            internal,
            boundary_in,
            boundary_out,
        }
    }

    /// The whole workflow as one block.
    pub fn whole(dag: &WorkflowDag) -> Self {
        Self::new(dag, 0..dag.len())
    }

    pub fn members(&self) -> &[TaskIdx] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, u: TaskIdx) -> bool {
        self.local.contains_key(&u)
    }

    pub fn internal(&self) -> &[usize] {
        &self.internal
    }

    pub fn boundary_in(&self) -> &[usize] {
        &self.boundary_in
    }

    pub fn boundary_out(&self) -> &[usize] {
        &self.boundary_out
    }

    /// Positions of each member in `order`, after checking that `order` is a
    /// permutation of the members respecting internal edges.
    fn positions(&self, dag: &WorkflowDag, order: &[TaskIdx]) -> Result<HashMap<TaskIdx, usize>> {
        if order.len() != self.members.len() {
            return Err(Error::InvalidOrder(format!(
                "order has {} tasks, block has {}",
                order.len(),
                self.members.len()
            )));
        }
        let mut pos = HashMap::with_capacity(order.len());
        for (i, &u) in order.iter().enumerate() {
            if !self.contains(u) {
                return Err(Error::InvalidOrder(format!(
                    "task `{}` is not in the block",
                    dag.id(u)
                )));
            }
            if pos.insert(u, i).is_some() {
                return Err(Error::InvalidOrder(format!(
                    "task `{}` appears twice",
                    dag.id(u)
                )));
            }
        }
        for &e in &self.internal {
            let edge = dag.edge(e);
            if pos[&edge.tail] > pos[&edge.head] {
                return Err(Error::InvalidOrder(format!(
                    "`{}` runs before its parent `{}`",
                    dag.id(edge.head),
                    dag.id(edge.tail)
                )));
            }
        }
        Ok(pos)
    }
}

/// An execution order of a block and the peak it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversalResult {
    pub order: Vec<TaskIdx>,
    pub peak: f64,
    pub peak_step: usize,
}

/// Resident memory while the task at position `t` of `order` runs,
/// evaluated edge by edge.
pub fn resident_memory_at_step(
    block: &BlockView,
    dag: &WorkflowDag,
    order: &[TaskIdx],
    t: usize,
) -> Result<f64> {
    let pos = block.positions(dag, order)?;
    if t >= order.len() {
        return Err(Error::InvalidOrder(format!("step {t} out of range")));
    }
    let mut resident = dag.task(order[t]).memory;
    for &e in &block.internal {
        let edge = dag.edge(e);
        if pos[&edge.tail] <= t && t <= pos[&edge.head] {
            resident += edge.volume;
        }
    }
    for &e in &block.boundary_in {
        let edge = dag.edge(e);
        if t <= pos[&edge.head] {
            resident += edge.volume;
        }
    }
    for &e in &block.boundary_out {
        let edge = dag.edge(e);
        if pos[&edge.tail] <= t {
            resident += edge.volume;
        }
    }
    Ok(resident)
}

/// Resident memory at every step, in one sweep over the incident edges.
pub fn resident_profile(
    block: &BlockView,
    dag: &WorkflowDag,
    order: &[TaskIdx],
) -> Result<Vec<f64>> {
    let pos = block.positions(dag, order)?;
    Ok(profile_unchecked(block, dag, order, |u| pos[&u]))
}

fn profile_unchecked(
    block: &BlockView,
    dag: &WorkflowDag,
    order: &[TaskIdx],
    pos: impl Fn(TaskIdx) -> usize,
) -> Vec<f64> {
    let n = order.len();
    // Each edge is live over a closed interval of steps.
    let mut delta = vec![0.0f64; n + 1];
    let mut live = |from: usize, to: usize, v: f64| {
        delta[from] += v;
        delta[to + 1] -= v;
    };
    for &e in &block.internal {
        let edge = dag.edge(e);
        live(pos(edge.tail), pos(edge.head), edge.volume);
    }
    for &e in &block.boundary_in {
        let edge = dag.edge(e);
        live(0, pos(edge.head), edge.volume);
    }
    for &e in &block.boundary_out {
        let edge = dag.edge(e);
        live(pos(edge.tail), n - 1, edge.volume);
    }
    let mut running = 0.0;
    order
        .iter()
        .enumerate()
        .map(|(t, &u)| {
            running += delta[t];
            running + dag.task(u).memory
        })
        .collect()
}

fn peak_of(profile: &[f64]) -> (f64, usize) {
    profile
        .iter()
        .copied()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(best, at), (t, r)| {
            if r > best {
                (r, t)
            } else {
                (best, at)
            }
        })
}

/// Peak of a given order, with the order validated first.
pub fn evaluate_order(
    block: &BlockView,
    dag: &WorkflowDag,
    order: &[TaskIdx],
) -> Result<TraversalResult> {
    if block.is_empty() {
        return Err(Error::EmptyBlock);
    }
    let profile = resident_profile(block, dag, order)?;
    let (peak, peak_step) = peak_of(&profile);
    Ok(TraversalResult {
        order: order.to_vec(),
        peak,
        peak_step,
    })
}

/// Heuristic minimum-peak traversal: the better of a depth-first order that
/// runs the child freeing the most memory first, and a Kahn order that runs
/// the ready task with the smallest resident growth first. Always an upper
/// bound on the optimal peak.
pub fn block_memory_requirement(block: &BlockView, dag: &WorkflowDag) -> Result<TraversalResult> {
    if block.is_empty() {
        return Err(Error::EmptyBlock);
    }
    let locals = LocalGraph::new(block, dag);
    let mut best: Option<TraversalResult> = None;
    for local_order in [locals.depth_first(), locals.min_growth()] {
        let mut at = vec![0usize; local_order.len()];
        for (t, &i) in local_order.iter().enumerate() {
            at[i] = t;
        }
        let order: Vec<TaskIdx> = local_order.iter().map(|&i| block.members[i]).collect();
        let profile = profile_unchecked(block, dag, &order, |u| at[block.local[&u]]);
        let (peak, peak_step) = peak_of(&profile);
        if best.as_ref().map_or(true, |b| peak < b.peak) {
            best = Some(TraversalResult {
                order,
                peak,
                peak_step,
            });
        }
    }
    Ok(best.expect("two candidate orders"))
}

/// Exact minimum peak over all topological orders, by dynamic programming
/// over the executed-task subsets. Limited to [`ORACLE_LIMIT`] members.
pub fn oracle_block_memory(block: &BlockView, dag: &WorkflowDag) -> Result<f64> {
    let n = block.len();
    if n == 0 {
        return Err(Error::EmptyBlock);
    }
    if n > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: ORACLE_LIMIT,
        });
    }
    let bit = |u: TaskIdx| 1usize << block.local[&u];
    let mut parents_mask = vec![0usize; n];
    let internal: Vec<(usize, usize, f64)> = block
        .internal
        .iter()
        .map(|&e| {
            let edge = dag.edge(e);
            parents_mask[block.local[&edge.head]] |= bit(edge.tail);
            (bit(edge.tail), bit(edge.head), edge.volume)
        })
        .collect();
    let inbound: Vec<(usize, f64)> = block
        .boundary_in
        .iter()
        .map(|&e| (bit(dag.edge(e).head), dag.edge(e).volume))
        .collect();
    let outbound: Vec<(usize, f64)> = block
        .boundary_out
        .iter()
        .map(|&e| (bit(dag.edge(e).tail), dag.edge(e).volume))
        .collect();

    let full = (1usize << n) - 1;
    let mut best = vec![f64::INFINITY; full + 1];
    best[0] = 0.0;
    for done in 0..full {
        if best[done].is_infinite() {
            continue;
        }
        for i in 0..n {
            let me = 1usize << i;
            if done & me != 0 || parents_mask[i] & !done != 0 {
                continue;
            }
            let after = done | me;
            let mut step = dag.task(block.members[i]).memory;
            step += internal
                .iter()
                .filter(|&&(t, h, _)| t & after != 0 && h & done == 0)
                .map(|e| e.2)
                .sum::<f64>();
            step += inbound
                .iter()
                .filter(|&&(h, _)| h & done == 0)
                .map(|e| e.1)
                .sum::<f64>();
            step += outbound
                .iter()
                .filter(|&&(t, _)| t & after != 0)
                .map(|e| e.1)
                .sum::<f64>();
            let cand = best[done].max(step);
            if cand < best[after] {
                best[after] = cand;
            }
        }
    }
    Ok(best[full])
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Block-local adjacency used by the traversal heuristics.
struct LocalGraph {
    children: Vec<Vec<usize>>,
    indeg: Vec<usize>,
    /// out volume minus in volume: how much a task grows the resident set.
    growth: Vec<f64>,
}

impl LocalGraph {
    fn new(block: &BlockView, dag: &WorkflowDag) -> Self {
        let n = block.len();
        let mut children = vec![Vec::new(); n];
        let mut indeg = vec![0; n];
        for &e in &block.internal {
            let edge = dag.edge(e);
            let (t, h) = (block.local[&edge.tail], block.local[&edge.head]);
            children[t].push(h);
            indeg[h] += 1;
        }
        let growth = block
            .members
            .iter()
            .map(|&u| dag.out_volume(u) - dag.in_volume(u))
            .collect();
        LocalGraph {
            children,
            indeg,
            growth,
        }
    }

    fn depth_first(&self) -> Vec<usize> {
        let n = self.children.len();
        let mut indeg = self.indeg.clone();
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<usize> = Vec::new();
        let push_sorted = |stack: &mut Vec<usize>, mut ready: Vec<usize>| {
            // Largest freed volume (smallest growth) ends on top.
            ready.sort_by(|&a, &b| Key(self.growth[b], b).cmp(&Key(self.growth[a], a)));
            stack.extend(ready);
        };
        push_sorted(&mut stack, (0..n).filter(|&i| indeg[i] == 0).collect());
        while let Some(u) = stack.pop() {
            order.push(u);
            let mut ready = Vec::new();
            for &v in &self.children[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(v);
                }
            }
            push_sorted(&mut stack, ready);
        }
        order
    }

    fn min_growth(&self) -> Vec<usize> {
        let n = self.children.len();
        let mut indeg = self.indeg.clone();
        let mut order = Vec::with_capacity(n);
        let mut heap: BinaryHeap<Reverse<Key>> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(|i| Reverse(Key(self.growth[i], i)))
            .collect();
        while let Some(Reverse(Key(_, u))) = heap.pop() {
            order.push(u);
            for &v in &self.children[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    heap.push(Reverse(Key(self.growth[v], v)));
                }
            }
        }
        order
    }
}
