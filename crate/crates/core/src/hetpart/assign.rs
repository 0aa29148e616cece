//! Step 2: assign the biggest blocks to the biggest memories, splitting
//! blocks that do not fit.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use crate::cluster::{ComputingSystem, ProcIdx};
use crate::error::Result;
use crate::mapping::fits;
use crate::partitioner::{PartitionRequest, Partitioner, WeightKind};
use crate::quotient::{QuotientGraph, VertexId};
use crate::workflow::TaskIdx;

/// Queue entry ordered by requirement, then work, then smallest member
/// (smaller member first).
#[derive(Debug, Clone, Copy)]
struct Entry {
    requirement: f64,
    work: f64,
    first: Reverse<TaskIdx>,
    vertex: VertexId,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.requirement
            .total_cmp(&other.requirement)
            .then(self.work.total_cmp(&other.work))
            .then(self.first.cmp(&other.first))
            .then(other.vertex.cmp(&self.vertex))
    }
}

/// Max-priority queue of blocks keyed by memory requirement.
#[derive(Debug, Default)]
pub struct BlockQueue {
    heap: BinaryHeap<Entry>,
}

impl BlockQueue {
    pub fn push(&mut self, q: &QuotientGraph, v: VertexId) {
        let vertex = q.vertex(v);
        self.heap.push(Entry {
            requirement: q.requirement(v).peak,
            work: vertex.weight(),
            first: Reverse(vertex.members()[0]),
            vertex: v,
        });
    }

    pub fn pop(&mut self) -> Option<VertexId> {
        self.heap.pop().map(|e| e.vertex)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fit {
    /// Fits and was assigned.
    Assigned,
    /// Fits; left unassigned because mapping was not requested.
    Fits,
    /// Did not fit; replaced by these vertices, all enqueued.
    Split(Vec<VertexId>),
    /// A single task that does not fit; left unassigned.
    Unsplittable,
}

/// Tries to place `v` on processor `p`. Blocks that do not fit are bisected
/// by memory requirement and the parts re-enqueued.
pub fn fit_block(
    q: &mut QuotientGraph,
    queue: &mut BlockQueue,
    v: VertexId,
    p: ProcIdx,
    system: &ComputingSystem,
    do_map: bool,
    partitioner: &dyn Partitioner,
    seed: u64,
) -> Result<Fit> {
    if fits(q.requirement(v).peak, system.processor(p).memory) {
        if do_map {
            q.set_processor(v, Some(p));
            return Ok(Fit::Assigned);
        }
        return Ok(Fit::Fits);
    }
    let members = q.vertex(v).members().to_vec();
    if members.len() < 2 {
        return Ok(Fit::Unsplittable);
    }
    let request = PartitionRequest::new(2)
        .weight(WeightKind::MemoryRequirement)
        .seed(seed);
    let parts = partitioner.partition(q.dag(), &members, &request)?;
    if parts.len() < 2 {
        return Ok(Fit::Unsplittable);
    }
    let ids = q.split(v, &parts)?;
    for &id in &ids {
        queue.push(q, id);
    }
    Ok(Fit::Split(ids))
}

/// Assigns blocks in decreasing requirement order to processors in
/// decreasing memory order. Once processors run out, the remaining blocks are
/// split until each fits the smallest memory and stay unassigned.
pub fn biggest_assign(
    q: &mut QuotientGraph,
    system: &ComputingSystem,
    partitioner: &dyn Partitioner,
    seed: u64,
) -> Result<()> {
    let mut procs: VecDeque<ProcIdx> = system.sort_by_memory_desc().into();
    let smallest = *procs.back().expect("systems have a processor");
    let mut queue = BlockQueue::default();
    let ids: Vec<VertexId> = q
        .vertex_ids()
        .filter(|&v| q.processor(v).is_none())
        .collect();
    for v in ids {
        queue.push(q, v);
    }
    while let Some(&p) = procs.front() {
        let Some(v) = queue.pop() else { break };
        if fit_block(q, &mut queue, v, p, system, true, partitioner, seed)? == Fit::Assigned {
            procs.pop_front();
        }
    }
    while let Some(v) = queue.pop() {
        fit_block(q, &mut queue, v, smallest, system, false, partitioner, seed)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Processor;
    use crate::partitioner::BuiltinPartitioner;
    use crate::quotient::{build_quotient, Partition};
    use crate::workflow::{WorkflowBuilder, WorkflowDag};

    fn procs(memories: &[f64]) -> ComputingSystem {
        let procs = memories
            .iter()
            .enumerate()
            .map(|(i, &m)| Processor {
                id: format!("p{i}"),
                memory: m,
                speed: 1.0,
                kind: None,
            })
            .collect();
        ComputingSystem::new(procs, 1.0).unwrap()
    }

    fn isolated(memories: &[f64]) -> WorkflowDag {
        let mut b = WorkflowBuilder::new();
        for (i, m) in memories.iter().enumerate() {
            b.add_task(format!("t{i}"), 1.0, *m);
        }
        b.build().unwrap()
    }

    #[test]
    fn both_fit_first_try() {
        let dag = isolated(&[8.0, 5.0]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1]));
        biggest_assign(&mut q, &procs(&[6.0, 10.0]), &BuiltinPartitioner, 0).unwrap();
        assert_eq!(q.processor(0), Some(1));
        assert_eq!(q.processor(1), Some(0));
    }

    #[test]
    fn fitting_without_mapping_leaves_queue_alone() {
        let dag = isolated(&[8.0]);
        let mut q = build_quotient(&dag, &Partition::trivial(1));
        let mut queue = BlockQueue::default();
        let fit = fit_block(
            &mut q,
            &mut queue,
            0,
            0,
            &procs(&[10.0]),
            false,
            &BuiltinPartitioner,
            0,
        )
        .unwrap();
        assert_eq!(fit, Fit::Fits);
        assert!(queue.is_empty());
        assert_eq!(q.processor(0), None);
    }

    #[test]
    fn overweight_pair_split_into_singletons() {
        // a and b need 7 each, but b runs while a's output is still held.
        let dag = WorkflowBuilder::new()
            .task("a", 1.0, 3.5)
            .task("b", 1.0, 3.5)
            .task("x", 1.0, 0.0)
            .edge("a", "x", 3.5)
            .edge("b", "x", 3.5)
            .build()
            .unwrap();
        assert_eq!((dag.requirement(0), dag.requirement(1)), (7.0, 7.0));
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 0, 1]));
        assert_eq!(q.requirement(0).peak, 10.5);
        let mut queue = BlockQueue::default();
        let fit = fit_block(
            &mut q,
            &mut queue,
            0,
            0,
            &procs(&[10.0]),
            true,
            &BuiltinPartitioner,
            0,
        )
        .unwrap();
        let Fit::Split(ids) = fit else {
            panic!("expected split, got {fit:?}")
        };
        assert_eq!(ids.len(), 2);
        assert_eq!(queue.len(), 2);
        assert!(ids
            .iter()
            .all(|&v| q.vertex(v).members().len() == 1 && q.requirement(v).peak == 7.0));
    }

    #[test]
    fn oversized_block_split_until_it_fits() {
        // Both consumers need both producers, so any order holds 6 at once.
        let dag = WorkflowBuilder::new()
            .task("a", 1.0, 0.0)
            .task("b", 1.0, 0.0)
            .task("y", 1.0, 0.0)
            .task("z", 1.0, 0.0)
            .edge("a", "y", 1.5)
            .edge("a", "z", 1.5)
            .edge("b", "y", 1.5)
            .edge("b", "z", 1.5)
            .build()
            .unwrap();
        let mut q = build_quotient(&dag, &Partition::trivial(4));
        assert_eq!(q.requirement(0).peak, 6.0);
        let system = procs(&[4.0, 4.0, 4.0, 4.0]);
        biggest_assign(&mut q, &system, &BuiltinPartitioner, 0).unwrap();
        for v in q.vertex_ids() {
            let r = q.requirement(v).peak;
            let p = q.processor(v).expect("four singletons on four processors");
            assert!(fits(r, system.processor(p).memory));
        }
        assert_eq!(q.len(), 4);
        let used: Vec<_> = q.vertex_ids().filter_map(|v| q.processor(v)).collect();
        let mut dedup = used.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(used.len(), dedup.len());
        assert!(q.is_acyclic().acyclic);
    }

    #[test]
    fn leftovers_fit_smallest_memory() {
        let dag = isolated(&[3.0, 3.0, 3.0, 3.0]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 0, 1, 2]));
        let system = procs(&[4.0, 20.0]);
        biggest_assign(&mut q, &system, &BuiltinPartitioner, 0).unwrap();
        let unassigned: Vec<_> = q
            .vertex_ids()
            .filter(|&v| q.processor(v).is_none())
            .collect();
        assert!(!unassigned.is_empty());
        for v in unassigned {
            assert!(fits(q.requirement(v).peak, 4.0));
        }
    }

    #[test]
    fn queue_ties_prefer_more_work_then_smaller_member() {
        let dag = WorkflowBuilder::new()
            .task("a", 1.0, 5.0)
            .task("b", 2.0, 5.0)
            .task("c", 2.0, 5.0)
            .build()
            .unwrap();
        let q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2]));
        let mut queue = BlockQueue::default();
        for v in 0..3 {
            queue.push(&q, v);
        }
        assert_eq!(
            (queue.pop(), queue.pop(), queue.pop()),
            (Some(1), Some(2), Some(0))
        );
    }
}
