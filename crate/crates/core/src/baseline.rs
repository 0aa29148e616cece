//! Memory-aware baseline: cut one low-memory traversal of the whole workflow
//! into consecutive segments, each as long as the current processor allows.
//!
//! Processors are used in decreasing memory order. Segment memory is tracked
//! incrementally while the traversal advances; a task that would push the
//! segment's peak over the current memory opens a new segment on the next
//! processor. Segments of a topological order only have forward edges between
//! them, so the quotient is always acyclic.

use std::collections::HashMap;

use crate::cluster::{ComputingSystem, ProcIdx};
use crate::mapping::{fits, Infeasible, MappingResult, Outcome};
use crate::memory::{block_memory_requirement, BlockView};
use crate::quotient::{build_quotient, Partition};
use crate::workflow::{TaskIdx, WorkflowDag};

pub const NAME: &str = "hetmem";

/// Running memory state of the segment being grown.
#[derive(Debug, Clone)]
struct Segment {
    tasks: Vec<TaskIdx>,
    peak: f64,
    /// Volume of edges from the segment to tasks not yet in it.
    pending_out: f64,
}

impl Segment {
    fn start(dag: &WorkflowDag, u: TaskIdx) -> Self {
        Segment {
            tasks: vec![u],
            peak: dag.requirement(u),
            pending_out: dag.out_volume(u),
        }
    }

    /// Peak and pending volume if `u` were appended.
    fn with(
        &self,
        dag: &WorkflowDag,
        segment_of: &[Option<usize>],
        id: usize,
        u: TaskIdx,
    ) -> (f64, f64) {
        let mut from_inside = 0.0;
        let mut from_outside = 0.0;
        for &e in dag.in_edges(u) {
            let edge = dag.edge(e);
            if segment_of[edge.tail] == Some(id) {
                from_inside += edge.volume;
            } else {
                from_outside += edge.volume;
            }
        }
        // Inputs from outside become live from segment start; edges from
        // inside already were live until the end and now end at u.
        let at_u = dag.task(u).memory
            + dag.in_volume(u)
            + dag.out_volume(u)
            + (self.pending_out - from_inside);
        let peak = (self.peak + from_outside).max(at_u);
        (peak, self.pending_out - from_inside + dag.out_volume(u))
    }
}

/// Runs the baseline on `dag`. The traversal is the low-memory traversal of
/// the whole workflow.
pub fn daghetmem(dag: &WorkflowDag, system: &ComputingSystem) -> Outcome {
    let infeasible = |reason: String, task: Option<TaskIdx>| Infeasible {
        algorithm: NAME.into(),
        reason,
        task: task.map(|u| dag.id(u).to_string()),
    };
    if dag.is_empty() {
        return Err(infeasible("workflow has no tasks".into(), None));
    }
    let max_memory = system.max_memory();
    if let Some(u) = (0..dag.len()).find(|&u| !fits(dag.requirement(u), max_memory)) {
        return Err(infeasible(
            format!(
                "task needs {} but the largest memory is {max_memory}",
                dag.requirement(u)
            ),
            Some(u),
        ));
    }
    let traversal = block_memory_requirement(&BlockView::whole(dag), dag)
        .expect("non-empty workflow")
        .order;
    let procs = system.sort_by_memory_desc();

    let mut segments: Vec<(Segment, ProcIdx)> = Vec::new();
    let mut segment_of: Vec<Option<usize>> = vec![None; dag.len()];
    let mut current = Segment::start(dag, traversal[0]);
    let mut cursor = 0usize;
    debug_assert!(fits(current.peak, system.processor(procs[0]).memory));
    segment_of[traversal[0]] = Some(0);

    for &u in &traversal[1..] {
        let id = segments.len();
        let (peak, pending) = current.with(dag, &segment_of, id, u);
        if fits(peak, system.processor(procs[cursor]).memory) {
            current.tasks.push(u);
            current.peak = peak;
            current.pending_out = pending;
            segment_of[u] = Some(id);
            continue;
        }
        cursor += 1;
        if cursor == procs.len() {
            return Err(infeasible(
                format!("no processor left after {} segments", segments.len() + 1),
                Some(u),
            ));
        }
        let next = Segment::start(dag, u);
        if !fits(next.peak, system.processor(procs[cursor]).memory) {
            return Err(infeasible(
                format!(
                    "task needs {} but the next processor {} has {}",
                    next.peak,
                    system.processor(procs[cursor]).id,
                    system.processor(procs[cursor]).memory
                ),
                Some(u),
            ));
        }
        segments.push((std::mem::replace(&mut current, next), procs[cursor - 1]));
        segment_of[u] = Some(id + 1);
    }
    segments.push((current, procs[cursor]));

    let blocks: Vec<Vec<TaskIdx>> = segments.iter().map(|(s, _)| s.tasks.clone()).collect();
    let partition =
        Partition::from_blocks(dag.len(), &blocks).expect("segments cover the traversal");
    let mut q = build_quotient(dag, &partition);
    let mut orders = HashMap::new();
    for (segment, p) in &segments {
        let v = partition.block_of(segment.tasks[0]);
        q.set_processor(v, Some(*p));
        orders.insert(v, segment.tasks.clone());
    }
    Ok(
        MappingResult::from_quotient(&q, system, NAME, segments.len(), &orders, Vec::new())
            .expect("segment quotient is acyclic"),
    )
}
