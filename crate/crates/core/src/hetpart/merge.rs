//! Step 3: merge every unassigned block into an assigned neighbor, choosing
//! the partner that gives the smallest estimated makespan.

use std::collections::{HashSet, VecDeque};

use crate::cluster::ComputingSystem;
use crate::makespan::bottom_weights;
use crate::mapping::fits;
use crate::quotient::{QuotientGraph, VertexId};

/// Times a vertex may go back to the end of the unassigned list.
pub const MAX_REINSERTIONS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeChoice {
    pub makespan: f64,
    pub partner: Option<VertexId>,
    pub third: Option<VertexId>,
}

impl MergeChoice {
    const NONE: MergeChoice = MergeChoice {
        makespan: f64::INFINITY,
        partner: None,
        third: None,
    };
}

fn critical_set(q: &QuotientGraph, system: &ComputingSystem) -> HashSet<VertexId> {
    bottom_weights(q, system)
        .expect("quotient is acyclic")
        .critical_path
        .into_iter()
        .collect()
}

fn estimated(q: &QuotientGraph, system: &ComputingSystem) -> f64 {
    bottom_weights(q, system)
        .expect("quotient stays acyclic")
        .makespan
}

/// Evaluates merging `v` into each assigned neighbor accepted by
/// `candidates`. A merge that
/// closes a 2-cycle also absorbs the other vertex of the cycle. Merges that
/// stay cyclic or overflow the partner's memory are skipped. Every tentative
/// merge is undone before returning.
pub fn find_ms_opt_merge(
    q: &mut QuotientGraph,
    system: &ComputingSystem,
    v: VertexId,
    candidates: impl Fn(VertexId) -> bool,
) -> MergeChoice {
    let mut best = MergeChoice::NONE;
    let partners: Vec<VertexId> = q
        .neighbors(v)
        .into_iter()
        .filter(|&w| candidates(w))
        .collect();
    for partner in partners {
        let Some(p) = q.processor(partner) else {
            continue;
        };
        let m = q.merge(v, partner).expect("live vertices");
        q.set_processor(m, Some(p));
        let mut merged = m;
        let mut third = None;
        if let Some(cycle) = q.cycle_through(m) {
            if cycle.len() != 2 {
                q.unmerge(m).expect("just merged");
                continue;
            }
            let other = cycle[1];
            let m2 = q.merge(m, other).expect("live vertices");
            q.set_processor(m2, Some(p));
            if q.cycle_through(m2).is_some() {
                q.unmerge(m2).expect("just merged");
                q.unmerge(m).expect("just merged");
                continue;
            }
            merged = m2;
            third = Some(other);
        }
        if fits(q.requirement(merged).peak, system.processor(p).memory) {
            let makespan = estimated(q, system);
            if makespan <= best.makespan {
                best = MergeChoice {
                    makespan,
                    partner: Some(partner),
                    third,
                };
            }
        }
        if merged != m {
            q.unmerge(merged).expect("just merged");
        }
        q.unmerge(m).expect("just merged");
    }
    best
}

/// Why Step 3 gave up.
#[derive(Debug, Clone, PartialEq)]
pub struct Stuck {
    pub vertex: VertexId,
    pub first_task: usize,
}

/// Merges unassigned vertices into assigned ones, preferring partners off
/// the critical path. Vertices with no partner yet but with unassigned
/// neighbors are retried later, at most [`MAX_REINSERTIONS`] times. Returns
/// the estimated makespan after each executed merge.
pub fn merge_unassigned_to_assigned(
    q: &mut QuotientGraph,
    system: &ComputingSystem,
) -> Result<Vec<f64>, Stuck> {
    let order = q.topological_order().expect("quotient is acyclic");
    let mut pending: VecDeque<VertexId> = order
        .into_iter()
        .filter(|&v| q.processor(v).is_none())
        .collect();
    let mut history = Vec::new();
    // Recomputed only when a merge changes the graph.
    let mut critical = critical_set(q, system);
    while let Some(v) = pending.pop_front() {
        if !q.contains(v) {
            continue;
        }
        // Unassigned neighbors are skipped inside, so both searches range
        // over assigned vertices only.
        let mut choice = find_ms_opt_merge(q, system, v, |w| !critical.contains(&w));
        if choice.partner.is_none() {
            choice = find_ms_opt_merge(q, system, v, |_| true);
        }
        if let Some(partner) = choice.partner {
            let p = q.processor(partner).expect("partners are assigned");
            let mut m = q.merge(v, partner).expect("live vertices");
            if let Some(third) = choice.third {
                m = q.merge(m, third).expect("live vertices");
            }
            q.set_processor(m, Some(p));
            q.set_counter(m, 0);
            q.commit();
            debug_assert!(q.cycle_through(m).is_none());
            let bw = bottom_weights(q, system).expect("quotient stays acyclic");
            history.push(bw.makespan);
            critical = bw.critical_path.into_iter().collect();
            continue;
        }
        let waiting = q.neighbors(v).iter().any(|&w| q.processor(w).is_none());
        let counter = q.vertex(v).counter;
        if waiting && counter < MAX_REINSERTIONS {
            q.set_counter(v, counter + 1);
            pending.push_back(v);
            continue;
        }
        return Err(Stuck {
            vertex: v,
            first_task: q.vertex(v).members()[0],
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Processor;
    use crate::quotient::{build_quotient, Partition};
    use crate::workflow::{WorkflowBuilder, WorkflowDag};

    fn system(specs: &[(f64, f64)]) -> ComputingSystem {
        let procs = specs
            .iter()
            .enumerate()
            .map(|(i, &(memory, speed))| Processor {
                id: format!("p{i}"),
                memory,
                speed,
                kind: None,
            })
            .collect();
        ComputingSystem::new(procs, 1.0).unwrap()
    }

    /// a -> b, a -> c, c -> b, one task per vertex.
    fn triangle() -> WorkflowDag {
        WorkflowBuilder::new()
            .task("a", 1.0, 0.0)
            .task("b", 1.0, 0.0)
            .task("c", 1.0, 0.0)
            .edge("a", "b", 1.0)
            .edge("a", "c", 1.0)
            .edge("c", "b", 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn no_assigned_neighbors() {
        let dag = triangle();
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2]));
        let choice = find_ms_opt_merge(&mut q, &system(&[(10.0, 1.0)]), 0, |_| false);
        assert_eq!(choice, MergeChoice::NONE);
    }

    #[test]
    fn two_cycle_absorbs_third_vertex() {
        let dag = triangle();
        let sys = system(&[(10.0, 1.0), (10.0, 1.0)]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2]));
        q.set_processor(1, Some(0));
        q.set_processor(2, Some(1));
        let before = q.clone();
        let choice = find_ms_opt_merge(&mut q, &sys, 0, |w| w == 1);
        assert_eq!(choice.partner, Some(1));
        assert_eq!(choice.third, Some(2));
        // All three tasks on one unit-speed processor.
        assert_eq!(choice.makespan, 3.0);
        assert!(q == before);
        assert_eq!(q.journal_len(), 0);
    }

    #[test]
    fn smaller_makespan_wins() {
        // x feeds y and z; y is on a fast processor, z on a slow one.
        let dag = WorkflowBuilder::new()
            .task("x", 4.0, 0.0)
            .task("y", 4.0, 0.0)
            .task("z", 4.0, 0.0)
            .edge("x", "y", 1.0)
            .edge("x", "z", 1.0)
            .build()
            .unwrap();
        let sys = system(&[(10.0, 4.0), (10.0, 1.0)]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2]));
        q.set_processor(1, Some(0));
        q.set_processor(2, Some(1));
        let choice = find_ms_opt_merge(&mut q, &sys, 0, |w| w == 1 || w == 2);
        // Onto y: 8/4 + 1 + 4/1 = 7. Onto z: 8/1 + 1 + 4/4 = 10.
        assert_eq!(choice.partner, Some(1));
        assert_eq!(choice.makespan, 7.0);
    }

    #[test]
    fn memory_limit_respected() {
        let dag = WorkflowBuilder::new()
            .task("x", 1.0, 6.0)
            .task("y", 1.0, 6.0)
            .edge("x", "y", 0.0)
            .build()
            .unwrap();
        let sys = system(&[(6.0, 1.0)]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1]));
        q.set_processor(1, Some(0));
        let choice = find_ms_opt_merge(&mut q, &sys, 0, |w| w == 1);
        assert_eq!(choice.partner, Some(1));
        let tight = system(&[(5.0, 1.0)]);
        let choice = find_ms_opt_merge(&mut q, &tight, 0, |w| w == 1);
        assert_eq!(choice.partner, None);
    }

    #[test]
    fn nothing_to_merge() {
        let dag = triangle();
        let sys = system(&[(10.0, 1.0), (10.0, 1.0), (10.0, 1.0)]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2]));
        for v in 0..3 {
            q.set_processor(v, Some(v));
        }
        let before = q.clone();
        assert_eq!(
            merge_unassigned_to_assigned(&mut q, &sys).unwrap(),
            Vec::<f64>::new()
        );
        assert!(q == before);
    }

    #[test]
    fn falls_back_to_critical_path_partner() {
        // s -> u -> t chain plus a side task w; only t's processor can hold u.
        let dag = WorkflowBuilder::new()
            .task("s", 10.0, 0.0)
            .task("t", 10.0, 0.0)
            .task("u", 1.0, 5.0)
            .task("w", 1.0, 0.0)
            .edge("s", "u", 1.0)
            .edge("u", "t", 1.0)
            .edge("w", "u", 1.0)
            .build()
            .unwrap();
        // Processors: s on p0 (memory 2), t on p1 (memory 20), w on p2 (memory 2).
        let sys = system(&[(2.0, 1.0), (20.0, 1.0), (2.0, 1.0)]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2, 3]));
        q.set_processor(0, Some(0));
        q.set_processor(1, Some(1));
        q.set_processor(3, Some(2));
        let critical = bottom_weights(&q, &sys).unwrap().critical_path;
        assert!(critical.contains(&1));
        merge_unassigned_to_assigned(&mut q, &sys).unwrap();
        assert_eq!(q.len(), 3);
        let merged = q
            .vertex_ids()
            .find(|&v| q.vertex(v).members().len() == 2)
            .unwrap();
        assert_eq!(q.vertex(merged).members(), &[1, 2]);
        assert_eq!(q.processor(merged), Some(1));
    }

    #[test]
    fn waits_for_unassigned_parent() {
        // p -> c -> d with only d assigned. p comes first but has no assigned
        // neighbor, so it waits; c merges into d and p follows.
        let dag = WorkflowBuilder::new()
            .task("p", 1.0, 0.0)
            .task("c", 1.0, 0.0)
            .task("d", 1.0, 0.0)
            .edge("p", "c", 1.0)
            .edge("c", "d", 1.0)
            .build()
            .unwrap();
        let sys = system(&[(10.0, 1.0)]);
        // Natural id order: c = 0, d = 1, p = 2.
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2]));
        q.set_processor(1, Some(0));
        let history = merge_unassigned_to_assigned(&mut q, &sys).unwrap();
        assert_eq!(history.len(), 2);
        assert_eq!(q.len(), 1);
        let v = q.vertex_ids().next().unwrap();
        assert_eq!(q.processor(v), Some(0));
    }

    #[test]
    fn gives_up_without_partner() {
        let dag = WorkflowBuilder::new()
            .task("x", 1.0, 8.0)
            .task("y", 1.0, 7.0)
            .edge("x", "y", 1.0)
            .build()
            .unwrap();
        let sys = system(&[(8.0, 1.0)]);
        let mut q = build_quotient(&dag, &Partition::from_labels(&[0, 1]));
        q.set_processor(1, Some(0));
        let err = merge_unassigned_to_assigned(&mut q, &sys).unwrap_err();
        assert_eq!(err.vertex, 0);
    }
}
