//! The four-step heuristic: acyclic partitioning into k' blocks, assignment
//! of the biggest blocks to the biggest memories, makespan-driven merging of
//! the leftovers, and local search. Every k' in `1..=k` is tried and the best
//! feasible mapping is kept.

pub mod assign;
pub mod local;
pub mod merge;

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::cluster::ComputingSystem;
use crate::makespan::makespan;
use crate::mapping::{fits, Infeasible, MappingResult, Outcome, TraceEvent};
use crate::partitioner::{
    BuiltinPartitioner, PartitionRequest, Partitioner, WeightKind, DEFAULT_EPSILON,
};
use crate::quotient::{build_quotient, Partition};
use crate::workflow::{TaskIdx, WorkflowDag};

pub const NAME: &str = "hetpart";

#[derive(Clone)]
pub struct HetPartConfig {
    pub epsilon: f64,
    pub seed: u64,
    /// Try only every `stride`-th k', plus 1 and k. `None` tries all.
    pub stride: Option<usize>,
    pub partitioner: Arc<dyn Partitioner>,
}

impl Default for HetPartConfig {
    fn default() -> Self {
        HetPartConfig {
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            stride: None,
            partitioner: Arc::new(BuiltinPartitioner),
        }
    }
}

impl std::fmt::Debug for HetPartConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HetPartConfig")
            .field("epsilon", &self.epsilon)
            .field("seed", &self.seed)
            .field("stride", &self.stride)
            .finish_non_exhaustive()
    }
}

fn infeasible(dag: &WorkflowDag, reason: impl Into<String>, task: Option<TaskIdx>) -> Infeasible {
    Infeasible {
        algorithm: NAME.into(),
        reason: reason.into(),
        task: task.map(|u| dag.id(u).to_string()),
    }
}

fn precheck(dag: &WorkflowDag, system: &ComputingSystem) -> Result<(), Infeasible> {
    if dag.is_empty() {
        return Err(infeasible(dag, "workflow has no tasks", None));
    }
    let max_memory = system.max_memory();
    if let Some(u) = (0..dag.len()).find(|&u| !fits(dag.requirement(u), max_memory)) {
        return Err(infeasible(
            dag,
            format!(
                "task needs {} but the largest memory is {max_memory}",
                dag.requirement(u)
            ),
            Some(u),
        ));
    }
    Ok(())
}

/// Steps 2 to 4 on a given initial partition.
pub fn run_from_partition(
    dag: &WorkflowDag,
    system: &ComputingSystem,
    partition: &Partition,
    parts: usize,
    config: &HetPartConfig,
) -> Outcome {
    let mut q = build_quotient(dag, partition);
    let mut trace = Vec::new();
    let internal = |e: crate::error::Error| infeasible(dag, e.to_string(), None);

    assign::biggest_assign(&mut q, system, config.partitioner.as_ref(), config.seed)
        .map_err(internal)?;
    let estimated = makespan(&q, system).map_err(internal)?;
    trace.push(TraceEvent {
        step: 2,
        action: "assign".into(),
        makespan: estimated,
    });

    match merge::merge_unassigned_to_assigned(&mut q, system) {
        Ok(history) => {
            trace.extend(history.into_iter().map(|m| TraceEvent {
                step: 3,
                action: "merge".into(),
                makespan: m,
            }));
        }
        Err(stuck) => {
            let r = q.requirement(stuck.vertex).peak;
            return Err(infeasible(
                dag,
                format!(
                    "block of {} tasks needing {r} has no feasible merge partner",
                    q.vertex(stuck.vertex).members().len()
                ),
                Some(stuck.first_task),
            ));
        }
    }

    let before = makespan(&q, system).map_err(internal)?;
    trace.push(TraceEvent {
        step: 4,
        action: "start".into(),
        makespan: before,
    });
    local::swap_until_best(&mut q, system, &mut trace);
    local::move_to_idle(&mut q, system, &mut trace);

    MappingResult::from_quotient(&q, system, NAME, parts, &HashMap::new(), trace).map_err(internal)
}

/// One candidate of the sweep: partition into `parts` blocks by work, then
/// Steps 2 to 4.
pub fn run_candidate(
    dag: &WorkflowDag,
    system: &ComputingSystem,
    parts: usize,
    config: &HetPartConfig,
) -> Outcome {
    precheck(dag, system)?;
    let members: Vec<TaskIdx> = (0..dag.len()).collect();
    let request = PartitionRequest::new(parts)
        .epsilon(config.epsilon)
        .weight(WeightKind::Work)
        .seed(config.seed);
    let blocks = config
        .partitioner
        .partition(dag, &members, &request)
        .map_err(|e| {
            infeasible(
                dag,
                format!("partitioning into {parts} blocks failed: {e}"),
                None,
            )
        })?;
    let partition = Partition::from_blocks(dag.len(), &blocks)
        .map_err(|e| infeasible(dag, e.to_string(), None))?;
    let estimated = makespan(&build_quotient(dag, &partition), system)
        .map_err(|e| infeasible(dag, e.to_string(), None))?;
    let mut result = run_from_partition(dag, system, &partition, parts, config)?;
    result.trace.insert(
        0,
        TraceEvent {
            step: 1,
            action: format!("partition into {}", blocks.len()),
            makespan: estimated,
        },
    );
    Ok(result)
}

/// The k' values tried for a system of `k` processors and `n` tasks.
pub fn sweep_values(k: usize, n: usize, stride: Option<usize>) -> Vec<usize> {
    let top = k.min(n);
    match stride {
        Some(s) if s > 1 => {
            let mut values: Vec<usize> = (1..=top).step_by(s).collect();
            if values.last() != Some(&top) {
                values.push(top);
            }
            values
        }
        _ => (1..=top).collect(),
    }
}

/// Runs every candidate of the sweep, in parallel, returning them by k'.
pub fn sweep(
    dag: &WorkflowDag,
    system: &ComputingSystem,
    config: &HetPartConfig,
) -> Vec<(usize, Outcome)> {
    if let Err(e) = precheck(dag, system) {
        return vec![(1, Err(e))];
    }
    sweep_values(system.len(), dag.len(), config.stride)
        .into_par_iter()
        .map(|parts| (parts, run_candidate(dag, system, parts, config)))
        .collect()
}

/// Best feasible mapping over the sweep; ties go to the smaller k'.
pub fn daghetpart(dag: &WorkflowDag, system: &ComputingSystem, config: &HetPartConfig) -> Outcome {
    let mut best: Option<MappingResult> = None;
    let mut last_failure = None;
    for (_, outcome) in sweep(dag, system, config) {
        match outcome {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.makespan < b.makespan) {
                    best = Some(r);
                }
            }
            Err(e) => last_failure = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_failure.unwrap_or_else(|| infeasible(dag, "no candidate partition", None))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{Preset, Processor};
    use crate::mapping::verify_mapping;
    use crate::quotient::tests::{nine_task_dag, nine_task_partition};

    fn uniform(k: usize, memory: f64) -> ComputingSystem {
        let procs = (0..k)
            .map(|i| Processor {
                id: format!("p{i}"),
                memory,
                speed: 1.0,
                kind: None,
            })
            .collect();
        ComputingSystem::new(procs, 1.0).unwrap()
    }

    #[test]
    fn worked_example_before_local_search() {
        let dag = nine_task_dag();
        let system = uniform(4, 100.0);
        let partition = nine_task_partition(&dag);
        let result =
            run_from_partition(&dag, &system, &partition, 4, &HetPartConfig::default()).unwrap();
        let start = result.trace.iter().find(|e| e.action == "start").unwrap();
        assert_eq!(start.makespan, 12.0);
        // Identical processors leave nothing to improve.
        assert_eq!(result.makespan, 12.0);
        assert_eq!(result.blocks.len(), 4);
    }

    #[test]
    fn sweep_dominance() {
        let dag = nine_task_dag();
        let system = ComputingSystem::preset(Preset::Small, 1.0).unwrap();
        let config = HetPartConfig::default();
        let best = daghetpart(&dag, &system, &config).unwrap();
        for (parts, outcome) in sweep(&dag, &system, &config) {
            if let Ok(r) = outcome {
                assert!(best.makespan <= r.makespan, "k'={parts}");
            }
        }
        let single = run_candidate(&dag, &system, 1, &config).unwrap();
        assert!(best.makespan <= single.makespan);
        assert!(verify_mapping(&dag, &system, &best).is_valid());
    }

    #[test]
    fn deterministic() {
        let dag = nine_task_dag();
        let system = ComputingSystem::preset(Preset::Default, 0.5).unwrap();
        let config = HetPartConfig {
            seed: 7,
            ..HetPartConfig::default()
        };
        let a = serde_json::to_string(&daghetpart(&dag, &system, &config).unwrap()).unwrap();
        let b = serde_json::to_string(&daghetpart(&dag, &system, &config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_task_is_named() {
        let dag = crate::workflow::WorkflowBuilder::new()
            .task("big", 1.0, 500.0)
            .build()
            .unwrap();
        let err = daghetpart(&dag, &uniform(2, 10.0), &HetPartConfig::default()).unwrap_err();
        assert_eq!(err.task.as_deref(), Some("big"));
    }

    #[test]
    fn stride_keeps_endpoints() {
        assert_eq!(sweep_values(10, 100, Some(3)), vec![1, 4, 7, 10]);
        assert_eq!(sweep_values(9, 100, Some(4)), vec![1, 5, 9]);
        assert_eq!(sweep_values(36, 5, None), vec![1, 2, 3, 4, 5]);
    }
}
