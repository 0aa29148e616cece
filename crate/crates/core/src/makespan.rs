//! Bottom weights, makespan and critical path of a quotient DAG.
//!
//! The bottom weight of a vertex is its compute time `w / s` plus the largest
//! `c / β + b(child)` over its children; the makespan is the largest bottom
//! weight. Vertices without a processor are evaluated at speed 1, which gives
//! the estimated makespan of a partial mapping.

use crate::cluster::ComputingSystem;
use crate::error::{Error, Result};
use crate::quotient::{QuotientGraph, VertexId};

/// Largest quotient the path-enumeration oracle accepts.
pub const ORACLE_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BottomWeights {
    /// Indexed by vertex id; NaN for ids that are not live.
    values: Vec<f64>,
    pub makespan: f64,
    pub critical_path: Vec<VertexId>,
    bandwidth: f64,
}

impl BottomWeights {
    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v]
    }

    /// (vertex, bottom weight) in ascending vertex order.
    pub fn iter(&self) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.is_nan())
            .map(|(v, &b)| (v, b))
    }
}

fn speed_of(q: &QuotientGraph, system: &ComputingSystem, v: VertexId) -> f64 {
    q.processor(v).map_or(1.0, |p| system.processor(p).speed)
}

pub fn bottom_weights(q: &QuotientGraph, system: &ComputingSystem) -> Result<BottomWeights> {
    let order = q
        .topological_order()
        .map_err(|_| Error::CyclicQuotient(q.is_acyclic().cycle.unwrap_or_default()))?;
    let beta = system.bandwidth;
    let mut values = vec![f64::NAN; q.id_bound()];
    for &v in order.iter().rev() {
        let own = q.vertex(v).weight() / speed_of(q, system, v);
        let tail = q
            .children(v)
            .map(|(w, c)| c / beta + values[w])
            .fold(0.0, f64::max);
        values[v] = own + tail;
    }
    let mut bw = BottomWeights {
        values,
        makespan: 0.0,
        critical_path: Vec::new(),
        bandwidth: beta,
    };
    bw.makespan = bw.iter().map(|(_, b)| b).fold(0.0, f64::max);
    bw.critical_path = critical_path(&bw, q);
    Ok(bw)
}

/// Makespan of `q` (estimated when some vertices are unassigned).
pub fn makespan(q: &QuotientGraph, system: &ComputingSystem) -> Result<f64> {
    bottom_weights(q, system).map(|bw| bw.makespan)
}

/// Chain of argmax vertices: starts at the vertex with the largest bottom
/// weight and repeatedly steps to the child maximizing `c / β + b(child)`.
/// Ties go to the smaller vertex id.
pub fn critical_path(bw: &BottomWeights, q: &QuotientGraph) -> Vec<VertexId> {
    let mut start: Option<(VertexId, f64)> = None;
    for (v, b) in bw.iter() {
        if start.map_or(true, |(_, best)| b > best) {
            start = Some((v, b));
        }
    }
    let Some((mut at, _)) = start else {
        return Vec::new();
    };
    let mut path = vec![at];
    loop {
        let mut next: Option<(VertexId, f64)> = None;
        for (w, c) in q.children(at) {
            let term = c / bw.bandwidth + bw.values[w];
            if next.map_or(true, |(_, best)| term > best) {
                next = Some((w, term));
            }
        }
        match next {
            Some((w, _)) => {
                path.push(w);
                at = w;
            }
            None => return path,
        }
    }
}

/// Longest source-to-sink path by explicit enumeration of every path.
pub fn oracle_makespan(q: &QuotientGraph, system: &ComputingSystem) -> Result<f64> {
    if q.len() > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            size: q.len(),
            limit: ORACLE_LIMIT,
        });
    }
    if !q.is_acyclic().acyclic {
        return Err(Error::CyclicQuotient(
            q.is_acyclic().cycle.unwrap_or_default(),
        ));
    }
    fn walk(q: &QuotientGraph, system: &ComputingSystem, v: VertexId, acc: f64, best: &mut f64) {
        let here = acc + q.vertex(v).weight() / speed_of(q, system, v);
        let mut leaf = true;
        for (w, c) in q.children(v) {
            leaf = false;
            walk(q, system, w, here + c / system.bandwidth, best);
        }
        if leaf && here > *best {
            *best = here;
        }
    }
    let mut best = 0.0;
    for v in q.vertex_ids() {
        if q.parents(v).next().is_none() {
            walk(q, system, v, 0.0, &mut best);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Processor;
    use crate::quotient::tests::{nine_task_dag, nine_task_partition};
    use crate::quotient::{build_quotient, Partition};
    use crate::workflow::{WorkflowBuilder, WorkflowDag};

    fn unit_system(k: usize, bandwidth: f64) -> ComputingSystem {
        let procs = (0..k)
            .map(|i| Processor {
                id: format!("p{i}"),
                memory: 100.0,
                speed: 1.0,
                kind: None,
            })
            .collect();
        ComputingSystem::new(procs, bandwidth).unwrap()
    }

    #[test]
    fn nine_task_bottom_weights() {
        let dag = nine_task_dag();
        let q = build_quotient(&dag, &nine_task_partition(&dag));
        let bw = bottom_weights(&q, &unit_system(4, 1.0)).unwrap();
        assert_eq!(
            bw.iter().map(|(_, b)| b).collect::<Vec<_>>(),
            vec![12.0, 7.0, 5.0, 1.0]
        );
        assert_eq!(bw.makespan, 12.0);
        assert_eq!(bw.critical_path, vec![0, 1, 2, 3]);
        assert_eq!(oracle_makespan(&q, &unit_system(4, 1.0)).unwrap(), 12.0);
    }

    #[test]
    fn single_vertex_is_work_over_speed() {
        let dag = nine_task_dag();
        let mut q = build_quotient(&dag, &Partition::trivial(dag.len()));
        let procs = vec![Processor {
            id: "fast".into(),
            memory: 10.0,
            speed: 3.0,
            kind: None,
        }];
        let system = ComputingSystem::new(procs, 0.5).unwrap();
        q.set_processor(0, Some(0));
        let bw = bottom_weights(&q, &system).unwrap();
        assert_eq!(bw.makespan, 3.0);
        assert_eq!(bw.critical_path, vec![0]);
        assert_eq!(oracle_makespan(&q, &system).unwrap(), 3.0);
    }

    #[test]
    fn two_vertex_chain() {
        let dag = WorkflowBuilder::new()
            .task("a", 2.0, 0.0)
            .task("b", 3.0, 0.0)
            .edge("a", "b", 4.0)
            .build()
            .unwrap();
        let q = build_quotient(&dag, &Partition::from_labels(&[0, 1]));
        let bw = bottom_weights(&q, &unit_system(2, 2.0)).unwrap();
        assert_eq!(bw.get(1), 3.0);
        assert_eq!(bw.get(0), 7.0);
    }

    #[test]
    fn equal_children_prefer_smaller_id() {
        let dag = WorkflowBuilder::new()
            .task("r", 1.0, 0.0)
            .task("x", 2.0, 0.0)
            .task("y", 2.0, 0.0)
            .edge("r", "x", 1.0)
            .edge("r", "y", 1.0)
            .build()
            .unwrap();
        let q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 2]));
        let bw = bottom_weights(&q, &unit_system(3, 1.0)).unwrap();
        assert_eq!(bw.critical_path, vec![0, 1]);
    }

    #[test]
    fn cyclic_quotient_rejected() {
        let dag = WorkflowBuilder::new()
            .task("a", 1.0, 0.0)
            .task("b", 1.0, 0.0)
            .task("c", 1.0, 0.0)
            .edge("a", "b", 1.0)
            .edge("b", "c", 1.0)
            .build()
            .unwrap();
        let q = build_quotient(&dag, &Partition::from_labels(&[0, 1, 0]));
        assert!(matches!(
            bottom_weights(&q, &unit_system(2, 1.0)),
            Err(Error::CyclicQuotient(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_quotient() -> impl Strategy<Value = (WorkflowDag, Vec<Option<usize>>, Vec<f64>, f64)>
        {
            (1usize..=ORACLE_LIMIT).prop_flat_map(|n| {
                let pairs = n * (n - 1) / 2;
                (
                    prop::collection::vec(0.0f64..100.0, n),
                    prop::collection::vec(prop::option::weighted(0.4, 0.0f64..20.0), pairs),
                    prop::collection::vec(prop::option::of(0usize..n), n),
                    prop::collection::vec(0.5f64..40.0, n),
                    0.1f64..5.0,
                )
                    .prop_map(move |(work, edges, procs, speeds, beta)| {
                        let mut b = WorkflowBuilder::new();
                        for (i, w) in work.iter().enumerate() {
                            b.add_task(i.to_string(), *w, 0.0);
                        }
                        let mut k = 0;
                        for i in 0..n {
                            for j in i + 1..n {
                                if let Some(v) = edges[k] {
                                    b.add_edge(i.to_string(), j.to_string(), v);
                                }
                                k += 1;
                            }
                        }
                        (b.build().unwrap(), procs, speeds, beta)
                    })
            })
        }

        fn system(speeds: &[f64], beta: f64) -> ComputingSystem {
            let procs = speeds
                .iter()
                .enumerate()
                .map(|(i, &s)| Processor {
                    id: format!("p{i}"),
                    memory: 1.0,
                    speed: s,
                    kind: None,
                })
                .collect();
            ComputingSystem::new(procs, beta).unwrap()
        }

        fn rel_close(a: f64, b: f64) -> bool {
            (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
        }

        proptest! {
            #[test]
            fn bottom_weights_match_path_enumeration((dag, procs, speeds, beta) in arb_quotient()) {
                let mut q = build_quotient(&dag, &Partition::from_labels(&(0..dag.len()).collect::<Vec<_>>()));
                for (v, p) in procs.iter().enumerate() {
                    q.set_processor(v, *p);
                }
                let s = system(&speeds, beta);
                let bw = bottom_weights(&q, &s).unwrap();
                prop_assert!(rel_close(bw.makespan, oracle_makespan(&q, &s).unwrap()));
            }

            #[test]
            fn scaling_speeds_and_bandwidth((dag, procs, speeds, beta) in arb_quotient(), lambda in 0.1f64..10.0) {
                let mut q = build_quotient(&dag, &Partition::from_labels(&(0..dag.len()).collect::<Vec<_>>()));
                // Every vertex assigned, so all speeds scale.
                for (v, p) in procs.iter().enumerate() {
                    q.set_processor(v, Some(p.unwrap_or(v)));
                }
                let s1 = system(&speeds, beta);
                let scaled: Vec<f64> = speeds.iter().map(|s| s * lambda).collect();
                let s2 = system(&scaled, beta * lambda);
                let a = bottom_weights(&q, &s1).unwrap();
                let b = bottom_weights(&q, &s2).unwrap();
                prop_assert!(rel_close(a.makespan / lambda, b.makespan));
            }

            #[test]
            fn removing_an_edge_never_increases((dag, procs, speeds, beta) in arb_quotient(), pick in 0usize..1000) {
                prop_assume!(!dag.edges().is_empty());
                let mut q = build_quotient(&dag, &Partition::from_labels(&(0..dag.len()).collect::<Vec<_>>()));
                for (v, p) in procs.iter().enumerate() {
                    q.set_processor(v, *p);
                }
                let s = system(&speeds, beta);
                let before = makespan(&q, &s).unwrap();
                let drop = pick % dag.edges().len();
                let mut b = WorkflowBuilder::new();
                for t in dag.tasks() {
                    b.add_task(t.id.clone(), t.work, t.memory);
                }
                for (i, e) in dag.edges().iter().enumerate() {
                    if i != drop {
                        b.add_edge(dag.id(e.tail), dag.id(e.head), e.volume);
                    }
                }
                let pruned = b.build().unwrap();
                let mut q2 = build_quotient(&pruned, &Partition::from_labels(&(0..pruned.len()).collect::<Vec<_>>()));
                for (v, p) in procs.iter().enumerate() {
                    q2.set_processor(v, *p);
                }
                prop_assert!(makespan(&q2, &s).unwrap() <= before + 1e-9);
            }

            #[test]
            fn unassigned_ignores_system((dag, _procs, speeds, beta) in arb_quotient()) {
                let q = build_quotient(&dag, &Partition::from_labels(&(0..dag.len()).collect::<Vec<_>>()));
                let a = makespan(&q, &system(&speeds, beta)).unwrap();
                let b = makespan(&q, &system(&[1.0], beta)).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
