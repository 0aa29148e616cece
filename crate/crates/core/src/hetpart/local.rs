//! Step 4: local search by block swaps, then moves of critical-path blocks
//! to faster idle processors.

use std::collections::{BTreeSet, HashMap};

use crate::cluster::{ComputingSystem, ProcIdx};
use crate::mapping::{fits, TraceEvent};
use crate::quotient::{QuotientGraph, VertexId};

/// Flat copy of a fixed quotient structure for fast makespan evaluation
/// under changing processor assignments.
struct Evaluator {
    ids: Vec<VertexId>,
    /// Reverse topological order, as local indices.
    reverse_order: Vec<usize>,
    work: Vec<f64>,
    /// (child, volume / bandwidth)
    succ: Vec<Vec<(usize, f64)>>,
    requirement: Vec<f64>,
    bottom: Vec<f64>,
}

impl Evaluator {
    fn new(q: &QuotientGraph, system: &ComputingSystem) -> Self {
        let ids: Vec<VertexId> = q.vertex_ids().collect();
        let local: HashMap<VertexId, usize> =
            ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let order = q.topological_order().expect("quotient is acyclic");
        Evaluator {
            reverse_order: order.iter().rev().map(|v| local[v]).collect(),
            work: ids.iter().map(|&v| q.vertex(v).weight()).collect(),
            succ: ids
                .iter()
                .map(|&v| {
                    q.children(v)
                        .map(|(w, c)| (local[&w], c / system.bandwidth))
                        .collect()
                })
                .collect(),
            requirement: ids.iter().map(|&v| q.requirement(v).peak).collect(),
            bottom: vec![0.0; ids.len()],
            ids,
        }
    }

    fn makespan(&mut self, speed: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for &i in &self.reverse_order {
            let tail = self.succ[i]
                .iter()
                .map(|&(j, c)| c + self.bottom[j])
                .fold(0.0, f64::max);
            self.bottom[i] = self.work[i] / speed[i] + tail;
            best = best.max(self.bottom[i]);
        }
        best
    }

    /// Critical path from the last evaluation, as local indices.
    fn critical_path(&self) -> Vec<usize> {
        let Some(mut at) = (0..self.ids.len()).fold(None, |best: Option<usize>, i| match best {
            Some(b) if self.bottom[b] >= self.bottom[i] => Some(b),
            _ => Some(i),
        }) else {
            return Vec::new();
        };
        let mut path = vec![at];
        loop {
            let mut next: Option<(usize, f64)> = None;
            for &(j, c) in &self.succ[at] {
                let term = c + self.bottom[j];
                let better = match next {
                    None => true,
                    Some((k, t)) => term > t || (term == t && self.ids[j] < self.ids[k]),
                };
                if better {
                    next = Some((j, term));
                }
            }
            match next {
                Some((j, _)) => {
                    path.push(j);
                    at = j;
                }
                None => return path,
            }
        }
    }
}

fn assignment(q: &QuotientGraph, ids: &[VertexId]) -> Vec<ProcIdx> {
    ids.iter()
        .map(|&v| q.processor(v).expect("every vertex is assigned"))
        .collect()
}

fn speeds(system: &ComputingSystem, procs: &[ProcIdx]) -> Vec<f64> {
    procs.iter().map(|&p| system.processor(p).speed).collect()
}

/// Repeatedly executes the single best strictly improving swap of two
/// blocks' processors, among swaps where each block fits the other's memory.
/// Appends one trace event per executed swap.
pub fn swap_until_best(
    q: &mut QuotientGraph,
    system: &ComputingSystem,
    trace: &mut Vec<TraceEvent>,
) {
    let mut eval = Evaluator::new(q, system);
    let mut procs = assignment(q, &eval.ids);
    let mut speed = speeds(system, &procs);
    let mut current = eval.makespan(&speed);
    let n = procs.len();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            for b in a + 1..n {
                let (pa, pb) = (procs[a], procs[b]);
                if !fits(eval.requirement[a], system.processor(pb).memory)
                    || !fits(eval.requirement[b], system.processor(pa).memory)
                {
                    continue;
                }
                speed.swap(a, b);
                let mu = eval.makespan(&speed);
                speed.swap(a, b);
                if mu < current && best.map_or(true, |(_, _, m)| mu < m) {
                    best = Some((a, b, mu));
                }
            }
        }
        let Some((a, b, mu)) = best else { break };
        procs.swap(a, b);
        speed.swap(a, b);
        current = mu;
        trace.push(TraceEvent {
            step: 4,
            action: "swap".into(),
            makespan: mu,
        });
    }
    for (i, &v) in eval.ids.iter().enumerate() {
        q.set_processor(v, Some(procs[i]));
    }
}

/// Walks the critical path and moves each block on it, once, to the fastest
/// strictly faster idle processor that holds it. The critical path is
/// recomputed after every move. Appends one trace event per move.
pub fn move_to_idle(q: &mut QuotientGraph, system: &ComputingSystem, trace: &mut Vec<TraceEvent>) {
    let mut eval = Evaluator::new(q, system);
    let mut procs = assignment(q, &eval.ids);
    let mut idle: BTreeSet<ProcIdx> = (0..system.len()).collect();
    for p in &procs {
        idle.remove(p);
    }
    if idle.is_empty() {
        return;
    }
    let mut speed = speeds(system, &procs);
    let mut current = eval.makespan(&speed);
    let mut considered = vec![false; procs.len()];
    loop {
        let path = eval.critical_path();
        let Some(i) = path.into_iter().find(|&i| !considered[i]) else {
            break;
        };
        considered[i] = true;
        let target = idle
            .iter()
            .copied()
            .filter(|&p| {
                let cand = system.processor(p);
                cand.speed > speed[i] && fits(eval.requirement[i], cand.memory)
            })
            .min_by(|&x, &y| {
                let (px, py) = (system.processor(x), system.processor(y));
                py.speed
                    .total_cmp(&px.speed)
                    .then(px.memory.total_cmp(&py.memory))
                    .then(x.cmp(&y))
            });
        if let Some(p) = target {
            let old = procs[i];
            let old_speed = speed[i];
            speed[i] = system.processor(p).speed;
            let mu = eval.makespan(&speed);
            if mu <= current {
                idle.remove(&p);
                idle.insert(old);
                procs[i] = p;
                current = mu;
                trace.push(TraceEvent {
                    step: 4,
                    action: "move".into(),
                    makespan: mu,
                });
            } else {
                speed[i] = old_speed;
            }
        }
        // Refresh bottom weights for the next critical path.
        eval.makespan(&speed);
    }
    for (i, &v) in eval.ids.iter().enumerate() {
        q.set_processor(v, Some(procs[i]));
    }
}
