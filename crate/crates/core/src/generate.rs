//! Synthetic workflows in four structural families.
//!
//! Work is drawn from U[1, 1000], task memory from U[1, 192] and edge volumes
//! from U[1, 10]. Task `i` is named `t{i}` and every edge points from a
//! smaller to a larger index.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workflow::{WorkflowBuilder, WorkflowDag};

pub const WORK_RANGE: (f64, f64) = (1.0, 1000.0);
pub const MEMORY_RANGE: (f64, f64) = (1.0, 192.0);
pub const VOLUME_RANGE: (f64, f64) = (1.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Alternating hub tasks and parallel layers.
    ForkJoin,
    /// Parallel pipelines with occasional links to a neighboring pipeline.
    ChainOfStages,
    /// A scatter tree whose leaves are gathered by many small reducers.
    Fanout,
    /// A wavefront grid: each task depends on its left and upper neighbor.
    DiamondMesh,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::ForkJoin,
        Family::ChainOfStages,
        Family::Fanout,
        Family::DiamondMesh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::ForkJoin => "fork-join",
            Family::ChainOfStages => "chain-of-stages",
            Family::Fanout => "fanout",
            Family::DiamondMesh => "diamond-mesh",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// Edge lists by head, before weights are drawn.
fn structure(family: Family, n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    match family {
        Family::ForkJoin => {
            let width = ((n as f64).sqrt() as usize).clamp(2, 12);
            let mut hub = 0;
            let mut next = 1;
            while next < n {
                let layer: Vec<usize> = (next..(next + width).min(n)).collect();
                for &t in &layer {
                    edges.push((hub, t));
                }
                next += layer.len();
                if next < n {
                    for &t in &layer {
                        edges.push((t, next));
                    }
                    hub = next;
                    next += 1;
                }
            }
        }
        Family::ChainOfStages => {
            let lanes = (n / 25).clamp(1, 16);
            for t in lanes..n {
                let lane = t % lanes;
                edges.push((t - lanes, t));
                if lanes > 1 && rng.gen_bool(0.2) {
                    let other = if lane + 1 < lanes {
                        t - lanes + 1
                    } else {
                        t - lanes - 1
                    };
                    edges.push((other, t));
                }
            }
        }
        Family::Fanout => {
            let reducers = if n >= 10 { n / 10 } else { 0 };
            let scatter = n - reducers;
            // Breadth-first out-tree over tasks 0..scatter.
            let mut children_of = vec![0usize; scatter];
            let mut parent = 0;
            let mut budget = rng.gen_range(2..=8);
            for t in 1..scatter {
                if children_of[parent] == budget {
                    parent += 1;
                    budget = rng.gen_range(2..=8);
                }
                edges.push((parent, t));
                children_of[parent] += 1;
            }
            let leaves: Vec<usize> = (0..scatter).filter(|&t| children_of[t] == 0).collect();
            for r in 0..reducers {
                let lo = r * leaves.len() / reducers;
                let hi = (r + 1) * leaves.len() / reducers;
                for &leaf in &leaves[lo..hi] {
                    edges.push((leaf, scatter + r));
                }
            }
        }
        Family::DiamondMesh => {
            let width = ((n as f64).sqrt().ceil() as usize).max(1);
            for t in 0..n {
                if t % width > 0 {
                    edges.push((t - 1, t));
                }
                if t >= width {
                    edges.push((t - width, t));
                }
            }
        }
    }
    edges
}

/// Generates a workflow of exactly `n` tasks; the same family, size and seed
/// always give the same workflow.
pub fn generate_workflow(family: Family, n: usize, seed: u64) -> Result<WorkflowDag> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "a workflow needs at least one task".into(),
        ));
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (family as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let edges = structure(family, n, &mut rng);
    let mut b = WorkflowBuilder::new();
    for t in 0..n {
        let work = rng.gen_range(WORK_RANGE.0..=WORK_RANGE.1);
        let memory = rng.gen_range(MEMORY_RANGE.0..=MEMORY_RANGE.1);
        b.add_task(format!("t{t}"), work, memory);
    }
    for (tail, head) in edges {
        b.add_edge(
            format!("t{tail}"),
            format!("t{head}"),
            rng.gen_range(VOLUME_RANGE.0..=VOLUME_RANGE.1),
        );
    }
    b.build()
}
