//! Heterogeneous computing systems and the named cluster presets.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workflow::{natural_cmp, WorkflowDag};

pub type ProcIdx = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Processor {
    pub id: String,
    pub memory: f64,
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// Processors sharing one uniform bandwidth. Serializes to the cluster JSON
/// schema `{"bandwidth": .., "processors": [{"id", "memory", "speed", "kind"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystem")]
pub struct ComputingSystem {
    pub bandwidth: f64,
    pub processors: Vec<Processor>,
}

#[derive(Deserialize)]
struct RawSystem {
    bandwidth: f64,
    processors: Vec<Processor>,
}

impl TryFrom<RawSystem> for ComputingSystem {
    type Error = Error;

    fn try_from(raw: RawSystem) -> Result<Self> {
        ComputingSystem::new(raw.processors, raw.bandwidth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Default,
    Small,
    Large,
    MoreHet,
    LessHet,
    NoHet,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Default,
        Preset::Small,
        Preset::Large,
        Preset::MoreHet,
        Preset::LessHet,
        Preset::NoHet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Small => "small",
            Preset::Large => "large",
            Preset::MoreHet => "morehet",
            Preset::LessHet => "lesshet",
            Preset::NoHet => "nohet",
        }
    }

    /// (kind, speed, memory) of the six machine kinds, and copies of each.
    fn kinds(self) -> (&'static [(&'static str, f64, f64)], usize) {
        const DEFAULT: [(&str, f64, f64); 6] = [
            ("local", 4.0, 16.0),
            ("A1", 32.0, 32.0),
            ("A2", 6.0, 64.0),
            ("N1", 12.0, 16.0),
            ("N2", 8.0, 8.0),
            ("C2", 32.0, 192.0),
        ];
        const MORE: [(&str, f64, f64); 6] = [
            ("local*", 2.0, 8.0),
            ("A1*", 64.0, 64.0),
            ("A2*", 3.0, 128.0),
            ("N1*", 24.0, 8.0),
            ("N2*", 4.0, 4.0),
            ("C2*", 64.0, 384.0),
        ];
        const LESS: [(&str, f64, f64); 6] = [
            ("local'", 8.0, 64.0),
            ("A1'", 16.0, 64.0),
            ("A2'", 12.0, 128.0),
            ("N1'", 12.0, 64.0),
            ("N2'", 16.0, 32.0),
            ("C2'", 16.0, 192.0),
        ];
        const NONE: [(&str, f64, f64); 1] = [("C2", 32.0, 192.0)];
        match self {
            Preset::Default => (&DEFAULT, 6),
            Preset::Small => (&DEFAULT, 3),
            Preset::Large => (&DEFAULT, 10),
            Preset::MoreHet => (&MORE, 6),
            Preset::LessHet => (&LESS, 6),
            Preset::NoHet => (&NONE, 36),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

impl ComputingSystem {
    pub fn new(processors: Vec<Processor>, bandwidth: f64) -> Result<Self> {
        if processors.is_empty() {
            return Err(Error::InvalidCluster("no processors".into()));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidCluster(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        for p in &processors {
            if !(p.memory > 0.0)
                || !(p.speed > 0.0)
                || !p.memory.is_finite()
                || !p.speed.is_finite()
            {
                return Err(Error::InvalidCluster(format!(
                    "processor `{}` needs positive memory and speed (got {}, {})",
                    p.id, p.memory, p.speed
                )));
            }
        }
        let mut ids: Vec<&str> = processors.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidCluster(format!(
                "duplicate processor id `{}`",
                w[0]
            )));
        }
        Ok(ComputingSystem {
            bandwidth,
            processors,
        })
    }

    pub fn preset(preset: Preset, bandwidth: f64) -> Result<Self> {
        let (kinds, copies) = preset.kinds();
        let mut processors = Vec::with_capacity(kinds.len() * copies);
        for &(kind, speed, memory) in kinds {
            for i in 0..copies {
                processors.push(Processor {
                    id: format!("{kind}-{i}"),
                    memory,
                    speed,
                    kind: Some(kind.to_string()),
                });
            }
        }
        ComputingSystem::new(processors, bandwidth)
    }

    /// Preset lookup by name; unknown names are an error.
    pub fn preset_named(name: &str, bandwidth: f64) -> Result<Self> {
        Self::preset(name.parse()?, bandwidth)
    }

    pub fn len(&self) -> usize {
        self.processors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.processors.is_empty()
    }

    pub fn processor(&self, p: ProcIdx) -> &Processor {
        &self.processors[p]
    }

    pub fn max_memory(&self) -> f64 {
        self.processors.iter().map(|p| p.memory).fold(0.0, f64::max)
    }

    pub fn min_memory(&self) -> f64 {
        self.processors
            .iter()
            .map(|p| p.memory)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_speed(&self) -> f64 {
        self.processors.iter().map(|p| p.speed).fold(0.0, f64::max)
    }

    /// Processors by decreasing memory; equal memories by decreasing speed,
    /// then ascending id.
    pub fn sort_by_memory_desc(&self) -> Vec<ProcIdx> {
        let mut order: Vec<ProcIdx> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&self.processors[a], &self.processors[b]);
            pb.memory
                .partial_cmp(&pa.memory)
                .unwrap_or(Ordering::Equal)
                .then(pb.speed.partial_cmp(&pa.speed).unwrap_or(Ordering::Equal))
                .then_with(|| natural_cmp(&pa.id, &pb.id))
        });
        order
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        ComputingSystem::new(self.processors.clone(), bandwidth)
    }

    /// Scales every memory by the same factor so that the task with the
    /// largest requirement fits the largest processor. Systems that already
    /// hold every task are returned unchanged.
    pub fn scaled_to_fit(&self, dag: &WorkflowDag) -> Self {
        let need = (0..dag.len())
            .map(|u| dag.requirement(u))
            .fold(0.0, f64::max);
        let have = self.max_memory();
        if need <= have {
            return self.clone();
        }
        let factor = need / have;
        let mut scaled = self.clone();
        for p in &mut scaled.processors {
            p.memory *= factor;
        }
        // Rounding in the product may land a hair below `need`.
        let top = scaled.sort_by_memory_desc()[0];
        scaled.processors[top].memory = scaled.processors[top].memory.max(need);
        scaled
    }
}
