//! Benchmark harness: both algorithms over generated instances, with
//! geometric-mean makespan ratios per bandwidth.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{self, daghetmem};
use crate::cluster::{ComputingSystem, Preset};
use crate::error::Result;
use crate::generate::{generate_workflow, Family};
use crate::hetpart::{self, daghetpart, HetPartConfig};
use crate::mapping::{Outcome, FORMAT};

/// Average makespan ratio hetpart / hetmem reported for the original study.
pub const REFERENCE_RATIO: f64 = 0.41;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub families: Vec<Family>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub presets: Vec<Preset>,
    pub bandwidths: Vec<f64>,
    pub hetpart: HetPartConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            families: Family::ALL.to_vec(),
            sizes: vec![200, 1000],
            seeds: vec![0, 1, 2],
            presets: vec![Preset::Default],
            bandwidths: vec![1.0],
            hetpart: HetPartConfig::default(),
        }
    }
}

/// One generated workflow on one system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub family: Family,
    pub size: usize,
    pub seed: u64,
    #[serde(with = "preset_name")]
    pub preset: Preset,
    pub bandwidth: f64,
}

mod preset_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::cluster::Preset;

    pub fn serialize<S: Serializer>(p: &Preset, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(p.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Preset, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

impl Instance {
    fn key(&self) -> (Family, usize, u64, &'static str, u64) {
        (
            self.family,
            self.size,
            self.seed,
            self.preset.name(),
            self.bandwidth.to_bits(),
        )
    }

    /// Workflow and memory-scaled system for this instance.
    pub fn build(&self) -> Result<(crate::WorkflowDag, ComputingSystem)> {
        let dag = generate_workflow(self.family, self.size, self.seed)?;
        let system = ComputingSystem::preset(self.preset, self.bandwidth)?.scaled_to_fit(&dag);
        Ok((dag, system))
    }
}

/// The instances of a configuration, sorted by key.
pub fn instances(config: &BenchConfig) -> Vec<Instance> {
    let mut out = Vec::new();
    for &family in &config.families {
        for &size in &config.sizes {
            for &seed in &config.seeds {
                for &preset in &config.presets {
                    for &bandwidth in &config.bandwidths {
                        out.push(Instance {
                            family,
                            size,
                            seed,
                            preset,
                            bandwidth,
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.key()
            .cmp(&b.key())
            .then(a.bandwidth.total_cmp(&b.bandwidth))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(flatten)]
    pub instance: Instance,
    pub algorithm: String,
    pub feasible: bool,
    pub parts: Option<usize>,
    pub makespan: Option<f64>,
    pub runtime: f64,
    /// Factor applied to every preset memory so that the largest task fits.
    pub memory_scale: f64,
    pub error: Option<String>,
}

/// Both algorithms' outcomes on one instance.
#[derive(Debug, Clone)]
pub struct InstanceRun {
    pub instance: Instance,
    pub memory_scale: f64,
    pub hetmem: Outcome,
    pub hetmem_runtime: f64,
    pub hetpart: Outcome,
    pub hetpart_runtime: f64,
}

fn guarded(algorithm: &str, f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let message = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Err(crate::mapping::Infeasible {
            algorithm: algorithm.into(),
            reason: format!("internal error: {message}"),
            task: None,
        })
    });
    (outcome, start.elapsed().as_secs_f64())
}

pub fn run_instance(instance: Instance, config: &HetPartConfig) -> Result<InstanceRun> {
    let (dag, system) = instance.build()?;
    let memory_scale = system.max_memory()
        / ComputingSystem::preset(instance.preset, instance.bandwidth)?.max_memory();
    let (hetmem, hetmem_runtime) = guarded(baseline::NAME, || daghetmem(&dag, &system));
    let (hetpart, hetpart_runtime) = guarded(hetpart::NAME, || daghetpart(&dag, &system, config));
    Ok(InstanceRun {
        instance,
        memory_scale,
        hetmem,
        hetmem_runtime,
        hetpart,
        hetpart_runtime,
    })
}

/// Runs every instance, in parallel, in key order.
pub fn run_all(config: &BenchConfig) -> Vec<std::result::Result<InstanceRun, (Instance, String)>> {
    instances(config)
        .into_par_iter()
        .map(|i| run_instance(i, &config.hetpart).map_err(|e| (i, e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub bandwidth: f64,
    /// Instances where both algorithms are feasible.
    pub count: usize,
    pub geomean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format: u32,
    pub rows: Vec<BenchRow>,
    /// Over all bandwidths.
    pub geomean: Option<f64>,
    pub compared: usize,
    pub by_bandwidth: Vec<RatioSummary>,
    pub reference_ratio: f64,
}

/// Geometric mean of positive values; `None` when empty.
pub fn geomean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// hetpart / hetmem makespan when both are feasible with a positive makespan.
pub fn ratio(run: &InstanceRun) -> Option<f64> {
    match (&run.hetpart, &run.hetmem) {
        (Ok(p), Ok(m)) if m.makespan > 0.0 => Some(p.makespan / m.makespan),
        _ => None,
    }
}

fn row(
    instance: Instance,
    algorithm: &str,
    outcome: Option<&Outcome>,
    runtime: f64,
    scale: f64,
    failure: Option<&str>,
) -> BenchRow {
    let (feasible, parts, makespan, error) = match (outcome, failure) {
        (Some(Ok(r)), _) => (true, Some(r.parts), Some(r.makespan), None),
        (Some(Err(e)), _) => (false, None, None, Some(e.to_string())),
        (None, f) => (false, None, None, f.map(str::to_string)),
    };
    BenchRow {
        instance,
        algorithm: algorithm.into(),
        feasible,
        parts,
        makespan,
        runtime,
        memory_scale: scale,
        error,
    }
}

pub fn report(runs: &[std::result::Result<InstanceRun, (Instance, String)>]) -> BenchReport {
    let mut rows = Vec::new();
    let mut all = Vec::new();
    let mut per_bw: Vec<(f64, Vec<f64>)> = Vec::new();
    for run in runs {
        match run {
            Ok(run) => {
                rows.push(row(
                    run.instance,
                    baseline::NAME,
                    Some(&run.hetmem),
                    run.hetmem_runtime,
                    run.memory_scale,
                    None,
                ));
                rows.push(row(
                    run.instance,
                    hetpart::NAME,
                    Some(&run.hetpart),
                    run.hetpart_runtime,
                    run.memory_scale,
                    None,
                ));
                let bw = run.instance.bandwidth;
                let slot = match per_bw.iter().position(|(b, _)| *b == bw) {
                    Some(i) => i,
                    None => {
                        per_bw.push((bw, Vec::new()));
                        per_bw.len() - 1
                    }
                };
                if let Some(r) = ratio(run) {
                    all.push(r);
                    per_bw[slot].1.push(r);
                }
            }
            Err((instance, message)) => {
                for name in [baseline::NAME, hetpart::NAME] {
                    rows.push(row(*instance, name, None, 0.0, 1.0, Some(message)));
                }
            }
        }
    }
    per_bw.sort_by(|a, b| a.0.total_cmp(&b.0));
    BenchReport {
        format: FORMAT,
        rows,
        geomean: geomean(&all),
        compared: all.len(),
        by_bandwidth: per_bw
            .into_iter()
            .map(|(bandwidth, r)| RatioSummary {
                bandwidth,
                count: r.len(),
                geomean: geomean(&r),
            })
            .collect(),
        reference_ratio: REFERENCE_RATIO,
    }
}

pub fn run_bench(config: &BenchConfig) -> BenchReport {
    report(&run_all(config))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    family: &'a str,
    size: usize,
    seed: u64,
    preset: &'a str,
    bandwidth: f64,
    algorithm: &'a str,
    feasible: bool,
    parts: Option<usize>,
    makespan: Option<f64>,
    runtime: f64,
    memory_scale: f64,
}

/// One line per row, in long format.
pub fn write_csv<W: Write>(report: &BenchReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &report.rows {
        w.serialize(CsvRow {
            family: r.instance.family.name(),
            size: r.instance.size,
            seed: r.instance.seed,
            preset: r.instance.preset.name(),
            bandwidth: r.instance.bandwidth,
            algorithm: &r.algorithm,
            feasible: r.feasible,
            parts: r.parts,
            makespan: r.makespan,
            runtime: r.runtime,
            memory_scale: r.memory_scale,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per workflow and preset, with one ratio column per bandwidth.
pub fn write_ratio_csv<W: Write>(report: &BenchReport, out: W) -> Result<()> {
    let mut bandwidths: Vec<f64> = report.rows.iter().map(|r| r.instance.bandwidth).collect();
    bandwidths.sort_by(f64::total_cmp);
    bandwidths.dedup();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "family".to_string(),
        "size".into(),
        "seed".into(),
        "preset".into(),
    ];
    header.extend(bandwidths.iter().map(|b| format!("ratio_bw_{b}")));
    w.write_record(&header).map_err(csv_error)?;

    let mut keys: Vec<(Family, usize, u64, &'static str)> = report
        .rows
        .iter()
        .map(|r| {
            (
                r.instance.family,
                r.instance.size,
                r.instance.seed,
                r.instance.preset.name(),
            )
        })
        .collect();
    keys.dedup();
    for key in keys {
        let mut record = vec![
            key.0.name().to_string(),
            key.1.to_string(),
            key.2.to_string(),
            key.3.to_string(),
        ];
        for &bw in &bandwidths {
            let find = |alg: &str| {
                report.rows.iter().find(|r| {
                    let i = &r.instance;
                    (i.family, i.size, i.seed, i.preset.name()) == key
                        && i.bandwidth == bw
                        && r.algorithm == alg
                })
            };
            let cell = match (
                find(hetpart::NAME).and_then(|r| r.makespan),
                find(baseline::NAME).and_then(|r| r.makespan),
            ) {
                (Some(p), Some(m)) if m > 0.0 => (p / m).to_string(),
                _ => String::new(),
            };
            record.push(cell);
        }
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> BenchConfig {
        BenchConfig {
            families: vec![Family::Fanout, Family::ChainOfStages],
            sizes: vec![30],
            seeds: vec![0, 1],
            presets: vec![Preset::Small],
            bandwidths: vec![0.1, 1.0, 5.0],
            hetpart: HetPartConfig::default(),
        }
    }

    #[test]
    fn row_count_and_order() {
        let config = small_config();
        let report = run_bench(&config);
        assert_eq!(report.format, 1);
        assert_eq!(report.rows.len(), 2 * 2 * 3 * 2);
        let keys: Vec<_> = report.rows.iter().map(|r| r.instance.key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(report.by_bandwidth.len(), 3);
    }

    #[test]
    fn geomean_recomputed_from_rows() {
        let report = run_bench(&small_config());
        let mut ratios = Vec::new();
        for pair in report.rows.chunks(2) {
            let (m, p) = (&pair[0], &pair[1]);
            assert_eq!(
                (m.algorithm.as_str(), p.algorithm.as_str()),
                ("hetmem", "hetpart")
            );
            if let (Some(a), Some(b)) = (p.makespan, m.makespan) {
                ratios.push(a / b);
            }
        }
        assert_eq!(ratios.len(), report.compared);
        let expected = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
        let got = report.geomean.unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn infeasible_rows_excluded() {
        let ok = |m: f64| {
            Ok(crate::mapping::MappingResult {
                format: 1,
                algorithm: "x".into(),
                parts: 1,
                makespan: m,
                critical_path: vec![],
                assignment: Default::default(),
                blocks: vec![],
                trace: vec![],
            })
        };
        let bad = || {
            Err(crate::mapping::Infeasible {
                algorithm: "x".into(),
                reason: "no".into(),
                task: None,
            })
        };
        let instance = Instance {
            family: Family::Fanout,
            size: 1,
            seed: 0,
            preset: Preset::Small,
            bandwidth: 1.0,
        };
        let runs = vec![
            Ok(InstanceRun {
                instance,
                memory_scale: 1.0,
                hetmem: ok(4.0),
                hetmem_runtime: 0.0,
                hetpart: ok(1.0),
                hetpart_runtime: 0.0,
            }),
            Ok(InstanceRun {
                instance: Instance {
                    seed: 1,
                    ..instance
                },
                memory_scale: 1.0,
                hetmem: bad(),
                hetmem_runtime: 0.0,
                hetpart: bad(),
                hetpart_runtime: 0.0,
            }),
        ];
        let report = report(&runs);
        assert_eq!(report.compared, 1);
        assert_eq!(report.geomean, Some(0.25));
        assert_eq!(report.rows.iter().filter(|r| !r.feasible).count(), 2);
    }

    #[test]
    fn csv_shapes() {
        let report = run_bench(&BenchConfig {
            seeds: vec![0],
            families: vec![Family::Fanout],
            ..small_config()
        });
        let mut long = Vec::new();
        write_csv(&report, &mut long).unwrap();
        let long = String::from_utf8(long).unwrap();
        assert_eq!(long.lines().count(), 1 + report.rows.len());
        let mut wide = Vec::new();
        write_ratio_csv(&report, &mut wide).unwrap();
        let wide = String::from_utf8(wide).unwrap();
        let lines: Vec<&str> = wide.lines().collect();
        assert_eq!(
            lines[0],
            "family,size,seed,preset,ratio_bw_0.1,ratio_bw_1,ratio_bw_5"
        );
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn geomean_basics() {
        assert_eq!(geomean(&[]), None);
        assert!((geomean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
    }
}
