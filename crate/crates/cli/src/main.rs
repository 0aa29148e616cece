use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use daghet::baseline::daghetmem;
use daghet::bench::{run_bench, write_csv, write_ratio_csv, BenchConfig};
use daghet::generate::{generate_workflow, Family};
use daghet::hetpart::{daghetpart, HetPartConfig};
use daghet::io::{parse_workflow, read_cluster, read_json, to_json, write_dot};
use daghet::mapping::{verify_mapping, MappingResult};
use daghet::{ComputingSystem, Error, Preset, WorkflowDag};

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "daghet",
    version,
    about = "Memory-aware partitioning and mapping of workflow DAGs onto heterogeneous processors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map a workflow onto a cluster and write the result as JSON.
    Map(MapArgs),
    /// Run both algorithms over generated workflows and report makespan ratios.
    Bench(BenchArgs),
    /// Write a synthetic workflow in DOT format.
    Generate(GenerateArgs),
    /// Recheck a mapping result against its workflow and cluster.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Hetmem,
    Hetpart,
}

#[derive(Args)]
struct SystemArgs {
    /// Cluster JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    cluster: Option<PathBuf>,
    /// Named cluster: default, small, large, morehet, lesshet or nohet.
    #[arg(long)]
    preset: Option<String>,
    /// Bandwidth; overrides the cluster file's value. Presets default to 1.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Scale all memories so that the most demanding task fits.
    #[arg(long)]
    fit_memory: bool,
}

impl SystemArgs {
    fn load(&self, dag: &WorkflowDag) -> Result<ComputingSystem, Error> {
        let system = match (&self.cluster, &self.preset) {
            (Some(path), _) => {
                let system = read_cluster(path)?;
                match self.bandwidth {
                    Some(b) => system.with_bandwidth(b)?,
                    None => system,
                }
            }
            (None, Some(name)) => {
                ComputingSystem::preset_named(name, self.bandwidth.unwrap_or(1.0))?
            }
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "--cluster or --preset is required".into(),
                ))
            }
        };
        Ok(if self.fit_memory {
            system.scaled_to_fit(dag)
        } else {
            system
        })
    }
}

#[derive(Args)]
struct MapArgs {
    /// Workflow in DOT format.
    #[arg(long)]
    workflow: PathBuf,
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, value_enum, default_value = "hetpart")]
    algorithm: Algorithm,
    /// Seed for the partitioner's refinement order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Balance tolerance of the partitioner.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Try only every n-th block count, plus 1 and the processor count.
    #[arg(long)]
    stride: Option<usize>,
    /// Result file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "fork-join,chain-of-stages,fanout,diamond-mesh"
    )]
    families: Vec<Family>,
    #[arg(long, value_delimiter = ',', default_value = "200,1000")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "default")]
    preset: Vec<Preset>,
    /// Bandwidths to run; each adds a ratio column to the ratio CSV.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    bandwidth_sweep: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long)]
    stride: Option<usize>,
    /// Report JSON. The long CSV and the ratio CSV are written next to it
    /// with extensions `.csv` and `.ratios.csv`.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// DOT file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    workflow: PathBuf,
    #[command(flatten)]
    system: SystemArgs,
    /// Result JSON written by `map`.
    #[arg(long)]
    mapping: PathBuf,
}

enum Failure {
    Infeasible(String),
    Input(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Error> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn map(args: MapArgs) -> Result<(), Failure> {
    let dag = parse_workflow(&args.workflow)?;
    let system = args.system.load(&dag)?;
    if !(args.epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {} is negative", args.epsilon)).into());
    }
    let start = Instant::now();
    let outcome = match args.algorithm {
        Algorithm::Hetmem => daghetmem(&dag, &system),
        Algorithm::Hetpart => {
            let config = HetPartConfig {
                epsilon: args.epsilon,
                seed: args.seed,
                stride: args.stride,
                ..HetPartConfig::default()
            };
            daghetpart(&dag, &system, &config)
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    let result = outcome.map_err(|e| Failure::Infeasible(e.to_string()))?;

    let mut json = serde_json::to_value(&result).map_err(Error::from)?;
    json["runtime"] = runtime.into();
    emit(args.output.as_deref(), &to_json(&json)?)?;
    eprintln!(
        "{}: makespan {} on {} blocks in {runtime:.3}s",
        result.algorithm,
        result.makespan,
        result.blocks.len()
    );
    Ok(())
}

fn sibling(path: &Path, extension: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{extension}"))
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    if args.families.is_empty() || args.sizes.is_empty() || args.seeds.is_empty() {
        return Err(Error::InvalidArgument("nothing to run".into()).into());
    }
    if let Some(b) = args
        .bandwidth_sweep
        .iter()
        .find(|b| !(**b > 0.0) || !b.is_finite())
    {
        return Err(Error::InvalidArgument(format!("bandwidth {b} is not positive")).into());
    }
    let config = BenchConfig {
        families: args.families,
        sizes: args.sizes,
        seeds: args.seeds,
        presets: args.preset,
        bandwidths: args.bandwidth_sweep,
        hetpart: HetPartConfig {
            epsilon: args.epsilon,
            stride: args.stride,
            ..HetPartConfig::default()
        },
    };
    let report = run_bench(&config);
    fs::write(&args.report, to_json(&report)?).map_err(Error::from)?;
    write_csv(
        &report,
        fs::File::create(sibling(&args.report, "csv")).map_err(Error::from)?,
    )?;
    write_ratio_csv(
        &report,
        fs::File::create(sibling(&args.report, "ratios.csv")).map_err(Error::from)?,
    )?;
    match report.geomean {
        Some(g) => eprintln!(
            "geometric mean hetpart/hetmem over {} instances: {g:.4} (reference {})",
            report.compared, report.reference_ratio
        ),
        None => eprintln!("no instance where both algorithms are feasible"),
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let dag = generate_workflow(args.family, args.size, args.seed)?;
    emit(args.output.as_deref(), &write_dot(&dag))?;
    Ok(())
}

fn check(args: CheckArgs) -> Result<(), Failure> {
    let dag = parse_workflow(&args.workflow)?;
    let system = args.system.load(&dag)?;
    let result: MappingResult = read_json(&args.mapping)?;
    let report = verify_mapping(&dag, &system, &result);
    if report.is_valid() {
        println!("ok: makespan {}", result.makespan);
        return Ok(());
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    Err(Failure::Infeasible(format!(
        "{} violations",
        report.violations.len()
    )))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Map(a) => map(a),
        Command::Bench(a) => bench(a),
        Command::Generate(a) => generate(a),
        Command::Check(a) => check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(message)) => {
            eprintln!("infeasible: {message}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
