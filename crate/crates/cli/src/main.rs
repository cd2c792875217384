//! `srm`: build indexes and run monitoring experiments from the shell.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use srm_core::harness::{load_queries, Distribution2d, ObjectSource, SweepParam};
use srm_core::{run_experiment, EngineSel, Generator, IrfIndex, MetricsRecord, ObjectSet, PartitionConfig, WorkloadConfig};

#[derive(Parser, Debug)]
#[command(name = "srm", version, about = "Top-m spatial popularity monitoring experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an Inverted Rank File index and save it.
    BuildIndex(BuildArgs),
    /// Run engines over a query stream, writing one JSON line per engine per shift.
    Run(RunArgs),
    /// Run both engines and print the comparison report.
    Compare(RunArgs),
    /// Run one configuration per value of a parameter.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct SourceArgs {
    /// Object CSV with header `id,x,y`.
    #[arg(long)]
    objects: Option<PathBuf>,
    /// Generate this many synthetic objects instead of reading a file.
    #[arg(long, conflicts_with = "objects")]
    synthetic: Option<usize>,
    /// Layout of synthetic objects.
    #[arg(long, default_value = "uniform", value_parser = parse_from_str::<Distribution2d>)]
    distribution: Distribution2d,
    /// Seed for synthetic objects.
    #[arg(long, default_value_t = 7)]
    object_seed: u64,
}

impl SourceArgs {
    fn source(&self) -> Option<ObjectSource> {
        match (&self.objects, self.synthetic) {
            (Some(p), _) => Some(ObjectSource::File(p.clone())),
            (None, Some(n)) => Some(ObjectSource::Synthetic { n, distribution: self.distribution, seed: self.object_seed }),
            (None, None) => None,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct IndexArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    max_depth: Option<u32>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    index: IndexArgs,
    /// Where to write the index.
    #[arg(long)]
    index_out: PathBuf,
    /// Materialize every rank list before saving.
    #[arg(long)]
    full: bool,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    index: IndexArgs,
    /// Saved index; replaces --objects and --synthetic.
    #[arg(long = "index", conflicts_with_all = ["objects", "synthetic"])]
    index_path: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 4.0)]
    radius_pct: f64,
    #[arg(long, default_value_t = 10_000)]
    shifts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "uniform", value_parser = parse_from_str::<Generator>)]
    generator: Generator,
    /// Anchor points, or users for the centroid generator.
    #[arg(long, default_value_t = 987)]
    sites: usize,
    #[arg(long, default_value_t = 1.0)]
    zipf_s: f64,
    #[arg(long, default_value_t = 3)]
    repetitions: u32,
    #[arg(long, default_value = "both", value_parser = parse_from_str::<EngineSel>)]
    engine: EngineSel,
    /// Query CSV `x,y,radius,seq` used instead of a generator.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// window, m, radius_pct, epsilon or block_size.
    #[arg(long, value_parser = parse_from_str::<SweepParam>)]
    param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

fn parse_from_str<T: std::str::FromStr<Err = srm_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: srm_core::Error| e.to_string())
}

/// A mistake in how the command was invoked.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn partition_config(args: &IndexArgs) -> PartitionConfig {
    let d = PartitionConfig::default();
    PartitionConfig {
        epsilon: args.epsilon.unwrap_or(d.epsilon),
        block_size: args.block_size.unwrap_or(d.block_size),
        max_depth: args.max_depth.unwrap_or(d.max_depth),
        dataspace: None,
    }
}

fn load_source(source: &SourceArgs) -> anyhow::Result<Arc<ObjectSet>> {
    let src = source.source().ok_or_else(|| usage("one of --objects, --synthetic or --index is required"))?;
    let objects = src.load().with_context(|| format!("loading objects from {src:?}"))?;
    Ok(Arc::new(objects))
}

fn out_writer(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn build_index(args: BuildArgs) -> anyhow::Result<()> {
    let objects = load_source(&args.source)?;
    let config = partition_config(&args.index);
    let index = IrfIndex::build(objects, config).context("building index")?;
    if args.full {
        index.materialize_all();
    }
    index.save(&args.index_out).with_context(|| format!("writing {}", args.index_out.display()))?;
    let tree = index.tree();
    writeln!(
        io::stdout(),
        "{}",
        json!({
            "n": index.n(),
            "epsilon": index.epsilon(),
            "block_size": index.block_size(),
            "nodes": tree.node_count(),
            "leaves": tree.leaf_count(),
            "capped_leaves": tree.capped_leaf_count(),
            "index": args.index_out,
        })
    )?;
    Ok(())
}

fn workload(args: &RunArgs, partition: &PartitionConfig) -> WorkloadConfig {
    WorkloadConfig {
        window: args.window,
        m: args.m,
        radius_pct: args.radius_pct,
        epsilon: partition.epsilon,
        block_size: partition.block_size,
        max_depth: partition.max_depth,
        shifts: args.shifts,
        seed: args.seed,
        generator: args.generator,
        sites: args.sites,
        zipf_s: args.zipf_s,
        repetitions: args.repetitions,
        engine: args.engine,
    }
}

/// Index and workload for a run. A saved index fixes ε, B and depth.
fn prepare(args: &RunArgs) -> anyhow::Result<(WorkloadConfig, Arc<IrfIndex>)> {
    match &args.index_path {
        Some(path) => {
            let index = IrfIndex::load(path).with_context(|| format!("loading index {}", path.display()))?;
            let cfg = *index.config();
            if args.index.epsilon.is_some_and(|e| e != cfg.epsilon)
                || args.index.block_size.is_some_and(|b| b != cfg.block_size)
            {
                bail!("--epsilon/--block-size disagree with the saved index ({}, {})", cfg.epsilon, cfg.block_size);
            }
            Ok((workload(args, &cfg), Arc::new(index)))
        }
        None => {
            let objects = load_source(&args.source)?;
            let cfg = partition_config(&args.index);
            let config = workload(args, &cfg);
            config.validate().map_err(|e| usage(e.to_string()))?;
            let index = IrfIndex::build(objects, cfg).context("building index")?;
            Ok((config, Arc::new(index)))
        }
    }
}

fn run(args: RunArgs, compare: bool) -> anyhow::Result<()> {
    let (mut config, index) = prepare(&args)?;
    if compare {
        config.engine = EngineSel::Both;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let queries = match &args.queries {
        Some(p) => Some(load_queries(p).with_context(|| format!("loading queries {}", p.display()))?),
        None => None,
    };
    // `compare` prints the report; records go only to an explicit --out.
    let mut out: Option<Box<dyn Write>> = if compare && args.out.is_none() { None } else { Some(out_writer(args.out.as_ref())?) };
    let mut sink = |r: &MetricsRecord| -> srm_core::Result<()> {
        if let Some(w) = out.as_mut() {
            serde_json::to_writer(&mut *w, r).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    };
    let report = run_experiment(&config, &index, queries.as_deref(), &mut sink)?;
    if let Some(mut w) = out {
        w.flush()?;
    }
    if compare {
        writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        eprintln!("{}", serde_json::to_string(&report)?);
    }
    Ok(())
}

fn threads() -> anyhow::Result<usize> {
    match std::env::var("SRM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(usage(format!("SRM_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let (base, base_index) = prepare(&args.run)?;
    let configs: Vec<WorkloadConfig> = args
        .values
        .iter()
        .map(|&v| args.param.apply(&base, v).map_err(|e| usage(e.to_string())))
        .collect::<anyhow::Result<_>>()?;
    if args.param.rebuilds_index() && args.run.index_path.is_some() {
        return Err(usage("sweeping epsilon or block_size needs --objects or --synthetic, not --index"));
    }
    // One shared read-only index per (ε, B).
    let mut indexes: BTreeMap<(u64, usize), Arc<IrfIndex>> = BTreeMap::new();
    indexes.insert((base.epsilon.to_bits(), base.block_size), base_index.clone());
    for c in &configs {
        let key = (c.epsilon.to_bits(), c.block_size);
        if !indexes.contains_key(&key) {
            let idx = IrfIndex::build(base_index.objects().clone(), c.partition()).context("building index")?;
            indexes.insert(key, Arc::new(idx));
        }
    }
    let queries = match &args.run.queries {
        Some(p) => Some(load_queries(p)?),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads()?).build()?;
    let reports = pool.install(|| {
        configs
            .par_iter()
            .map(|c| {
                let index = &indexes[&(c.epsilon.to_bits(), c.block_size)];
                run_experiment(c, index, queries.as_deref(), &mut |_| Ok(()))
            })
            .collect::<Vec<_>>()
    });
    let mut out = out_writer(args.run.out.as_ref())?;
    for (value, report) in args.values.iter().zip(reports) {
        let report = report?;
        serde_json::to_writer(&mut out, &json!({ "param": args.param, "value": value, "report": report }))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<srm_core::Error>().is_some_and(|s| matches!(s, srm_core::Error::Io(io) if io.kind() == io::ErrorKind::BrokenPipe))
            || c.downcast_ref::<serde_json::Error>().is_some_and(|j| j.io_error_kind() == Some(io::ErrorKind::BrokenPipe))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::BuildIndex(a) => build_index(a),
        Command::Run(a) => run(a, false),
        Command::Compare(a) => run(a, true),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // A reader that stops early, as `head` does, is not a failure.
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<Usage>().is_some() { 2 } else { 1 })
        }
    }
}
