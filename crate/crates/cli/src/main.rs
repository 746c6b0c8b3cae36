//! Single-binary front end for the graphtok toolkit.
//!
//! Subcommands: `generate` (synthetic datasets), `retrieve` (prize
//! assignment + PCST extraction), `pool` (run one pooling operator on a
//! graph), `train` (multi-seed harness runs), `gradcheck` (finite-difference
//! validation of every trainable block), `fande` (redundancy diagnostic over
//! prediction logs), and `report` (merge run reports into a stability
//! table).
//!
//! Exit codes: 0 ok, 2 usage (bad flags, configs, or specs), 3 data or
//! numerical failure. Outputs are written to a temporary file and renamed,
//! so a failing run never leaves partial output behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphtok::fande::{contingency, fande_score, solvable_set, PredictionLog};
use graphtok::graph::{
    dataset_from_jsonl, dataset_to_jsonl, generate_dataset, read_graph_json, write_graph_json,
    SyntheticTaskSpec,
};
use graphtok::harness::{
    build_pooling_op, gradcheck, gradcheck_sample, named_configs, pool_forward, stability_report,
    train, RunConfig, RunReport,
};
use graphtok::numerics::DeterministicRng;
use graphtok::retriever::{
    assign_prizes_with_cost, exact_pcst_oracle, pcst_objective, solve_pcst, DEFAULT_EDGE_COST,
};

#[derive(Parser)]
#[command(name = "graphtok", version, about = "Graph-to-token experiment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a task-spec JSON file.
    Generate(GenerateArgs),
    /// Assign query prizes and extract a prize-collecting Steiner subgraph.
    Retrieve(RetrieveArgs),
    /// Run one pooling operator over a graph's node features.
    Pool(PoolArgs),
    /// Train the pipeline across seeds and emit a run report.
    Train(TrainArgs),
    /// Check analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Compute the feature/structure redundancy score from prediction logs.
    Fande(FandeArgs),
    /// Merge run reports into a stability comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Task spec JSON path.
    #[arg(long)]
    spec: PathBuf,
    /// Output dataset path (one JSON document per line).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Graph JSON path.
    #[arg(long)]
    graph: PathBuf,
    /// Query feature row as a JSON array, e.g. '[1.0, 0.0]'.
    #[arg(long)]
    query: String,
    /// How many best-ranked nodes receive prizes.
    #[arg(long, default_value_t = 4)]
    top_n: usize,
    #[arg(long, default_value_t = DEFAULT_EDGE_COST)]
    edge_cost: f64,
    /// Also run the exhaustive oracle (N <= 12) and print the quality ratio.
    #[arg(long)]
    oracle: bool,
    /// Where to write the extracted subgraph JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoolArgs {
    /// Graph JSON path.
    #[arg(long)]
    graph: PathBuf,
    /// Pooling config JSON path.
    #[arg(long)]
    config: PathBuf,
    /// Seed for the operator's learnable state.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the pool result JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run config JSON path.
    #[arg(long)]
    config: PathBuf,
    /// Dataset path (one JSON document per line).
    #[arg(long)]
    data: PathBuf,
    /// Where to write the run report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Run config JSON path; without it, every named operator x encoder
    /// combination is checked.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    seed: u64,
}

#[derive(Args)]
struct FandeArgs {
    /// Prediction log path (one JSON record per line).
    #[arg(long)]
    logs: PathBuf,
    /// Model id of the feature-only run.
    #[arg(long)]
    feature_model: String,
    /// Model id of the edge-aware run.
    #[arg(long)]
    edge_model: String,
    /// Comma-separated seed list; defaults to every seed in the log.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run report JSON files to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Where to write the merged table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

/// Usage problems exit 2, data and numerical problems exit 3.
enum AppError {
    Usage(String),
    Data(String),
}

type AppResult<T> = Result<T, AppError>;

fn usage<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> AppError + '_ {
    move |e| AppError::Usage(format!("{context}: {e}"))
}

fn data<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> AppError + '_ {
    move |e| AppError::Data(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Retrieve(args) => cmd_retrieve(args),
        Command::Pool(args) => cmd_pool(args),
        Command::Train(args) => cmd_train(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Fande(args) => cmd_fande(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Validated before any work happens; a missing parent directory fails the
/// whole command up front.
fn check_out_path(path: &Path) -> AppResult<()> {
    let parent = match path.parent() {
        Some(p) if p != Path::new("") => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(AppError::Usage(format!(
            "output directory {} does not exist",
            parent.display()
        )));
    }
    Ok(())
}

/// Write to `<name>.tmp` next to the target, then rename into place.
fn write_atomic(path: &Path, contents: &str) -> AppResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(data(&format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(data(&format!("renaming into {}", path.display())))?;
    Ok(())
}

fn read_file(path: &Path, kind: &str) -> AppResult<String> {
    fs::read_to_string(path).map_err(data(&format!("reading {kind} {}", path.display())))
}

fn cmd_generate(args: GenerateArgs) -> AppResult<()> {
    check_out_path(&args.out)?;
    let spec_text = read_file(&args.spec, "spec")?;
    let spec: SyntheticTaskSpec =
        serde_json::from_str(&spec_text).map_err(usage("invalid task spec"))?;
    let examples = generate_dataset(&spec, args.seed).map_err(usage("infeasible task spec"))?;
    write_atomic(&args.out, &dataset_to_jsonl(&examples))?;
    let dual = examples
        .iter()
        .filter(|e| e.tags.feature && e.tags.structure)
        .count();
    println!(
        "wrote {} examples to {} (seed {}, {} classes, {:.0}% dual-tagged)",
        examples.len(),
        args.out.display(),
        args.seed,
        spec.num_classes(),
        100.0 * dual as f64 / examples.len() as f64
    );
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs) -> AppResult<()> {
    if let Some(out) = &args.out {
        check_out_path(out)?;
    }
    let graph = read_graph_json(&read_file(&args.graph, "graph")?)
        .map_err(data("invalid graph document"))?;
    let query: Vec<f64> =
        serde_json::from_str(&args.query).map_err(usage("query must be a JSON array"))?;
    let prized = assign_prizes_with_cost(&graph, &query, args.top_n, args.edge_cost)
        .map_err(data("prize assignment"))?;
    let solution = solve_pcst(&prized).map_err(data("pcst solve"))?;
    let objective = pcst_objective(&solution, &prized).map_err(data("objective"))?;
    println!(
        "objective {objective} over {} nodes and {} edges",
        solution.nodes.len(),
        solution.edges.len()
    );
    if args.oracle {
        if graph.node_count() <= 12 {
            let best = exact_pcst_oracle(&prized).map_err(data("oracle"))?;
            let ratio = if best > 0.0 { objective / best } else { 1.0 };
            println!("oracle {best} ratio {ratio:.4}");
        } else {
            eprintln!(
                "oracle refused: {} nodes exceeds the exhaustive limit of 12",
                graph.node_count()
            );
        }
    }
    if let Some(out) = &args.out {
        let sub = solution
            .to_graph(&graph)
            .map_err(data("materializing subgraph"))?;
        write_atomic(out, &write_graph_json(&sub))?;
        println!("subgraph written to {}", out.display());
    }
    Ok(())
}

fn cmd_pool(args: PoolArgs) -> AppResult<()> {
    if let Some(out) = &args.out {
        check_out_path(out)?;
    }
    let graph = read_graph_json(&read_file(&args.graph, "graph")?)
        .map_err(data("invalid graph document"))?;
    let config: graphtok::harness::PoolingConfig =
        serde_json::from_str(&read_file(&args.config, "pooling config")?)
            .map_err(usage("invalid pooling config"))?;
    let mut rng = DeterministicRng::new(args.seed);
    let op = build_pooling_op(&config, graph.feature_dim(), args.seed, &mut rng);
    let result =
        pool_forward(&op, graph.node_features(), &graph).map_err(data("pooling"))?;
    println!(
        "operator {} emitted {} tokens (aux total {})",
        op.name(),
        result.token_count(),
        result.aux.total()
    );
    let doc = serde_json::json!({
        "operator": op.name(),
        "k": result.token_count(),
        "result": result,
    });
    let text = serde_json::to_string_pretty(&doc).expect("pool result serialization");
    match &args.out {
        Some(out) => write_atomic(out, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> AppResult<()> {
    if let Some(out) = &args.out {
        check_out_path(out)?;
    }
    let config: RunConfig = serde_json::from_str(&read_file(&args.config, "run config")?)
        .map_err(usage("invalid run config"))?;
    let dataset =
        dataset_from_jsonl(&read_file(&args.data, "dataset")?).map_err(data("invalid dataset"))?;
    let report = train(&config, &dataset).map_err(data("training"))?;
    println!(
        "operator {} ({}): accuracy {:.4} +- {:.4} over seeds {:?} (w0 intact: {})",
        report.operator,
        graphtok::harness::regime_name(report.regime),
        report.mean_accuracy,
        report.std_accuracy,
        report.seeds,
        report.w0_intact
    );
    let text = match args.format {
        Format::Csv => report.to_csv(),
        _ => serde_json::to_string_pretty(&report).expect("report serialization"),
    };
    match &args.out {
        Some(out) => write_atomic(out, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> AppResult<()> {
    let (sample, label) = gradcheck_sample(args.seed);
    let configs: Vec<(String, RunConfig)> = match &args.config {
        Some(path) => {
            let cfg: RunConfig = serde_json::from_str(&read_file(path, "run config")?)
                .map_err(usage("invalid run config"))?;
            vec![(path.display().to_string(), cfg)]
        }
        None => named_configs(),
    };
    let mut all_pass = true;
    for (name, cfg) in &configs {
        let report = gradcheck(cfg, &sample, label, args.seed).map_err(data("gradcheck"))?;
        if report.pass {
            println!("PASS {name} max_rel_err={:.3e}", report.max_rel_err);
        } else {
            all_pass = false;
            println!(
                "FAIL {name} max_rel_err={:.3e} at {}",
                report.max_rel_err, report.worst_block
            );
        }
    }
    if !all_pass {
        return Err(AppError::Data("gradient check failed".to_string()));
    }
    Ok(())
}

fn cmd_fande(args: FandeArgs) -> AppResult<()> {
    if let Some(out) = &args.out {
        check_out_path(out)?;
    }
    let log = PredictionLog::from_jsonl(&read_file(&args.logs, "prediction log")?)
        .map_err(data("invalid prediction log"))?;
    let parse_seeds = |text: &str| -> AppResult<Vec<i64>> {
        text.split(',')
            .map(|s| s.trim().parse::<i64>().map_err(usage("invalid seed list")))
            .collect()
    };
    let (sf, se) = match &args.seeds {
        Some(list) => {
            let seeds = parse_seeds(list)?;
            (
                solvable_set(&log, &args.feature_model, &seeds).map_err(data("feature model"))?,
                solvable_set(&log, &args.edge_model, &seeds).map_err(data("edge model"))?,
            )
        }
        None => (
            solvable_set(&log, &args.feature_model, &log.seeds_for(&args.feature_model))
                .map_err(data("feature model"))?,
            solvable_set(&log, &args.edge_model, &log.seeds_for(&args.edge_model))
                .map_err(data("edge model"))?,
        ),
    };
    let p = log.example_ids().map_err(data("example coverage"))?;
    let counts = contingency(&sf, &se, &p).map_err(data("contingency"))?;
    let score = fande_score(&sf, &se, p.len()).map_err(data("score"))?;
    let rounded = (score * 100.0).round() / 100.0;

    let json = serde_json::json!({
        "feature_model": args.feature_model,
        "edge_model": args.edge_model,
        "p": p.len(),
        "counts": counts,
        "fande": score,
        "rounded": rounded,
    });
    match args.format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json).expect("fande serialization")
        ),
        _ => {
            print!("{}", counts.to_table(&args.feature_model, &args.edge_model));
            println!("FandE = {rounded:.2} (exact {score}, |P| = {})", p.len());
        }
    }
    if let Some(out) = &args.out {
        write_atomic(
            out,
            &serde_json::to_string_pretty(&json).expect("fande serialization"),
        )?;
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> AppResult<()> {
    if let Some(out) = &args.out {
        check_out_path(out)?;
    }
    let mut reports: Vec<RunReport> = Vec::new();
    for path in &args.inputs {
        let report: RunReport = serde_json::from_str(&read_file(path, "run report")?)
            .map_err(data("invalid run report"))?;
        reports.push(report);
    }
    let stability = stability_report(&reports).map_err(data("stability report"))?;
    let text = match args.format {
        Format::Csv => stability.to_csv(),
        Format::Table => stability.to_table(),
        Format::Json => {
            let mut s = String::new();
            let _ = write!(
                s,
                "{}",
                serde_json::to_string_pretty(&stability).expect("stability serialization")
            );
            s
        }
    };
    print!("{text}");
    if let Some(out) = &args.out {
        write_atomic(out, &text)?;
    }
    Ok(())
}
