//! Command-line interface for the network slicing toolkit.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use slicekit::formulation::{
    build_milp, build_minlp_linearized, export_lp, parse_lp, Model, VariantFlags,
};
use slicekit::harness::{run_experiment, summarize, write_outputs, ExperimentConfig};
use slicekit::instance::{generate_instance, load_instance, save_instance, GenConfig, Instance};
use slicekit::solver::{
    branch_and_bound, decode_solution, external_solve, DecodedSolution, SolveLimits, SolveResult,
};
use slicekit::validator::{validate, Tolerances, ValidateParams};

#[derive(Parser)]
#[command(
    name = "slicekit",
    about = "Build, solve, validate, and benchmark network slicing optimization models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random problem instance.
    Generate {
        /// Generator configuration (JSON); defaults to the desk-scale config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Output instance file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a formulation for an instance and solve it.
    Solve(SolveArgs),
    /// Validate a solution file against an instance.
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Output report file (JSON).
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        sigma: f64,
    },
    /// Run a batch experiment sweep.
    Experiment {
        /// Experiment configuration (JSON); defaults to the desk experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for CSV results and plot scripts.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Solve a model given as LP text (the external-solver endpoint).
    SolveLp {
        #[arg(long)]
        lp: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        gap: f64,
        #[arg(long, default_value_t = 1800.0)]
        time_limit: f64,
    },
    /// Export a formulation as LP text without solving.
    Export(ExportArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Formulation to build: milp or minlp.
    #[arg(long, default_value = "milp")]
    formulation: String,
    /// Restrict every flow to a single path.
    #[arg(long)]
    single_path: bool,
    /// Drop the reliability constraint families.
    #[arg(long)]
    no_reliability: bool,
    #[arg(long, default_value_t = 0.005)]
    sigma: f64,
    /// Override the instance's path budget.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value_t = 0.005)]
    gap: f64,
    #[arg(long, default_value_t = 1800.0)]
    time_limit: f64,
    /// Solve through an external command instead of the embedded solver.
    /// `{lp}`, `{sol}`, `{time}`, and `{gap}` are substituted.
    #[arg(long)]
    external: Option<String>,
    /// Output solution file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "milp")]
    formulation: String,
    #[arg(long)]
    single_path: bool,
    #[arg(long)]
    no_reliability: bool,
    #[arg(long, default_value_t = 0.005)]
    sigma: f64,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// On-disk solution document: solver outcome, variable values, and the
/// decoded placement/routing view when the solution is integral.
#[derive(serde::Serialize, serde::Deserialize)]
struct SolutionDoc {
    status: String,
    #[serde(default)]
    objective: Option<f64>,
    #[serde(default)]
    bound: Option<f64>,
    #[serde(default)]
    gap: Option<f64>,
    #[serde(default)]
    nodes: u64,
    #[serde(default)]
    wall_s: f64,
    #[serde(default)]
    variables: BTreeMap<String, f64>,
    #[serde(default)]
    placement_routing: Option<DecodedSolution>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { config, seed, out } => {
            let config = match config {
                Some(path) => read_json::<GenConfig>(&path)?,
                None => GenConfig::desk(),
            };
            let instance = generate_instance(&config, seed)?;
            std::fs::write(&out, save_instance(&instance))
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "wrote {} ({} nodes, {} links, {} services)",
                out.display(),
                instance.nodes.len(),
                instance.links.len(),
                instance.services.len()
            );
        }
        Command::Solve(args) => run_solve(args)?,
        Command::Validate {
            instance,
            solution,
            report,
            sigma,
        } => {
            let inst = read_instance(&instance)?;
            let doc: SolutionDoc = read_json(&solution)?;
            let decoded = doc.placement_routing.with_context(|| {
                format!(
                    "{} has no placement_routing section; only integral solutions can be validated",
                    solution.display()
                )
            })?;
            let params = ValidateParams {
                sigma,
                paths: inst.path_count,
                tolerances: Tolerances::default(),
            };
            let result = validate(&inst, &decoded, &params)?;
            std::fs::write(&report, serde_json::to_string_pretty(&result)?)
                .with_context(|| format!("writing {}", report.display()))?;
            if result.pass {
                eprintln!("validation passed");
            } else {
                for family in result.families.iter().filter(|f| !f.pass) {
                    eprintln!(
                        "violated {:?}: worst {} ({})",
                        family.family,
                        family.worst_violation,
                        family.witness.as_deref().unwrap_or("-")
                    );
                }
                bail!("validation failed; report written to {}", report.display());
            }
        }
        Command::Experiment {
            config,
            out,
            workers,
        } => {
            let config = match config {
                Some(path) => read_json::<ExperimentConfig>(&path)?,
                None => ExperimentConfig::desk(),
            };
            let rows = run_experiment(&config, workers)?;
            let summaries = summarize(&rows)?;
            write_outputs(&out, &rows, &summaries)?;
            eprintln!(
                "wrote {} rows to {}; see summary.csv and plot.gp",
                rows.len(),
                out.display()
            );
        }
        Command::SolveLp {
            lp,
            out,
            gap,
            time_limit,
        } => {
            let text = std::fs::read_to_string(&lp)
                .with_context(|| format!("reading {}", lp.display()))?;
            let model = parse_lp(&text)?;
            let limits = SolveLimits {
                time_limit,
                rel_gap: gap,
                node_limit: u64::MAX,
            };
            let result = branch_and_bound(&model, &limits);
            let doc = solution_doc(&model, &result, None);
            std::fs::write(&out, serde_json::to_string_pretty(&doc)?)
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "{}: objective {:?}, bound {:?}, {} nodes",
                doc.status, doc.objective, doc.bound, doc.nodes
            );
        }
        Command::Export(args) => {
            let inst = read_instance(&args.instance)?;
            let model = build_variant(
                &inst,
                &args.formulation,
                args.sigma,
                args.single_path,
                args.no_reliability,
                args.paths,
            )?;
            let doc = export_lp(&model);
            std::fs::write(&args.out, &doc.text)
                .with_context(|| format!("writing {}", args.out.display()))?;
            if !doc.renamed.is_empty() {
                let map_path = args.out.with_extension("names.json");
                std::fs::write(&map_path, serde_json::to_string_pretty(&doc.renamed)?)?;
                eprintln!("wrote alias map to {}", map_path.display());
            }
        }
    }
    Ok(())
}

fn run_solve(args: SolveArgs) -> Result<()> {
    let inst = read_instance(&args.instance)?;
    let model = build_variant(
        &inst,
        &args.formulation,
        args.sigma,
        args.single_path,
        args.no_reliability,
        args.paths,
    )?;
    let limits = SolveLimits {
        time_limit: args.time_limit,
        rel_gap: args.gap,
        node_limit: u64::MAX,
    };
    let result = match &args.external {
        Some(command) => external_solve(&model, command, &limits)?,
        None => branch_and_bound(&model, &limits),
    };

    let decoded = match &result.solution {
        Some(values) => match decode_solution(&inst, &model, values) {
            Ok(d) => Some(d),
            Err(e) => {
                eprintln!("warning: solution decode failed: {e}");
                None
            }
        },
        None => None,
    };
    let doc = solution_doc(&model, &result, decoded);
    std::fs::write(&args.out, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "{}: objective {:?}, bound {:?}, gap {:?}, {} nodes in {:.2}s",
        doc.status, doc.objective, doc.bound, doc.gap, doc.nodes, doc.wall_s
    );
    Ok(())
}

fn solution_doc(
    model: &Model,
    result: &SolveResult,
    placement_routing: Option<DecodedSolution>,
) -> SolutionDoc {
    SolutionDoc {
        status: result.status.as_str().to_string(),
        objective: result.objective,
        bound: result.bound,
        gap: result.rel_gap,
        nodes: result.nodes,
        wall_s: result.wall_seconds,
        variables: result.solution_map(model).unwrap_or_default(),
        placement_routing,
    }
}

fn build_variant(
    instance: &Instance,
    formulation: &str,
    sigma: f64,
    single_path: bool,
    no_reliability: bool,
    paths: Option<usize>,
) -> Result<Model> {
    let flags = VariantFlags {
        single_path,
        no_reliability,
        paths_override: paths,
        ..VariantFlags::default()
    };
    let model = match formulation {
        "milp" => build_milp(instance, sigma, flags)?,
        "minlp" => build_minlp_linearized(instance, sigma, flags)?,
        other => bail!("unknown formulation {other:?}; expected milp or minlp"),
    };
    Ok(model)
}

fn read_instance(path: &PathBuf) -> Result<Instance> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(load_instance(&text)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
