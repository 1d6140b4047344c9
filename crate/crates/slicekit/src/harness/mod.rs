//! Batch experiments: generate instances, solve variants, validate, and
//! emit CSV results with gnuplot-ready summaries.
//!
//! Wall-clock time (column `wall_s`) is recorded rather than CPU time;
//! solves are single-threaded so the two are near-identical. Summaries
//! report both the mean over solved instances and the mean over all
//! instances (failed solves contribute the time at which they were cut
//! off); feasibility curves count instances where the solver returned an
//! incumbent.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::AssertUnwindSafe;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{build_milp, build_minlp_linearized, Model, VariantFlags};
use crate::instance::{generate_instance, GenConfig, Instance};
use crate::solver::{branch_and_bound, decode_solution, SolveLimits, SolveStatus};
use crate::validator::{validate, Tolerances, ValidateParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("experiment config invalid: {0}")]
    Config(String),
    #[error("cannot summarize an empty result set")]
    Empty,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// The formulation variants the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Path-flow MILP with multi-path routing and reliability.
    Milp,
    /// McCormick-linearized baseline.
    Minlp,
    /// Single-path restriction of the MILP (reliability kept).
    SinglePath,
    /// MILP without the reliability families; checked post-hoc.
    NoReliability,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Milp,
        Variant::Minlp,
        Variant::SinglePath,
        Variant::NoReliability,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Milp => "milp",
            Variant::Minlp => "minlp",
            Variant::SinglePath => "single_path",
            Variant::NoReliability => "no_reliability",
        }
    }

    /// Build the variant's model for an instance.
    pub fn build(&self, instance: &Instance, sigma: f64) -> Model {
        let flags = match self {
            Variant::Milp | Variant::Minlp => VariantFlags::default(),
            Variant::SinglePath => VariantFlags {
                single_path: true,
                ..VariantFlags::default()
            },
            Variant::NoReliability => VariantFlags {
                no_reliability: true,
                ..VariantFlags::default()
            },
        };
        match self {
            Variant::Minlp => build_minlp_linearized(instance, sigma, flags)
                .expect("generated instances build"),
            _ => build_milp(instance, sigma, flags).expect("generated instances build"),
        }
    }
}

/// A full experiment specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Service counts to sweep.
    pub service_counts: Vec<usize>,
    /// Instances generated per service count.
    pub instances_per_point: usize,
    pub variants: Vec<Variant>,
    pub limits: SolveLimits,
    /// Instance distribution; its `services` field is overridden by the sweep.
    pub gen: GenConfig,
    /// Objective weight of the link-consumption term.
    pub sigma: f64,
    /// Instance seeds are `seed_base + instance_index`.
    pub seed_base: u64,
}

impl ExperimentConfig {
    /// Desk-scale experiment mirroring the reference protocol shape.
    pub fn desk() -> Self {
        ExperimentConfig {
            service_counts: vec![1, 2, 3],
            instances_per_point: 20,
            variants: Variant::ALL.to_vec(),
            limits: SolveLimits {
                time_limit: 60.0,
                rel_gap: 0.005,
                node_limit: u64::MAX,
            },
            gen: GenConfig::desk(),
            sigma: 0.005,
            seed_base: 42_000,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.service_counts.is_empty() {
            return Err(HarnessError::Config("service_counts is empty".into()));
        }
        if self.instances_per_point == 0 {
            return Err(HarnessError::Config("instances_per_point is zero".into()));
        }
        if self.variants.is_empty() {
            return Err(HarnessError::Config("variants is empty".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(HarnessError::Config("sigma must be positive".into()));
        }
        self.limits
            .validate()
            .map_err(HarnessError::Config)?;
        self.gen.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}

/// One (instance, variant) outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub seed: u64,
    pub num_services: usize,
    pub variant: Variant,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    pub wall_s: f64,
    /// The solver returned an incumbent.
    pub feasible: bool,
    /// Post-hoc reliability check of the incumbent; populated only for the
    /// no-reliability variant.
    pub reliability_feasible: Option<bool>,
    /// Solver statistics and validation results carried for analysis; not
    /// part of the CSV schema.
    pub nodes: u64,
    pub validator_pass: Option<bool>,
    pub simple_paths: Option<bool>,
    pub harness_error: Option<String>,
}

/// Solve every variant on one instance.
fn run_instance(
    config: &ExperimentConfig,
    instance_id: &str,
    seed: u64,
    num_services: usize,
) -> Vec<ResultRow> {
    let mut gen = config.gen.clone();
    gen.services = num_services;

    let blank = |variant: Variant, error: String| ResultRow {
        instance_id: instance_id.to_string(),
        seed,
        num_services,
        variant,
        status: SolveStatus::TimeLimitNoIncumbent,
        objective: None,
        bound: None,
        gap: None,
        wall_s: 0.0,
        feasible: false,
        reliability_feasible: None,
        nodes: 0,
        validator_pass: None,
        simple_paths: None,
        harness_error: Some(error),
    };

    let instance = match generate_instance(&gen, seed) {
        Ok(i) => i,
        Err(e) => {
            return config
                .variants
                .iter()
                .map(|&v| blank(v, format!("generation failed: {e}")))
                .collect();
        }
    };

    config
        .variants
        .iter()
        .map(|&variant| {
            let run = std::panic::catch_unwind(AssertUnwindSafe(|| {
                solve_variant(config, &instance, variant)
            }));
            match run {
                Ok(mut row) => {
                    row.instance_id = instance_id.to_string();
                    row.seed = seed;
                    row.num_services = num_services;
                    row
                }
                Err(_) => blank(variant, "solver panicked".into()),
            }
        })
        .collect()
}

fn solve_variant(config: &ExperimentConfig, instance: &Instance, variant: Variant) -> ResultRow {
    let model = variant.build(instance, config.sigma);
    let result = branch_and_bound(&model, &config.limits);

    let mut row = ResultRow {
        instance_id: String::new(),
        seed: 0,
        num_services: 0,
        variant,
        status: result.status,
        objective: result.objective,
        bound: result.bound,
        gap: result.rel_gap,
        wall_s: result.wall_seconds,
        feasible: result.status.has_incumbent(),
        reliability_feasible: None,
        nodes: result.nodes,
        validator_pass: None,
        simple_paths: None,
        harness_error: None,
    };

    if let Some(values) = &result.solution {
        let params = ValidateParams {
            sigma: config.sigma,
            paths: if variant == Variant::SinglePath {
                1
            } else {
                instance.path_count
            },
            tolerances: Tolerances::default(),
        };
        match decode_solution(instance, &model, values) {
            Ok(decoded) => {
                // The no-reliability variant never enforced the reliability
                // budget, so its report may legitimately fail that family;
                // every other family must pass for every variant.
                match validate(instance, &decoded, &params) {
                    Ok(report) => {
                        let reliability_ok = report
                            .families
                            .iter()
                            .find(|f| f.family == crate::validator::CheckFamily::Reliability)
                            .map(|f| f.pass)
                            .unwrap_or(true);
                        let pass = if variant == Variant::NoReliability {
                            report
                                .families
                                .iter()
                                .filter(|f| {
                                    f.family != crate::validator::CheckFamily::Reliability
                                })
                                .all(|f| f.pass)
                        } else {
                            report.pass
                        };
                        row.validator_pass = Some(pass);
                        row.simple_paths =
                            Some(crate::validator::paths_are_simple(&decoded));
                        if variant == Variant::NoReliability {
                            row.reliability_feasible = Some(reliability_ok);
                        }
                        if !pass {
                            row.harness_error =
                                Some("solver solution failed validation".into());
                        }
                    }
                    Err(e) => {
                        row.validator_pass = Some(false);
                        row.harness_error = Some(format!("validation error: {e}"));
                    }
                }
            }
            Err(e) => {
                row.validator_pass = Some(false);
                row.harness_error = Some(format!("decode error: {e}"));
            }
        }
    } else if variant == Variant::NoReliability {
        row.reliability_feasible = Some(false);
    }
    row
}

/// Run the full sweep on a worker pool. Rows come back sorted by
/// (service count, instance index, variant); reruns produce identical rows
/// except for the wall-time fields.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let mut jobs = Vec::new();
    let mut index = 0u64;
    for &k in &config.service_counts {
        for i in 0..config.instances_per_point {
            jobs.push((format!("svc{k}_i{i:03}"), config.seed_base + index, k));
            index += 1;
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut rows: Vec<ResultRow> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .flat_map(|(id, seed, k)| run_instance(config, id, *seed, *k))
            .collect()
    });
    rows.sort_by(|a, b| {
        (a.num_services, &a.instance_id, a.variant)
            .cmp(&(b.num_services, &b.instance_id, b.variant))
    });
    Ok(rows)
}

/// Aggregated view per (service count, variant).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub num_services: usize,
    pub variant: Variant,
    pub total: usize,
    /// Solver returned an incumbent.
    pub feasible: usize,
    /// Proven infeasible.
    pub infeasible: usize,
    /// Limit hit with no incumbent.
    pub no_incumbent: usize,
    /// Terminated conclusively (optimal at gap, or proven infeasible).
    pub solved: usize,
    /// Hit a limit before reaching the gap.
    pub failed: usize,
    /// Post-hoc reliability-feasible count (no-reliability variant rows).
    pub reliability_feasible: usize,
    pub mean_wall_s_solved: f64,
    pub mean_wall_s_all: f64,
}

/// Aggregate rows per (service count, variant). Means over solved instances
/// skip failed solves; means over all instances include them at the time
/// they were cut off.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut groups: BTreeMap<(usize, Variant), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.num_services, row.variant))
            .or_default()
            .push(row);
    }
    let mut out = Vec::new();
    for ((num_services, variant), group) in groups {
        let total = group.len();
        let feasible = group.iter().filter(|r| r.feasible).count();
        let infeasible = group
            .iter()
            .filter(|r| r.status == SolveStatus::Infeasible)
            .count();
        let no_incumbent = group
            .iter()
            .filter(|r| r.status == SolveStatus::TimeLimitNoIncumbent)
            .count();
        let solved_rows: Vec<_> = group
            .iter()
            .filter(|r| {
                matches!(r.status, SolveStatus::Optimal | SolveStatus::Infeasible)
            })
            .collect();
        let solved = solved_rows.len();
        let failed = total - solved;
        let reliability_feasible = group
            .iter()
            .filter(|r| r.reliability_feasible == Some(true))
            .count();
        let mean_wall_s_solved = if solved == 0 {
            0.0
        } else {
            solved_rows.iter().map(|r| r.wall_s).sum::<f64>() / solved as f64
        };
        let mean_wall_s_all = group.iter().map(|r| r.wall_s).sum::<f64>() / total as f64;
        out.push(SummaryRow {
            num_services,
            variant,
            total,
            feasible,
            infeasible,
            no_incumbent,
            solved,
            failed,
            reliability_feasible,
            mean_wall_s_solved,
            mean_wall_s_all,
        });
    }
    Ok(out)
}

const RESULTS_HEADER: &str =
    "instance_id,seed,num_services,variant,status,objective,bound,gap,wall_s,feasible,reliability_feasible";

const SUMMARY_HEADER: &str = "num_services,variant,total,feasible,infeasible,no_incumbent,solved,failed,reliability_feasible,mean_wall_s_solved,mean_wall_s_all";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut csv = String::from(RESULTS_HEADER);
    csv.push('\n');
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.instance_id,
            r.seed,
            r.num_services,
            r.variant.as_str(),
            r.status.as_str(),
            opt(r.objective),
            opt(r.bound),
            opt(r.gap),
            r.wall_s,
            r.feasible,
            r.reliability_feasible
                .map(|b| b.to_string())
                .unwrap_or_default(),
        ));
    }
    csv
}

pub fn summary_csv(summaries: &[SummaryRow]) -> String {
    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    for s in summaries {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            s.num_services,
            s.variant.as_str(),
            s.total,
            s.feasible,
            s.infeasible,
            s.no_incumbent,
            s.solved,
            s.failed,
            s.reliability_feasible,
            s.mean_wall_s_solved,
            s.mean_wall_s_all,
        ));
    }
    csv
}

/// Gnuplot script drawing the time and feasibility curves from the
/// per-variant summary files.
pub fn plot_script(variants: &[Variant]) -> String {
    let mut gp = String::new();
    gp.push_str("set datafile separator ','\n");
    gp.push_str("set key outside\n");
    gp.push_str("set xlabel 'number of services'\n");
    gp.push_str("set term pngcairo size 900,600\n");
    gp.push_str("set xtics 1\n\n");
    gp.push_str("set output 'time_vs_services.png'\n");
    gp.push_str("set ylabel 'mean wall time over all instances (s)'\n");
    let time_plots: Vec<String> = variants
        .iter()
        .map(|v| {
            format!(
                "'summary_{0}.csv' using 1:11 skip 1 with linespoints title '{0}'",
                v.as_str()
            )
        })
        .collect();
    gp.push_str(&format!("plot {}\n\n", time_plots.join(", \\\n     ")));
    gp.push_str("set output 'feasible_vs_services.png'\n");
    gp.push_str("set ylabel 'instances with a feasible solution'\n");
    let feas_plots: Vec<String> = variants
        .iter()
        .map(|v| {
            let column = if *v == Variant::NoReliability { 9 } else { 4 };
            format!(
                "'summary_{0}.csv' using 1:{column} skip 1 with linespoints title '{0}'",
                v.as_str()
            )
        })
        .collect();
    gp.push_str(&format!("plot {}\n", feas_plots.join(", \\\n     ")));
    gp
}

/// Write `results.csv`, combined and per-variant summaries, and `plot.gp`.
pub fn write_outputs(
    out_dir: &Path,
    rows: &[ResultRow],
    summaries: &[SummaryRow],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("results.csv"), results_csv(rows))?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(summaries))?;
    let mut variants: Vec<Variant> = summaries.iter().map(|s| s.variant).collect();
    variants.sort();
    variants.dedup();
    for v in &variants {
        let subset: Vec<SummaryRow> = summaries
            .iter()
            .filter(|s| s.variant == *v)
            .cloned()
            .collect();
        std::fs::write(
            out_dir.join(format!("summary_{}.csv", v.as_str())),
            summary_csv(&subset),
        )?;
    }
    let mut f = std::fs::File::create(out_dir.join("plot.gp"))?;
    f.write_all(plot_script(&variants).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::TopologyConfig;

    fn mini_config() -> ExperimentConfig {
        ExperimentConfig {
            service_counts: vec![1],
            instances_per_point: 2,
            variants: vec![Variant::Milp, Variant::SinglePath],
            limits: SolveLimits {
                time_limit: 20.0,
                rel_gap: 0.005,
                node_limit: u64::MAX,
            },
            gen: GenConfig {
                topology: TopologyConfig {
                    nodes: 6,
                    layers: 2,
                    links: 12,
                    cloud_nodes: 2,
                },
                sfc_length: 2,
                ..GenConfig::desk()
            },
            sigma: 0.005,
            seed_base: 5,
        }
    }

    #[test]
    fn mini_sweep_produces_validated_rows() {
        let config = mini_config();
        let rows = run_experiment(&config, 2).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!(row.harness_error.is_none(), "{:?}", row.harness_error);
            if row.feasible {
                assert_eq!(row.validator_pass, Some(true));
            }
        }
    }

    #[test]
    fn rows_reproduce_except_wall_time() {
        let config = mini_config();
        let a = run_experiment(&config, 2).unwrap();
        let b = run_experiment(&config, 1).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.instance_id, y.instance_id);
            assert_eq!(x.variant, y.variant);
            assert_eq!(x.status, y.status);
            assert_eq!(x.objective, y.objective);
            assert_eq!(x.bound, y.bound);
            assert_eq!(x.nodes, y.nodes);
        }
    }

    #[test]
    fn summary_partitions_and_single_row_mean() {
        let config = mini_config();
        let rows = run_experiment(&config, 2).unwrap();
        let summaries = summarize(&rows).unwrap();
        for s in &summaries {
            assert_eq!(s.feasible + s.infeasible + s.no_incumbent, s.total);
            assert_eq!(s.solved + s.failed, s.total);
        }
        let one = summarize(&rows[..1]).unwrap();
        assert_eq!(one[0].total, 1);
        assert!((one[0].mean_wall_s_all - rows[0].wall_s).abs() < 1e-12);
    }

    #[test]
    fn empty_rows_error() {
        assert!(matches!(summarize(&[]), Err(HarnessError::Empty)));
    }

    #[test]
    fn csv_header_is_exact() {
        assert!(results_csv(&[]).starts_with(
            "instance_id,seed,num_services,variant,status,objective,bound,gap,wall_s,feasible,reliability_feasible\n"
        ));
    }

    #[test]
    fn single_path_feasibility_subset_of_multipath() {
        let config = mini_config();
        let rows = run_experiment(&config, 2).unwrap();
        let mut by_instance: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
        for row in &rows {
            let entry = by_instance.entry(&row.instance_id).or_insert((false, false));
            match row.variant {
                Variant::Milp => entry.0 = row.feasible,
                Variant::SinglePath => entry.1 = row.feasible,
                _ => {}
            }
        }
        for (id, (milp, single)) in by_instance {
            assert!(!single || milp, "restriction feasible but full model not, instance {id}");
        }
    }
}
