//! External solver adapter.
//!
//! Exports the model as LP text, runs a user-supplied command, and parses the
//! solution file back through the variable-name registry. The command is a
//! whitespace-split template; `{lp}`, `{sol}`, `{time}`, and `{gap}`
//! placeholders are substituted before spawning. The expected solution file
//! is JSON: `{"status": ..., "objective": ..., "bound": ..., "nodes": ...,
//! "variables": {name: value}}`, exactly what `slicekit solve-lp` writes, so
//! the toolkit's own binary doubles as a reference external solver.

use std::collections::BTreeMap;
use std::io::Read;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{export_lp, Model};

use super::branch_bound::{SolveLimits, SolveResult, SolveStatus};

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("external solver command is empty")]
    EmptyCommand,
    #[error("failed to launch external solver {command:?}: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("external solver exceeded {0:.0} seconds and was killed")]
    TimedOut(f64),
    #[error("external solver exited with {status}: {stderr}")]
    Failed { status: String, stderr: String },
    #[error("cannot parse external solution file: {0}")]
    BadSolution(String),
    #[error("external solution names unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Wire format of an external solution file.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: String,
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default)]
    pub bound: Option<f64>,
    #[serde(default)]
    pub gap: Option<f64>,
    #[serde(default)]
    pub nodes: u64,
    #[serde(default)]
    pub wall_s: f64,
    #[serde(default)]
    pub variables: BTreeMap<String, f64>,
}

/// Solve `model` through an external command speaking the LP text interface.
///
/// The process is killed at 1.1x the time limit (plus launch slack) as a
/// backstop when the solver ignores the forwarded limit.
pub fn external_solve(
    model: &Model,
    solver_command: &str,
    limits: &SolveLimits,
) -> Result<SolveResult, ExternalError> {
    let start = Instant::now();
    let dir = tempdir()?;
    let lp_path = dir.join("model.lp");
    let sol_path = dir.join("solution.json");

    let doc = export_lp(model);
    std::fs::write(&lp_path, &doc.text)?;

    let mut tokens: Vec<String> = solver_command
        .split_whitespace()
        .map(|t| {
            t.replace("{lp}", &lp_path.display().to_string())
                .replace("{sol}", &sol_path.display().to_string())
                .replace("{time}", &format!("{}", limits.time_limit))
                .replace("{gap}", &format!("{}", limits.rel_gap))
        })
        .collect();
    if tokens.is_empty() {
        return Err(ExternalError::EmptyCommand);
    }
    let program = tokens.remove(0);
    let child = Command::new(&program)
        .args(&tokens)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ExternalError::Spawn {
            command: solver_command.to_string(),
            source,
        })?;

    let backstop = Duration::from_secs_f64(1.1 * limits.time_limit + 10.0);
    let output = wait_with_backstop(child, backstop)?;
    match output {
        WaitOutcome::TimedOut => {
            let _ = std::fs::remove_dir_all(&dir);
            return Err(ExternalError::TimedOut(backstop.as_secs_f64()));
        }
        WaitOutcome::Exited { success, stderr } if !success => {
            let _ = std::fs::remove_dir_all(&dir);
            return Err(ExternalError::Failed {
                status: "nonzero exit".into(),
                stderr,
            });
        }
        WaitOutcome::Exited { .. } => {}
    }

    let text = std::fs::read_to_string(&sol_path)
        .map_err(|e| ExternalError::BadSolution(format!("missing solution file: {e}")))?;
    let _ = std::fs::remove_dir_all(&dir);
    let file: SolutionFile =
        serde_json::from_str(&text).map_err(|e| ExternalError::BadSolution(e.to_string()))?;

    let status = match file.status.as_str() {
        "optimal" => SolveStatus::Optimal,
        "feasible_gap" => SolveStatus::FeasibleGap,
        "infeasible" => SolveStatus::Infeasible,
        "time_limit_no_incumbent" => SolveStatus::TimeLimitNoIncumbent,
        other => {
            return Err(ExternalError::BadSolution(format!(
                "unknown status {other:?}"
            )))
        }
    };

    let solution = if status.has_incumbent() {
        let names = model.name_index_map();
        let mut values = vec![0.0; model.num_vars()];
        for (name, value) in &file.variables {
            // Names mangled on export map back through the alias table.
            let original = doc.renamed.get(name).cloned().unwrap_or_else(|| name.clone());
            match names.get(original.as_str()) {
                Some(&j) => values[j] = *value,
                None => return Err(ExternalError::UnknownVariable(name.clone())),
            }
        }
        Some(values)
    } else {
        None
    };

    let objective = file.objective.filter(|_| status.has_incumbent());
    let rel_gap = match (objective, file.bound) {
        (Some(obj), Some(b)) => Some((obj - b).max(0.0) / obj.abs().max(1e-10)),
        _ => file.gap,
    };
    Ok(SolveResult {
        status,
        objective,
        bound: file.bound,
        rel_gap,
        solution,
        nodes: file.nodes,
        wall_seconds: start.elapsed().as_secs_f64(),
        lp_iterations: 0,
    })
}

enum WaitOutcome {
    Exited { success: bool, stderr: String },
    TimedOut,
}

fn wait_with_backstop(mut child: Child, backstop: Duration) -> Result<WaitOutcome, ExternalError> {
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait()? {
            let mut stderr = String::new();
            if let Some(mut pipe) = child.stderr.take() {
                let _ = pipe.read_to_string(&mut stderr);
            }
            return Ok(WaitOutcome::Exited {
                success: status.success(),
                stderr: stderr.chars().take(2000).collect(),
            });
        }
        if start.elapsed() >= backstop {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(WaitOutcome::TimedOut);
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn tempdir() -> std::io::Result<std::path::PathBuf> {
    let base = std::env::temp_dir();
    // Unique per process and call; good enough for adapter scratch space.
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = base.join(format!(
        "slicekit-ext-{}-{n}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{build_milp, VariantFlags};
    use crate::instance::test_fixtures::tiny3;

    #[test]
    fn missing_binary_is_a_spawn_error() {
        let model = build_milp(&tiny3(), 0.005, VariantFlags::default()).unwrap();
        let err = external_solve(
            &model,
            "definitely-not-a-solver-binary {lp} {sol}",
            &SolveLimits::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ExternalError::Spawn { .. }), "{err}");
    }

    #[test]
    fn empty_command_rejected() {
        let model = build_milp(&tiny3(), 0.005, VariantFlags::default()).unwrap();
        let err = external_solve(&model, "   ", &SolveLimits::default()).unwrap_err();
        assert!(matches!(err, ExternalError::EmptyCommand));
    }

    #[test]
    fn failing_command_reports_stderr() {
        let model = build_milp(&tiny3(), 0.005, VariantFlags::default()).unwrap();
        let err = external_solve(
            &model,
            "ls /definitely/not/a/path/{lp}",
            &SolveLimits::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ExternalError::Failed { .. }), "{err}");
    }
}
