//! Scenario execution and output files.
//!
//! Every task produces a CSV body (deterministic for a given scenario and
//! seed) and a `summary.json` carrying the verdict, timings and an echo of
//! the effective configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::operator::{min_monotonicity_gap, OperatorSpec};
use crate::probe::{liminf_probe, partial_verdict, run_family, FamilyReport, ProbeParams, ScheduleKind, Verdict};
use crate::representability::{certify_representative, fitzpatrick_value, graph_hash, representative_value, CertificateStatus};
use crate::resolvent::{moreau_yosida_solution, yosida_operator};
use crate::scenario::{Family, Plan, Scenario, Task};
use crate::space::{dot, Covector, Point};
use crate::variational::{variational_composition_probe, variational_sum_probe};

pub const EXIT_SCHEMA: i32 = 64;
pub const EXIT_SOLVER: i32 = 70;
pub const EXIT_IO: i32 = 73;

/// Files produced by one run, in write order, and the process exit code.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub exit_code: i32,
}

impl Artifacts {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

/// Run a planned scenario.
pub fn execute(scenario: &Scenario, plan: &Plan) -> Artifacts {
    let start = Instant::now();
    let (mut files, exit_code, mut summary) = match plan {
        Plan::MyEval { op, lambdas, points } => my_eval(op, lambdas, points, scenario),
        Plan::Probe {
            family,
            x,
            x_star,
            schedules,
            params,
        } => {
            let report = run_family(schedules, |sched| {
                let build = |n: usize| -> Result<OperatorSpec> {
                    let t = family.build(n).map_err(|e| Error::InvalidSet(e.0))?;
                    match sched.kind {
                        ScheduleKind::Lambda { .. } => yosida_operator(&t, sched.param(n), &params.solver),
                        _ => Ok(t),
                    }
                };
                liminf_probe(build, x, x_star, sched, params)
            });
            probe_outputs(Task::Probe, &report, params, schedules.len() > 1, family_json(family))
        }
        Plan::Varsum {
            t1,
            t2,
            x,
            x_star,
            schedules,
            params,
        } => match variational_sum_probe(t1, t2, x, x_star, schedules, params) {
            Ok(report) => probe_outputs(Task::Varsum, &report, params, true, Value::Null),
            Err(e) => failure(Task::Varsum, &e),
        },
        Plan::Varcomp {
            t,
            a,
            y,
            y_star,
            schedules,
            params,
            cross_check,
        } => match variational_composition_probe(t, a, y, y_star, schedules, params, *cross_check) {
            Ok(report) => probe_outputs(Task::Varcomp, &report, params, true, Value::Null),
            Err(e) => failure(Task::Varcomp, &e),
        },
        Plan::Fitzpatrick { graph, pairs } => fitzpatrick(graph, pairs),
        Plan::Certify { graph, grid, tol } => certify(graph, grid, *tol),
    };
    summary["task"] = json!(scenario.task.name());
    summary["exit_code"] = json!(exit_code);
    summary["seed"] = json!(scenario.seed);
    summary["config"] = scenario.to_json();
    summary["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    files.push(("summary.json".into(), pretty(&summary)));
    Artifacts { files, exit_code }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn family_json(family: &Family) -> Value {
    json!({ "constant": family.is_constant() })
}

fn failure(task: Task, e: &Error) -> (Vec<(String, String)>, i32, Value) {
    (
        Vec::new(),
        EXIT_SOLVER,
        json!({ "verdict": Value::Null, "error": e.to_string(), "task": task.name() }),
    )
}

fn probe_outputs(
    task: Task,
    report: &FamilyReport,
    params: &ProbeParams,
    merged_row: bool,
    extra: Value,
) -> (Vec<(String, String)>, i32, Value) {
    let mut csv = String::from("schedule_id,n,param_n,residual_x,w_norm,verdict_partial\n");
    for (sid, run) in report.runs.iter().enumerate() {
        for (i, ((p, r), w)) in run.params.iter().zip(&run.residuals).zip(&run.w_norms).enumerate() {
            let partial = partial_verdict(&run.residuals, i + 1, params);
            writeln!(csv, "{sid},{},{p},{r},{w},{partial}", i + 1).expect("string write");
        }
    }
    if merged_row {
        writeln!(csv, "merged,,,,,{}", report.verdict).expect("string write");
    }
    let runs: Vec<Value> = report
        .runs
        .iter()
        .zip(&report.schedules)
        .enumerate()
        .map(|(sid, (run, sched))| {
            json!({
                "schedule_id": sid,
                "schedule": sched,
                "verdict": run.verdict,
                "steps": run.residuals.len(),
                "final_residual": run.final_residual(),
                "final_w_norm": run.w_norms.last(),
                "tail_slope": run.tail_slope,
                "max_iterate_norm": run.max_iterate_norm,
                "cross_check_gap": run.cross_check_gap,
                "diagnostic": run.diagnostic,
            })
        })
        .collect();
    let exit_code = if report.solver_failed() {
        EXIT_SOLVER
    } else {
        report.verdict.exit_code()
    };
    let mut summary = json!({
        "verdict": report.verdict,
        "max_residual": report.max_residual(),
        "runs": runs,
        "tolerances": { "accept": params.tol_accept, "reject": params.tol_reject, "solver": params.solver.tol },
        "note": "accept certifies membership for the listed schedules only",
    });
    if !extra.is_null() {
        summary["family"] = extra;
    }
    (vec![(format!("{}.csv", task.name()), csv)], exit_code, summary)
}

fn header_coords(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect::<Vec<_>>().join(",")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn my_eval(op: &OperatorSpec, lambdas: &[f64], points: &[Point], scenario: &Scenario) -> (Vec<(String, String)>, i32, Value) {
    let n = op.space().dim();
    let opts = scenario.tolerances.probe_params().solver;
    let mut csv = format!(
        "point_id,lambda,{},{},residual,iterations,status\n",
        header_coords("x", n),
        header_coords("value", n)
    );
    let mut failures = 0usize;
    let mut max_residual: f64 = 0.0;
    for (pid, x) in points.iter().enumerate() {
        for &lambda in lambdas {
            match moreau_yosida_solution(op, lambda, x, &opts) {
                Ok(sol) => {
                    max_residual = max_residual.max(sol.residual);
                    writeln!(
                        csv,
                        "{pid},{lambda},{},{},{},{},ok",
                        join(x),
                        join(&sol.t_star),
                        sol.residual,
                        sol.iterations
                    )
                    .expect("string write");
                }
                Err(e) => {
                    failures += 1;
                    let blanks = vec![""; n].join(",");
                    writeln!(csv, "{pid},{lambda},{},{blanks},,,failed", join(x)).expect("string write");
                    let _ = e;
                }
            }
        }
    }
    let exit_code = if failures > 0 { EXIT_SOLVER } else { 0 };
    let summary = json!({
        "verdict": Value::Null,
        "max_residual": max_residual,
        "evaluations": points.len() * lambdas.len(),
        "failures": failures,
    });
    (vec![("my_eval.csv".into(), csv)], exit_code, summary)
}

fn fitzpatrick(graph: &crate::operator::SampledGraph, pairs: &[(Point, Covector)]) -> (Vec<(String, String)>, i32, Value) {
    let n = graph.space().dim();
    let mut csv = format!(
        "pair_id,{},{},fitzpatrick,pairing,min_gap,representative\n",
        header_coords("x", n),
        header_coords("x_star", n)
    );
    let mut below = 0usize;
    for (pid, (x, xs)) in pairs.iter().enumerate() {
        let row = (|| -> Result<(f64, f64, f64)> {
            Ok((
                fitzpatrick_value(graph, x, xs)?,
                min_monotonicity_gap(graph, x, xs)?,
                representative_value(graph, x, xs)?,
            ))
        })();
        match row {
            Ok((phi, gap, h)) => {
                let pi = dot(x, xs);
                if phi <= pi {
                    below += 1;
                }
                writeln!(csv, "{pid},{},{},{phi},{pi},{gap},{h}", join(x), join(xs)).expect("string write");
            }
            Err(e) => return failure(Task::Fitzpatrick, &e),
        }
    }
    let summary = json!({
        "verdict": Value::Null,
        "pairs": pairs.len(),
        "monotonically_related": below,
        "graph_hash": graph_hash(graph),
        "graph_monotone": graph.is_monotone(),
    });
    (vec![("fitzpatrick.csv".into(), csv)], 0, summary)
}

fn certify(
    graph: &crate::operator::SampledGraph,
    grid: &crate::representability::GridSpec,
    tol: f64,
) -> (Vec<(String, String)>, i32, Value) {
    let report = match certify_representative(graph, grid, tol) {
        Ok(r) => r,
        Err(e @ Error::NonMonotoneGraph { .. }) => {
            let cert = json!({
                "status": CertificateStatus::Fail,
                "error": e.to_string(),
                "min_slack": Value::Null,
                "n_equality": 0,
                "n_violations": 0,
                "grid_spec": grid,
                "graph_hash": graph_hash(graph),
            });
            let summary = json!({ "verdict": "fail", "error": e.to_string() });
            return (vec![("certificate.json".into(), pretty(&cert))], 1, summary);
        }
        Err(e) => return failure(Task::Certify, &e),
    };
    let n = graph.space().dim();
    let mut csv = format!("{},{},slack,class\n", header_coords("x", n), header_coords("x_star", n));
    let eq: std::collections::HashSet<(Vec<u64>, Vec<u64>)> = report
        .equality_points
        .iter()
        .map(|e| (bits(&e.x), bits(&e.x_star)))
        .collect();
    // grid rows in grid order
    for (x, xs) in grid.points(n) {
        let key = (bits(&x), bits(&xs));
        let slack = representative_value(graph, &x, &xs).map(|h| h - dot(&x, &xs));
        let slack = match slack {
            Ok(s) => s,
            Err(e) => return failure(Task::Certify, &e),
        };
        let class = if eq.contains(&key) {
            "equality"
        } else if slack < -tol {
            "violation"
        } else if slack.is_finite() {
            "above"
        } else {
            "outside"
        };
        writeln!(csv, "{},{},{slack},{class}", join(&x), join(&xs)).expect("string write");
    }
    let cert = report.to_json(graph);
    let exit_code = match report.status {
        CertificateStatus::Pass => 0,
        CertificateStatus::Fail => 1,
    };
    let summary = json!({
        "verdict": report.status,
        "min_slack": if report.min_slack.is_finite() { json!(report.min_slack) } else { Value::Null },
        "graph_covered": report.graph_covered,
        "unmatched_samples": report.unmatched_samples.len(),
        "n_grid": report.n_grid,
    });
    (
        vec![("certify.csv".into(), csv), ("certificate.json".into(), pretty(&cert))],
        exit_code,
        summary,
    )
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Outcome of [`run_file`]: the exit code and, when the scenario was valid,
/// the artifacts that were written.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub artifacts: Option<Artifacts>,
    pub message: Option<String>,
}

/// Options the command line may override.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub tol_solver: Option<f64>,
    pub tol_accept: Option<f64>,
    pub tol_reject: Option<f64>,
    pub expect_task: Option<Task>,
}

/// Parse, validate, run and write a scenario. Nothing is written unless the
/// scenario validates.
pub fn run_file(path: &Path, overrides: &Overrides) -> RunOutcome {
    let fail = |code: i32, msg: String| RunOutcome {
        exit_code: code,
        artifacts: None,
        message: Some(msg),
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_SCHEMA, format!("cannot read {}: {e}", path.display())),
    };
    let mut scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_SCHEMA, e.to_string()),
    };
    if let Some(task) = overrides.expect_task {
        if scenario.task != task {
            return fail(
                EXIT_SCHEMA,
                format!("scenario task is {}, subcommand expects {}", scenario.task.name(), task.name()),
            );
        }
    }
    if let Some(out) = &overrides.out {
        scenario.out = Some(out.clone());
    }
    if let Some(seed) = overrides.seed {
        scenario.seed = seed;
    }
    if let Some(t) = overrides.tol_solver {
        scenario.tolerances.solver = t;
    }
    if let Some(t) = overrides.tol_accept {
        scenario.tolerances.accept = t;
    }
    if let Some(t) = overrides.tol_reject {
        scenario.tolerances.reject = t;
    }
    let plan = match scenario.plan() {
        Ok(p) => p,
        Err(e) => return fail(EXIT_SCHEMA, e.to_string()),
    };
    let out_dir = scenario.out.clone().unwrap_or_else(|| "out".into());
    let artifacts = execute(&scenario, &plan);
    if let Err(e) = artifacts.write_to(Path::new(&out_dir)) {
        return fail(EXIT_IO, format!("cannot write outputs to {out_dir}: {e}"));
    }
    RunOutcome {
        exit_code: artifacts.exit_code,
        artifacts: Some(artifacts),
        message: None,
    }
}

impl Verdict {
    /// Verdict parsed from its lowercase name.
    pub fn parse(s: &str) -> Option<Verdict> {
        match s {
            "accept" => Some(Verdict::Accept),
            "reject" => Some(Verdict::Reject),
            "inconclusive" => Some(Verdict::Inconclusive),
            _ => None,
        }
    }
}
