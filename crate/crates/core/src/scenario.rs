//! Declarative scenario files.
//!
//! A scenario is a JSON document naming a task, the ambient space, the
//! operators involved and the task's inputs. [`Scenario::plan`] validates
//! everything and builds the operators, so a scenario that plans
//! successfully can only fail at run time through the numerics.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::operator::{OperatorSpec, SampledGraph};
use crate::probe::{default_family, ProbeParams, Schedule, ScheduleKind};
use crate::representability::GridSpec;
use crate::resolvent::{SolverOptions, NESTED_TOL_RATIO};
use crate::space::{Covector, NormedSpace, Point, DEFAULT_TOL};
use crate::variational::LinearOp;
use crate::zoo;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    MyEval,
    Probe,
    Varsum,
    Varcomp,
    #[serde(alias = "fitz")]
    Fitzpatrick,
    Certify,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::MyEval => "my_eval",
            Task::Probe => "probe",
            Task::Varsum => "varsum",
            Task::Varcomp => "varcomp",
            Task::Fitzpatrick => "fitzpatrick",
            Task::Certify => "certify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub dim: usize,
    #[serde(default = "two")]
    pub p: f64,
}

fn two() -> f64 {
    2.0
}

/// Shift of `shifted_abs`: a vector, a scalar applied to every coordinate,
/// or an expression `c/n` or `c/n^k` in the sequence index `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shift {
    Vector(Vec<f64>),
    Scalar(f64),
    Expr(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorEntry {
    Abs {},
    ShiftedAbs { shift: Shift },
    IndicatorBall { center: Vec<f64>, radius: f64 },
    IndicatorBox { lo: Vec<f64>, hi: Vec<f64> },
    Linear { matrix: Vec<Vec<f64>> },
    Zero {},
    Identity {},
    Graph { pairs: Vec<PairSpec> },
    SignGraph { step: f64 },
    IdentityGraph { lo: f64, hi: f64, step: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub x: Vec<f64>,
    pub x_star: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    pub decay: f64,
    #[serde(default = "default_len")]
    pub n: usize,
}

fn default_len() -> usize {
    30
}

impl ScheduleSpec {
    pub fn to_schedule(&self) -> Result<Schedule, String> {
        let kind = match (self.eps0, self.lambda0, self.mu0) {
            (Some(eps0), None, None) => ScheduleKind::Eps { eps0 },
            (None, Some(lambda0), None) => ScheduleKind::Lambda { lambda0 },
            (None, Some(lambda0), Some(mu0)) => ScheduleKind::Pair { lambda0, mu0 },
            (None, None, Some(mu0)) => ScheduleKind::Pair { lambda0: 0.0, mu0 },
            _ => return Err("a schedule needs exactly one of eps0, lambda0, or lambda0/mu0".into()),
        };
        Schedule {
            kind,
            decay: self.decay,
            len: self.n,
        }
        .validated()
        .map_err(|e| e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_solver_tol")]
    pub solver: f64,
    #[serde(default = "default_accept")]
    pub accept: f64,
    #[serde(default = "default_reject")]
    pub reject: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_nested_ratio")]
    pub nested_ratio: f64,
}

fn default_solver_tol() -> f64 {
    DEFAULT_TOL
}
fn default_accept() -> f64 {
    1e-4
}
fn default_reject() -> f64 {
    1e-2
}
fn default_max_iter() -> usize {
    10_000
}
fn default_window() -> usize {
    5
}
fn default_nested_ratio() -> f64 {
    NESTED_TOL_RATIO
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solver: default_solver_tol(),
            accept: default_accept(),
            reject: default_reject(),
            max_iter: default_max_iter(),
            nested_ratio: default_nested_ratio(),
            window: default_window(),
        }
    }
}

impl Tolerances {
    pub fn probe_params(&self) -> ProbeParams {
        ProbeParams {
            tol_accept: self.accept,
            tol_reject: self.reject,
            window: self.window,
            solver: SolverOptions {
                tol: self.solver,
                max_iter: self.max_iter,
                nested_ratio: self.nested_ratio,
            },
        }
    }
}

/// `count` points drawn uniformly from `[lo, hi]^d` with the scenario seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub count: usize,
    #[serde(default = "neg_two")]
    pub lo: f64,
    #[serde(default = "pos_two")]
    pub hi: f64,
}

fn neg_two() -> f64 {
    -2.0
}
fn pos_two() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub task: Task,
    pub space: SpaceSpec,
    #[serde(default)]
    pub operators: BTreeMap<String, OperatorEntry>,
    /// Probe target `(x, x*)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<PairSpec>,
    /// Evaluation points for `my_eval`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    /// Evaluation pairs for `fitzpatrick`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    /// `A: Y → X` for `varcomp`, one row per coordinate of `X`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedules: Vec<ScheduleSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify_tol: Option<f64>,
}

/// A scenario that failed validation.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("invalid scenario: {0}")]
pub struct SchemaError(pub String);

fn schema<T>(msg: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError(msg.into()))
}

impl From<Error> for SchemaError {
    fn from(e: Error) -> Self {
        SchemaError(e.to_string())
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(text).map_err(|e| SchemaError(e.to_string()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("scenario serializes")
    }

    pub fn space(&self) -> Result<NormedSpace, SchemaError> {
        Ok(NormedSpace::new(self.space.dim, self.space.p)?)
    }

    fn operator(&self, name: &str) -> Result<&OperatorEntry, SchemaError> {
        match self.operators.get(name) {
            Some(e) => Ok(e),
            None => schema(format!("task {} needs operator \"{name}\"", self.task.name())),
        }
    }

    fn target(&self, space: &NormedSpace) -> Result<(Point, Covector), SchemaError> {
        let Some(p) = &self.point else {
            return schema(format!("task {} needs a point {{x, x_star}}", self.task.name()));
        };
        pair_from(space, p)
    }

    fn schedules(&self) -> Result<Vec<Schedule>, SchemaError> {
        if self.schedules.is_empty() {
            let kind = match self.task {
                Task::Varsum => ScheduleKind::Pair { lambda0: 1.0, mu0: 1.0 },
                Task::Varcomp => ScheduleKind::Lambda { lambda0: 1.0 },
                _ => ScheduleKind::Eps { eps0: 1.0 },
            };
            return Ok(default_family(kind, default_len()));
        }
        self.schedules
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_schedule().map_err(|e| SchemaError(format!("schedule {i}: {e}"))))
            .collect()
    }

    fn check_tolerances(&self) -> Result<(), SchemaError> {
        let t = &self.tolerances;
        for (name, v) in [("solver", t.solver), ("accept", t.accept), ("reject", t.reject)] {
            if !(v.is_finite() && v > 0.0) {
                return schema(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if t.accept >= t.reject {
            return schema("tolerance accept must be below reject");
        }
        if !(t.nested_ratio > 0.0 && t.nested_ratio <= 1.0) {
            return schema(format!("tolerance nested_ratio must lie in (0, 1], got {}", t.nested_ratio));
        }
        if t.max_iter == 0 || t.window == 0 {
            return schema("max_iter and window must be positive");
        }
        if let Some(tol) = self.certify_tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return schema(format!("certify_tol must be nonnegative, got {tol}"));
            }
        }
        Ok(())
    }

    fn random_points(&self, dim: usize, stream: u64) -> Result<Vec<Vec<f64>>, SchemaError> {
        let Some(r) = self.random else {
            return Ok(Vec::new());
        };
        if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
            return schema(format!("random range [{}, {}] is empty", r.lo, r.hi));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        Ok((0..r.count)
            .map(|_| (0..dim).map(|_| rng.random_range(r.lo..=r.hi)).collect())
            .collect())
    }

    /// Validate and build everything the task needs.
    pub fn plan(&self) -> Result<Plan, SchemaError> {
        self.check_tolerances()?;
        let space = self.space()?;
        let params = self.tolerances.probe_params();
        match self.task {
            Task::MyEval => {
                let op = build_operator(self.operator("T")?, &space, None)?;
                let lambdas = if self.lambdas.is_empty() { vec![1.0] } else { self.lambdas.clone() };
                if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
                    return schema(format!("lambda must be positive, got {l}"));
                }
                let mut points = Vec::new();
                for p in self.points.iter().cloned().chain(self.random_points(space.dim(), 0)?) {
                    space.check(&p)?;
                    points.push(Point(p));
                }
                if points.is_empty() {
                    return schema("my_eval needs points or random points");
                }
                Ok(Plan::MyEval { op, lambdas, points })
            }
            Task::Probe => {
                let entry = self.operator("T")?.clone();
                let schedules = self.schedules()?;
                if schedules.iter().any(Schedule::is_pair) {
                    return schema("probe schedules take eps0 or lambda0, not pairs");
                }
                let family = Family { entry, space };
                for s in &schedules {
                    family.build(1)?;
                    family.build(s.len)?;
                }
                let (x, x_star) = self.target(&space)?;
                Ok(Plan::Probe {
                    family,
                    x,
                    x_star,
                    schedules,
                    params,
                })
            }
            Task::Varsum => {
                let t1 = build_operator(self.operator("T1")?, &space, None)?;
                let t2 = build_operator(self.operator("T2")?, &space, None)?;
                let schedules = self.schedules()?;
                if !schedules.iter().all(Schedule::is_pair) {
                    return schema("varsum schedules take lambda0 and mu0");
                }
                let (x, x_star) = self.target(&space)?;
                Ok(Plan::Varsum {
                    t1,
                    t2,
                    x,
                    x_star,
                    schedules,
                    params,
                })
            }
            Task::Varcomp => {
                let t = build_operator(self.operator("T")?, &space, None)?;
                let Some(rows) = &self.matrix else {
                    return schema("varcomp needs matrix A");
                };
                let a = LinearOp::from_rows(rows)?;
                if a.dim_x() != space.dim() {
                    return schema(format!("matrix has {} rows, space has dimension {}", a.dim_x(), space.dim()));
                }
                let y_space = NormedSpace::new(a.dim_y(), space.p())?;
                let (y, y_star) = self.target(&y_space)?;
                let schedules = self.schedules()?;
                if schedules.iter().any(Schedule::is_pair) {
                    return schema("varcomp schedules take eps0 or lambda0, not pairs");
                }
                Ok(Plan::Varcomp {
                    t,
                    a,
                    y,
                    y_star,
                    schedules,
                    params,
                    cross_check: self.cross_check.unwrap_or(true),
                })
            }
            Task::Fitzpatrick => {
                let graph = build_graph(self.operator("G")?, &space)?;
                let mut pairs = Vec::new();
                for p in &self.pairs {
                    pairs.push(pair_from(&space, p)?);
                }
                let random = self.random_points(2 * space.dim(), 1)?;
                for mut v in random {
                    let xs = v.split_off(space.dim());
                    pairs.push((Point(v), Covector(xs)));
                }
                if pairs.is_empty() {
                    return schema("fitzpatrick needs pairs or random points");
                }
                Ok(Plan::Fitzpatrick { graph, pairs })
            }
            Task::Certify => {
                let graph = build_graph(self.operator("G")?, &space)?;
                let grid = self.grid.unwrap_or_default();
                grid.validate()?;
                let cells = ((grid.hi - grid.lo) / grid.step).round() + 1.0;
                if cells.powi(2 * space.dim() as i32) > 1e7 {
                    return schema("grid has more than 10^7 points");
                }
                Ok(Plan::Certify {
                    graph,
                    grid,
                    tol: self.certify_tol.unwrap_or(DEFAULT_TOL),
                })
            }
        }
    }
}

fn pair_from(space: &NormedSpace, p: &PairSpec) -> Result<(Point, Covector), SchemaError> {
    space.check(&p.x)?;
    space.check(&p.x_star)?;
    Ok((Point(p.x.clone()), Covector(p.x_star.clone())))
}

/// Operator family `n ↦ T_n` from a scenario entry; constant unless the
/// entry depends on `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub entry: OperatorEntry,
    pub space: NormedSpace,
}

impl Family {
    pub fn build(&self, n: usize) -> Result<OperatorSpec, SchemaError> {
        build_operator(&self.entry, &self.space, Some(n))
    }

    pub fn is_constant(&self) -> bool {
        !matches!(&self.entry, OperatorEntry::ShiftedAbs { shift: Shift::Expr(_) })
    }
}

/// Evaluate `c/n` or `c/n^k`.
fn eval_shift(expr: &str, n: usize) -> Result<f64, SchemaError> {
    let bad = || SchemaError(format!("shift expression \"{expr}\" is not of the form c/n or c/n^k"));
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let (num, rest) = compact.split_once("/n").ok_or_else(bad)?;
    let c: f64 = if num.is_empty() { 1.0 } else { num.parse().map_err(|_| bad())? };
    let k: f64 = match rest.strip_prefix('^') {
        Some(k) => k.parse().map_err(|_| bad())?,
        None if rest.is_empty() => 1.0,
        None => return Err(bad()),
    };
    if !(c.is_finite() && k.is_finite() && k > 0.0) {
        return Err(bad());
    }
    Ok(c / (n as f64).powf(k))
}

fn build_operator(entry: &OperatorEntry, space: &NormedSpace, n: Option<usize>) -> Result<OperatorSpec, SchemaError> {
    let dim = space.dim();
    let op = match entry {
        OperatorEntry::Abs {} => zoo::abs(*space),
        OperatorEntry::ShiftedAbs { shift } => {
            let c = match shift {
                Shift::Vector(v) => {
                    space.check(v)?;
                    v.clone()
                }
                Shift::Scalar(s) => vec![*s; dim],
                Shift::Expr(e) => vec![eval_shift(e, n.unwrap_or(1))?; dim],
            };
            if c.iter().any(|v| !v.is_finite()) {
                return schema("shift must be finite");
            }
            zoo::shifted_abs(*space, c)
        }
        OperatorEntry::IndicatorBall { center, radius } => zoo::indicator_ball(*space, center.clone(), *radius)?,
        OperatorEntry::IndicatorBox { lo, hi } => zoo::indicator_box(*space, lo.clone(), hi.clone())?,
        OperatorEntry::Linear { matrix } => {
            if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                return schema(format!("linear operator needs a {dim}x{dim} matrix"));
            }
            if matrix.iter().flatten().any(|v| !v.is_finite()) {
                return schema("matrix entries must be finite");
            }
            zoo::linear(*space, DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]))?
        }
        OperatorEntry::Zero {} => zoo::zero(*space),
        OperatorEntry::Identity {} => zoo::identity(*space),
        OperatorEntry::Graph { .. } | OperatorEntry::SignGraph { .. } | OperatorEntry::IdentityGraph { .. } => {
            OperatorSpec::graph("graph", build_graph(entry, space)?)
        }
    };
    Ok(op)
}

fn build_graph(entry: &OperatorEntry, space: &NormedSpace) -> Result<SampledGraph, SchemaError> {
    let check_step = |lo: f64, hi: f64, step: f64| {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && step.is_finite() && step > 0.0) {
            return schema(format!("sample grid [{lo}, {hi}] with step {step} is invalid"));
        }
        if (hi - lo) / step > 1e6 {
            return schema("sample grid is too fine");
        }
        Ok(())
    };
    let one_d = || {
        if space.dim() != 1 {
            return schema("sampled sign and identity graphs live on the real line (dim 1)");
        }
        Ok(())
    };
    match entry {
        OperatorEntry::Graph { pairs } => {
            let mut out = Vec::with_capacity(pairs.len());
            for p in pairs {
                out.push(pair_from(space, p)?);
            }
            Ok(SampledGraph::new(*space, out)?)
        }
        OperatorEntry::SignGraph { step } => {
            one_d()?;
            check_step(-2.0, 2.0, *step)?;
            Ok(zoo::sign_graph_samples(*step))
        }
        OperatorEntry::IdentityGraph { lo, hi, step } => {
            one_d()?;
            check_step(*lo, *hi, *step)?;
            Ok(zoo::identity_graph_samples(*lo, *hi, *step))
        }
        _ => schema("operator \"G\" must be a graph, sign_graph or identity_graph"),
    }
}

/// A validated scenario, ready to run.
pub enum Plan {
    MyEval {
        op: OperatorSpec,
        lambdas: Vec<f64>,
        points: Vec<Point>,
    },
    Probe {
        family: Family,
        x: Point,
        x_star: Covector,
        schedules: Vec<Schedule>,
        params: ProbeParams,
    },
    Varsum {
        t1: OperatorSpec,
        t2: OperatorSpec,
        x: Point,
        x_star: Covector,
        schedules: Vec<Schedule>,
        params: ProbeParams,
    },
    Varcomp {
        t: OperatorSpec,
        a: LinearOp,
        y: Point,
        y_star: Covector,
        schedules: Vec<Schedule>,
        params: ProbeParams,
        cross_check: bool,
    },
    Fitzpatrick {
        graph: SampledGraph,
        pairs: Vec<(Point, Covector)>,
    },
    Certify {
        graph: SampledGraph,
        grid: GridSpec,
        tol: f64,
    },
}
