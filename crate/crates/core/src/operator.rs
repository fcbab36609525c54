//! Monotone operators `T: X ⇉ X*`, sampled graphs, and the finite-sample
//! monotonicity diagnostics (monotone polar, NI gap).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sets::{Interval, Polyhedron, SetDescription};
use crate::space::{dot, norm2, sub, Covector, NormedSpace, Point};

/// Points within this distance of a set boundary are treated as boundary
/// points when classifying `T(x)` for normal cones and subdifferentials.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Tolerance for declaring a sampled graph monotone.
pub const GRAPH_MONOTONE_TOL: f64 = 1e-10;

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `(v, t) ↦ prox_{t f}(v)` in the Euclidean metric.
pub type ProxFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
pub type ProxJacobianFn = Arc<dyn Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync>;
pub type SubdiffFn = Arc<dyn Fn(&[f64]) -> SetDescription + Send + Sync>;
pub type MapFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;

/// `∂f` for a proper lsc convex `f`, given through oracles.
#[derive(Clone)]
pub struct SubdiffOracle {
    pub value: ValueFn,
    pub prox: ProxFn,
    pub prox_jacobian: Option<ProxJacobianFn>,
    /// Exact `∂f(x)` when the structure is known.
    pub subdifferential: Option<SubdiffFn>,
    /// A selection `x ↦ ξ ∈ ∂f(x)`.
    pub selection: Option<MapFn>,
}

/// A continuous monotone map `X → X*`.
#[derive(Clone)]
pub struct SingleValuedMap {
    pub map: MapFn,
    pub jacobian: Option<JacobianFn>,
}

/// `x ↦ Mx` with `M + Mᵀ ⪰ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let min_eigenvalue = sym.symmetric_eigenvalues().min();
        let scale = 1.0_f64.max(matrix.amax());
        if min_eigenvalue < -1e-10 * scale {
            return Err(Error::NotMonotoneLinear { min_eigenvalue });
        }
        Ok(LinearMap { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|i| (0..x.len()).map(|j| self.matrix[(i, j)] * x[j]).sum())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    /// Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ConvexSet {
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            ConvexSet::Ball { center, radius } => {
                let d = sub(v, center);
                let n = norm2(&d);
                if n <= *radius {
                    v.to_vec()
                } else {
                    center
                        .iter()
                        .zip(&d)
                        .map(|(c, di)| c + di * (radius / n))
                        .collect()
                }
            }
            ConvexSet::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| x.max(*l).min(*h))
                .collect(),
        }
    }

    pub fn projection_jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let n = v.len();
        match self {
            ConvexSet::Ball { center, radius } => {
                let d = sub(v, center);
                let nd = norm2(&d);
                if nd <= *radius {
                    DMatrix::identity(n, n)
                } else {
                    // (r/‖d‖)(I − d dᵀ/‖d‖²)
                    let s = radius / nd;
                    DMatrix::from_fn(n, n, |i, j| {
                        let id = if i == j { 1.0 } else { 0.0 };
                        s * (id - d[i] * d[j] / (nd * nd))
                    })
                }
            }
            ConvexSet::Box { lo, hi } => DMatrix::from_fn(n, n, |i, j| {
                if i == j && v[i] > lo[i] && v[i] < hi[i] {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConvexSet::Ball { center, radius } => norm2(&sub(x, center)) <= radius + tol,
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
        }
    }

    /// `N_C(x)`; empty outside `C`.
    pub fn normal_cone(&self, x: &[f64]) -> SetDescription {
        let n = x.len();
        match self {
            ConvexSet::Ball { center, radius } => {
                let d = sub(x, center);
                let nd = norm2(&d);
                let tol = BOUNDARY_TOL * radius.max(1.0);
                if nd > radius + tol {
                    SetDescription::Empty
                } else if nd < radius - tol {
                    SetDescription::Singleton(Covector::zeros(n))
                } else {
                    SetDescription::Polyhedron(Polyhedron {
                        points: vec![Covector::zeros(n)],
                        rays: vec![Covector(d)],
                        lines: vec![],
                    })
                }
            }
            ConvexSet::Box { lo, hi } => {
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let tol = BOUNDARY_TOL * (1.0 + lo[i].abs().max(hi[i].abs()));
                    let at_lo = (x[i] - lo[i]).abs() <= tol;
                    let at_hi = (x[i] - hi[i]).abs() <= tol;
                    let iv = if x[i] < lo[i] - tol || x[i] > hi[i] + tol {
                        return SetDescription::Empty;
                    } else if at_lo && at_hi {
                        Interval::real_line()
                    } else if at_hi {
                        Interval::new(0.0, f64::INFINITY)
                    } else if at_lo {
                        Interval::new(f64::NEG_INFINITY, 0.0)
                    } else {
                        Interval::point(0.0)
                    };
                    out.push(iv);
                }
                SetDescription::Boxed(out)
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ConvexSet::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: center.len(),
                    });
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::InvalidSet(format!("ball radius {radius} must be finite and nonnegative")));
                }
            }
            ConvexSet::Box { lo, hi } => {
                for v in [lo, hi] {
                    if v.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: v.len(),
                        });
                    }
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || l.is_nan()) {
                    return Err(Error::InvalidSet("box has lo > hi in some coordinate".into()));
                }
            }
        }
        Ok(())
    }
}

/// A finite list of graph pairs `(x, x*)` in a fixed space.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledGraph {
    space: NormedSpace,
    pairs: Vec<(Point, Covector)>,
    monotone: bool,
}

impl SampledGraph {
    pub fn new(space: NormedSpace, pairs: Vec<(Point, Covector)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyGraph);
        }
        for (x, xs) in &pairs {
            space.check(x)?;
            space.check(xs)?;
        }
        let mut g = SampledGraph {
            space,
            pairs,
            monotone: false,
        };
        g.monotone = g.first_violation(GRAPH_MONOTONE_TOL).is_none();
        Ok(g)
    }

    pub fn space(&self) -> &NormedSpace {
        &self.space
    }

    pub fn pairs(&self) -> &[(Point, Covector)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Monotone up to [`GRAPH_MONOTONE_TOL`], checked at construction.
    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Graph of `T⁻¹`, with the roles of the two factors swapped.
    pub fn inverse(&self) -> SampledGraph {
        SampledGraph {
            space: self.space,
            pairs: self
                .pairs
                .iter()
                .map(|(x, xs)| (Point(xs.0.clone()), Covector(x.0.clone())))
                .collect(),
            monotone: self.monotone,
        }
    }

    /// First pair `(i, j)` with `⟨xᵢ − xⱼ, xᵢ* − xⱼ*⟩ < −tol`.
    pub fn first_violation(&self, tol: f64) -> Option<(usize, usize, f64)> {
        for i in 0..self.pairs.len() {
            for j in (i + 1)..self.pairs.len() {
                let (a, as_) = &self.pairs[i];
                let (b, bs) = &self.pairs[j];
                let prod = monotone_product(a, as_, b, bs);
                if prod < -tol {
                    return Some((i, j, prod));
                }
            }
        }
        None
    }
}

pub(crate) fn monotone_product(x: &[f64], xs: &[f64], y: &[f64], ys: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(xs.iter().zip(ys))
        .map(|((a, b), (c, d))| (a - b) * (c - d))
        .sum()
}

#[derive(Clone)]
pub enum OperatorKind {
    Subdiff(SubdiffOracle),
    SingleValued(SingleValuedMap),
    Linear(LinearMap),
    NormalCone(ConvexSet),
    Graph(SampledGraph),
}

/// A monotone operator on a normed space, with a label used in diagnostics.
#[derive(Clone)]
pub struct OperatorSpec {
    space: NormedSpace,
    kind: OperatorKind,
    label: String,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            OperatorKind::Subdiff(_) => "subdiff",
            OperatorKind::SingleValued(_) => "single_valued",
            OperatorKind::Linear(_) => "linear",
            OperatorKind::NormalCone(_) => "normal_cone",
            OperatorKind::Graph(_) => "graph",
        };
        f.debug_struct("OperatorSpec")
            .field("label", &self.label)
            .field("kind", &kind)
            .field("space", &self.space)
            .finish()
    }
}

impl OperatorSpec {
    pub fn subdifferential(space: NormedSpace, label: impl Into<String>, oracle: SubdiffOracle) -> Self {
        OperatorSpec {
            space,
            kind: OperatorKind::Subdiff(oracle),
            label: label.into(),
        }
    }

    pub fn single_valued(space: NormedSpace, label: impl Into<String>, map: SingleValuedMap) -> Self {
        OperatorSpec {
            space,
            kind: OperatorKind::SingleValued(map),
            label: label.into(),
        }
    }

    pub fn linear(space: NormedSpace, label: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: matrix.nrows(),
            });
        }
        Ok(OperatorSpec {
            space,
            kind: OperatorKind::Linear(LinearMap::new(matrix)?),
            label: label.into(),
        })
    }

    pub fn normal_cone(space: NormedSpace, label: impl Into<String>, set: ConvexSet) -> Result<Self> {
        set.validate(space.dim())?;
        Ok(OperatorSpec {
            space,
            kind: OperatorKind::NormalCone(set),
            label: label.into(),
        })
    }

    pub fn graph(label: impl Into<String>, graph: SampledGraph) -> Self {
        OperatorSpec {
            space: *graph.space(),
            kind: OperatorKind::Graph(graph),
            label: label.into(),
        }
    }

    pub fn space(&self) -> &NormedSpace {
        &self.space
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `T(x)` as a set description. Points outside `Dom(T)` give the empty set.
    pub fn eval(&self, x: &Point) -> Result<SetDescription> {
        self.eval_raw(x)
    }

    pub(crate) fn eval_raw(&self, x: &[f64]) -> Result<SetDescription> {
        self.space.check(x)?;
        Ok(match &self.kind {
            OperatorKind::Subdiff(o) => {
                if let Some(sd) = &o.subdifferential {
                    sd(x)
                } else if !(o.value)(x).is_finite() {
                    SetDescription::Empty
                } else if let Some(sel) = &o.selection {
                    SetDescription::Singleton(Covector(sel(x)?))
                } else {
                    SetDescription::Singleton(Covector(fd_gradient(&o.value, x)))
                }
            }
            OperatorKind::SingleValued(m) => SetDescription::Singleton(Covector((m.map)(x)?)),
            OperatorKind::Linear(l) => SetDescription::Singleton(Covector(l.apply(x))),
            OperatorKind::NormalCone(c) => c.normal_cone(x),
            OperatorKind::Graph(g) => {
                let hits: Vec<Covector> = g
                    .pairs()
                    .iter()
                    .filter(|(p, _)| norm2(&sub(p, x)) <= BOUNDARY_TOL * (1.0 + norm2(x)))
                    .map(|(_, c)| c.clone())
                    .collect();
                if hits.is_empty() {
                    SetDescription::Empty
                } else {
                    SetDescription::Finite(hits)
                }
            }
        })
    }

    /// Some element of `T(x)`, if any.
    pub fn select(&self, x: &Point) -> Result<Option<Covector>> {
        Ok(self.eval(x)?.select())
    }

    /// Single-valued operators evaluated directly, without building a set.
    pub(crate) fn apply_single(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        match &self.kind {
            OperatorKind::SingleValued(m) => Some((m.map)(x)),
            OperatorKind::Linear(l) => Some(Ok(l.apply(x))),
            _ => None,
        }
    }

    /// Jacobian of a single-valued operator, when available in closed form.
    pub(crate) fn jacobian(&self, x: &[f64]) -> Option<Result<DMatrix<f64>>> {
        match &self.kind {
            OperatorKind::SingleValued(m) => m.jacobian.as_ref().map(|j| j(x)),
            OperatorKind::Linear(l) => Some(Ok(l.matrix().clone())),
            _ => None,
        }
    }

    /// Euclidean `prox_{t f}` when `T = ∂f` with a prox oracle (normal cones included).
    pub(crate) fn prox(&self, v: &[f64], t: f64) -> Option<Vec<f64>> {
        match &self.kind {
            OperatorKind::Subdiff(o) => Some((o.prox)(v, t)),
            OperatorKind::NormalCone(c) => Some(c.project(v)),
            _ => None,
        }
    }

    pub(crate) fn prox_jacobian(&self, v: &[f64], t: f64) -> Option<DMatrix<f64>> {
        match &self.kind {
            OperatorKind::Subdiff(o) => o.prox_jacobian.as_ref().map(|j| j(v, t)),
            OperatorKind::NormalCone(c) => Some(c.projection_jacobian(v)),
            _ => None,
        }
    }

    /// Value of the convex potential `f` with `T = ∂f`, when one exists.
    pub(crate) fn potential(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            OperatorKind::Subdiff(o) => Some((o.value)(x)),
            OperatorKind::NormalCone(c) => Some(if c.contains(x, BOUNDARY_TOL) { 0.0 } else { f64::INFINITY }),
            _ => None,
        }
    }
}

fn fd_gradient(f: &ValueFn, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        g[i] = (f(&a) - f(&b)) / (2.0 * h);
    }
    g
}

/// `min_{(y,y*) ∈ G} ⟨x − y, x* − y*⟩` for `z = (x, x*)`.
///
/// Nonnegative iff `z` lies in the monotone polar of the samples; the value
/// is also the finite-sample NI gap at `z`. Restricting to samples can only
/// raise the infimum, so this over-approximates the true polar.
pub fn min_monotonicity_gap(graph: &SampledGraph, x: &Point, x_star: &Covector) -> Result<f64> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    graph.space().check(x)?;
    graph.space().check(x_star)?;
    Ok(graph
        .pairs()
        .iter()
        .map(|(y, ys)| monotone_product(x, x_star, y, ys))
        .fold(f64::INFINITY, f64::min))
}

/// Brute-force `O(|G|²)` check that all pairwise products are `≥ −tol`.
pub fn is_monotone_graph(graph: &SampledGraph, tol: f64) -> bool {
    graph.first_violation(tol).is_none()
}

/// Duality product `π(x, x*)`.
pub fn duality_product(x: &[f64], x_star: &[f64]) -> f64 {
    dot(x, x_star)
}
