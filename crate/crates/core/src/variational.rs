//! Variational sums and compositions, and the product-space lift that turns
//! a composition `A*TA` into a sum on `Y × X`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operator::{JacobianFn, OperatorKind, OperatorSpec, SingleValuedMap};
use crate::probe::{liminf_probe, liminf_probe_with, run_family, FamilyReport, ProbeParams, Schedule, StepHook};
use crate::resolvent::{moreau_yosida, nested_options, yosida_operator, SolverOptions};
use crate::sets::{Polyhedron, SetDescription};
use crate::space::{add, norm_inf, sub, Covector, NormedSpace, Point};

/// Linear map `A: Y → X` stored as an `dim X × dim Y` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOp {
    matrix: DMatrix<f64>,
}

impl LinearOp {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::ZeroDimension);
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(f64::NAN));
        }
        Ok(LinearOp { matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim_x(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(y)).iter().copied().collect()
    }

    pub fn adjoint(&self, x_star: &[f64]) -> Vec<f64> {
        (self.matrix.transpose() * DVector::from_column_slice(x_star))
            .iter()
            .copied()
            .collect()
    }

    fn check(&self, y: &[f64], x: Option<&[f64]>) -> Result<()> {
        if y.len() != self.dim_y() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_y(),
                got: y.len(),
            });
        }
        if let Some(x) = x {
            if x.len() != self.dim_x() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim_x(),
                    got: x.len(),
                });
            }
        }
        Ok(())
    }
}

/// `T_λ(x)` for `λ > 0`, or the single value of `T(x)` for `λ = 0`.
fn regularized_term(op: &OperatorSpec, lambda: f64, x: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    if lambda > 0.0 {
        return Ok(moreau_yosida(op, lambda, &Point(x.to_vec()), opts)?.0);
    }
    if let Some(v) = op.apply_single(x) {
        return v;
    }
    op.eval(&Point(x.to_vec()))?
        .as_singleton()
        .map(Covector::into_inner)
        .ok_or_else(|| Error::MultivaluedEndpoint {
            operator: op.label().to_string(),
        })
}

fn check_pair(lambda: f64, mu: f64) -> Result<()> {
    for v in [lambda, mu] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(v));
        }
    }
    Ok(())
}

fn check_same_space(t1: &OperatorSpec, t2: &OperatorSpec) -> Result<NormedSpace> {
    let (s1, s2) = (*t1.space(), *t2.space());
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch {
            expected: s1.dim(),
            got: s2.dim(),
        });
    }
    if s1.p() != s2.p() {
        return Err(Error::InvalidExponent(s2.p()));
    }
    Ok(s1)
}

/// `T_{1,λ}(x) + T_{2,μ}(x)`, with `T_0 = T` where `T` is single-valued.
pub fn regularized_sum_eval(
    t1: &OperatorSpec,
    t2: &OperatorSpec,
    lambda: f64,
    mu: f64,
    x: &Point,
    opts: &SolverOptions,
) -> Result<Covector> {
    check_pair(lambda, mu)?;
    let space = check_same_space(t1, t2)?;
    space.check(x)?;
    let a = regularized_term(t1, lambda, x, opts)?;
    let b = regularized_term(t2, mu, x, opts)?;
    Ok(Covector(add(&a, &b)))
}

fn term_jacobian(op: &OperatorSpec, lambda: f64, opts: &SolverOptions) -> Result<Option<JacobianFn>> {
    let inner = if lambda > 0.0 {
        yosida_operator(op, lambda, opts)?
    } else {
        op.clone()
    };
    if !matches!(inner.kind(), OperatorKind::SingleValued(_) | OperatorKind::Linear(_)) {
        return Ok(None);
    }
    let probe = vec![0.0; op.space().dim()];
    if inner.jacobian(&probe).is_none() {
        return Ok(None);
    }
    Ok(Some(Arc::new(move |x: &[f64]| inner.jacobian(x).expect("checked above"))))
}

/// `T_{1,λ} + T_{2,μ}` as a single-valued operator.
pub fn regularized_sum_operator(
    t1: &OperatorSpec,
    t2: &OperatorSpec,
    lambda: f64,
    mu: f64,
    opts: &SolverOptions,
) -> Result<OperatorSpec> {
    check_pair(lambda, mu)?;
    let space = check_same_space(t1, t2)?;
    let (a, b) = (t1.clone(), t2.clone());
    let o = nested_options(opts);
    let map = Arc::new(move |x: &[f64]| -> Result<Vec<f64>> {
        Ok(add(&regularized_term(&a, lambda, x, &o)?, &regularized_term(&b, mu, x, &o)?))
    });
    let jacobian: Option<JacobianFn> = match (term_jacobian(t1, lambda, opts)?, term_jacobian(t2, mu, opts)?) {
        (Some(ja), Some(jb)) => Some(Arc::new(move |x: &[f64]| Ok(ja(x)? + jb(x)?))),
        _ => None,
    };
    Ok(OperatorSpec::single_valued(
        space,
        format!("{}[{lambda}] + {}[{mu}]", t1.label(), t2.label()),
        SingleValuedMap { map, jacobian },
    ))
}

/// Pointwise Minkowski sum `T1(x) + T2(x)`.
pub fn pointwise_sum(t1: &OperatorSpec, t2: &OperatorSpec, x: &Point) -> Result<SetDescription> {
    check_same_space(t1, t2)?;
    Ok(t1.eval(x)?.minkowski_sum(&t2.eval(x)?))
}

fn require_schedules(fam: &[Schedule], pair: bool) -> Result<()> {
    if fam.is_empty() {
        return Err(Error::InvalidSchedule("schedule family is empty".into()));
    }
    for s in fam {
        s.validate()?;
        if s.is_pair() != pair {
            let want = if pair { "pair (lambda0, mu0)" } else { "eps0 or lambda0" };
            return Err(Error::InvalidSchedule(format!("expected {want} schedules")));
        }
    }
    Ok(())
}

/// Probe `(x, x*) ∈ T1 +_v T2` over a finite family of pair schedules.
///
/// The variational sum intersects over all admissible schedules, so an accept
/// here only certifies membership in the superset cut out by the given family.
pub fn variational_sum_probe(
    t1: &OperatorSpec,
    t2: &OperatorSpec,
    x: &Point,
    x_star: &Covector,
    fam: &[Schedule],
    params: &ProbeParams,
) -> Result<FamilyReport> {
    let space = check_same_space(t1, t2)?;
    space.check(x)?;
    space.check(x_star)?;
    require_schedules(fam, true)?;
    Ok(run_family(fam, |sched| {
        let family = |n: usize| {
            let (l, m) = sched.pair_at(n);
            regularized_sum_operator(t1, t2, l, m, &params.solver)
        };
        liminf_probe(family, x, x_star, sched, params)
    }))
}

/// `A*TA` on `Y`, with `Y` carrying the same exponent as the space of `T`.
pub fn composition_operator(op: &OperatorSpec, a: &LinearOp) -> Result<OperatorSpec> {
    let space = op.space();
    if space.dim() != a.dim_x() {
        return Err(Error::DimensionMismatch {
            expected: a.dim_x(),
            got: space.dim(),
        });
    }
    if !matches!(op.kind(), OperatorKind::SingleValued(_) | OperatorKind::Linear(_)) {
        return Err(Error::Unsupported {
            operator: op.label().to_string(),
            what: "composition of a multivalued operator (regularize it first)",
        });
    }
    let y_space = NormedSpace::new(a.dim_y(), space.p())?;
    let (t, am) = (op.clone(), a.clone());
    let map = Arc::new(move |y: &[f64]| -> Result<Vec<f64>> {
        let tx = t.apply_single(&am.apply(y)).expect("single-valued")?;
        Ok(am.adjoint(&tx))
    });
    let probe = vec![0.0; space.dim()];
    let jacobian: Option<JacobianFn> = if op.jacobian(&probe).is_some() {
        let (t, am) = (op.clone(), a.clone());
        Some(Arc::new(move |y: &[f64]| {
            let m = am.matrix();
            let inner = t.jacobian(&am.apply(y)).expect("checked above")?;
            Ok(m.transpose() * inner * m)
        }))
    } else {
        None
    };
    Ok(OperatorSpec::single_valued(
        y_space,
        format!("A*{}A", op.label()),
        SingleValuedMap { map, jacobian },
    ))
}

/// `A*T_λA` as a single-valued operator on `Y`.
pub fn regularized_composition(op: &OperatorSpec, a: &LinearOp, lambda: f64, opts: &SolverOptions) -> Result<OperatorSpec> {
    composition_operator(&yosida_operator(op, lambda, opts)?, a)
}

/// `(T^# + N_A)(y, x)` in `Y* × X*`, where `T^#(y, x) = {0} × T(x)` and
/// `N_A` is the normal cone to `graph A`. Coordinates are ordered `(y*, x*)`.
pub fn lift_eval(op: &OperatorSpec, a: &LinearOp, y: &Point, x: &Point) -> Result<SetDescription> {
    a.check(y, Some(x))?;
    op.space().check(x)?;
    let (m, n) = (a.dim_y(), a.dim_x());
    let ay = a.apply(y);
    if norm_inf(&sub(x, &ay)) > 1e-12 * (1.0 + norm_inf(x)) {
        return Ok(SetDescription::Empty);
    }
    let Some(base) = op.eval(x)?.to_polyhedron() else {
        return Ok(SetDescription::Empty);
    };
    let embed = |v: &Covector| {
        let mut e = vec![0.0; m];
        e.extend_from_slice(v);
        Covector(e)
    };
    let mut lines: Vec<Covector> = base.lines.iter().map(embed).collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let mut l = a.adjoint(&e);
        l.extend(e.iter().map(|v| -v));
        lines.push(Covector(l));
    }
    Ok(SetDescription::Polyhedron(Polyhedron {
        points: base.points.iter().map(embed).collect(),
        rays: base.rays.iter().map(embed).collect(),
        lines,
    }))
}

/// Euclidean distance from `(y*, 0)` to `(T^# + N_A)(y, Ay)`; zero exactly
/// when `y* ∈ A*TA(y)`.
pub fn lift_distance(op: &OperatorSpec, a: &LinearOp, y: &Point, y_star: &Covector) -> Result<f64> {
    a.check(y, None)?;
    if y_star.dim() != a.dim_y() {
        return Err(Error::DimensionMismatch {
            expected: a.dim_y(),
            got: y_star.dim(),
        });
    }
    let x = Point(a.apply(y));
    let set = lift_eval(op, a, y, &x)?;
    let mut target = y_star.0.clone();
    target.extend(std::iter::repeat_n(0.0, a.dim_x()));
    Ok(set.distance(&target))
}

/// The `y*` with `(y*, 0) ∈ (T^# + N_A)(y, Ay)` when `T(Ay)` is a single point.
pub fn lift_extract(op: &OperatorSpec, a: &LinearOp, y: &Point) -> Result<Covector> {
    let x = Point(a.apply(y));
    let SetDescription::Polyhedron(poly) = lift_eval(op, a, y, &x)? else {
        return Err(Error::MultivaluedEndpoint {
            operator: op.label().to_string(),
        });
    };
    if poly.points.len() != 1 || !poly.rays.is_empty() || poly.lines.len() != a.dim_x() {
        return Err(Error::MultivaluedEndpoint {
            operator: op.label().to_string(),
        });
    }
    let (m, n, k) = (a.dim_y(), a.dim_x(), poly.lines.len());
    let p = &poly.points[0];
    let lx = DMatrix::from_fn(n, k, |i, j| poly.lines[j][m + i]);
    let ly = DMatrix::from_fn(m, k, |i, j| poly.lines[j][i]);
    let rhs = -DVector::from_column_slice(&p[m..]);
    let coef = lx
        .svd(true, true)
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::LinearProgram(e.to_string()))?;
    let ys = DVector::from_column_slice(&p[..m]) + ly * coef;
    Ok(Covector(ys.iter().copied().collect()))
}

/// Probe `(y, y*) ∈ (A*TA)_v` over a finite family of `λ` schedules.
///
/// With `cross_check` set, every step also recomputes `A*T_λA(y_n)` through
/// [`lift_extract`] and records the largest disagreement.
pub fn variational_composition_probe(
    op: &OperatorSpec,
    a: &LinearOp,
    y: &Point,
    y_star: &Covector,
    fam: &[Schedule],
    params: &ProbeParams,
    cross_check: bool,
) -> Result<FamilyReport> {
    let y_space = NormedSpace::new(a.dim_y(), op.space().p())?;
    y_space.check(y)?;
    y_space.check(y_star)?;
    if op.space().dim() != a.dim_x() {
        return Err(Error::DimensionMismatch {
            expected: a.dim_x(),
            got: op.space().dim(),
        });
    }
    require_schedules(fam, false)?;
    Ok(run_family(fam, |sched| {
        let family = |n: usize| regularized_composition(op, a, sched.pair_at(n).0, &params.solver);
        let hook = |n: usize, comp: &OperatorSpec, sol: &crate::resolvent::InclusionSolution| -> Result<f64> {
            let reg = yosida_operator(op, sched.pair_at(n).0, &params.solver)?;
            let direct = comp.apply_single(&sol.z).expect("single-valued")?;
            let lifted = lift_extract(&reg, a, &sol.z)?;
            Ok(y_space.dual_norm(&sub(&direct, &lifted)))
        };
        let hook_ref: Option<&StepHook<'_>> = if cross_check { Some(&hook) } else { None };
        liminf_probe_with(family, y, y_star, sched, params, hook_ref)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::Verdict;
    use crate::zoo;

    fn r(n: usize) -> NormedSpace {
        NormedSpace::euclidean(n).unwrap()
    }

    fn tangent_balls() -> (OperatorSpec, OperatorSpec) {
        (
            zoo::indicator_ball(r(2), vec![0.0, 0.0], 1.0).unwrap(),
            zoo::indicator_ball(r(2), vec![2.0, 0.0], 1.0).unwrap(),
        )
    }

    #[test]
    fn regularized_sum_examples() {
        let opts = SolverOptions::default();
        let id = zoo::identity(r(2));
        let v = regularized_sum_eval(&id, &id, 0.0, 0.0, &Point(vec![1.5, -2.0]), &opts).unwrap();
        assert_eq!(v.0, vec![3.0, -4.0]);

        let abs = zoo::abs(r(1));
        let zero = zoo::zero(r(1));
        let v = regularized_sum_eval(&abs, &zero, 0.5, 0.0, &Point(vec![0.2]), &opts).unwrap();
        assert!((v[0] - 0.4).abs() < 1e-15);

        let (c, d) = tangent_balls();
        let v = regularized_sum_eval(&c, &d, 0.1, 0.1, &Point(vec![1.0, 0.0]), &opts).unwrap();
        assert_eq!(v.0, vec![0.0, 0.0]);
    }

    #[test]
    fn multivalued_endpoint_is_typed_error() {
        let abs = zoo::abs(r(1));
        let zero = zoo::zero(r(1));
        let err = regularized_sum_eval(&abs, &zero, 0.0, 0.0, &Point(vec![0.0]), &SolverOptions::default());
        assert_eq!(
            err,
            Err(Error::MultivaluedEndpoint {
                operator: "abs".into()
            })
        );
        // away from the kink the endpoint is single-valued
        let v = regularized_sum_eval(&abs, &zero, 0.0, 0.0, &Point(vec![0.3]), &SolverOptions::default()).unwrap();
        assert_eq!(v.0, vec![1.0]);
    }

    #[test]
    fn identity_variational_sum() {
        let id = zoo::identity(r(1));
        let fam = crate::probe::default_family(crate::probe::ScheduleKind::Pair { lambda0: 1.0, mu0: 1.0 }, 30);
        let rep = variational_sum_probe(&id, &id, &Point(vec![0.7]), &Covector(vec![1.4]), &fam, &ProbeParams::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Accept);
    }

    #[test]
    fn sum_probe_rejects_wrong_schedule_kind() {
        let id = zoo::identity(r(1));
        let fam = vec![Schedule::eps(1.0, 0.5, 10).unwrap()];
        assert!(matches!(
            variational_sum_probe(&id, &id, &Point(vec![0.0]), &Covector(vec![0.0]), &fam, &ProbeParams::default()),
            Err(Error::InvalidSchedule(_))
        ));
    }

    #[test]
    fn lift_examples() {
        // T ≡ 0: only (0, 0) lifts
        let a = LinearOp::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let zero = zoo::zero(r(2));
        let y = Point(vec![0.3, -0.2]);
        assert!(lift_distance(&zero, &a, &y, &Covector(vec![0.0, 0.0])).unwrap() < 1e-12);
        assert!(lift_distance(&zero, &a, &y, &Covector(vec![0.1, 0.0])).unwrap() > 1e-3);

        // A = I, T = I: y* = y
        let eye = LinearOp::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let id = zoo::identity(r(2));
        assert!(lift_distance(&id, &eye, &y, &Covector(y.0.clone())).unwrap() < 1e-12);
        assert!(lift_distance(&id, &eye, &y, &Covector(vec![0.3, 0.2])).unwrap() > 1e-3);

        // A(t) = (t, 0), T = N_ball: (1, 2) lifts, (1, -1) does not
        let emb = LinearOp::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let ball = zoo::indicator_ball(r(2), vec![0.0, 0.0], 1.0).unwrap();
        assert!(lift_distance(&ball, &emb, &Point(vec![1.0]), &Covector(vec![2.0])).unwrap() < 1e-12);
        assert!(lift_distance(&ball, &emb, &Point(vec![1.0]), &Covector(vec![-1.0])).unwrap() > 0.5);
        assert!(lift_distance(&ball, &emb, &Point(vec![0.5]), &Covector(vec![1.0])).unwrap() > 0.5);

        // x ≠ Ay gives the empty set
        let off = lift_eval(&ball, &emb, &Point(vec![1.0]), &Point(vec![1.0, 0.5])).unwrap();
        assert!(off.is_empty());
    }

    #[test]
    fn lift_extract_matches_direct_composition() {
        let opts = SolverOptions::default();
        let a = LinearOp::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0], vec![0.0, 1.0]]).unwrap();
        let t = zoo::indicator_box(r(3), vec![-1.0; 3], vec![1.0; 3]).unwrap();
        let reg = yosida_operator(&t, 0.2, &opts).unwrap();
        let comp = composition_operator(&reg, &a).unwrap();
        let y = Point(vec![1.3, 0.9]);
        let direct = comp.apply_single(&y).unwrap().unwrap();
        let lifted = lift_extract(&reg, &a, &y).unwrap();
        assert!(direct.iter().zip(lifted.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn composition_embedding_probe() {
        let emb = LinearOp::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let ball = zoo::indicator_ball(r(2), vec![0.0, 0.0], 1.0).unwrap();
        let fam = crate::probe::default_family(crate::probe::ScheduleKind::Lambda { lambda0: 1.0 }, 30);
        let p = ProbeParams::default();
        let acc = variational_composition_probe(&ball, &emb, &Point(vec![1.0]), &Covector(vec![2.0]), &fam, &p, true).unwrap();
        assert_eq!(acc.verdict, Verdict::Accept);
        assert!(acc.runs.iter().all(|r| r.cross_check_gap.unwrap() < 1e-9));
        let rej = variational_composition_probe(&ball, &emb, &Point(vec![0.5]), &Covector(vec![1.0]), &fam, &p, false).unwrap();
        assert_eq!(rej.verdict, Verdict::Reject);
    }

    #[test]
    fn composition_polar_complement_hugs_graph() {
        let cube = SingleValuedMap {
            map: Arc::new(|x: &[f64]| Ok(x.iter().map(|v| v * v * v).collect())),
            jacobian: None,
        };
        let t = OperatorSpec::single_valued(r(2), "cube", cube);
        let a = LinearOp::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let comp = composition_operator(&t, &a).unwrap();
        let ys = zoo::grid(-1.5, 1.5, 0.05);
        let pairs: Vec<(Point, Covector)> = ys
            .iter()
            .map(|&y| {
                let v = comp.apply_single(&Point(vec![y])).unwrap().unwrap();
                (Point(vec![y]), Covector(v))
            })
            .collect();
        let chord = pairs
            .windows(2)
            .map(|w| ((w[1].0[0] - w[0].0[0]).powi(2) + (w[1].1[0] - w[0].1[0]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        let g = crate::operator::SampledGraph::new(r(1), pairs).unwrap();
        assert!(g.is_monotone());
        let mut kept = 0;
        for &x in &zoo::grid(-1.2, 1.2, 0.05) {
            for &xs in &zoo::grid(-1.5, 1.5, 0.05) {
                let gap = crate::operator::min_monotonicity_gap(&g, &Point(vec![x]), &Covector(vec![xs])).unwrap();
                if gap >= 0.0 {
                    kept += 1;
                    let d = g
                        .pairs()
                        .iter()
                        .map(|(y, v)| ((y[0] - x).powi(2) + (v[0] - xs).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min);
                    assert!(d <= chord, "({x}, {xs}) at distance {d}");
                }
            }
        }
        assert!(kept > 0);
    }
}
