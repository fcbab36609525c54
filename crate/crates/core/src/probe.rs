//! Finite-horizon test for membership in a sequential lower limit.
//!
//! A pair `(x, x*)` lies in `liminf T_n` exactly when the solutions `x_n` of
//! `x* ∈ T_n(x_n) + J(x_n − x)` converge to `x`. The probe solves these
//! inclusions for `n = 1..N` and classifies the residual sequence
//! `r_n = ‖x_n − x‖`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::OperatorSpec;
use crate::resolvent::{solve_translated_inclusion, solve_translated_inclusion_from, InclusionSolution, SolverOptions};
use crate::space::{sub, Covector, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Slack sequence `ε_n`; the probe itself ignores the values.
    Eps { eps0: f64 },
    /// Regularization parameters `λ_n → 0⁺`.
    Lambda { lambda0: f64 },
    /// Parameter pairs `(λ_n, μ_n)` with `λ_n + μ_n > 0`.
    Pair { lambda0: f64, mu0: f64 },
}

/// Geometric schedule `base · decay^(n−1)`, `n = 1..=len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub decay: f64,
    pub len: usize,
}

impl Schedule {
    pub fn eps(eps0: f64, decay: f64, len: usize) -> Result<Self> {
        Schedule {
            kind: ScheduleKind::Eps { eps0 },
            decay,
            len,
        }
        .validated()
    }

    pub fn lambda(lambda0: f64, decay: f64, len: usize) -> Result<Self> {
        Schedule {
            kind: ScheduleKind::Lambda { lambda0 },
            decay,
            len,
        }
        .validated()
    }

    pub fn pair(lambda0: f64, mu0: f64, decay: f64, len: usize) -> Result<Self> {
        Schedule {
            kind: ScheduleKind::Pair { lambda0, mu0 },
            decay,
            len,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if self.len == 0 {
            return bad("length must be at least 1".into());
        }
        match self.kind {
            ScheduleKind::Eps { eps0: v } | ScheduleKind::Lambda { lambda0: v } => {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("initial value must be positive and finite, got {v}"));
                }
            }
            ScheduleKind::Pair { lambda0, mu0 } => {
                if !(lambda0.is_finite() && mu0.is_finite() && lambda0 >= 0.0 && mu0 >= 0.0) {
                    return bad(format!("pair values must be nonnegative and finite, got ({lambda0}, {mu0})"));
                }
                if lambda0 + mu0 <= 0.0 {
                    return bad("pair schedule needs lambda0 + mu0 > 0".into());
                }
            }
        }
        // every term must stay a positive normal float
        if self.primary_at(self.len) < f64::MIN_POSITIVE {
            return bad(format!("decay {} underflows within {} steps", self.decay, self.len));
        }
        Ok(())
    }

    fn factor(&self, n: usize) -> f64 {
        self.decay.powi(n as i32 - 1)
    }

    fn primary_at(&self, n: usize) -> f64 {
        let base = match self.kind {
            ScheduleKind::Eps { eps0 } => eps0,
            ScheduleKind::Lambda { lambda0 } => lambda0,
            ScheduleKind::Pair { lambda0, mu0 } => lambda0.max(mu0),
        };
        base * self.factor(n)
    }

    /// The reported parameter at step `n` (1-based): `ε_n`, `λ_n`, or `λ_n` of a pair.
    pub fn param(&self, n: usize) -> f64 {
        match self.kind {
            ScheduleKind::Pair { lambda0, .. } => lambda0 * self.factor(n),
            _ => self.primary_at(n),
        }
    }

    /// `(λ_n, μ_n)`; for single-parameter schedules both entries equal the value.
    pub fn pair_at(&self, n: usize) -> (f64, f64) {
        let f = self.factor(n);
        match self.kind {
            ScheduleKind::Pair { lambda0, mu0 } => (lambda0 * f, mu0 * f),
            ScheduleKind::Eps { eps0: v } | ScheduleKind::Lambda { lambda0: v } => (v * f, v * f),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (1..=self.len).map(|n| self.param(n)).collect()
    }

    pub fn is_pair(&self) -> bool {
        matches!(self.kind, ScheduleKind::Pair { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Accept => 0,
            Verdict::Reject => 1,
            Verdict::Inconclusive => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Intersection semantics: any reject rejects, all accept accepts.
    pub fn conjunction<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Verdict {
        let mut all_accept = true;
        let mut any = false;
        for v in verdicts {
            any = true;
            match v {
                Verdict::Reject => return Verdict::Reject,
                Verdict::Inconclusive => all_accept = false,
                Verdict::Accept => {}
            }
        }
        if any && all_accept {
            Verdict::Accept
        } else {
            Verdict::Inconclusive
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub tol_accept: f64,
    pub tol_reject: f64,
    /// Number of trailing steps examined by the verdict.
    pub window: usize,
    pub solver: SolverOptions,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            tol_accept: 1e-4,
            tol_reject: 1e-2,
            window: 5,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub params: Vec<f64>,
    /// `r_n = ‖x_n − x‖`.
    pub residuals: Vec<f64>,
    /// `‖w_n*‖_q`.
    pub w_norms: Vec<f64>,
    pub verdict: Verdict,
    /// Least-squares slope of `log10 r_n` over the tail window.
    pub tail_slope: f64,
    pub max_iterate_norm: f64,
    /// Largest disagreement reported by a cross-check hook, if one ran.
    pub cross_check_gap: Option<f64>,
    /// Set when the run stopped early; the verdict is then inconclusive.
    pub diagnostic: Option<String>,
    pub solver_failed: bool,
}

impl ProbeReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-step check run on each solution; returns a disagreement measure.
pub type StepHook<'a> = dyn Fn(usize, &OperatorSpec, &InclusionSolution) -> Result<f64> + Sync + 'a;

/// Probe `(x, x*) ∈ liminf T_n` where `family(n)` builds `T_n`.
pub fn liminf_probe<F>(family: F, x: &Point, x_star: &Covector, sched: &Schedule, params: &ProbeParams) -> ProbeReport
where
    F: Fn(usize) -> Result<OperatorSpec>,
{
    liminf_probe_with(family, x, x_star, sched, params, None)
}

pub fn liminf_probe_with<F>(
    family: F,
    x: &Point,
    x_star: &Covector,
    sched: &Schedule,
    params: &ProbeParams,
    hook: Option<&StepHook<'_>>,
) -> ProbeReport
where
    F: Fn(usize) -> Result<OperatorSpec>,
{
    let mut report = ProbeReport {
        params: Vec::with_capacity(sched.len),
        residuals: Vec::with_capacity(sched.len),
        w_norms: Vec::with_capacity(sched.len),
        verdict: Verdict::Inconclusive,
        tail_slope: f64::NAN,
        max_iterate_norm: 0.0,
        cross_check_gap: None,
        diagnostic: None,
        solver_failed: false,
    };
    if let Err(e) = sched.validate() {
        report.diagnostic = Some(e.to_string());
        return report;
    }
    let mut prev: Option<Point> = None;
    for n in 1..=sched.len {
        let step = family(n).and_then(|op| {
            let sol = match &prev {
                Some(z0) => solve_translated_inclusion_from(&op, x, x_star, z0, &params.solver)?,
                None => solve_translated_inclusion(&op, x, x_star, &params.solver)?,
            };
            let gap = match hook {
                Some(h) => Some(h(n, &op, &sol)?),
                None => None,
            };
            Ok((op, sol, gap))
        });
        let (op, sol, gap) = match step {
            Ok(s) => s,
            Err(e) => {
                report.solver_failed = matches!(e, Error::SolverFailure { .. });
                report.diagnostic = Some(format!("step {n}: {e}"));
                return report;
            }
        };
        let space = op.space();
        let r = space.norm(&sub(&sol.z, x));
        let zn = space.norm(&sol.z);
        if !(r.is_finite() && zn.is_finite()) {
            report.diagnostic = Some(format!("step {n}: iterate diverged"));
            return report;
        }
        report.params.push(sched.param(n));
        report.residuals.push(r);
        report.w_norms.push(space.dual_norm(&sol.w_star));
        report.max_iterate_norm = report.max_iterate_norm.max(zn);
        if let Some(g) = gap {
            report.cross_check_gap = Some(report.cross_check_gap.unwrap_or(0.0).max(g));
        }
        prev = Some(sol.z);
    }
    report.tail_slope = tail_slope(&report.residuals, params.window);
    report.verdict = classify(&report.residuals, params);
    report
}

/// Verdict from a complete residual sequence.
pub fn classify(residuals: &[f64], params: &ProbeParams) -> Verdict {
    let Some(&last) = residuals.last() else {
        return Verdict::Inconclusive;
    };
    let tail = &residuals[residuals.len().saturating_sub(params.window.max(1))..];
    let slack = 1e-3 * params.tol_accept;
    let decreasing = tail.windows(2).all(|w| w[1] <= w[0] + slack);
    if last <= params.tol_accept && decreasing {
        Verdict::Accept
    } else if tail.iter().all(|&r| r >= params.tol_reject) {
        Verdict::Reject
    } else {
        Verdict::Inconclusive
    }
}

/// Verdict of a partial run up to step `n`, as written to per-step output.
pub fn partial_verdict(residuals: &[f64], n: usize, params: &ProbeParams) -> Verdict {
    classify(&residuals[..n.min(residuals.len())], params)
}

fn tail_slope(residuals: &[f64], window: usize) -> f64 {
    let tail = &residuals[residuals.len().saturating_sub(window.max(2))..];
    if tail.len() < 2 {
        return 0.0;
    }
    let ys: Vec<f64> = tail.iter().map(|r| (r + 1e-300).log10()).collect();
    let m = ys.len() as f64;
    let xbar = (m - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / m;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        num += dx * (y - ybar);
        den += dx * dx;
    }
    num / den
}

/// Probe a constant sequence `T_n = T`.
pub fn probe_constant(op: &OperatorSpec, x: &Point, x_star: &Covector, sched: &Schedule, params: &ProbeParams) -> ProbeReport {
    liminf_probe(|_| Ok(op.clone()), x, x_star, sched, params)
}

/// Probe runs over several schedules, merged with intersection semantics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyReport {
    pub schedules: Vec<Schedule>,
    pub runs: Vec<ProbeReport>,
    pub verdict: Verdict,
}

impl FamilyReport {
    pub fn solver_failed(&self) -> bool {
        self.runs.iter().any(|r| r.solver_failed)
    }

    pub fn max_residual(&self) -> f64 {
        self.runs.iter().map(ProbeReport::max_residual).fold(0.0, f64::max)
    }
}

/// Run `probe` for every schedule in parallel; results keep schedule order.
pub fn run_family<P>(schedules: &[Schedule], probe: P) -> FamilyReport
where
    P: Fn(&Schedule) -> ProbeReport + Sync,
{
    let runs: Vec<ProbeReport> = schedules.par_iter().map(&probe).collect();
    FamilyReport {
        schedules: schedules.to_vec(),
        verdict: Verdict::conjunction(runs.iter().map(|r| r.verdict)),
        runs,
    }
}

/// Three geometric schedules with decays 0.5, 0.3 and 0.7.
pub fn default_family(kind: ScheduleKind, len: usize) -> Vec<Schedule> {
    [0.5, 0.3, 0.7]
        .into_iter()
        .map(|decay| Schedule { kind, decay, len })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormedSpace;
    use crate::zoo;

    fn line() -> NormedSpace {
        NormedSpace::euclidean(1).unwrap()
    }

    #[test]
    fn schedule_values() {
        let s = Schedule::eps(1.0, 0.5, 4).unwrap();
        assert_eq!(s.values(), vec![1.0, 0.5, 0.25, 0.125]);
        let s = Schedule::pair(2.0, 0.0, 0.5, 3).unwrap();
        assert_eq!(s.pair_at(3), (0.5, 0.0));
        assert!(Schedule::eps(1.0, 1.0, 3).is_err());
        assert!(Schedule::eps(1.0, -0.5, 3).is_err());
        assert!(Schedule::pair(0.0, 0.0, 0.5, 3).is_err());
        assert!(Schedule::lambda(1.0, 0.5, 0).is_err());
        assert!(Schedule::lambda(1.0, 1e-30, 40).is_err());
    }

    #[test]
    fn constant_abs_accepts_graph_point() {
        let t = zoo::abs(line());
        let s = Schedule::eps(1.0, 0.5, 30).unwrap();
        let rep = probe_constant(&t, &Point(vec![0.0]), &Covector(vec![0.5]), &s, &ProbeParams::default());
        assert_eq!(rep.verdict, Verdict::Accept);
        assert!(rep.residuals.iter().all(|&r| r == 0.0));
        assert_eq!(rep.residuals.len(), 30);
    }

    #[test]
    fn constant_abs_rejects_off_graph_point() {
        let t = zoo::abs(line());
        let s = Schedule::eps(1.0, 0.5, 30).unwrap();
        let rep = probe_constant(&t, &Point(vec![0.0]), &Covector(vec![2.0]), &s, &ProbeParams::default());
        assert_eq!(rep.verdict, Verdict::Reject);
        assert!(rep.residuals.iter().all(|&r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn shifted_family_limit() {
        let s = Schedule::eps(1.0, 0.5, 30).unwrap();
        let fam = |n: usize| Ok(zoo::shifted_abs(line(), vec![1.0 / n as f64]));
        let rep = liminf_probe(fam, &Point(vec![0.0]), &Covector(vec![-1.0]), &s, &ProbeParams::default());
        assert_eq!(rep.verdict, Verdict::Accept);
    }

    #[test]
    fn classify_thresholds() {
        let p = ProbeParams::default();
        assert_eq!(classify(&[1.0, 0.5, 1e-5, 1e-6, 1e-7, 0.0], &p), Verdict::Accept);
        assert_eq!(classify(&[1.0, 1e-6, 1.05e-6, 1e-6, 1e-7, 0.0], &p), Verdict::Accept);
        assert_eq!(classify(&[1.0, 1e-6, 1e-3, 1e-6, 1e-7, 0.0], &p), Verdict::Inconclusive);
        assert_eq!(classify(&[1.0; 6], &p), Verdict::Reject);
        assert_eq!(classify(&[1.0, 1.0, 1.0, 1.0, 1e-3], &p), Verdict::Inconclusive);
        assert_eq!(classify(&[], &p), Verdict::Inconclusive);
    }

    #[test]
    fn conjunction() {
        use Verdict::*;
        assert_eq!(Verdict::conjunction([Accept, Accept]), Accept);
        assert_eq!(Verdict::conjunction([Accept, Inconclusive]), Inconclusive);
        assert_eq!(Verdict::conjunction([Inconclusive, Reject]), Reject);
        assert_eq!(Verdict::conjunction([]), Inconclusive);
    }

    #[test]
    fn slope_of_geometric_tail() {
        let r: Vec<f64> = (0..10).map(|k| 10f64.powi(-k)).collect();
        assert!((tail_slope(&r, 5) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn construction_failure_is_inconclusive() {
        let s = Schedule::eps(1.0, 0.5, 5).unwrap();
        let rep = liminf_probe(
            |_| Err(Error::InvalidParameter(-1.0)),
            &Point(vec![0.0]),
            &Covector(vec![0.0]),
            &s,
            &ProbeParams::default(),
        );
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!(rep.diagnostic.is_some());
        assert!(!rep.solver_failed);
    }
}
