//! Generalized resolvents and the Moreau–Yosida regularization.
//!
//! Every solver here finds `z` with `c ∈ λT(z) + J(z − x)`:
//!
//! * the resolvent system `0 ∈ λT(z) + J(z − x)` (`c = 0`), giving
//!   `T_λ(x) = λ⁻¹ J(x − z)`;
//! * the translated inclusion `x* ∈ T(z) + J(z − x)` (`λ = 1`, `c = x*`).
//!
//! The exact `J`-inclusion is always solved. Since `J(u) ⊂ J_ε(u)` the result
//! is also an `ε`-solution for every `ε ≥ 0`.
//!
//! Solver selection:
//! * `T = ∂f` with a Euclidean prox and `J = I` (p = 2 or dimension 1):
//!   closed form `z = prox_{λf}(x + c)`.
//! * `T = ∂f` otherwise: accelerated proximal gradient on
//!   `min λf(z) + ½‖z − x‖_p² − ⟨c, z⟩` with backtracking.
//! * single-valued `T` on the line: bracketing root finder on the increasing
//!   scalar map `λT(z) + z − x − c`.
//! * single-valued `T` otherwise: damped Newton on
//!   `F(z) = λT(z) + J(z − x) − c` with merit `‖F‖` and step halving.
//!
//! Every returned solution is re-verified against `eval` independently of the
//! solver that produced it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{OperatorKind, OperatorSpec, SingleValuedMap};
use crate::space::{add, all_finite, axpy, dot, norm2, norm_inf, sub, Covector, NormedSpace, Point, DEFAULT_TOL};

const EPS: f64 = f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Tolerance ratio for operators evaluated inside a solve.
    #[serde(default = "nested_ratio_default")]
    pub nested_ratio: f64,
}

fn nested_ratio_default() -> f64 {
    NESTED_TOL_RATIO
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: 10_000,
            nested_ratio: NESTED_TOL_RATIO,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedFormProx,
    ProximalGradient,
    Bracketing,
    Newton,
}

/// Solution of `c ∈ λT(z) + J(z − x)` split as `c = λ t* + w*`.
#[derive(Clone, Debug, PartialEq)]
pub struct InclusionSolution {
    pub z: Point,
    /// Selected element of `T(z)`.
    pub t_star: Covector,
    /// `J(z − x)`.
    pub w_star: Covector,
    /// Dual-norm distance from `c` to `λT(z) + J(z − x)`, measured through `eval`.
    pub residual: f64,
    /// Rounding floor: the smallest residual distinguishable from zero at
    /// this point given the operator's local Lipschitz scale.
    pub residual_floor: f64,
    pub iterations: usize,
    pub method: Method,
}

impl InclusionSolution {
    /// The tolerance the residual was accepted against.
    pub fn accepted_tol(&self, tol: f64) -> f64 {
        tol.max(self.residual_floor)
    }
}

/// Solve the resolvent system `x* ∈ T(z)`, `0 ∈ λx* + J(z − x)`.
pub fn solve_my_system(op: &OperatorSpec, x: &Point, lambda: f64, opts: &SolverOptions) -> Result<InclusionSolution> {
    check_lambda(lambda)?;
    op.space().check(x)?;
    let c = vec![0.0; x.dim()];
    solve_inclusion(op, x, &c, lambda, None, opts)
}

/// `T_λ(x) = λ⁻¹ J(x − R_λ x)`.
///
/// The system is solved to `tol · min(1, λ)`, so the returned value carries
/// an error of order `tol` rather than `tol / λ`.
pub fn moreau_yosida(op: &OperatorSpec, lambda: f64, x: &Point, opts: &SolverOptions) -> Result<Covector> {
    // t* = −J(z − x)/λ = J(x − z)/λ
    Ok(moreau_yosida_solution(op, lambda, x, opts)?.t_star)
}

/// The resolvent solution behind [`moreau_yosida`]; its `t_star` is `T_λ(x)`.
pub fn moreau_yosida_solution(op: &OperatorSpec, lambda: f64, x: &Point, opts: &SolverOptions) -> Result<InclusionSolution> {
    let inner = SolverOptions {
        tol: opts.tol * lambda.min(1.0),
        ..*opts
    };
    solve_my_system(op, x, lambda, &inner)
}

/// Solve `x* ∈ T(z) + J(z − x)`.
pub fn solve_translated_inclusion(
    op: &OperatorSpec,
    x: &Point,
    x_star: &Covector,
    opts: &SolverOptions,
) -> Result<InclusionSolution> {
    op.space().check(x)?;
    op.space().check(x_star)?;
    solve_inclusion(op, x, x_star, 1.0, None, opts)
}

/// As [`solve_translated_inclusion`], with an initial guess for iterative solvers.
pub fn solve_translated_inclusion_from(
    op: &OperatorSpec,
    x: &Point,
    x_star: &Covector,
    start: &Point,
    opts: &SolverOptions,
) -> Result<InclusionSolution> {
    op.space().check(x)?;
    op.space().check(x_star)?;
    op.space().check(start)?;
    solve_inclusion(op, x, x_star, 1.0, Some(start), opts)
}

/// Dual-norm distance from `c` to `λT(z) + J(z − x)`, computed from `eval`.
pub fn inclusion_residual(op: &OperatorSpec, x: &Point, c: &Covector, lambda: f64, z: &Point) -> Result<f64> {
    let space = op.space();
    space.check(x)?;
    space.check(c)?;
    space.check(z)?;
    let w = space.duality_raw(&sub(z, x));
    residual_raw(op, space, c, lambda, z, &w)
}

fn residual_raw(op: &OperatorSpec, space: &NormedSpace, c: &[f64], lambda: f64, z: &[f64], w: &[f64]) -> Result<f64> {
    let t: Vec<f64> = c.iter().zip(w).map(|(ci, wi)| (ci - wi) / lambda).collect();
    let set = op.eval_raw(z)?;
    Ok(match set.nearest(&t) {
        Some(near) => lambda * space.dual_norm(&sub(&t, &near)),
        None => f64::INFINITY,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(lambda));
    }
    Ok(())
}

struct Raw {
    z: Vec<f64>,
    /// `z − x`, kept separately because it may be far smaller than `x`.
    d: Vec<f64>,
    iterations: usize,
    floor: f64,
    method: Method,
}

fn solve_inclusion(
    op: &OperatorSpec,
    x: &[f64],
    c: &[f64],
    lambda: f64,
    start: Option<&Point>,
    opts: &SolverOptions,
) -> Result<InclusionSolution> {
    let space = *op.space();
    let raw = match op.kind() {
        OperatorKind::Subdiff(_) | OperatorKind::NormalCone(_) => {
            if space.is_hilbertian() {
                closed_form_prox(op, x, c, lambda)
            } else {
                proximal_gradient(op, &space, x, c, lambda, start.map(|s| &s.0[..]), opts)?
            }
        }
        OperatorKind::SingleValued(_) | OperatorKind::Linear(_) => {
            let d0 = start.map(|s| sub(s, x)).unwrap_or_else(|| vec![0.0; x.len()]);
            if space.dim() == 1 {
                bracketing(op, &space, x, c, lambda, d0[0], opts)?
            } else {
                newton(op, &space, x, c, lambda, d0, opts)?
            }
        }
        OperatorKind::Graph(_) => {
            return Err(Error::Unsupported {
                operator: op.label().to_string(),
                what: "resolvent evaluation (a finite sample is not maximal monotone)",
            })
        }
    };
    finish(op, &space, c, lambda, raw, opts)
}

fn finish(
    op: &OperatorSpec,
    space: &NormedSpace,
    c: &[f64],
    lambda: f64,
    raw: Raw,
    opts: &SolverOptions,
) -> Result<InclusionSolution> {
    let Raw { z, d, .. } = raw;
    if !all_finite(&z) || !all_finite(&d) {
        return Err(Error::SolverFailure {
            iterations: raw.iterations,
            residual: f64::INFINITY,
            tol: opts.tol,
        });
    }
    let w = space.duality_raw(&d);
    let t: Vec<f64> = c.iter().zip(&w).map(|(ci, wi)| (ci - wi) / lambda).collect();
    let residual = residual_raw(op, space, c, lambda, &z, &w)?;
    // rounding in forming c − w − λt, term by term
    let floor = raw.floor.max(8.0 * EPS * (norm_inf(&w) + norm_inf(c) + lambda * norm_inf(&t)));
    if !(residual <= opts.tol.max(floor)) {
        return Err(Error::SolverFailure {
            iterations: raw.iterations,
            residual,
            tol: opts.tol,
        });
    }
    Ok(InclusionSolution {
        z: Point(z),
        t_star: Covector(t),
        w_star: Covector(w),
        residual,
        residual_floor: floor,
        iterations: raw.iterations,
        method: raw.method,
    })
}

/// The prox is 1-Lipschitz, so rounding its argument `x + c` moves `z` by
/// about `ε(‖x‖ + ‖c‖)`.
fn prox_floor(x: &[f64], c: &[f64], z: &[f64]) -> f64 {
    8.0 * x.len() as f64 * EPS * (norm_inf(x) + norm_inf(c) + norm_inf(z))
}

fn closed_form_prox(op: &OperatorSpec, x: &[f64], c: &[f64], lambda: f64) -> Raw {
    // 0 ∈ λ∂f(z) + z − (x + c)  ⇔  z = prox_{λf}(x + c)
    let z = op.prox(&add(x, c), lambda).expect("prox available for this kind");
    Raw {
        floor: prox_floor(x, c, &z),
        d: sub(&z, x),
        z,
        iterations: 1,
        method: Method::ClosedFormProx,
    }
}

fn proximal_gradient(
    op: &OperatorSpec,
    space: &NormedSpace,
    x: &[f64],
    c: &[f64],
    lambda: f64,
    start: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Raw> {
    let smooth = |z: &[f64]| {
        let n = space.norm(&sub(z, x));
        0.5 * n * n - dot(c, z)
    };
    let grad = |z: &[f64]| sub(&space.duality_raw(&sub(z, x)), c);
    let objective = |z: &[f64]| lambda * op.potential(z).unwrap_or(0.0) + smooth(z);
    let prox = |v: &[f64], s: f64| op.prox(v, s * lambda).expect("prox available");

    let mut z = match start {
        Some(s) => prox(s, 0.0),
        None => prox(&add(x, c), 1.0),
    };
    let mut phi_z = objective(&z);
    let mut y = z.clone();
    let mut theta = 1.0_f64;
    let mut step = 1.0_f64;
    let mut best = (f64::INFINITY, z.clone());

    for k in 0..opts.max_iter {
        let gy = grad(&y);
        let gval = smooth(&y);
        let mut zn;
        loop {
            zn = prox(&axpy(&y, -step, &gy), step);
            let d = sub(&zn, &y);
            let model = gval + dot(&gy, &d) + dot(&d, &d) / (2.0 * step);
            if smooth(&zn) <= model + 1e-14 * (1.0 + gval.abs()) || step < 1e-18 {
                break;
            }
            step *= 0.5;
        }

        let w = space.duality_raw(&sub(&zn, x));
        let res = residual_raw(op, space, c, lambda, &zn, &w)?;
        if res < best.0 {
            best = (res, zn.clone());
        }
        if res <= opts.tol.max(prox_floor(x, c, &zn)) {
            return Ok(Raw {
                floor: prox_floor(x, c, &zn),
                d: sub(&zn, x),
                z: zn,
                iterations: k + 1,
                method: Method::ProximalGradient,
            });
        }

        if k % 10 == 9 && op.prox_jacobian(&zn, step * lambda).is_some() {
            let (zp, rp) = newton_polish(op, space, x, c, lambda, step, best.1.clone(), best.0, opts)?;
            if rp <= opts.tol.max(prox_floor(x, c, &zp)) {
                return Ok(Raw {
                    floor: prox_floor(x, c, &zp),
                    d: sub(&zp, x),
                    z: zp,
                    iterations: k + 1,
                    method: Method::ProximalGradient,
                });
            }
            if rp < best.0 {
                best = (rp, zp.clone());
                z = zp.clone();
                phi_z = objective(&z);
                y = zp;
                theta = 1.0;
                continue;
            }
        }

        let phi_n = objective(&zn);
        if phi_n > phi_z {
            // function-value restart
            theta = 1.0;
            y = z.clone();
        } else {
            let theta_n = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_n;
            y = axpy(&zn, beta, &sub(&zn, &z));
            z = zn;
            phi_z = phi_n;
            theta = theta_n;
        }
        step *= 1.25;
    }
    Ok(Raw {
        floor: prox_floor(x, c, &best.1),
        d: sub(&best.1, x),
        z: best.1,
        iterations: opts.max_iter,
        method: Method::ProximalGradient,
    })
}

/// Semismooth Newton on `G(z) = z − prox_{sλf}(z − s∇g(z))`, each step
/// followed by one forward-backward step so the iterate lands exactly on the
/// prox's active structure. Returns the best point seen and its residual.
#[allow(clippy::too_many_arguments)]
fn newton_polish(
    op: &OperatorSpec,
    space: &NormedSpace,
    x: &[f64],
    c: &[f64],
    lambda: f64,
    s: f64,
    mut z: Vec<f64>,
    mut res: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64)> {
    let n = z.len();
    let grad = |z: &[f64]| sub(&space.duality_raw(&sub(z, x)), c);
    let fb = |z: &[f64]| op.prox(&axpy(z, -s, &grad(z)), s * lambda).expect("prox available");
    for _ in 0..30 {
        let v = axpy(&z, -s, &grad(&z));
        let g = sub(&z, &op.prox(&v, s * lambda).expect("prox available"));
        let Some(p) = op.prox_jacobian(&v, s * lambda) else { break };
        let h = space.duality_jacobian(&sub(&z, x));
        let eye = DMatrix::<f64>::identity(n, n);
        let dg = &eye - p * (&eye - h * s);
        let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
        let Some(d) = dg.lu().solve(&rhs) else { break };
        let zt: Vec<f64> = z.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        if !all_finite(&zt) {
            break;
        }
        let zc = fb(&zt);
        let w = space.duality_raw(&sub(&zc, x));
        let rc = residual_raw(op, space, c, lambda, &zc, &w)?;
        if !(rc < res) {
            break;
        }
        z = zc;
        res = rc;
        if res <= opts.tol.max(prox_floor(x, c, &z)) {
            break;
        }
    }
    Ok((z, res))
}

fn single_value(op: &OperatorSpec, z: &[f64]) -> Result<Vec<f64>> {
    op.apply_single(z).expect("single-valued operator")
}

/// `F(d) = λT(x + d) + J(d) − c` together with `T(x + d)`.
fn residual_map(
    op: &OperatorSpec,
    space: &NormedSpace,
    x: &[f64],
    c: &[f64],
    lambda: f64,
    d: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tz = single_value(op, &add(x, d))?;
    let w = space.duality_raw(d);
    let f = tz
        .iter()
        .zip(&w)
        .zip(c)
        .map(|((t, wi), ci)| lambda * t + wi - ci)
        .collect();
    Ok((f, tz))
}

/// Rounding floor for `F` at `d`, given `λ‖DT‖`: term-wise rounding plus the
/// effect of rounding the argument `x + d`.
fn map_floor(lambda: f64, tz: &[f64], d: &[f64], c: &[f64], x: &[f64], lambda_lip: f64) -> f64 {
    let n = d.len() as f64;
    8.0 * n * EPS * (lambda * norm_inf(tz) + norm_inf(d) + norm_inf(c) + lambda_lip * (norm_inf(x) + norm_inf(d)))
}

fn bracketing(
    op: &OperatorSpec,
    space: &NormedSpace,
    x: &[f64],
    c: &[f64],
    lambda: f64,
    d0: f64,
    opts: &SolverOptions,
) -> Result<Raw> {
    // In one dimension J(d) = d for every p, so g(d) = λT(x + d) + d − c is
    // increasing with slope ≥ 1 and g(d0 − g(d0)) has the opposite sign of g(d0).
    let g = |d: f64| -> Result<(f64, f64)> {
        let (f, tz) = residual_map(op, space, x, c, lambda, &[d])?;
        Ok((f[0], tz[0]))
    };
    let fail = |iterations| Error::SolverFailure {
        iterations,
        residual: f64::INFINITY,
        tol: opts.tol,
    };
    let target = 0.25 * opts.tol;
    let done = |d: f64, iterations: usize, floor: f64| Raw {
        z: vec![x[0] + d],
        d: vec![d],
        iterations,
        floor,
        method: Method::Bracketing,
    };
    let (g0, t0) = g(d0)?;
    if !g0.is_finite() {
        return Err(fail(1));
    }
    let floor_at = |d: f64, tz: f64, slope: f64| map_floor(lambda, &[tz], &[d], c, x, (slope - 1.0).max(0.0));
    if g0.abs() <= target.max(floor_at(d0, t0, 1.0)) {
        return Ok(done(d0, 1, floor_at(d0, t0, 1.0)));
    }
    let (mut lo, mut glo, mut hi, mut ghi, mut tlo, mut thi);
    if g0 > 0.0 {
        (hi, ghi, thi) = (d0, g0, t0);
        lo = d0 - g0;
        (glo, tlo) = g(lo)?;
    } else {
        (lo, glo, tlo) = (d0, g0, t0);
        hi = d0 - g0;
        (ghi, thi) = g(hi)?;
    }
    if !(glo.is_finite() && ghi.is_finite()) {
        return Err(fail(2));
    }
    let mut iterations = 2;
    // Illinois variant of regula falsi, with a bisection step whenever the
    // bracket fails to halve.
    let mut side = 0i8;
    let mut width = hi - lo;
    let (mut glo_w, mut ghi_w) = (glo, ghi);
    loop {
        let slope = if hi > lo { ((ghi - glo) / (hi - lo)).max(1.0) } else { 1.0 };
        if -glo <= target.max(floor_at(lo, tlo, slope)) {
            return Ok(done(lo, iterations, floor_at(lo, tlo, slope)));
        }
        if ghi <= target.max(floor_at(hi, thi, slope)) {
            return Ok(done(hi, iterations, floor_at(hi, thi, slope)));
        }
        let resolution = 2.0 * EPS * (x[0].abs() + lo.abs().max(hi.abs())) + f64::MIN_POSITIVE;
        if hi - lo <= resolution || iterations >= opts.max_iter {
            let (d, t) = if -glo <= ghi { (lo, tlo) } else { (hi, thi) };
            return Ok(done(d, iterations, floor_at(d, t, slope)));
        }
        let mut m = (lo * ghi_w - hi * glo_w) / (ghi_w - glo_w);
        if !(m > lo && m < hi) || (iterations % 3 == 0 && hi - lo > 0.5 * width) {
            m = lo + 0.5 * (hi - lo);
            width = hi - lo;
        }
        let (gm, tm) = g(m)?;
        iterations += 1;
        if !gm.is_finite() {
            return Err(fail(iterations));
        }
        if gm < 0.0 {
            (lo, glo, tlo) = (m, gm, tm);
            glo_w = gm;
            if side == -1 {
                ghi_w *= 0.5;
            }
            side = -1;
        } else {
            (hi, ghi, thi) = (m, gm, tm);
            ghi_w = gm;
            if side == 1 {
                glo_w *= 0.5;
            }
            side = 1;
        }
    }
}

fn jacobian_of(op: &OperatorSpec, z: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(j) = op.jacobian(z) {
        return j;
    }
    finite_difference_jacobian(|v| single_value(op, v), z)
}

pub(crate) fn finite_difference_jacobian<F>(f: F, z: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = z.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = 1e-7 * (1.0 + z[j].abs());
        let mut a = z.to_vec();
        let mut b = z.to_vec();
        a[j] += h;
        b[j] -= h;
        let fa = f(&a)?;
        let fb = f(&b)?;
        for i in 0..n {
            jac[(i, j)] = (fa[i] - fb[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn newton(
    op: &OperatorSpec,
    space: &NormedSpace,
    x: &[f64],
    c: &[f64],
    lambda: f64,
    d0: Vec<f64>,
    opts: &SolverOptions,
) -> Result<Raw> {
    let n = x.len();
    // For p < 2, J is not Lipschitz where a coordinate of d vanishes while
    // J⁻¹ is C¹, so iterate on w = J(d) and recover d = J⁻¹(w).
    let dual_vars = !space.is_hilbertian() && space.p() < 2.0;
    let dual = space.dual();
    let to_d = |v: &[f64]| if dual_vars { dual.duality_raw(v) } else { v.to_vec() };
    let f = |v: &[f64]| {
        let d = to_d(v);
        let (fv, tz) = residual_map(op, space, x, c, lambda, &d)?;
        Ok::<_, Error>((fv, tz, d))
    };
    let mut v = if dual_vars { space.duality_raw(&d0) } else { d0 };
    let (mut fd, mut tz, mut d) = f(&v)?;
    let mut floor = map_floor(lambda, &tz, &d, c, x, 0.0);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let z = add(x, &d);
        let dt = jacobian_of(op, &z)? * lambda;
        floor = map_floor(lambda, &tz, &d, c, x, dt.norm());
        if space.dual_norm(&fd) <= opts.tol.max(floor) {
            break;
        }
        let jac = if dual_vars {
            dt * dual.duality_jacobian(&v) + DMatrix::identity(n, n)
        } else {
            dt + space.duality_jacobian(&d)
        };
        let jac_norm = jac.norm();
        let rhs = DVector::from_iterator(n, fd.iter().map(|v| -v));
        let merit = norm2(&fd);

        let mut directions: Vec<Vec<f64>> = Vec::with_capacity(3);
        if let Some(step) = jac.clone().lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite())) {
            directions.push(step.iter().copied().collect());
        }
        // Levenberg–Marquardt, then steepest descent on ½‖F‖²
        let jt_f = jac.transpose() * &rhs;
        let mu = 1e-8 * (1.0 + jac_norm * jac_norm);
        if let Some(step) = (jac.transpose() * &jac + DMatrix::identity(n, n) * mu).lu().solve(&jt_f) {
            directions.push(step.iter().copied().collect());
        }
        directions.push(jt_f.iter().map(|v| v / (1.0 + jac_norm * jac_norm)).collect());

        let mut accepted = None;
        'dirs: for dir in &directions {
            let mut t = 1.0;
            for _ in 0..60 {
                let vt = axpy(&v, t, dir);
                let (ft, tt, dn) = f(&vt)?;
                let mt = norm2(&ft);
                if mt.is_finite() && mt <= (1.0 - 1e-4 * t) * merit {
                    accepted = Some((vt, ft, tt, dn));
                    break 'dirs;
                }
                t *= 0.5;
            }
        }
        let Some((vn, fnew, tnew, dn)) = accepted else { break };
        let step = norm_inf(&sub(&dn, &d));
        v = vn;
        fd = fnew;
        tz = tnew;
        d = dn;
        if step <= 4.0 * EPS * (norm_inf(x) + norm_inf(&d)) {
            break;
        }
    }
    Ok(Raw {
        z: add(x, &d),
        d,
        iterations,
        floor,
        method: Method::Newton,
    })
}

/// `T_λ` as an everywhere-defined single-valued operator, evaluated to
/// `opts.tol · opts.nested_ratio` so an outer solve at `opts.tol` sees it as exact.
pub fn yosida_operator(op: &OperatorSpec, lambda: f64, opts: &SolverOptions) -> Result<OperatorSpec> {
    check_lambda(lambda)?;
    let space = *op.space();
    let base = Arc::new(op.clone());
    let opts = nested_options(opts);
    let b1 = base.clone();
    let map = Arc::new(move |x: &[f64]| -> Result<Vec<f64>> {
        Ok(moreau_yosida(&b1, lambda, &Point(x.to_vec()), &opts)?.0)
    });
    let jacobian: Option<crate::operator::JacobianFn> = if space.is_hilbertian() {
        match op.kind() {
            OperatorKind::Subdiff(o) if o.prox_jacobian.is_some() => Some(yosida_prox_jacobian(base.clone(), lambda)),
            OperatorKind::NormalCone(_) => Some(yosida_prox_jacobian(base.clone(), lambda)),
            OperatorKind::Linear(l) => {
                // (I − (I + λM)⁻¹)/λ, constant
                let n = space.dim();
                let m = l.matrix();
                let inv = (DMatrix::identity(n, n) + m * lambda)
                    .try_inverse()
                    .expect("I + λM is invertible for monotone M");
                let jac = (DMatrix::identity(n, n) - inv) / lambda;
                Some(Arc::new(move |_: &[f64]| Ok(jac.clone())))
            }
            _ => None,
        }
    } else {
        None
    };
    Ok(OperatorSpec::single_valued(
        space,
        format!("yosida({}, {lambda})", op.label()),
        SingleValuedMap { map, jacobian },
    ))
}

/// Default ratio between the tolerance of an operator evaluated inside
/// another solve and the tolerance of that outer solve.
pub const NESTED_TOL_RATIO: f64 = 1e-2;

/// Options for evaluations nested inside a solve run with `opts`.
pub(crate) fn nested_options(opts: &SolverOptions) -> SolverOptions {
    SolverOptions {
        tol: opts.tol * opts.nested_ratio,
        ..*opts
    }
}

fn yosida_prox_jacobian(base: Arc<OperatorSpec>, lambda: f64) -> crate::operator::JacobianFn {
    Arc::new(move |x: &[f64]| {
        let n = x.len();
        let dp = base.prox_jacobian(x, lambda).expect("prox jacobian available");
        Ok((DMatrix::identity(n, n) - dp) / lambda)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    fn r(n: usize) -> NormedSpace {
        NormedSpace::euclidean(n).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zero_operator_resolvent_is_identity() {
        for p in [1.5, 2.0, 3.0] {
            let s = NormedSpace::new(2, p).unwrap();
            let t = zoo::zero(s);
            let x = Point(vec![0.3, -2.0]);
            let sol = solve_my_system(&t, &x, 0.7, &SolverOptions::default()).unwrap();
            assert!(close(&sol.z, &x, 1e-10));
            assert!(close(&sol.t_star, &[0.0, 0.0], 1e-10));
            let my = moreau_yosida(&t, 0.7, &x, &SolverOptions::default()).unwrap();
            assert!(close(&my, &[0.0, 0.0], 1e-10));
        }
    }

    #[test]
    fn identity_resolvent_euclidean() {
        let t = zoo::identity(r(2));
        let sol = solve_my_system(&t, &Point(vec![2.0, 0.0]), 1.0, &SolverOptions::default()).unwrap();
        assert!(close(&sol.z, &[1.0, 0.0], 1e-12));
        assert!(close(&sol.t_star, &[1.0, 0.0], 1e-12));
        assert!(close(&sol.w_star, &[-1.0, 0.0], 1e-12));
        let my = moreau_yosida(&t, 1.0, &Point(vec![2.0, 0.0]), &SolverOptions::default()).unwrap();
        assert!(close(&my, &[1.0, 0.0], 1e-12));
    }

    #[test]
    fn abs_resolvent_soft_threshold() {
        let t = zoo::abs(r(1));
        let sol = solve_my_system(&t, &Point(vec![3.0]), 1.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.z.0, vec![2.0]);
        assert_eq!(sol.t_star.0, vec![1.0]);
        let my = moreau_yosida(&t, 0.5, &Point(vec![0.2]), &SolverOptions::default()).unwrap();
        assert!((my[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn translated_examples() {
        let opts = SolverOptions::default();
        let id = zoo::identity(r(1));
        let s = solve_translated_inclusion(&id, &Point(vec![0.0]), &Covector(vec![0.0]), &opts).unwrap();
        assert_eq!(s.z.0, vec![0.0]);
        assert_eq!(s.w_star.0, vec![0.0]);
        let s = solve_translated_inclusion(&id, &Point(vec![1.0]), &Covector(vec![0.0]), &opts).unwrap();
        assert!((s.z[0] - 0.5).abs() < 1e-9);
        assert!((s.w_star[0] + 0.5).abs() < 1e-9);

        let abs = zoo::abs(r(1));
        let s = solve_translated_inclusion(&abs, &Point(vec![0.0]), &Covector(vec![0.5]), &opts).unwrap();
        assert_eq!(s.z.0, vec![0.0]);
        assert_eq!(s.t_star.0, vec![0.5]);
        assert_eq!(s.w_star.0, vec![0.0]);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let t = zoo::abs(r(1));
        assert_eq!(
            solve_my_system(&t, &Point(vec![1.0]), 0.0, &SolverOptions::default()),
            Err(Error::InvalidParameter(0.0))
        );
    }

    #[test]
    fn graph_resolvent_unsupported() {
        let g = zoo::sign_graph_samples(0.5);
        let t = OperatorSpec::graph("g", g);
        assert!(matches!(
            solve_my_system(&t, &Point(vec![1.0]), 1.0, &SolverOptions::default()),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn non_euclidean_subdiff_residual_and_eps_membership() {
        let opts = SolverOptions::default();
        for p in [1.5, 3.0] {
            let s = NormedSpace::new(3, p).unwrap();
            let ops = [
                zoo::abs(s),
                zoo::indicator_ball(s, vec![0.5, 0.0, -0.5], 1.0).unwrap(),
                zoo::indicator_box(s, vec![-1.0, -0.5, 0.0], vec![1.0, 0.5, 2.0]).unwrap(),
            ];
            for t in &ops {
                let x = Point(vec![1.7, -0.4, 2.6]);
                let xs = Covector(vec![0.3, 1.1, -0.8]);
                let sol = solve_translated_inclusion(t, &x, &xs, &opts).unwrap();
                assert!(sol.residual <= opts.tol, "{} p={p}: {}", t.label(), sol.residual);
                let u = Point(sub(&sol.z, &x));
                assert!(s.eps_duality_gap(&u, &sol.w_star).unwrap() <= opts.tol);
                let sol = solve_my_system(t, &x, 0.3, &opts).unwrap();
                assert!(sol.residual <= opts.tol);
            }
        }
    }

    #[test]
    fn non_euclidean_linear_newton() {
        let opts = SolverOptions::default();
        for p in [1.5, 3.0] {
            let s = NormedSpace::new(2, p).unwrap();
            let t = zoo::linear(s, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 0.5])).unwrap();
            let sol = solve_my_system(&t, &Point(vec![1.0, -3.0]), 0.4, &opts).unwrap();
            assert!(sol.residual <= opts.tol);
            assert_eq!(sol.method, Method::Newton);
        }
    }

    #[test]
    fn yosida_jacobian_matches_finite_differences() {
        let opts = SolverOptions::default();
        let t = zoo::indicator_ball(r(2), vec![0.0, 0.0], 1.0).unwrap();
        let y = yosida_operator(&t, 0.3, &opts).unwrap();
        let z = [1.4, 0.9];
        let exact = y.jacobian(&z).unwrap().unwrap();
        let fd = finite_difference_jacobian(|v| y.apply_single(v).unwrap(), &z).unwrap();
        assert!((exact - fd).amax() < 1e-5);
    }
}
