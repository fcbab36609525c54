//! Finite-dimensional real spaces normed by `‖·‖_p`, their duals, and the
//! duality mapping `J = ∂ ½‖·‖²`.

use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance used throughout the crate.
pub const DEFAULT_TOL: f64 = 1e-8;

/// An element of the primal space `X = ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

/// An element of the dual space `X* = ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Covector(pub Vec<f64>);

macro_rules! coords_newtype {
    ($t:ident) => {
        impl $t {
            pub fn zeros(n: usize) -> Self {
                $t(vec![0.0; n])
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $t {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $t {
            fn from(v: Vec<f64>) -> Self {
                $t(v)
            }
        }

        impl From<&[f64]> for $t {
            fn from(v: &[f64]) -> Self {
                $t(v.to_vec())
            }
        }
    };
}

coords_newtype!(Point);
coords_newtype!(Covector);

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `a + t·b`
pub(crate) fn axpy(a: &[f64], t: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * y).collect()
}

/// Sign with `sign(0) = 0`.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    lp_norm(a, 2.0)
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `(Σ|aᵢ|ᵖ)^{1/p}`, scaled by the largest entry to avoid overflow.
pub(crate) fn lp_norm(a: &[f64], p: f64) -> f64 {
    let m = norm_inf(a);
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    if p == 2.0 {
        let s: f64 = a.iter().map(|x| (x / m) * (x / m)).sum();
        return m * s.sqrt();
    }
    let s: f64 = a.iter().map(|x| (x.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// The space `(ℝⁿ, ‖·‖_p)` with dual `(ℝⁿ, ‖·‖_q)`, `1/p + 1/q = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormedSpace {
    dim: usize,
    p: f64,
}

impl NormedSpace {
    pub fn new(dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidExponent(p));
        }
        Ok(NormedSpace { dim, p })
    }

    /// Euclidean space of the given dimension.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(dim, 2.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Dual exponent `q = p / (p − 1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// True when `J` is the identity: `p = 2`, or any `p` on the real line.
    pub fn is_hilbertian(&self) -> bool {
        self.p == 2.0 || self.dim == 1
    }

    pub fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        lp_norm(x, self.p)
    }

    pub fn dual_norm(&self, x_star: &[f64]) -> f64 {
        lp_norm(x_star, self.q())
    }

    /// The duality product `⟨x, x*⟩ = Σ xᵢ x*ᵢ`.
    pub fn pairing(&self, x: &[f64], x_star: &[f64]) -> f64 {
        dot(x, x_star)
    }

    /// `J(x) = ‖x‖_p^{2−p} (|xᵢ|^{p−1} sign xᵢ)ᵢ`, the unique covector with
    /// `⟨x, J(x)⟩ = ‖x‖²` and `‖J(x)‖_q = ‖x‖_p`.
    pub fn duality_map(&self, x: &Point) -> Result<Covector> {
        self.check(x)?;
        Ok(Covector(self.duality_raw(x)))
    }

    pub(crate) fn duality_raw(&self, x: &[f64]) -> Vec<f64> {
        if self.is_hilbertian() {
            return x.to_vec();
        }
        let n = self.norm(x);
        if n == 0.0 {
            return vec![0.0; x.len()];
        }
        // ‖x‖^{2-p} |x_i|^{p-1} = ‖x‖ (|x_i|/‖x‖)^{p-1}
        x.iter()
            .map(|&xi| n * (xi.abs() / n).powf(self.p - 1.0) * sign(xi))
            .collect()
    }

    /// `ℓ_q` on the same coordinates.
    pub(crate) fn dual(&self) -> NormedSpace {
        NormedSpace {
            dim: self.dim,
            p: self.q(),
        }
    }

    /// Inverse of `J`: the duality mapping of the dual norm, `X* → X`.
    pub fn inverse_duality_map(&self, x_star: &Covector) -> Result<Point> {
        self.check(x_star)?;
        if self.is_hilbertian() {
            return Ok(Point(x_star.0.clone()));
        }
        Ok(Point(self.dual().duality_raw(x_star)))
    }

    /// Jacobian of `J` at `v`. Coordinates where `J` is not differentiable
    /// (for `p < 2`, `vᵢ = 0`) are regularized by clamping `|vᵢ|` from below.
    pub(crate) fn duality_jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let n = v.len();
        if self.is_hilbertian() {
            return DMatrix::identity(n, n);
        }
        let nv = self.norm(v);
        if nv == 0.0 {
            return DMatrix::identity(n, n);
        }
        let p = self.p;
        // With u = v/‖v‖: DJ = (p−1) diag(|uᵢ|^{p−2}) + (2−p) g gᵀ, g = |u|^{p−1} sign u.
        let floor = 1e-8;
        let u: Vec<f64> = v.iter().map(|x| x / nv).collect();
        let g: Vec<f64> = u
            .iter()
            .map(|&ui| ui.abs().powf(p - 1.0) * sign(ui))
            .collect();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = (2.0 - p) * g[i] * g[j];
            }
            m[(i, i)] += (p - 1.0) * u[i].abs().max(floor).powf(p - 2.0);
        }
        m
    }

    /// Fenchel–Young gap `½‖u‖_p² + ½‖w‖_q² − ⟨u, w⟩ ≥ 0`.
    ///
    /// `w ∈ J_ε(u)` iff the gap is at most `ε`; `w = J(u)` iff it vanishes.
    pub fn eps_duality_gap(&self, u: &Point, w: &Covector) -> Result<f64> {
        self.check(u)?;
        self.check(w)?;
        Ok(self.gap_raw(u, w))
    }

    pub(crate) fn gap_raw(&self, u: &[f64], w: &[f64]) -> f64 {
        let a = self.norm(u);
        let b = self.dual_norm(w);
        0.5 * a * a + 0.5 * b * b - dot(u, w)
    }

    /// `w ∈ J_ε(u)`, tested through the Fenchel–Young gap.
    pub fn in_eps_duality(&self, u: &Point, w: &Covector, eps: f64) -> Result<bool> {
        Ok(self.eps_duality_gap(u, w)? <= eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(matches!(NormedSpace::new(2, 1.0), Err(Error::InvalidExponent(_))));
        assert!(NormedSpace::new(2, f64::INFINITY).is_err());
        assert!(NormedSpace::new(2, 0.5).is_err());
        assert!(NormedSpace::new(0, 2.0).is_err());
        assert!(NormedSpace::new(3, 1.0001).is_ok());
    }

    #[test]
    fn dual_exponent_identity() {
        for p in [1.5, 2.0, 3.0, 4.0, 7.25] {
            let s = NormedSpace::new(2, p).unwrap();
            assert!(close(1.0 / s.p() + 1.0 / s.q(), 1.0, 1e-15));
        }
    }

    #[test]
    fn euclidean_duality_map_is_identity() {
        let s = NormedSpace::euclidean(2).unwrap();
        let j = s.duality_map(&Point(vec![3.0, 4.0])).unwrap();
        assert_eq!(j.0, vec![3.0, 4.0]);
    }

    #[test]
    fn duality_map_at_zero() {
        for p in [1.5, 2.0, 3.0] {
            let s = NormedSpace::new(3, p).unwrap();
            assert_eq!(s.duality_map(&Point::zeros(3)).unwrap().0, vec![0.0; 3]);
        }
    }

    #[test]
    fn duality_map_p3_closed_form() {
        let s = NormedSpace::new(2, 3.0).unwrap();
        let x = Point(vec![1.0, 1.0]);
        let j = s.duality_map(&x).unwrap();
        let expected = 2f64.powf(-1.0 / 3.0);
        assert!(close(j[0], expected, 1e-14) && close(j[1], expected, 1e-14));
        // ⟨x, J x⟩ = ‖x‖₃² = 2^{2/3}; ‖J x‖_{3/2} = ‖x‖₃ = 2^{1/3}
        assert!(close(s.pairing(&x, &j), 2f64.powf(2.0 / 3.0), 1e-14));
        assert!(close(s.dual_norm(&j), 2f64.powf(1.0 / 3.0), 1e-14));
    }

    #[test]
    fn dimension_mismatch() {
        let s = NormedSpace::euclidean(2).unwrap();
        assert_eq!(
            s.duality_map(&Point(vec![1.0])),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(s.eps_duality_gap(&Point(vec![1.0, 0.0]), &Covector(vec![1.0])).is_err());
    }

    #[test]
    fn eps_gap_examples() {
        let s = NormedSpace::euclidean(2).unwrap();
        let g = s.eps_duality_gap(&Point(vec![1.0, 0.0]), &Covector(vec![1.0, 0.0])).unwrap();
        assert_eq!(g, 0.0);
        let t = 0.7;
        let g = s.eps_duality_gap(&Point::zeros(2), &Covector(vec![t, 0.0])).unwrap();
        assert!(close(g, t * t / 2.0, 1e-15));
        assert!(s.in_eps_duality(&Point::zeros(2), &Covector(vec![t, 0.0]), t * t / 2.0 + 1e-15).unwrap());
        assert!(!s.in_eps_duality(&Point::zeros(2), &Covector(vec![t, 0.0]), 0.2).unwrap());
        let g = s.eps_duality_gap(&Point(vec![1.0, 0.0]), &Covector(vec![0.0, 1.0])).unwrap();
        assert!(close(g, 1.0, 1e-15));
    }

    #[test]
    fn inverse_duality_roundtrip() {
        let s = NormedSpace::new(3, 1.5).unwrap();
        let x = Point(vec![0.3, -1.2, 2.0]);
        let back = s.inverse_duality_map(&s.duality_map(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(back.iter()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for p in [1.5, 3.0, 4.0] {
            let s = NormedSpace::new(3, p).unwrap();
            let v = [0.7, -1.3, 0.4];
            let jac = s.duality_jacobian(&v);
            let h = 1e-6;
            for j in 0..3 {
                let mut a = v;
                let mut b = v;
                a[j] += h;
                b[j] -= h;
                let fa = s.duality_raw(&a);
                let fb = s.duality_raw(&b);
                for i in 0..3 {
                    let fd = (fa[i] - fb[i]) / (2.0 * h);
                    assert!(close(jac[(i, j)], fd, 1e-6), "p={p} ({i},{j}) {} vs {fd}", jac[(i, j)]);
                }
            }
        }
    }
}
