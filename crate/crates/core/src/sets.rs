//! Structural descriptions of the sets returned by operator evaluation.
//!
//! Sets are never enumerated. Each description supports nearest-point
//! queries (Euclidean), membership up to a tolerance, a canonical selection,
//! and Minkowski sums.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::space::{add, norm2, sub, Covector};

/// A closed interval `[lo, hi]`, possibly unbounded on either side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn real_line() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = if self.lo == f64::NEG_INFINITY {
            "(-inf".to_string()
        } else {
            format!("[{}", self.lo)
        };
        let hi = if self.hi == f64::INFINITY {
            "inf)".to_string()
        } else {
            format!("{}]", self.hi)
        };
        write!(f, "{lo}, {hi}")
    }
}

/// `conv(points) + cone(rays) + span(lines)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    pub points: Vec<Covector>,
    pub rays: Vec<Covector>,
    pub lines: Vec<Covector>,
}

impl Polyhedron {
    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    fn nearest(&self, v: &[f64]) -> Covector {
        let n = v.len();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for r in &self.rays {
            cols.push(r.0.clone());
        }
        for l in &self.lines {
            cols.push(l.0.clone());
            cols.push(l.iter().map(|x| -x).collect());
        }
        if self.points.len() == 1 {
            let apex = &self.points[0];
            if cols.is_empty() {
                return apex.clone();
            }
            let target = sub(v, apex);
            let coef = nnls(&cols, &target);
            let mut out = apex.0.clone();
            for (c, col) in coef.iter().zip(&cols) {
                for i in 0..n {
                    out[i] += c * col[i];
                }
            }
            return Covector(out);
        }
        // Several vertices: the simplex constraint on the vertex weights is
        // enforced by a heavily weighted extra row.
        let scale = 1.0
            + self
                .points
                .iter()
                .map(|p| norm2(p))
                .fold(norm2(v), f64::max);
        let weight = 1e4 * scale;
        let mut aug: Vec<Vec<f64>> = self
            .points
            .iter()
            .map(|p| {
                let mut c = p.0.clone();
                c.push(weight);
                c
            })
            .collect();
        let k = aug.len();
        for c in &cols {
            let mut c = c.clone();
            c.push(0.0);
            aug.push(c);
        }
        let mut target = v.to_vec();
        target.push(weight);
        let coef = nnls(&aug, &target);
        let wsum: f64 = coef[..k].iter().sum();
        let mut out = vec![0.0; n];
        for (j, (c, col)) in coef.iter().zip(&aug).enumerate() {
            let c = if j < k && wsum > 0.0 { c / wsum } else { *c };
            for i in 0..n {
                out[i] += c * col[i];
            }
        }
        Covector(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SetDescription {
    Empty,
    Singleton(Covector),
    /// A finite, generally non-convex, set of covectors.
    Finite(Vec<Covector>),
    /// Cartesian product of closed intervals.
    Boxed(Vec<Interval>),
    Polyhedron(Polyhedron),
}

impl SetDescription {
    pub fn is_empty(&self) -> bool {
        match self {
            SetDescription::Empty => true,
            SetDescription::Finite(v) => v.is_empty(),
            _ => false,
        }
    }

    /// Single element, or `None` for the empty set and genuinely multivalued sets.
    pub fn as_singleton(&self) -> Option<Covector> {
        match self {
            SetDescription::Singleton(c) => Some(c.clone()),
            SetDescription::Finite(v) if v.len() == 1 => Some(v[0].clone()),
            SetDescription::Boxed(iv) if iv.iter().all(|i| i.lo == i.hi) => {
                Some(Covector(iv.iter().map(|i| i.lo).collect()))
            }
            SetDescription::Polyhedron(p)
                if p.points.len() == 1 && p.rays.is_empty() && p.lines.is_empty() =>
            {
                Some(p.points[0].clone())
            }
            _ => None,
        }
    }

    /// Euclidean nearest point of the set to `v`; `None` when empty.
    pub fn nearest(&self, v: &[f64]) -> Option<Covector> {
        match self {
            SetDescription::Empty => None,
            SetDescription::Singleton(c) => Some(c.clone()),
            SetDescription::Finite(pts) => pts
                .iter()
                .map(|p| (norm2(&sub(v, p)), p))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, p)| p.clone()),
            SetDescription::Boxed(iv) => Some(Covector(
                iv.iter().zip(v).map(|(i, &x)| i.clamp(x)).collect(),
            )),
            SetDescription::Polyhedron(p) => Some(p.nearest(v)),
        }
    }

    /// Euclidean distance from `v`; `+∞` for the empty set.
    pub fn distance(&self, v: &[f64]) -> f64 {
        match self.nearest(v) {
            Some(c) => norm2(&sub(v, &c)),
            None => f64::INFINITY,
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// Minimum-norm element.
    pub fn select(&self) -> Option<Covector> {
        match self {
            SetDescription::Empty => None,
            _ => {
                let n = self.ambient_dim()?;
                self.nearest(&vec![0.0; n])
            }
        }
    }

    pub fn ambient_dim(&self) -> Option<usize> {
        match self {
            SetDescription::Empty => None,
            SetDescription::Singleton(c) => Some(c.dim()),
            SetDescription::Finite(v) => v.first().map(|c| c.dim()),
            SetDescription::Boxed(iv) => Some(iv.len()),
            SetDescription::Polyhedron(p) => Some(p.dim()),
        }
    }

    /// Convex descriptions as `conv + cone + span`; `None` for empty or
    /// non-convex (finite, multi-element) sets.
    pub fn to_polyhedron(&self) -> Option<Polyhedron> {
        match self {
            SetDescription::Empty => None,
            SetDescription::Singleton(c) => Some(Polyhedron {
                points: vec![c.clone()],
                rays: vec![],
                lines: vec![],
            }),
            SetDescription::Finite(v) if v.len() == 1 => SetDescription::Singleton(v[0].clone()).to_polyhedron(),
            SetDescription::Finite(_) => None,
            SetDescription::Boxed(iv) => Some(box_to_polyhedron(iv)),
            SetDescription::Polyhedron(p) => Some(p.clone()),
        }
    }

    /// Minkowski sum `A + B`.
    pub fn minkowski_sum(&self, other: &SetDescription) -> SetDescription {
        use SetDescription::*;
        match (self, other) {
            (Empty, _) | (_, Empty) => Empty,
            (Singleton(a), Singleton(b)) => Singleton(Covector(add(a, b))),
            (Boxed(a), Boxed(b)) => Boxed(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| Interval::new(x.lo + y.lo, x.hi + y.hi))
                    .collect(),
            ),
            (Finite(pts), b) | (b, Finite(pts)) => {
                // Union of translates; only representable when the other set is finite too.
                let singles: Option<Vec<Covector>> = match b {
                    Finite(q) => Some(q.clone()),
                    _ => b.as_singleton().map(|s| vec![s]),
                };
                match singles {
                    Some(q) => Finite(
                        pts.iter()
                            .flat_map(|p| q.iter().map(move |s| Covector(add(p, s))))
                            .collect(),
                    ),
                    None if pts.len() == 1 => Singleton(pts[0].clone()).minkowski_sum(b),
                    None => {
                        // a union of translated convex sets is not convex; use its hull
                        let hull = crate::sets::Polyhedron {
                            points: pts.clone(),
                            rays: vec![],
                            lines: vec![],
                        };
                        Polyhedron(hull).minkowski_sum(b)
                    }
                }
            }
            (a, b) => {
                let (pa, pb) = match (a.to_polyhedron(), b.to_polyhedron()) {
                    (Some(pa), Some(pb)) => (pa, pb),
                    _ => return Empty,
                };
                let mut points = Vec::new();
                for p in &pa.points {
                    for q in &pb.points {
                        points.push(Covector(add(p, q)));
                    }
                }
                Polyhedron(crate::sets::Polyhedron {
                    points,
                    rays: pa.rays.iter().chain(&pb.rays).cloned().collect(),
                    lines: pa.lines.iter().chain(&pb.lines).cloned().collect(),
                })
            }
        }
    }
}

impl fmt::Display for SetDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetDescription::Empty => write!(f, "∅"),
            SetDescription::Singleton(c) => write!(f, "{{{:?}}}", c.0),
            SetDescription::Finite(v) => {
                let parts: Vec<String> = v.iter().map(|c| format!("{:?}", c.0)).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            SetDescription::Boxed(iv) => {
                let parts: Vec<String> = iv.iter().map(|i| i.to_string()).collect();
                write!(f, "{}", parts.join(" × "))
            }
            SetDescription::Polyhedron(p) => write!(
                f,
                "conv{:?} + cone{:?} + span{:?}",
                p.points.iter().map(|c| &c.0).collect::<Vec<_>>(),
                p.rays.iter().map(|c| &c.0).collect::<Vec<_>>(),
                p.lines.iter().map(|c| &c.0).collect::<Vec<_>>()
            ),
        }
    }
}

fn box_to_polyhedron(iv: &[Interval]) -> Polyhedron {
    let n = iv.len();
    let mut base = vec![0.0; n];
    let mut rays = Vec::new();
    let mut lines = Vec::new();
    let mut bounded = Vec::new();
    for (i, it) in iv.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        match (it.lo.is_finite(), it.hi.is_finite()) {
            (true, true) => {
                base[i] = it.lo;
                if it.hi > it.lo {
                    bounded.push(i);
                }
            }
            (true, false) => {
                base[i] = it.lo;
                rays.push(Covector(e));
            }
            (false, true) => {
                base[i] = it.hi;
                e[i] = -1.0;
                rays.push(Covector(e));
            }
            (false, false) => lines.push(Covector(e)),
        }
    }
    // Vertices of the bounded part: 2^k corners.
    let mut points = vec![base];
    for &i in &bounded {
        let mut next = Vec::with_capacity(points.len() * 2);
        for p in points {
            let mut q = p.clone();
            q[i] = iv[i].hi;
            next.push(p);
            next.push(q);
        }
        points = next;
    }
    Polyhedron {
        points: points.into_iter().map(Covector).collect(),
        rays,
        lines,
    }
}

/// Nonnegative least squares `min ‖Σ cⱼ colⱼ − b‖, c ≥ 0` (Lawson–Hanson).
pub(crate) fn nnls(cols: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    let k = cols.len();
    // work with unit columns and a unit right-hand side so tolerances are relative
    let bmax = b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if bmax == 0.0 || k == 0 {
        return vec![0.0; k];
    }
    let col_norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let a = DMatrix::from_fn(m, k, |i, j| {
        if col_norms[j] > 0.0 {
            cols[j][i] / col_norms[j]
        } else {
            0.0
        }
    });
    let bv = DVector::from_iterator(m, b.iter().map(|v| v / bmax));
    let tol = 1e-13 * (m.max(k) as f64);

    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let grad = |x: &DVector<f64>| a.transpose() * (&bv - &a * x);

    for _ in 0..(3 * k + 10) {
        let w = grad(&x);
        let cand = (0..k)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let t = match cand {
            Some(t) if w[t] > tol => t,
            _ => break,
        };
        passive[t] = true;
        for _ in 0..(3 * k + 10) {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sub_a = DMatrix::from_fn(m, idx.len(), |i, j| a[(i, idx[j])]);
            let s_p = sub_a
                .clone()
                .svd(true, true)
                .solve(&bv, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            let mut s = DVector::zeros(k);
            for (jj, &j) in idx.iter().enumerate() {
                s[j] = s_p[jj];
            }
            if idx.iter().all(|&j| s[j] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &j in &idx {
                if s[j] <= 0.0 {
                    let d = x[j] - s[j];
                    if d > 0.0 {
                        alpha = alpha.min(x[j] / d);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + (&s - &x) * alpha;
            for &j in &idx {
                if x[j] <= 1e-15 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x.iter()
        .zip(&col_norms)
        .map(|(v, c)| if *c > 0.0 { v.max(0.0) * bmax / c } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[f64]) -> Covector {
        Covector(v.to_vec())
    }

    #[test]
    fn interval_display() {
        assert_eq!(Interval::new(-1.0, 1.0).to_string(), "[-1, 1]");
        assert_eq!(Interval::new(0.0, f64::INFINITY).to_string(), "[0, inf)");
    }

    #[test]
    fn boxed_distance_is_clamp() {
        let s = SetDescription::Boxed(vec![Interval::new(-1.0, 1.0), Interval::new(0.0, f64::INFINITY)]);
        assert_eq!(s.distance(&[0.5, 3.0]), 0.0);
        assert!((s.distance(&[2.0, -1.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.select().unwrap().0, vec![0.0, 0.0]);
    }

    #[test]
    fn ray_projection() {
        let s = SetDescription::Polyhedron(Polyhedron {
            points: vec![cv(&[0.0, 0.0])],
            rays: vec![cv(&[1.0, 1.0])],
            lines: vec![],
        });
        let near = s.nearest(&[2.0, 0.0]).unwrap();
        assert!((near[0] - 1.0).abs() < 1e-12 && (near[1] - 1.0).abs() < 1e-12);
        assert!((s.distance(&[-1.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_rays_make_a_line() {
        // N_C(1,0) + N_D(1,0) for unit balls centered at (0,0), (2,0).
        let a = SetDescription::Polyhedron(Polyhedron {
            points: vec![cv(&[0.0, 0.0])],
            rays: vec![cv(&[1.0, 0.0])],
            lines: vec![],
        });
        let b = SetDescription::Polyhedron(Polyhedron {
            points: vec![cv(&[0.0, 0.0])],
            rays: vec![cv(&[-1.0, 0.0])],
            lines: vec![],
        });
        let sum = a.minkowski_sum(&b);
        assert!(sum.contains(&[-5.0, 0.0], 1e-12));
        assert!(sum.contains(&[3.0, 0.0], 1e-12));
        assert!((sum.distance(&[0.0, 1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polyhedron_with_many_vertices() {
        let s = SetDescription::Boxed(vec![Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]);
        let p = SetDescription::Polyhedron(s.to_polyhedron().unwrap());
        assert_eq!(p.to_polyhedron().unwrap().points.len(), 4);
        for v in [[0.2, 0.3], [3.0, 0.0], [2.0, -2.0]] {
            assert!((p.distance(&v) - s.distance(&v)).abs() < 1e-6, "{v:?}");
        }
    }

    #[test]
    fn nnls_basic() {
        let cols = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c = nnls(&cols, &[2.0, -3.0]);
        assert_eq!(c, vec![2.0, 0.0]);
    }
}
