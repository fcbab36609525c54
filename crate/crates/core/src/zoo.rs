//! Named operators used by scenarios and tests.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::operator::{ConvexSet, OperatorSpec, SampledGraph, SubdiffOracle, BOUNDARY_TOL};
use crate::sets::{Interval, SetDescription};
use crate::space::{sign, Covector, NormedSpace, Point};

/// `∂‖·‖₁`; on the real line this is `∂|·|`.
pub fn abs(space: NormedSpace) -> OperatorSpec {
    shifted_abs(space, vec![0.0; space.dim()]).with_label("abs")
}

/// `∂f` for `f(x) = Σ |xᵢ − cᵢ|`. Panics if `shift` has the wrong length.
pub fn shifted_abs(space: NormedSpace, shift: Vec<f64>) -> OperatorSpec {
    assert_eq!(shift.len(), space.dim(), "shift dimension");
    let c = Arc::new(shift);
    let (c1, c2, c3, c4) = (c.clone(), c.clone(), c.clone(), c.clone());
    let oracle = SubdiffOracle {
        value: Arc::new(move |x: &[f64]| x.iter().zip(c1.iter()).map(|(a, b)| (a - b).abs()).sum()),
        prox: Arc::new(move |v: &[f64], t: f64| {
            v.iter()
                .zip(c2.iter())
                .map(|(vi, ci)| {
                    let d = vi - ci;
                    ci + sign(d) * (d.abs() - t).max(0.0)
                })
                .collect()
        }),
        prox_jacobian: Some(Arc::new(move |v: &[f64], t: f64| {
            let n = v.len();
            DMatrix::from_fn(n, n, |i, j| {
                if i == j && (v[i] - c3[i]).abs() > t {
                    1.0
                } else {
                    0.0
                }
            })
        })),
        subdifferential: Some(Arc::new(move |x: &[f64]| {
            SetDescription::Boxed(
                x.iter()
                    .zip(c4.iter())
                    .map(|(xi, ci)| {
                        let d = xi - ci;
                        if d.abs() <= BOUNDARY_TOL * (1.0 + ci.abs()) {
                            Interval::new(-1.0, 1.0)
                        } else {
                            Interval::point(sign(d))
                        }
                    })
                    .collect(),
            )
        })),
        selection: None,
    };
    OperatorSpec::subdifferential(space, "shifted_abs", oracle)
}

/// Normal cone to the closed Euclidean ball.
pub fn indicator_ball(space: NormedSpace, center: Vec<f64>, radius: f64) -> Result<OperatorSpec> {
    OperatorSpec::normal_cone(space, "indicator_ball", ConvexSet::Ball { center, radius })
}

/// Normal cone to the box `[lo, hi]`.
pub fn indicator_box(space: NormedSpace, lo: Vec<f64>, hi: Vec<f64>) -> Result<OperatorSpec> {
    OperatorSpec::normal_cone(space, "indicator_box", ConvexSet::Box { lo, hi })
}

pub fn linear(space: NormedSpace, matrix: DMatrix<f64>) -> Result<OperatorSpec> {
    OperatorSpec::linear(space, "linear", matrix)
}

pub fn zero(space: NormedSpace) -> OperatorSpec {
    let n = space.dim();
    OperatorSpec::linear(space, "zero", DMatrix::zeros(n, n)).expect("zero matrix is monotone")
}

pub fn identity(space: NormedSpace) -> OperatorSpec {
    let n = space.dim();
    OperatorSpec::linear(space, "identity", DMatrix::identity(n, n)).expect("identity is monotone")
}

pub fn graph(space: NormedSpace, pairs: Vec<(Point, Covector)>) -> Result<OperatorSpec> {
    Ok(OperatorSpec::graph("graph", SampledGraph::new(space, pairs)?))
}

/// Samples of the graph of `∂|·|` on `[−2, 2]`, vertical segment at 0 included.
pub fn sign_graph_samples(step: f64) -> SampledGraph {
    let space = NormedSpace::euclidean(1).expect("valid space");
    let mut pairs = Vec::new();
    for x in grid(-2.0, 2.0, step) {
        if x != 0.0 {
            pairs.push((Point(vec![x]), Covector(vec![sign(x)])));
        }
    }
    for s in grid(-1.0, 1.0, step) {
        pairs.push((Point(vec![0.0]), Covector(vec![s])));
    }
    SampledGraph::new(space, pairs).expect("nonempty")
}

/// Samples `(x, x)` of the identity on `[lo, hi]`.
pub fn identity_graph_samples(lo: f64, hi: f64, step: f64) -> SampledGraph {
    let space = NormedSpace::euclidean(1).expect("valid space");
    let pairs = grid(lo, hi, step)
        .into_iter()
        .map(|x| (Point(vec![x]), Covector(vec![x])))
        .collect();
    SampledGraph::new(space, pairs).expect("nonempty")
}

/// `lo, lo + step, …, hi`, computed from integer offsets so grid values are reproducible.
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let m = ((hi - lo) / step).round() as i64;
    (0..=m)
        .map(|k| {
            let v = lo + k as f64 * step;
            // snap values that should be exactly zero
            if v.abs() < 1e-12 * step {
                0.0
            } else {
                v
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = grid(-2.0, 2.0, 0.1);
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], -2.0);
        assert_eq!(g[20], 0.0);
        assert!((g[40] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_abs_prox_and_set() {
        let s = NormedSpace::euclidean(1).unwrap();
        let t = shifted_abs(s, vec![0.5]);
        assert_eq!(t.prox(&[3.0], 1.0).unwrap(), vec![2.0]);
        assert_eq!(t.prox(&[0.7], 1.0).unwrap(), vec![0.5]);
        assert_eq!(
            t.eval(&Point(vec![0.5])).unwrap(),
            SetDescription::Boxed(vec![Interval::new(-1.0, 1.0)])
        );
        assert_eq!(t.eval(&Point(vec![0.0])).unwrap().as_singleton().unwrap().0, vec![-1.0]);
    }

    #[test]
    fn sample_graphs_are_monotone() {
        assert!(sign_graph_samples(0.1).is_monotone());
        assert!(identity_graph_samples(-2.0, 2.0, 0.1).is_monotone());
    }
}
