//! Fitzpatrick functions of sampled graphs, the representative obtained by
//! conjugating the Fitzpatrick function of the inverse, and grid certificates
//! of the inequality `h ≥ π` with equality on the samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome};
use crate::operator::{SampledGraph, GRAPH_MONOTONE_TOL};
use crate::space::{dot, Covector, Point, DEFAULT_TOL};
use crate::zoo::grid;

fn check_pair(graph: &SampledGraph, x: &[f64], x_star: &[f64]) -> Result<()> {
    let space = graph.space();
    space.check(x)?;
    space.check(x_star)
}

/// `φ_G(x, x*) = max over (y, y*) ∈ G of ⟨y, x*⟩ + ⟨x, y*⟩ − ⟨y, y*⟩`.
pub fn fitzpatrick_value(graph: &SampledGraph, x: &Point, x_star: &Covector) -> Result<f64> {
    check_pair(graph, x, x_star)?;
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Ok(graph
        .pairs()
        .iter()
        .map(|(y, ys)| dot(y, x_star) + dot(x, ys) - dot(y, ys))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Conjugate of the sample-restricted Fitzpatrick function of `G⁻¹`:
/// `min Σ μᵢ⟨yᵢ, yᵢ*⟩` over convex weights with `Σ μᵢ(yᵢ, yᵢ*) = (x, x*)`,
/// and `+∞` when no such weights exist.
pub fn representative_value(graph: &SampledGraph, x: &Point, x_star: &Covector) -> Result<f64> {
    check_pair(graph, x, x_star)?;
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let n = x.dim();
    let pairs = graph.pairs();
    let mut a = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        a.push(pairs.iter().map(|(y, _)| y[i]).collect());
    }
    for i in 0..n {
        a.push(pairs.iter().map(|(_, ys)| ys[i]).collect());
    }
    a.push(vec![1.0; pairs.len()]);
    let mut b: Vec<f64> = x.to_vec();
    b.extend_from_slice(x_star);
    b.push(1.0);
    let c: Vec<f64> = pairs.iter().map(|(y, ys)| dot(y, ys)).collect();
    Ok(match lp::solve(&a, &b, &c)? {
        LpOutcome::Optimal { value, .. } => value,
        LpOutcome::Infeasible => f64::INFINITY,
    })
}

/// Uniform grid `lo, lo + step, …, hi` on every axis of `X × X*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: -2.0,
            hi: 2.0,
            step: 0.1,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && self.step.is_finite() && self.step > 0.0;
        if !ok {
            return Err(Error::InvalidSet(format!(
                "grid [{}, {}] with step {} is not a valid grid",
                self.lo, self.hi, self.step
            )));
        }
        Ok(())
    }

    /// All grid points of `X × X*` with `dim X = n`, in lexicographic order.
    pub fn points(&self, n: usize) -> Vec<(Point, Covector)> {
        let axis = grid(self.lo, self.hi, self.step);
        let k = axis.len();
        let total = k.pow(2 * n as u32);
        (0..total)
            .map(|mut idx| {
                let mut coords = vec![0.0; 2 * n];
                for c in coords.iter_mut().rev() {
                    *c = axis[idx % k];
                    idx /= k;
                }
                let x_star = coords.split_off(n);
                (Point(coords), Covector(x_star))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateStatus {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedPoint {
    pub x: Point,
    pub x_star: Covector,
    /// `h(x, x*) − ⟨x, x*⟩`, `+∞` outside the domain of `h`.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    /// Smallest finite slack over grid and samples.
    pub min_slack: f64,
    /// Grid points with `|h − π| ≤ tol`.
    pub equality_points: Vec<EvaluatedPoint>,
    /// Grid or sample points with `h < π − tol`.
    pub violations: Vec<EvaluatedPoint>,
    /// Graph samples where equality failed.
    pub unmatched_samples: Vec<EvaluatedPoint>,
    /// Every sample has an equality grid point within one grid diagonal.
    pub graph_covered: bool,
    pub status: CertificateStatus,
    pub grid: GridSpec,
    pub tol: f64,
    pub n_grid: usize,
}

impl CertificateReport {
    pub fn to_json(&self, graph: &SampledGraph) -> serde_json::Value {
        serde_json::json!({
            "status": self.status,
            "min_slack": if self.min_slack.is_finite() { serde_json::json!(self.min_slack) } else { serde_json::Value::Null },
            "n_equality": self.equality_points.len(),
            "n_violations": self.violations.len(),
            "grid_spec": self.grid,
            "graph_hash": graph_hash(graph),
        })
    }
}

/// SHA-256 of the samples' little-endian bit patterns, hex encoded.
pub fn graph_hash(graph: &SampledGraph) -> String {
    let mut h = Sha256::new();
    for (x, xs) in graph.pairs() {
        for v in x.iter().chain(xs.iter()) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize().as_slice())
}

fn evaluate(graph: &SampledGraph, x: &Point, x_star: &Covector) -> Result<EvaluatedPoint> {
    let h = representative_value(graph, x, x_star)?;
    Ok(EvaluatedPoint {
        x: x.clone(),
        x_star: x_star.clone(),
        slack: h - dot(x, x_star),
    })
}

/// Check `h ≥ π` on a grid and `h = π` on the samples of a monotone graph.
pub fn certify_representative(graph: &SampledGraph, spec: &GridSpec, tol: f64) -> Result<CertificateReport> {
    spec.validate()?;
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if let Some((i, j, product)) = graph.first_violation(GRAPH_MONOTONE_TOL) {
        return Err(Error::NonMonotoneGraph { i, j, product });
    }
    let n = graph.space().dim();
    let grid_pts = spec.points(n);
    let grid_eval: Vec<EvaluatedPoint> = grid_pts
        .par_iter()
        .map(|(x, xs)| evaluate(graph, x, xs))
        .collect::<Result<_>>()?;
    let sample_eval: Vec<EvaluatedPoint> = graph
        .pairs()
        .par_iter()
        .map(|(x, xs)| evaluate(graph, x, xs))
        .collect::<Result<_>>()?;

    let min_slack = grid_eval
        .iter()
        .chain(&sample_eval)
        .map(|e| e.slack)
        .filter(|s| s.is_finite())
        .fold(f64::INFINITY, f64::min);
    let violations: Vec<EvaluatedPoint> = grid_eval
        .iter()
        .chain(&sample_eval)
        .filter(|e| e.slack < -tol)
        .cloned()
        .collect();
    let equality_points: Vec<EvaluatedPoint> = grid_eval.iter().filter(|e| e.slack.abs() <= tol).cloned().collect();
    let unmatched_samples: Vec<EvaluatedPoint> = sample_eval.iter().filter(|e| !(e.slack.abs() <= tol)).cloned().collect();

    let radius = spec.step * ((2 * n) as f64).sqrt() * (1.0 + 1e-9);
    let graph_covered = graph.pairs().iter().all(|(x, xs)| {
        equality_points.iter().any(|e| {
            let d2: f64 = x
                .iter()
                .zip(e.x.iter())
                .chain(xs.iter().zip(e.x_star.iter()))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() <= radius
        })
    });
    let status = if violations.is_empty() && unmatched_samples.is_empty() {
        CertificateStatus::Pass
    } else {
        CertificateStatus::Fail
    };
    Ok(CertificateReport {
        min_slack,
        equality_points,
        violations,
        unmatched_samples,
        graph_covered,
        status,
        grid: *spec,
        tol,
        n_grid: grid_pts.len(),
    })
}

/// [`certify_representative`] with the default grid and tolerance.
pub fn certify_default(graph: &SampledGraph) -> Result<CertificateReport> {
    certify_representative(graph, &GridSpec::default(), DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormedSpace;
    use crate::zoo;

    fn line() -> NormedSpace {
        NormedSpace::euclidean(1).unwrap()
    }

    fn pair(x: f64, xs: f64) -> (Point, Covector) {
        (Point(vec![x]), Covector(vec![xs]))
    }

    #[test]
    fn fitzpatrick_examples() {
        let single = SampledGraph::new(line(), vec![pair(0.0, 0.0)]).unwrap();
        assert_eq!(fitzpatrick_value(&single, &Point(vec![1.3]), &Covector(vec![-0.4])).unwrap(), 0.0);
        let id = zoo::identity_graph_samples(-2.0, 2.0, 0.01);
        let (x, xs) = pair(1.0, 1.0);
        assert!((fitzpatrick_value(&id, &x, &xs).unwrap() - 1.0).abs() < 1e-12);
        let (x, xs) = pair(1.0, 0.0);
        assert!((fitzpatrick_value(&id, &x, &xs).unwrap() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn representative_examples() {
        let g = zoo::sign_graph_samples(0.1);
        let (x, xs) = pair(0.0, 0.3);
        assert!(representative_value(&g, &x, &xs).unwrap().abs() < 1e-12);
        let (x, xs) = pair(0.0, 2.0);
        assert_eq!(representative_value(&g, &x, &xs).unwrap(), f64::INFINITY);
        for (y, ys) in g.pairs() {
            let h = representative_value(&g, y, ys).unwrap();
            assert!((h - dot(y, ys)).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_points_order() {
        let spec = GridSpec {
            lo: 0.0,
            hi: 1.0,
            step: 1.0,
        };
        let pts = spec.points(1);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1], pair(0.0, 1.0));
        assert_eq!(pts[2], pair(1.0, 0.0));
    }

    #[test]
    fn non_monotone_graph_is_typed_error() {
        let g = SampledGraph::new(line(), vec![pair(0.0, 1.0), pair(1.0, 0.0)]).unwrap();
        assert!(matches!(
            certify_representative(&g, &GridSpec::default(), 1e-8),
            Err(Error::NonMonotoneGraph { .. })
        ));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = zoo::sign_graph_samples(0.1);
        let b = zoo::sign_graph_samples(0.1);
        let c = zoo::sign_graph_samples(0.2);
        assert_eq!(graph_hash(&a), graph_hash(&b));
        assert_ne!(graph_hash(&a), graph_hash(&c));
        assert_eq!(graph_hash(&a).len(), 64);
    }
}
