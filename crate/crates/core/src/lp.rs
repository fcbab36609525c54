//! Dense two-phase simplex for small standard-form programs
//! `min cᵀμ  s.t.  Aμ = b, μ ≥ 0`, with Bland's rule against cycling.

use crate::error::{Error, Result};

/// Feasibility tolerance on the phase-one objective.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, solution: Vec<f64> },
    Infeasible,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Reduced costs; the last entry holds minus the objective value.
    obj: Vec<f64>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                    row[col] = 0.0;
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[col] = 0.0;
        }
        self.basis[r] = col;
    }

    /// Bland's rule over columns `0..allowed`. Returns `Ok(false)` at optimality.
    fn step(&mut self, allowed: usize) -> Result<bool> {
        let Some(col) = (0..allowed).find(|&j| self.obj[j] < -PIVOT_TOL) else {
            return Ok(false);
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.rows.len() {
            let a = self.rows[i][col];
            if a > PIVOT_TOL {
                let ratio = self.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - PIVOT_TOL || (ratio <= best + PIVOT_TOL && self.basis[i] < self.basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::LinearProgram("objective unbounded below".into()));
        };
        self.pivot(r, col);
        Ok(true)
    }

    fn run(&mut self, allowed: usize, max_pivots: usize) -> Result<()> {
        for _ in 0..max_pivots {
            if !self.step(allowed)? {
                return Ok(());
            }
        }
        Err(Error::LinearProgram(format!("no optimum after {max_pivots} pivots")))
    }
}

/// Solve `min cᵀμ  s.t.  Aμ = b, μ ≥ 0`, with `A` given row by row.
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpOutcome> {
    let m = a.len();
    let n = c.len();
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: row.len(),
        });
    }
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, (row, &bi)) in a.iter().zip(b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut r: Vec<f64> = row.iter().map(|v| sign * v).collect();
        r.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
        r.push(sign * bi);
        rows.push(r);
    }
    // phase one: minimize the sum of artificials
    let mut obj = vec![0.0; width + 1];
    for r in &rows {
        for j in 0..n {
            obj[j] -= r[j];
        }
        obj[width] -= r[width];
    }
    let mut t = Tableau {
        rows,
        basis: (n..n + m).collect(),
        obj,
        width,
    };
    let max_pivots = 50 * (n + m) + 100;
    t.run(width, max_pivots)?;
    let scale = 1.0 + b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if -t.obj[width] > FEASIBILITY_TOL * scale {
        return Ok(LpOutcome::Infeasible);
    }
    // drive artificials out of the basis, dropping redundant rows
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            match (0..n).find(|&j| t.rows[i][j].abs() > FEASIBILITY_TOL) {
                Some(j) => t.pivot(i, j),
                None => {
                    t.rows.remove(i);
                    t.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    // phase two
    let mut obj = vec![0.0; width + 1];
    obj[..n].copy_from_slice(c);
    for (r, &bj) in t.rows.iter().zip(&t.basis) {
        let cb = c[bj];
        if cb != 0.0 {
            for (o, v) in obj.iter_mut().zip(r) {
                *o -= cb * v;
            }
        }
    }
    t.obj = obj;
    t.run(n, max_pivots)?;
    let mut solution = vec![0.0; n];
    for (i, &bj) in t.basis.iter().enumerate() {
        solution[bj] = t.rhs(i).max(0.0);
    }
    let value = solution.iter().zip(c).map(|(x, ci)| x * ci).sum();
    Ok(LpOutcome::Optimal { value, solution })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program() {
        // min -x - y  s.t. x + y + s = 1, x - y + t = 0.5
        let a = vec![vec![1.0, 1.0, 1.0, 0.0], vec![1.0, -1.0, 0.0, 1.0]];
        let out = solve(&a, &[1.0, 0.5], &[-1.0, -1.0, 0.0, 0.0]).unwrap();
        match out {
            LpOutcome::Optimal { value, solution } => {
                assert!((value + 1.0).abs() < 1e-12);
                assert!((solution[0] + solution[1] - 1.0).abs() < 1e-12);
            }
            LpOutcome::Infeasible => panic!("feasible program"),
        }
    }

    #[test]
    fn infeasible_program() {
        // x = 2 with x in the simplex {x + y = 1}
        let a = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(solve(&a, &[2.0, 1.0], &[0.0, 0.0]).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 1.0]];
        let out = solve(&a, &[1.5, 1.5, 1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(
            out,
            LpOutcome::Optimal {
                value: 0.5,
                solution: vec![0.5, 0.5]
            }
        );
    }

    #[test]
    fn negative_rhs() {
        let a = vec![vec![-1.0, 1.0]];
        match solve(&a, &[-2.0], &[1.0, 1.0]).unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.0).abs() < 1e-12),
            LpOutcome::Infeasible => panic!(),
        }
    }

    #[test]
    fn unbounded_is_error() {
        let a = vec![vec![1.0, -1.0]];
        assert!(solve(&a, &[0.0], &[-1.0, 0.0]).is_err());
    }
}
