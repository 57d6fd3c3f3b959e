//! Minkowski functional of the absolutely p-convex body built from the
//! positive orthant of the `l_p` ball and the segments `e_i - e_j`, and the
//! lower bound it yields for free p-norms over uniformly discrete spaces.
//!
//! For `x` with negative coordinates `B` and the rest `A`, the body meets the
//! sign orthant of `x` in the reflection of `co_p^+(Z_ij : i in A, j in B)`,
//! where `Z_ij = {a e_i + b e_j : 0 <= a, b <= 1}`. Generators with the same
//! pair merge without increasing `sum lambda^p`, and the caps `a, b <= 1`
//! turn into covering constraints, so the functional is `cost(x)^(1/p)` with
//!
//! ```text
//! cost(x) = min sum lambda_ij^p  s.t.  sum_j lambda_ij >= x_i  (i in A)
//!                                      sum_i lambda_ij >= |x_j| (j in B)
//! ```
//!
//! The objective is concave, so the minimum sits at a vertex of the covering
//! polyhedron. Vertex supports are rooted forests of the bipartite graph in
//! which every non-root vertex is tight; those are enumerated exhaustively.

use crate::error::{Error, Result};
use crate::molecule::Molecule;
use crate::number::{self, Exponent};
use crate::space::QSpace;

/// Largest `|A| * |B|` solved by exhaustive vertex enumeration.
pub const EXACT_VARIABLE_LIMIT: usize = 25;

pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PBodyValue {
    pub value: f64,
    /// False when the heuristic was used; `value` is then an over-estimate.
    pub exact: bool,
    /// Optimal `(i, j, lambda_ij)` entries with `x_i >= 0 > x_j`.
    pub witness: Vec<(usize, usize, f64)>,
}

fn lp_value(x: &[f64], p: &Exponent) -> f64 {
    let sum: f64 = x.iter().map(|v| p.powf(v.abs())).sum();
    p.recip().powf(sum)
}

/// Covering program over rows (demands `rows`) and columns (`cols`).
struct Covering<'a> {
    rows: &'a [f64],
    cols: &'a [f64],
    p: &'a Exponent,
}

const ROOT: usize = usize::MAX;

impl Covering<'_> {
    fn size(&self) -> usize {
        self.rows.len() + self.cols.len()
    }

    fn demand(&self, v: usize) -> f64 {
        if v < self.rows.len() {
            self.rows[v]
        } else {
            self.cols[v - self.rows.len()]
        }
    }

    fn is_row(&self, v: usize) -> bool {
        v < self.rows.len()
    }

    /// Cost and edge loads of the rooted forest `parent`, or `None` if some
    /// tight vertex would need a negative load or a root is under-covered.
    fn evaluate(&self, parent: &[usize], loads: &mut [f64]) -> Option<f64> {
        let m = self.size();
        let mut depth = vec![0usize; m];
        for v in 0..m {
            let mut w = v;
            while parent[w] != ROOT {
                depth[v] += 1;
                w = parent[w];
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(depth[v]));
        let mut received = vec![0.0f64; m];
        let mut cost = 0.0;
        let scale = self.rows.iter().chain(self.cols).cloned().fold(0.0, f64::max).max(1.0);
        for &v in &order {
            if parent[v] == ROOT {
                if received[v] < self.demand(v) - 1e-12 * scale {
                    return None;
                }
                loads[v] = 0.0;
                continue;
            }
            let load = self.demand(v) - received[v];
            if load < -1e-12 * scale {
                return None;
            }
            let load = load.max(0.0);
            loads[v] = load;
            received[parent[v]] += load;
            cost += self.p.powf(load);
        }
        Some(cost)
    }

    fn solve_exact(&self) -> (f64, Vec<(usize, usize, f64)>) {
        let m = self.size();
        let mut parent = vec![ROOT; m];
        let mut loads = vec![0.0; m];
        let mut best = None;
        self.search_acyclic(0, &mut parent, &mut loads, &mut best);
        let (cost, parent) = best.expect("covering polyhedron is nonempty");
        self.evaluate(&parent, &mut loads);
        (cost, self.witness(&parent, &loads))
    }

    fn search_acyclic(&self, v: usize, parent: &mut Vec<usize>, loads: &mut [f64], best: &mut Option<(f64, Vec<usize>)>) {
        let m = self.size();
        if v == m {
            if !has_cycle(parent) {
                if let Some(cost) = self.evaluate(parent, loads) {
                    if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                        *best = Some((cost, parent.clone()));
                    }
                }
            }
            return;
        }
        if v > 0 && !partial_acyclic(parent, v) {
            return;
        }
        parent[v] = ROOT;
        self.search_acyclic(v + 1, parent, loads, best);
        let opposite: Vec<usize> = if self.is_row(v) {
            (self.rows.len()..m).collect()
        } else {
            (0..self.rows.len()).collect()
        };
        for u in opposite {
            parent[v] = u;
            self.search_acyclic(v + 1, parent, loads, best);
        }
        parent[v] = ROOT;
    }

    fn witness(&self, parent: &[usize], loads: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for v in 0..self.size() {
            if parent[v] == ROOT || loads[v] == 0.0 {
                continue;
            }
            let (r, c) = if self.is_row(v) { (v, parent[v]) } else { (parent[v], v) };
            out.push((r, c - self.rows.len(), loads[v]));
        }
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    /// Greedy pairing of the largest outstanding demands; feasible, so its
    /// cost over-estimates the optimum.
    fn solve_greedy(&self) -> (f64, Vec<(usize, usize, f64)>) {
        let mut rows: Vec<f64> = self.rows.to_vec();
        let mut cols: Vec<f64> = self.cols.to_vec();
        let mut lambda = vec![0.0f64; rows.len() * cols.len()];
        let nc = cols.len();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, &x)| (i, x))
                .unwrap()
        };
        loop {
            let (i, ri) = argmax(&rows);
            let (j, cj) = argmax(&cols);
            if ri <= 0.0 && cj <= 0.0 {
                break;
            }
            let step = ri.max(cj);
            lambda[i * nc + j] += step;
            rows[i] = (rows[i] - step).max(0.0);
            cols[j] = (cols[j] - step).max(0.0);
        }
        let cost = lambda.iter().filter(|&&l| l > 0.0).map(|&l| self.p.powf(l)).sum();
        let witness = lambda
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0.0)
            .map(|(k, &l)| (k / nc, k % nc, l))
            .collect();
        (cost, witness)
    }
}

fn has_cycle(parent: &[usize]) -> bool {
    let m = parent.len();
    (0..m).any(|v| {
        let mut w = v;
        for _ in 0..=m {
            if parent[w] == ROOT {
                return false;
            }
            w = parent[w];
        }
        true
    })
}

/// No cycle among vertices `< assigned` whose parents are also `< assigned`.
fn partial_acyclic(parent: &[usize], assigned: usize) -> bool {
    (0..assigned).all(|v| {
        let mut w = v;
        for _ in 0..=assigned {
            let next = parent[w];
            if next == ROOT || next >= assigned {
                return true;
            }
            w = next;
        }
        false
    })
}

/// Minkowski functional of the p-body at `x`.
pub fn pbody_minkowski(x: &[f64], p: &Exponent) -> Result<PBodyValue> {
    p.check_unit()?;
    if x.is_empty() {
        return Err(Error::Parameter("p-body vector must have dimension >= 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("p-body vector has non-finite entries".into()));
    }
    let a: Vec<usize> = (0..x.len()).filter(|&i| x[i] >= 0.0).collect();
    let b: Vec<usize> = (0..x.len()).filter(|&i| x[i] < 0.0).collect();
    if a.is_empty() || b.is_empty() {
        return Ok(PBodyValue { value: lp_value(x, p), exact: true, witness: Vec::new() });
    }
    // all zero rows act alike; keep one
    let mut row_index: Vec<usize> = a.iter().copied().filter(|&i| x[i] > 0.0).collect();
    if let Some(&z) = a.iter().find(|&&i| x[i] == 0.0) {
        row_index.push(z);
    }
    let rows: Vec<f64> = row_index.iter().map(|&i| x[i]).collect();
    let cols: Vec<f64> = b.iter().map(|&j| -x[j]).collect();
    let program = Covering { rows: &rows, cols: &cols, p };
    let exact = rows.len() * cols.len() <= EXACT_VARIABLE_LIMIT;
    let (cost, local) = if exact { program.solve_exact() } else { program.solve_greedy() };
    let witness = local.into_iter().map(|(r, c, l)| (row_index[r], b[c], l)).collect();
    Ok(PBodyValue { value: p.recip().powf(cost), exact, witness })
}

/// `pbody_minkowski(x) <= 1 + 1e-12`.
pub fn pbody_membership(x: &[f64], p: &Exponent) -> Result<bool> {
    Ok(pbody_minkowski(x, p)?.value <= 1.0 + MEMBERSHIP_TOL)
}

/// `max over signs s of (sum_{s a_i >= 0} |a_i|^p)^(1/p)`.
pub fn zeroone_bound_from_coeffs(coeffs: &[f64], p: &Exponent) -> f64 {
    let class = |sign: f64| -> f64 {
        let sum: f64 = coeffs.iter().filter(|&&a| sign * a >= 0.0).map(|&a| p.powf(a.abs())).sum();
        p.recip().powf(sum)
    };
    class(1.0).max(class(-1.0))
}

/// Lower bound for `||mu||` over a space whose distinct points are all at
/// the same distance `c`: `c` times the p-body bound on the off-base
/// coefficients.
pub fn zeroone_lower_bound(space: &QSpace, mu: &Molecule, p: &Exponent) -> Result<f64> {
    p.check_unit()?;
    mu.check_within(space.len())?;
    if space.len() < 2 {
        return Ok(0.0);
    }
    let c = space
        .uniform_distance()
        .ok_or_else(|| Error::NotZeroOne("distinct points are not equidistant".into()))?;
    let coeffs: Vec<f64> = (1..space.len()).map(|i| number::to_f64(&mu.get(i))).collect();
    Ok(c * zeroone_bound_from_coeffs(&coeffs, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Exponent {
        Exponent::from_ratio(1, 2)
    }

    #[test]
    fn nonnegative_is_lp() {
        let v = pbody_minkowski(&[1.0, 4.0, 0.0], &half()).unwrap();
        assert!((v.value - 9.0).abs() < 1e-12);
        assert!(v.exact);
    }

    #[test]
    fn cross_difference_is_one() {
        let v = pbody_minkowski(&[1.0, -1.0], &half()).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        assert_eq!(v.witness, vec![(0, 1, 1.0)]);
    }

    #[test]
    fn one_minus_one_minus_one() {
        for p in [half(), Exponent::from_ratio(1, 3), Exponent::one()] {
            let v = pbody_minkowski(&[1.0, -1.0, -1.0], &p).unwrap();
            assert!((v.value - 2f64.powf(1.0 / p.value())).abs() < 1e-12);
        }
    }

    #[test]
    fn two_minus_one_minus_one() {
        let v = pbody_minkowski(&[2.0, -1.0, -1.0], &half()).unwrap();
        assert!((v.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn path_beats_stars_at_p_one() {
        // rows (1, 2), cols (2, 1): the path costs 3, two stars cost 4
        let v = pbody_minkowski(&[1.0, 2.0, -2.0, -1.0], &Exponent::one()).unwrap();
        assert!((v.value - 3.0).abs() < 1e-12);
        let v = pbody_minkowski(&[1.0, 2.0, -2.0, -1.0], &half()).unwrap();
        let stars = (2.0 * 2f64.sqrt()).powi(2);
        assert!(v.value <= stars + 1e-12);
    }

    #[test]
    fn membership() {
        assert!(pbody_membership(&[1.0, 0.0], &half()).unwrap());
        assert!(!pbody_membership(&[1.0, 1.0], &half()).unwrap());
        assert!(pbody_membership(&[0.0, 0.0, 0.0], &half()).unwrap());
    }

    #[test]
    fn zeroone_bounds() {
        assert!((zeroone_bound_from_coeffs(&[2.0, -1.0], &half()) - 2.0).abs() < 1e-12);
        assert!((zeroone_bound_from_coeffs(&[1.0, 1.0], &half()) - 4.0).abs() < 1e-12);
        assert!((zeroone_bound_from_coeffs(&[3.0, -3.0], &half()) - 3.0).abs() < 1e-12);
        let s = QSpace::zero_one(3, half());
        let mu = Molecule::dipole(1, 2);
        assert!((zeroone_lower_bound(&s, &mu, &half()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_over_estimates() {
        let rows = [1.0, 2.0, 0.5];
        let cols = [2.0, 1.0, 0.5];
        let p = half();
        let program = Covering { rows: &rows, cols: &cols, p: &p };
        let (exact, _) = program.solve_exact();
        let (greedy, _) = program.solve_greedy();
        assert!(greedy >= exact - 1e-12);
    }
}
