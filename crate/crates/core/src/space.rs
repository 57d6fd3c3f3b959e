//! Finite pointed quasimetric spaces.
//!
//! A [`QSpace`] is a point table whose index 0 is the base point, a symmetric
//! distance matrix and a declared exponent `p` for which `dist^p` is expected
//! to be a metric. Distances are kept as exact rationals whenever the input
//! (or the transform producing them) is rational; otherwise the space is
//! flagged inexact and only the `f64` matrix is meaningful.

use std::collections::HashSet;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::number::{self, Exponent, Rational, COST_RTOL};

/// A triple `(i, j, k)` for which `dist(i,k)^p > dist(i,j)^p + dist(j,k)^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub triple: (usize, usize, usize),
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QSpace {
    labels: Vec<String>,
    p: Exponent,
    exact: Option<Vec<Rational>>,
    approx: Vec<f64>,
}

fn check_labels(labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptySpace);
    }
    let mut seen = HashSet::new();
    for label in labels {
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
    }
    Ok(())
}

impl QSpace {
    /// Builds a space from an exact matrix, checking symmetry, zero diagonal
    /// and positivity off the diagonal.
    pub fn from_exact(labels: Vec<String>, dist: Vec<Vec<Rational>>, p: Exponent) -> Result<Self> {
        check_labels(&labels)?;
        let n = labels.len();
        let mut flat = Vec::with_capacity(n * n);
        for row in &dist {
            if row.len() != n {
                return Err(Error::Shape { expected: n, found: row.len() });
            }
        }
        if dist.len() != n {
            return Err(Error::Shape { expected: n, found: dist.len() });
        }
        for (i, row) in dist.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if d.is_negative() {
                    return Err(Error::NegativeDistance { row: i, col: j });
                }
                if i == j && !d.is_zero() {
                    return Err(Error::NonzeroDiagonal(i));
                }
                if i != j && d.is_zero() {
                    return Err(Error::ZeroDistance { row: i, col: j });
                }
                if *d != dist[j][i] {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
                flat.push(d.clone());
            }
        }
        let approx = flat.iter().map(number::to_f64).collect();
        Ok(QSpace {
            labels,
            p,
            exact: Some(flat),
            approx,
        })
    }

    /// Builds an inexact space. Symmetry is required bit-for-bit.
    pub fn from_f64(labels: Vec<String>, dist: Vec<Vec<f64>>, p: Exponent) -> Result<Self> {
        check_labels(&labels)?;
        let n = labels.len();
        if dist.len() != n {
            return Err(Error::Shape { expected: n, found: dist.len() });
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape { expected: n, found: row.len() });
            }
            for (j, &d) in row.iter().enumerate() {
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(Error::NegativeDistance { row: i, col: j });
                }
                if i == j && d != 0.0 {
                    return Err(Error::NonzeroDiagonal(i));
                }
                if i != j && d == 0.0 {
                    return Err(Error::ZeroDistance { row: i, col: j });
                }
                if d != dist[j][i] {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
                flat.push(d);
            }
        }
        Ok(QSpace {
            labels,
            p,
            exact: None,
            approx: flat,
        })
    }

    /// `n` points labelled `"0", "1", ...` at mutual distance `scale`.
    pub fn uniform(n: usize, scale: &Rational, p: Exponent) -> Self {
        let labels = (0..n).map(|i| i.to_string()).collect();
        let dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Rational::zero() } else { scale.clone() })
                    .collect()
            })
            .collect();
        Self::from_exact(labels, dist, p).expect("uniform space is well formed")
    }

    /// The `{0,1}`-metric space on `n` points.
    pub fn zero_one(n: usize, p: Exponent) -> Self {
        Self::uniform(n, &Rational::from_integer(1.into()), p)
    }

    /// A finite subset of the line with quasimetric `|x - y|^(1/p)`. The
    /// point at `positions[base]` becomes index 0; the remaining points keep
    /// their relative order.
    pub fn line(positions: &[Rational], base: usize, p: &Exponent) -> Result<Self> {
        if base >= positions.len() {
            return Err(Error::PointOutOfRange { index: base, len: positions.len() });
        }
        let mut order = vec![base];
        order.extend((0..positions.len()).filter(|&i| i != base));
        let pts: Vec<&Rational> = order.iter().map(|&i| &positions[i]).collect();
        let labels = pts.iter().map(|x| number::format_rational(x)).collect();
        let power = p.recip();
        let n = pts.len();
        let mut exact = Some(Vec::with_capacity(n * n));
        let mut approx = Vec::with_capacity(n * n);
        for a in &pts {
            for b in &pts {
                let gap = (*a - *b).abs();
                approx.push(power.powf(number::to_f64(&gap)));
                if let Some(row) = exact.as_mut() {
                    match power.pow_rational(&gap) {
                        Some(v) => row.push(v),
                        None => exact = None,
                    }
                }
            }
        }
        match exact {
            Some(flat) => {
                let rows = flat.chunks(n).map(|c| c.to_vec()).collect();
                Self::from_exact(labels, rows, p.clone())
            }
            None => {
                let rows = approx.chunks(n).map(|c| c.to_vec()).collect();
                Self::from_f64(labels, rows, p.clone())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn p(&self) -> &Exponent {
        &self.p
    }

    pub fn with_exponent(mut self, p: Exponent) -> Self {
        self.p = p;
        self
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.approx[i * self.len() + j]
    }

    pub fn dist_exact(&self, i: usize, j: usize) -> Option<&Rational> {
        let n = self.len();
        self.exact.as_ref().map(|m| &m[i * n + j])
    }

    pub fn check_point(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::PointOutOfRange { index, len: self.len() })
        }
    }

    /// Rows of the exact matrix, if any.
    pub fn exact_rows(&self) -> Option<Vec<Vec<Rational>>> {
        let n = self.len();
        self.exact.as_ref().map(|m| m.chunks(n).map(|c| c.to_vec()).collect())
    }

    pub fn float_rows(&self) -> Vec<Vec<f64>> {
        self.approx.chunks(self.len()).map(|c| c.to_vec()).collect()
    }

    /// Restriction to `indices`, which must start with the base point 0.
    pub fn subspace(&self, indices: &[usize]) -> Result<QSpace> {
        if indices.first() != Some(&0) {
            return Err(Error::Parameter("subspace must contain the base point first".into()));
        }
        for &i in indices {
            self.check_point(i)?;
        }
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        match &self.exact {
            Some(_) => {
                let rows = indices
                    .iter()
                    .map(|&i| indices.iter().map(|&j| self.dist_exact(i, j).unwrap().clone()).collect())
                    .collect();
                QSpace::from_exact(labels, rows, self.p.clone())
            }
            None => {
                let rows = indices
                    .iter()
                    .map(|&i| indices.iter().map(|&j| self.dist(i, j)).collect())
                    .collect();
                QSpace::from_f64(labels, rows, self.p.clone())
            }
        }
    }

    pub fn min_offdiag(&self) -> f64 {
        let n = self.len();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.dist(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// The common off-diagonal distance when all distinct points are
    /// equidistant (exactly, for exact spaces).
    pub fn uniform_distance(&self) -> Option<f64> {
        let n = self.len();
        if n < 2 {
            return None;
        }
        match &self.exact {
            Some(_) => {
                let first = self.dist_exact(0, 1).unwrap();
                let all = (0..n).all(|i| (0..n).all(|j| i == j || self.dist_exact(i, j).unwrap() == first));
                all.then(|| number::to_f64(first))
            }
            None => {
                let first = self.dist(0, 1);
                let all = (0..n).all(|i| (0..n).all(|j| i == j || self.dist(i, j) == first));
                all.then_some(first)
            }
        }
    }

    /// Checks `d(x,z) <= max(d(x,y), d(y,z))` for all triples, exactly when
    /// the space is exact.
    pub fn check_ultrametric(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let bad = match &self.exact {
                        Some(_) => {
                            let (a, b, c) = (
                                self.dist_exact(i, j).unwrap(),
                                self.dist_exact(j, k).unwrap(),
                                self.dist_exact(i, k).unwrap(),
                            );
                            c > a.max(b)
                        }
                        None => {
                            let m = self.dist(i, j).max(self.dist(j, k));
                            self.dist(i, k) > m * (1.0 + COST_RTOL)
                        }
                    };
                    if bad {
                        return Err(Error::NotUltrametric(i, j, k));
                    }
                }
            }
        }
        Ok(())
    }

    /// All triples `(i, j, k)` with `i < k` and `j` distinct from both for
    /// which `dist^p` violates the triangle inequality. Exact arithmetic is
    /// used when every power involved is rational; otherwise the deficit
    /// must exceed `tol` relative to `dist(i,k)^p`.
    pub fn validate_pmetric(&self, p: &Exponent, tol: f64) -> Vec<Violation> {
        let n = self.len();
        let powered_exact: Option<Vec<Rational>> = self
            .exact
            .as_ref()
            .and_then(|m| m.iter().map(|d| p.pow_rational(d)).collect());
        let powered: Vec<f64> = self.approx.iter().map(|&d| p.powf(d)).collect();
        let mut out = Vec::new();
        for i in 0..n {
            for k in i + 1..n {
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let (ij, jk, ik) = (i * n + j, j * n + k, i * n + k);
                    match &powered_exact {
                        Some(pw) => {
                            let deficit = &pw[ik] - &pw[ij] - &pw[jk];
                            if deficit.is_positive() {
                                out.push(Violation {
                                    triple: (i, j, k),
                                    deficit: number::to_f64(&deficit),
                                });
                            }
                        }
                        None => {
                            let deficit = powered[ik] - powered[ij] - powered[jk];
                            if deficit > tol * powered[ik] {
                                out.push(Violation { triple: (i, j, k), deficit });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn is_pmetric(&self, p: &Exponent) -> bool {
        self.validate_pmetric(p, COST_RTOL).is_empty()
    }

    /// Largest `p` in `(0, 1]` for which `dist^p` is a metric, found by
    /// bisection of `(a/c)^p + (b/c)^p - 1` on each triple whose long side
    /// `c` exceeds `a + b`.
    pub fn max_p_exponent(&self) -> f64 {
        let n = self.len();
        let mut best = 1.0f64;
        for i in 0..n {
            for k in i + 1..n {
                let c = self.dist(i, k);
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let (a, b) = (self.dist(i, j), self.dist(j, k));
                    if a + b >= c {
                        continue;
                    }
                    let root = critical_exponent(a / c, b / c);
                    best = best.min(root);
                }
            }
        }
        best
    }

    /// Entrywise `dist^alpha`; declared exponent becomes `min(1, p/alpha)`.
    pub fn snowflake(&self, alpha: &Exponent) -> Result<QSpace> {
        if !(alpha.value() > 0.0) {
            return Err(Error::Parameter(format!("snowflake power must be positive, got {alpha}")));
        }
        let declared = {
            let ratio = self.p.mul(&alpha.recip());
            if ratio.value() > 1.0 {
                Exponent::one()
            } else {
                ratio
            }
        };
        let rows_exact: Option<Vec<Vec<Rational>>> = self.exact_rows().and_then(|rows| {
            rows.iter()
                .map(|row| row.iter().map(|d| alpha.pow_rational(d)).collect::<Option<Vec<_>>>())
                .collect()
        });
        match rows_exact {
            Some(rows) => QSpace::from_exact(self.labels.clone(), rows, declared),
            None => {
                let rows = self
                    .float_rows()
                    .into_iter()
                    .map(|row| row.into_iter().map(|d| alpha.powf(d)).collect())
                    .collect();
                QSpace::from_f64(self.labels.clone(), rows, declared)
            }
        }
    }
}

/// Root in `(0, 1]` of `x^p + y^p = 1` for `0 < x, y` with `x + y < 1`.
fn critical_exponent(x: f64, y: f64) -> f64 {
    let g = |p: f64| x.powf(p) + y.powf(p) - 1.0;
    let (mut lo, mut hi) = (1e-6f64, 1.0f64);
    if g(lo) <= 0.0 {
        return lo;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    fn triple(a: i64, b: i64, c: i64) -> QSpace {
        // points x, y, z with d(x,y)=a, d(y,z)=b, d(x,z)=c
        let labels = vec!["x".into(), "y".into(), "z".into()];
        let rows = vec![
            vec![r(0), r(a), r(c)],
            vec![r(a), r(0), r(b)],
            vec![r(c), r(b), r(0)],
        ];
        QSpace::from_exact(labels, rows, Exponent::one()).unwrap()
    }

    #[test]
    fn zero_one_is_pmetric_for_all_p() {
        let s = QSpace::zero_one(5, Exponent::one());
        for (n, d) in [(1, 1), (1, 2), (1, 3), (2, 3)] {
            assert!(s.validate_pmetric(&Exponent::from_ratio(n, d), 0.0).is_empty());
        }
        assert_eq!(s.max_p_exponent(), 1.0);
    }

    #[test]
    fn four_one_one_triangle() {
        let s = triple(1, 1, 4);
        let v = s.validate_pmetric(&Exponent::one(), COST_RTOL);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].triple, (0, 1, 2));
        assert_eq!(v[0].deficit, 2.0);
        assert!(s.validate_pmetric(&Exponent::from_ratio(1, 2), 0.0).is_empty());
        assert!((s.max_p_exponent() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn max_exponent_brackets_validity() {
        let s = triple(1, 2, 5);
        let p = s.max_p_exponent();
        assert!(p < 1.0);
        assert!(s.validate_pmetric(&Exponent::from_f64(p - 1e-6), COST_RTOL).is_empty());
        assert!(!s.validate_pmetric(&Exponent::from_f64(p + 1e-6), COST_RTOL).is_empty());
    }

    #[test]
    fn snowflaked_line_has_exact_exponent() {
        let pts: Vec<Rational> = [0, 1, 2, 4].iter().map(|&x| r(x)).collect();
        let half = Exponent::from_ratio(1, 2);
        let s = QSpace::line(&pts, 0, &half).unwrap();
        assert!(s.is_exact());
        assert_eq!(s.dist_exact(0, 3), Some(&r(16)));
        assert!(s.validate_pmetric(&half, 0.0).is_empty());
        assert!((s.max_p_exponent() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn snowflake_identity_and_inverse() {
        let s = triple(3, 4, 5);
        assert_eq!(s.snowflake(&Exponent::one()).unwrap(), s);
        let sq = s.snowflake(&Exponent::from_ratio(2, 1)).unwrap();
        assert_eq!(sq.p(), &Exponent::from_ratio(1, 2));
        assert!(sq.validate_pmetric(&Exponent::from_ratio(1, 2), 0.0).is_empty());
        let back = sq.snowflake(&Exponent::from_ratio(1, 2)).unwrap();
        assert_eq!(back.exact_rows(), s.exact_rows());
        let z = QSpace::zero_one(4, Exponent::one());
        let zz = z.snowflake(&Exponent::from_ratio(3, 1)).unwrap();
        assert_eq!(zz.exact_rows(), z.exact_rows());
        assert!(s.snowflake(&Exponent::from_f64(0.0)).is_err());
    }

    #[test]
    fn irrational_snowflake_round_trip_is_close() {
        let s = triple(3, 4, 5);
        let a = Exponent::from_f64(std::f64::consts::PI / 2.0);
        let back = s.snowflake(&a).unwrap().snowflake(&a.recip()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (x, y) = (s.dist(i, j), back.dist(i, j));
                assert!((x - y).abs() <= 1e-12 * x.max(1.0));
            }
        }
    }

    #[test]
    fn rejects_malformed_matrices() {
        let labels = || vec!["a".to_string(), "b".to_string()];
        let p = Exponent::one;
        assert!(matches!(
            QSpace::from_exact(labels(), vec![vec![r(0), r(1)], vec![r(2), r(0)]], p()),
            Err(Error::Asymmetric { .. })
        ));
        assert!(matches!(
            QSpace::from_exact(labels(), vec![vec![r(0), r(-1)], vec![r(-1), r(0)]], p()),
            Err(Error::NegativeDistance { .. })
        ));
        assert!(matches!(
            QSpace::from_exact(vec!["a".into(), "a".into()], vec![vec![r(0), r(1)], vec![r(1), r(0)]], p()),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(
            QSpace::from_exact(labels(), vec![vec![r(0), r(1)]], p()),
            Err(Error::Shape { .. })
        ));
    }
}
