//! Explicit coordinates for free p-spaces: subsets of the line under
//! `|x - y|^(1/p)` (as `l_p` vectors over gaps and as `L_p` step functions),
//! uniformly discrete spaces, and ultrametric spaces through a dendrogram
//! tree. Also generates the subset counterexample family.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::molecule::Molecule;
use crate::number::{self, Exponent, Rational};
use crate::space::QSpace;

/// Finite subset of the line, base point first, with quasimetric
/// `|x - y|^(1/p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSubset {
    positions: Vec<Rational>,
    p: Exponent,
}

/// One coordinate over a gap `(lo, hi]` adjacent to the non-base point `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCoordinate {
    pub point: usize,
    pub lo: Rational,
    pub hi: Rational,
    pub value: f64,
}

/// `sum level_k * chi_{(lo_k, hi_k]}` with nonzero levels only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepFunction {
    pub pieces: Vec<(Rational, Rational, Rational)>,
}

impl StepFunction {
    /// `(sum |level|^p * length)^(1/p)`.
    pub fn lp_norm(&self, p: &Exponent) -> f64 {
        let sum: f64 = self
            .pieces
            .iter()
            .map(|(lo, hi, level)| p.powf(number::to_f64(level).abs()) * number::to_f64(&(hi - lo)))
            .sum();
        p.recip().powf(sum)
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }
}

pub fn lp_norm(values: impl IntoIterator<Item = f64>, p: &Exponent) -> f64 {
    let sum: f64 = values.into_iter().map(|v| p.powf(v.abs())).sum();
    p.recip().powf(sum)
}

impl LineSubset {
    /// `base` indexes into `positions`; the base becomes point 0 and the
    /// rest keep their order, matching [`QSpace::line`].
    pub fn new(positions: &[Rational], base: usize, p: Exponent) -> Result<Self> {
        if base >= positions.len() {
            return Err(Error::Parameter("base point missing from the line subset".into()));
        }
        p.check_unit()?;
        let mut ordered = vec![positions[base].clone()];
        ordered.extend(positions.iter().enumerate().filter(|(i, _)| *i != base).map(|(_, x)| x.clone()));
        let mut sorted = ordered.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("line subset has repeated points".into()));
        }
        Ok(LineSubset { positions: ordered, p })
    }

    /// Reads positions from numeric point labels and checks that the
    /// matrix is `|x - y|^(1/p)` for the space's declared exponent.
    pub fn from_space(space: &QSpace) -> Result<Self> {
        let positions: Vec<Rational> = space
            .labels()
            .iter()
            .map(|l| number::parse_rational(l))
            .collect::<Result<_>>()
            .map_err(|e| Error::ExponentMismatch(format!("labels must be point positions: {e}")))?;
        let line = LineSubset::new(&positions, 0, space.p().clone())?;
        let expected = line.space()?;
        let n = space.len();
        for i in 0..n {
            for j in 0..n {
                let ok = match (space.dist_exact(i, j), expected.dist_exact(i, j)) {
                    (Some(a), Some(b)) => a == b,
                    _ => {
                        let (a, b) = (space.dist(i, j), expected.dist(i, j));
                        (a - b).abs() <= 1e-9 * a.max(b).max(1.0)
                    }
                };
                if !ok {
                    return Err(Error::ExponentMismatch(format!(
                        "dist({}, {}) = {} but |x-y|^(1/p) = {}",
                        space.label(i),
                        space.label(j),
                        space.dist(i, j),
                        expected.dist(i, j)
                    )));
                }
            }
        }
        Ok(line)
    }

    pub fn positions(&self) -> &[Rational] {
        &self.positions
    }

    pub fn p(&self) -> &Exponent {
        &self.p
    }

    pub fn space(&self) -> Result<QSpace> {
        QSpace::line(&self.positions, 0, &self.p)
    }

    /// Signed levels of `sum mu(x) chi_{(base, x]}` on each gap between
    /// consecutive points, as `(point, lo, hi, level)` where `point` is the
    /// gap's endpoint farther from the base.
    fn gap_levels(&self, mu: &Molecule) -> Result<Vec<(usize, Rational, Rational, Rational)>> {
        mu.check_within(self.positions.len())?;
        let mut order: Vec<usize> = (0..self.positions.len()).collect();
        order.sort_by(|&a, &b| self.positions[a].cmp(&self.positions[b]));
        let base_rank = order.iter().position(|&i| i == 0).expect("base is a point");
        let mut out = Vec::new();
        // above the base: level on (x_{k-1}, x_k] is the mass at or beyond x_k
        let mut tail = Rational::zero();
        for k in (base_rank + 1..order.len()).rev() {
            tail += mu.get(order[k]);
            out.push((order[k], self.positions[order[k - 1]].clone(), self.positions[order[k]].clone(), tail.clone()));
        }
        // below the base: chi_{(b,x]} = -chi_{(x,b]}
        let mut head = Rational::zero();
        for k in 0..base_rank {
            head += mu.get(order[k]);
            out.push((order[k], self.positions[order[k]].clone(), self.positions[order[k + 1]].clone(), -head.clone()));
        }
        out.sort_by(|a, b| a.1.cmp(&b.1));
        Ok(out)
    }
}

/// `l_p` coordinates of `mu` over the gaps of the line subset.
pub fn line_coordinates(line: &LineSubset, mu: &Molecule) -> Result<Vec<GapCoordinate>> {
    let root = line.p.recip();
    Ok(line
        .gap_levels(mu)?
        .into_iter()
        .map(|(point, lo, hi, level)| {
            let gap = number::to_f64(&(&hi - &lo));
            GapCoordinate {
                point,
                value: number::to_f64(&level) * root.powf(gap),
                lo,
                hi,
            }
        })
        .collect())
}

/// `sum mu(x) chi_{(base, x]}` as a step function.
pub fn interval_step_function(line: &LineSubset, mu: &Molecule) -> Result<StepFunction> {
    Ok(StepFunction {
        pieces: line
            .gap_levels(mu)?
            .into_iter()
            .filter(|(_, _, _, level)| !level.is_zero())
            .map(|(_, lo, hi, level)| (lo, hi, level))
            .collect(),
    })
}

/// Off-base coefficients of `mu` over a uniformly discrete space, with the
/// two-sided bracket `2^(-1/p) c ||a||_p <= ||mu|| <= c ||a||_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroOneEmbedding {
    pub coeffs: Vec<f64>,
    pub scale: f64,
    pub lp: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn zeroone_embedding(space: &QSpace, mu: &Molecule) -> Result<ZeroOneEmbedding> {
    mu.check_within(space.len())?;
    let p = space.p();
    p.check_unit()?;
    let scale = if space.len() < 2 {
        1.0
    } else {
        space
            .uniform_distance()
            .ok_or_else(|| Error::NotZeroOne("distinct points are not equidistant".into()))?
    };
    let coeffs: Vec<f64> = (1..space.len()).map(|i| number::to_f64(&mu.get(i))).collect();
    let lp = lp_norm(coeffs.iter().copied(), p);
    Ok(ZeroOneEmbedding {
        lower: scale * 2f64.powf(-1.0 / p.value()) * lp,
        upper: scale * lp,
        coeffs,
        scale,
        lp,
    })
}

/// Dendrogram of a finite ultrametric space, rooted at the base leaf.
#[derive(Debug, Clone)]
pub struct TreeEmbedding {
    /// Node labels; nodes `0..n` are the original points, the rest are
    /// merge nodes.
    pub labels: Vec<String>,
    /// Merge heights (0 for leaves).
    pub heights: Vec<f64>,
    /// `parent[s] = (node, segment length)`; `None` at the base leaf.
    pub parent: Vec<Option<(usize, f64)>>,
    parent_exact: Option<Vec<Rational>>,
    /// Original point -> node (the identity on `0..n`).
    pub leaf_map: Vec<usize>,
    /// Node -> original point, fixing original points.
    pub retraction: Vec<usize>,
    /// Lipschitz constant of the retraction from `(S, d_T^(1/p))` to
    /// `(M, d^(1/p))`.
    pub retraction_lip: f64,
    pub p: Exponent,
}

impl TreeEmbedding {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `L_S(s)`: length of the segment from `s` to its predecessor.
    pub fn gap(&self, node: usize) -> Option<f64> {
        self.parent[node].map(|(_, len)| len)
    }

    pub fn gap_exact(&self, node: usize) -> Option<&Rational> {
        match (&self.parent_exact, self.parent[node]) {
            (Some(g), Some(_)) => Some(&g[node]),
            _ => None,
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.len()];
        for (s, par) in self.parent.iter().enumerate() {
            if let Some((u, _)) = par {
                adj[s].push((*u, s));
                adj[*u].push((s, s));
            }
        }
        adj
    }

    /// Tree distances between all nodes (exact when lengths are rational).
    pub fn tree_distances(&self) -> (Vec<Vec<f64>>, Option<Vec<Vec<Rational>>>) {
        let m = self.len();
        let adj = self.adjacency();
        let mut approx = vec![vec![0.0; m]; m];
        let mut exact = self.parent_exact.as_ref().map(|_| vec![vec![Rational::zero(); m]; m]);
        for src in 0..m {
            let mut stack = vec![(src, usize::MAX)];
            while let Some((u, from)) = stack.pop() {
                for &(v, edge) in &adj[u] {
                    if v == from {
                        continue;
                    }
                    let len = self.parent[edge].unwrap().1;
                    approx[src][v] = approx[src][u] + len;
                    if let (Some(ex), Some(g)) = (exact.as_mut(), self.parent_exact.as_ref()) {
                        ex[src][v] = &ex[src][u] + &g[edge];
                    }
                    stack.push((v, u));
                }
            }
        }
        (approx, exact)
    }

    /// The augmented space `(S, d_T^(1/p))`, base leaf first.
    pub fn tree_space(&self) -> Result<QSpace> {
        let (approx, exact) = self.tree_distances();
        let root = self.p.recip();
        let powered: Option<Vec<Vec<Rational>>> = exact.and_then(|rows| {
            rows.iter()
                .map(|row| row.iter().map(|d| root.pow_rational(d)).collect::<Option<Vec<_>>>())
                .collect()
        });
        match powered {
            Some(rows) => QSpace::from_exact(self.labels.clone(), rows, self.p.clone()),
            None => {
                let rows = approx
                    .iter()
                    .map(|row| row.iter().map(|&d| root.powf(d)).collect())
                    .collect();
                QSpace::from_f64(self.labels.clone(), rows, self.p.clone())
            }
        }
    }

    /// Nodes in the subtree below `node` (inclusive).
    fn below(&self, node: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&s| {
                let mut w = s;
                loop {
                    if w == node {
                        return true;
                    }
                    match self.parent[w] {
                        Some((u, _)) => w = u,
                        None => return false,
                    }
                }
            })
            .collect()
    }
}

/// Builds the dendrogram of an ultrametric space: leaves at height 0, the
/// merge node of clusters at distance `d` at height `d/2`.
pub fn ultrametric_dendrogram(space: &QSpace, p: &Exponent) -> Result<TreeEmbedding> {
    p.check_unit()?;
    space.check_ultrametric()?;
    let n = space.len();
    let exact = space.is_exact();
    let half = Rational::new(1.into(), 2.into());

    // distinct merge levels
    let mut levels: Vec<(f64, Option<Rational>)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let lvl = (space.dist(i, j), space.dist_exact(i, j).cloned());
            if !levels.iter().any(|l| match (&l.1, &lvl.1) {
                (Some(a), Some(b)) => a == b,
                _ => l.0 == lvl.0,
            }) {
                levels.push(lvl);
            }
        }
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut labels: Vec<String> = space.labels().to_vec();
    let mut heights = vec![0.0f64; n];
    let mut heights_exact: Vec<Rational> = vec![Rational::zero(); n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // undirected dendrogram edges (child, merge node)
    let mut up: Vec<Option<usize>> = vec![None; n];
    let mut active: Vec<usize> = (0..n).collect();

    for (h, h_exact) in levels {
        let same = |a: usize, b: usize| match (&h_exact, space.dist_exact(a, b)) {
            (Some(x), Some(y)) => x == y,
            _ => space.dist(a, b) == h,
        };
        // group active clusters linked at this level
        let mut group: Vec<usize> = (0..active.len()).collect();
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let (ra, rb) = (members[active[a]][0], members[active[b]][0]);
                if same(ra, rb) {
                    let (ga, gb) = (find(&mut group, a), find(&mut group, b));
                    if ga != gb {
                        group[gb.max(ga)] = ga.min(gb);
                    }
                }
            }
        }
        let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for a in 0..active.len() {
            let g = find(&mut group, a);
            buckets.entry(g).or_default().push(active[a]);
        }
        let mut next_active = Vec::new();
        for (_, clusters) in buckets {
            if clusters.len() == 1 {
                next_active.push(clusters[0]);
                continue;
            }
            let node = labels.len();
            let mut cluster: Vec<usize> = clusters.iter().flat_map(|&c| members[c].clone()).collect();
            cluster.sort_unstable();
            let mut names: Vec<&str> = cluster.iter().map(|&i| space.label(i)).collect();
            names.sort_unstable();
            labels.push(format!("<{}>", names.join(",")));
            heights.push(h / 2.0);
            heights_exact.push(h_exact.clone().map(|x| x * &half).unwrap_or_else(Rational::zero));
            members.push(cluster);
            up.push(None);
            for c in clusters {
                up[c] = Some(node);
            }
            next_active.push(node);
        }
        active = next_active;
    }

    // re-root at the base leaf
    let m = labels.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (c, u) in up.iter().enumerate() {
        if let Some(u) = u {
            adj[c].push(*u);
            adj[*u].push(c);
        }
    }
    let seg = |a: usize, b: usize| (heights[a] - heights[b]).abs();
    let seg_exact = |a: usize, b: usize| (&heights_exact[a] - &heights_exact[b]).abs();
    let mut parent: Vec<Option<(usize, f64)>> = vec![None; m];
    let mut parent_exact = vec![Rational::zero(); m];
    let mut stack = vec![0usize];
    let mut seen = vec![false; m];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some((u, seg(u, v)));
                parent_exact[v] = seg_exact(u, v);
                stack.push(v);
            }
        }
    }

    let retraction: Vec<usize> = (0..m)
        .map(|s| {
            if s < n {
                s
            } else {
                *members[s]
                    .iter()
                    .min_by(|&&a, &&b| space.label(a).cmp(space.label(b)))
                    .expect("merge node has members")
            }
        })
        .collect();

    let mut emb = TreeEmbedding {
        labels,
        heights,
        parent,
        parent_exact: exact.then_some(parent_exact),
        leaf_map: (0..n).collect(),
        retraction,
        retraction_lip: 1.0,
        p: p.clone(),
    };
    let (dt, _) = emb.tree_distances();
    let mut lip = 0.0f64;
    for u in 0..m {
        for v in u + 1..m {
            let (a, b) = (emb.retraction[u], emb.retraction[v]);
            if a != b {
                lip = lip.max(space.dist(a, b) / dt[u][v]);
            }
        }
    }
    emb.retraction_lip = p.recip().powf(lip.max(1.0));
    Ok(emb)
}

fn find(group: &mut [usize], mut a: usize) -> usize {
    while group[a] != a {
        group[a] = group[group[a]];
        a = group[a];
    }
    a
}

/// `l_p` coordinates over non-root nodes, with the retraction bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCoordinates {
    /// `(node, L_S(node)^(1/p) * mass below node)`.
    pub coords: Vec<(usize, f64)>,
    pub norm: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn tree_coordinates(emb: &TreeEmbedding, mu: &Molecule) -> Result<TreeCoordinates> {
    let n = emb.leaf_map.len();
    if let Some(i) = mu.support().find(|&i| i >= n) {
        return Err(Error::SupportEscapes(i));
    }
    let root = emb.p.recip();
    let mut coords = Vec::new();
    for s in 0..emb.len() {
        let Some(gap) = emb.gap(s) else { continue };
        let mass: Rational = emb
            .below(s)
            .into_iter()
            .filter(|&t| t < n)
            .fold(Rational::zero(), |acc, t| acc + mu.get(emb.leaf_map[t]));
        coords.push((s, number::to_f64(&mass) * root.powf(gap)));
    }
    let norm = lp_norm(coords.iter().map(|(_, v)| *v), &emb.p);
    Ok(TreeCoordinates {
        lower: norm,
        upper: emb.retraction_lip * norm,
        coords,
        norm,
    })
}

/// Closed-form quantities of the subset counterexample.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleAnalytic {
    pub k: u64,
    /// Total mass `k^(1 - 1/p)` of the equal-weight molecule.
    pub epsilon: f64,
    pub fp_n_norm: f64,
    pub fp_m_upper: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    /// `{0, 1..k}` with the `{0,1}`-metric.
    pub n_space: QSpace,
    /// `n_space` plus `z` at distance `2^(-1/q)` from `1..k`.
    pub m_space: QSpace,
    /// `sum_j k^(-1/p) delta(j)`, on `n_space` (same indices in `m_space`).
    pub mu: Molecule,
    pub analytic: CounterexampleAnalytic,
}

fn check_counterexample_params(p: &Exponent, q: &Exponent, k: u64) -> Result<()> {
    if !(p.value() > 0.0 && p.value() < 1.0) {
        return Err(Error::Parameter(format!("p = {p} must lie in (0, 1)")));
    }
    if !(q.value() >= p.value() && q.value() <= 1.0) {
        return Err(Error::Parameter(format!("q = {q} must lie in [p, 1]")));
    }
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    Ok(())
}

pub fn counterexample_analytic(p: &Exponent, q: &Exponent, k: u64) -> Result<CounterexampleAnalytic> {
    check_counterexample_params(p, q, k)?;
    let pv = p.value();
    let epsilon = (k as f64).powf(1.0 - 1.0 / pv);
    let upper = (epsilon.powf(pv) + 2f64.powf(-pv / q.value())).powf(1.0 / pv);
    Ok(CounterexampleAnalytic {
        k,
        epsilon,
        fp_n_norm: 1.0,
        fp_m_upper: upper,
        ratio: 1.0 / upper,
    })
}

/// Largest `k` for which explicit spaces are materialised.
pub const COUNTEREXAMPLE_MAX_K: u64 = 2000;

pub fn counterexample_instance(p: &Exponent, q: &Exponent, k: u64) -> Result<Counterexample> {
    let analytic = counterexample_analytic(p, q, k)?;
    if k > COUNTEREXAMPLE_MAX_K {
        return Err(Error::Parameter(format!(
            "k = {k} exceeds {COUNTEREXAMPLE_MAX_K}; use the analytic values"
        )));
    }
    let k = k as usize;
    let n_space = QSpace::zero_one(k + 1, q.clone());

    let two = Rational::from_integer(2.into());
    let near = q.recip().pow_rational(&two).map(|v| v.recip());
    let mut labels: Vec<String> = n_space.labels().to_vec();
    labels.push("z".into());
    let m = k + 2;
    let is_near = |i: usize, j: usize| (i == m - 1 && (1..=k).contains(&j)) || (j == m - 1 && (1..=k).contains(&i));
    let m_space = match near {
        Some(near) => {
            let one = Rational::from_integer(1.into());
            let rows = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| {
                            if i == j {
                                Rational::zero()
                            } else if is_near(i, j) {
                                near.clone()
                            } else {
                                one.clone()
                            }
                        })
                        .collect()
                })
                .collect();
            QSpace::from_exact(labels, rows, q.clone())?
        }
        None => {
            let near = 2f64.powf(-1.0 / q.value());
            let rows = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| if i == j { 0.0 } else if is_near(i, j) { near } else { 1.0 })
                        .collect()
                })
                .collect();
            QSpace::from_f64(labels, rows, q.clone())?
        }
    };

    let kr = Rational::from_integer((k as i64).into());
    let weight = p
        .recip()
        .pow_rational(&kr)
        .map(|v| v.recip())
        .unwrap_or_else(|| number::from_f64((k as f64).powf(-1.0 / p.value())));
    let entries: Vec<(Rational, usize)> = (1..=k).map(|j| (weight.clone(), j)).collect();
    let mu = Molecule::from_deltas(entries.iter().map(|(a, j)| (a, *j)), 0);
    debug_assert!(mu.total().is_zero() && !weight.is_negative());
    Ok(Counterexample { n_space, m_space, mu, analytic })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn half() -> Exponent {
        Exponent::from_ratio(1, 2)
    }

    #[test]
    fn line_single_delta() {
        for p in [half(), Exponent::from_ratio(1, 3), Exponent::from_ratio(2, 3)] {
            let line = LineSubset::new(&[r(0, 1), r(1, 1), r(3, 1)], 0, p.clone()).unwrap();
            let mu = Molecule::dipole(2, 0);
            let c = line_coordinates(&line, &mu).unwrap();
            let values: Vec<f64> = c.iter().map(|g| g.value).collect();
            assert!((values[0] - 1.0).abs() < 1e-12);
            assert!((values[1] - 2f64.powf(1.0 / p.value())).abs() < 1e-12);
            let norm = lp_norm(values, &p);
            assert!((norm - 3f64.powf(1.0 / p.value())).abs() < 1e-9);
        }
    }

    #[test]
    fn line_two_deltas() {
        let line = LineSubset::new(&[r(0, 1), r(1, 1), r(3, 1)], 0, half()).unwrap();
        let mu = Molecule::from_deltas([(&r(1, 1), 1), (&r(1, 1), 2)], 0);
        let c: Vec<f64> = line_coordinates(&line, &mu).unwrap().iter().map(|g| g.value).collect();
        assert_eq!(c, vec![2.0, 4.0]);
        let f = interval_step_function(&line, &mu).unwrap();
        assert_eq!(f.pieces, vec![(r(0, 1), r(1, 1), r(2, 1)), (r(1, 1), r(3, 1), r(1, 1))]);
        let expected = 6.0 + 4.0 * 2f64.sqrt();
        assert!((f.lp_norm(&half()) - expected).abs() < 1e-12);
        assert!((lp_norm(c, &half()) - expected).abs() < 1e-12);
    }

    #[test]
    fn interval_single_gap() {
        let line = LineSubset::new(&[r(0, 1), r(1, 2), r(1, 1)], 0, half()).unwrap();
        let mu = &Molecule::dipole(2, 0) - &Molecule::dipole(1, 0);
        let f = interval_step_function(&line, &mu).unwrap();
        assert_eq!(f.pieces, vec![(r(1, 2), r(1, 1), r(1, 1))]);
        assert!((f.lp_norm(&half()) - 0.25).abs() < 1e-15);
        assert!(interval_step_function(&line, &Molecule::zero()).unwrap().is_zero());
        assert!(line_coordinates(&line, &Molecule::zero()).unwrap().iter().all(|g| g.value == 0.0));
    }

    #[test]
    fn points_below_base() {
        let line = LineSubset::new(&[r(-2, 1), r(0, 1), r(1, 1)], 1, half()).unwrap();
        // base 0 first, then -2, 1
        let mu = Molecule::dipole(1, 0);
        let f = interval_step_function(&line, &mu).unwrap();
        assert_eq!(f.pieces, vec![(r(-2, 1), r(0, 1), r(-1, 1))]);
    }

    #[test]
    fn dendrogram_example() {
        let labels = vec!["0".into(), "a".into(), "b".into()];
        let q = |n: i64| Rational::from_integer(n.into());
        let rows = vec![vec![q(0), q(2), q(2)], vec![q(2), q(0), q(1)], vec![q(2), q(1), q(0)]];
        let s = QSpace::from_exact(labels, rows, Exponent::one()).unwrap();
        let emb = ultrametric_dendrogram(&s, &half()).unwrap();
        assert_eq!(emb.len(), 5);
        let root_merge = emb.labels.iter().position(|l| l == "<0,a,b>").unwrap();
        let ab = emb.labels.iter().position(|l| l == "<a,b>").unwrap();
        assert_eq!(emb.gap_exact(root_merge), Some(&r(1, 1)));
        assert_eq!(emb.gap_exact(ab), Some(&r(1, 2)));
        assert_eq!(emb.gap_exact(1), Some(&r(1, 2)));
        let (_, exact) = emb.tree_distances();
        let exact = exact.unwrap();
        assert_eq!(exact[0][1], r(2, 1));
        assert_eq!(exact[1][2], r(1, 1));

        let tc = tree_coordinates(&emb, &Molecule::dipole(1, 0)).unwrap();
        assert!((tc.norm - 4.0).abs() < 1e-12);
        let tc = tree_coordinates(&emb, &Molecule::dipole(1, 2)).unwrap();
        assert!((tc.norm - 1.0).abs() < 1e-12);
        assert_eq!(emb.retraction[ab], 1);
    }

    #[test]
    fn rejects_non_ultrametric() {
        let s = QSpace::line(&[r(0, 1), r(1, 1), r(3, 1)], 0, &Exponent::one()).unwrap();
        assert!(matches!(ultrametric_dendrogram(&s, &half()), Err(Error::NotUltrametric(..))));
    }

    #[test]
    fn counterexample_formula() {
        let a = counterexample_analytic(&half(), &Exponent::one(), 1_000_000).unwrap();
        assert!((a.epsilon - 1e-6).abs() < 1e-18);
        let expected = (1e-3 + 0.5f64.sqrt()).powi(2);
        assert!((a.fp_m_upper - expected).abs() < 1e-15);
        assert!((a.ratio - 1.9943).abs() < 1e-3);
        let inst = counterexample_instance(&half(), &Exponent::one(), 4).unwrap();
        assert_eq!(inst.m_space.len(), 6);
        assert_eq!(inst.mu.get(1), r(1, 16));
        assert_eq!(inst.m_space.dist_exact(1, 5), Some(&r(1, 2)));
        assert!(counterexample_analytic(&Exponent::one(), &Exponent::one(), 3).is_err());
        assert!(counterexample_analytic(&half(), &Exponent::from_ratio(1, 3), 3).is_err());
        assert!(counterexample_analytic(&half(), &Exponent::one(), 0).is_err());
    }
}
