//! Free p-norms of molecules on finite spaces.
//!
//! The norm of `mu` is the least `(sum |a_e|^p)^(1/p)` over decompositions
//! `mu = sum a_e (chi_x - chi_y) / dist(x, y)`. Repeated atoms can always be
//! merged (`|a + b|^p <= |a|^p + |b|^p`), so one coefficient per unordered
//! pair suffices. Writing `b_e = a_e / dist_e`, the feasible set is the affine
//! space of flows on the complete graph with divergence `mu`, and the
//! objective `sum |b_e|^p dist_e^p` is concave on every sign orthant and
//! coercive. Its minimum is therefore attained at a vertex of some orthant
//! slice, i.e. at a flow whose support has linearly independent incidence
//! columns: a forest. Every forest extends to a spanning tree, and a spanning
//! tree carries exactly one flow with divergence `mu`, so the exact solver
//! enumerates spanning trees (Prüfer codes) and keeps the cheapest flow.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::molecule::{atom_length, Atom, Decomposition, Molecule};
use crate::number::{self, Exponent, Rational, COST_RTOL};
use crate::pbody;
use crate::space::QSpace;
use crate::wasserstein;

pub const DEFAULT_BUDGET: usize = 7;

/// Largest number of points for which exact enumeration is attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_points: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_points: DEFAULT_BUDGET }
    }
}

impl Budget {
    pub fn new(max_points: usize) -> Self {
        Budget { max_points }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LowerWitness {
    /// Free 1-norm over the metric envelope.
    Wasserstein { value: f64 },
    /// `scale` times the p-body bound, where `scale` is the smallest
    /// off-diagonal distance.
    PBody { value: f64, scale: f64 },
    /// The value is the optimum of the finite program.
    Exact,
    /// Zero molecule.
    Trivial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormCertificate {
    pub lower: f64,
    pub upper: f64,
    pub upper_witness: Decomposition,
    pub lower_witness: LowerWitness,
    pub exact: bool,
}

impl NormCertificate {
    fn trivial(target: Molecule) -> Self {
        NormCertificate {
            lower: 0.0,
            upper: 0.0,
            upper_witness: Decomposition::empty(target),
            lower_witness: LowerWitness::Trivial,
            exact: true,
        }
    }

    /// Recomputes the witness: zero residual (exact spaces) or residual
    /// below `1e-9` relative (float spaces), and cost equal to `upper`.
    pub fn verify(&self, space: &QSpace, p: &Exponent) -> Result<bool> {
        let residual_ok = if space.is_exact() {
            self.upper_witness.residual(space)?.is_zero()
        } else {
            let scale = self
                .upper_witness
                .target()
                .iter()
                .map(|(_, c)| number::to_f64(c).abs())
                .fold(1.0, f64::max);
            self.upper_witness.residual_norm(space)? <= 1e-9 * scale
        };
        let cost = self.upper_witness.cost(p);
        let cost_ok = (cost - self.upper).abs() <= 1e-12 * self.upper.max(1.0);
        Ok(residual_ok && cost_ok && self.lower <= self.upper * (1.0 + COST_RTOL))
    }
}

/// Integer supplies `mu * denom` together with `denom`.
struct ScaledMolecule {
    supply: Vec<i128>,
    denom: BigInt,
}

fn scale_molecule(mu: &Molecule, n: usize) -> Result<ScaledMolecule> {
    let denom = number::common_denominator(mu.iter().map(|(_, c)| c));
    let mut supply = vec![0i128; n];
    for (i, c) in mu.iter() {
        let v = c.numer() * (&denom / c.denom());
        supply[i] = v
            .to_i128()
            .filter(|v| v.unsigned_abs() < (1u128 << 100))
            .ok_or_else(|| Error::Parameter("molecule coefficients too large for exact enumeration".into()))?;
    }
    Ok(ScaledMolecule { supply, denom })
}

/// Evaluates the unique flow on a spanning tree rooted at point 0.
struct TreeFlows<'a> {
    n: usize,
    /// `dist^p`, row-major.
    weight: &'a [f64],
    p: &'a Exponent,
    supply: &'a [i128],
}

impl TreeFlows<'_> {
    /// Sum over tree edges of `|flow|^p dist^p` (integer-scaled flows), and
    /// the flow on each `(child, parent)` edge. `order` lists nodes so that
    /// every node appears after its parent.
    fn evaluate(&self, parent: &[usize], order: &[usize], flows: &mut [i128]) -> f64 {
        flows.copy_from_slice(self.supply);
        let mut cost = 0.0;
        for &v in order.iter().rev() {
            if v == 0 {
                continue;
            }
            let f = flows[v];
            let u = parent[v];
            flows[u] += f;
            if f != 0 {
                cost += self.p.powf(f.unsigned_abs() as f64) * self.weight[v * self.n + u];
            }
        }
        cost
    }
}

/// Parent array rooted at 0 plus a parent-first order for a tree given as
/// an edge list.
fn root_tree(n: usize, edges: &[(usize, usize)], parent: &mut [usize], order: &mut Vec<usize>) {
    let mut adj = vec![Vec::with_capacity(4); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    order.clear();
    order.push(0);
    parent[0] = usize::MAX;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &v in &adj[u] {
            if v != parent[u] {
                parent[v] = u;
                order.push(v);
            }
        }
    }
}

/// Decodes the Prüfer code with index `code` (base-`n` digits) into edges.
fn prufer_edges(n: usize, mut code: u64, seq: &mut Vec<usize>, degree: &mut [usize], edges: &mut Vec<(usize, usize)>) {
    seq.clear();
    for _ in 0..n.saturating_sub(2) {
        seq.push((code % n as u64) as usize);
        code /= n as u64;
    }
    degree.iter_mut().for_each(|d| *d = 1);
    for &s in seq.iter() {
        degree[s] += 1;
    }
    edges.clear();
    for &s in seq.iter() {
        let leaf = (0..n).find(|&i| degree[i] == 1).expect("Prüfer decoding always has a leaf");
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    if rest.len() == 2 {
        edges.push((rest[0], rest[1]));
    }
}

fn tree_count(n: usize) -> Option<u64> {
    if n < 2 {
        return Some(1);
    }
    (n as u64).checked_pow((n - 2) as u32)
}

fn powered_weights(space: &QSpace, p: &Exponent) -> Vec<f64> {
    space.float_rows().into_iter().flatten().map(|d| p.powf(d)).collect()
}

/// Sorted atom ranks carrying nonzero flow.
fn flow_support(n: usize, parent: &[usize], flows: &[i128]) -> Vec<usize> {
    let mut support: Vec<usize> = (1..n)
        .filter(|&v| flows[v] != 0)
        .map(|v| Atom::new(v, parent[v]).expect("tree edge").rank(n))
        .collect();
    support.sort_unstable();
    support
}

/// Builds the exact decomposition of `mu` carried by a rooted tree.
fn tree_decomposition(space: &QSpace, mu: &Molecule, parent: &[usize], order: &[usize], scaled: &ScaledMolecule) -> Result<Decomposition> {
    let n = space.len();
    let mut flows = scaled.supply.clone();
    for &v in order.iter().rev() {
        if v != 0 {
            let f = flows[v];
            flows[parent[v]] += f;
        }
    }
    let denom = Rational::from_integer(scaled.denom.clone());
    let terms: Vec<(Rational, usize, usize)> = (1..n)
        .filter(|&v| flows[v] != 0)
        .map(|v| {
            let atom = Atom::new(v, parent[v]).expect("tree edge");
            let b = Rational::from_integer(BigInt::from(flows[v])) / &denom;
            // flow leaves v towards its parent: b (chi_v - chi_parent)
            (b * atom_length(space, atom), v, parent[v])
        })
        .collect();
    Decomposition::new(mu.clone(), terms)
}

/// Exact free p-norm by spanning-tree enumeration (`p < 1`) or min-cost flow
/// (`p = 1`). Fails with [`Error::BudgetExceeded`] above the budget.
pub fn exact_pnorm(space: &QSpace, mu: &Molecule, p: &Exponent, budget: Budget) -> Result<NormCertificate> {
    p.check_unit()?;
    mu.check_within(space.len())?;
    if mu.is_zero() {
        return Ok(NormCertificate::trivial(mu.clone()));
    }
    if p.is_one() {
        return exact_one_norm(space, mu);
    }
    let n = space.len();
    if n > budget.max_points {
        return Err(Error::BudgetExceeded { points: n, budget: budget.max_points });
    }
    let trees = tree_count(n).ok_or(Error::BudgetExceeded { points: n, budget: budget.max_points })?;
    let scaled = scale_molecule(mu, n)?;
    let weight = powered_weights(space, p);
    let evaluator = TreeFlows { n, weight: &weight, p, supply: &scaled.supply };

    struct Scratch {
        seq: Vec<usize>,
        degree: Vec<usize>,
        edges: Vec<(usize, usize)>,
        parent: Vec<usize>,
        order: Vec<usize>,
        flows: Vec<i128>,
    }
    let scratch = || Scratch {
        seq: Vec::with_capacity(n),
        degree: vec![0; n],
        edges: Vec::with_capacity(n),
        parent: vec![0; n],
        order: Vec::with_capacity(n),
        flows: vec![0; n],
    };
    let cost_of = |s: &mut Scratch, code: u64| -> f64 {
        prufer_edges(n, code, &mut s.seq, &mut s.degree, &mut s.edges);
        root_tree(n, &s.edges, &mut s.parent, &mut s.order);
        evaluator.evaluate(&s.parent, &s.order, &mut s.flows)
    };

    let best = (0..trees)
        .into_par_iter()
        .map_init(scratch, |s, code| cost_of(s, code))
        .reduce(|| f64::INFINITY, f64::min);

    // deterministic tie-break: lexicographically smallest support among
    // near-optimal trees
    let threshold = best * (1.0 + COST_RTOL);
    let winner = (0..trees)
        .into_par_iter()
        .map_init(scratch, |s, code| {
            let cost = cost_of(s, code);
            (cost <= threshold).then(|| (flow_support(n, &s.parent, &s.flows), code))
        })
        .flatten()
        .min()
        .expect("at least one spanning tree");

    let mut s = scratch();
    prufer_edges(n, winner.1, &mut s.seq, &mut s.degree, &mut s.edges);
    root_tree(n, &s.edges, &mut s.parent, &mut s.order);
    let decomposition = tree_decomposition(space, mu, &s.parent, &s.order, &scaled)?;
    let value = decomposition.cost(p);
    Ok(NormCertificate {
        lower: value,
        upper: value,
        upper_witness: decomposition,
        lower_witness: LowerWitness::Exact,
        exact: true,
    })
}

/// `p = 1`: min-cost transshipment on the raw distances; its flows are the
/// optimal decomposition.
fn exact_one_norm(space: &QSpace, mu: &Molecule) -> Result<NormCertificate> {
    let cert = wasserstein::min_cost_flow(space, mu);
    let terms: Vec<(Rational, usize, usize)> = cert
        .plan
        .flows
        .iter()
        .map(|(u, v, m)| {
            let atom = Atom::new(*u, *v).expect("flow between distinct points");
            (m * atom_length(space, atom), *u, *v)
        })
        .collect();
    let decomposition = Decomposition::new(mu.clone(), terms)?;
    let value = decomposition.cost(&Exponent::one());
    Ok(NormCertificate {
        lower: value,
        upper: value,
        upper_witness: decomposition,
        lower_witness: LowerWitness::Exact,
        exact: true,
    })
}

/// Exact when `n` is within budget, certified bounds otherwise.
pub fn norm(space: &QSpace, mu: &Molecule, p: &Exponent, budget: Budget) -> Result<NormCertificate> {
    match exact_pnorm(space, mu, p, budget) {
        Err(Error::BudgetExceeded { .. }) => pnorm_bounds(space, mu, p),
        other => other,
    }
}

/// Largest size for which the local search refinement of upper bounds runs.
const LOCAL_SEARCH_MAX_POINTS: usize = 40;

fn subtree_mask(n: usize, parent: &[usize], v: usize) -> Vec<bool> {
    let mut inside = vec![false; n];
    for u in 0..n {
        let mut w = u;
        loop {
            if w == v {
                inside[u] = true;
                break;
            }
            if w == 0 {
                break;
            }
            w = parent[w];
        }
    }
    inside
}

fn parent_first_order(n: usize, parent: &[usize]) -> Vec<usize> {
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (v, parent[v])).collect();
    let mut p = vec![0; n];
    let mut order = Vec::with_capacity(n);
    root_tree(n, &edges, &mut p, &mut order);
    order
}

/// Certified two-sided bounds without enumeration.
pub fn pnorm_bounds(space: &QSpace, mu: &Molecule, p: &Exponent) -> Result<NormCertificate> {
    p.check_unit()?;
    mu.check_within(space.len())?;
    if mu.is_zero() {
        let mut cert = NormCertificate::trivial(mu.clone());
        cert.exact = false;
        return Ok(cert);
    }
    let n = space.len();

    let lip = wasserstein::lip_lower_bound(space, mu, p)?;
    let scale = space.min_offdiag();
    let coeffs: Vec<f64> = (1..n).map(|i| number::to_f64(&mu.get(i))).collect();
    let pbody_value = scale * pbody::zeroone_bound_from_coeffs(&coeffs, p);
    let (lower, lower_witness) = if pbody_value > lip {
        (pbody_value, LowerWitness::PBody { value: pbody_value, scale })
    } else {
        (lip, LowerWitness::Wasserstein { value: lip })
    };

    let scaled = scale_molecule(mu, n)?;
    let weight = powered_weights(space, p);
    let evaluator = TreeFlows { n, weight: &weight, p, supply: &scaled.supply };
    let mut flows = vec![0i128; n];

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    // stars through every hub; the hub hangs off the base
    for hub in 0..n {
        let mut parent = vec![hub; n];
        parent[0] = usize::MAX;
        if hub != 0 {
            parent[hub] = 0;
        }
        candidates.push(parent);
    }
    // shortest-chain tree towards the base under dist^p
    candidates.push(shortest_path_tree(n, &weight));

    let mut best: Option<(f64, Vec<usize>)> = None;
    for parent in candidates {
        let order = parent_first_order(n, &parent);
        let cost = evaluator.evaluate(&parent, &order, &mut flows);
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, parent));
        }
    }
    let (mut best_cost, mut parent) = best.expect("at least one candidate tree");

    if n <= LOCAL_SEARCH_MAX_POINTS {
        // re-parenting descent: move one subtree at a time
        let mut improved = true;
        let mut sweeps = 0;
        while improved && sweeps < 50 {
            improved = false;
            sweeps += 1;
            for v in 1..n {
                let inside = subtree_mask(n, &parent, v);
                for w in 0..n {
                    if inside[w] || w == parent[v] {
                        continue;
                    }
                    let old = parent[v];
                    parent[v] = w;
                    let order = parent_first_order(n, &parent);
                    let cost = evaluator.evaluate(&parent, &order, &mut flows);
                    if cost < best_cost * (1.0 - 1e-13) {
                        best_cost = cost;
                        improved = true;
                    } else {
                        parent[v] = old;
                    }
                }
            }
        }
    }

    let order = parent_first_order(n, &parent);
    let decomposition = tree_decomposition(space, mu, &parent, &order, &scaled)?;
    let upper = decomposition.cost(p);
    Ok(NormCertificate {
        lower: lower.min(upper),
        upper,
        upper_witness: decomposition,
        lower_witness,
        exact: false,
    })
}

/// Dijkstra tree towards point 0 under edge weights `weight`.
fn shortest_path_tree(n: usize, weight: &[f64]) -> Vec<usize> {
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut done = vec![false; n];
    dist[0] = 0.0;
    parent[0] = usize::MAX;
    for _ in 0..n {
        let u = (0..n)
            .filter(|&i| !done[i])
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            .expect("unvisited node");
        done[u] = true;
        for v in 0..n {
            if !done[v] && dist[u] + weight[u * n + v] < dist[v] {
                dist[v] = dist[u] + weight[u * n + v];
                parent[v] = u;
            }
        }
    }
    parent
}

/// Norms of `mu` in a subspace and in the ambient space.
#[derive(Debug, Clone)]
pub struct SubsetComparison {
    pub in_subset: NormCertificate,
    pub in_superspace: NormCertificate,
    /// Subset norm over superspace norm; when either side is only bounded,
    /// the certified lower bound `subset.lower / superspace.upper`.
    pub ratio: f64,
    pub exact: bool,
}

/// Compares `||mu||` in the subspace on `subset` (which must contain the
/// base point and the support of `mu`) with `||mu||` in `space`.
pub fn subset_norm_compare(
    space: &QSpace,
    subset: &[usize],
    mu: &Molecule,
    p: &Exponent,
    budget: Budget,
) -> Result<SubsetComparison> {
    let mut indices: Vec<usize> = subset.to_vec();
    indices.sort_unstable();
    indices.dedup();
    if indices.first() != Some(&0) {
        return Err(Error::Parameter("subset must contain the base point".into()));
    }
    let sub = space.subspace(&indices)?;
    let local = mu.restrict_to(&indices)?;
    let in_subset = norm(&sub, &local, p, budget)?;
    let in_superspace = norm(space, mu, p, budget)?;
    let exact = in_subset.exact && in_superspace.exact;
    let ratio = if in_superspace.upper == 0.0 {
        1.0
    } else if exact {
        in_subset.upper / in_superspace.upper
    } else {
        in_subset.lower / in_superspace.upper
    };
    Ok(SubsetComparison {
        in_subset,
        in_superspace,
        ratio,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn prufer_codes_give_spanning_trees() {
        let n = 5;
        let mut seen = std::collections::BTreeSet::new();
        let (mut seq, mut degree, mut edges) = (Vec::new(), vec![0; n], Vec::new());
        for code in 0..tree_count(n).unwrap() {
            prufer_edges(n, code, &mut seq, &mut degree, &mut edges);
            assert_eq!(edges.len(), n - 1);
            let mut key: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            key.sort();
            seen.insert(key);
        }
        assert_eq!(seen.len(), 125);
    }

    #[test]
    fn atom_norm_is_one() {
        let s = QSpace::zero_one(4, Exponent::from_ratio(1, 2));
        let cert = exact_pnorm(&s, &Molecule::dipole(2, 3), &Exponent::from_ratio(1, 2), Budget::default()).unwrap();
        assert_eq!(cert.upper, 1.0);
        assert!(cert.verify(&s, &Exponent::from_ratio(1, 2)).unwrap());
    }

    #[test]
    fn snowflaked_line_value() {
        let half = Exponent::from_ratio(1, 2);
        let s = QSpace::line(&[r(0), r(1), r(3)], 0, &half).unwrap();
        let mu = Molecule::from_deltas([(&r(1), 1), (&r(1), 2)], 0);
        let cert = exact_pnorm(&s, &mu, &half, Budget::default()).unwrap();
        let expected = 6.0 + 4.0 * 2f64.sqrt();
        assert!((cert.upper - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn zero_one_two_points() {
        let half = Exponent::from_ratio(1, 2);
        let s = QSpace::zero_one(3, half.clone());
        let mu = Molecule::from_deltas([(&r(1), 1), (&r(1), 2)], 0);
        let cert = exact_pnorm(&s, &mu, &half, Budget::default()).unwrap();
        assert!((cert.upper - 4.0).abs() < 1e-12);
        let bounds = pnorm_bounds(&s, &mu, &half).unwrap();
        assert!((bounds.lower - 4.0).abs() < 1e-12);
        assert!((bounds.upper - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_molecule_and_budget() {
        let s = QSpace::zero_one(9, Exponent::from_ratio(1, 2));
        let zero = exact_pnorm(&s, &Molecule::zero(), &Exponent::from_ratio(1, 2), Budget::default()).unwrap();
        assert_eq!(zero.upper, 0.0);
        assert!(zero.upper_witness.terms().is_empty());
        let err = exact_pnorm(&s, &Molecule::dipole(1, 0), &Exponent::from_ratio(1, 2), Budget::default());
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
        let fallback = norm(&s, &Molecule::dipole(1, 0), &Exponent::from_ratio(1, 2), Budget::default()).unwrap();
        assert!(!fallback.exact);
        assert!((fallback.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_points_rejected() {
        let s = QSpace::zero_one(3, Exponent::one());
        let mu = Molecule::dipole(5, 0);
        assert!(matches!(
            exact_pnorm(&s, &mu, &Exponent::from_ratio(1, 2), Budget::default()),
            Err(Error::PointOutOfRange { .. })
        ));
    }

    #[test]
    fn p_one_routes_through_flow() {
        let labels = vec!["a".into(), "b".into(), "c".into()];
        let rows = vec![vec![r(0), r(1), r(4)], vec![r(1), r(0), r(1)], vec![r(4), r(1), r(0)]];
        let s = QSpace::from_exact(labels, rows, Exponent::from_ratio(1, 2)).unwrap();
        let cert = exact_pnorm(&s, &Molecule::dipole(2, 0), &Exponent::one(), Budget::default()).unwrap();
        assert_eq!(cert.upper, 2.0);
        assert!(cert.verify(&s, &Exponent::one()).unwrap());
        assert_eq!(cert.upper_witness.terms().len(), 2);
    }

    #[test]
    fn subset_identity_ratio() {
        let half = Exponent::from_ratio(1, 2);
        let s = QSpace::zero_one(5, half.clone());
        let mu = &Molecule::dipole(1, 0) - &Molecule::dipole(2, 0);
        let cmp = subset_norm_compare(&s, &[0, 1, 2, 3, 4], &mu, &half, Budget::default()).unwrap();
        assert_eq!(cmp.ratio, 1.0);
        let cmp = subset_norm_compare(&s, &[0, 1, 2], &mu, &half, Budget::default()).unwrap();
        assert!((cmp.ratio - 1.0).abs() < 1e-12);
        assert!(subset_norm_compare(&s, &[0, 1], &mu, &half, Budget::default()).is_err());
    }
}
