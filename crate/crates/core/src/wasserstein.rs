//! Free 1-norm (earth mover value) of a molecule over a finite metric space,
//! with a primal transport plan and a 1-Lipschitz dual potential.
//!
//! The solver runs successive shortest augmenting paths on the complete
//! directed graph. Flows are always exact rationals (they are sums of the
//! molecule's coefficients); costs and potentials are exact when the space is.

use num_traits::{Signed, Zero};

use crate::envelope;
use crate::error::{Error, Result};
use crate::molecule::Molecule;
use crate::number::{self, Exponent, Rational, COST_RTOL};
use crate::scalar::Scalar;
use crate::space::QSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `(from, to, mass)` with positive mass.
    pub flows: Vec<(usize, usize, Rational)>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential {
    /// Values with `f[0] == 0`.
    pub f: Vec<f64>,
    pub exact: Option<Vec<Rational>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct W1Certificate {
    pub value: f64,
    pub exact_value: Option<Rational>,
    pub plan: TransportPlan,
    pub potential: DualPotential,
}

impl TransportPlan {
    /// Net outflow at every point equals `mu`.
    pub fn balances(&self, mu: &Molecule) -> bool {
        let mut net = Molecule::zero();
        for (from, to, mass) in &self.flows {
            net.add_dipole(*from, *to, mass);
        }
        net == *mu
    }

    pub fn exact_value(&self, space: &QSpace) -> Option<Rational> {
        self.flows.iter().try_fold(<Rational as Zero>::zero(), |acc, (a, b, m)| {
            space.dist_exact(*a, *b).map(|d| acc + d * m)
        })
    }
}

impl DualPotential {
    pub fn pairing(&self, mu: &Molecule) -> f64 {
        mu.iter().map(|(i, c)| number::to_f64(c) * self.f[i]).sum()
    }

    pub fn exact_pairing(&self, mu: &Molecule) -> Option<Rational> {
        let f = self.exact.as_ref()?;
        Some(mu.iter().fold(<Rational as Zero>::zero(), |acc, (i, c)| acc + c * &f[i]))
    }

    /// `|f(x) - f(y)| <= dist(x, y)` on all pairs; exact when possible.
    pub fn is_lipschitz(&self, space: &QSpace) -> bool {
        let n = space.len();
        (0..n).all(|x| {
            (0..n).all(|y| match (&self.exact, space.dist_exact(x, y)) {
                (Some(f), Some(d)) => (&f[x] - &f[y]).abs() <= *d,
                _ => (self.f[x] - self.f[y]).abs() <= space.dist(x, y) * (1.0 + 1e-9) + 1e-12,
            })
        })
    }
}

struct FlowSolution<T> {
    flows: Vec<(usize, usize, Rational)>,
    potential: Vec<T>,
    value: T,
}

/// Shortest distances in the residual graph from `sources` (all at 0).
/// Returns distances and predecessor arcs.
fn residual_bellman_ford<T: Scalar>(
    n: usize,
    cost: &[T],
    flow: &[Rational],
    sources: &[usize],
) -> (Vec<Option<T>>, Vec<Option<usize>>) {
    let mut dist: Vec<Option<T>> = vec![None; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    for &s in sources {
        dist[s] = Some(T::origin());
    }
    for _ in 0..n {
        let mut changed = false;
        for u in 0..n {
            let Some(du) = dist[u].clone() else { continue };
            for v in 0..n {
                if u == v {
                    continue;
                }
                // forward arc u->v, plus reverse arc u->v when v->u carries flow
                let mut best = du.add(&cost[u * n + v]);
                if flow[v * n + u].is_positive() {
                    let rev = du.sub(&cost[v * n + u]);
                    if rev < best {
                        best = rev;
                    }
                }
                let better = match &dist[v] {
                    None => true,
                    Some(dv) => best.definitely_less(dv),
                };
                if better {
                    dist[v] = Some(best);
                    pred[v] = Some(u);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (dist, pred)
}

fn solve_flow<T: Scalar>(n: usize, cost: &[T], supply: &[Rational]) -> FlowSolution<T> {
    let mut excess = supply.to_vec();
    let mut flow = vec![<Rational as Zero>::zero(); n * n];
    loop {
        let sources: Vec<usize> = (0..n).filter(|&i| excess[i].is_positive()).collect();
        if sources.is_empty() {
            break;
        }
        let (dist, pred) = residual_bellman_ford(n, cost, &flow, &sources);
        let target = (0..n)
            .filter(|&t| excess[t].is_negative())
            .filter_map(|t| dist[t].clone().map(|d| (t, d)))
            .fold(None::<(usize, T)>, |best, (t, d)| match best {
                Some((_, ref bd)) if !(d.definitely_less(bd)) => best,
                _ => Some((t, d)),
            })
            .map(|(t, _)| t)
            .expect("complete graph: every deficit is reachable");

        // walk back to a source, collecting arcs and the bottleneck
        let mut path = Vec::new();
        let mut v = target;
        while let Some(u) = pred[v] {
            path.push((u, v));
            v = u;
            assert!(path.len() <= n, "residual graph has a negative cycle");
        }
        let source = v;
        let mut delta = excess[source].clone().min(-excess[target].clone());
        for &(u, v) in &path {
            let forward = cost[u * n + v].clone();
            let reverse = cost[v * n + u].neg();
            let uses_reverse = flow[v * n + u].is_positive() && reverse < forward;
            if uses_reverse {
                delta = delta.min(flow[v * n + u].clone());
            }
        }
        for &(u, v) in &path {
            let forward = cost[u * n + v].clone();
            let reverse = cost[v * n + u].neg();
            if flow[v * n + u].is_positive() && reverse < forward {
                flow[v * n + u] -= &delta;
            } else {
                flow[u * n + v] += &delta;
            }
        }
        excess[source] -= &delta;
        excess[target] += &delta;
    }

    // cancel opposite flows on the same pair
    for u in 0..n {
        for v in u + 1..n {
            let (a, b) = (flow[u * n + v].clone(), flow[v * n + u].clone());
            let m = a.clone().min(b.clone());
            if m.is_positive() {
                flow[u * n + v] = a - &m;
                flow[v * n + u] = b - &m;
            }
        }
    }

    let all: Vec<usize> = (0..n).collect();
    let (pi, _) = residual_bellman_ford(n, cost, &flow, &all);
    let pi: Vec<T> = pi.into_iter().map(|d| d.unwrap_or_else(T::origin)).collect();
    let base = pi[0].clone();
    let potential: Vec<T> = pi.iter().map(|v| base.sub(v)).collect();

    let mut flows = Vec::new();
    let mut value = T::origin();
    for u in 0..n {
        for v in 0..n {
            let m = &flow[u * n + v];
            if m.is_positive() {
                value = value.add(&cost[u * n + v].scale(m));
                flows.push((u, v, m.clone()));
            }
        }
    }
    FlowSolution { flows, potential, value }
}

/// Free 1-norm of `mu` over a metric space.
pub fn f1_norm(space: &QSpace, mu: &Molecule) -> Result<W1Certificate> {
    mu.check_within(space.len())?;
    let violations = space.validate_pmetric(&Exponent::one(), COST_RTOL);
    if !violations.is_empty() {
        return Err(Error::NotMetric(violations.len()));
    }
    Ok(min_cost_flow(space, mu))
}

/// Min-cost transshipment of `mu` with arc costs `dist`, without requiring
/// the triangle inequality. On a quasimetric the optimal value is the free
/// 1-norm over its metric envelope and the flows route along shortest chains.
pub(crate) fn min_cost_flow(space: &QSpace, mu: &Molecule) -> W1Certificate {
    let n = space.len();
    let supply: Vec<Rational> = (0..n).map(|i| mu.get(i)).collect();
    match space.exact_rows() {
        Some(rows) => {
            let cost: Vec<Rational> = rows.into_iter().flatten().collect();
            let sol = solve_flow(n, &cost, &supply);
            let value = number::to_f64(&sol.value);
            W1Certificate {
                value,
                exact_value: Some(sol.value),
                plan: TransportPlan { flows: sol.flows, value },
                potential: DualPotential {
                    f: sol.potential.iter().map(number::to_f64).collect(),
                    exact: Some(sol.potential),
                },
            }
        }
        None => {
            let cost: Vec<f64> = space.float_rows().into_iter().flatten().collect();
            let sol = solve_flow(n, &cost, &supply);
            W1Certificate {
                value: sol.value,
                exact_value: None,
                plan: TransportPlan { flows: sol.flows, value: sol.value },
                potential: DualPotential { f: sol.potential, exact: None },
            }
        }
    }
}

/// Free 1-norm over the metric envelope; never exceeds the free p-norm.
pub fn lip_lower_bound(space: &QSpace, mu: &Molecule, p: &Exponent) -> Result<f64> {
    p.check_unit()?;
    mu.check_within(space.len())?;
    let env = envelope::q_envelope(space, &Exponent::one())?;
    Ok(f1_norm(&env.space, &env.push_forward(mu))?.value)
}
