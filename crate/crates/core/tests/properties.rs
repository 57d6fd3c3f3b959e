//! Property tests for the invariants of every module.

use freep::envelope::q_envelope;
use freep::io::{parse_space, space_to_json};
use freep::isometry::{
    counterexample_analytic, interval_step_function, line_coordinates, lp_norm, ultrametric_dendrogram, LineSubset,
};
use freep::molecule::lp_cost;
use freep::number::{to_f64, Exponent, Rational};
use freep::pbody::pbody_minkowski;
use freep::{
    exact_pnorm, f1_norm, lip_lower_bound, pnorm_bounds, subset_norm_compare, Budget, Decomposition, Molecule, QSpace,
};
use num_traits::{Signed, Zero};
use proptest::prelude::*;

fn int(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![
        Just(Exponent::from_ratio(1, 3)),
        Just(Exponent::from_ratio(1, 2)),
        Just(Exponent::from_ratio(2, 3)),
    ]
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("q{i}")).collect()
}

/// Symmetric matrix from the upper-triangle entries.
fn symmetric(n: usize, upper: &[i64]) -> Vec<Vec<Rational>> {
    let mut rows = vec![vec![Rational::zero(); n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            rows[i][j] = int(upper[k]);
            rows[j][i] = int(upper[k]);
            k += 1;
        }
    }
    rows
}

/// Any positive symmetric integer matrix (a quasimetric).
fn quasi_space(max_n: usize) -> impl Strategy<Value = QSpace> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(1i64..=12, n * (n - 1) / 2)
            .prop_map(move |u| QSpace::from_exact(labels(n), symmetric(n, &u), Exponent::one()).unwrap())
    })
}

/// A random metric (closure of a quasimetric), snowflaked to exponent `p`.
fn pspace(max_n: usize) -> impl Strategy<Value = (QSpace, Exponent)> {
    (quasi_space(max_n), exponent()).prop_map(|(q, p)| {
        let metric = q_envelope(&q, &Exponent::one()).unwrap().space;
        (metric.snowflake(&p.recip()).unwrap(), p)
    })
}

fn molecule(n: usize) -> impl Strategy<Value = Molecule> {
    prop::collection::vec(-4i64..=4, n - 1).prop_map(|a| {
        let entries: Vec<(Rational, usize)> = a.iter().enumerate().map(|(i, &v)| (int(v), i + 1)).collect();
        Molecule::from_deltas(entries.iter().map(|(v, i)| (v, *i)), 0)
    })
}

fn space_with_molecule(max_n: usize) -> impl Strategy<Value = (QSpace, Exponent, Molecule)> {
    pspace(max_n).prop_flat_map(|(s, p)| {
        let n = s.len();
        (Just(s), Just(p), molecule(n))
    })
}

fn exact(space: &QSpace, mu: &Molecule, p: &Exponent) -> f64 {
    exact_pnorm(space, mu, p, Budget::default()).unwrap().upper
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // ---- space ----

    #[test]
    fn save_load_round_trip(s in quasi_space(6), p in exponent()) {
        let s = s.with_exponent(p);
        prop_assert_eq!(parse_space(&space_to_json(&s)).unwrap(), s.clone());
        let floats = s.snowflake(&Exponent::from_ratio(2, 3)).unwrap();
        let back = parse_space(&space_to_json(&floats)).unwrap();
        for i in 0..s.len() {
            for j in 0..s.len() {
                prop_assert_eq!(back.dist(i, j).to_bits(), floats.dist(i, j).to_bits());
            }
        }
    }

    #[test]
    fn max_exponent_is_the_threshold(s in quasi_space(5)) {
        let pmax = s.max_p_exponent();
        prop_assert!(pmax > 0.0 && pmax <= 1.0);
        let below = Exponent::from_f64((pmax - 1e-6).max(1e-7));
        prop_assert!(s.validate_pmetric(&below, 1e-12).is_empty());
        if pmax < 1.0 - 1e-6 {
            let above = Exponent::from_f64(pmax + 1e-6);
            prop_assert!(!s.validate_pmetric(&above, 1e-12).is_empty());
        }
    }

    #[test]
    fn snowflake_inverts(s in quasi_space(5), a in 1i64..=3, b in 1i64..=3) {
        let alpha = Exponent::from_ratio(a, b);
        let twice = s.snowflake(&alpha).unwrap().snowflake(&alpha.recip()).unwrap();
        for i in 0..s.len() {
            for j in 0..s.len() {
                prop_assert!(close(twice.dist(i, j), s.dist(i, j), 1e-12));
            }
        }
        if a == 1 {
            // integer powers stay rational and invert exactly
            let alpha = Exponent::from_ratio(b, 1);
            let back = s.snowflake(&alpha).unwrap().snowflake(&alpha.recip()).unwrap();
            prop_assert_eq!(back.exact_rows(), s.exact_rows());
        }
    }

    // ---- molecule ----

    #[test]
    fn deltas_are_linear(a in prop::collection::vec(-5i64..=5, 4), b in prop::collection::vec(-5i64..=5, 4)) {
        let ea: Vec<(Rational, usize)> = a.iter().enumerate().map(|(i, &v)| (int(v), i + 1)).collect();
        let eb: Vec<(Rational, usize)> = b.iter().enumerate().map(|(i, &v)| (int(v), i + 1)).collect();
        let ma = Molecule::from_deltas(ea.iter().map(|(v, i)| (v, *i)), 0);
        let mb = Molecule::from_deltas(eb.iter().map(|(v, i)| (v, *i)), 0);
        let joint = Molecule::from_deltas(ea.iter().chain(&eb).map(|(v, i)| (v, *i)), 0);
        prop_assert_eq!(&ma + &mb, joint);
        prop_assert!((&ma + &mb).total().is_zero());
    }

    #[test]
    fn merging_never_increases_cost(
        terms in prop::collection::vec((-6i64..=6, 0usize..4, 0usize..4), 1..10),
        p in exponent(),
    ) {
        let terms: Vec<(Rational, usize, usize)> = terms.into_iter().filter(|t| t.1 != t.2).map(|(c, a, b)| (int(c), a, b)).collect();
        let raw = lp_cost(terms.iter().map(|t| to_f64(&t.0)), &p);
        let merged = Decomposition::new(Molecule::zero(), terms).unwrap();
        prop_assert!(merged.cost(&p) <= raw * (1.0 + 1e-12) + 1e-12);
        for (a, atom) in merged.terms() {
            prop_assert!(atom.x() < atom.y());
            let single = Decomposition::new(Molecule::zero(), [(a.signum(), atom.x(), atom.y())]).unwrap();
            prop_assert!(close(single.cost(&p), 1.0, 1e-15));
        }
    }

    // ---- envelope ----

    #[test]
    fn envelope_is_idempotent_and_contractive(s in quasi_space(6), q in exponent()) {
        let env = q_envelope(&s, &q).unwrap();
        let again = q_envelope(&env.space, &q).unwrap();
        prop_assert_eq!(again.space.exact_rows(), env.space.exact_rows());
        prop_assert_eq!(again.classes, (0..env.space.len()).collect::<Vec<_>>());
        for x in 0..s.len() {
            for y in 0..s.len() {
                prop_assert!(env.dist(x, y) <= s.dist(x, y) * (1.0 + 1e-12));
            }
        }
        prop_assert!(env.space.is_pmetric(&q));
    }

    #[test]
    fn envelope_shrinks_as_q_grows(s in quasi_space(6), a in 1i64..=9, b in 1i64..=9) {
        let (lo, hi) = (a.min(b), a.max(b));
        let small = q_envelope(&s, &Exponent::from_ratio(lo, 10)).unwrap();
        let large = q_envelope(&s, &Exponent::from_ratio(hi, 10)).unwrap();
        for x in 0..s.len() {
            for y in 0..s.len() {
                prop_assert!(large.dist(x, y) <= small.dist(x, y) * (1.0 + 1e-12));
            }
        }
    }

    // ---- wasserstein ----

    #[test]
    fn transport_duality_and_homogeneity(
        s in quasi_space(8),
        a in prop::collection::vec(-4i64..=4, 7),
        b in prop::collection::vec(-4i64..=4, 7),
        t in -3i64..=3,
    ) {
        let metric = q_envelope(&s, &Exponent::one()).unwrap().space;
        let n = metric.len();
        let make = |v: &[i64]| {
            let e: Vec<(Rational, usize)> = v[..n - 1].iter().enumerate().map(|(i, &c)| (int(c), i + 1)).collect();
            Molecule::from_deltas(e.iter().map(|(c, i)| (c, *i)), 0)
        };
        let (mu, nu) = (make(&a), make(&b));
        let w = f1_norm(&metric, &mu).unwrap();
        prop_assert_eq!(w.plan.exact_value(&metric), w.potential.exact_pairing(&mu));
        prop_assert!(w.potential.is_lipschitz(&metric));
        prop_assert!(w.plan.balances(&mu));
        let sum = f1_norm(&metric, &(&mu + &nu)).unwrap().exact_value.unwrap();
        let sep = w.exact_value.clone().unwrap() + f1_norm(&metric, &nu).unwrap().exact_value.unwrap();
        prop_assert!(sum <= sep);
        let scaled = f1_norm(&metric, &mu.scale(&int(t))).unwrap().exact_value.unwrap();
        prop_assert_eq!(scaled, w.exact_value.unwrap() * int(t).abs());
    }

    // ---- freenorm ----

    #[test]
    fn sandwich((s, p, mu) in space_with_molecule(6)) {
        let value = exact(&s, &mu, &p);
        let lip = lip_lower_bound(&s, &mu, &p).unwrap();
        let bounds = pnorm_bounds(&s, &mu, &p).unwrap();
        prop_assert!(lip <= value * (1.0 + 1e-12) + 1e-12);
        prop_assert!(bounds.lower <= value * (1.0 + 1e-12) + 1e-12);
        prop_assert!(value <= bounds.upper * (1.0 + 1e-12) + 1e-12);
        prop_assert!(bounds.verify(&s, &p).unwrap());
    }

    #[test]
    fn p_triangle_and_homogeneity((s, p, mu) in space_with_molecule(5), nu_seed in prop::collection::vec(-3i64..=3, 4), t in 1i64..=4) {
        let n = s.len();
        let e: Vec<(Rational, usize)> = nu_seed[..n - 1].iter().enumerate().map(|(i, &c)| (int(c), i + 1)).collect();
        let nu = Molecule::from_deltas(e.iter().map(|(c, i)| (c, *i)), 0);
        let pv = p.value();
        let (a, b, c) = (exact(&s, &mu, &p), exact(&s, &nu, &p), exact(&s, &(&mu + &nu), &p));
        prop_assert!(c.powf(pv) <= (a.powf(pv) + b.powf(pv)) * (1.0 + 1e-12) + 1e-12);
        let scaled = exact(&s, &mu.scale(&Rational::new(t.into(), 3.into())), &p);
        prop_assert!(close(scaled, a * t as f64 / 3.0, 1e-12));
        prop_assert!(close(exact(&s, &-&mu, &p), a, 1e-12));
    }

    #[test]
    fn delta_is_isometric((s, p) in pspace(6)) {
        for x in 0..s.len() {
            for y in x + 1..s.len() {
                let v = exact(&s, &Molecule::dipole(x, y), &p);
                prop_assert!(close(v, s.dist(x, y), 1e-12), "{} vs {}", v, s.dist(x, y));
            }
        }
    }

    #[test]
    fn subsets_never_shrink_norms((s, p) in pspace(6), keep in prop::collection::vec(any::<bool>(), 5), coeffs in prop::collection::vec(-3i64..=3, 5)) {
        let n = s.len();
        let subset: Vec<usize> = std::iter::once(0).chain((1..n).filter(|&i| keep[i - 1])).collect();
        let e: Vec<(Rational, usize)> = subset[1..].iter().map(|&i| (int(coeffs[i - 1]), i)).collect();
        let mu = Molecule::from_deltas(e.iter().map(|(c, i)| (c, *i)), 0);
        let cmp = subset_norm_compare(&s, &subset, &mu, &p, Budget::default()).unwrap();
        prop_assert!(cmp.in_superspace.upper <= cmp.in_subset.upper * (1.0 + 1e-12) + 1e-12);
        prop_assert!(cmp.ratio >= 1.0 - 1e-12);
    }

    #[test]
    fn envelope_consistency((s, p, mu) in space_with_molecule(6)) {
        let env = q_envelope(&s, &Exponent::one()).unwrap();
        let direct = f1_norm(&env.space, &env.push_forward(&mu)).unwrap().value;
        let via = freep::envelope_norm(&s, &mu, &Exponent::one(), Budget::default()).unwrap();
        prop_assert!(close(direct, via, 1e-9));
        prop_assert!(via <= exact(&s, &mu, &p) * (1.0 + 1e-12) + 1e-12);
    }

    // ---- pbody ----

    #[test]
    fn pbody_orthant_and_sandwich(x in prop::collection::vec(-3.0f64..3.0, 1..=5), p in exponent()) {
        let v = pbody_minkowski(&x, &p).unwrap().value;
        let sup = x.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let lp = lp_norm(x.iter().copied(), &p);
        prop_assert!(sup <= v * (1.0 + 1e-9) + 1e-12);
        prop_assert!(v <= lp * (1.0 + 1e-9) + 1e-12);
        let pos: Vec<f64> = x.iter().map(|c| c.abs()).collect();
        prop_assert!(close(pbody_minkowski(&pos, &p).unwrap().value, lp_norm(pos.iter().copied(), &p), 1e-9));
        let neg: Vec<f64> = x.iter().map(|c| -c).collect();
        prop_assert!(close(pbody_minkowski(&neg, &p).unwrap().value, v, 1e-9));
    }

    #[test]
    fn pbody_is_absolutely_p_convex(
        x in prop::collection::vec(-3.0f64..3.0, 2..=4),
        y in prop::collection::vec(-3.0f64..3.0, 4),
        lam in 0.0f64..1.0,
        frac in 0.0f64..=1.0,
        p in exponent(),
    ) {
        let d = x.len();
        let y = &y[..d];
        let fx = pbody_minkowski(&x, &p).unwrap().value;
        let fy = pbody_minkowski(y, &p).unwrap().value;
        prop_assume!(fx > 1e-6 && fy > 1e-6);
        let mu = (1.0 - lam.powf(p.value())).max(0.0).powf(1.0 / p.value()) * frac;
        let z: Vec<f64> = (0..d).map(|i| lam * x[i] / fx - mu * y[i] / fy).collect();
        prop_assert!(pbody_minkowski(&z, &p).unwrap().value <= 1.0 + 1e-9);
    }

    // ---- isometry ----

    #[test]
    fn line_isometries_agree(
        pts in prop::collection::btree_set(-15i64..=15, 2..=6),
        base_pick in any::<prop::sample::Index>(),
        p in exponent(),
        coeffs in prop::collection::vec(-3i64..=3, 5),
    ) {
        let positions: Vec<Rational> = pts.iter().map(|&v| Rational::new(v.into(), 2.into())).collect();
        let base = base_pick.index(positions.len());
        let line = LineSubset::new(&positions, base, p.clone()).unwrap();
        let space = line.space().unwrap();
        let n = space.len();
        let e: Vec<(Rational, usize)> = (1..n).map(|i| (int(coeffs[i - 1]), i)).collect();
        let mu = Molecule::from_deltas(e.iter().map(|(c, i)| (c, *i)), 0);
        let v = exact(&space, &mu, &p);
        let coords = lp_norm(line_coordinates(&line, &mu).unwrap().iter().map(|g| g.value), &p);
        let step = interval_step_function(&line, &mu).unwrap().lp_norm(&p);
        prop_assert!(close(v, coords, 1e-9), "solver {} vs coordinates {}", v, coords);
        prop_assert!(close(step, coords, 1e-9));
    }

    #[test]
    fn nested_line_subsets_are_isometric(
        pts in prop::collection::btree_set(-15i64..=15, 3..=6),
        keep in prop::collection::vec(any::<bool>(), 5),
        p in exponent(),
        coeffs in prop::collection::vec(-3i64..=3, 5),
    ) {
        let positions: Vec<Rational> = pts.iter().map(|&v| int(v)).collect();
        let space = LineSubset::new(&positions, 0, p.clone()).unwrap().space().unwrap();
        let n = space.len();
        let subset: Vec<usize> = std::iter::once(0).chain((1..n).filter(|&i| keep[i - 1])).collect();
        let e: Vec<(Rational, usize)> = subset[1..].iter().map(|&i| (int(coeffs[i - 1]), i)).collect();
        let mu = Molecule::from_deltas(e.iter().map(|(c, i)| (c, *i)), 0);
        let cmp = subset_norm_compare(&space, &subset, &mu, &p, Budget::default()).unwrap();
        prop_assert!(close(cmp.in_subset.upper, cmp.in_superspace.upper, 1e-9));
    }

    #[test]
    fn dendrogram_reproduces_ultrametric(merges in prop::collection::vec((0usize..8, 0usize..8, 1i64..=3), 5), p in exponent()) {
        // agglomerate 6 leaves at increasing heights
        let n = 6;
        let mut cluster: Vec<usize> = (0..n).collect();
        let mut rows = vec![vec![Rational::zero(); n]; n];
        let mut h = Rational::zero();
        for (a, b, step) in merges {
            let mut ids: Vec<usize> = cluster.clone();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() < 2 {
                break;
            }
            let (ca, cb) = (ids[a % ids.len()], ids[(a + 1 + b % (ids.len() - 1)) % ids.len()]);
            h += Rational::new(step.into(), 2.into());
            for i in 0..n {
                for j in 0..n {
                    if (cluster[i] == ca && cluster[j] == cb) || (cluster[i] == cb && cluster[j] == ca) {
                        rows[i][j] = h.clone();
                    }
                }
            }
            for c in cluster.iter_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
        }
        let s = QSpace::from_exact(labels(n), rows, Exponent::one()).unwrap();
        let emb = ultrametric_dendrogram(&s, &p).unwrap();
        let (_, d) = emb.tree_distances();
        let d = d.unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(Some(&d[i][j]), s.dist_exact(i, j));
            }
        }
        for v in 1..emb.len() {
            prop_assert!(emb.gap(v).unwrap() > 0.0);
        }
        prop_assert!(emb.retraction_lip >= 1.0);
    }
}

#[test]
fn counterexample_ratio_increases_in_k() {
    for (p, q) in [(Exponent::from_ratio(1, 2), Exponent::one()), (Exponent::from_ratio(1, 3), Exponent::from_ratio(1, 2))] {
        let mut previous = 0.0;
        for e in 0..=6 {
            let a = counterexample_analytic(&p, &q, 10u64.pow(e)).unwrap();
            assert!(a.ratio > previous);
            assert!(a.ratio < 2f64.powf(1.0 / q.value()));
            previous = a.ratio;
        }
    }
}
