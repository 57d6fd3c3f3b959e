//! The reproduction suite: nine seeded experiments covering atom isometry,
//! the line, `{0,1}` and ultrametric coordinatizations, the subset
//! counterexample, the p-body, envelopes, transport duality and subset
//! monotonicity. Each experiment reports pass/fail plus one row per instance.

use std::fmt::Write as _;
use std::time::Instant;

use num_traits::{Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envelope::{self, envelope_norm, q_envelope};
use crate::error::Result;
use crate::freenorm::{exact_pnorm, pnorm_bounds, subset_norm_compare, Budget, NormCertificate};
use crate::isometry::{
    self, counterexample_analytic, counterexample_instance, interval_step_function, line_coordinates,
    tree_coordinates, ultrametric_dendrogram, zeroone_embedding, LineSubset,
};
use crate::molecule::{Decomposition, Molecule};
use crate::number::{self, Exponent, Rational};
use crate::pbody::pbody_minkowski;
use crate::space::QSpace;
use crate::wasserstein::{f1_norm, lip_lower_bound};

pub const DEFAULT_SEED: u64 = 0x5eed_f7ee;

#[derive(Debug, Clone)]
pub struct Options {
    pub seed: u64,
    /// Only run criteria whose number or name contains this text.
    pub filter: Option<String>,
    /// Perturb every exact certificate before re-verifying it (negative control).
    pub corrupt: bool,
    pub budget: Budget,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            seed: DEFAULT_SEED,
            filter: None,
            corrupt: false,
            budget: Budget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub criterion: usize,
    pub instance: String,
    pub params: String,
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<String>,
    pub runtime_ms: f64,
    pub rows: Vec<Row>,
}

impl CriterionResult {
    /// One-line summary such as `criterion 3 (zeroone) PASS: 72 checks, 0 failures, 35 ms`.
    pub fn summary(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut line = format!(
            "criterion {} ({}) {status}: {} checks, {} failures, {:.0} ms",
            self.id,
            self.name,
            self.checks,
            self.failures.len(),
            self.runtime_ms
        );
        if let Some(first) = self.failures.first() {
            let _ = write!(line, "; first failure: {first}");
        }
        line
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    /// Instance rows. Runtimes are left out so that the file is
    /// byte-identical across runs with the same seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,instance,params,lower,upper,exact\n");
        for c in &self.criteria {
            for r in &c.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.criterion,
                    r.instance,
                    r.params,
                    number::format_sig15(r.lower),
                    number::format_sig15(r.upper),
                    r.exact
                );
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# freep reproduction report\n\n");
        let _ = writeln!(out, "Seed: `{}`\n", self.seed);
        out += "| # | criterion | result | checks | failures | runtime (ms) |\n";
        out += "|---|-----------|--------|--------|----------|--------------|\n";
        for c in &self.criteria {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {:.0} |",
                c.id,
                c.title,
                if c.passed { "pass" } else { "FAIL" },
                c.checks,
                c.failures.len(),
                c.runtime_ms
            );
        }
        for c in self.criteria.iter().filter(|c| !c.failures.is_empty()) {
            let _ = writeln!(out, "\n## Failures in criterion {} ({})\n", c.id, c.name);
            for f in c.failures.iter().take(20) {
                let _ = writeln!(out, "- {f}");
            }
            if c.failures.len() > 20 {
                let _ = writeln!(out, "- ... and {} more", c.failures.len() - 20);
            }
        }
        let grid: Vec<&Row> = self
            .criteria
            .iter()
            .flat_map(|c| &c.rows)
            .filter(|r| r.instance.starts_with("grid"))
            .collect();
        if !grid.is_empty() {
            out += "\n## Envelope collapse on refined grids\n\n";
            out += "| instance | params | envelope distance from 0 to 1 |\n|---|---|---|\n";
            for r in grid {
                let _ = writeln!(out, "| {} | {} | {} |", r.instance, r.params, number::format_sig15(r.upper));
            }
        }
        out
    }
}

type Runner = fn(&mut Ctx) -> Result<()>;

const CRITERIA: [(usize, &str, &str, Runner); 9] = [
    (1, "atom", "Atom isometry on random spaces", atom_isometry),
    (2, "line", "Line subsets: solver = gap coordinates = step functions", line_isometry),
    (3, "zeroone", "{0,1}-metric bracket and nonnegative equality", zeroone),
    (4, "counterexample", "Non-isometric subset counterexample", counterexample),
    (5, "pbody", "p-body functional properties", pbody_properties),
    (6, "envelope", "Envelopes: grid collapse and lower-bound soundness", envelopes),
    (7, "wasserstein", "Transport duality on random metrics", wasserstein_duality),
    (8, "ultrametric", "Ultrametric dendrograms and tree coordinates", ultrametric),
    (9, "subset", "Subset monotonicity and isometric cases", subset_monotonicity),
];

/// Names of all criteria, in order.
pub fn criterion_names() -> Vec<&'static str> {
    CRITERIA.iter().map(|c| c.1).collect()
}

fn selected(filter: &Option<String>, id: usize, name: &str) -> bool {
    match filter {
        None => true,
        Some(f) => f.split(',').map(str::trim).any(|f| f == id.to_string() || name.contains(f)),
    }
}

pub fn reproduce(opts: &Options) -> Report {
    let criteria = CRITERIA
        .iter()
        .filter(|(id, name, _, _)| selected(&opts.filter, *id, name))
        .map(|&(id, name, title, run)| run_one(opts, id, name, title, run))
        .collect();
    Report { seed: opts.seed, criteria }
}

/// Runs a single criterion by number.
pub fn run_criterion(opts: &Options, id: usize) -> Option<CriterionResult> {
    CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|&(id, name, title, run)| run_one(opts, id, name, title, run))
}

fn run_one(opts: &Options, id: usize, name: &'static str, title: &'static str, run: Runner) -> CriterionResult {
    let start = Instant::now();
    let mut ctx = Ctx {
        id,
        opts,
        rng: ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add((id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))),
        checks: 0,
        failures: Vec::new(),
        rows: Vec::new(),
    };
    if let Err(e) = run(&mut ctx) {
        ctx.failures.push(format!("error: {e}"));
    }
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    CriterionResult {
        id,
        name,
        title,
        passed: ctx.failures.is_empty() && ctx.checks > 0,
        checks: ctx.checks,
        failures: ctx.failures,
        runtime_ms,
        rows: ctx.rows,
    }
}

struct Ctx<'a> {
    id: usize,
    opts: &'a Options,
    rng: ChaCha8Rng,
    checks: usize,
    failures: Vec<String>,
    rows: Vec<Row>,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

impl Ctx<'_> {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn row(&mut self, instance: String, params: String, lower: f64, upper: f64, exact: bool, started: Instant) {
        self.check(lower <= upper * (1.0 + 1e-12) + 1e-300, || {
            format!("{instance}: reported lower {lower} exceeds upper {upper}")
        });
        self.rows.push(Row {
            criterion: self.id,
            instance,
            params,
            lower,
            upper,
            exact,
            runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    /// Exact norm with its certificate re-verified (after corruption, when
    /// the negative control is enabled).
    fn exact(&mut self, space: &QSpace, mu: &Molecule, p: &Exponent, instance: &str) -> Result<NormCertificate> {
        let mut cert = exact_pnorm(space, mu, p, self.opts.budget)?;
        if self.opts.corrupt {
            cert = corrupted(cert)?;
        }
        let ok = cert.verify(space, p)?;
        self.check(ok, || format!("{instance}: certificate failed re-verification"));
        Ok(cert)
    }

    fn limit(&mut self, started: Instant, seconds: f64) {
        let used = started.elapsed().as_secs_f64();
        self.check(used < seconds, || format!("runtime {used:.1} s exceeds {seconds} s"));
    }

    fn pick_p(&mut self) -> Exponent {
        TEST_EXPONENTS[self.rng.gen_range(0..TEST_EXPONENTS.len())].clone()
    }
}

/// Shifts the first coefficient of the witness, or adds a spurious term to
/// an empty one, keeping the reported bounds.
fn corrupted(cert: NormCertificate) -> Result<NormCertificate> {
    let bump = Rational::new(1.into(), 1000.into());
    let dec = &cert.upper_witness;
    let mut terms: Vec<(Rational, usize, usize)> = dec.terms().iter().map(|(c, a)| (c.clone(), a.x(), a.y())).collect();
    match terms.first_mut() {
        Some(t) => t.0 += bump,
        None => terms.push((bump, 0, 1)),
    }
    let upper_witness = Decomposition::new(dec.target().clone(), terms)?;
    Ok(NormCertificate { upper_witness, ..cert })
}

static TEST_EXPONENTS: std::sync::LazyLock<[Exponent; 3]> = std::sync::LazyLock::new(|| {
    [
        Exponent::from_ratio(1, 3),
        Exponent::from_ratio(1, 2),
        Exponent::from_ratio(2, 3),
    ]
});

fn int(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| if i == 0 { "0".to_string() } else { format!("x{i}") }).collect()
}

/// Random metric: shortest-path closure of integer weights in `1..=9`.
fn random_metric(rng: &mut impl Rng, n: usize) -> QSpace {
    let mut m: Vec<Rational> = vec![Rational::zero(); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let w = int(rng.gen_range(1..=9));
            m[i * n + j] = w.clone();
            m[j * n + i] = w;
        }
    }
    envelope::floyd_warshall(n, &mut m);
    let rows = m.chunks(n).map(|r| r.to_vec()).collect();
    QSpace::from_exact(labels(n), rows, Exponent::one()).expect("closure of positive weights is a metric")
}

/// Random exact space whose `p`-th power is a metric: either a snowflaked
/// random metric (when `1/p` is an integer) or a matrix with entries in
/// `[1, 2^(1/p)]`, whose `p`-th powers lie in `[1, 2]`.
fn random_pspace(rng: &mut impl Rng, n: usize, p: &Exponent) -> QSpace {
    let inv = p.recip();
    let snowflake_exact = inv.exact().is_some_and(|r| r.is_integer());
    if snowflake_exact && rng.gen_bool(0.5) {
        return random_metric(rng, n).snowflake(&inv).expect("positive exponent");
    }
    let den: i64 = rng.gen_range(1..=6);
    let top = (2f64.powf(inv.value()) * den as f64).floor() as i64;
    let mut rows = vec![vec![Rational::zero(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = Rational::new(rng.gen_range(den..=top).into(), den.into());
            rows[i][j] = d.clone();
            rows[j][i] = d;
        }
    }
    QSpace::from_exact(labels(n), rows, p.clone()).expect("positive symmetric matrix")
}

/// `sum a_x (chi_x - chi_0)` with small integer `a_x` on a random support.
fn random_molecule(rng: &mut impl Rng, n: usize) -> Molecule {
    loop {
        let mut entries: Vec<(Rational, usize)> = Vec::new();
        for x in 1..n {
            if rng.gen_bool(0.7) {
                entries.push((int(rng.gen_range(-4..=4)), x));
            }
        }
        let mu = Molecule::from_deltas(entries.iter().map(|(a, x)| (a, *x)), 0);
        if !mu.is_zero() {
            return mu;
        }
    }
}

fn random_molecule_on(rng: &mut impl Rng, points: &[usize]) -> Molecule {
    let local = random_molecule(rng, points.len());
    local.push_forward(|i| points[i])
}

fn params(n: usize, p: &Exponent) -> String {
    format!("n={n};p={p}")
}

fn atom_isometry(ctx: &mut Ctx) -> Result<()> {
    let started = Instant::now();
    for s in 0..50 {
        let n = ctx.rng.gen_range(2..=6);
        let p = ctx.pick_p();
        let space = random_pspace(&mut ctx.rng, n, &p);
        for x in 0..n {
            for y in x + 1..n {
                let t0 = Instant::now();
                let rho = space.dist_exact(x, y).cloned().expect("random spaces are exact");
                let atom = Molecule::dipole(x, y).scale(&rho.recip());
                let id = format!("space{s:02}/atom{x}-{y}");
                let cert = ctx.exact(&space, &atom, &p, &id)?;
                ctx.check(close(cert.upper, 1.0, 1e-12), || format!("{id}: norm {} != 1", cert.upper));
                ctx.row(id, params(n, &p), cert.lower, cert.upper, cert.exact, t0);
            }
        }
    }
    ctx.limit(started, 60.0);
    Ok(())
}

fn random_line(rng: &mut impl Rng, n: usize) -> (Vec<Rational>, usize) {
    let den: i64 = rng.gen_range(1..=4);
    let mut positions: Vec<i64> = (-12..=12).collect();
    positions.shuffle(rng);
    let positions: Vec<Rational> = positions[..n].iter().map(|&v| Rational::new(v.into(), den.into())).collect();
    let base = rng.gen_range(0..n);
    (positions, base)
}

fn line_isometry(ctx: &mut Ctx) -> Result<()> {
    let started = Instant::now();
    for s in 0..50 {
        let t0 = Instant::now();
        let n = ctx.rng.gen_range(2..=6);
        let p = ctx.pick_p();
        let (positions, base) = random_line(&mut ctx.rng, n);
        let line = LineSubset::new(&positions, base, p.clone())?;
        let space = line.space()?;
        let mu = random_molecule(&mut ctx.rng, n);
        let id = format!("line{s:02}");
        let cert = ctx.exact(&space, &mu, &p, &id)?;
        let coords = isometry::lp_norm(line_coordinates(&line, &mu)?.iter().map(|g| g.value), &p);
        let step = interval_step_function(&line, &mu)?.lp_norm(&p);
        ctx.check(close(cert.upper, coords, 1e-9), || {
            format!("{id}: solver {} vs gap coordinates {coords}", cert.upper)
        });
        ctx.check(close(step, coords, 1e-9), || format!("{id}: step function {step} vs gap coordinates {coords}"));
        ctx.row(id, params(n, &p), cert.lower, cert.upper, cert.exact, t0);
    }
    ctx.limit(started, 120.0);
    Ok(())
}

fn zeroone(ctx: &mut Ctx) -> Result<()> {
    for s in 0..60 {
        let t0 = Instant::now();
        let n = ctx.rng.gen_range(2..=6);
        let p = ctx.pick_p();
        let space = QSpace::zero_one(n, p.clone());
        let nonnegative = s % 2 == 0;
        let mu = loop {
            let entries: Vec<(Rational, usize)> = (1..n)
                .map(|x| {
                    let a = ctx.rng.gen_range(-4..=4i64);
                    (int(if nonnegative { a.abs() } else { a }), x)
                })
                .collect();
            let mu = Molecule::from_deltas(entries.iter().map(|(a, x)| (a, *x)), 0);
            if !mu.is_zero() {
                break mu;
            }
        };
        let id = format!("zeroone{s:02}");
        let cert = ctx.exact(&space, &mu, &p, &id)?;
        let emb = zeroone_embedding(&space, &mu)?;
        let ratio = cert.upper / emb.lp;
        if nonnegative {
            ctx.check(close(cert.upper, emb.lp, 1e-9), || {
                format!("{id}: nonnegative molecule norm {} != ||a||_p = {}", cert.upper, emb.lp)
            });
        }
        let floor = 2f64.powf(-1.0 / p.value());
        ctx.check(ratio >= floor - 1e-9 && ratio <= 1.0 + 1e-9, || {
            format!("{id}: ratio {ratio} outside [{floor}, 1]")
        });
        ctx.row(id, params(n, &p), cert.lower, cert.upper, cert.exact, t0);
    }
    for p in TEST_EXPONENTS.clone() {
        for n in 3..=6 {
            let t0 = Instant::now();
            let space = QSpace::zero_one(n, p.clone());
            let mu = Molecule::dipole(1, 2);
            let id = format!("dipole/n{n}");
            let cert = ctx.exact(&space, &mu, &p, &id)?;
            let emb = zeroone_embedding(&space, &mu)?;
            let expected = 2f64.powf(-1.0 / p.value());
            let ratio = cert.upper / emb.lp;
            ctx.check(close(ratio, expected, 1e-9), || format!("{id}: ratio {ratio} != 2^(-1/p) = {expected}"));
            ctx.row(id, params(n, &p), cert.lower, cert.upper, cert.exact, t0);
        }
    }
    Ok(())
}

fn counterexample(ctx: &mut Ctx) -> Result<()> {
    let started = Instant::now();
    let p = Exponent::from_ratio(1, 2);
    let q = Exponent::one();
    for (k, threshold) in [(100u64, 1.53), (10_000, 1.94), (1_000_000, 1.99)] {
        let t0 = Instant::now();
        let a = counterexample_analytic(&p, &q, k)?;
        // (eps^p + 2^(-p/q))^(-1/p) with eps = 1/k at p = 1/2, q = 1
        let eps = 1.0 / k as f64;
        let expected = (eps.sqrt() + 0.5f64.sqrt()).powi(-2);
        ctx.check(close(a.ratio, expected, 1e-12), || format!("k={k}: ratio {} != {expected}", a.ratio));
        ctx.check(a.ratio >= threshold - 5e-3, || format!("k={k}: ratio {} below {threshold}", a.ratio));
        ctx.row(format!("analytic/k{k}"), format!("p={p};q={q};k={k}"), a.ratio, a.ratio, false, t0);
    }
    let mut previous = 0.0;
    for e in 0..=6 {
        let k = 10u64.pow(e);
        let a = counterexample_analytic(&p, &q, k)?;
        ctx.check(a.ratio > previous, || format!("ratio not increasing at k={k}"));
        previous = a.ratio;
    }
    for (p, q) in [(p.clone(), q.clone()), (p.clone(), p.clone())] {
        let t0 = Instant::now();
        let inst = counterexample_instance(&p, &q, 4)?;
        let pq = format!("p={p};q={q};k=4");
        let in_n = ctx.exact(&inst.n_space, &inst.mu, &p, "instance/N")?;
        ctx.check(close(in_n.upper, 1.0, 1e-9), || format!("{pq}: norm in N is {} != 1", in_n.upper));
        let in_m = ctx.exact(&inst.m_space, &inst.mu, &p, "instance/M")?;
        let upper = inst.analytic.fp_m_upper;
        ctx.check(in_m.upper <= upper + 1e-9, || format!("{pq}: norm in M {} above analytic {upper}", in_m.upper));
        let lip = lip_lower_bound(&inst.m_space, &inst.mu, &p)?;
        ctx.check(lip <= in_m.upper * (1.0 + 1e-12), || format!("{pq}: lower bound {lip} above {}", in_m.upper));
        ctx.check(in_n.upper / in_m.upper >= 1.0 - 1e-9, || format!("{pq}: ratio below 1"));
        ctx.row("instance/k4/N".into(), pq.clone(), in_n.lower, in_n.upper, in_n.exact, t0);
        ctx.row("instance/k4/M".into(), pq, lip, in_m.upper, in_m.exact, t0);
        // Routing through z only pays off once k^(1-1/p) is small, so the
        // strict gap is certified with bounds on larger instances: the p-body
        // bound on N against the explicit hub decomposition on M.
        for k in [16u64, 36] {
            let t0 = Instant::now();
            let inst = counterexample_instance(&p, &q, k)?;
            let pq = format!("p={p};q={q};k={k}");
            let in_n = pnorm_bounds(&inst.n_space, &inst.mu, &p)?;
            let in_m = pnorm_bounds(&inst.m_space, &inst.mu, &p)?;
            let mut m_cert = in_m.clone();
            if ctx.opts.corrupt {
                m_cert = corrupted(m_cert)?;
            }
            let verified = m_cert.verify(&inst.m_space, &p)?;
            ctx.check(verified, || format!("{pq}: M certificate failed re-verification"));
            ctx.check(close(in_n.lower, 1.0, 1e-9), || format!("{pq}: N lower bound {} != 1", in_n.lower));
            let upper = inst.analytic.fp_m_upper;
            ctx.check(in_m.upper <= upper + 1e-9, || format!("{pq}: M witness {} above analytic {upper}", in_m.upper));
            let certified = in_n.lower / in_m.upper;
            ctx.check(certified > 1.0, || format!("{pq}: certified ratio {certified} not above 1"));
            ctx.row(format!("bounds/k{k}/M"), pq, in_m.lower, in_m.upper, false, t0);
        }
    }
    ctx.limit(started, 60.0);
    Ok(())
}

fn lp(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn random_vector(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn pbody_properties(ctx: &mut Ctx) -> Result<()> {
    let t0 = Instant::now();
    for trial in 0..1000 {
        let d = ctx.rng.gen_range(1..=5);
        let p = ctx.pick_p();
        let x: Vec<f64> = (0..d).map(|_| ctx.rng.gen_range(0.0..3.0)).collect();
        let v = pbody_minkowski(&x, &p)?.value;
        let expected = lp(&x, p.value());
        ctx.check(close(v, expected, 1e-9), || format!("nonnegative #{trial}: {v} != l_p {expected}"));
    }
    for p in TEST_EXPONENTS.clone() {
        for d in 2..=5 {
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        let mut x = vec![0.0; d];
                        x[i] = 1.0;
                        x[j] = -1.0;
                        let v = pbody_minkowski(&x, &p)?.value;
                        ctx.check(v <= 1.0 + 1e-12, || format!("e_{i} - e_{j} (d={d}, p={p}) has value {v}"));
                    }
                }
            }
        }
    }
    let unit = |ctx: &mut Ctx, d: usize, p: &Exponent| -> Result<Vec<f64>> {
        loop {
            let x = random_vector(&mut ctx.rng, d);
            let v = pbody_minkowski(&x, p)?.value;
            if v > 1e-6 {
                return Ok(x.iter().map(|c| c / v).collect());
            }
        }
    };
    for trial in 0..10_000 {
        let d = ctx.rng.gen_range(1..=5);
        let p = ctx.pick_p();
        let (x, y) = (unit(ctx, d, &p)?, unit(ctx, d, &p)?);
        let a: f64 = ctx.rng.gen_range(0.0..1.0);
        let b = (1.0 - a.powf(p.value())).max(0.0).powf(1.0 / p.value()) * ctx.rng.gen_range(0.0..=1.0);
        let (sa, sb) = (
            if ctx.rng.gen_bool(0.5) { a } else { -a },
            if ctx.rng.gen_bool(0.5) { b } else { -b },
        );
        let z: Vec<f64> = x.iter().zip(&y).map(|(u, v)| sa * u + sb * v).collect();
        let v = pbody_minkowski(&z, &p)?.value;
        ctx.check(v <= 1.0 + 1e-9, || format!("p-convexity #{trial}: value {v} at {z:?}"));
    }
    for trial in 0..10_000 {
        let d = ctx.rng.gen_range(1..=5);
        let p = ctx.pick_p();
        let x = unit(ctx, d, &p)?;
        let s: Vec<f64> = (0..d).map(|_| ctx.rng.gen_range(0.0..=1.0)).collect();
        let z: Vec<f64> = x.iter().zip(&s).map(|(u, t)| u * t).collect();
        let v = pbody_minkowski(&z, &p)?.value;
        ctx.check(v <= 1.0 + 1e-9, || format!("shrinking #{trial}: value {v}"));
        let raw = random_vector(&mut ctx.rng, d);
        let v = pbody_minkowski(&raw, &p)?.value;
        let sup = raw.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let lpn = lp(&raw, p.value());
        ctx.check(sup <= v * (1.0 + 1e-9) && v <= lpn * (1.0 + 1e-9), || {
            format!("sandwich #{trial}: {sup} <= {v} <= {lpn} fails")
        });
    }
    ctx.row("pbody/samples".into(), "d<=5".into(), 0.0, 0.0, true, t0);
    Ok(())
}

fn envelopes(ctx: &mut Ctx) -> Result<()> {
    for p in [Exponent::from_ratio(1, 2), Exponent::from_ratio(1, 3)] {
        for n in [4i64, 16, 64] {
            let t0 = Instant::now();
            let pts: Vec<Rational> = (0..=n).map(|k| Rational::new(k.into(), n.into())).collect();
            let space = QSpace::line(&pts, 0, &p)?;
            let env = q_envelope(&space, &Exponent::one())?;
            let last = space.index_of("1")?;
            // n^(1 - 1/p), exactly
            let inv = p.recip().exact().map(|r| *r.numer()).expect("integer 1/p");
            let expected = Rational::new(1.into(), num_traits::pow(num_bigint::BigInt::from(n), (inv - 1) as usize));
            let got = env.space.dist_exact(env.classes[0], env.classes[last]).cloned();
            ctx.check(got.as_ref() == Some(&expected), || {
                format!("grid n={n}, p={p}: envelope distance {got:?} != {expected}")
            });
            let v = number::to_f64(&expected);
            ctx.row(format!("grid/n{n}"), format!("n={n};p={p}"), v, v, true, t0);
        }
    }
    let one = Exponent::one();
    for s in 0..100 {
        let t0 = Instant::now();
        let n = ctx.rng.gen_range(2..=6);
        let p = ctx.pick_p();
        let space = random_pspace(&mut ctx.rng, n, &p);
        let mu = random_molecule(&mut ctx.rng, n);
        let id = format!("env{s:03}");
        let cert = ctx.exact(&space, &mu, &p, &id)?;
        let lip = lip_lower_bound(&space, &mu, &p)?;
        ctx.check(lip <= cert.upper * (1.0 + 1e-12), || format!("{id}: lower bound {lip} > exact {}", cert.upper));
        let env = q_envelope(&space, &one)?;
        let direct = f1_norm(&env.space, &env.push_forward(&mu))?.value;
        let via = envelope_norm(&space, &mu, &one, ctx.opts.budget)?;
        ctx.check(close(direct, via, 1e-9), || format!("{id}: envelope norm {via} vs transport {direct}"));
        let bounds = pnorm_bounds(&space, &mu, &p)?;
        ctx.check(
            bounds.lower <= cert.upper * (1.0 + 1e-12) && cert.upper <= bounds.upper * (1.0 + 1e-12),
            || format!("{id}: exact {} outside bounds [{}, {}]", cert.upper, bounds.lower, bounds.upper),
        );
        ctx.row(id, params(n, &p), lip, cert.upper, cert.exact, t0);
    }
    Ok(())
}

fn wasserstein_duality(ctx: &mut Ctx) -> Result<()> {
    for s in 0..100 {
        let t0 = Instant::now();
        let n = ctx.rng.gen_range(2..=12);
        let space = random_metric(&mut ctx.rng, n);
        let mu = random_molecule(&mut ctx.rng, n);
        let id = format!("w1/{s:03}");
        let cert = f1_norm(&space, &mu)?;
        let primal = cert.plan.exact_value(&space);
        let dual = cert.potential.exact_pairing(&mu);
        ctx.check(primal.is_some() && primal == dual, || {
            format!("{id}: primal {primal:?} != dual {dual:?}")
        });
        ctx.check(cert.plan.balances(&mu), || format!("{id}: plan does not balance the molecule"));
        ctx.check(cert.potential.is_lipschitz(&space), || format!("{id}: potential is not 1-Lipschitz"));
        let lipschitz_exact = cert.potential.exact.as_ref().is_some_and(|f| {
            f[0].is_zero()
                && (0..n).all(|x| (0..n).all(|y| (&f[x] - &f[y]).abs() <= *space.dist_exact(x, y).unwrap()))
        });
        ctx.check(lipschitz_exact, || format!("{id}: exact potential fails the Lipschitz check"));
        ctx.row(id, format!("n={n};p=1"), cert.value, cert.value, true, t0);
    }
    Ok(())
}

/// Random ultrametric from a random hierarchy of merges at increasing
/// heights (several clusters may merge at once).
fn random_ultrametric(rng: &mut impl Rng, n: usize) -> QSpace {
    let mut cluster: Vec<usize> = (0..n).collect();
    let mut rows = vec![vec![Rational::zero(); n]; n];
    let mut height = Rational::zero();
    let mut groups = n;
    while groups > 1 {
        height += Rational::new(rng.gen_range(1..=4).into(), 2.into());
        let mut ids: Vec<usize> = cluster.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(rng);
        let take = if ids.len() > 2 && rng.gen_bool(0.3) { 3 } else { 2 };
        let merged: Vec<usize> = ids[..take].to_vec();
        let target = merged[0];
        for i in 0..n {
            for j in 0..n {
                if i != j && cluster[i] != cluster[j] && merged.contains(&cluster[i]) && merged.contains(&cluster[j]) {
                    rows[i][j] = height.clone();
                }
            }
        }
        for c in cluster.iter_mut() {
            if merged.contains(c) {
                *c = target;
            }
        }
        groups -= take - 1;
    }
    QSpace::from_exact(labels(n), rows, Exponent::one()).expect("hierarchy distances are positive")
}

fn ultrametric(ctx: &mut Ctx) -> Result<()> {
    for s in 0..25 {
        let t0 = Instant::now();
        let n = ctx.rng.gen_range(2..=4);
        let p = ctx.pick_p();
        let space = random_ultrametric(&mut ctx.rng, n);
        let emb = ultrametric_dendrogram(&space, &p)?;
        let (_, tree) = emb.tree_distances();
        let tree = tree.expect("rational ultrametric gives rational tree");
        let leaves_match = (0..n).all(|i| (0..n).all(|j| Some(&tree[i][j]) == space.dist_exact(i, j)));
        let id = format!("ultra{s:02}");
        ctx.check(leaves_match, || format!("{id}: dendrogram leaf metric differs from the input"));
        let tree_space = emb.tree_space()?;
        let snowflaked = space.snowflake(&p.recip())?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for m in 0..100 {
            let mu = random_molecule(&mut ctx.rng, n);
            let coords = tree_coordinates(&emb, &mu)?;
            let mid = format!("{id}/mu{m:02}");
            let value = ctx.exact(&snowflaked, &mu, &p, &mid)?.upper;
            ctx.check(
                coords.lower <= value * (1.0 + 1e-9) && value <= coords.upper * (1.0 + 1e-9),
                || format!("{mid}: norm {value} outside [{}, {}]", coords.lower, coords.upper),
            );
            if m < 8 {
                let in_tree = ctx.exact(&tree_space, &mu, &p, &mid)?.upper;
                ctx.check(close(in_tree, coords.norm, 1e-9), || {
                    format!("{mid}: tree coordinates {} vs solver on the augmented space {in_tree}", coords.norm)
                });
            }
            lo = lo.min(value / coords.norm.max(f64::MIN_POSITIVE));
            hi = hi.max(value / coords.norm.max(f64::MIN_POSITIVE));
        }
        ctx.row(id, format!("n={n};p={p};lip={}", number::format_sig15(emb.retraction_lip)), lo, hi, true, t0);
    }
    Ok(())
}

fn subset_monotonicity(ctx: &mut Ctx) -> Result<()> {
    for s in 0..100 {
        let t0 = Instant::now();
        let n = ctx.rng.gen_range(3..=7);
        let p = ctx.pick_p();
        let kind = s % 3;
        let space = match kind {
            0 => random_pspace(&mut ctx.rng, n, &p),
            1 => QSpace::zero_one(n, p.clone()),
            _ => {
                let (positions, base) = random_line(&mut ctx.rng, n);
                LineSubset::new(&positions, base, p.clone())?.space()?
            }
        };
        let mut others: Vec<usize> = (1..n).collect();
        others.shuffle(&mut ctx.rng);
        let keep = ctx.rng.gen_range(1..n);
        let mut subset: Vec<usize> = std::iter::once(0).chain(others[..keep].iter().copied()).collect();
        subset.sort_unstable();
        let mu = random_molecule_on(&mut ctx.rng, &subset);
        let id = format!("subset{s:03}/{}", ["random", "zeroone", "line"][kind]);
        let cmp = subset_norm_compare(&space, &subset, &mu, &p, ctx.opts.budget)?;
        let (small, big) = (cmp.in_subset.upper, cmp.in_superspace.upper);
        ctx.check(cmp.exact, || format!("{id}: comparison was not exact"));
        ctx.check(big <= small * (1.0 + 1e-12), || format!("{id}: superspace norm {big} > subset norm {small}"));
        if kind != 0 {
            ctx.check(close(big, small, 1e-9), || format!("{id}: expected equal norms, got {small} and {big}"));
        }
        if ctx.opts.corrupt {
            for (sp, cert) in [(space.subspace(&subset)?, cmp.in_subset), (space.clone(), cmp.in_superspace)] {
                let bad = corrupted(cert)?;
                let ok = bad.verify(&sp, &p)?;
                ctx.check(ok, || format!("{id}: certificate failed re-verification"));
            }
        }
        ctx.row(id, params(n, &p), big, small, true, t0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in TEST_EXPONENTS.iter() {
            for n in 2..=6 {
                let s = random_pspace(&mut rng, n, p);
                assert!(s.is_pmetric(p), "n={n} p={p}");
                assert!(s.is_exact() || p.recip().exact().is_some());
            }
        }
        for n in 2..=5 {
            let u = random_ultrametric(&mut rng, n);
            assert!(u.check_ultrametric().is_ok());
            assert!(random_metric(&mut rng, n).is_pmetric(&Exponent::one()));
        }
    }

    #[test]
    fn filter_selects_by_name_or_number() {
        let opts = Options {
            filter: Some("counterexample".into()),
            ..Options::default()
        };
        let report = reproduce(&opts);
        assert_eq!(report.criteria.len(), 1);
        assert_eq!(report.criteria[0].id, 4);
        assert!(report.passed());
        assert!(selected(&Some("3".into()), 3, "zeroone"));
        assert!(!selected(&Some("3".into()), 4, "counterexample"));
    }

    #[test]
    fn corruption_is_detected() {
        let opts = Options {
            filter: Some("counterexample".into()),
            corrupt: true,
            ..Options::default()
        };
        let report = reproduce(&opts);
        assert!(!report.passed());
    }

    #[test]
    fn csv_is_deterministic() {
        let opts = Options {
            filter: Some("7".into()),
            ..Options::default()
        };
        let a = reproduce(&opts).to_csv();
        let b = reproduce(&opts).to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("criterion,instance,params,lower,upper,exact\n"));
    }
}
