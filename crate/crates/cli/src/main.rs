use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use freep::envelope::{envelope_norm, q_envelope};
use freep::io::{self, load_decomposition, load_molecule, load_space, save_space, space_to_json, to_pretty};
use freep::isometry::{
    counterexample_analytic, counterexample_instance, interval_step_function, line_coordinates, tree_coordinates,
    ultrametric_dendrogram, zeroone_embedding, LineSubset, COUNTEREXAMPLE_MAX_K,
};
use freep::number::{format_rational, format_sig15, Exponent};
use freep::pbody::pbody_minkowski;
use freep::reproduce::{self, Options};
use freep::{f1_norm, norm, pnorm_bounds, Budget, Molecule, QSpace};
use serde_json::{json, Value};

/// Norms, envelopes and embeddings in Lipschitz free p-spaces over finite
/// pointed quasimetric spaces.
#[derive(Debug, Parser)]
#[command(name = "freep", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a space is a p-metric (exit 2 with the violated triples if not).
    Validate {
        space: PathBuf,
        /// Exponent to check; defaults to the space's declared exponent.
        #[arg(long)]
        p: Option<Exponent>,
        /// Relative tolerance of the triangle check.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Largest p for which the space is a p-metric.
    Pexp { space: PathBuf },
    /// Raise every distance to the power alpha.
    Snowflake {
        space: PathBuf,
        #[arg(long)]
        alpha: Exponent,
        #[arg(short = 'o', long = "out")]
        o: Option<PathBuf>,
        /// Lower the declared exponent to the largest one the result satisfies.
        #[arg(long)]
        clamp: bool,
    },
    /// Largest q-metric below the space, with its class map.
    Envelope {
        space: PathBuf,
        #[arg(long)]
        q: Exponent,
        /// Write the envelope space file here; the class map goes to stdout.
        #[arg(short = 'o', long = "out")]
        o: Option<PathBuf>,
    },
    /// Norm of a molecule in the free q-space of the q-envelope.
    Envnorm {
        space: PathBuf,
        molecule: PathBuf,
        #[arg(long)]
        q: Exponent,
        #[command(flatten)]
        budget: BudgetArg,
    },
    /// Transport cost of a molecule on a metric space, with plan and potential.
    Wasserstein {
        space: PathBuf,
        molecule: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Free p-norm of a molecule with a certificate.
    Norm {
        space: PathBuf,
        molecule: PathBuf,
        /// Defaults to the space's declared exponent.
        #[arg(long)]
        p: Option<Exponent>,
        #[arg(long, value_enum, default_value_t = Method::Exact)]
        method: Method,
        #[command(flatten)]
        budget: BudgetArg,
        #[arg(long)]
        json: bool,
    },
    /// Recompute the residual and cost of a decomposition or certificate file.
    CheckCert {
        space: PathBuf,
        cert: PathBuf,
        #[arg(long)]
        p: Option<Exponent>,
    },
    /// Minkowski functional of the p-body of c_0.
    Pbody {
        #[arg(long)]
        p: Exponent,
        /// Comma-separated coordinates, e.g. "1,-1,0.5".
        #[arg(long, allow_hyphen_values = true)]
        vec: String,
        /// Also print the optimal lambda table.
        #[arg(long)]
        witness: bool,
    },
    /// Coordinates of a molecule under one of the explicit isometries.
    Embed {
        space: PathBuf,
        molecule: PathBuf,
        #[arg(long)]
        p: Option<Exponent>,
        #[arg(long, value_enum)]
        kind: EmbedKind,
        #[arg(long)]
        json: bool,
    },
    /// CSV of k against the subset counterexample ratio.
    Counterexample {
        #[arg(long)]
        p: Exponent,
        #[arg(long)]
        q: Exponent,
        /// One or more k (comma-separated).
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<u64>,
        /// Add certified brackets from the solver where the instance fits.
        #[arg(long)]
        exact_check: bool,
        #[command(flatten)]
        budget: BudgetArg,
    },
    /// Run the acceptance suite and write report.csv and report.md.
    Reproduce {
        outdir: PathBuf,
        /// Criterion numbers or name fragments, comma-separated.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = reproduce::DEFAULT_SEED)]
        seed: u64,
        /// Perturb every exact certificate before verification.
        #[arg(long)]
        corrupt: bool,
        #[command(flatten)]
        budget: BudgetArg,
    },
}

#[derive(Debug, clap::Args)]
struct BudgetArg {
    /// Largest number of points solved by exact enumeration.
    #[arg(long = "budget", env = "FREEP_BUDGET")]
    max_points: Option<usize>,
}

impl BudgetArg {
    fn get(&self) -> Budget {
        self.max_points.map(Budget::new).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    Bounds,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbedKind {
    Line,
    Interval,
    Zeroone,
    Ultrametric,
}

/// A failed run that is reported without being an error.
struct Rejected(String);

type Outcome = anyhow::Result<Result<String, Rejected>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Ok(out)) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Ok(Err(Rejected(out))) => {
            print!("{out}");
            ExitCode::from(1)
        }
        Err(err) => {
            // library errors already embed their source in the message
            let mut msg = err.to_string();
            for cause in err.chain().skip(1) {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    msg = format!("{msg}: {text}");
                }
            }
            eprintln!("error: {msg}");
            let validation = err.chain().any(|cause| match cause.downcast_ref::<freep::Error>() {
                Some(e) => e.is_validation(),
                None => cause.downcast_ref::<InvalidInput>().is_some(),
            });
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

/// Input problems found by the CLI itself rather than the library.
#[derive(Debug)]
struct InvalidInput(String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(InvalidInput(msg.into()))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate { space, p, tol } => validate(&space, p, tol),
        Command::Pexp { space } => {
            let space = load_space(&space)?;
            Ok(Ok(format!("{}\n", format_sig15(space.max_p_exponent()))))
        }
        Command::Snowflake { space, alpha, o, clamp } => {
            let mut out = load_space(&space)?.snowflake(&alpha)?;
            if clamp {
                let pmax = Exponent::from_f64(out.max_p_exponent());
                let p = out.p().min(&pmax);
                out = out.with_exponent(p);
            }
            emit_space(&out, o.as_deref())
        }
        Command::Envelope { space, q, o } => {
            let space = load_space(&space)?;
            let env = q_envelope(&space, &q)?;
            let value = io::envelope_value(&space, &env)?;
            match o {
                Some(path) => {
                    save_space(&env.space, &path)?;
                    Ok(Ok(to_pretty(&value["classes"])))
                }
                None => Ok(Ok(to_pretty(&value))),
            }
        }
        Command::Envnorm { space, molecule, q, budget } => {
            let space = load_space(&space)?;
            let mu = load_molecule(&molecule, &space)?;
            let value = envelope_norm(&space, &mu, &q, budget.get())?;
            Ok(Ok(format!("{}\n", format_sig15(value))))
        }
        Command::Wasserstein { space, molecule, json } => wasserstein(&space, &molecule, json),
        Command::Norm { space, molecule, p, method, budget, json } => {
            free_norm(&space, &molecule, p, method, budget.get(), json)
        }
        Command::CheckCert { space, cert, p } => check_cert(&space, &cert, p),
        Command::Pbody { p, vec, witness } => pbody(&p, &vec, witness),
        Command::Embed { space, molecule, p, kind, json } => embed(&space, &molecule, p, kind, json),
        Command::Counterexample { p, q, k, exact_check, budget } => {
            counterexample(&p, &q, &k, exact_check, budget.get())
        }
        Command::Reproduce { outdir, filter, seed, corrupt, budget } => {
            let opts = Options { seed, filter, corrupt, budget: budget.get() };
            reproduce_all(&outdir, &opts)
        }
    }
}

fn emit_space(space: &QSpace, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => {
            save_space(space, path)?;
            Ok(Ok(String::new()))
        }
        None => Ok(Ok(space_to_json(space))),
    }
}

fn exponent_or_declared(space: &QSpace, p: Option<Exponent>) -> Exponent {
    p.unwrap_or_else(|| space.p().clone())
}

fn load_pair(space: &Path, molecule: &Path) -> anyhow::Result<(QSpace, Molecule)> {
    let space = load_space(space)?;
    let mu = load_molecule(molecule, &space)?;
    Ok((space, mu))
}

fn validate(path: &Path, p: Option<Exponent>, tol: f64) -> Outcome {
    let space = load_space(path)?;
    let p = exponent_or_declared(&space, p);
    p.check_unit()?;
    let violations = space.validate_pmetric(&p, tol);
    if violations.is_empty() {
        return Ok(Ok(format!("ok: {} points form a {p}-metric space\n", space.len())));
    }
    let mut msg = format!("not a {p}-metric: {} violated triples\n", violations.len());
    for v in violations.iter().take(20) {
        let (i, j, k) = v.triple;
        let _ = writeln!(
            msg,
            "  d({a},{c})^p > d({a},{b})^p + d({b},{c})^p by {}",
            format_sig15(v.deficit),
            a = space.label(i),
            b = space.label(j),
            c = space.label(k)
        );
    }
    Err(invalid(msg.trim_end().to_string()))
}

fn wasserstein(space: &Path, molecule: &Path, json: bool) -> Outcome {
    let (space, mu) = load_pair(space, molecule)?;
    let cert = f1_norm(&space, &mu)?;
    if json {
        return Ok(Ok(to_pretty(&io::w1_value(&space, &cert))));
    }
    let mut out = String::new();
    match &cert.exact_value {
        Some(v) => writeln!(out, "value = {} ({})", format_sig15(cert.value), format_rational(v))?,
        None => writeln!(out, "value = {}", format_sig15(cert.value))?,
    }
    writeln!(out, "plan:")?;
    for (a, b, m) in &cert.plan.flows {
        writeln!(out, "  {} -> {}: {}", space.label(*a), space.label(*b), format_rational(m))?;
    }
    writeln!(out, "potential:")?;
    for i in 0..space.len() {
        let f = match &cert.potential.exact {
            Some(f) => format_rational(&f[i]),
            None => format_sig15(cert.potential.f[i]),
        };
        writeln!(out, "  {}: {}", space.label(i), f)?;
    }
    Ok(Ok(out))
}

fn free_norm(space: &Path, molecule: &Path, p: Option<Exponent>, method: Method, budget: Budget, json: bool) -> Outcome {
    let (space, mu) = load_pair(space, molecule)?;
    let p = exponent_or_declared(&space, p);
    let cert = match method {
        Method::Exact => norm(&space, &mu, &p, budget)?,
        Method::Bounds => pnorm_bounds(&space, &mu, &p)?,
    };
    if json {
        return Ok(Ok(to_pretty(&io::certificate_value(&space, &cert, &p))));
    }
    if cert.exact {
        Ok(Ok(format!("exact = {}\n", format_sig15(cert.upper))))
    } else {
        Ok(Ok(format!(
            "lower = {}\nupper = {}\n",
            format_sig15(cert.lower),
            format_sig15(cert.upper)
        )))
    }
}

fn check_cert(space: &Path, cert: &Path, p: Option<Exponent>) -> Outcome {
    let space = load_space(space)?;
    let p = exponent_or_declared(&space, p);
    let dec = load_decomposition(cert, &space)?;
    let residual = dec.residual_norm(&space)?;
    let out = format!("residual = {}\ncost = {}\n", format_sig15(residual), format_sig15(dec.cost(&p)));
    if residual == 0.0 {
        Ok(Ok(out))
    } else {
        Err(invalid(format!("{}decomposition does not reproduce its target", out)))
    }
}

fn parse_vec(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let s = s.trim();
            let v = match s.parse::<f64>() {
                Ok(v) => v,
                Err(_) => freep::number::to_f64(&freep::number::parse_rational(s)?),
            };
            if v.is_finite() {
                Ok(v)
            } else {
                Err(invalid(format!("coordinate {s:?} is not finite")))
            }
        })
        .collect()
}

fn pbody(p: &Exponent, vec: &str, witness: bool) -> Outcome {
    let x = parse_vec(vec)?;
    let v = pbody_minkowski(&x, p)?;
    let mut out = format!("value = {}\n", format_sig15(v.value));
    if !v.exact {
        out.push_str("(heuristic: value is an upper estimate)\n");
    }
    if witness {
        out.push_str("i,j,lambda\n");
        for (i, j, lambda) in &v.witness {
            writeln!(out, "{i},{j},{}", format_sig15(*lambda))?;
        }
    }
    Ok(Ok(out))
}

fn embed(space: &Path, molecule: &Path, p: Option<Exponent>, kind: EmbedKind, json: bool) -> Outcome {
    let (space, mu) = load_pair(space, molecule)?;
    let p = exponent_or_declared(&space, p);
    let space = space.with_exponent(p.clone());
    let value: Value = match kind {
        EmbedKind::Line => {
            let line = LineSubset::from_space(&space)?;
            let coords = line_coordinates(&line, &mu)?;
            let norm = freep::isometry::lp_norm(coords.iter().map(|g| g.value), &p);
            let rows: Vec<Value> = coords
                .iter()
                .map(|g| {
                    json!({
                        "point": space.label(g.point),
                        "interval": [format_rational(&g.lo), format_rational(&g.hi)],
                        "value": format_sig15(g.value),
                    })
                })
                .collect();
            json!({ "kind": "line", "p": p.to_string(), "coordinates": rows, "norm": format_sig15(norm) })
        }
        EmbedKind::Interval => {
            let line = LineSubset::from_space(&space)?;
            let step = interval_step_function(&line, &mu)?;
            let pieces: Vec<Value> = step
                .pieces
                .iter()
                .map(|(a, b, h)| json!([format_rational(a), format_rational(b), format_rational(h)]))
                .collect();
            json!({ "kind": "interval", "p": p.to_string(), "pieces": pieces, "norm": format_sig15(step.lp_norm(&p)) })
        }
        EmbedKind::Zeroone => {
            let e = zeroone_embedding(&space, &mu)?;
            json!({
                "kind": "zeroone",
                "p": p.to_string(),
                "coefficients": e.coeffs.iter().map(|c| format_sig15(*c)).collect::<Vec<_>>(),
                "scale": format_sig15(e.scale),
                "lp": format_sig15(e.lp),
                "lower": format_sig15(e.lower),
                "upper": format_sig15(e.upper),
            })
        }
        EmbedKind::Ultrametric => {
            let emb = ultrametric_dendrogram(&space, &p)?;
            let c = tree_coordinates(&emb, &mu)?;
            let coords: Vec<Value> = c
                .coords
                .iter()
                .map(|(node, v)| json!({ "node": emb.labels[*node], "value": format_sig15(*v) }))
                .collect();
            json!({
                "kind": "ultrametric",
                "p": p.to_string(),
                "coordinates": coords,
                "norm": format_sig15(c.norm),
                "retraction_lip": format_sig15(emb.retraction_lip),
                "lower": format_sig15(c.lower),
                "upper": format_sig15(c.upper),
            })
        }
    };
    if json {
        return Ok(Ok(to_pretty(&value)));
    }
    Ok(Ok(render_embedding(&value)))
}

fn render_embedding(value: &Value) -> String {
    let mut out = String::new();
    let Value::Object(map) = value else { return out };
    for (key, v) in map {
        match v {
            Value::Array(items) => {
                let _ = writeln!(out, "{key}:");
                for item in items {
                    let _ = writeln!(out, "  {}", plain(item));
                }
            }
            other => {
                let _ = writeln!(out, "{key} = {}", plain(other));
            }
        }
    }
    out
}

fn plain(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(plain).collect::<Vec<_>>().join(" "),
        Value::Object(map) => map.iter().map(|(k, v)| format!("{k}={}", plain(v))).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

fn counterexample(p: &Exponent, q: &Exponent, ks: &[u64], exact_check: bool, budget: Budget) -> Outcome {
    let mut out = String::from("k,epsilon,n_norm,m_upper,ratio");
    if exact_check {
        out.push_str(",n_lower,n_upper,m_lower,m_upper_certified,ratio_lower");
    }
    out.push('\n');
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let a = counterexample_analytic(p, q, k)?;
        write!(
            out,
            "{},{},{},{},{}",
            k,
            format_sig15(a.epsilon),
            format_sig15(a.fp_n_norm),
            format_sig15(a.fp_m_upper),
            format_sig15(a.ratio)
        )?;
        if exact_check {
            if k <= COUNTEREXAMPLE_MAX_K {
                let inst = counterexample_instance(p, q, k)?;
                let n = norm(&inst.n_space, &inst.mu, p, budget)?;
                let m = norm(&inst.m_space, &inst.mu, p, budget)?;
                let ratio = if m.upper > 0.0 { n.lower / m.upper } else { 1.0 };
                write!(
                    out,
                    ",{},{},{},{},{}",
                    format_sig15(n.lower),
                    format_sig15(n.upper),
                    format_sig15(m.lower),
                    format_sig15(m.upper),
                    format_sig15(ratio)
                )?;
            } else {
                out.push_str(",,,,,");
            }
        }
        out.push('\n');
    }
    Ok(Ok(out))
}

fn reproduce_all(outdir: &Path, opts: &Options) -> Outcome {
    if let Some(filter) = &opts.filter {
        let known = reproduce::criterion_names();
        let matches = filter.split(',').map(str::trim).any(|f| {
            known.iter().enumerate().any(|(i, name)| f == (i + 1).to_string() || (!f.is_empty() && name.contains(f)))
        });
        if !matches {
            return Err(invalid(format!("filter {filter:?} matches no criterion; known: {}", known.join(", "))));
        }
    }
    let report = reproduce::reproduce(opts);
    fs::create_dir_all(outdir).with_context(|| format!("creating {}", outdir.display()))?;
    let csv = outdir.join("report.csv");
    fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    let md = outdir.join("report.md");
    fs::write(&md, report.to_markdown()).with_context(|| format!("writing {}", md.display()))?;
    let mut out = format!("seed = {:#x}\n", report.seed);
    for c in &report.criteria {
        writeln!(out, "{}", c.summary())?;
    }
    writeln!(out, "wrote {} and {}", csv.display(), md.display())?;
    if report.passed() {
        Ok(Ok(out))
    } else {
        Ok(Err(Rejected(out)))
    }
}
