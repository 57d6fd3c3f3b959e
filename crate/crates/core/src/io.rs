//! JSON file formats for spaces, molecules, decompositions and the
//! certificates produced by the solvers.
//!
//! Numbers may be written as JSON numbers or as strings; strings such as
//! `"1/3"` or `"0.125"` are read as exact rationals. A space file marked
//! `"exact": false` is read and written as `f64` values in shortest
//! round-trip form, so saving and reloading never changes a bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::envelope::EnvelopeResult;
use crate::error::{Error, Result};
use crate::freenorm::{LowerWitness, NormCertificate};
use crate::molecule::{Decomposition, Molecule};
use crate::number::{self, Exponent, Rational};
use crate::space::QSpace;
use crate::wasserstein::W1Certificate;

/// A number given either as a JSON number or as a string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NumText {
    Text(String),
    Number(serde_json::Number),
}

impl NumText {
    fn text(&self) -> String {
        match self {
            NumText::Text(s) => s.clone(),
            NumText::Number(n) => n.to_string(),
        }
    }

    pub fn rational(&self) -> Result<Rational> {
        number::parse_rational(&self.text())
    }

    pub fn float(&self) -> Result<f64> {
        let text = self.text();
        match text.trim().parse::<f64>() {
            Ok(v) => Ok(v),
            Err(_) => self.rational().map(|r| number::to_f64(&r)),
        }
    }

    pub fn exponent(&self) -> Result<Exponent> {
        self.text().parse()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    p: Option<NumText>,
    base: Option<String>,
    points: Vec<String>,
    dist: Vec<Vec<NumText>>,
    #[serde(default = "default_true")]
    exact: bool,
}

fn default_true() -> bool {
    true
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Parses a space file. The point named by `"base"` (default: the first)
/// becomes index 0; the remaining points keep their order.
pub fn parse_space(text: &str) -> Result<QSpace> {
    let file: SpaceFile = parse_json(text)?;
    let n = file.points.len();
    if n == 0 {
        return Err(Error::EmptySpace);
    }
    if file.dist.len() != n {
        return Err(Error::Shape { expected: n, found: file.dist.len() });
    }
    if let Some(row) = file.dist.iter().find(|row| row.len() != n) {
        return Err(Error::Shape { expected: n, found: row.len() });
    }
    let base = match &file.base {
        Some(label) => file
            .points
            .iter()
            .position(|p| p == label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?,
        None => 0,
    };
    let order: Vec<usize> = std::iter::once(base).chain((0..n).filter(|&i| i != base)).collect();
    let labels: Vec<String> = order.iter().map(|&i| file.points[i].clone()).collect();
    let p = match &file.p {
        Some(p) => p.exponent()?,
        None => Exponent::one(),
    };
    if file.exact {
        let mut rows = Vec::with_capacity(n);
        for &i in &order {
            rows.push(order.iter().map(|&j| file.dist[i][j].rational()).collect::<Result<Vec<_>>>()?);
        }
        QSpace::from_exact(labels, rows, p)
    } else {
        let mut rows = Vec::with_capacity(n);
        for &i in &order {
            rows.push(order.iter().map(|&j| file.dist[i][j].float()).collect::<Result<Vec<_>>>()?);
        }
        QSpace::from_f64(labels, rows, p)
    }
}

pub fn load_space(path: impl AsRef<Path>) -> Result<QSpace> {
    parse_space(&read(path.as_ref())?)
}

fn quote(text: &str) -> String {
    serde_json::to_string(text).expect("strings always serialize")
}

/// Canonical space file, one matrix row per line.
pub fn space_to_json(space: &QSpace) -> String {
    let n = space.len();
    let cell = |i: usize, j: usize| match space.dist_exact(i, j) {
        Some(d) => quote(&number::format_rational(d)),
        None => quote(&number::format_float(space.dist(i, j))),
    };
    let points: Vec<String> = space.labels().iter().map(|l| quote(l)).collect();
    let rows: Vec<String> = (0..n)
        .map(|i| format!("    [{}]", (0..n).map(|j| cell(i, j)).collect::<Vec<_>>().join(", ")))
        .collect();
    let mut out = String::from("{\n");
    out += &format!("  \"p\": {},\n", quote(&space.p().to_string()));
    out += &format!("  \"base\": {},\n", quote(space.label(0)));
    if !space.is_exact() {
        out += "  \"exact\": false,\n";
    }
    out += &format!("  \"points\": [{}],\n", points.join(", "));
    out += &format!("  \"dist\": [\n{}\n  ]\n}}\n", rows.join(",\n"));
    out
}

pub fn save_space(space: &QSpace, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &space_to_json(space))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoleculeFile {
    coeffs: Option<BTreeMap<String, NumText>>,
    deltas: Option<BTreeMap<String, NumText>>,
}

fn molecule_from_file(file: MoleculeFile, space: &QSpace) -> Result<Molecule> {
    let entries = |map: &BTreeMap<String, NumText>| -> Result<Vec<(usize, Rational)>> {
        map.iter()
            .map(|(label, v)| Ok((space.index_of(label)?, v.rational()?)))
            .collect()
    };
    match (&file.coeffs, &file.deltas) {
        (Some(c), None) => Molecule::from_coeffs(entries(c)?),
        (None, Some(d)) => {
            let entries = entries(d)?;
            Ok(Molecule::from_deltas(entries.iter().map(|(i, a)| (a, *i)), 0))
        }
        _ => Err(Error::Parse("molecule needs exactly one of \"coeffs\" or \"deltas\"".into())),
    }
}

/// Parses `{"coeffs": {label: value}}` (zero-sum coefficients) or
/// `{"deltas": {label: value}}` (the molecule `sum a_x (chi_x - chi_base)`).
pub fn parse_molecule(text: &str, space: &QSpace) -> Result<Molecule> {
    molecule_from_file(parse_json(text)?, space)
}

pub fn load_molecule(path: impl AsRef<Path>, space: &QSpace) -> Result<Molecule> {
    parse_molecule(&read(path.as_ref())?, space)
}

pub fn molecule_value(space: &QSpace, mu: &Molecule) -> Value {
    let coeffs: serde_json::Map<String, Value> = mu
        .iter()
        .map(|(i, c)| (space.label(i).to_string(), Value::String(number::format_rational(c))))
        .collect();
    json!({ "coeffs": coeffs })
}

#[derive(Debug, Deserialize)]
struct TermFile {
    a: NumText,
    x: String,
    y: String,
}

#[derive(Debug, Deserialize)]
struct DecompositionFile {
    target: Value,
    terms: Vec<TermFile>,
}

fn decomposition_from_value(value: Value, space: &QSpace) -> Result<Decomposition> {
    let file: DecompositionFile = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    let target: MoleculeFile = serde_json::from_value(file.target).map_err(|e| Error::Parse(e.to_string()))?;
    let target = molecule_from_file(target, space)?;
    let terms = file
        .terms
        .iter()
        .map(|t| Ok((t.a.rational()?, space.index_of(&t.x)?, space.index_of(&t.y)?)))
        .collect::<Result<Vec<_>>>()?;
    Decomposition::new(target, terms)
}

/// Parses a decomposition `{"target": <molecule>, "terms": [{"a", "x", "y"}]}`,
/// or a certificate file whose `"decomposition"` field holds one.
pub fn parse_decomposition(text: &str, space: &QSpace) -> Result<Decomposition> {
    let mut value: Value = parse_json(text)?;
    if let Some(inner) = value.get_mut("decomposition") {
        let inner = inner.take();
        return decomposition_from_value(inner, space);
    }
    decomposition_from_value(value, space)
}

pub fn load_decomposition(path: impl AsRef<Path>, space: &QSpace) -> Result<Decomposition> {
    parse_decomposition(&read(path.as_ref())?, space)
}

pub fn decomposition_value(space: &QSpace, dec: &Decomposition) -> Value {
    let terms: Vec<Value> = dec
        .terms()
        .iter()
        .map(|(c, atom)| {
            json!({
                "a": number::format_rational(c),
                "x": space.label(atom.x()),
                "y": space.label(atom.y()),
            })
        })
        .collect();
    json!({ "target": molecule_value(space, dec.target()), "terms": terms })
}

fn float(value: f64) -> Value {
    Value::String(number::format_sig15(value))
}

pub fn certificate_value(space: &QSpace, cert: &NormCertificate, p: &Exponent) -> Value {
    let lower_witness = match &cert.lower_witness {
        LowerWitness::Wasserstein { value } => json!({ "kind": "wasserstein-envelope", "value": float(*value) }),
        LowerWitness::PBody { value, scale } => {
            json!({ "kind": "pbody", "value": float(*value), "scale": float(*scale) })
        }
        LowerWitness::Exact => json!({ "kind": "exact" }),
        LowerWitness::Trivial => json!({ "kind": "zero-molecule" }),
    };
    json!({
        "p": p.to_string(),
        "exact": cert.exact,
        "lower": float(cert.lower),
        "upper": float(cert.upper),
        "lower_witness": lower_witness,
        "decomposition": decomposition_value(space, &cert.upper_witness),
    })
}

pub fn w1_value(space: &QSpace, cert: &W1Certificate) -> Value {
    let plan: Vec<Value> = cert
        .plan
        .flows
        .iter()
        .map(|(a, b, m)| json!({ "from": space.label(*a), "to": space.label(*b), "mass": number::format_rational(m) }))
        .collect();
    let potential: serde_json::Map<String, Value> = (0..space.len())
        .map(|i| {
            let v = match &cert.potential.exact {
                Some(f) => Value::String(number::format_rational(&f[i])),
                None => float(cert.potential.f[i]),
            };
            (space.label(i).to_string(), v)
        })
        .collect();
    json!({
        "value": float(cert.value),
        "exact_value": cert.exact_value.as_ref().map(number::format_rational),
        "plan": plan,
        "potential": potential,
    })
}

/// The envelope space plus the class of every original point.
pub fn envelope_value(original: &QSpace, env: &EnvelopeResult) -> Result<Value> {
    let space: Value = parse_json(&space_to_json(&env.space))?;
    let classes: serde_json::Map<String, Value> = (0..original.len())
        .map(|i| {
            (
                original.label(i).to_string(),
                Value::String(env.space.label(env.classes[i]).to_string()),
            )
        })
        .collect();
    Ok(json!({ "space": space, "classes": classes }))
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{ "p": "1/2", "base": "o", "points": ["a","o","b"],
        "dist": [["0","1","4"],["1","0","1"],["4","1","0"]] }"#;

    #[test]
    fn base_moves_to_front() {
        let s = parse_space(TRIANGLE).unwrap();
        assert_eq!(s.labels(), &["o", "a", "b"]);
        assert_eq!(s.dist(1, 2), 4.0);
        assert_eq!(s.p().to_string(), "1/2");
    }

    #[test]
    fn exact_round_trip() {
        let s = parse_space(TRIANGLE).unwrap();
        let again = parse_space(&space_to_json(&s)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn float_round_trip_is_bitwise() {
        let labels = vec!["0".to_string(), "x".to_string()];
        let d = 2f64.powf(-1.0 / 3.0);
        let s = QSpace::from_f64(labels, vec![vec![0.0, d], vec![d, 0.0]], Exponent::from_ratio(1, 3)).unwrap();
        let again = parse_space(&space_to_json(&s)).unwrap();
        assert_eq!(again.dist(0, 1).to_bits(), d.to_bits());
        assert!(!again.is_exact());
    }

    #[test]
    fn numbers_and_strings_mix() {
        let text = r#"{ "p": 0.5, "points": ["o","a"], "dist": [[0, 0.25], ["1/4", 0]] }"#;
        let s = parse_space(text).unwrap();
        assert_eq!(s.dist_exact(0, 1), Some(&Rational::new(1.into(), 4.into())));
    }

    #[test]
    fn validation_errors() {
        let asym = r#"{ "points": ["o","a"], "dist": [["0","1"],["2","0"]] }"#;
        assert!(matches!(parse_space(asym), Err(Error::Asymmetric { .. })));
        let dup = r#"{ "points": ["o","o"], "dist": [["0","1"],["1","0"]] }"#;
        assert!(matches!(parse_space(dup), Err(Error::DuplicateLabel(_))));
        let short = r#"{ "points": ["o","a"], "dist": [["0","1"]] }"#;
        assert!(matches!(parse_space(short), Err(Error::Shape { .. })));
        assert!(matches!(parse_space("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn molecules_and_decompositions() {
        let s = parse_space(TRIANGLE).unwrap();
        let mu = parse_molecule(r#"{"coeffs": {"a": "1", "b": "-1"}}"#, &s).unwrap();
        assert_eq!(mu, Molecule::dipole(1, 2));
        let delta = parse_molecule(r#"{"deltas": {"a": 1, "b": -1}}"#, &s).unwrap();
        assert_eq!(mu, delta);
        assert!(matches!(
            parse_molecule(r#"{"coeffs": {"a": "1"}}"#, &s),
            Err(Error::NotZeroSum(_))
        ));
        let dec = Decomposition::new(mu.clone(), [(Rational::from_integer(4.into()), 1, 2)]).unwrap();
        let text = to_pretty(&decomposition_value(&s, &dec));
        let back = parse_decomposition(&text, &s).unwrap();
        assert_eq!(back, dec);
        assert!(back.residual(&s).unwrap().is_zero());
    }
}
